//! Finite-volume meshes on `(0, L)` and on the axisymmetric cylinder
//! `(0, L) x B'_R`, with exact cell volumes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::unit_sphere_area;

/// Anything carrying cell volumes and an axial coordinate per cell.
pub trait Mesh {
    fn n_cells(&self) -> usize;
    fn cell_volume(&self, k: usize) -> f64;
    /// Axial (`x_1`) coordinate of the centre of cell `k`.
    fn axial_center(&self, k: usize) -> f64;
    /// `|Omega|`.
    fn total_volume(&self) -> f64;

    /// `sum_k field[k] |cell_k|`.
    fn integrate(&self, field: &[f64]) -> Result<f64> {
        if field.len() != self.n_cells() {
            return Err(Error::Shape { expected: self.n_cells(), got: field.len() });
        }
        Ok(field.iter().enumerate().map(|(k, v)| v * self.cell_volume(k)).sum())
    }
}

/// Axial grid on `(0, L)`, uniform (`ratio = 1`) or geometrically refined towards
/// `x = 0` with `widths[i+1] = ratio * widths[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    length: f64,
    ratio: f64,
    interfaces: Vec<f64>,
    centers: Vec<f64>,
    widths: Vec<f64>,
    /// Distances between neighbouring centres, one per interior face.
    spacings: Vec<f64>,
}

impl Grid1D {
    pub fn new(length: f64, n: usize, ratio: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Config(format!("grid length must be positive, got {length}")));
        }
        if n < 2 {
            return Err(Error::Config(format!("grid needs at least 2 cells, got {n}")));
        }
        if !(ratio.is_finite() && ratio >= 1.0) {
            return Err(Error::Config(format!("grading ratio must be >= 1, got {ratio}")));
        }
        let first = if ratio == 1.0 {
            length / n as f64
        } else {
            // L (r - 1) / (r^N - 1), with r^N - 1 = expm1(N ln r)
            length * (ratio - 1.0) / (n as f64 * ratio.ln()).exp_m1()
        };
        let mut widths = Vec::with_capacity(n);
        let mut interfaces = Vec::with_capacity(n + 1);
        interfaces.push(0.0);
        let mut x = 0.0;
        let mut h = first;
        for _ in 0..n - 1 {
            widths.push(h);
            x += h;
            interfaces.push(x);
            h *= ratio;
        }
        let last = length - x;
        if !(last > 0.0) {
            return Err(Error::Config(format!(
                "degenerate grid: last width {last} for L={length}, N={n}, r={ratio}"
            )));
        }
        widths.push(last);
        interfaces.push(length);
        let centers: Vec<f64> = interfaces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let spacings = centers.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Grid1D { length, ratio, interfaces, centers, widths, spacings })
    }

    pub fn uniform(length: f64, n: usize) -> Result<Self> {
        Self::new(length, n, 1.0)
    }

    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn interfaces(&self) -> &[f64] {
        &self.interfaces
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    pub fn h_min(&self) -> f64 {
        self.widths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Cell averages of `profile` by composite Gauss-Legendre (5 points per cell).
    pub fn sample_averages(&self, profile: impl Fn(f64) -> f64) -> Vec<f64> {
        cell_averages(&self.interfaces, profile)
    }
}

impl Mesh for Grid1D {
    fn n_cells(&self) -> usize {
        self.len()
    }

    fn cell_volume(&self, k: usize) -> f64 {
        self.widths[k]
    }

    fn axial_center(&self, k: usize) -> f64 {
        self.centers[k]
    }

    fn total_volume(&self) -> f64 {
        self.length
    }
}

/// Grid parameters after one uniform refinement: every cell is split into two
/// geometrically similar halves.
pub fn refined_parameters(n: usize, ratio: f64) -> (usize, f64) {
    (2 * n, ratio.sqrt())
}

/// Axisymmetric grid: an axial [`Grid1D`] times a uniform radial grid on `(0, R)`
/// with volume weight `sigma_{n-2} rho^{n-2}`.
///
/// Fields are stored radial-row-major: `c[j * nx + i]` for axial cell `i` and
/// radial cell `j`, so each radial row is a contiguous axial line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCyl {
    axial: Grid1D,
    dim: u32,
    radius: f64,
    radial_faces: Vec<f64>,
    radial_centers: Vec<f64>,
    radial_spacings: Vec<f64>,
    /// `sigma_{n-2} int_cell rho^{n-2} drho`.
    radial_volumes: Vec<f64>,
    /// `sigma_{n-2} rho^{n-2}` at every radial face.
    face_areas: Vec<f64>,
}

impl GridCyl {
    pub fn new(
        length: f64,
        radius: f64,
        dim: u32,
        nx: usize,
        nr: usize,
        axial_ratio: f64,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("cylinder needs dim >= 2, got {dim}")));
        }
        if nr == 0 {
            return Err(Error::Config(format!("need at least 1 radial cell, got {nr}")));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Config(format!("radius must be positive, got {radius}")));
        }
        let axial = Grid1D::new(length, nx, axial_ratio)?;
        let sigma = unit_sphere_area(dim - 2);
        let k = dim as i32 - 1;
        let dr = radius / nr as f64;
        let mut radial_faces: Vec<f64> = (0..=nr).map(|j| j as f64 * dr).collect();
        radial_faces[nr] = radius;
        let radial_centers: Vec<f64> =
            radial_faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let radial_spacings = radial_centers.windows(2).map(|w| w[1] - w[0]).collect();
        let radial_volumes = radial_faces
            .windows(2)
            .map(|w| sigma * (w[1].powi(k) - w[0].powi(k)) / k as f64)
            .collect();
        let face_areas = radial_faces.iter().map(|r| sigma * r.powi(k - 1)).collect();
        Ok(GridCyl {
            axial,
            dim,
            radius,
            radial_faces,
            radial_centers,
            radial_spacings,
            radial_volumes,
            face_areas,
        })
    }

    pub fn axial(&self) -> &Grid1D {
        &self.axial
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nx(&self) -> usize {
        self.axial.len()
    }

    pub fn nr(&self) -> usize {
        self.radial_volumes.len()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    pub fn radial_faces(&self) -> &[f64] {
        &self.radial_faces
    }

    pub fn radial_centers(&self) -> &[f64] {
        &self.radial_centers
    }

    pub fn radial_spacings(&self) -> &[f64] {
        &self.radial_spacings
    }

    pub fn radial_volumes(&self) -> &[f64] {
        &self.radial_volumes
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    /// `|B'_R|` as the sum of the radial weights.
    /// Averages of `profile(rho)` over each radial cell against the weight
    /// `rho^(n-2)`.
    pub fn radial_averages(&self, profile: impl Fn(f64) -> f64) -> Vec<f64> {
        let k = self.dim as i32 - 2;
        self.radial_faces
            .windows(2)
            .map(|w| {
                let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                let (mut num, mut den) = (0.0, 0.0);
                for &(x, wt) in GAUSS5.iter() {
                    let rho = mid + half * x;
                    let weight = wt * rho.powi(k);
                    num += weight * profile(rho);
                    den += weight;
                }
                num / den
            })
            .collect()
    }

    pub fn cross_section_volume(&self) -> f64 {
        self.radial_volumes.iter().sum()
    }
}

impl Mesh for GridCyl {
    fn n_cells(&self) -> usize {
        self.nx() * self.nr()
    }

    fn cell_volume(&self, k: usize) -> f64 {
        let nx = self.nx();
        self.axial.widths()[k % nx] * self.radial_volumes[k / nx]
    }

    fn axial_center(&self, k: usize) -> f64 {
        self.axial.centers()[k % self.nx()]
    }

    fn total_volume(&self) -> f64 {
        self.axial.length() * self.cross_section_volume()
    }
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

pub(crate) fn cell_averages(faces: &[f64], profile: impl Fn(f64) -> f64) -> Vec<f64> {
    faces
        .windows(2)
        .map(|w| {
            let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            0.5 * GAUSS5.iter().map(|&(x, wt)| wt * profile(mid + half * x)).sum::<f64>()
        })
        .collect()
}
