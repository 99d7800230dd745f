//! Named initial-data families. Every family is rescaled to the configured mass.

use chemoflux_core::{Grid1D, GridCyl, Mesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Constant,
    /// `1 + amplitude cos(mode pi x / L)`.
    Cosine {
        amplitude: f64,
        #[serde(default = "one")]
        mode: u32,
    },
    /// `k g(k x) h(rho)` with `g(s) = max(0, 1 - s)^2` and
    /// `h(rho) = 1 - radial_depth (rho/R)^2` on the cylinder.
    Concentration {
        k: f64,
        #[serde(default)]
        radial_depth: f64,
    },
    /// `ratio` on `x < split`, 1 beyond.
    Step { split: f64, ratio: f64 },
    /// Piecewise linear through `(x, c)`, constant outside the nodes.
    Table { x: Vec<f64>, c: Vec<f64> },
    /// Constant times `1 + amplitude U(-1, 1)` drawn per cell from `seed`.
    Noise { amplitude: f64 },
}

fn one() -> u32 {
    1
}

fn concentration_profile(k: f64, x: f64) -> f64 {
    let s = (1.0 - k * x).max(0.0);
    k * s * s
}

fn interpolate(xs: &[f64], cs: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return cs[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return cs[last];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    cs[i] * (1.0 - w) + cs[i + 1] * w
}

impl InitialData {
    pub fn validate(&self, length: f64) -> Result<()> {
        let invalid = |msg: String| Err(HarnessError::Invalid { key: "initial".into(), msg });
        match self {
            InitialData::Constant => {}
            InitialData::Cosine { amplitude, .. } => {
                if !(amplitude.abs() < 1.0) {
                    return invalid(format!("cosine amplitude must lie in (-1,1), got {amplitude}"));
                }
            }
            InitialData::Concentration { k, radial_depth } => {
                if !(k.is_finite() && *k > 0.0) {
                    return invalid(format!("k must be positive, got {k}"));
                }
                if !(0.0..1.0).contains(radial_depth) {
                    return invalid(format!("radial_depth must lie in [0,1), got {radial_depth}"));
                }
            }
            InitialData::Step { split, ratio } => {
                if !(*split > 0.0 && *split < length) {
                    return invalid(format!("split must lie inside (0, L), got {split}"));
                }
                if !(ratio.is_finite() && *ratio > 0.0) {
                    return invalid(format!("step ratio must be positive, got {ratio}"));
                }
            }
            InitialData::Table { x, c } => {
                if x.len() < 2 || x.len() != c.len() {
                    return invalid("table needs at least 2 nodes and equal x/c lengths".into());
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) {
                    return invalid("table x must be strictly increasing".into());
                }
                if c.iter().any(|&v| !(v.is_finite() && v >= 0.0)) || c.iter().all(|&v| v == 0.0) {
                    return invalid("table c must be finite, nonnegative and not all zero".into());
                }
            }
            InitialData::Noise { amplitude } => {
                if !(*amplitude >= 0.0 && *amplitude < 1.0) {
                    return invalid(format!("noise amplitude must lie in [0,1), got {amplitude}"));
                }
            }
        }
        Ok(())
    }

    /// Unnormalized cell averages of the axial profile.
    fn axial(&self, grid: &Grid1D, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let length = grid.length();
        match self {
            InitialData::Constant => vec![1.0; grid.len()],
            InitialData::Cosine { amplitude, mode } => {
                let w = *mode as f64 * std::f64::consts::PI / length;
                grid.sample_averages(|x| 1.0 + amplitude * (w * x).cos())
            }
            InitialData::Concentration { k, .. } => {
                grid.sample_averages(|x| concentration_profile(*k, x))
            }
            InitialData::Step { split, ratio } => grid
                .interfaces()
                .windows(2)
                .map(|w| {
                    let left = (split.min(w[1]) - w[0]).max(0.0);
                    (ratio * left + (w[1] - w[0] - left)) / (w[1] - w[0])
                })
                .collect(),
            InitialData::Table { x, c } => grid.sample_averages(|s| interpolate(x, c, s)),
            InitialData::Noise { amplitude } => {
                (0..grid.len()).map(|_| 1.0 + amplitude * rng.gen_range(-1.0..1.0)).collect()
            }
        }
    }

    pub fn build_1d(&self, grid: &Grid1D, mass: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = self.axial(grid, &mut rng);
        normalize(grid, c, mass)
    }

    pub fn build_cyl(&self, grid: &GridCyl, mass: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let InitialData::Noise { amplitude } = self {
            let c = (0..grid.n_cells()).map(|_| 1.0 + amplitude * rng.gen_range(-1.0..1.0)).collect();
            return normalize(grid, c, mass);
        }
        let axial = self.axial(grid.axial(), &mut rng);
        let radial = match self {
            InitialData::Concentration { radial_depth, .. } => {
                let r2 = grid.radius() * grid.radius();
                grid.radial_averages(|rho| 1.0 - radial_depth * rho * rho / r2)
            }
            _ => vec![1.0; grid.nr()],
        };
        let mut c = Vec::with_capacity(grid.n_cells());
        for h in &radial {
            c.extend(axial.iter().map(|v| v * h));
        }
        normalize(grid, c, mass)
    }
}

fn normalize<M: Mesh>(mesh: &M, mut c: Vec<f64>, mass: f64) -> Vec<f64> {
    let total: f64 = c.iter().enumerate().map(|(k, v)| v * mesh.cell_volume(k)).sum();
    let scale = mass / total;
    c.iter_mut().for_each(|v| *v *= scale);
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mass_of<M: Mesh>(mesh: &M, c: &[f64]) -> f64 {
        c.iter().enumerate().map(|(k, v)| v * mesh.cell_volume(k)).sum()
    }

    #[test]
    fn every_family_has_the_requested_mass() {
        let grid = Grid1D::new(1.0, 64, 1.02).unwrap();
        let families = [
            InitialData::Constant,
            InitialData::Cosine { amplitude: 0.3, mode: 2 },
            InitialData::Concentration { k: 4.0, radial_depth: 0.0 },
            InitialData::Step { split: 0.3, ratio: 5.0 },
            InitialData::Table { x: vec![0.0, 0.5, 1.0], c: vec![2.0, 1.0, 0.0] },
            InitialData::Noise { amplitude: 0.5 },
        ];
        for fam in families {
            let c = fam.build_1d(&grid, 1.7, 3);
            assert_relative_eq!(mass_of(&grid, &c), 1.7, max_relative = 1e-14);
            assert!(c.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn concentration_is_nonincreasing() {
        let grid = Grid1D::uniform(1.0, 128).unwrap();
        let c = InitialData::Concentration { k: 4.0, radial_depth: 0.0 }.build_1d(&grid, 1.0, 0);
        assert!(c.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*c.last().unwrap(), 0.0);
    }

    #[test]
    fn step_averages_are_exact() {
        let grid = Grid1D::uniform(1.0, 4).unwrap();
        let c = InitialData::Step { split: 0.375, ratio: 3.0 }.axial(&grid, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(c, vec![3.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn noise_depends_only_on_seed() {
        let grid = Grid1D::uniform(1.0, 32).unwrap();
        let fam = InitialData::Noise { amplitude: 0.2 };
        assert_eq!(fam.build_1d(&grid, 1.0, 9), fam.build_1d(&grid, 1.0, 9));
        assert_ne!(fam.build_1d(&grid, 1.0, 9), fam.build_1d(&grid, 1.0, 10));
    }

    #[test]
    fn cylinder_concentration_is_separable() {
        let grid = GridCyl::new(1.0, 0.5, 3, 16, 4, 1.0).unwrap();
        let c = InitialData::Concentration { k: 2.0, radial_depth: 0.5 }.build_cyl(&grid, 2.0, 0);
        assert_relative_eq!(mass_of(&grid, &c), 2.0, max_relative = 1e-14);
        let (nx, nr) = (grid.nx(), grid.nr());
        for j in 1..nr {
            let ratio = c[j * nx] / c[0];
            for i in 0..nx / 2 {
                assert_relative_eq!(c[j * nx + i] / c[i], ratio, max_relative = 1e-12);
            }
            assert!(c[j * nx] < c[(j - 1) * nx]);
        }
    }
}
