//! Conservative implicit diffusion on a line of cells.

/// Solves `vol_i u_i - [k_{i+1/2}(u_{i+1} - u_i) - k_{i-1/2}(u_i - u_{i-1})] = vol_i c_i`
/// with zero flux through both end faces.
///
/// `conductance[i]` couples cells `i` and `i+1` and already includes `dt`. The
/// system is a symmetric M-matrix, so the solve is positivity- and
/// monotonicity-preserving. The increment `u - c` is solved for (Thomas
/// algorithm) and `u` is then rebuilt from the implicit face fluxes, so
/// `sum vol_i u_i` is conserved up to summation roundoff however stiff the
/// system is, and constants are reproduced exactly. Returns `None` if a pivot
/// degenerates.
pub fn diffuse_implicit(volumes: &[f64], conductance: &[f64], field: &[f64]) -> Option<Vec<f64>> {
    let n = volumes.len();
    debug_assert_eq!(conductance.len() + 1, n);
    debug_assert_eq!(field.len(), n);
    let flux = |u: &[f64], i: usize| conductance[i] * (u[i + 1] - u[i]);
    let divergence = |u: &[f64], i: usize| {
        let right = if i + 1 < n { flux(u, i) } else { 0.0 };
        let left = if i > 0 { flux(u, i - 1) } else { 0.0 };
        right - left
    };
    let rhs: Vec<f64> = (0..n).map(|i| divergence(field, i)).collect();
    let delta = thomas(volumes, conductance, &rhs)?;
    let u: Vec<f64> = field.iter().zip(&delta).map(|(c, d)| c + d).collect();
    Some((0..n).map(|i| field[i] + divergence(&u, i) / volumes[i]).collect())
}

/// Solves `vol_i x_i - [k_{i+1/2}(x_{i+1} - x_i) - k_{i-1/2}(x_i - x_{i-1})] = b_i`.
fn thomas(volumes: &[f64], conductance: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = volumes.len();
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut prev_upper = 0.0;
    let mut prev_rhs = 0.0;
    for i in 0..n {
        let k_left = if i > 0 { conductance[i - 1] } else { 0.0 };
        let k_right = if i + 1 < n { conductance[i] } else { 0.0 };
        let diag = volumes[i] + k_left + k_right;
        // sub-diagonal is -k_left, super-diagonal -k_right
        let pivot = diag + k_left * prev_upper;
        if !(pivot.is_finite() && pivot > 0.0) {
            return None;
        }
        upper[i] = -k_right / pivot;
        rhs[i] = (b[i] + k_left * prev_rhs) / pivot;
        prev_upper = upper[i];
        prev_rhs = rhs[i];
    }
    let mut x = rhs;
    for i in (0..n - 1).rev() {
        x[i] -= upper[i] * x[i + 1];
    }
    Some(x)
}
