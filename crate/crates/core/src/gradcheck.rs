//! Finite-difference utilities for checking analytic gradients.

/// Step used by [`central_difference`], scaled by `max(1, |theta_i|)`.
pub const STEP: f64 = 1e-5;

/// Components whose magnitudes are both below this are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Central finite-difference gradient of `f` at `theta`.
pub fn central_difference<F>(mut f: F, theta: &[f64]) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let h = STEP * theta[i].abs().max(1.0);
            probe[i] = theta[i] + h;
            let up = f(&probe);
            probe[i] = theta[i] - h;
            let down = f(&probe);
            probe[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, RELATIVE_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}
