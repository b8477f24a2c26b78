//! Central finite-difference gradient checking.
//!
//! Used by the verification suites to validate every reverse-mode gradient
//! in the crate against a numerical oracle. Kept in the library so
//! integration tests and downstream experiments can reuse it.

/// Central-difference gradient of `f` at `theta`.
///
/// Per-coordinate step `h = cbrt(machine eps) * (1 + |theta_i|)`.
pub fn central_diff_grad<F>(mut f: F, theta: &[f64]) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let base_h = f64::EPSILON.cbrt();
    let mut point = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let h = base_h * (1.0 + theta[i].abs());
        let orig = point[i];
        point[i] = orig + h;
        let plus = f(&point);
        point[i] = orig - h;
        let minus = f(&point);
        point[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// Mixed relative/absolute discrepancy: `|a - b| / max(1, |a|, |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / f64::max(1.0, f64::max(a.abs(), b.abs()))
}

/// Largest [`rel_err`] over two gradient vectors.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}
