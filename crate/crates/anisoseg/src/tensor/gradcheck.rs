//! Central finite-difference gradient checking.

/// Numerical gradient of `f` at `x` by central differences with step `h`.
pub fn central_difference_grad(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let hi = f(&probe);
            probe[i] = orig - h;
            let lo = f(&probe);
            probe[i] = orig;
            (hi - lo) / (2.0 * h)
        })
        .collect()
}

/// Maximum elementwise relative error |a - n| / max(|a|, |n|, floor).
///
/// The floor keeps the ratio meaningful when both gradients are near zero.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
