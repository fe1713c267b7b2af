//! Central finite-difference gradient oracle.
//!
//! Used by the test suites to verify every analytic gradient against an
//! independent numerical estimate. The oracle only re-evaluates the
//! forward pass, so it shares nothing with the reverse-mode path it
//! checks.

/// Central finite differences of a scalar function at `x`.
pub fn finite_diff_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let plus = f(&probe);
        probe[i] = orig - step;
        let minus = f(&probe);
        probe[i] = orig;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Worst relative error between analytic and numeric gradients.
///
/// Per-element error is |a − n| / max(|a|, |n|, 1): pure relative above
/// unit magnitude, blending into absolute below it, where the
/// finite-difference estimate itself bottoms out.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Standard step for the finite-difference probes.
pub const FD_STEP: f64 = 1e-5;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        // f(x) = Σ x_i², ∇f = 2x
        let x = [1.0, -2.0, 0.5];
        let g = finite_diff_grad(|v| v.iter().map(|q| q * q).sum(), &x, FD_STEP);
        let expect = [2.0, -4.0, 1.0];
        assert!(max_rel_err(&expect, &g) < 1e-8);
    }

    #[test]
    fn rel_err_blends_to_absolute_below_one() {
        assert!(max_rel_err(&[1e-9], &[0.0]) < 1e-8);
        assert!(max_rel_err(&[100.0], &[100.0 + 1e-3]) < 2e-5);
    }
}
