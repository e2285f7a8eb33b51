//! Central-finite-difference gradient oracle, used by tests to verify the
//! tape's analytic gradients. Independent of the tape by construction: it only
//! perturbs parameters and re-evaluates a scalar loss.

use super::params::Params;
use super::Real;

/// Numeric gradient of `loss` w.r.t. every parameter, by central differences.
pub fn finite_diff_grads<F>(params: &mut Params, step: f64, mut loss: F) -> Vec<f64>
where
    F: FnMut(&Params) -> f64,
{
    let n = params.len();
    let mut grads = vec![0.0f64; n];
    for i in 0..n {
        let orig = params.flat()[i];
        params.flat_mut()[i] = orig + step as Real;
        let up = loss(params);
        params.flat_mut()[i] = orig - step as Real;
        let down = loss(params);
        params.flat_mut()[i] = orig;
        grads[i] = (up - down) / (2.0 * step);
    }
    grads
}

/// Maximum relative error between analytic and numeric gradients. The floor
/// keeps near-zero entries from blowing up the ratio.
pub fn max_rel_error(analytic: &[Real], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let a = a as f64;
        let denom = a.abs().max(n.abs()).max(floor);
        let err = (a - n).abs() / denom;
        if err > worst {
            worst = err;
        }
    }
    worst
}
