//! Adam optimizer over flat parameter vectors.

use serde::{Deserialize, Serialize};

use super::{NnError, Real};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<Real>,
    v: Vec<Real>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(param_len: usize) -> Self {
        AdamState {
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction. Deterministic given identical inputs.
pub fn adam_step(
    params: &mut [Real],
    grads: &[Real],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NnError::ShapeMismatch(format!(
            "adam: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = state.beta1;
    let b2 = state.beta2;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for i in 0..params.len() {
        let g = grads[i] as f64;
        let m = b1 * state.m[i] as f64 + (1.0 - b1) * g;
        let v = b2 * state.v[i] as f64 + (1.0 - b2) * g * g;
        state.m[i] = m as Real;
        state.v[i] = v as Real;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        params[i] -= (lr * m_hat / (v_hat.sqrt() + state.epsilon)) as Real;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_matches_hand_arithmetic() {
        // grad 1.0, step 1, lr 1e-3:
        // m=0.1, v=0.001, m_hat=1, v_hat=1 → Δ = 1e-3/(1+1e-8)
        let mut p = vec![0.5];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut st, 1e-3).unwrap();
        let expected_delta = 1e-3 / (1.0 + 1e-8);
        assert!((0.5 - p[0] - expected_delta).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = vec![1.0, -2.0, 3.5];
        let before = p.clone();
        let mut st = AdamState::new(3);
        for _ in 0..10 {
            adam_step(&mut p, &[0.0, 0.0, 0.0], &mut st, 1e-2).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let run = || {
            let mut p = vec![0.1, 0.2];
            let mut st = AdamState::new(2);
            for i in 0..50 {
                let g = [(i as Real) * 0.01 - 0.2, 0.3];
                adam_step(&mut p, &g, &mut st, 1e-3).unwrap();
            }
            p
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn length_mismatch_errors() {
        let mut p = vec![0.0; 3];
        let mut st = AdamState::new(3);
        assert!(adam_step(&mut p, &[1.0], &mut st, 1e-3).is_err());
    }
}
