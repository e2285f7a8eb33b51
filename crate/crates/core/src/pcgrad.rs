//! Gradient surgery for multi-task training: pairwise conflicts between task
//! gradients (negative dot product) are removed by projecting each gradient
//! onto the normal plane of the conflicting one, then summing.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::Real;

#[derive(Debug, Error)]
pub enum PcGradError {
    #[error("need at least two task gradients, got {0}")]
    TooFewTasks(usize),
    #[error("gradient length mismatch: task {task} has {got}, expected {expected}")]
    LengthMismatch {
        task: usize,
        got: usize,
        expected: usize,
    },
}

fn dot(a: &[Real], b: &[Real]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// Projects conflicting task gradients and returns their sum.
///
/// For each task i, the other tasks are visited in a seeded random order;
/// whenever the working copy of gᵢ has a negative dot product with an
/// original gⱼ, the component along gⱼ is removed:
/// gᵢ ← gᵢ − (gᵢ·gⱼ/‖gⱼ‖²)·gⱼ. Conflict-free gradients pass through
/// unchanged. Zero-norm gⱼ are skipped.
pub fn project_conflicts(grads: &[Vec<Real>], rng_seed: u64) -> Result<Vec<Real>, PcGradError> {
    if grads.len() < 2 {
        return Err(PcGradError::TooFewTasks(grads.len()));
    }
    let len = grads[0].len();
    for (task, g) in grads.iter().enumerate() {
        if g.len() != len {
            return Err(PcGradError::LengthMismatch {
                task,
                got: g.len(),
                expected: len,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let norms_sq: Vec<f64> = grads.iter().map(|g| dot(g, g)).collect();
    let mut combined = vec![0.0 as Real; len];

    for i in 0..grads.len() {
        let mut gi = grads[i].clone();
        let mut others: Vec<usize> = (0..grads.len()).filter(|&j| j != i).collect();
        others.shuffle(&mut rng);
        for j in others {
            if norms_sq[j] <= 0.0 {
                continue;
            }
            let d = dot(&gi, &grads[j]);
            if d < 0.0 {
                let coeff = d / norms_sq[j];
                for (gv, &ov) in gi.iter_mut().zip(&grads[j]) {
                    *gv -= (coeff * ov as f64) as Real;
                }
            }
        }
        for (c, &g) in combined.iter_mut().zip(&gi) {
            *c += g;
        }
    }
    Ok(combined)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2(v: &[Real]) -> f64 {
        dot(v, v).sqrt()
    }

    #[test]
    fn worked_example_projects_to_half_three_halves() {
        // g1=(1,0), g2=(−1,1): conflict (dot −1);
        // g1' = (1,0) − (−1/2)(−1,1) = (0.5, 0.5); g2' = (−1,1) − (−1)(1,0) = (0,1)
        let g1 = vec![1.0, 0.0];
        let g2 = vec![-1.0, 1.0];
        let sum = project_conflicts(&[g1, g2], 0).unwrap();
        assert_eq!(sum, vec![0.5, 1.5]);
    }

    #[test]
    fn orthogonal_gradients_pass_through() {
        let g1 = vec![1.0, 0.0];
        let g2 = vec![0.0, 1.0];
        let sum = project_conflicts(&[g1, g2], 7).unwrap();
        assert_eq!(sum, vec![1.0, 1.0]);
    }

    #[test]
    fn aligned_gradients_just_sum() {
        let g = vec![0.3, -0.4, 0.5];
        let sum = project_conflicts(&[g.clone(), g.clone()], 1).unwrap();
        for (s, v) in sum.iter().zip(&g) {
            assert!((s - 2.0 * v).abs() < 1e-12);
        }
    }

    #[test]
    fn two_task_projection_zeroes_cross_dots() {
        let g1 = vec![2.0, 1.0, -1.0];
        let g2 = vec![-1.5, 0.5, 2.0];
        assert!(dot(&g1, &g2) < 0.0);
        // Recompute the per-task projections by hand to check the invariant.
        let n2 = dot(&g2, &g2);
        let c = dot(&g1, &g2) / n2;
        let g1p: Vec<Real> = g1.iter().zip(&g2).map(|(&a, &b)| a - c * b).collect();
        assert!(dot(&g1p, &g2).abs() < 1e-12);
        let n1 = dot(&g1, &g1);
        let c2 = dot(&g2, &g1) / n1;
        let g2p: Vec<Real> = g2.iter().zip(&g1).map(|(&a, &b)| a - c2 * b).collect();
        assert!(dot(&g2p, &g1).abs() < 1e-12);
        // And the routine returns their sum.
        let sum = project_conflicts(&[g1, g2], 3).unwrap();
        for (s, (a, b)) in sum.iter().zip(g1p.iter().zip(&g2p)) {
            assert!((s - (a + b)).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_never_increases_norm() {
        let g1 = vec![1.0, 2.0, -0.5, 0.25];
        let g2 = vec![-2.0, 0.5, 1.0, -1.0];
        let n2 = dot(&g2, &g2);
        let c = dot(&g1, &g2) / n2;
        let g1p: Vec<Real> = g1.iter().zip(&g2).map(|(&a, &b)| a - c * b).collect();
        assert!(l2(&g1p) <= l2(&g1) + 1e-12);
    }

    #[test]
    fn zero_norm_gradient_is_skipped() {
        let g1 = vec![1.0, 1.0];
        let g2 = vec![0.0, 0.0];
        let sum = project_conflicts(&[g1, g2], 9).unwrap();
        assert_eq!(sum, vec![1.0, 1.0]);
    }

    #[test]
    fn seeded_order_is_deterministic() {
        let grads = vec![
            vec![1.0, -0.5, 0.2],
            vec![-0.8, 0.9, -0.1],
            vec![0.3, -1.2, 0.7],
        ];
        let a = project_conflicts(&grads, 1234).unwrap();
        let b = project_conflicts(&grads, 1234).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let err = project_conflicts(&[vec![1.0], vec![1.0, 2.0]], 0).unwrap_err();
        assert!(matches!(err, PcGradError::LengthMismatch { .. }));
    }

    #[test]
    fn single_task_is_rejected() {
        let err = project_conflicts(&[vec![1.0]], 0).unwrap_err();
        assert!(matches!(err, PcGradError::TooFewTasks(1)));
    }
}
