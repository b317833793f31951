//! Adam with Nesterov momentum (Nadam).
//!
//! Update, applied elementwise with step index t ≥ 1:
//!
//! ```text
//! m ← β1·m + (1−β1)·g
//! v ← β2·v + (1−β2)·g²
//! m̂ = m / (1−β1^t)
//! v̂ = v / (1−β2^t)
//! m̃ = β1·m̂ + (1−β1)·g / (1−β1^t)      (Nesterov lookahead)
//! w ← w − lr·m̃ / (√v̂ + ε)
//! ```

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NadamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for NadamHyper {
    fn default() -> Self {
        NadamHyper {
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Nadam step over a flat parameter slice. `m` and `v` are the
/// first/second moment accumulators aligned with `weights`.
pub fn nadam_step(
    weights: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    hyper: &NadamHyper,
) -> Result<()> {
    if t < 1 {
        return Err(Error::validation("nadam step index must be >= 1"));
    }
    let len = weights.len();
    if grads.len() != len || m.len() != len || v.len() != len {
        return Err(Error::shape("nadam buffers must share length"));
    }
    let NadamHyper {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = *hyper;
    let bias1 = 1.0 - beta1.powi(t as i32);
    let bias2 = 1.0 - beta2.powi(t as i32);
    for i in 0..len {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        let lookahead = beta1 * m_hat + (1.0 - beta1) * g / bias1;
        weights[i] -= learning_rate * lookahead / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_zero_state_is_identity() {
        let mut w = [0.5, -1.5];
        let mut m = [0.0; 2];
        let mut v = [0.0; 2];
        nadam_step(&mut w, &[0.0, 0.0], &mut m, &mut v, 1, &NadamHyper::default()).unwrap();
        assert_eq!(w, [0.5, -1.5]);
        assert_eq!(m, [0.0; 2]);
    }

    /// Single-step hand evaluation of the stated recurrences at
    /// w = 0, g = 1, lr = 0.1, t = 1 with the default moment parameters.
    #[test]
    fn single_step_matches_recurrence() {
        let hyper = NadamHyper {
            learning_rate: 0.1,
            ..NadamHyper::default()
        };
        let mut w = [0.0];
        let mut m = [0.0];
        let mut v = [0.0];
        nadam_step(&mut w, &[1.0], &mut m, &mut v, 1, &hyper).unwrap();

        // independent evaluation, term by term
        let (b1, b2, eps, lr, g): (f64, f64, f64, f64, f64) = (0.9, 0.999, 1e-8, 0.1, 1.0);
        let m1 = b1 * 0.0 + (1.0 - b1) * g; // 0.1
        let v1 = b2 * 0.0 + (1.0 - b2) * g * g; // 0.001
        let m_hat = m1 / (1.0 - b1); // 1.0
        let v_hat = v1 / (1.0 - b2); // 1.0
        let lookahead = b1 * m_hat + (1.0 - b1) * g / (1.0 - b1); // 1.9
        let expected = -lr * lookahead / (v_hat.sqrt() + eps);
        assert!((w[0] - expected).abs() < 1e-16, "w {} expected {expected}", w[0]);
        // frozen value of the hand computation
        assert!((w[0] - (-0.189_999_998_1)).abs() < 1e-9, "w {}", w[0]);
        assert!((m[0] - 0.1).abs() < 1e-16);
        assert!((v[0] - 0.001).abs() < 1e-16);
    }

    /// The update is elementwise: permuting parameters permutes updates.
    #[test]
    fn elementwise_purity() {
        let hyper = NadamHyper::default();
        let g = [0.3, -0.7, 1.1];
        let mut w1 = [1.0, 2.0, 3.0];
        let mut m1 = [0.01, 0.02, 0.03];
        let mut v1 = [0.1, 0.2, 0.3];
        nadam_step(&mut w1, &g, &mut m1, &mut v1, 5, &hyper).unwrap();

        let mut w2 = [3.0, 1.0, 2.0];
        let mut m2 = [0.03, 0.01, 0.02];
        let mut v2 = [0.3, 0.1, 0.2];
        nadam_step(&mut w2, &[1.1, 0.3, -0.7], &mut m2, &mut v2, 5, &hyper).unwrap();
        assert_eq!(w1[0], w2[1]);
        assert_eq!(w1[1], w2[2]);
        assert_eq!(w1[2], w2[0]);
    }

    #[test]
    fn step_zero_rejected() {
        let mut w = [0.0];
        let mut m = [0.0];
        let mut v = [0.0];
        assert!(nadam_step(&mut w, &[1.0], &mut m, &mut v, 0, &NadamHyper::default()).is_err());
    }

    #[test]
    fn identical_tensors_get_identical_updates() {
        let hyper = NadamHyper::default();
        let mut wa = [0.4; 8];
        let mut ma = [0.0; 8];
        let mut va = [0.0; 8];
        let mut wb = wa;
        let mut mb = ma;
        let mut vb = va;
        nadam_step(&mut wa, &[0.25; 8], &mut ma, &mut va, 3, &hyper).unwrap();
        nadam_step(&mut wb, &[0.25; 8], &mut mb, &mut vb, 3, &hyper).unwrap();
        assert_eq!(wa, wb);
    }
}
