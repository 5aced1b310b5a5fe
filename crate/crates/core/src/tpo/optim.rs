use serde::{Deserialize, Serialize};

use crate::scalar::{cast, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// Fixed-step gradient descent.
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Minimizes by stepping against the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    lr: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: T, n_params: usize) -> Self {
        let moments = if matches!(kind, OptimizerKind::Adam { .. }) { n_params } else { 0 };
        Self { kind, lr, m: vec![T::zero(); moments], v: vec![T::zero(); moments], t: 0 }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let (b1, b2, eps): (T, T, T) = (cast(beta1), cast(beta2), cast(eps));
                let c1 = T::one() - b1.powi(self.t);
                let c2 = T::one() - b2.powi(self.t);
                for j in 0..params.len() {
                    let g = grad[j];
                    self.m[j] = b1 * self.m[j] + (T::one() - b1) * g;
                    self.v[j] = b2 * self.v[j] + (T::one() - b2) * g * g;
                    let m_hat = self.m[j] / c1;
                    let v_hat = self.v[j] / c2;
                    params[j] -= self.lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_minimize_a_quadratic() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::adam()] {
            let mut opt = Optimizer::new(kind, 0.1, 2);
            let mut x = [3.0f64, -2.0];
            for _ in 0..2000 {
                let g = [2.0 * x[0], 2.0 * x[1]];
                opt.step(&mut x, &g);
            }
            assert!(x[0].abs() < 1e-3 && x[1].abs() < 1e-3, "{kind:?}: {x:?}");
        }
    }
}
