use rand::Rng;

use crate::scalar::Scalar;

use super::approx::{ApproxKind, Approximator, Obs};

/// Softmax policy `π(a | s; θ) ∝ exp(f_θ(s)_a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    logits: Approximator<T>,
}

impl<T: Scalar> Policy<T> {
    /// Near-uniform initial policy: preferences drawn uniformly from
    /// `[-scale, scale]`.
    pub fn new<R: Rng>(kind: ApproxKind, n_actions: usize, scale: f64, rng: &mut R) -> Self {
        Self { logits: Approximator::random(kind, n_actions, scale, rng) }
    }

    pub fn uniform(kind: ApproxKind, n_actions: usize) -> Self {
        Self { logits: Approximator::zeros(kind, n_actions) }
    }

    pub fn from_approximator(logits: Approximator<T>) -> Self {
        Self { logits }
    }

    pub fn approximator(&self) -> &Approximator<T> {
        &self.logits
    }

    pub fn kind(&self) -> ApproxKind {
        self.logits.kind()
    }

    pub fn n_actions(&self) -> usize {
        self.logits.n_out()
    }

    pub fn params(&self) -> &[T] {
        self.logits.params()
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        self.logits.params_mut()
    }

    pub fn n_params(&self) -> usize {
        self.logits.n_params()
    }

    /// Action probabilities; strictly positive and summing to one.
    pub fn probs(&self, obs: Obs<'_, T>) -> Vec<T> {
        let mut p = self.logits.forward(obs);
        softmax_in_place(&mut p);
        p
    }

    pub fn log_prob(&self, obs: Obs<'_, T>, action: usize) -> T {
        let z = self.logits.forward(obs);
        z[action] - log_sum_exp(&z)
    }

    pub fn sample<R: Rng>(&self, obs: Obs<'_, T>, rng: &mut R) -> (usize, T) {
        let z = self.logits.forward(obs);
        let lse = log_sum_exp(&z);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = z.len() - 1;
        for (a, &za) in z.iter().enumerate() {
            acc += crate::scalar::to_f64((za - lse).exp());
            if u < acc {
                chosen = a;
                break;
            }
        }
        (chosen, z[chosen] - lse)
    }

    /// Most probable action (lowest index on ties).
    pub fn greedy(&self, obs: Obs<'_, T>) -> usize {
        let z = self.logits.forward(obs);
        let mut best = 0;
        for a in 1..z.len() {
            if z[a] > z[best] {
                best = a;
            }
        }
        best
    }

    /// Adds `Σ_a d_logits[a] · ∂z_a/∂θ` to `grad`.
    pub fn backward_logits(&self, obs: Obs<'_, T>, d_logits: &[T], grad: &mut [T]) {
        self.logits.backward(obs, d_logits, grad);
    }

    /// `∇_θ log π(a | s)`, accumulated into `grad` with weight `scale`.
    pub fn add_log_prob_grad(&self, obs: Obs<'_, T>, action: usize, scale: T, grad: &mut [T]) {
        let p = self.probs(obs);
        let d: Vec<T> = p.iter().enumerate().map(|(b, &pb)| scale * (if b == action { T::one() } else { T::zero() } - pb)).collect();
        self.logits.backward(obs, &d, grad);
    }
}

pub(crate) fn log_sum_exp<T: Scalar>(z: &[T]) -> T {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    m + z.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

pub(crate) fn softmax_in_place<T: Scalar>(z: &mut [T]) {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in z.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    for x in z.iter_mut() {
        *x /= total;
    }
}

/// Entropy `−Σ p log p` of a probability vector.
pub(crate) fn entropy<T: Scalar>(p: &[T]) -> T {
    -p.iter().filter(|&&x| x > T::zero()).map(|&x| x * x.ln()).sum::<T>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probabilities_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = [1.0, 2.0];
        for kind in [ApproxKind::Tabular { n_states: 2 }, ApproxKind::Linear { n_features: 2 }, ApproxKind::Mlp { n_features: 2, hidden: 3 }] {
            let pi = Policy::<f64>::new(kind, 4, 3.0, &mut rng);
            let p = pi.probs(Obs { state: 1, features: &x });
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&q| q > 0.0));
            let lp = pi.log_prob(Obs { state: 1, features: &x }, 2);
            assert!((lp.exp() - p[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn large_logits_stay_finite() {
        let a = Approximator::from_params(ApproxKind::Tabular { n_states: 1 }, 3, vec![800.0f64, 0.0, -800.0]).unwrap();
        let pi = Policy::from_approximator(a);
        let p = pi.probs(Obs { state: 0, features: &[] });
        assert_eq!(p[0], 1.0);
        assert!(pi.log_prob(Obs { state: 0, features: &[] }, 2).is_finite());
    }
}
