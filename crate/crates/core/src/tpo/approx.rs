use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::{cast, Scalar};

/// Function approximator families shared by policies and critics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ApproxKind {
    /// One free parameter per (state, output).
    Tabular { n_states: usize },
    /// `W x + b` over state features.
    Linear { n_features: usize },
    /// `W2 tanh(W1 x + b1) + b2`.
    Mlp { n_features: usize, hidden: usize },
}

impl ApproxKind {
    pub fn n_params(&self, n_out: usize) -> usize {
        match *self {
            ApproxKind::Tabular { n_states } => n_states * n_out,
            ApproxKind::Linear { n_features } => (n_features + 1) * n_out,
            ApproxKind::Mlp { n_features, hidden } => hidden * (n_features + 1) + n_out * (hidden + 1),
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            ApproxKind::Tabular { .. } => 0,
            ApproxKind::Linear { .. } => 1,
            ApproxKind::Mlp { .. } => 2,
        }
    }

    /// Shape numbers stored in checkpoints: `[states or features, hidden]`.
    pub fn dims(&self) -> [u64; 2] {
        match *self {
            ApproxKind::Tabular { n_states } => [n_states as u64, 0],
            ApproxKind::Linear { n_features } => [n_features as u64, 0],
            ApproxKind::Mlp { n_features, hidden } => [n_features as u64, hidden as u64],
        }
    }

    pub fn from_code(code: u8, dims: [u64; 2]) -> Option<Self> {
        let [a, b] = dims.map(|d| d as usize);
        match code {
            0 => Some(ApproxKind::Tabular { n_states: a }),
            1 => Some(ApproxKind::Linear { n_features: a }),
            2 => Some(ApproxKind::Mlp { n_features: a, hidden: b }),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ApproxKind::Tabular { .. } => "tabular",
            ApproxKind::Linear { .. } => "linear",
            ApproxKind::Mlp { .. } => "mlp",
        }
    }
}

/// A state as seen by an approximator: its index (tabular) and feature
/// vector (linear, MLP).
#[derive(Debug, Clone, Copy)]
pub struct Obs<'a, T> {
    pub state: usize,
    pub features: &'a [T],
}

/// Parametric map from an observation to `n_out` real outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Approximator<T> {
    kind: ApproxKind,
    n_out: usize,
    params: Vec<T>,
}

impl<T: Scalar> Approximator<T> {
    pub fn zeros(kind: ApproxKind, n_out: usize) -> Self {
        Self { kind, n_out, params: vec![T::zero(); kind.n_params(n_out)] }
    }

    /// Uniform noise in `[-scale, scale]`; MLP input weights are scaled by
    /// `1/sqrt(fan_in)` so hidden units start in tanh's linear range.
    pub fn random<R: Rng>(kind: ApproxKind, n_out: usize, scale: f64, rng: &mut R) -> Self {
        let mut a = Self::zeros(kind, n_out);
        let first_layer = match kind {
            ApproxKind::Mlp { n_features, hidden } => Some((hidden * (n_features + 1), 1.0 / (n_features.max(1) as f64).sqrt())),
            _ => None,
        };
        for (j, p) in a.params.iter_mut().enumerate() {
            let s = match first_layer {
                Some((n1, w)) if j < n1 => w.max(scale),
                _ => scale,
            };
            *p = cast(rng.gen_range(-s..=s));
        }
        a
    }

    pub fn from_params(kind: ApproxKind, n_out: usize, params: Vec<T>) -> Option<Self> {
        (params.len() == kind.n_params(n_out)).then_some(Self { kind, n_out, params })
    }

    pub fn kind(&self) -> ApproxKind {
        self.kind
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Writes the outputs for `obs` into `out` (length `n_out`).
    pub fn forward_into(&self, obs: Obs<'_, T>, out: &mut [T]) {
        let m = self.n_out;
        match self.kind {
            ApproxKind::Tabular { .. } => out.copy_from_slice(&self.params[obs.state * m..(obs.state + 1) * m]),
            ApproxKind::Linear { n_features } => {
                let x = obs.features;
                debug_assert_eq!(x.len(), n_features);
                let (w, b) = self.params.split_at(m * n_features);
                for (o, out_o) in out.iter_mut().enumerate() {
                    *out_o = b[o] + dot(&w[o * n_features..(o + 1) * n_features], x);
                }
            }
            ApproxKind::Mlp { n_features, hidden } => {
                let h = self.hidden_activations(obs.features, n_features, hidden);
                let (w2, b2) = self.params[hidden * (n_features + 1)..].split_at(m * hidden);
                for (o, out_o) in out.iter_mut().enumerate() {
                    *out_o = b2[o] + dot(&w2[o * hidden..(o + 1) * hidden], &h);
                }
            }
        }
    }

    pub fn forward(&self, obs: Obs<'_, T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_out];
        self.forward_into(obs, &mut out);
        out
    }

    fn hidden_activations(&self, x: &[T], n_features: usize, hidden: usize) -> Vec<T> {
        let (w1, b1) = self.params[..hidden * (n_features + 1)].split_at(hidden * n_features);
        (0..hidden).map(|j| (b1[j] + dot(&w1[j * n_features..(j + 1) * n_features], x)).tanh()).collect()
    }

    /// Adds `Σ_o d_out[o] · ∂out_o/∂θ` to `grad`.
    pub fn backward(&self, obs: Obs<'_, T>, d_out: &[T], grad: &mut [T]) {
        let m = self.n_out;
        match self.kind {
            ApproxKind::Tabular { .. } => {
                for (g, &d) in grad[obs.state * m..(obs.state + 1) * m].iter_mut().zip(d_out) {
                    *g += d;
                }
            }
            ApproxKind::Linear { n_features } => {
                let x = obs.features;
                let (gw, gb) = grad.split_at_mut(m * n_features);
                for o in 0..m {
                    let d = d_out[o];
                    if d == T::zero() {
                        continue;
                    }
                    gb[o] += d;
                    for (g, &xi) in gw[o * n_features..(o + 1) * n_features].iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            ApproxKind::Mlp { n_features, hidden } => {
                let x = obs.features;
                let h = self.hidden_activations(x, n_features, hidden);
                let n1 = hidden * (n_features + 1);
                let w2 = &self.params[n1..n1 + m * hidden];
                let (g1, g2) = grad.split_at_mut(n1);
                let (gw2, gb2) = g2.split_at_mut(m * hidden);
                let mut dh = vec![T::zero(); hidden];
                for o in 0..m {
                    let d = d_out[o];
                    gb2[o] += d;
                    for j in 0..hidden {
                        gw2[o * hidden + j] += d * h[j];
                        dh[j] += d * w2[o * hidden + j];
                    }
                }
                let (gw1, gb1) = g1.split_at_mut(hidden * n_features);
                for j in 0..hidden {
                    let dz = dh[j] * (T::one() - h[j] * h[j]);
                    gb1[j] += dz;
                    for (g, &xi) in gw1[j * n_features..(j + 1) * n_features].iter_mut().zip(x) {
                        *g += dz * xi;
                    }
                }
            }
        }
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn param_counts() {
        assert_eq!(ApproxKind::Tabular { n_states: 5 }.n_params(4), 20);
        assert_eq!(ApproxKind::Linear { n_features: 3 }.n_params(4), 16);
        assert_eq!(ApproxKind::Mlp { n_features: 3, hidden: 2 }.n_params(4), 8 + 12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = [0.3, -1.2, 0.7];
        let obs = Obs { state: 1, features: &x };
        for kind in [
            ApproxKind::Tabular { n_states: 3 },
            ApproxKind::Linear { n_features: 3 },
            ApproxKind::Mlp { n_features: 3, hidden: 4 },
        ] {
            let a = Approximator::<f64>::random(kind, 2, 0.5, &mut rng);
            let d_out = [0.7, -0.4];
            let mut grad = vec![0.0; a.n_params()];
            a.backward(obs, &d_out, &mut grad);
            for j in 0..a.n_params() {
                let eval = |delta: f64| {
                    let mut b = a.clone();
                    b.params_mut()[j] += delta;
                    dot(&b.forward(obs), &d_out)
                };
                let fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
                assert!((fd - grad[j]).abs() < 1e-7, "{kind:?} param {j}: {fd} vs {}", grad[j]);
            }
        }
    }
}
