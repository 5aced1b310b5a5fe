use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::TmdpSpec;
use crate::scalar::Scalar;

use super::approx::Obs;

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep<T> {
    pub next: usize,
    /// One entry per objective, in objective order.
    pub reward: Vec<T>,
    pub done: bool,
}

/// Finite-state environment with `k` reward channels.
///
/// Implementations are immutable: the episode state is the `usize` passed
/// around, so one environment can serve concurrent rollouts.
pub trait Environment<T: Scalar> {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn n_objectives(&self) -> usize;
    fn n_features(&self) -> usize;
    /// Feature vector of `state` (length `n_features`).
    fn features(&self, state: usize) -> &[T];
    fn reset(&self, rng: &mut ChaCha8Rng) -> usize;
    /// `None` when `state` is terminal.
    fn step(&self, state: usize, action: usize, rng: &mut ChaCha8Rng) -> Option<EnvStep<T>>;
    fn is_terminal(&self, state: usize) -> bool;

    fn obs(&self, state: usize) -> Obs<'_, T> {
        Obs { state, features: self.features(state) }
    }
}

/// One-hot feature table for `n` states.
pub fn one_hot_features<T: Scalar>(n: usize) -> Vec<Vec<T>> {
    (0..n)
        .map(|s| {
            let mut f = vec![T::zero(); n];
            f[s] = T::one();
            f
        })
        .collect()
}

/// Samples a [`TmdpSpec`]. Episodes start at the spec's initial state; states
/// listed as terminal end the episode on arrival.
#[derive(Debug, Clone)]
pub struct TabularEnv<T> {
    spec: TmdpSpec<T>,
    terminal: Vec<bool>,
    features: Vec<Vec<T>>,
}

impl<T: Scalar> TabularEnv<T> {
    pub fn new(spec: TmdpSpec<T>) -> Self {
        let n = spec.n_states();
        Self { terminal: vec![false; n], features: one_hot_features(n), spec }
    }

    pub fn with_terminal(mut self, states: &[usize]) -> Self {
        for &s in states {
            self.terminal[s] = true;
        }
        self
    }

    /// Replaces the one-hot features with a custom table (one row per state).
    pub fn with_features(mut self, features: Vec<Vec<T>>) -> Self {
        assert_eq!(features.len(), self.spec.n_states(), "one feature row per state");
        assert!(features.windows(2).all(|w| w[0].len() == w[1].len()), "feature rows must share a length");
        self.features = features;
        self
    }

    pub fn spec(&self) -> &TmdpSpec<T> {
        &self.spec
    }
}

impl<T: Scalar> Environment<T> for TabularEnv<T> {
    fn n_states(&self) -> usize {
        self.spec.n_states()
    }

    fn n_actions(&self) -> usize {
        self.spec.n_actions()
    }

    fn n_objectives(&self) -> usize {
        self.spec.n_objectives()
    }

    fn n_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    fn features(&self, state: usize) -> &[T] {
        &self.features[state]
    }

    fn reset(&self, _rng: &mut ChaCha8Rng) -> usize {
        self.spec.initial_state()
    }

    fn step(&self, state: usize, action: usize, rng: &mut ChaCha8Rng) -> Option<EnvStep<T>> {
        if self.terminal[state] {
            return None;
        }
        let succ = self.spec.successors(state, action);
        let next = if succ.len() == 1 {
            succ[0].0
        } else {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            succ.iter().find(|&&(_, p)| {
                acc += crate::scalar::to_f64(p);
                u < acc
            })
            .unwrap_or(succ.last().expect("rows have support"))
            .0
        };
        let reward = (1..=self.spec.n_objectives()).map(|i| self.spec.reward(i, state, action)).collect();
        Some(EnvStep { next, reward, done: self.terminal[next] })
    }

    fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }
}
