use rand_chacha::ChaCha8Rng;

use crate::scalar::{cast, Scalar};
use crate::tpo::{one_hot_features, EnvStep, Environment};

use super::{step_sampled, Action, Channel, NavMap, NavState};

/// [`NavMap`] as a training environment. Objective `i` receives channel
/// `channels[i − 1]`; states are free-cell indices with one-hot features.
#[derive(Debug, Clone)]
pub struct NavEnv<T> {
    map: NavMap,
    channels: Vec<Channel>,
    features: Vec<Vec<T>>,
    goal: usize,
}

impl<T: Scalar> NavEnv<T> {
    pub fn new(map: NavMap, channels: Vec<Channel>) -> Self {
        let features = one_hot_features(map.n_free());
        let goal = map.state_index(map.goal()).expect("goal is free");
        Self { map, channels, features, goal }
    }

    pub fn map(&self) -> &NavMap {
        &self.map
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }
}

impl<T: Scalar> Environment<T> for NavEnv<T> {
    fn n_states(&self) -> usize {
        self.map.n_free()
    }

    fn n_actions(&self) -> usize {
        Action::ALL.len()
    }

    fn n_objectives(&self) -> usize {
        self.channels.len()
    }

    fn n_features(&self) -> usize {
        self.map.n_free()
    }

    fn features(&self, state: usize) -> &[T] {
        &self.features[state]
    }

    fn reset(&self, _rng: &mut ChaCha8Rng) -> usize {
        self.map.state_index(self.map.start()).expect("start is free")
    }

    fn step(&self, state: usize, action: usize, rng: &mut ChaCha8Rng) -> Option<EnvStep<T>> {
        if state == self.goal {
            return None;
        }
        let cell = self.map.cell(state);
        let out = step_sampled(&self.map, NavState { cell, terminal: false }, Action::from_index(action)?, rng).ok()?;
        let reward = self.channels.iter().map(|&c| cast(out.reward.get(c) as f64)).collect();
        let next = self.map.state_index(out.next.cell).expect("moves land on free cells");
        Some(EnvStep { next, reward, done: out.done })
    }

    fn is_terminal(&self, state: usize) -> bool {
        state == self.goal
    }
}
