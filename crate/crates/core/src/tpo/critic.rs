use std::collections::BTreeMap;

use crate::scalar::{cast, Scalar};

use super::approx::{ApproxKind, Approximator, Obs};
use super::env::Environment;
use super::rollout::Trajectory;
use super::TpoError;

/// Learned state-value function of one objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic<T> {
    pub objective: usize,
    pub approx: Approximator<T>,
    /// Mean `½ (V̂ − target)²` after the last fit.
    pub loss: T,
    /// Samples seen in the last fit.
    pub samples: usize,
}

impl<T: Scalar> Critic<T> {
    pub fn new(objective: usize, kind: ApproxKind) -> Self {
        Self { objective, approx: Approximator::zeros(kind, 1), loss: T::zero(), samples: 0 }
    }

    pub fn value(&self, obs: Obs<'_, T>) -> T {
        let mut out = [T::zero()];
        self.approx.forward_into(obs, &mut out);
        out[0]
    }
}

/// Critics of already-trained objectives, in the order they were added.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CriticSet<T> {
    critics: BTreeMap<usize, Critic<T>>,
    order: Vec<usize>,
}

impl<T: Scalar> CriticSet<T> {
    pub fn new() -> Self {
        Self { critics: BTreeMap::new(), order: Vec::new() }
    }

    pub fn insert(&mut self, critic: Critic<T>) {
        let i = critic.objective;
        if self.critics.insert(i, critic).is_none() {
            self.order.push(i);
        }
    }

    pub fn get(&self, i: usize) -> Option<&Critic<T>> {
        self.critics.get(&i)
    }

    /// Critic of `ancestor`, needed while training `objective`.
    pub fn require(&self, objective: usize, ancestor: usize) -> Result<&Critic<T>, TpoError> {
        self.critics.get(&ancestor).ok_or(TpoError::MissingCritic { objective, ancestor })
    }

    /// Objectives in insertion order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.critics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.critics.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Critic<T>> {
        self.order.iter().map(|i| &self.critics[i])
    }
}

/// Discounted return targets of objective `i` for every step. A trajectory
/// cut off at the horizon bootstraps from `critic`'s value of its last
/// successor state.
pub fn return_targets<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    traj: &Trajectory<T>,
    i: usize,
    critic: &Critic<T>,
    gamma: T,
) -> Vec<T> {
    let mut g = match traj.steps.last() {
        Some(last) if !last.done => critic.value(env.obs(last.next_state)),
        _ => T::zero(),
    };
    let mut targets = vec![T::zero(); traj.len()];
    for (t, step) in traj.steps.iter().enumerate().rev() {
        g = step.reward_of(i) + gamma * g;
        targets[t] = g;
    }
    targets
}

/// Regresses `critic` onto the return targets of channel `i` (the raw
/// objective reward, no penalties) with `epochs` passes of per-sample
/// gradient descent on `½ (V̂(s) − target)²`.
pub fn fit_critic<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    trajectories: &[Trajectory<T>],
    i: usize,
    mut critic: Critic<T>,
    gamma: T,
    lr: T,
    epochs: usize,
) -> Critic<T> {
    let samples: Vec<(usize, T)> = trajectories
        .iter()
        .flat_map(|tr| {
            let targets = return_targets(env, tr, i, &critic, gamma);
            tr.steps.iter().map(|s| s.state).zip(targets).collect::<Vec<_>>()
        })
        .collect();
    let mut grad = vec![T::zero(); critic.approx.n_params()];
    for _ in 0..epochs {
        for &(s, y) in &samples {
            let obs = env.obs(s);
            let err = critic.value(obs) - y;
            grad.iter_mut().for_each(|g| *g = T::zero());
            critic.approx.backward(obs, &[err], &mut grad);
            for (p, g) in critic.approx.params_mut().iter_mut().zip(&grad) {
                *p -= lr * *g;
            }
        }
    }
    let n = samples.len();
    let half: T = cast(0.5);
    critic.loss = if n == 0 {
        T::zero()
    } else {
        samples
            .iter()
            .map(|&(s, y)| {
                let e = critic.value(env.obs(s)) - y;
                half * e * e
            })
            .sum::<T>()
            / cast(n as f64)
    };
    critic.samples = n;
    critic
}
