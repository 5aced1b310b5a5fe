use crate::navenv::episode_rng;
use crate::scalar::Scalar;

use super::env::Environment;
use super::policy::Policy;

/// One transition with the behaviour policy's log-probability of the action.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<T> {
    pub state: usize,
    pub action: usize,
    /// Length `k`, objective order.
    pub reward: Vec<T>,
    pub next_state: usize,
    pub done: bool,
    pub log_prob: T,
}

impl<T: Scalar> Step<T> {
    /// Reward of objective `i` (1-based).
    pub fn reward_of(&self, i: usize) -> T {
        self.reward[i - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub steps: Vec<Step<T>>,
    pub horizon: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Ended at the horizon rather than in a terminal state.
    pub fn truncated(&self) -> bool {
        self.steps.last().is_some_and(|s| !s.done)
    }

    /// `Σ_t γ^t r_i^t`.
    pub fn discounted_return(&self, i: usize, gamma: T) -> T {
        let mut g = T::zero();
        for s in self.steps.iter().rev() {
            g = s.reward_of(i) + gamma * g;
        }
        g
    }
}

/// Seed of iteration `iteration` within a run seeded with `seed`.
pub fn iteration_seed(seed: u64, phase: u64, iteration: u64) -> u64 {
    // splitmix64 finalizer over the packed triple
    let mut z = seed ^ phase.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ iteration.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Samples `episodes` trajectories of at most `horizon` steps.
///
/// Episode `e` draws only from its own stream `(seed, e)`, so the batch does
/// not depend on the order episodes are simulated in.
pub fn rollout<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    policy: &Policy<T>,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Vec<Trajectory<T>> {
    (0..episodes).map(|e| rollout_episode(env, policy, horizon, seed, e as u64)).collect()
}

pub fn rollout_episode<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    policy: &Policy<T>,
    horizon: usize,
    seed: u64,
    episode: u64,
) -> Trajectory<T> {
    let mut rng = episode_rng(seed, episode);
    let mut s = env.reset(&mut rng);
    let mut steps = Vec::new();
    while steps.len() < horizon {
        let (a, log_prob) = policy.sample(env.obs(s), &mut rng);
        let Some(out) = env.step(s, a, &mut rng) else { break };
        let done = out.done;
        steps.push(Step { state: s, action: a, reward: out.reward, next_state: out.next, done, log_prob });
        if done {
            break;
        }
        s = out.next;
    }
    Trajectory { steps, horizon }
}
