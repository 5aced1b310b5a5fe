use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::{cast, Scalar};

use super::{sample_index, step_sampled, Action, Channel, NavMap, NavState};

/// Independent random stream for episode `episode` of a run seeded with
/// `seed`. Episodes never share draws, so batches can be sampled in any
/// order and merged by index.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// Monte Carlo estimate of the discounted return of every channel from the
/// start cell.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate<T> {
    pub episodes: usize,
    /// Indexed like [`Channel::ALL`].
    pub mean: [T; 3],
    /// Standard error of the mean; zero for a single episode.
    pub std_err: [T; 3],
    /// Fraction of episodes that reached the goal.
    pub success_rate: T,
}

impl<T: Scalar> McEstimate<T> {
    pub fn mean(&self, ch: Channel) -> T {
        self.mean[ch as usize]
    }

    pub fn std_err(&self, ch: Channel) -> T {
        self.std_err[ch as usize]
    }
}

/// Rolls `episodes` episodes of at most `horizon` steps and averages the
/// discounted returns.
///
/// `policy(state, rng)` returns an action index for the free-cell state
/// index; it may draw from the episode's stream.
pub fn monte_carlo_value<T, F>(
    map: &NavMap,
    mut policy: F,
    gamma: T,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> McEstimate<T>
where
    T: Scalar,
    F: FnMut(usize, &mut ChaCha8Rng) -> usize,
{
    assert!(episodes >= 1, "need at least one episode");
    let mut returns: [Vec<T>; 3] = Default::default();
    let mut successes = 0usize;
    for e in 0..episodes {
        let mut rng = episode_rng(seed, e as u64);
        let mut state = NavState::start(map);
        let mut total = [T::zero(); 3];
        let mut discount = T::one();
        for _ in 0..horizon {
            if state.terminal {
                break;
            }
            let s = map.state_index(state.cell).expect("states stay on free cells");
            let a = Action::from_index(policy(s, &mut rng)).expect("policy returned an action index in 0..4");
            let out = step_sampled(map, state, a, &mut rng).expect("state is not terminal");
            for ch in Channel::ALL {
                total[ch as usize] += discount * cast(out.reward.get(ch) as f64);
            }
            discount *= gamma;
            state = out.next;
        }
        if state.terminal {
            successes += 1;
        }
        for (j, r) in total.into_iter().enumerate() {
            returns[j].push(r);
        }
    }
    let n: T = cast(episodes as f64);
    let mut mean = [T::zero(); 3];
    let mut std_err = [T::zero(); 3];
    for j in 0..3 {
        let m = returns[j].iter().copied().sum::<T>() / n;
        mean[j] = m;
        if episodes > 1 {
            let var = returns[j].iter().map(|&x| (x - m) * (x - m)).sum::<T>() / (n - T::one());
            std_err[j] = (var / n).sqrt();
        }
    }
    McEstimate { episodes, mean, std_err, success_rate: cast::<T>(successes as f64) / n }
}

/// Sampling policy over a table of per-state action probabilities.
pub fn table_policy<T: Scalar>(probs: &[Vec<T>]) -> impl FnMut(usize, &mut ChaCha8Rng) -> usize + '_ {
    move |s, rng| sample_index(&probs[s], rng)
}
