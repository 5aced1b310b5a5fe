//! Seeded random TMDP instances for property and equivalence tests.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dag::{LocalSlacks, ObjectiveDag};
use crate::model::TmdpSpec;
use crate::scalar::{cast, Scalar};

use super::{solve_lar, SolveError, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DagShape {
    Chain,
    Fan,
    Diamond,
}

impl DagShape {
    pub const ALL: [DagShape; 3] = [DagShape::Chain, DagShape::Fan, DagShape::Diamond];

    /// Edge pairs of this shape over `k` objectives. Shapes collapse to a
    /// chain when `k` is too small for them to differ.
    pub fn edges(self, k: usize) -> Vec<(usize, usize)> {
        match (self, k) {
            (_, 0 | 1) => Vec::new(),
            (DagShape::Chain, _) | (_, 2) => (1..k).map(|j| (j, j + 1)).collect(),
            (DagShape::Fan, _) => (1..k).map(|j| (j, k)).collect(),
            (DagShape::Diamond, 3) => vec![(1, 2), (1, 3), (2, 3)],
            (DagShape::Diamond, _) => {
                // 1 fans out to 2..k-1, which all feed k
                let mut e: Vec<_> = (2..k).map(|j| (1, j)).collect();
                e.extend((2..k).map(|j| (j, k)));
                e
            }
        }
    }
}

/// Size ranges for generated instances (inclusive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceParams {
    pub states: (usize, usize),
    pub actions: (usize, usize),
    pub objectives: (usize, usize),
    pub gamma: (f64, f64),
    /// Probability that an edge gets exactly zero local slack.
    pub zero_slack_prob: f64,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self { states: (2, 15), actions: (2, 4), objectives: (1, 4), gamma: (0.5, 0.95), zero_slack_prob: 0.2 }
    }
}

impl InstanceParams {
    /// Instances small enough for exhaustive policy enumeration.
    pub fn oracle_sized() -> Self {
        Self { states: (2, 6), actions: (2, 3), objectives: (1, 4), ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct RandomInstance<T> {
    pub seed: u64,
    pub shape: DagShape,
    pub spec: TmdpSpec<T>,
    pub eta: LocalSlacks<T>,
    /// Slack redraws needed before every objective had a feasible action.
    pub redraws: usize,
}

/// Random transition rows with 1 to 3 successors and rewards in `[-1, 1]`.
pub fn random_tables<T: Scalar, R: Rng>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    k: usize,
) -> (Vec<Vec<Vec<T>>>, Vec<Vec<Vec<T>>>) {
    let transition = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| {
                    let support = rng.gen_range(1..=n_states.min(3));
                    let picked = sample(rng, n_states, support);
                    let weights: Vec<f64> = (0..support).map(|_| rng.gen_range(0.05..1.0)).collect();
                    let total: f64 = weights.iter().sum();
                    let mut row = vec![T::zero(); n_states];
                    for (s, w) in picked.iter().zip(&weights) {
                        row[s] = cast(w / total);
                    }
                    row
                })
                .collect()
        })
        .collect();
    let rewards = (0..k)
        .map(|_| {
            (0..n_states)
                .map(|_| (0..n_actions).map(|_| cast(rng.gen_range(-1.0..=1.0))).collect())
                .collect()
        })
        .collect();
    (transition, rewards)
}

fn draw_slacks<R: Rng>(rng: &mut R, ranges: &[f64], zero_prob: f64) -> Vec<f64> {
    ranges
        .iter()
        .map(|&range| {
            if rng.gen_bool(zero_prob) {
                0.0
            } else {
                // cubed uniform: most mass near binding slacks, tail out to 2x the value range
                let u: f64 = rng.gen();
                2.0 * range * u * u * u
            }
        })
        .collect()
}

/// Draws one instance. `shape` is random unless given.
pub fn random_instance<T: Scalar>(seed: u64, params: &InstanceParams, shape: Option<DagShape>) -> RandomInstance<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = rng.gen_range(params.states.0..=params.states.1);
    let na = rng.gen_range(params.actions.0..=params.actions.1);
    let k = rng.gen_range(params.objectives.0..=params.objectives.1);
    let shape = shape.unwrap_or_else(|| DagShape::ALL[rng.gen_range(0..3)]);
    let gamma: f64 = rng.gen_range(params.gamma.0..params.gamma.1);
    let (transition, rewards) = random_tables::<f64, _>(&mut rng, ns, na, k);
    let pairs = shape.edges(k);
    let ranges: Vec<f64> = pairs
        .iter()
        .map(|&(w, _)| {
            let flat = rewards[w - 1].iter().flatten();
            let hi = flat.clone().fold(f64::MIN, |m, &x| m.max(x));
            let lo = flat.fold(f64::MAX, |m, &x| m.min(x));
            (hi - lo) / (1.0 - gamma)
        })
        .collect();
    let eta = draw_slacks(&mut rng, &ranges, params.zero_slack_prob);
    build(seed, shape, ns, na, k, gamma, transition, rewards, &pairs, &eta, 0)
}

#[allow(clippy::too_many_arguments)]
fn build<T: Scalar>(
    seed: u64,
    shape: DagShape,
    ns: usize,
    na: usize,
    k: usize,
    gamma: f64,
    transition: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<Vec<f64>>>,
    pairs: &[(usize, usize)],
    eta: &[f64],
    redraws: usize,
) -> RandomInstance<T> {
    let conv = |t: Vec<Vec<Vec<f64>>>| -> Vec<Vec<Vec<T>>> {
        t.into_iter().map(|m| m.into_iter().map(|r| r.into_iter().map(cast).collect()).collect()).collect()
    };
    let dag = ObjectiveDag::new(
        k,
        pairs.iter().zip(eta).map(|(&(w, v), &e)| (w, v, cast::<T>(e / (1.0 - gamma)))),
    )
    .expect("generated shapes are valid DAGs");
    let eta = LocalSlacks::from_values(&dag, eta.iter().map(|&e| cast(e)).collect()).expect("slacks >= 0");
    let spec = TmdpSpec::new(ns, na, conv(transition), conv(rewards), cast(gamma), dag, 0);
    RandomInstance { seed, shape, spec, eta, redraws }
}

/// Like [`random_instance`], but redraws the slacks (keeping the model) until
/// every objective has a constraint-satisfying action at every state.
///
/// Only objectives with several parents can be infeasible; chains never
/// redraw.
pub fn random_feasible_instance<T: Scalar>(
    seed: u64,
    params: &InstanceParams,
    shape: Option<DagShape>,
    cfg: &SolverConfig<T>,
) -> Result<RandomInstance<T>, SolveError> {
    const MAX_REDRAWS: usize = 1000;
    let first = random_instance::<T>(seed, params, shape);
    let mut inst = first;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for redraw in 0..=MAX_REDRAWS {
        match solve_lar(&inst.spec, &inst.eta, cfg) {
            Ok(_) => {
                inst.redraws = redraw;
                return Ok(inst);
            }
            Err(SolveError::Infeasible { .. }) if redraw < MAX_REDRAWS => {
                let gamma = crate::scalar::to_f64(inst.spec.gamma());
                let ranges: Vec<f64> = inst
                    .spec
                    .dag()
                    .edges()
                    .iter()
                    .map(|e| {
                        let w = e.parent;
                        let mut lo = f64::MAX;
                        let mut hi = f64::MIN;
                        for s in 0..inst.spec.n_states() {
                            for a in 0..inst.spec.n_actions() {
                                let r = crate::scalar::to_f64(inst.spec.reward(w, s, a));
                                lo = lo.min(r);
                                hi = hi.max(r);
                            }
                        }
                        (hi - lo) / (1.0 - gamma)
                    })
                    .collect();
                let eta = draw_slacks(&mut rng, &ranges, params.zero_slack_prob);
                let dag = inst
                    .spec
                    .dag()
                    .map_slacks(|j, _| cast(eta[j] / (1.0 - gamma)))
                    .expect("same structure");
                inst.eta = LocalSlacks::from_values(&dag, eta.iter().map(|&e| cast(e)).collect())
                    .expect("slacks >= 0");
                inst.spec = inst.spec.with_dag(dag);
            }
            Err(e) => return Err(e),
        }
    }
    unreachable!("loop returns on the last redraw")
}
