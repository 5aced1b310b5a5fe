use crate::dag::{LocalSlacks, ObjectiveDag};
use crate::scalar::{cast, Scalar};

use super::advantage::{ancestral_advantage, constraint_sum, glae, PenaltyContext};
use super::critic::{fit_critic, Critic, CriticSet};
use super::env::Environment;
use super::optim::Optimizer;
use super::policy::Policy;
use super::rollout::{iteration_seed, rollout, Trajectory};
use super::surrogate::surrogate_loss;
use super::{BetaMode, TpoError, TrainConfig};

/// Per-iteration training record.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog<T> {
    pub iteration: usize,
    /// Surrogate loss of the last PPO epoch.
    pub loss: T,
    pub entropy: T,
    pub clip_fraction: T,
    /// Mean discounted return of the objective being trained.
    pub mean_return: T,
    pub mean_penalty: T,
    pub beta: T,
    pub critic_loss: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLog<T> {
    pub objective: usize,
    pub iterations: Vec<IterationLog<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput<T> {
    pub policy: Policy<T>,
    pub critics: CriticSet<T>,
    /// One phase per objective, in training order.
    pub phases: Vec<PhaseLog<T>>,
}

/// Called after every iteration with `(objective, iteration, policy)`.
pub type Observer<'a, T> = dyn FnMut(usize, usize, &Policy<T>) + 'a;

/// Topological policy optimization.
///
/// Objectives are trained in topological order. Each phase runs PPO on the
/// objective's Lagrangian advantages, whose penalties come from the critics of
/// the objectives already trained, then adds the objective's own critic to the
/// set. The policy carries over between phases; the returned policy has been
/// trained through the leaf.
pub fn tpo_train<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    dag: &ObjectiveDag<T>,
    config: &TrainConfig<T>,
    policy: Policy<T>,
) -> Result<TrainOutput<T>, TpoError> {
    tpo_train_observed(env, dag, config, policy, &mut |_, _, _| {})
}

pub fn tpo_train_observed<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    dag: &ObjectiveDag<T>,
    config: &TrainConfig<T>,
    mut policy: Policy<T>,
    observer: &mut Observer<'_, T>,
) -> Result<TrainOutput<T>, TpoError> {
    config.validate()?;
    if env.n_objectives() != dag.k() {
        return Err(TpoError::Config(format!("environment has {} reward channels, dag has {} objectives", env.n_objectives(), dag.k())));
    }
    let eta = match &config.eta {
        Some(eta) => eta.clone(),
        None => dag.local_slacks(config.gamma),
    };
    if eta.len() != dag.edges().len() {
        return Err(TpoError::Config(format!("{} local slacks for {} edges", eta.len(), dag.edges().len())));
    }
    let beta0 = initial_beta(env, &policy, config);
    let mut critics = CriticSet::new();
    let mut phases = Vec::new();
    for (phase, &i) in dag.topological_order().iter().enumerate() {
        let (critic, log) = train_objective(env, dag, i, &eta, config, &mut policy, &critics, phase, beta0, observer)?;
        critics.insert(critic);
        phases.push(log);
    }
    Ok(TrainOutput { policy, critics, phases })
}

/// `β` for [`BetaMode::Fixed`] and [`BetaMode::AutoScale`]; the latter scales
/// the largest mean `|r_i|` over channels in the run's first batch (the
/// one-step advantage under zero-initialized critics).
fn initial_beta<T: Scalar, E: Environment<T> + ?Sized>(env: &E, policy: &Policy<T>, config: &TrainConfig<T>) -> T {
    match config.beta {
        BetaMode::Fixed(b) => b,
        BetaMode::PerBatch { .. } => T::zero(),
        BetaMode::AutoScale { factor } => {
            let batch = rollout(env, policy, config.batch_episodes, config.horizon, iteration_seed(config.seed, 0, 0));
            let n = batch.iter().map(Trajectory::len).sum::<usize>();
            if n == 0 {
                return factor;
            }
            let scale = (1..=env.n_objectives())
                .map(|i| batch.iter().flat_map(|t| &t.steps).map(|s| s.reward_of(i).abs()).sum::<T>() / cast(n as f64))
                .fold(T::zero(), T::max);
            if scale > T::zero() {
                factor * scale
            } else {
                factor
            }
        }
    }
}

/// Per-batch multiplier: the largest observed ratio of objective `i`'s TD
/// advantage to the constraint excess, plus `margin`.
fn per_batch_beta<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    batch: &[Trajectory<T>],
    i: usize,
    critic: &Critic<T>,
    ctx: &PenaltyContext<'_, T>,
    margin: T,
) -> Result<T, TpoError> {
    let mut best = T::zero();
    for traj in batch {
        for step in &traj.steps {
            let c = constraint_sum(env, step, i, ctx)?;
            if c > T::zero() {
                let gain = ancestral_advantage(env, step, critic, ctx.gamma);
                best = best.max(gain / c);
            }
        }
    }
    Ok(best + margin)
}

/// One phase of [`tpo_train`]: PPO on objective `i` with penalties from
/// `critics`. Returns the fitted critic of `i`.
#[allow(clippy::too_many_arguments)]
pub fn train_objective<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    dag: &ObjectiveDag<T>,
    i: usize,
    eta: &LocalSlacks<T>,
    config: &TrainConfig<T>,
    policy: &mut Policy<T>,
    critics: &CriticSet<T>,
    phase: usize,
    beta0: T,
    observer: &mut Observer<'_, T>,
) -> Result<(Critic<T>, PhaseLog<T>), TpoError> {
    for e in dag.ancestral_edges(i)? {
        critics.require(i, e.parent)?;
    }
    let critic_kind = config.critic_kind.unwrap_or(policy.kind());
    let mut critic = Critic::new(i, critic_kind);
    let mut opt = Optimizer::new(config.optimizer, config.policy_lr, policy.n_params());
    let iterations = config.iterations_for(i);
    let mut log = PhaseLog { objective: i, iterations: Vec::with_capacity(iterations) };
    for it in 0..iterations {
        let batch = rollout(env, policy, config.batch_episodes, config.horizon, iteration_seed(config.seed, phase as u64 + 1, it as u64));
        let mut ctx = PenaltyContext { dag, critics, eta, beta: beta0, gamma: config.gamma, timing: config.penalty_timing };
        if let BetaMode::PerBatch { margin } = config.beta {
            ctx.beta = per_batch_beta(env, &batch, i, &critic, &ctx, margin)?;
        }
        let mut advantages = batch.iter().map(|t| glae(env, t, i, &critic, &ctx, config.lambda)).collect::<Result<Vec<_>, _>>()?;
        if config.normalize_advantages {
            normalize(&mut advantages);
        }
        let mut last = None;
        for _ in 0..config.ppo_epochs {
            let out = surrogate_loss(env, &batch, &advantages, policy, config.clip_eps, config.entropy_coef);
            if !out.loss.is_finite() || out.gradient.iter().any(|g| !g.is_finite()) {
                return Err(TpoError::NonFiniteLoss {
                    objective: i,
                    iteration: it,
                    detail: format!("loss {}, entropy {}, beta {}", out.loss, out.entropy, ctx.beta),
                });
            }
            opt.step(policy.params_mut(), &out.gradient);
            last = Some(out);
        }
        critic = fit_critic(env, &batch, i, critic, config.gamma, config.critic_lr, config.critic_epochs);
        let n: T = cast(batch.len().max(1) as f64);
        let mean_return = batch.iter().map(|t| t.discounted_return(i, config.gamma)).sum::<T>() / n;
        let steps = batch.iter().map(Trajectory::len).sum::<usize>().max(1);
        let mean_penalty = if dag.ancestral_edge_ids(i)?.is_empty() {
            T::zero()
        } else {
            let mut total = T::zero();
            for t in &batch {
                for s in &t.steps {
                    total += ctx.beta * constraint_sum(env, s, i, &ctx)?;
                }
            }
            total / cast(steps as f64)
        };
        let (loss, entropy, clip_fraction) = last.map_or((T::zero(), T::zero(), T::zero()), |o| (o.loss, o.entropy, o.clip_fraction));
        log.iterations.push(IterationLog {
            iteration: it,
            loss,
            entropy,
            clip_fraction,
            mean_return,
            mean_penalty,
            beta: ctx.beta,
            critic_loss: critic.loss,
        });
        observer(i, it, policy);
    }
    Ok((critic, log))
}

fn normalize<T: Scalar>(advantages: &mut [Vec<T>]) {
    let n = advantages.iter().map(Vec::len).sum::<usize>();
    if n < 2 {
        return;
    }
    let nt: T = cast(n as f64);
    let mean = advantages.iter().flatten().copied().sum::<T>() / nt;
    let var = advantages.iter().flatten().map(|&a| (a - mean) * (a - mean)).sum::<T>() / nt;
    let sd = var.sqrt().max(cast(1e-8));
    for a in advantages.iter_mut().flatten() {
        *a = (*a - mean) / sd;
    }
}
