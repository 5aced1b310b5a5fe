//! Advantage estimates: plain GAE and its Lagrangian variant with
//! ancestral penalties.

use serde::{Deserialize, Serialize};

use crate::dag::{LocalSlacks, ObjectiveDag};
use crate::scalar::Scalar;

use super::critic::{Critic, CriticSet};
use super::env::Environment;
use super::rollout::{Step, Trajectory};
use super::TpoError;

/// One-step TD advantage of the critic's objective:
/// `Â_w = r_w + γ V̂_w(s′) − V̂_w(s)`, bootstrapping `0` after a terminal step.
pub fn ancestral_advantage<T: Scalar, E: Environment<T> + ?Sized>(env: &E, step: &Step<T>, critic: &Critic<T>, gamma: T) -> T {
    let next = if step.done { T::zero() } else { critic.value(env.obs(step.next_state)) };
    step.reward_of(critic.objective) + gamma * next - critic.value(env.obs(step.state))
}

/// Which step's penalty enters the TD error of step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyTiming {
    /// `− γ p^{t+1}`: the successor step's penalty.
    #[default]
    Successor,
    /// `− p^t`: the step's own penalty, as if it were subtracted from the
    /// reward.
    Current,
}

/// What [`constraint_penalty`] needs besides the step.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyContext<'a, T> {
    pub dag: &'a ObjectiveDag<T>,
    pub critics: &'a CriticSet<T>,
    pub eta: &'a LocalSlacks<T>,
    pub beta: T,
    pub gamma: T,
    pub timing: PenaltyTiming,
}

/// `Σ_{(w,v) ∈ E_i} β · max{0, −Â_w − η_wv}`; zero for roots.
pub fn constraint_penalty<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    step: &Step<T>,
    i: usize,
    ctx: &PenaltyContext<'_, T>,
) -> Result<T, TpoError> {
    Ok(ctx.beta * constraint_sum(env, step, i, ctx)?)
}

/// `Σ_{(w,v) ∈ E_i} max{0, −Â_w − η_wv}` (the penalty before `β`).
pub fn constraint_sum<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    step: &Step<T>,
    i: usize,
    ctx: &PenaltyContext<'_, T>,
) -> Result<T, TpoError> {
    let ids = ctx.dag.ancestral_edge_ids(i)?;
    let mut total = T::zero();
    for &e in ids {
        let edge = &ctx.dag.edges()[e];
        let critic = ctx.critics.require(i, edge.parent)?;
        let adv = ancestral_advantage(env, step, critic, ctx.gamma);
        let excess = -adv - ctx.eta.get(e);
        if excess > T::zero() {
            total += excess;
        }
    }
    Ok(total)
}

/// Critic values `(V̂(s_t), V̂(s_{t+1}))` along a trajectory, with the
/// successor value `0` after a terminal step.
pub fn critic_values<T: Scalar, E: Environment<T> + ?Sized>(env: &E, traj: &Trajectory<T>, critic: &Critic<T>) -> (Vec<T>, Vec<T>) {
    let v = traj.steps.iter().map(|s| critic.value(env.obs(s.state))).collect();
    let v_next = traj
        .steps
        .iter()
        .map(|s| if s.done { T::zero() } else { critic.value(env.obs(s.next_state)) })
        .collect();
    (v, v_next)
}

/// Generalized advantage estimation:
/// `Â^t = Σ_{k≥t} (γλ)^{k−t} (r^k + γ V(s^{k+1}) − V(s^k))`.
pub fn gae<T: Scalar>(rewards: &[T], values: &[T], next_values: &[T], gamma: T, lambda: T) -> Vec<T> {
    let n = rewards.len();
    let gl = gamma * lambda;
    let mut adv = vec![T::zero(); n];
    let mut running = T::zero();
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        running = delta + gl * running;
        adv[t] = running;
    }
    adv
}

/// Lagrangian advantage estimation:
/// `Â^t = Σ_{k≥t} (γλ)^{k−t} (r^k + γ V(s^{k+1}) − V(s^k) − γ p^{k+1})`,
/// where `p^{k+1}` is the penalty of the next step in the trajectory (zero
/// past its end). One backward pass.
///
/// With all penalties zero this performs exactly the arithmetic of [`gae`].
pub fn glae_from_penalties<T: Scalar>(
    rewards: &[T],
    values: &[T],
    next_values: &[T],
    penalties: &[T],
    gamma: T,
    lambda: T,
) -> Vec<T> {
    let n = rewards.len();
    let gl = gamma * lambda;
    let mut adv = vec![T::zero(); n];
    let mut running = T::zero();
    for t in (0..n).rev() {
        let mut delta = rewards[t] + gamma * next_values[t] - values[t];
        if let Some(&p) = penalties.get(t + 1) {
            if p != T::zero() {
                delta -= gamma * p;
            }
        }
        running = delta + gl * running;
        adv[t] = running;
    }
    adv
}

/// Like [`glae_from_penalties`] but each step pays its own penalty:
/// `Â^t = Σ_{k≥t} (γλ)^{k−t} (r^k − p^k + γ V(s^{k+1}) − V(s^k))`.
pub fn glae_current_penalties<T: Scalar>(
    rewards: &[T],
    values: &[T],
    next_values: &[T],
    penalties: &[T],
    gamma: T,
    lambda: T,
) -> Vec<T> {
    let n = rewards.len();
    let gl = gamma * lambda;
    let mut adv = vec![T::zero(); n];
    let mut running = T::zero();
    for t in (0..n).rev() {
        let mut delta = rewards[t] + gamma * next_values[t] - values[t];
        if penalties[t] != T::zero() {
            delta -= penalties[t];
        }
        running = delta + gl * running;
        adv[t] = running;
    }
    adv
}

/// GLAE for objective `i` over one trajectory, using `critic` for `V̂_i` and
/// `ctx.critics` for the ancestors.
pub fn glae<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    traj: &Trajectory<T>,
    i: usize,
    critic: &Critic<T>,
    ctx: &PenaltyContext<'_, T>,
    lambda: T,
) -> Result<Vec<T>, TpoError> {
    let rewards: Vec<T> = traj.steps.iter().map(|s| s.reward_of(i)).collect();
    let (v, v_next) = critic_values(env, traj, critic);
    let penalties = trajectory_penalties(env, traj, i, ctx)?;
    Ok(match ctx.timing {
        PenaltyTiming::Successor => glae_from_penalties(&rewards, &v, &v_next, &penalties, ctx.gamma, lambda),
        PenaltyTiming::Current => glae_current_penalties(&rewards, &v, &v_next, &penalties, ctx.gamma, lambda),
    })
}

/// Penalty of every step of `traj` for objective `i`.
pub fn trajectory_penalties<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    traj: &Trajectory<T>,
    i: usize,
    ctx: &PenaltyContext<'_, T>,
) -> Result<Vec<T>, TpoError> {
    if ctx.dag.ancestral_edge_ids(i)?.is_empty() || ctx.beta == T::zero() {
        return Ok(vec![T::zero(); traj.len()]);
    }
    traj.steps.iter().map(|s| constraint_penalty(env, s, i, ctx)).collect()
}
