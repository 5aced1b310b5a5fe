//! Topological policy optimization.
//!
//! Objectives are trained one at a time in topological order with PPO. The
//! advantage of objective `i` is the Lagrangian estimate
//!
//! ```text
//! Â_i^t = Σ_{k≥t} (γλ)^{k−t} [ r_i^k + γ V̂_i(s^{k+1}) − V̂_i(s^k) − γ p^{k+1} ]
//! p     = β Σ_{(w,v) ∈ E_i} max{0, −Â_w − η_wv}
//! ```
//!
//! where `Â_w` is the one-step TD advantage of ancestor `w`'s learned critic.
//! After a phase the objective's critic joins the [`CriticSet`] consumed by
//! its descendants.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dag::{DagError, LocalSlacks};
use crate::scalar::{cast, to_f64, Scalar};

mod advantage;
mod approx;
pub mod checkpoint;
mod critic;
mod env;
mod gradcheck;
mod optim;
mod policy;
mod rollout;
mod surrogate;
mod train;

pub use advantage::{
    ancestral_advantage, constraint_penalty, constraint_sum, critic_values, gae, glae, glae_current_penalties,
    glae_from_penalties, trajectory_penalties, PenaltyContext, PenaltyTiming,
};
pub use approx::{ApproxKind, Approximator, Obs};
pub use checkpoint::{Checkpoint, CheckpointError};
pub use critic::{fit_critic, return_targets, Critic, CriticSet};
pub use env::{one_hot_features, EnvStep, Environment, TabularEnv};
pub use gradcheck::{gradient_check, GradCheckConfig, GradientReport};
pub use optim::{Optimizer, OptimizerKind};
pub use policy::Policy;
pub use rollout::{iteration_seed, rollout, rollout_episode, Step, Trajectory};
pub use surrogate::{surrogate, surrogate_loss, SurrogateForm, SurrogateOutput};
pub use train::{tpo_train, tpo_train_observed, train_objective, IterationLog, Observer, PhaseLog, TrainOutput};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TpoError {
    #[error("objective {objective} needs the critic of ancestor {ancestor}, which has not been trained")]
    MissingCritic { objective: usize, ancestor: usize },
    #[error("non-finite surrogate loss for objective {objective} at iteration {iteration}: {detail}")]
    NonFiniteLoss { objective: usize, iteration: usize, detail: String },
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error("invalid training config: {0}")]
    Config(String),
}

/// How the penalty multiplier `β` is chosen during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaMode<T> {
    Fixed(T),
    /// `factor` times the largest mean `|r_i|` over channels in the run's
    /// first batch, then held fixed.
    AutoScale { factor: T },
    /// Every batch: the largest sampled ratio of the objective's TD advantage
    /// to its constraint excess, plus `margin`.
    PerBatch { margin: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub gamma: T,
    /// GAE decay.
    pub lambda: T,
    pub clip_eps: T,
    pub entropy_coef: T,
    pub policy_lr: T,
    pub critic_lr: T,
    /// PPO iterations (rollout plus update) per objective.
    pub iterations: usize,
    /// Per-objective overrides of `iterations`.
    pub iterations_override: BTreeMap<usize, usize>,
    pub batch_episodes: usize,
    pub horizon: usize,
    /// Surrogate gradient steps per batch.
    pub ppo_epochs: usize,
    /// Passes over the batch when fitting a critic.
    pub critic_epochs: usize,
    pub beta: BetaMode<T>,
    /// Local slacks; derived from the DAG's `δ` when `None`.
    pub eta: Option<LocalSlacks<T>>,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub normalize_advantages: bool,
    pub penalty_timing: PenaltyTiming,
    /// Critic parameterization; the policy's when `None`.
    pub critic_kind: Option<ApproxKind>,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            gamma: cast(0.99),
            lambda: cast(0.95),
            clip_eps: cast(0.2),
            entropy_coef: cast(0.01),
            policy_lr: cast(0.1),
            critic_lr: cast(0.1),
            iterations: 20_000,
            iterations_override: BTreeMap::new(),
            batch_episodes: 4,
            horizon: 200,
            ppo_epochs: 4,
            critic_epochs: 1,
            beta: BetaMode::AutoScale { factor: cast(10.0) },
            eta: None,
            seed: 0,
            optimizer: OptimizerKind::Sgd,
            normalize_advantages: false,
            penalty_timing: PenaltyTiming::Successor,
            critic_kind: None,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<(), TpoError> {
        let bad = |m: String| Err(TpoError::Config(m));
        if !(self.gamma >= T::zero() && self.gamma < T::one()) {
            return bad(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if !(self.lambda >= T::zero() && self.lambda <= T::one()) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(self.clip_eps > T::zero()) {
            return bad(format!("clip epsilon {} must be positive", self.clip_eps));
        }
        if self.batch_episodes == 0 || self.horizon == 0 {
            return bad("batch_episodes and horizon must be positive".into());
        }
        if !(self.policy_lr > T::zero()) || !(self.critic_lr >= T::zero()) {
            return bad("learning rates must be positive".into());
        }
        let b = match self.beta {
            BetaMode::Fixed(b) => b,
            BetaMode::AutoScale { factor } => factor,
            BetaMode::PerBatch { margin } => margin,
        };
        if !(b >= T::zero() && b.is_finite()) {
            return bad(format!("beta setting {b} must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn iterations_for(&self, objective: usize) -> usize {
        self.iterations_override.get(&objective).copied().unwrap_or(self.iterations)
    }

    /// SHA-256 over every field, used to tie checkpoints to their config.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        let real = |h: &mut Sha256, x: T| h.update(to_f64(x).to_bits().to_le_bytes());
        for x in [self.gamma, self.lambda, self.clip_eps, self.entropy_coef, self.policy_lr, self.critic_lr] {
            real(&mut h, x);
        }
        for n in [self.iterations, self.batch_episodes, self.horizon, self.ppo_epochs, self.critic_epochs] {
            h.update((n as u64).to_le_bytes());
        }
        for (&i, &n) in &self.iterations_override {
            h.update((i as u64).to_le_bytes());
            h.update((n as u64).to_le_bytes());
        }
        let (tag, b) = match self.beta {
            BetaMode::Fixed(b) => (0u8, b),
            BetaMode::AutoScale { factor } => (1, factor),
            BetaMode::PerBatch { margin } => (2, margin),
        };
        h.update([tag]);
        real(&mut h, b);
        match &self.eta {
            None => h.update([0u8]),
            Some(eta) => {
                h.update([1u8]);
                for &e in eta.values() {
                    real(&mut h, e);
                }
            }
        }
        h.update(self.seed.to_le_bytes());
        h.update(format!("{:?}|{}|{:?}|{:?}", self.optimizer, self.normalize_advantages, self.penalty_timing, self.critic_kind).as_bytes());
        h.finalize().into()
    }
}
