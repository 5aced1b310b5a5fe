use crate::scalar::{cast, Scalar};

use super::env::Environment;
use super::policy::{entropy, log_sum_exp, softmax_in_place, Policy};
use super::rollout::Trajectory;

/// Which policy objective to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateForm {
    /// `min(ρ Â, clip(ρ, 1−ε, 1+ε) Â)` with `ρ = π_θ / π_old`.
    Clipped,
    /// `log π_θ(a|s) · Â`.
    LogProb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateOutput<T> {
    /// Negated objective (mean over steps), suitable for minimization.
    pub loss: T,
    /// `∂loss/∂θ`.
    pub gradient: Vec<T>,
    /// Mean policy entropy over the batch.
    pub entropy: T,
    /// Fraction of steps whose ratio term was clipped.
    pub clip_fraction: T,
}

/// Clipped surrogate plus entropy bonus over a batch, with analytic gradient.
///
/// `advantages[j][t]` belongs to step `t` of trajectory `j`; the old policy's
/// log-probabilities are the ones recorded at rollout time.
pub fn surrogate_loss<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    batch: &[Trajectory<T>],
    advantages: &[Vec<T>],
    policy: &Policy<T>,
    clip_eps: T,
    entropy_coef: T,
) -> SurrogateOutput<T> {
    surrogate(env, batch, advantages, policy, clip_eps, entropy_coef, SurrogateForm::Clipped)
}

/// Shared implementation of both surrogate forms.
pub fn surrogate<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    batch: &[Trajectory<T>],
    advantages: &[Vec<T>],
    policy: &Policy<T>,
    clip_eps: T,
    entropy_coef: T,
    form: SurrogateForm,
) -> SurrogateOutput<T> {
    assert_eq!(batch.len(), advantages.len(), "one advantage vector per trajectory");
    let na = policy.n_actions();
    let mut gradient = vec![T::zero(); policy.n_params()];
    let mut objective = T::zero();
    let mut total_entropy = T::zero();
    let mut clipped = 0usize;
    let mut n = 0usize;
    let mut z = vec![T::zero(); na];
    let mut d = vec![T::zero(); na];
    let (lo, hi) = (T::one() - clip_eps, T::one() + clip_eps);
    for (traj, adv) in batch.iter().zip(advantages) {
        assert_eq!(traj.len(), adv.len(), "advantages must align with steps");
        for (step, &a_hat) in traj.steps.iter().zip(adv) {
            n += 1;
            let obs = env.obs(step.state);
            policy.approximator().forward_into(obs, &mut z);
            let log_pi = z[step.action] - log_sum_exp(&z);
            softmax_in_place(&mut z);
            let p = &z;
            let h = entropy(p);
            total_entropy += h;

            // d(term)/d(log π(a|s)), applied through e_a − p
            let weight = match form {
                SurrogateForm::LogProb => {
                    objective += log_pi * a_hat;
                    a_hat
                }
                SurrogateForm::Clipped => {
                    let ratio = (log_pi - step.log_prob).exp();
                    let unclipped = ratio * a_hat;
                    let clipped_term = ratio.max(lo).min(hi) * a_hat;
                    if unclipped <= clipped_term {
                        objective += unclipped;
                        unclipped
                    } else {
                        objective += clipped_term;
                        clipped += 1;
                        T::zero()
                    }
                }
            };
            objective += entropy_coef * h;
            for b in 0..na {
                let indicator = if b == step.action { T::one() } else { T::zero() };
                // entropy: ∂H/∂z_b = −p_b (log p_b + H)
                let d_ent = if p[b] > T::zero() { -p[b] * (p[b].ln() + h) } else { T::zero() };
                d[b] = weight * (indicator - p[b]) + entropy_coef * d_ent;
            }
            policy.backward_logits(obs, &d, &mut gradient);
        }
    }
    if n == 0 {
        return SurrogateOutput { loss: T::zero(), gradient, entropy: T::zero(), clip_fraction: T::zero() };
    }
    let inv_n = T::one() / cast::<T>(n as f64);
    for g in gradient.iter_mut() {
        *g = -*g * inv_n;
    }
    SurrogateOutput {
        loss: -objective * inv_n,
        gradient,
        entropy: total_entropy * inv_n,
        clip_fraction: cast::<T>(clipped as f64) * inv_n,
    }
}
