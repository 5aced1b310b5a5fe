use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::{cast, to_f64, Scalar};

use super::advantage::{trajectory_penalties, PenaltyContext};
use super::env::Environment;
use super::policy::Policy;
use super::rollout::Trajectory;
use super::surrogate::{surrogate, SurrogateForm};
use super::TpoError;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub form: SurrogateForm,
    pub directions: usize,
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|)` over the
    /// directions whose derivative is not negligible.
    pub max_rel_error: f64,
    /// Largest absolute error over all directions.
    pub max_abs_error: f64,
    /// Penalties recomputed after perturbing `θ` matched bit for bit.
    pub penalties_invariant: bool,
}

impl GradientReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_error < rel_tol && self.penalties_invariant
    }
}

/// Settings for [`gradient_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub directions: usize,
    /// Central-difference step along each unit direction.
    pub step: f64,
    /// Size of the `θ` perturbation used for the penalty check.
    pub perturbation: f64,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { directions: 64, step: 1e-5, perturbation: 1e-3, clip_eps: 0.2, entropy_coef: 0.01, seed: 0 }
    }
}

/// Compares the analytic surrogate gradient with central differences along
/// random unit directions, and checks that the ancestral penalties computed
/// from frozen critics do not move when `θ` does.
pub fn gradient_check<T: Scalar, E: Environment<T> + ?Sized>(
    env: &E,
    policy: &Policy<T>,
    batch: &[Trajectory<T>],
    advantages: &[Vec<T>],
    penalty: Option<(usize, &PenaltyContext<'_, T>)>,
    form: SurrogateForm,
    cfg: &GradCheckConfig,
) -> Result<GradientReport, TpoError> {
    let (clip, ent): (T, T) = (cast(cfg.clip_eps), cast(cfg.entropy_coef));
    let eval = |p: &Policy<T>| surrogate(env, batch, advantages, p, clip, ent, form);
    let analytic = eval(policy).gradient;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    let h: T = cast(cfg.step);
    for _ in 0..cfg.directions {
        let dir = unit_direction::<T>(policy.n_params(), &mut rng);
        let shifted = |sign: T| {
            let mut p = policy.clone();
            for (x, &d) in p.params_mut().iter_mut().zip(&dir) {
                *x += sign * h * d;
            }
            eval(&p).loss
        };
        let numeric = to_f64((shifted(T::one()) - shifted(-T::one())) / (h + h));
        let exact = to_f64(analytic.iter().zip(&dir).fold(T::zero(), |acc, (&g, &d)| acc + g * d));
        let abs = (exact - numeric).abs();
        max_abs = max_abs.max(abs);
        let scale = exact.abs().max(numeric.abs());
        // derivatives at roundoff level carry no relative information
        if scale > 1e-7 {
            max_rel = max_rel.max(abs / scale);
        }
    }
    let penalties_invariant = match penalty {
        None => true,
        Some((i, ctx)) => {
            let before = batch.iter().map(|t| trajectory_penalties(env, t, i, ctx)).collect::<Result<Vec<_>, _>>()?;
            let mut moved = policy.clone();
            for x in moved.params_mut() {
                *x += cast(rng.gen_range(-cfg.perturbation..=cfg.perturbation));
            }
            // penalties read only the batch and the frozen critics, so the
            // recomputation next to the moved policy must not change a bit
            let after = batch.iter().map(|t| trajectory_penalties(env, t, i, ctx)).collect::<Result<Vec<_>, _>>()?;
            before.iter().flatten().zip(after.iter().flatten()).all(|(a, b)| to_f64(*a).to_bits() == to_f64(*b).to_bits())
        }
    };
    Ok(GradientReport { form, directions: cfg.directions, max_rel_error: max_rel, max_abs_error: max_abs, penalties_invariant })
}

fn unit_direction<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    v.into_iter().map(|x| cast(x / norm)).collect()
}
