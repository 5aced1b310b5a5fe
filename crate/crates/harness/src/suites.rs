//! Property suites over seeded random instances, shared by the `check`
//! command and the acceptance test.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tmdp::navenv::{load_map, Channel, NavEnv};
use tmdp::tabular::random::{random_feasible_instance, InstanceParams, RandomInstance};
use tmdp::tabular::{
    brute_force_oracle, lagrangian_value_iteration, lagrangian_value_iteration_with, naive_lagrangian_value_iteration,
    solve_lar, BetaRule, SolveError, SolverConfig, TabularSolution, DEFAULT_BETA_MARGIN,
};
use tmdp::tpo::{
    critic_values, gae, glae, gradient_check, rollout, surrogate_loss, ApproxKind, Approximator, Critic, CriticSet,
    GradCheckConfig, GradientReport, PenaltyContext, PenaltyTiming, Policy, SurrogateForm,
};
use tmdp::{LocalSlacks, ObjectiveDag};

use crate::HarnessError;

/// One named pass/fail result.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckLine {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn solver() -> SolverConfig<f64> {
    SolverConfig::default()
}

/// Seed of instance `j` in a suite seeded with `seed`.
fn instance_seed(seed: u64, j: usize) -> u64 {
    tmdp::tpo::iteration_seed(seed, 0x5eed, j as u64)
}

/// The feasible random instances of a suite, in index order.
pub fn instances(seed: u64, n: usize, params: &InstanceParams) -> Result<Vec<RandomInstance<f64>>, HarnessError> {
    (0..n)
        .into_par_iter()
        .map(|j| random_feasible_instance(instance_seed(seed, j), params, None, &solver()).map_err(HarnessError::from))
        .collect()
}

/// Greedy action of `sol` has zero transformed-constraint sum at every state,
/// for every objective.
pub fn greedy_is_constraint_free(sol: &TabularSolution<f64>) -> bool {
    sol.objectives().values().all(|o| o.policy.iter().enumerate().all(|(s, &a)| o.constraint_sum[s][a] == 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub instances: usize,
    /// Largest `|V_lagrangian − V_lar|` over instances, objectives and states.
    pub max_gap: f64,
    /// Instances whose Lagrangian greedy action violates a constraint.
    pub bound_violations: usize,
    /// Instances with an empty restricted action set somewhere.
    pub empty_sets: usize,
    /// Slack redraws needed to make fan and diamond instances feasible.
    pub redraws: usize,
    /// First instance seed where `β = 0` picks a violating action.
    pub zero_beta_witness: Option<u64>,
    pub seconds: f64,
}

struct InstanceOutcome {
    gap: f64,
    bound_ok: bool,
    sets_ok: bool,
    zero_beta_violates: bool,
}

fn equivalence_one(inst: &RandomInstance<f64>) -> Result<InstanceOutcome, HarnessError> {
    let cfg = solver();
    let lar = solve_lar(&inst.spec, &inst.eta, &cfg)?;
    let lag = lagrangian_value_iteration(&inst.spec, &inst.eta, DEFAULT_BETA_MARGIN, &cfg)?;
    // with a zero multiplier the ancestors are solved unconstrained, which can
    // leave a fan node without feasible actions; such an instance is no witness
    let zero_beta_violates = match lagrangian_value_iteration_with(&inst.spec, &inst.eta, BetaRule::Fixed(0.0), &cfg) {
        Ok(free) => !greedy_is_constraint_free(&free),
        Err(SolveError::Infeasible { .. }) => false,
        Err(e) => return Err(e.into()),
    };
    Ok(InstanceOutcome {
        gap: lar.max_value_gap(&lag),
        bound_ok: greedy_is_constraint_free(&lag),
        sets_ok: lar.objectives().values().all(|o| o.allowed.iter().all(|a| !a.is_empty())),
        zero_beta_violates,
    })
}

/// LAR against the Lagrangian solver (with the multiplier bound) on `n`
/// random instances; also checks the bound, nonempty action sets and looks
/// for an instance where a zero multiplier breaks a constraint.
pub fn equivalence_suite(seed: u64, n: usize) -> Result<EquivalenceReport, HarnessError> {
    let started = Instant::now();
    let insts = instances(seed, n, &InstanceParams::default())?;
    let outcomes = insts.par_iter().map(equivalence_one).collect::<Result<Vec<_>, _>>()?;
    Ok(EquivalenceReport {
        instances: n,
        max_gap: outcomes.iter().map(|o| o.gap).fold(0.0, f64::max),
        bound_violations: outcomes.iter().filter(|o| !o.bound_ok).count(),
        empty_sets: outcomes.iter().filter(|o| !o.sets_ok).count(),
        redraws: insts.iter().map(|i| i.redraws).sum(),
        zero_beta_witness: insts.iter().zip(&outcomes).find(|(_, o)| o.zero_beta_violates).map(|(i, _)| i.seed),
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// An ancestor action at some state loses value but stays strictly inside the
/// edge's slack.
fn has_strictly_feasible_suboptimal_action(inst: &RandomInstance<f64>, lar: &TabularSolution<f64>) -> bool {
    let spec = &inst.spec;
    spec.dag().edges().iter().enumerate().any(|(e, edge)| {
        let w = lar.objective(edge.parent);
        (0..spec.n_states()).any(|s| {
            (0..spec.n_actions()).any(|a| {
                let loss = w.advantage_loss(s, a);
                loss > 1e-9 && loss < inst.eta.get(e) - 1e-9
            })
        })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveWitness {
    pub seed: u64,
    /// Largest `|V_naive − V_lar|`.
    pub gap: f64,
}

/// First instance (of `n`) with a strictly feasible suboptimal action on
/// which the untransformed Lagrangian (multiplier `beta`) moves some value by
/// more than `threshold`.
pub fn naive_distortion_witness(seed: u64, n: usize, beta: f64, threshold: f64) -> Result<Option<NaiveWitness>, HarnessError> {
    let cfg = solver();
    for inst in instances(seed, n, &InstanceParams::default())? {
        let lar = solve_lar(&inst.spec, &inst.eta, &cfg)?;
        if !has_strictly_feasible_suboptimal_action(&inst, &lar) {
            continue;
        }
        let naive = naive_lagrangian_value_iteration(&inst.spec, &inst.eta, beta, &cfg)?;
        let gap = lar.max_value_gap(&naive);
        if gap > threshold {
            return Ok(Some(NaiveWitness { seed: inst.seed, gap }));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub instances: usize,
    /// Largest `|leaf_lar − leaf_oracle|`.
    pub max_gap: f64,
    /// Most policies enumerated for one instance.
    pub max_policies: usize,
}

/// LAR leaf values against exhaustive enumeration on `n` small instances.
pub fn oracle_suite(seed: u64, n: usize) -> Result<OracleReport, HarnessError> {
    let insts = instances(seed ^ 0x0dac1e, n, &InstanceParams::oracle_sized())?;
    let rows = insts
        .par_iter()
        .map(|inst| -> Result<(f64, usize), HarnessError> {
            let lar = solve_lar(&inst.spec, &inst.eta, &solver())?;
            let oracle = brute_force_oracle(&inst.spec, &inst.eta, &solver())?;
            Ok(((lar.leaf_value() - oracle.leaf_value).abs(), oracle.evaluated))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OracleReport {
        instances: n,
        max_gap: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        max_policies: rows.iter().map(|r| r.1).max().unwrap_or(0),
    })
}

const GRAD_MAP: &str = "rows 3\ncols 4\nS...\n.#..\n...G\n";

fn grad_env() -> NavEnv<f64> {
    NavEnv::new(load_map(GRAD_MAP).expect("fixed map"), vec![Channel::Monitor, Channel::Goal])
}

fn tabular_critic(objective: usize, values: Vec<f64>) -> Critic<f64> {
    let n = values.len();
    let approx = Approximator::from_params(ApproxKind::Tabular { n_states: n }, 1, values).expect("one value per state");
    Critic { objective, approx, loss: 0.0, samples: 0 }
}

/// Policy parameterizations exercised by the gradient suite.
pub fn gradient_kinds(n_states: usize) -> [ApproxKind; 3] {
    [ApproxKind::Tabular { n_states }, ApproxKind::Linear { n_features: n_states }, ApproxKind::Mlp { n_features: n_states, hidden: 8 }]
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCase {
    pub kind: ApproxKind,
    pub report: GradientReport,
    /// Fraction of samples outside the clip range at the checked `θ`.
    pub clip_fraction: f64,
}

/// Finite-difference checks of the surrogate gradient for every policy
/// parameterization and surrogate form, on a batch whose ratios leave the
/// clip range, with ancestral penalties from a frozen critic.
pub fn gradient_suite(seed: u64, directions: usize) -> Result<Vec<GradientCase>, HarnessError> {
    let env = grad_env();
    let n = env.map().n_free();
    let dag = ObjectiveDag::new(2, [(1, 2, 0.0)]).expect("pair");
    let eta = LocalSlacks::uniform(&dag, 0.1);
    let mut critics = CriticSet::new();
    critics.insert(tabular_critic(1, (0..n).map(|s| (s as f64).cos()).collect()));
    let ctx = PenaltyContext { dag: &dag, critics: &critics, eta: &eta, beta: 5.0, gamma: 0.9, timing: PenaltyTiming::Successor };
    let leaf_critic = tabular_critic(2, (0..n).map(|s| -(s as f64) * 0.5).collect());
    let mut cases = Vec::new();
    for (j, kind) in gradient_kinds(n).into_iter().enumerate() {
        let case_seed = seed.wrapping_add(j as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(case_seed);
        let mut policy = Policy::new(kind, 4, 1.0, &mut rng);
        let batch = rollout(&env, &policy, 6, 20, case_seed);
        let adv = batch.iter().map(|t| glae(&env, t, 2, &leaf_critic, &ctx, 0.95)).collect::<Result<Vec<_>, _>>()?;
        for p in policy.params_mut() {
            *p += rng.gen_range(-0.6..0.6);
        }
        let clip_fraction = surrogate_loss(&env, &batch, &adv, &policy, 0.2, 0.01).clip_fraction;
        for form in [SurrogateForm::Clipped, SurrogateForm::LogProb] {
            let gc = GradCheckConfig { directions, seed: case_seed, ..GradCheckConfig::default() };
            let report = gradient_check(&env, &policy, &batch, &adv, Some((2, &ctx)), form, &gc)?;
            cases.push(GradientCase { kind, report, clip_fraction });
        }
    }
    Ok(cases)
}

pub fn kind_name(kind: ApproxKind) -> &'static str {
    match kind {
        ApproxKind::Tabular { .. } => "tabular",
        ApproxKind::Linear { .. } => "linear",
        ApproxKind::Mlp { .. } => "mlp",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlaeReport {
    pub trajectories: usize,
    /// Trajectories where GLAE of a root objective differs from GAE in any bit.
    pub root_mismatches: usize,
    /// Trajectories where GLAE with `β = 0` differs from GAE in any bit.
    pub zero_beta_mismatches: usize,
}

/// GLAE against plain GAE on `n` random trajectories, for an objective with
/// no ancestral edges and for a constrained objective with a zero multiplier.
/// Policies, critics, `λ` and the penalty timing vary per trajectory.
pub fn glae_reduction_suite(seed: u64, n: usize) -> Result<GlaeReport, HarnessError> {
    let env = grad_env();
    let ns = env.map().n_free();
    let dag = ObjectiveDag::new(2, [(1, 2, 0.0)]).expect("pair");
    let mut root_mismatches = 0;
    let mut zero_beta_mismatches = 0;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    for j in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(seed, j));
        let policy = Policy::new(ApproxKind::Tabular { n_states: ns }, 4, rng.gen_range(0.0..3.0), &mut rng);
        let traj = rollout(&env, &policy, 1, rng.gen_range(1..60), rng.gen()).pop().expect("one episode");
        let eta = LocalSlacks::uniform(&dag, rng.gen_range(0.0..1.0));
        let mut critics = CriticSet::new();
        critics.insert(tabular_critic(1, (0..ns).map(|_| rng.gen_range(-10.0..10.0)).collect()));
        let timing = if rng.gen_bool(0.5) { PenaltyTiming::Successor } else { PenaltyTiming::Current };
        let gamma = rng.gen_range(0.5..0.999);
        let lambda = rng.gen_range(0.0..1.0);
        for (i, beta) in [(1usize, rng.gen_range(0.1..50.0)), (2, 0.0)] {
            let critic = tabular_critic(i, (0..ns).map(|_| rng.gen_range(-10.0..10.0)).collect());
            let ctx = PenaltyContext { dag: &dag, critics: &critics, eta: &eta, beta, gamma, timing };
            let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward_of(i)).collect();
            let (v, vn) = critic_values(&env, &traj, &critic);
            let same = bits(&glae(&env, &traj, i, &critic, &ctx, lambda)?) == bits(&gae(&rewards, &v, &vn, gamma, lambda));
            if !same {
                if i == 1 {
                    root_mismatches += 1;
                } else {
                    zero_beta_mismatches += 1;
                }
            }
        }
    }
    Ok(GlaeReport { trajectories: n, root_mismatches, zero_beta_mismatches })
}

/// Suite sizes and tolerances for [`run_checks`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckPlan {
    pub seed: u64,
    pub instances: usize,
    pub oracle_instances: usize,
    pub directions: usize,
    pub trajectories: usize,
    pub value_tol: f64,
    pub gradient_tol: f64,
    pub naive_gap: f64,
}

impl Default for CheckPlan {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 200,
            oracle_instances: 50,
            directions: 64,
            trajectories: 1000,
            value_tol: 1e-6,
            gradient_tol: 1e-4,
            naive_gap: 1e-3,
        }
    }
}

/// Solver equivalence, multiplier bound, feasibility, naive distortion,
/// oracle, gradient and GLAE suites as pass/fail lines.
pub fn run_checks(plan: &CheckPlan) -> Result<Vec<CheckLine>, HarnessError> {
    let mut lines = Vec::new();
    let eq = equivalence_suite(plan.seed, plan.instances)?;
    lines.push(CheckLine::new(
        "lagrangian equals lar",
        eq.max_gap < plan.value_tol,
        format!("{} instances, max |dV| = {:.3e}, {:.1}s", eq.instances, eq.max_gap, eq.seconds),
    ));
    lines.push(CheckLine::new(
        "multiplier bound",
        eq.bound_violations == 0 && eq.zero_beta_witness.is_some(),
        format!("{} violating instances; zero-multiplier witness seed {:?}", eq.bound_violations, eq.zero_beta_witness),
    ));
    lines.push(CheckLine::new(
        "restricted sets nonempty",
        eq.empty_sets == 0,
        format!("{} instances with an empty set, {} slack redraws", eq.empty_sets, eq.redraws),
    ));
    let naive = naive_distortion_witness(plan.seed, plan.instances, 1.0, plan.naive_gap)?;
    lines.push(CheckLine::new(
        "naive lagrangian distorts values",
        naive.is_some(),
        match &naive {
            Some(w) => format!("seed {} gap {:.3e}", w.seed, w.gap),
            None => "no witness".into(),
        },
    ));
    let oracle = oracle_suite(plan.seed, plan.oracle_instances)?;
    lines.push(CheckLine::new(
        "lar matches oracle",
        oracle.max_gap < plan.value_tol,
        format!("{} instances, max |dV| = {:.3e}, up to {} policies", oracle.instances, oracle.max_gap, oracle.max_policies),
    ));
    let grads = gradient_suite(plan.seed, plan.directions)?;
    let worst = grads.iter().map(|c| c.report.max_rel_error).fold(0.0, f64::max);
    let detail = grads
        .iter()
        .map(|c| format!("{}/{:?} {:.1e}", kind_name(c.kind), c.report.form, c.report.max_rel_error))
        .collect::<Vec<_>>()
        .join(", ");
    lines.push(CheckLine::new(
        "surrogate gradient",
        grads.iter().all(|c| c.report.passes(plan.gradient_tol)),
        format!("max rel error {worst:.2e} over {} directions ({detail})", plan.directions),
    ));
    let g = glae_reduction_suite(plan.seed, plan.trajectories)?;
    lines.push(CheckLine::new(
        "glae reduces to gae",
        g.root_mismatches == 0 && g.zero_beta_mismatches == 0,
        format!("{} trajectories, {} root and {} zero-multiplier mismatches", g.trajectories, g.root_mismatches, g.zero_beta_mismatches),
    ));
    Ok(lines)
}
