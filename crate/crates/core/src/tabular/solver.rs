use crate::dag::LocalSlacks;
use crate::model::{ensure_valid, TmdpSpec};
use crate::scalar::{to_f64, Scalar};

use super::{
    argmax_in, lagrangian::beta_lower_bound, ActionSets, ObjectiveSolution, SolveError, SolvedObjectives,
    SolverConfig, TabularSolution,
};

/// Jacobi sweeps `V ← backup(V)` until `‖ΔV‖∞ · γ / (1 − γ) ≤ tol`, which bounds
/// the distance to the fixed point by `tol`.
pub(crate) fn fixed_point<T: Scalar>(
    spec: &TmdpSpec<T>,
    objective: usize,
    cfg: &SolverConfig<T>,
    mut backup: impl FnMut(usize, &[T]) -> T,
) -> Result<(Vec<T>, usize), SolveError> {
    let n = spec.n_states();
    let gamma = spec.gamma();
    let contraction = gamma / (T::one() - gamma);
    let mut v = vec![T::zero(); n];
    let mut next = vec![T::zero(); n];
    let mut bound = T::infinity();
    for sweep in 1..=cfg.max_iter {
        let mut residual = T::zero();
        for s in 0..n {
            next[s] = backup(s, &v);
            let d = (next[s] - v[s]).abs();
            if !(d <= residual) {
                residual = d;
            }
        }
        std::mem::swap(&mut v, &mut next);
        bound = residual * contraction;
        if bound <= cfg.tol || (gamma == T::zero() && residual.is_finite()) {
            return Ok((v, sweep));
        }
        if !residual.is_finite() {
            break;
        }
    }
    Err(SolveError::NonConvergence { objective, iterations: cfg.max_iter, bound: to_f64(bound) })
}

pub(crate) fn check_slacks<T: Scalar>(spec: &TmdpSpec<T>, eta: &LocalSlacks<T>) -> Result<(), SolveError> {
    if eta.len() != spec.dag().edges().len() {
        return Err(SolveError::SlackMismatch(format!(
            "{} slacks for {} edges",
            eta.len(),
            spec.dag().edges().len()
        )));
    }
    Ok(())
}

/// Value iteration for objective `i`, maximizing only over `allowed(s)`.
///
/// `Q` is reported for every action; descendants need `Q_i(s, a)` for actions
/// outside `allowed`.
pub fn value_iteration<T: Scalar>(
    spec: &TmdpSpec<T>,
    i: usize,
    allowed: &ActionSets,
    cfg: &SolverConfig<T>,
) -> Result<ObjectiveSolution<T>, SolveError> {
    ensure_valid(spec)?;
    spec.dag().check_index(i)?;
    if allowed.len() != spec.n_states() {
        return Err(SolveError::BadActionSet { state: allowed.len().min(spec.n_states()) });
    }
    for (s, set) in allowed.iter().enumerate() {
        if set.is_empty() || set.iter().any(|&a| a >= spec.n_actions()) {
            return Err(SolveError::BadActionSet { state: s });
        }
    }
    let (v, iterations) = fixed_point(spec, i, cfg, |s, v| {
        allowed[s]
            .iter()
            .map(|&a| spec.backup(i, s, a, v))
            .fold(T::neg_infinity(), |m, x| if x > m { x } else { m })
    })?;
    let q = q_table(spec, i, &v);
    let policy: Vec<usize> = (0..spec.n_states())
        .map(|s| argmax_in(&q[s], allowed[s].iter().copied()).expect("non-empty set"))
        .collect();
    let v = (0..spec.n_states()).map(|s| q[s][policy[s]]).collect();
    Ok(ObjectiveSolution {
        objective: i,
        v,
        q,
        allowed: allowed.clone(),
        constraint_sum: vec![vec![T::zero(); spec.n_actions()]; spec.n_states()],
        policy,
        beta: vec![T::zero(); spec.n_states()],
        iterations,
    })
}

pub(crate) fn q_table<T: Scalar>(spec: &TmdpSpec<T>, i: usize, v: &[T]) -> Vec<Vec<T>> {
    (0..spec.n_states())
        .map(|s| (0..spec.n_actions()).map(|a| spec.backup(i, s, a, v)).collect())
        .collect()
}

/// `C_wv(s, a) = max{0, V_w(s) − Q_w(s, a) − η_wv}` for every edge of `E_i`,
/// in edge order. Excesses within `feasibility_tol` are reported as 0.
pub fn constraint_term<T: Scalar>(
    spec: &TmdpSpec<T>,
    i: usize,
    s: usize,
    a: usize,
    ancestors: &SolvedObjectives<T>,
    eta: &LocalSlacks<T>,
    feasibility_tol: T,
) -> Result<Vec<T>, SolveError> {
    let dag = spec.dag();
    dag.ancestral_edge_ids(i)?
        .iter()
        .map(|&e| {
            let w = dag.edges()[e].parent;
            let sol = ancestors
                .get(&w)
                .ok_or(SolveError::MissingAncestorSolution { objective: i, ancestor: w })?;
            let excess = sol.advantage_loss(s, a) - eta.get(e);
            Ok(if excess > feasibility_tol { excess } else { T::zero() })
        })
        .collect()
}

/// `Σ_{E_i} C_wv(s, a)` as a `[state][action]` table.
pub fn constraint_sums<T: Scalar>(
    spec: &TmdpSpec<T>,
    i: usize,
    ancestors: &SolvedObjectives<T>,
    eta: &LocalSlacks<T>,
    feasibility_tol: T,
) -> Result<Vec<Vec<T>>, SolveError> {
    check_slacks(spec, eta)?;
    (0..spec.n_states())
        .map(|s| {
            (0..spec.n_actions())
                .map(|a| Ok(constraint_term(spec, i, s, a, ancestors, eta, feasibility_tol)?.into_iter().sum()))
                .collect()
        })
        .collect()
}

/// Actions whose constraint terms all vanish, per state.
///
/// Errors with [`SolveError::Infeasible`] if some state has no such action;
/// with a single parent per node this cannot happen because the parent's own
/// greedy action has zero advantage loss.
pub fn restricted_actions<T: Scalar>(
    spec: &TmdpSpec<T>,
    i: usize,
    ancestors: &SolvedObjectives<T>,
    eta: &LocalSlacks<T>,
    feasibility_tol: T,
) -> Result<ActionSets, SolveError> {
    let sums = constraint_sums(spec, i, ancestors, eta, feasibility_tol)?;
    allowed_from_sums(i, &sums)
}

pub(crate) fn allowed_from_sums<T: Scalar>(i: usize, sums: &[Vec<T>]) -> Result<ActionSets, SolveError> {
    sums.iter()
        .enumerate()
        .map(|(s, row)| {
            let set: Vec<usize> = (0..row.len()).filter(|&a| row[a] == T::zero()).collect();
            if set.is_empty() {
                Err(SolveError::Infeasible { objective: i, state: s })
            } else {
                Ok(set)
            }
        })
        .collect()
}

/// Solves every objective in topological order under local action restriction.
pub fn solve_lar<T: Scalar>(
    spec: &TmdpSpec<T>,
    eta: &LocalSlacks<T>,
    cfg: &SolverConfig<T>,
) -> Result<TabularSolution<T>, SolveError> {
    ensure_valid(spec)?;
    check_slacks(spec, eta)?;
    let order = spec.dag().topological_order().to_vec();
    let mut solved = SolvedObjectives::new();
    for &i in &order {
        let sums = constraint_sums(spec, i, &solved, eta, cfg.feasibility_tol)?;
        let allowed = allowed_from_sums(i, &sums)?;
        let mut sol = value_iteration(spec, i, &allowed, cfg)?;
        sol.beta = (0..spec.n_states())
            .map(|s| beta_lower_bound(&sol.q[s], &sums[s], sol.policy[s]))
            .collect();
        sol.constraint_sum = sums;
        solved.insert(i, sol);
    }
    Ok(TabularSolution::new(order, spec.initial_state(), solved))
}
