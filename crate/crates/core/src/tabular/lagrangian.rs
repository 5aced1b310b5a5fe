use crate::dag::LocalSlacks;
use crate::model::{ensure_valid, TmdpSpec};
use crate::scalar::Scalar;

use super::solver::{check_slacks, constraint_sums, fixed_point, q_table};
use super::{argmax_in, ObjectiveSolution, SolveError, SolvedObjectives, SolverConfig, TabularSolution};

/// Smallest per-state multiplier that keeps every constraint-violating action
/// below the best feasible action `a_star`:
///
/// `max_a (Q(s, a) − Q(s, a*)) / ΣC(s, a)` over actions with `ΣC(s, a) > 0`,
/// clamped at 0.
pub fn beta_lower_bound<T: Scalar>(q_row: &[T], constraint_sums: &[T], a_star: usize) -> T {
    let base = q_row[a_star];
    let mut bound = T::zero();
    for (a, (&q, &c)) in q_row.iter().zip(constraint_sums).enumerate() {
        if a == a_star || !(c > T::zero()) {
            continue;
        }
        let ratio = (q - base) / c;
        if ratio > bound {
            bound = ratio;
        }
    }
    bound
}

/// How the per-state multiplier `β_s` is chosen during Lagrangian iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaRule<T> {
    /// `β_s = beta_lower_bound + margin`, re-estimated from the current `Q`
    /// every sweep.
    Bound { margin: T },
    /// The same constant at every state.
    Fixed(T),
}

/// Lagrangian Bellman iteration with `β_s` re-derived every sweep from the
/// current estimates plus `beta_margin`.
pub fn lagrangian_value_iteration<T: Scalar>(
    spec: &TmdpSpec<T>,
    eta: &LocalSlacks<T>,
    beta_margin: T,
    cfg: &SolverConfig<T>,
) -> Result<TabularSolution<T>, SolveError> {
    lagrangian_value_iteration_with(spec, eta, BetaRule::Bound { margin: beta_margin }, cfg)
}

/// Lagrangian Bellman iteration
/// `V_i(s) = max_a [ R_i(s,a) + γ Σ T V_i − β_s Σ C_wv(s,a) ]` over all actions,
/// objectives in topological order, each using the previous objectives'
/// Lagrangian solutions as its ancestors.
pub fn lagrangian_value_iteration_with<T: Scalar>(
    spec: &TmdpSpec<T>,
    eta: &LocalSlacks<T>,
    rule: BetaRule<T>,
    cfg: &SolverConfig<T>,
) -> Result<TabularSolution<T>, SolveError> {
    ensure_valid(spec)?;
    check_slacks(spec, eta)?;
    let (ns, na) = (spec.n_states(), spec.n_actions());
    let order = spec.dag().topological_order().to_vec();
    let mut solved = SolvedObjectives::new();
    for &i in &order {
        let sums = constraint_sums(spec, i, &solved, eta, cfg.feasibility_tol)?;
        let feasible: Vec<Vec<usize>> =
            sums.iter().map(|row| (0..na).filter(|&a| row[a] == T::zero()).collect()).collect();
        if let Some(s) = feasible.iter().position(|f| f.is_empty()) {
            return Err(SolveError::Infeasible { objective: i, state: s });
        }
        let beta_at = |s: usize, q: &[T]| -> T {
            match rule {
                BetaRule::Fixed(b) => b,
                BetaRule::Bound { margin } => {
                    let a_star = argmax_in(q, feasible[s].iter().copied()).expect("feasible action");
                    beta_lower_bound(q, &sums[s], a_star) + margin
                }
            }
        };
        let mut q_row = vec![T::zero(); na];
        let (v, iterations) = fixed_point(spec, i, cfg, |s, v| {
            for (a, q) in q_row.iter_mut().enumerate() {
                *q = spec.backup(i, s, a, v);
            }
            let beta = beta_at(s, &q_row);
            penalized_max(&q_row, &sums[s], beta).1
        })?;
        let q = q_table(spec, i, &v);
        let mut beta = Vec::with_capacity(ns);
        let mut policy = Vec::with_capacity(ns);
        let mut values = Vec::with_capacity(ns);
        for s in 0..ns {
            let b = beta_at(s, &q[s]);
            let (a, value) = penalized_max(&q[s], &sums[s], b);
            beta.push(b);
            policy.push(a);
            values.push(value);
        }
        solved.insert(
            i,
            ObjectiveSolution {
                objective: i,
                v: values,
                q,
                allowed: feasible,
                constraint_sum: sums,
                policy,
                beta,
                iterations,
            },
        );
    }
    Ok(TabularSolution::new(order, spec.initial_state(), solved))
}

fn penalized_max<T: Scalar>(q: &[T], sums: &[T], beta: T) -> (usize, T) {
    let mut best = (0, T::neg_infinity());
    for (a, (&qa, &c)) in q.iter().zip(sums).enumerate() {
        let value = if c == T::zero() { qa } else { qa - beta * c };
        if value > best.1 || a == 0 {
            best = (a, value);
        }
    }
    best
}

/// Untransformed Lagrangian backup
/// `max_a [ R_i + γ T V_i − β Σ (V_w − Q_w − η_wv) ]`.
///
/// The penalty turns into a bonus for actions inside the slack, so the
/// resulting values are generally inflated relative to [`super::solve_lar`].
/// Kept as a reference for that failure mode.
pub fn naive_lagrangian_value_iteration<T: Scalar>(
    spec: &TmdpSpec<T>,
    eta: &LocalSlacks<T>,
    beta: T,
    cfg: &SolverConfig<T>,
) -> Result<TabularSolution<T>, SolveError> {
    ensure_valid(spec)?;
    check_slacks(spec, eta)?;
    let (ns, na) = (spec.n_states(), spec.n_actions());
    let dag = spec.dag();
    let order = dag.topological_order().to_vec();
    let mut solved = SolvedObjectives::<T>::new();
    for &i in &order {
        let mut penalty = vec![vec![T::zero(); na]; ns];
        if beta != T::zero() {
            for &e in dag.ancestral_edge_ids(i)? {
                let w = dag.edges()[e].parent;
                let anc = solved.get(&w).ok_or(SolveError::MissingAncestorSolution { objective: i, ancestor: w })?;
                for (s, row) in penalty.iter_mut().enumerate() {
                    for (a, p) in row.iter_mut().enumerate() {
                        *p += beta * (anc.advantage_loss(s, a) - eta.get(e));
                    }
                }
            }
        }
        let (v, iterations) = fixed_point(spec, i, cfg, |s, v| {
            (0..na)
                .map(|a| spec.backup(i, s, a, v) - penalty[s][a])
                .fold(T::neg_infinity(), |m, x| if x > m { x } else { m })
        })?;
        let q = q_table(spec, i, &v);
        let lagrangian: Vec<Vec<T>> =
            (0..ns).map(|s| (0..na).map(|a| q[s][a] - penalty[s][a]).collect()).collect();
        let policy: Vec<usize> = (0..ns).map(|s| argmax_in(&lagrangian[s], 0..na).expect("actions")).collect();
        let values = (0..ns).map(|s| lagrangian[s][policy[s]]).collect();
        solved.insert(
            i,
            ObjectiveSolution {
                objective: i,
                v: values,
                q,
                allowed: vec![(0..na).collect(); ns],
                constraint_sum: penalty,
                policy,
                beta: vec![beta; ns],
                iterations,
            },
        );
    }
    Ok(TabularSolution::new(order, spec.initial_state(), solved))
}
