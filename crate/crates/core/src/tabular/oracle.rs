use crate::dag::LocalSlacks;
use crate::linalg::evaluate_deterministic;
use crate::model::{ensure_valid, TmdpSpec};
use crate::scalar::Scalar;

use super::solver::{allowed_from_sums, check_slacks, constraint_sums, q_table};
use super::{ObjectiveSolution, SolveError, SolvedObjectives, SolverConfig, TabularSolution};

/// Upper limit on `|A|^|S|` for [`brute_force_oracle`].
pub const ORACLE_POLICY_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution<T> {
    /// Leaf value at the initial state.
    pub leaf_value: T,
    /// Best deterministic leaf policy.
    pub policy: Vec<usize>,
    pub solution: TabularSolution<T>,
    /// Policies evaluated across all objectives.
    pub evaluated: usize,
}

/// Enumerates every deterministic policy inside each objective's restricted
/// action sets and evaluates it exactly with a linear solve.
///
/// Per objective the policy maximizing `Σ_s V(s)` is kept; within restricted
/// sets an optimal policy dominates at every state, so it also maximizes the
/// sum. Ancestor values for descendants' constraints come from these exact
/// evaluations, independent of value iteration.
pub fn brute_force_oracle<T: Scalar>(
    spec: &TmdpSpec<T>,
    eta: &LocalSlacks<T>,
    cfg: &SolverConfig<T>,
) -> Result<OracleSolution<T>, SolveError> {
    ensure_valid(spec)?;
    check_slacks(spec, eta)?;
    let (ns, na) = (spec.n_states(), spec.n_actions());
    let policies = (na as f64).powi(ns as i32);
    if policies > ORACLE_POLICY_LIMIT {
        return Err(SolveError::TooLarge { policies, limit: ORACLE_POLICY_LIMIT });
    }
    let order = spec.dag().topological_order().to_vec();
    let mut solved = SolvedObjectives::new();
    let mut evaluated = 0;
    for &i in &order {
        let sums = constraint_sums(spec, i, &solved, eta, cfg.feasibility_tol)?;
        let allowed = allowed_from_sums(i, &sums)?;
        let mut digits = vec![0usize; ns];
        let mut best: Option<(T, Vec<usize>, Vec<T>)> = None;
        loop {
            let policy: Vec<usize> = digits.iter().enumerate().map(|(s, &d)| allowed[s][d]).collect();
            let v = evaluate_deterministic(spec, i, &policy);
            evaluated += 1;
            let total: T = v.iter().copied().sum();
            if best.as_ref().is_none_or(|(b, _, _)| total > *b) {
                best = Some((total, policy, v));
            }
            // mixed-radix increment over the restricted sets
            let mut s = 0;
            while s < ns {
                digits[s] += 1;
                if digits[s] < allowed[s].len() {
                    break;
                }
                digits[s] = 0;
                s += 1;
            }
            if s == ns {
                break;
            }
        }
        let (_, policy, v) = best.expect("at least one policy");
        let q = q_table(spec, i, &v);
        solved.insert(
            i,
            ObjectiveSolution {
                objective: i,
                v,
                q,
                allowed,
                constraint_sum: sums,
                policy,
                beta: vec![T::zero(); ns],
                iterations: 0,
            },
        );
    }
    let solution = TabularSolution::new(order, spec.initial_state(), solved);
    Ok(OracleSolution {
        leaf_value: solution.leaf_value(),
        policy: solution.policy().to_vec(),
        solution,
        evaluated,
    })
}
