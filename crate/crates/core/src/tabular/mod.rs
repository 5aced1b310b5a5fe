//! Exact solvers for small TMDPs.
//!
//! Every solver walks the objective DAG in topological order. Objective `i` may
//! only use actions whose ancestral advantage loss stays within the local
//! slack of every edge in `E_i`:
//!
//! ```text
//! allowed_i(s) = { a | V_w(s) − Q_w(s, a) ≤ η_wv  for all (w, v) ∈ E_i }
//! ```
//!
//! [`solve_lar`] runs value iteration over those restricted sets directly.
//! [`lagrangian_value_iteration`] instead backs up
//! `R_i + γ T V − β_s Σ C_wv` over all actions, with the transformed constraint
//! `C_wv = max{0, V_w − Q_w − η_wv}` and `β_s` kept above the per-state bound
//! from [`beta_lower_bound`]; both reach the same fixed point.
//! [`brute_force_oracle`] enumerates deterministic policies and is used to
//! check both.
//!
//! Argmax ties are always broken toward the lowest action index.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dag::DagError;
use crate::model::InvalidSpec;
use crate::scalar::{cast, to_f64, Scalar};

mod dump;
mod lagrangian;
mod oracle;
pub mod random;
mod solver;

pub use dump::{policy_grid_csv, solution_csv};
pub use lagrangian::{
    beta_lower_bound, lagrangian_value_iteration, lagrangian_value_iteration_with, naive_lagrangian_value_iteration,
    BetaRule,
};
pub use oracle::{brute_force_oracle, OracleSolution, ORACLE_POLICY_LIMIT};
pub use solver::{constraint_sums, constraint_term, restricted_actions, solve_lar, value_iteration};

/// Default `β` margin above the per-state lower bound.
pub const DEFAULT_BETA_MARGIN: f64 = 1.0;

/// Per-state sets of permitted actions, each sorted ascending.
pub type ActionSets = Vec<Vec<usize>>;

/// Solved objectives keyed by 1-based objective index.
pub type SolvedObjectives<T> = BTreeMap<usize, ObjectiveSolution<T>>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    InvalidSpec(#[from] InvalidSpec),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error("value iteration for objective {objective} did not converge: error bound {bound:e} after {iterations} sweeps")]
    NonConvergence { objective: usize, iterations: usize, bound: f64 },
    #[error("objective {objective} needs the solution of ancestor {ancestor}")]
    MissingAncestorSolution { objective: usize, ancestor: usize },
    #[error("no action satisfies every ancestral constraint of objective {objective} at state {state}")]
    Infeasible { objective: usize, state: usize },
    #[error("allowed action set for state {state} is empty or out of range")]
    BadActionSet { state: usize },
    #[error("local slacks do not match the DAG's edges: {0}")]
    SlackMismatch(String),
    #[error("brute force would enumerate {policies} policies (limit {limit})")]
    TooLarge { policies: f64, limit: f64 },
}

/// Tolerances shared by the tabular solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    /// Bound on `‖V − V*‖∞` at termination.
    pub tol: T,
    pub max_iter: usize,
    /// Constraint excess `V_w − Q_w − η` at or below this counts as satisfied,
    /// so converged-but-inexact ancestor values do not split genuine ties.
    pub feasibility_tol: T,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self { tol: cast(1e-8), max_iter: 100_000, feasibility_tol: cast(1e-7) }
    }
}

/// Solution of one objective under its ancestral constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSolution<T> {
    pub objective: usize,
    /// Optimal constrained value per state.
    pub v: Vec<T>,
    /// Unpenalized `R_i + γ T V` for every action, including disallowed ones.
    pub q: Vec<Vec<T>>,
    /// Actions satisfying every constraint of `E_i`.
    pub allowed: ActionSets,
    /// `Σ_{E_i} C_wv(s, a)` for every action.
    pub constraint_sum: Vec<Vec<T>>,
    /// Greedy action per state.
    pub policy: Vec<usize>,
    /// Multiplier used (Lagrangian solvers) or the per-state lower bound
    /// evaluated at the fixed point (restricted solvers).
    pub beta: Vec<T>,
    pub iterations: usize,
}

impl<T: Scalar> ObjectiveSolution<T> {
    /// `−A(s, a) = V(s) − Q(s, a)`.
    pub fn advantage_loss(&self, s: usize, a: usize) -> T {
        self.v[s] - self.q[s][a]
    }
}

/// Per-objective solutions computed in topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSolution<T> {
    order: Vec<usize>,
    leaf: usize,
    initial_state: usize,
    objectives: SolvedObjectives<T>,
}

impl<T: Scalar> TabularSolution<T> {
    pub(crate) fn new(order: Vec<usize>, initial_state: usize, objectives: SolvedObjectives<T>) -> Self {
        let leaf = *order.last().expect("non-empty order");
        Self { order, leaf, initial_state, objectives }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn objective(&self, i: usize) -> &ObjectiveSolution<T> {
        &self.objectives[&i]
    }

    pub fn objectives(&self) -> &SolvedObjectives<T> {
        &self.objectives
    }

    pub fn leaf(&self) -> &ObjectiveSolution<T> {
        self.objective(self.leaf)
    }

    /// Leaf value at the initial state.
    pub fn leaf_value(&self) -> T {
        self.leaf().v[self.initial_state]
    }

    /// The TMDP policy: the leaf's greedy policy.
    pub fn policy(&self) -> &[usize] {
        &self.leaf().policy
    }

    /// Per-state multipliers of the leaf.
    pub fn betas(&self) -> &[T] {
        &self.leaf().beta
    }

    /// Largest `|ΔV|` over every objective and state.
    pub fn max_value_gap(&self, other: &Self) -> f64 {
        let mut gap = 0.0f64;
        for (i, sol) in &self.objectives {
            let Some(o) = other.objectives.get(i) else { return f64::INFINITY };
            for (a, b) in sol.v.iter().zip(&o.v) {
                gap = gap.max(to_f64((*a - *b).abs()));
            }
        }
        gap
    }
}

/// Index of the largest value among `candidates` (first on ties).
pub(crate) fn argmax_in<T: Scalar>(values: &[T], candidates: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for a in candidates {
        match best {
            Some(b) if !(values[a] > values[b]) => {}
            _ => best = Some(a),
        }
    }
    best
}
