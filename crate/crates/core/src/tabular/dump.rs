use std::fmt::Write;

use crate::scalar::{to_f64, Scalar};

use super::TabularSolution;

/// `objective,state,V,Q0,Q1,...` with one row per objective and state, in
/// topological order.
pub fn solution_csv<T: Scalar>(solution: &TabularSolution<T>) -> String {
    let n_actions = solution.leaf().q.first().map_or(0, Vec::len);
    let mut out = String::from("objective,state,V");
    for a in 0..n_actions {
        let _ = write!(out, ",Q{a}");
    }
    out.push('\n');
    for &i in solution.order() {
        let sol = solution.objective(i);
        for (s, v) in sol.v.iter().enumerate() {
            let _ = write!(out, "{i},{s},{}", to_f64(*v));
            for q in &sol.q[s] {
                let _ = write!(out, ",{}", to_f64(*q));
            }
            out.push('\n');
        }
    }
    out
}

/// Greedy leaf policy as a `state,action` table.
pub fn policy_grid_csv<T: Scalar>(solution: &TabularSolution<T>) -> String {
    let mut out = String::from("state,action\n");
    for (s, a) in solution.policy().iter().enumerate() {
        let _ = writeln!(out, "{s},{a}");
    }
    out
}
