//! Exact policy evaluation through the linear system `(I − γ P_π) V = R_π`.

use crate::model::TmdpSpec;
use crate::scalar::Scalar;

/// Solves `A x = b` for a dense row-major `n × n` matrix with partial
/// pivoting. Returns `None` when `A` is numerically singular.
pub fn solve_dense<T: Scalar>(mut a: Vec<T>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "matrix must be n x n");
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| {
            a[x * n + col].abs().partial_cmp(&a[y * n + col].abs()).unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if !(a[pivot * n + col].abs() > T::epsilon()) {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / diag;
            if factor == T::zero() {
                continue;
            }
            for j in col..n {
                let upper = a[col * n + j];
                a[row * n + j] -= factor * upper;
            }
            let upper_b = b[col];
            b[row] -= factor * upper_b;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in (row + 1)..n {
            acc -= a[row * n + j] * x[j];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}

/// Value of a stochastic policy `probs[s][a]` on objective `i` at every state.
pub fn evaluate_stochastic<T: Scalar>(spec: &TmdpSpec<T>, i: usize, probs: &[Vec<T>]) -> Vec<T> {
    let n = spec.n_states();
    let gamma = spec.gamma();
    let mut a = vec![T::zero(); n * n];
    let mut b = vec![T::zero(); n];
    for s in 0..n {
        a[s * n + s] += T::one();
        for (act, &p) in probs[s].iter().enumerate() {
            if p == T::zero() {
                continue;
            }
            b[s] += p * spec.reward(i, s, act);
            for &(sp, t) in spec.successors(s, act) {
                a[s * n + sp] -= gamma * p * t;
            }
        }
    }
    solve_dense(a, b).expect("I - γP is nonsingular for γ < 1")
}

/// Value of a deterministic policy on objective `i` at every state.
pub fn evaluate_deterministic<T: Scalar>(spec: &TmdpSpec<T>, i: usize, policy: &[usize]) -> Vec<T> {
    let probs: Vec<Vec<T>> = policy
        .iter()
        .map(|&a| {
            let mut row = vec![T::zero(); spec.n_actions()];
            row[a] = T::one();
            row
        })
        .collect();
    evaluate_stochastic(spec, i, &probs)
}
