//! Objective DAG with per-edge slack and the local slack conversion.
//!
//! Objectives are 1-indexed (`1..=k`). An edge `(w, v)` means objective `w`
//! constrains objective `v`: when `v` (or any descendant of `v`) is optimized,
//! it may give up at most `δ_wv` of `w`'s optimal value.

use std::collections::{BTreeSet, VecDeque};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DagError {
    #[error("a DAG needs at least one objective")]
    Empty,
    #[error("objective index {index} out of range 1..={k}")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("self loop on objective {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("slack on edge ({parent}, {child}) must be finite and >= 0, got {value}")]
    InvalidSlack { parent: usize, child: usize, value: f64 },
    #[error("edges contain a cycle through objectives {0:?}")]
    CycleDetected(Vec<usize>),
    #[error("exactly one leaf objective is required, found {0:?}")]
    MultipleLeaves(Vec<usize>),
    #[error("local slacks cover {got} edges, DAG has {expected}")]
    SlackCount { expected: usize, got: usize },
    #[error("local slack on edge {edge} must be >= 0 and not NaN, got {value}")]
    InvalidLocalSlack { edge: usize, value: f64 },
}

/// A constraint edge `parent -> child` carrying the global slack `δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<T> {
    pub parent: usize,
    pub child: usize,
    pub slack: T,
}

/// Deterministic topological order of objectives `1..=k`.
///
/// Ready nodes are released in ascending index order, so the result is unique
/// for a given edge set. Fails on cycles and, when `k > 1`, on more than one
/// sink.
pub fn topological_order(k: usize, pairs: &[(usize, usize)]) -> Result<Vec<usize>, DagError> {
    if k == 0 {
        return Err(DagError::Empty);
    }
    let mut children = vec![Vec::new(); k + 1];
    let mut indegree = vec![0usize; k + 1];
    for &(w, v) in pairs {
        for idx in [w, v] {
            if idx == 0 || idx > k {
                return Err(DagError::IndexOutOfRange { index: idx, k });
            }
        }
        children[w].push(v);
        indegree[v] += 1;
    }
    let mut ready: BTreeSet<usize> = (1..=k).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(k);
    while let Some(next) = ready.pop_first() {
        order.push(next);
        for &c in &children[next] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() < k {
        let stuck = (1..=k).filter(|&i| indegree[i] > 0).collect();
        return Err(DagError::CycleDetected(stuck));
    }
    if k > 1 {
        let leaves: Vec<usize> = (1..=k).filter(|&i| children[i].is_empty()).collect();
        if leaves.len() != 1 {
            return Err(DagError::MultipleLeaves(leaves));
        }
    }
    Ok(order)
}

/// Validated objective DAG. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveDag<T> {
    k: usize,
    edges: Vec<Edge<T>>,
    order: Vec<usize>,
    leaf: usize,
    // ancestral[i - 1] = indices into `edges` of E_i
    ancestral: Vec<Vec<usize>>,
}

impl<T: Scalar> ObjectiveDag<T> {
    /// Builds a DAG from `(parent, child, δ)` triples.
    pub fn new(k: usize, edges: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self, DagError> {
        let edges: Vec<Edge<T>> = edges
            .into_iter()
            .map(|(parent, child, slack)| Edge { parent, child, slack })
            .collect();
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.parent == e.child {
                return Err(DagError::SelfLoop(e.parent));
            }
            if !seen.insert((e.parent, e.child)) {
                return Err(DagError::DuplicateEdge(e.parent, e.child));
            }
            if !e.slack.is_finite() || e.slack < T::zero() {
                return Err(DagError::InvalidSlack {
                    parent: e.parent,
                    child: e.child,
                    value: crate::scalar::to_f64(e.slack),
                });
            }
        }
        let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e.parent, e.child)).collect();
        let order = topological_order(k, &pairs)?;
        let leaf = *order.last().expect("k >= 1");
        let ancestral = (1..=k).map(|i| ancestral_edge_ids(k, &edges, i)).collect();
        Ok(Self { k, edges, order, leaf, ancestral })
    }

    /// Single objective, no edges.
    pub fn single() -> Self {
        Self::new(1, []).expect("singleton DAG is valid")
    }

    /// Chain `1 -> 2 -> ... -> k` with the given slacks (length `k - 1`).
    pub fn chain(slacks: &[T]) -> Result<Self, DagError> {
        let k = slacks.len() + 1;
        Self::new(k, slacks.iter().enumerate().map(|(j, &d)| (j + 1, j + 2, d)))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn leaf(&self) -> usize {
        self.leaf
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    pub fn parents(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.child == v).map(|e| e.parent)
    }

    /// Indices (into [`edges`](Self::edges)) of `E_i`: every edge whose child
    /// is `i` or one of `i`'s ancestors.
    pub fn ancestral_edge_ids(&self, i: usize) -> Result<&[usize], DagError> {
        self.check_index(i)?;
        Ok(&self.ancestral[i - 1])
    }

    pub fn ancestral_edges(&self, i: usize) -> Result<Vec<Edge<T>>, DagError> {
        Ok(self.ancestral_edge_ids(i)?.iter().map(|&j| self.edges[j]).collect())
    }

    pub fn check_index(&self, i: usize) -> Result<(), DagError> {
        if i == 0 || i > self.k {
            Err(DagError::IndexOutOfRange { index: i, k: self.k })
        } else {
            Ok(())
        }
    }

    /// Copy of this DAG with every edge slack replaced by `f(edge index, edge)`.
    pub fn map_slacks(&self, mut f: impl FnMut(usize, &Edge<T>) -> T) -> Result<Self, DagError> {
        let edges: Vec<_> = self
            .edges
            .iter()
            .enumerate()
            .map(|(j, e)| (e.parent, e.child, f(j, e)))
            .collect();
        Self::new(self.k, edges)
    }

    /// Local slacks `η_wv = (1 − γ) δ_wv` for every edge.
    pub fn local_slacks(&self, gamma: T) -> LocalSlacks<T> {
        let scale = T::one() - gamma;
        LocalSlacks { eta: self.edges.iter().map(|e| scale * e.slack).collect() }
    }

    /// SHA-256 over the structure and the exact bits of every slack.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update((self.k as u64).to_le_bytes());
        for e in &self.edges {
            hasher.update((e.parent as u64).to_le_bytes());
            hasher.update((e.child as u64).to_le_bytes());
            hasher.update(crate::scalar::to_f64(e.slack).to_bits().to_le_bytes());
        }
        hasher.finalize().into()
    }
}

fn ancestral_edge_ids<T>(k: usize, edges: &[Edge<T>], i: usize) -> Vec<usize> {
    // ancestors of i plus i itself
    let mut closed = vec![false; k + 1];
    closed[i] = true;
    let mut queue = VecDeque::from([i]);
    while let Some(v) = queue.pop_front() {
        for e in edges.iter().filter(|e| e.child == v) {
            if !closed[e.parent] {
                closed[e.parent] = true;
                queue.push_back(e.parent);
            }
        }
    }
    (0..edges.len()).filter(|&j| closed[edges[j].child]).collect()
}

/// Per-edge local slack `η_wv`, aligned with [`ObjectiveDag::edges`].
///
/// `+∞` is accepted and makes the edge's constraint vacuous.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSlacks<T> {
    eta: Vec<T>,
}

impl<T: Scalar> LocalSlacks<T> {
    pub fn from_values(dag: &ObjectiveDag<T>, eta: Vec<T>) -> Result<Self, DagError> {
        if eta.len() != dag.edges().len() {
            return Err(DagError::SlackCount { expected: dag.edges().len(), got: eta.len() });
        }
        for (edge, &value) in eta.iter().enumerate() {
            if value.is_nan() || value < T::zero() {
                return Err(DagError::InvalidLocalSlack { edge, value: crate::scalar::to_f64(value) });
            }
        }
        Ok(Self { eta })
    }

    pub fn uniform(dag: &ObjectiveDag<T>, value: T) -> Self {
        assert!(!(value < T::zero()) && !value.is_nan(), "local slack must be >= 0");
        Self { eta: vec![value; dag.edges().len()] }
    }

    pub fn zero(dag: &ObjectiveDag<T>) -> Self {
        Self::uniform(dag, T::zero())
    }

    pub fn unbounded(dag: &ObjectiveDag<T>) -> Self {
        Self::uniform(dag, T::infinity())
    }

    pub fn get(&self, edge: usize) -> T {
        self.eta[edge]
    }

    pub fn values(&self) -> &[T] {
        &self.eta
    }

    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn scaled(&self, c: T) -> Self {
        Self { eta: self.eta.iter().map(|&e| e * c).collect() }
    }
}

/// `η = (1 − γ) δ` on every edge of `dag`.
pub fn local_slacks<T: Scalar>(dag: &ObjectiveDag<T>, gamma: T) -> LocalSlacks<T> {
    debug_assert!(gamma >= T::zero() && gamma < T::one());
    dag.local_slacks(gamma)
}

/// Global slack that a local slack corresponds to, `δ = η / (1 − γ)`.
pub fn global_slack<T: Scalar>(eta: T, gamma: T) -> T {
    eta / (T::one() - gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(dag: &ObjectiveDag<f64>, ids: &[usize]) -> Vec<(usize, usize)> {
        ids.iter().map(|&j| (dag.edges()[j].parent, dag.edges()[j].child)).collect()
    }

    #[test]
    fn chain_order() {
        let dag = ObjectiveDag::new(3, [(1, 2, 0.0), (2, 3, 0.0)]).unwrap();
        assert_eq!(dag.topological_order(), &[1, 2, 3]);
        assert_eq!(dag.leaf(), 3);
    }

    #[test]
    fn singleton() {
        let dag = ObjectiveDag::<f64>::single();
        assert_eq!(dag.topological_order(), &[1]);
        assert_eq!(dag.leaf(), 1);
    }

    #[test]
    fn two_cycle_rejected() {
        let err = ObjectiveDag::new(2, [(1, 2, 0.0), (2, 1, 0.0)]).unwrap_err();
        assert!(matches!(err, DagError::CycleDetected(_)));
        assert!(matches!(topological_order(2, &[(1, 2), (2, 1)]), Err(DagError::CycleDetected(_))));
    }

    #[test]
    fn fan_roots_by_index() {
        let dag = ObjectiveDag::new(3, [(2, 3, 1.0), (1, 3, 1.0)]).unwrap();
        assert_eq!(dag.topological_order(), &[1, 2, 3]);
    }

    #[test]
    fn leaf_need_not_be_last_index() {
        let dag = ObjectiveDag::new(3, [(3, 1, 0.0), (2, 3, 0.0)]).unwrap();
        assert_eq!(dag.topological_order(), &[2, 3, 1]);
        assert_eq!(dag.leaf(), 1);
    }

    #[test]
    fn multiple_leaves_and_disconnected_rejected() {
        let err = ObjectiveDag::new(3, [(1, 2, 0.0), (1, 3, 0.0)]).unwrap_err();
        assert_eq!(err, DagError::MultipleLeaves(vec![2, 3]));
        let err = ObjectiveDag::new(3, [(1, 2, 0.0)]).unwrap_err();
        assert_eq!(err, DagError::MultipleLeaves(vec![2, 3]));
        assert_eq!(ObjectiveDag::<f64>::new(2, []).unwrap_err(), DagError::MultipleLeaves(vec![1, 2]));
    }

    #[test]
    fn bad_edges_rejected() {
        assert_eq!(ObjectiveDag::new(2, [(1, 1, 0.0)]).unwrap_err(), DagError::SelfLoop(1));
        assert!(matches!(
            ObjectiveDag::new(2, [(1, 3, 0.0)]).unwrap_err(),
            DagError::IndexOutOfRange { index: 3, k: 2 }
        ));
        assert!(matches!(ObjectiveDag::new(2, [(1, 2, -1.0)]).unwrap_err(), DagError::InvalidSlack { .. }));
        assert!(matches!(
            ObjectiveDag::new(2, [(1, 2, f64::INFINITY)]).unwrap_err(),
            DagError::InvalidSlack { .. }
        ));
        assert_eq!(
            ObjectiveDag::new(2, [(1, 2, 0.0), (1, 2, 1.0)]).unwrap_err(),
            DagError::DuplicateEdge(1, 2)
        );
        assert_eq!(ObjectiveDag::<f64>::new(0, []).unwrap_err(), DagError::Empty);
    }

    #[test]
    fn ancestral_edges_examples() {
        let chain = ObjectiveDag::new(3, [(1, 2, 0.0), (2, 3, 0.0)]).unwrap();
        assert_eq!(pairs(&chain, chain.ancestral_edge_ids(3).unwrap()), vec![(1, 2), (2, 3)]);
        assert!(chain.ancestral_edge_ids(1).unwrap().is_empty());
        assert_eq!(pairs(&chain, chain.ancestral_edge_ids(2).unwrap()), vec![(1, 2)]);

        let diamond = ObjectiveDag::new(4, [(1, 2, 0.0), (1, 3, 0.0), (2, 4, 0.0), (3, 4, 0.0)]).unwrap();
        assert_eq!(pairs(&diamond, diamond.ancestral_edge_ids(3).unwrap()), vec![(1, 3)]);
        assert_eq!(diamond.ancestral_edge_ids(4).unwrap().len(), 4);
        assert!(matches!(chain.ancestral_edges(4), Err(DagError::IndexOutOfRange { index: 4, k: 3 })));
        assert!(matches!(chain.ancestral_edges(0), Err(DagError::IndexOutOfRange { .. })));
    }

    #[test]
    fn local_slack_examples() {
        let dag = ObjectiveDag::<f64>::new(2, [(1, 2, 100.0)]).unwrap();
        assert!((dag.local_slacks(0.95).get(0) - 5.0).abs() < 1e-12);
        let dag0 = ObjectiveDag::new(2, [(1, 2, 0.0)]).unwrap();
        assert_eq!(dag0.local_slacks(0.7).get(0), 0.0);
        let dag50 = ObjectiveDag::new(2, [(1, 2, 50.0)]).unwrap();
        assert_eq!(local_slacks(&dag50, 0.0).get(0), 50.0);
        assert!((global_slack(5.0f64, 0.95) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn local_slack_validation() {
        let dag = ObjectiveDag::new(2, [(1, 2, 1.0)]).unwrap();
        assert!(LocalSlacks::from_values(&dag, vec![f64::INFINITY]).is_ok());
        assert!(LocalSlacks::from_values(&dag, vec![-0.5]).is_err());
        assert!(LocalSlacks::from_values(&dag, vec![f64::NAN]).is_err());
        assert!(LocalSlacks::from_values(&dag, vec![]).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let dag = ObjectiveDag::<f32>::chain(&[10.0, 20.0]).unwrap();
        let eta = dag.local_slacks(0.9);
        assert!((eta.get(1) - 2.0).abs() < 1e-5);
    }

    fn random_dag() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        // a random permutation defines a hidden order; edges only go forward, and
        // every node except the last gets at least one forward edge so there is a single leaf
        (2usize..7).prop_flat_map(|k| {
            (Just(k), Just((1..=k).collect::<Vec<_>>()).prop_shuffle(), proptest::collection::vec(any::<u32>(), k * k))
        })
        .prop_map(|(k, perm, bits)| {
            let mut edges = Vec::new();
            for a in 0..k {
                for b in (a + 1)..k {
                    if bits[a * k + b] % 3 == 0 || b == a + 1 {
                        edges.push((perm[a], perm[b]));
                    }
                }
            }
            (k, edges)
        })
    }

    proptest! {
        #[test]
        fn order_is_permutation_respecting_edges((k, edges) in random_dag()) {
            let order = topological_order(k, &edges).unwrap();
            let mut sorted = order.clone();
            sorted.sort();
            prop_assert_eq!(sorted, (1..=k).collect::<Vec<_>>());
            let pos = |x: usize| order.iter().position(|&y| y == x).unwrap();
            for &(w, v) in &edges {
                prop_assert!(pos(w) < pos(v));
            }
            prop_assert_eq!(topological_order(k, &edges).unwrap(), order);
        }

        #[test]
        fn leaf_of_chain_sees_every_edge(slacks in proptest::collection::vec(0.0f64..10.0, 1..6)) {
            let dag = ObjectiveDag::chain(&slacks).unwrap();
            prop_assert_eq!(dag.ancestral_edge_ids(dag.leaf()).unwrap().len(), slacks.len());
        }

        #[test]
        fn local_slacks_linear(slacks in proptest::collection::vec(0.0f64..100.0, 1..5), c in 0.0f64..10.0, gamma in 0.0f64..0.999) {
            let dag = ObjectiveDag::chain(&slacks).unwrap();
            let scaled = dag.map_slacks(|_, e| e.slack * c).unwrap();
            let a = dag.local_slacks(gamma).scaled(c);
            let b = scaled.local_slacks(gamma);
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }
}
