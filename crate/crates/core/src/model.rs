//! Tabular TMDP model, its validation report and its TOML document format.

use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::dag::{DagError, ObjectiveDag};
use crate::scalar::{cast, to_f64, Scalar};

/// Row-stochastic tolerance for transition rows.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// One violated model invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("model has no states")]
    NoStates,
    #[error("model has no actions")]
    NoActions,
    #[error("discount {0} outside [0, 1)")]
    GammaOutOfRange(f64),
    #[error("initial state {state} out of range (n_states = {n_states})")]
    InitialStateOutOfRange { state: usize, n_states: usize },
    #[error("transition table shape mismatch at {location}")]
    TransitionShape { location: String },
    #[error("transition T({state}, {action}, {next}) = {value} is negative or not finite")]
    BadProbability { state: usize, action: usize, next: usize, value: f64 },
    #[error("transition row ({state}, {action}) sums to {sum}, expected 1")]
    RowNotStochastic { state: usize, action: usize, sum: f64 },
    #[error("reward table shape mismatch at {location}")]
    RewardShape { location: String },
    #[error("reward R_{objective}({state}, {action}) = {value} is not finite")]
    NonFiniteReward { objective: usize, state: usize, action: usize, value: f64 },
    #[error("DAG has {dag_k} objectives but the reward table has {channels} channels")]
    ObjectiveCountMismatch { dag_k: usize, channels: usize },
}

/// Tabular topological MDP `⟨S, A, T, R⃗, E, δ⃗⟩` with a discount and an
/// initial state.
///
/// Construction does not validate; call [`validate`] (solvers do so and
/// refuse invalid models).
#[derive(Debug, Clone)]
pub struct TmdpSpec<T> {
    n_states: usize,
    n_actions: usize,
    // [s][a][s']
    transition: Vec<Vec<Vec<T>>>,
    // [objective - 1][s][a]
    rewards: Vec<Vec<Vec<T>>>,
    gamma: T,
    dag: ObjectiveDag<T>,
    initial_state: usize,
    // nonzero entries of T(s, a, ·), indexed s * n_actions + a
    successors: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> TmdpSpec<T> {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<Vec<Vec<T>>>,
        rewards: Vec<Vec<Vec<T>>>,
        gamma: T,
        dag: ObjectiveDag<T>,
        initial_state: usize,
    ) -> Self {
        let mut successors = vec![Vec::new(); n_states * n_actions];
        for (s, per_state) in transition.iter().enumerate().take(n_states) {
            for (a, row) in per_state.iter().enumerate().take(n_actions) {
                successors[s * n_actions + a] = row
                    .iter()
                    .enumerate()
                    .take(n_states)
                    .filter(|(_, &p)| p != T::zero())
                    .map(|(sp, &p)| (sp, p))
                    .collect();
            }
        }
        Self { n_states, n_actions, transition, rewards, gamma, dag, initial_state, successors }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_objectives(&self) -> usize {
        self.dag.k()
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn dag(&self) -> &ObjectiveDag<T> {
        &self.dag
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[T] {
        &self.transition[s][a]
    }

    /// Nonzero successors `(s', T(s' | s, a))`.
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, T)] {
        &self.successors[s * self.n_actions + a]
    }

    /// `R_i(s, a)` for the 1-indexed objective `i`.
    #[inline]
    pub fn reward(&self, i: usize, s: usize, a: usize) -> T {
        self.rewards[i - 1][s][a]
    }

    /// Copy of the model with a different DAG (same objective count).
    pub fn with_dag(&self, dag: ObjectiveDag<T>) -> Self {
        let mut out = self.clone();
        out.dag = dag;
        out
    }

    /// Expected next-state value `Σ_s' T(s'|s,a) V(s')`.
    #[inline]
    pub fn expected(&self, s: usize, a: usize, v: &[T]) -> T {
        let mut acc = T::zero();
        for &(sp, p) in self.successors(s, a) {
            acc += p * v[sp];
        }
        acc
    }

    /// One-step lookahead `R_i(s, a) + γ Σ T V`.
    #[inline]
    pub fn backup(&self, i: usize, s: usize, a: usize, v: &[T]) -> T {
        self.reward(i, s, a) + self.gamma * self.expected(s, a, v)
    }

    pub fn to_document(&self) -> TmdpDocument {
        TmdpDocument {
            n_states: self.n_states,
            n_actions: self.n_actions,
            gamma: Real(to_f64(self.gamma)),
            initial_state: self.initial_state,
            transition: map3(&self.transition, |x| Real(to_f64(x))),
            rewards: map3(&self.rewards, |x| Real(to_f64(x))),
            edges: self
                .dag
                .edges()
                .iter()
                .map(|e| (e.parent, e.child, Real(to_f64(e.slack))))
                .collect(),
            n_objectives: Some(self.dag.k()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_document()).expect("document serializes")
    }
}

/// Returns every violated invariant of `spec`; empty when valid.
pub fn validate<T: Scalar>(spec: &TmdpSpec<T>) -> Vec<Violation> {
    let mut report = Vec::new();
    let (ns, na) = (spec.n_states, spec.n_actions);
    if ns == 0 {
        report.push(Violation::NoStates);
    }
    if na == 0 {
        report.push(Violation::NoActions);
    }
    if !(spec.gamma >= T::zero() && spec.gamma < T::one()) {
        report.push(Violation::GammaOutOfRange(to_f64(spec.gamma)));
    }
    if spec.initial_state >= ns {
        report.push(Violation::InitialStateOutOfRange { state: spec.initial_state, n_states: ns });
    }
    if spec.transition.len() != ns {
        report.push(Violation::TransitionShape {
            location: format!("{} state rows, expected {ns}", spec.transition.len()),
        });
    }
    let tol = cast::<T>(ROW_SUM_TOL);
    for (s, per_state) in spec.transition.iter().enumerate() {
        if per_state.len() != na {
            report.push(Violation::TransitionShape {
                location: format!("state {s}: {} actions, expected {na}", per_state.len()),
            });
            continue;
        }
        for (a, row) in per_state.iter().enumerate() {
            if row.len() != ns {
                report.push(Violation::TransitionShape {
                    location: format!("row ({s}, {a}): {} entries, expected {ns}", row.len()),
                });
                continue;
            }
            let mut sum = T::zero();
            for (sp, &p) in row.iter().enumerate() {
                if !p.is_finite() || p < T::zero() {
                    report.push(Violation::BadProbability { state: s, action: a, next: sp, value: to_f64(p) });
                }
                sum += p;
            }
            if !((sum - T::one()).abs() <= tol) {
                report.push(Violation::RowNotStochastic { state: s, action: a, sum: to_f64(sum) });
            }
        }
    }
    if spec.rewards.len() != spec.dag.k() {
        report.push(Violation::ObjectiveCountMismatch { dag_k: spec.dag.k(), channels: spec.rewards.len() });
    }
    for (i, per_obj) in spec.rewards.iter().enumerate() {
        if per_obj.len() != ns {
            report.push(Violation::RewardShape {
                location: format!("objective {}: {} states, expected {ns}", i + 1, per_obj.len()),
            });
            continue;
        }
        for (s, row) in per_obj.iter().enumerate() {
            if row.len() != na {
                report.push(Violation::RewardShape {
                    location: format!("objective {}, state {s}: {} actions, expected {na}", i + 1, row.len()),
                });
                continue;
            }
            for (a, &r) in row.iter().enumerate() {
                if !r.is_finite() {
                    report.push(Violation::NonFiniteReward { objective: i + 1, state: s, action: a, value: to_f64(r) });
                }
            }
        }
    }
    report
}

/// Non-empty validation report.
#[derive(Debug, Clone, PartialEq)]
pub struct InvalidSpec(pub Vec<Violation>);

impl fmt::Display for InvalidSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid TMDP:")?;
        for v in &self.0 {
            write!(f, " [{v}]")?;
        }
        Ok(())
    }
}

impl std::error::Error for InvalidSpec {}

/// `Ok(())` when the model is valid.
pub fn ensure_valid<T: Scalar>(spec: &TmdpSpec<T>) -> Result<(), InvalidSpec> {
    let report = validate(spec);
    if report.is_empty() {
        Ok(())
    } else {
        Err(InvalidSpec(report))
    }
}

/// Real number that deserializes from either a TOML integer or float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Real(pub f64);

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RealVisitor;
        impl de::Visitor<'_> for RealVisitor {
            type Value = Real;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
                Ok(Real(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
        }
        d.deserialize_any(RealVisitor)
    }
}

/// On-disk TMDP document (TOML).
///
/// ```toml
/// n_states = 2
/// n_actions = 1
/// gamma = 0.5
/// initial_state = 0
/// transition = [[[0, 1]], [[0, 1]]]      # [state][action][next]
/// rewards = [[[0], [1]], [[1], [0]]]     # [objective][state][action]
/// edges = [[1, 2, 0.25]]                 # [parent, child, global slack]
/// ```
///
/// `n_objectives` is optional and defaults to the number of reward channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: Real,
    pub initial_state: usize,
    pub transition: Vec<Vec<Vec<Real>>>,
    pub rewards: Vec<Vec<Vec<Real>>>,
    #[serde(default)]
    pub edges: Vec<(usize, usize, Real)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_objectives: Option<usize>,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("TMDP document parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Invalid(#[from] InvalidSpec),
}

impl TmdpDocument {
    /// Builds and validates the model.
    pub fn into_spec<T: Scalar>(self) -> Result<TmdpSpec<T>, LoadError> {
        let k = self.n_objectives.unwrap_or(self.rewards.len());
        let dag = ObjectiveDag::new(k, self.edges.iter().map(|&(w, v, d)| (w, v, cast::<T>(d.0))))?;
        let spec = TmdpSpec::new(
            self.n_states,
            self.n_actions,
            map3(&self.transition, |x| cast(x.0)),
            map3(&self.rewards, |x| cast(x.0)),
            cast(self.gamma.0),
            dag,
            self.initial_state,
        );
        ensure_valid(&spec)?;
        Ok(spec)
    }
}

/// Parses and validates a TOML TMDP document.
pub fn parse_tmdp<T: Scalar>(text: &str) -> Result<TmdpSpec<T>, LoadError> {
    let doc: TmdpDocument = toml::from_str(text)?;
    doc.into_spec()
}

fn map3<A: Copy, B>(x: &[Vec<Vec<A>>], f: impl Fn(A) -> B + Copy) -> Vec<Vec<Vec<B>>> {
    x.iter().map(|m| m.iter().map(|r| r.iter().map(|&v| f(v)).collect()).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_STATE: &str = r#"
n_states = 2
n_actions = 1
gamma = 0.5
initial_state = 0
transition = [[[0, 1]], [[0.0, 1.0]]]
rewards = [[[0], [1]], [[1.5], [0]]]
edges = [[1, 2, 0.25]]
"#;

    #[test]
    fn well_formed_document_is_valid() {
        let spec: TmdpSpec<f64> = parse_tmdp(TWO_STATE).unwrap();
        assert!(validate(&spec).is_empty());
        assert_eq!(spec.n_objectives(), 2);
        assert_eq!(spec.reward(2, 0, 0), 1.5);
        assert_eq!(spec.successors(0, 0), &[(1, 1.0)]);
        assert_eq!(spec.dag().edges()[0].slack, 0.25);
    }

    #[test]
    fn document_round_trips() {
        let spec: TmdpSpec<f64> = parse_tmdp(TWO_STATE).unwrap();
        let again: TmdpSpec<f64> = parse_tmdp(&spec.to_toml()).unwrap();
        assert_eq!(again.to_document(), spec.to_document());
    }

    #[test]
    fn short_row_is_reported() {
        let text = TWO_STATE.replace("[[0.0, 1.0]]", "[[0.0, 0.9]]");
        let doc: TmdpDocument = toml::from_str(&text).unwrap();
        let err = doc.into_spec::<f64>().unwrap_err();
        let LoadError::Invalid(InvalidSpec(report)) = err else { panic!("expected invalid spec") };
        assert_eq!(report.len(), 1);
        assert!(matches!(report[0], Violation::RowNotStochastic { state: 1, action: 0, sum } if (sum - 0.9).abs() < 1e-12));
    }

    #[test]
    fn channel_count_mismatch_is_reported() {
        let dag = ObjectiveDag::new(2, [(1, 2, 0.0)]).unwrap();
        let spec = TmdpSpec::new(
            1,
            1,
            vec![vec![vec![1.0]]],
            vec![vec![vec![0.0]]; 3],
            0.9,
            dag,
            0,
        );
        let report = validate(&spec);
        assert_eq!(report, vec![Violation::ObjectiveCountMismatch { dag_k: 2, channels: 3 }]);
        assert!(ensure_valid(&spec).is_err());
    }

    #[test]
    fn other_violations() {
        let spec = TmdpSpec::new(
            1,
            1,
            vec![vec![vec![-0.5]]],
            vec![vec![vec![f64::NAN]]],
            1.0,
            ObjectiveDag::single(),
            3,
        );
        let report = validate(&spec);
        assert!(report.contains(&Violation::GammaOutOfRange(1.0)));
        assert!(report.iter().any(|v| matches!(v, Violation::BadProbability { .. })));
        assert!(report.iter().any(|v| matches!(v, Violation::NonFiniteReward { .. })));
        assert!(report.iter().any(|v| matches!(v, Violation::InitialStateOutOfRange { .. })));
        assert!(report.iter().any(|v| matches!(v, Violation::RowNotStochastic { .. })));
    }

    #[test]
    fn cyclic_edges_fail_to_load() {
        let text = TWO_STATE.replace("edges = [[1, 2, 0.25]]", "edges = [[1, 2, 0.25], [2, 1, 0.0]]");
        assert!(matches!(parse_tmdp::<f64>(&text), Err(LoadError::Dag(DagError::CycleDetected(_)))));
    }
}
