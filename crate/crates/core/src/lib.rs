//! Topological MDPs: multi-objective decision processes whose objectives are
//! ordered by a DAG of slack constraints.
//!
//! * [`dag`] and [`model`]: the objective DAG, local slacks and the tabular model.
//! * [`tabular`]: exact solvers (restricted value iteration, Lagrangian Bellman
//!   iteration, brute-force oracle).
//! * [`tpo`]: topological policy optimization with generalized Lagrangian
//!   advantage estimation.
//! * [`navenv`]: the multi-objective grid navigation domain.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`.

pub mod dag;
pub mod linalg;
pub mod model;
pub mod navenv;
pub mod scalar;
pub mod tabular;
pub mod tpo;

pub use dag::{local_slacks, topological_order, DagError, Edge, LocalSlacks, ObjectiveDag};
pub use model::{ensure_valid, parse_tmdp, validate, TmdpDocument, TmdpSpec, Violation};
pub use scalar::Scalar;

pub type ObjectiveDag64 = ObjectiveDag<f64>;
pub type LocalSlacks64 = LocalSlacks<f64>;
pub type TmdpSpec64 = TmdpSpec<f64>;
pub type TabularSolution64 = tabular::TabularSolution<f64>;
pub type ObjectiveSolution64 = tabular::ObjectiveSolution<f64>;
pub type SolverConfig64 = tabular::SolverConfig<f64>;
pub type Policy64 = tpo::Policy<f64>;
pub type Critic64 = tpo::Critic<f64>;
pub type CriticSet64 = tpo::CriticSet<f64>;
pub type TrainConfig64 = tpo::TrainConfig<f64>;
pub type Trajectory64 = tpo::Trajectory<f64>;
