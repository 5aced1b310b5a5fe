//! Experiment configuration (TOML).
//!
//! ```toml
//! schema = 1
//! map = "builtin:home"      # or a path to a map file
//! seed = 0
//! out = "out/chain-mag"
//! exact = true              # solve exactly instead of training
//!
//! [dag]
//! preset = "chain-MAG"      # chain-MAG, chain-AMG, chain-GMA, fan-AM-G, single-G
//! eta = 0.0                 # local slack: one value for every edge, or one per edge
//!
//! [sweep]
//! values = [0.0, 1.0, 5.0]
//! kind = "eta"              # or "delta" (global slack, converted with (1 - gamma))
//! edges = [[1, 2]]          # edges the value binds to; every edge when absent
//!
//! [train]
//! iterations = 20000
//! policy = { kind = "tabular" }
//!
//! [eval]
//! episodes = 1000
//! horizon = 1000
//! ```
//!
//! Instead of a preset, `[dag]` may list `channels = ["M", "A", "G"]` (the
//! reward channel of objectives 1, 2, ...) and `edges = [[1, 2], [2, 3]]`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tmdp::navenv::{load_map, Channel, NavMap, HOME_MAP};
use tmdp::tpo::{ApproxKind, BetaMode, OptimizerKind, PenaltyTiming, TrainConfig};
use tmdp::dag::global_slack;
use tmdp::ObjectiveDag;

use crate::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;
pub const BUILTIN_HOME: &str = "builtin:home";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema: u32,
    #[serde(default = "builtin_home")]
    pub map: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub exact: bool,
    pub dag: DagSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn builtin_home() -> String {
    BUILTIN_HOME.into()
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// One number for every edge, or one per edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerEdge {
    All(f64),
    Each(Vec<f64>),
}

impl Default for PerEdge {
    fn default() -> Self {
        PerEdge::All(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DagSection {
    pub preset: Option<String>,
    pub channels: Option<Vec<String>>,
    pub edges: Option<Vec<[usize; 2]>>,
    /// Local slack `η`. Ignored when `delta` is given.
    #[serde(default)]
    pub eta: PerEdge,
    /// Global slack `δ`, converted to `η = (1 − γ) δ`.
    pub delta: Option<PerEdge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlackKind {
    #[default]
    Eta,
    Delta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub values: Vec<f64>,
    #[serde(default)]
    pub kind: SlackKind,
    pub edges: Option<Vec<[usize; 2]>>,
    /// Fill the `seconds` column with wall-clock time. Off by default so that
    /// reruns produce identical files.
    #[serde(default)]
    pub record_seconds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ApproxSection {
    Tabular,
    /// Linear in the one-hot cell features (tabular plus a shared bias).
    Linear,
    Mlp { hidden: usize },
}

impl ApproxSection {
    pub fn resolve(self, n_states: usize) -> ApproxKind {
        match self {
            ApproxSection::Tabular => ApproxKind::Tabular { n_states },
            ApproxSection::Linear => ApproxKind::Linear { n_features: n_states },
            ApproxSection::Mlp { hidden } => ApproxKind::Mlp { n_features: n_states, hidden },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BetaSection {
    Fixed { value: f64 },
    Auto { factor: f64 },
    PerBatch { margin: f64 },
}

/// Training settings; absent fields take the library defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub clip_eps: Option<f64>,
    pub entropy_coef: Option<f64>,
    pub policy_lr: Option<f64>,
    pub critic_lr: Option<f64>,
    pub iterations: Option<usize>,
    /// Per-objective budgets, keyed by objective index.
    #[serde(default)]
    pub iterations_per_objective: BTreeMap<String, usize>,
    pub batch_episodes: Option<usize>,
    pub horizon: Option<usize>,
    pub ppo_epochs: Option<usize>,
    pub critic_epochs: Option<usize>,
    pub beta: Option<BetaSection>,
    pub optimizer: Option<OptimizerKind>,
    pub normalize_advantages: Option<bool>,
    pub penalty_timing: Option<PenaltyTiming>,
    pub policy: Option<ApproxSection>,
    pub critic: Option<ApproxSection>,
    /// Half-width of the uniform noise around zero in the initial policy.
    pub init_scale: Option<f64>,
    /// Iterations between evaluation snapshots in the training log; 0 disables.
    pub snapshot_every: Option<usize>,
    pub snapshot_episodes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_episodes() -> usize {
    1000
}

fn default_horizon() -> usize {
    1000
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { episodes: default_episodes(), horizon: default_horizon() }
    }
}

/// Reward channel per objective and `(parent, child)` edges.
pub type Shape = (Vec<Channel>, Vec<(usize, usize)>);

/// Named DAG shapes.
pub fn preset(name: &str) -> Option<Shape> {
    use Channel::*;
    let chain = vec![(1, 2), (2, 3)];
    Some(match name.to_ascii_lowercase().replace('→', "-").as_str() {
        "chain-mag" => (vec![Monitor, Avoid, Goal], chain),
        "chain-amg" => (vec![Avoid, Monitor, Goal], chain),
        "chain-gma" => (vec![Goal, Monitor, Avoid], chain),
        "fan-am-g" | "fan-amg" => (vec![Avoid, Monitor, Goal], vec![(1, 3), (2, 3)]),
        "single-g" => (vec![Goal], vec![]),
        "single-a" => (vec![Avoid], vec![]),
        "single-m" => (vec![Monitor], vec![]),
        _ => return None,
    })
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!("config schema {} is not supported (expected {SCHEMA_VERSION})", cfg.schema)));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load_map(&self) -> Result<NavMap, HarnessError> {
        let text = if self.map == BUILTIN_HOME {
            HOME_MAP.to_string()
        } else {
            std::fs::read_to_string(&self.map).map_err(|e| HarnessError::io(Path::new(&self.map), e))?
        };
        load_map(&text).map_err(|e| HarnessError::Validation(format!("map {}: {e}", self.map)))
    }

    /// Channels per objective and edge pairs.
    pub fn shape(&self) -> Result<Shape, HarnessError> {
        let d = &self.dag;
        match (&d.preset, &d.channels, &d.edges) {
            (Some(p), None, None) => preset(p).ok_or_else(|| HarnessError::Config(format!("unknown DAG preset {p:?}"))),
            (None, Some(ch), edges) => {
                let channels = ch
                    .iter()
                    .map(|c| {
                        let mut chars = c.chars();
                        match (chars.next().and_then(Channel::from_letter), chars.next()) {
                            (Some(ch), None) => Ok(ch),
                            _ => Err(HarnessError::Config(format!("unknown channel {c:?} (use G, A or M)"))),
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let edges = edges.iter().flatten().map(|&[w, v]| (w, v)).collect();
                Ok((channels, edges))
            }
            _ => Err(HarnessError::Config("[dag] needs either `preset` or `channels` (with optional `edges`)".into())),
        }
    }

    pub fn gamma(&self) -> f64 {
        self.train.gamma.unwrap_or(0.99)
    }

    /// Base local slack of every edge.
    pub fn base_eta(&self, n_edges: usize) -> Result<Vec<f64>, HarnessError> {
        let gamma = self.gamma();
        let (values, to_eta): (&PerEdge, f64) = match &self.dag.delta {
            Some(d) => (d, 1.0 - gamma),
            None => (&self.dag.eta, 1.0),
        };
        let v = match values {
            PerEdge::All(x) => vec![*x; n_edges],
            PerEdge::Each(xs) if xs.len() == n_edges => xs.clone(),
            PerEdge::Each(xs) => return Err(HarnessError::Config(format!("{} slack values for {n_edges} edges", xs.len()))),
        };
        if let Some(bad) = v.iter().find(|x| !(**x >= 0.0)) {
            return Err(HarnessError::Config(format!("slack {bad} must be >= 0")));
        }
        Ok(v.into_iter().map(|x| x * to_eta).collect())
    }

    /// Library training config. Slacks and the critic kind are set per run.
    pub fn train_config(&self) -> Result<TrainConfig<f64>, HarnessError> {
        let t = &self.train;
        let d = TrainConfig::<f64>::default();
        let mut overrides = BTreeMap::new();
        for (key, &n) in &t.iterations_per_objective {
            let i: usize = key.parse().map_err(|_| HarnessError::Config(format!("iterations_per_objective key {key:?} is not an objective index")))?;
            overrides.insert(i, n);
        }
        let cfg = TrainConfig {
            gamma: self.gamma(),
            lambda: t.lambda.unwrap_or(d.lambda),
            clip_eps: t.clip_eps.unwrap_or(d.clip_eps),
            entropy_coef: t.entropy_coef.unwrap_or(d.entropy_coef),
            policy_lr: t.policy_lr.unwrap_or(d.policy_lr),
            critic_lr: t.critic_lr.unwrap_or(d.critic_lr),
            iterations: t.iterations.unwrap_or(d.iterations),
            iterations_override: overrides,
            batch_episodes: t.batch_episodes.unwrap_or(d.batch_episodes),
            horizon: t.horizon.unwrap_or(d.horizon),
            ppo_epochs: t.ppo_epochs.unwrap_or(d.ppo_epochs),
            critic_epochs: t.critic_epochs.unwrap_or(d.critic_epochs),
            beta: match t.beta {
                None => d.beta,
                Some(BetaSection::Fixed { value }) => BetaMode::Fixed(value),
                Some(BetaSection::Auto { factor }) => BetaMode::AutoScale { factor },
                Some(BetaSection::PerBatch { margin }) => BetaMode::PerBatch { margin },
            },
            eta: None,
            seed: self.seed,
            optimizer: t.optimizer.unwrap_or(d.optimizer),
            normalize_advantages: t.normalize_advantages.unwrap_or(d.normalize_advantages),
            penalty_timing: t.penalty_timing.unwrap_or(d.penalty_timing),
            critic_kind: None,
        };
        cfg.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

/// DAG with global slacks matching local slacks `eta` under `gamma`.
/// Unbounded slacks are stored as the largest finite value.
pub fn dag_with_eta(k: usize, pairs: &[(usize, usize)], eta: &[f64], gamma: f64) -> Result<ObjectiveDag<f64>, HarnessError> {
    let edges = pairs.iter().zip(eta).map(|(&(w, v), &e)| (w, v, global_slack(e, gamma).min(f64::MAX)));
    ObjectiveDag::new(k, edges).map_err(|e| HarnessError::Validation(format!("dag: {e}")))
}
