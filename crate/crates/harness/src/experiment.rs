use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tmdp::linalg::evaluate_deterministic;
use tmdp::navenv::{monte_carlo_value, policy_grid, to_tabular, Action, Channel, McEstimate, NavEnv, NavMap};
use tmdp::tabular::{lagrangian_value_iteration, solve_lar, SolverConfig, TabularSolution, DEFAULT_BETA_MARGIN};
use tmdp::tpo::{iteration_seed, tpo_train_observed, Checkpoint, Environment, Policy, TrainConfig};
use tmdp::{LocalSlacks, ObjectiveDag, TmdpSpec};

use crate::config::{dag_with_eta, ApproxSection, ExperimentConfig, SlackKind};
use crate::HarnessError;

// seed tags, kept clear of the training phases 0..=k
const INIT_PHASE: u64 = u64::MAX;
const EVAL_PHASE: u64 = u64::MAX - 1;
const SNAPSHOT_PHASE: u64 = u64::MAX - 2;
const SWEEP_PHASE: u64 = u64::MAX - 3;

/// Seed of sweep point `index`.
pub fn point_seed(seed: u64, index: usize) -> u64 {
    iteration_seed(seed, SWEEP_PHASE, index as u64)
}

/// A resolved experiment: map, objective channels and base slacks.
#[derive(Debug, Clone)]
pub struct Setup {
    pub map: NavMap,
    pub channels: Vec<Channel>,
    pub pairs: Vec<(usize, usize)>,
    pub eta: Vec<f64>,
    pub gamma: f64,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let map = cfg.load_map()?;
        let (channels, pairs) = cfg.shape()?;
        let eta = cfg.base_eta(pairs.len())?;
        let setup = Self { map, channels, pairs, eta, gamma: cfg.gamma() };
        setup.dag(&setup.eta)?;
        Ok(setup)
    }

    pub fn k(&self) -> usize {
        self.channels.len()
    }

    pub fn dag(&self, eta: &[f64]) -> Result<ObjectiveDag<f64>, HarnessError> {
        dag_with_eta(self.k(), &self.pairs, eta, self.gamma)
    }

    pub fn slacks(&self, dag: &ObjectiveDag<f64>, eta: &[f64]) -> Result<LocalSlacks<f64>, HarnessError> {
        LocalSlacks::from_values(dag, eta.to_vec()).map_err(|e| HarnessError::Validation(e.to_string()))
    }

    pub fn spec(&self, dag: ObjectiveDag<f64>) -> Result<TmdpSpec<f64>, HarnessError> {
        Ok(to_tabular(&self.map, self.gamma, dag, &self.channels)?)
    }

    /// Hash of the DAG together with the channel of each objective and the
    /// map, so that a checkpoint only loads into the problem it was trained on.
    pub fn problem_hash(&self, dag: &ObjectiveDag<f64>) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(dag.fingerprint());
        h.update(self.channels.iter().map(|c| c.letter()).collect::<String>());
        h.update(self.map.to_text());
        h.finalize().into()
    }

    pub fn env(&self) -> NavEnv<f64> {
        NavEnv::new(self.map.clone(), self.channels.clone())
    }

    /// Local slacks at sweep value `value`.
    fn eta_at(&self, cfg: &ExperimentConfig, value: f64) -> Result<Vec<f64>, HarnessError> {
        let sweep = cfg.sweep.as_ref().ok_or_else(|| HarnessError::Config("no [sweep] section".into()))?;
        if !(value >= 0.0) {
            return Err(HarnessError::Config(format!("sweep value {value} must be >= 0")));
        }
        let eta_value = match sweep.kind {
            SlackKind::Eta => value,
            SlackKind::Delta => value * (1.0 - self.gamma),
        };
        let mut eta = self.eta.clone();
        match &sweep.edges {
            None => eta.iter_mut().for_each(|e| *e = eta_value),
            Some(edges) => {
                for &[w, v] in edges {
                    let j = self
                        .pairs
                        .iter()
                        .position(|&p| p == (w, v))
                        .ok_or_else(|| HarnessError::Config(format!("sweep edge ({w}, {v}) is not in the DAG")))?;
                    eta[j] = eta_value;
                }
            }
        }
        Ok(eta)
    }
}

/// Exact discounted values of every channel from the start cell under a
/// deterministic policy, indexed like [`Channel::ALL`].
pub fn exact_channel_values(map: &NavMap, gamma: f64, policy: &[usize]) -> Result<[f64; 3], HarnessError> {
    let all = ObjectiveDag::new(3, [(1, 3, 0.0), (2, 3, 0.0)]).expect("fixed fan");
    let spec = to_tabular(map, gamma, all, &Channel::ALL)?;
    let s0 = spec.initial_state();
    Ok([1, 2, 3].map(|i| evaluate_deterministic(&spec, i, policy)[s0]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactReport {
    /// Largest `|V_lar − V_lagrangian|` over objectives and states.
    pub max_value_gap: f64,
    pub leaf_value: f64,
    /// Start-cell values of the leaf policy, indexed like [`Channel::ALL`].
    pub values: [f64; 3],
    pub policy: Vec<usize>,
}

/// LAR solution at local slacks `eta`, plus the Lagrangian cross-check.
pub fn exact_solution(setup: &Setup, eta: &[f64], cross_check: bool) -> Result<(TabularSolution<f64>, ExactReport), HarnessError> {
    let dag = setup.dag(eta)?;
    let slacks = setup.slacks(&dag, eta)?;
    let spec = setup.spec(dag)?;
    let cfg = SolverConfig::default();
    let lar = solve_lar(&spec, &slacks, &cfg)?;
    let max_value_gap = if cross_check {
        let lag = lagrangian_value_iteration(&spec, &slacks, DEFAULT_BETA_MARGIN, &cfg)?;
        lar.max_value_gap(&lag)
    } else {
        0.0
    };
    let policy = lar.policy().to_vec();
    let values = exact_channel_values(&setup.map, setup.gamma, &policy)?;
    let report = ExactReport { max_value_gap, leaf_value: lar.leaf_value(), values, policy };
    Ok((lar, report))
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

#[derive(Serialize)]
struct ValueRow {
    state: usize,
    row: usize,
    col: usize,
    v: f64,
    q_up: f64,
    q_down: f64,
    q_left: f64,
    q_right: f64,
    allowed: String,
}

/// Solves the configured TMDP exactly and writes `objective_<i>.csv` (V and
/// Q per cell), `policy.txt` (leaf policy as arrows) and `summary.txt`.
pub fn solve_exact(cfg: &ExperimentConfig, out: &Path) -> Result<ExactReport, HarnessError> {
    let setup = Setup::new(cfg)?;
    let (lar, report) = exact_solution(&setup, &setup.eta, true)?;
    create_dir(out)?;
    for &i in lar.order() {
        let sol = lar.objective(i);
        let path = out.join(format!("objective_{i}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(csv_io(&path))?;
        for s in 0..setup.map.n_free() {
            let cell = setup.map.cell(s);
            let q = &sol.q[s];
            let allowed = sol.allowed[s].iter().map(|&a| Action::ALL[a].symbol()).collect();
            w.serialize(ValueRow { state: s, row: cell.row, col: cell.col, v: sol.v[s], q_up: q[0], q_down: q[1], q_left: q[2], q_right: q[3], allowed })?;
        }
        w.flush().map_err(|e| HarnessError::io(&path, e))?;
    }
    write_file(&out.join("policy.txt"), policy_grid(&setup.map, &report.policy))?;
    let mut summary = format!("max |V_lar - V_lagrangian| = {:e}\nleaf value = {}\n", report.max_value_gap, report.leaf_value);
    for ch in Channel::ALL {
        summary.push_str(&format!("V_{} = {}\n", channel_name(ch), report.values[ch as usize]));
    }
    write_file(&out.join("summary.txt"), summary)?;
    Ok(report)
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::Validation(format!("{}: {other:?}", path.display())),
    }
}

pub fn channel_name(ch: Channel) -> &'static str {
    match ch {
        Channel::Goal => "goal",
        Channel::Avoid => "avoid",
        Channel::Monitor => "monitor",
    }
}

fn initial_policy(cfg: &ExperimentConfig, n_states: usize) -> Policy<f64> {
    let kind = cfg.train.policy.unwrap_or(ApproxSection::Tabular).resolve(n_states);
    let mut rng = ChaCha8Rng::seed_from_u64(iteration_seed(cfg.seed, INIT_PHASE, 0));
    Policy::new(kind, Action::ALL.len(), cfg.train.init_scale.unwrap_or(0.01), &mut rng)
}

/// Monte Carlo evaluation of a stochastic policy from the start cell.
pub fn mc_evaluate(map: &NavMap, env: &NavEnv<f64>, policy: &Policy<f64>, gamma: f64, episodes: usize, horizon: usize, seed: u64) -> McEstimate<f64> {
    monte_carlo_value(map, |s, rng| policy.sample(env.obs(s), rng).0, gamma, episodes, horizon, seed)
}

#[derive(Debug, Serialize)]
struct LogRow {
    objective: usize,
    iteration: usize,
    loss: f64,
    entropy: f64,
    clip_fraction: f64,
    mean_return: f64,
    mean_penalty: f64,
    beta: f64,
    critic_loss: f64,
}

#[derive(Debug, Serialize)]
struct SnapshotRow {
    objective: usize,
    iteration: usize,
    v_avoid: f64,
    v_monitor: f64,
    v_goal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    /// Objectives in training order.
    pub phases: Vec<usize>,
}

struct Trained {
    checkpoint: Checkpoint<f64>,
    log: Vec<LogRow>,
    snapshots: Vec<SnapshotRow>,
}

fn train_setup(cfg: &ExperimentConfig, setup: &Setup, eta: &[f64], seed: u64) -> Result<(ObjectiveDag<f64>, TrainConfig<f64>), HarnessError> {
    let dag = setup.dag(eta)?;
    let mut tc = cfg.train_config()?;
    tc.eta = Some(setup.slacks(&dag, eta)?);
    tc.seed = seed;
    tc.critic_kind = cfg.train.critic.map(|c| c.resolve(setup.map.n_free()));
    Ok((dag, tc))
}

/// DAG and training-config hashes a checkpoint trained on `cfg` carries.
pub fn fingerprints(cfg: &ExperimentConfig) -> Result<([u8; 32], [u8; 32]), HarnessError> {
    let setup = Setup::new(cfg)?;
    let (dag, tc) = train_setup(cfg, &setup, &setup.eta, cfg.seed)?;
    Ok((setup.problem_hash(&dag), tc.fingerprint()))
}

fn run_training(cfg: &ExperimentConfig, setup: &Setup, eta: &[f64], seed: u64, snapshots: bool) -> Result<Trained, HarnessError> {
    let (dag, tc) = train_setup(cfg, setup, eta, seed)?;
    let env = setup.env();
    let every = if snapshots { cfg.train.snapshot_every.unwrap_or(1000) } else { 0 };
    let episodes = cfg.train.snapshot_episodes.unwrap_or(20);
    let mut snaps = Vec::new();
    let mut observer = |i: usize, it: usize, p: &Policy<f64>| {
        if every > 0 && (it + 1).is_multiple_of(every) {
            let est = mc_evaluate(&setup.map, &env, p, setup.gamma, episodes, cfg.eval.horizon, iteration_seed(seed, SNAPSHOT_PHASE, it as u64));
            snaps.push(SnapshotRow {
                objective: i,
                iteration: it,
                v_avoid: est.mean(Channel::Avoid),
                v_monitor: est.mean(Channel::Monitor),
                v_goal: est.mean(Channel::Goal),
            });
        }
    };
    let mut init_cfg = cfg.clone();
    init_cfg.seed = seed;
    let out = tpo_train_observed(&env, &dag, &tc, initial_policy(&init_cfg, setup.map.n_free()), &mut observer)?;
    let log = out
        .phases
        .iter()
        .flat_map(|ph| {
            ph.iterations.iter().map(move |l| LogRow {
                objective: ph.objective,
                iteration: l.iteration,
                loss: l.loss,
                entropy: l.entropy,
                clip_fraction: l.clip_fraction,
                mean_return: l.mean_return,
                mean_penalty: l.mean_penalty,
                beta: l.beta,
                critic_loss: l.critic_loss,
            })
        })
        .collect();
    let checkpoint = Checkpoint { dag_hash: setup.problem_hash(&dag), config_hash: tc.fingerprint(), policy: out.policy, critics: out.critics };
    Ok(Trained { checkpoint, log, snapshots: snaps })
}

fn write_rows<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io(path))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Trains with the configured DAG and slacks and writes `checkpoint.bin`,
/// `train_log.csv` (one row per iteration) and `snapshots.csv` (Monte Carlo
/// values every `snapshot_every` iterations).
pub fn train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainReport, HarnessError> {
    let setup = Setup::new(cfg)?;
    let trained = run_training(cfg, &setup, &setup.eta, cfg.seed, true)?;
    create_dir(out)?;
    let checkpoint = out.join("checkpoint.bin");
    write_file(&checkpoint, trained.checkpoint.to_bytes())?;
    let log = out.join("train_log.csv");
    write_rows(&log, &trained.log)?;
    write_rows(&out.join("snapshots.csv"), &trained.snapshots)?;
    let mut phases: Vec<usize> = trained.log.iter().map(|r| r.objective).collect();
    phases.dedup();
    Ok(TrainReport { checkpoint, log, phases })
}

#[derive(Debug, Serialize)]
struct EvalRow {
    channel: &'static str,
    value: f64,
    std_err: f64,
}

/// Monte Carlo values of a checkpoint's policy. The checkpoint must have been
/// trained on this config's DAG and training settings.
pub fn evaluate(cfg: &ExperimentConfig, checkpoint: &Path, out: Option<&Path>) -> Result<McEstimate<f64>, HarnessError> {
    let setup = Setup::new(cfg)?;
    let bytes = fs::read(checkpoint).map_err(|e| HarnessError::io(checkpoint, e))?;
    let ck = Checkpoint::<f64>::read_from(&bytes[..])?;
    let (dag, tc) = train_setup(cfg, &setup, &setup.eta, cfg.seed)?;
    ck.verify(&setup.problem_hash(&dag), Some(&tc.fingerprint()))?;
    let env = setup.env();
    if ck.policy.n_actions() != Action::ALL.len() || !fits(&ck.policy, env.n_states()) {
        return Err(HarnessError::Validation("checkpoint policy does not match the map".into()));
    }
    let est = mc_evaluate(&setup.map, &env, &ck.policy, setup.gamma, cfg.eval.episodes, cfg.eval.horizon, iteration_seed(cfg.seed, EVAL_PHASE, 0));
    if let Some(dir) = out {
        create_dir(dir)?;
        let rows: Vec<EvalRow> = Channel::ALL.iter().map(|&c| EvalRow { channel: channel_name(c), value: est.mean(c), std_err: est.std_err(c) }).collect();
        write_rows(&dir.join("evaluation.csv"), &rows)?;
    }
    Ok(est)
}

fn fits(policy: &Policy<f64>, n_states: usize) -> bool {
    use tmdp::tpo::ApproxKind;
    match policy.kind() {
        ApproxKind::Tabular { n_states: n } => n == n_states,
        ApproxKind::Linear { n_features } | ApproxKind::Mlp { n_features, .. } => n_features == n_states,
    }
}

/// One sweep point. Column order is the versioned CSV schema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub v_avoid: f64,
    pub se_avoid: f64,
    pub v_monitor: f64,
    pub se_monitor: f64,
    pub v_goal: f64,
    pub se_goal: f64,
    pub seconds: f64,
}

impl SweepRow {
    pub fn value(&self, ch: Channel) -> f64 {
        match ch {
            Channel::Goal => self.v_goal,
            Channel::Avoid => self.v_avoid,
            Channel::Monitor => self.v_monitor,
        }
    }
}

pub const SWEEP_HEADER: &str = "sweep_value,v_avoid,se_avoid,v_monitor,se_monitor,v_goal,se_goal,seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub csv: PathBuf,
    pub svg: PathBuf,
}

impl SweepResult {
    pub fn column(&self, ch: Channel) -> Vec<f64> {
        self.rows.iter().map(|r| r.value(ch)).collect()
    }
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_io(path))?;
    Ok(r.deserialize().collect::<Result<Vec<SweepRow>, _>>()?)
}

fn sweep_point(cfg: &ExperimentConfig, setup: &Setup, exact: bool, index: usize, value: f64) -> Result<SweepRow, HarnessError> {
    let started = Instant::now();
    let eta = setup.eta_at(cfg, value)?;
    let (values, se) = if exact {
        let (_, report) = exact_solution(setup, &eta, false)?;
        (report.values, [0.0; 3])
    } else {
        let seed = point_seed(cfg.seed, index);
        let trained = run_training(cfg, setup, &eta, seed, false)?;
        let env = setup.env();
        let est = mc_evaluate(&setup.map, &env, &trained.checkpoint.policy, setup.gamma, cfg.eval.episodes, cfg.eval.horizon, iteration_seed(seed, EVAL_PHASE, 0));
        (est.mean, est.std_err)
    };
    let record = cfg.sweep.as_ref().is_some_and(|s| s.record_seconds);
    let (a, m, g) = (Channel::Avoid as usize, Channel::Monitor as usize, Channel::Goal as usize);
    Ok(SweepRow {
        sweep_value: value,
        v_avoid: values[a],
        se_avoid: se[a],
        v_monitor: values[m],
        se_monitor: se[m],
        v_goal: values[g],
        se_goal: se[g],
        seconds: if record { started.elapsed().as_secs_f64() } else { 0.0 },
    })
}

/// Evaluates every sweep value (exactly, or by training and Monte Carlo
/// evaluation) and writes `sweep.csv` and `sweep.svg`.
///
/// Points run in parallel with per-point seeds; rows are written in sweep
/// order. If a point fails, the rows before it are still written and a
/// `sweep.partial` file records the error.
pub fn run_sweep(cfg: &ExperimentConfig, exact: bool, out: &Path) -> Result<SweepResult, HarnessError> {
    let setup = Setup::new(cfg)?;
    let sweep = cfg.sweep.as_ref().ok_or_else(|| HarnessError::Config("no [sweep] section".into()))?;
    if sweep.values.is_empty() {
        return Err(HarnessError::Config("sweep has no values".into()));
    }
    for &v in &sweep.values {
        setup.eta_at(cfg, v)?;
    }
    let results: Vec<Result<SweepRow, HarnessError>> =
        sweep.values.par_iter().enumerate().map(|(j, &v)| sweep_point(cfg, &setup, exact, j, v)).collect();
    create_dir(out)?;
    let mut rows = Vec::new();
    let mut failure = None;
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let csv = out.join("sweep.csv");
    write_rows_with_header(&csv, &rows)?;
    let svg = out.join("sweep.svg");
    write_file(&svg, crate::chart::sweep_svg(&rows))?;
    let marker = out.join("sweep.partial");
    match failure {
        Some(e) => {
            write_file(&marker, format!("partial: {} of {} points\n{e}\n", rows.len(), sweep.values.len()))?;
            Err(e)
        }
        None => {
            if marker.exists() {
                fs::remove_file(&marker).map_err(|e| HarnessError::io(&marker, e))?;
            }
            Ok(SweepResult { rows, csv, svg })
        }
    }
}

fn write_rows_with_header(path: &Path, rows: &[SweepRow]) -> Result<(), HarnessError> {
    if rows.is_empty() {
        return write_file(path, format!("{SWEEP_HEADER}\n"));
    }
    write_rows(path, rows)
}
