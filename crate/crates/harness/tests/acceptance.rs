//! Acceptance gate. Each test prints one PASS/FAIL line straight to stderr,
//! so the lines show up even when test output is captured.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use tmdp::navenv::Channel;
use tmdp_harness::config::ExperimentConfig;
use tmdp_harness::experiment::{evaluate, exact_solution, run_sweep, train, Setup, SweepRow};
use tmdp_harness::suites::{
    equivalence_suite, glae_reduction_suite, gradient_suite, kind_name, naive_distortion_witness, oracle_suite,
    EquivalenceReport,
};

const SEED: u64 = 0;
const INSTANCES: usize = 200;
const ORACLE_INSTANCES: usize = 50;
const VALUE_TOL: f64 = 1e-6;
const NAIVE_GAP: f64 = 1e-3;
const GRADIENT_TOL: f64 = 1e-4;
const DIRECTIONS: usize = 64;
const TRAJECTORIES: usize = 1000;
const MONOTONE_TOL: f64 = 1e-9;
/// Values on the bundled map lie in `[−1/(1 − γ), 1/(1 − γ)]`; the goal
/// channel spans `[−100, 0]` at γ = 0.99.
const GOAL_RANGE: f64 = 100.0;
const TREND_FRACTION: f64 = 0.05;
const LARGE_SLACK: f64 = 250.0;
const LEAF_REL_TOL: f64 = 0.10;

fn report(criterion: usize, passed: bool, detail: impl AsRef<str>) {
    let line = format!("acceptance {criterion:>2} {}: {}\n", if passed { "PASS" } else { "FAIL" }, detail.as_ref());
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(passed, "criterion {criterion}: {}", detail.as_ref());
}

fn equivalence() -> EquivalenceReport {
    equivalence_suite(SEED, INSTANCES).unwrap()
}

fn bundled(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

#[test]
fn criterion_01_lagrangian_solver_matches_lar() {
    let eq = equivalence();
    report(
        1,
        eq.max_gap < VALUE_TOL && eq.seconds < 120.0,
        format!("{} instances, max |dV| = {:.3e} (< {VALUE_TOL:e}), {:.2}s (< 120s)", eq.instances, eq.max_gap, eq.seconds),
    );
}

#[test]
fn criterion_02_multiplier_bound() {
    let eq = equivalence();
    report(
        2,
        eq.bound_violations == 0 && eq.zero_beta_witness.is_some(),
        format!(
            "{} of {} instances pick a violating action with the bound; zero-multiplier violation witness: seed {:?}",
            eq.bound_violations, eq.instances, eq.zero_beta_witness
        ),
    );
}

#[test]
fn criterion_03_restricted_sets_nonempty() {
    let eq = equivalence();
    report(
        3,
        eq.empty_sets == 0,
        format!("{} of {} instances with an empty restricted set ({} slack redraws for multi-parent DAGs)", eq.empty_sets, eq.instances, eq.redraws),
    );
}

#[test]
fn criterion_04_naive_lagrangian_distorts_values() {
    let w = naive_distortion_witness(SEED, INSTANCES, 1.0, NAIVE_GAP).unwrap();
    let detail = match &w {
        Some(w) => format!("seed {} with strictly feasible suboptimal actions: max |V_naive - V_lar| = {:.3e} (> {NAIVE_GAP:e})", w.seed, w.gap),
        None => "no instance distorted".into(),
    };
    report(4, w.is_some(), detail);
}

#[test]
fn criterion_05_lar_matches_exhaustive_oracle() {
    let o = oracle_suite(SEED, ORACLE_INSTANCES).unwrap();
    report(
        5,
        o.max_gap < VALUE_TOL && o.instances == ORACLE_INSTANCES,
        format!("{} instances (up to {} policies), max leaf |dV| = {:.3e} (< {VALUE_TOL:e})", o.instances, o.max_policies, o.max_gap),
    );
}

#[test]
fn criterion_06_surrogate_gradient() {
    let cases = gradient_suite(SEED, DIRECTIONS).unwrap();
    let ok = cases.len() == 6 && cases.iter().all(|c| c.report.passes(GRADIENT_TOL) && c.report.directions == DIRECTIONS && c.clip_fraction > 0.0);
    let detail = cases
        .iter()
        .map(|c| {
            format!(
                "{}/{:?} rel {:.1e}{}",
                kind_name(c.kind),
                c.report.form,
                c.report.max_rel_error,
                if c.report.penalties_invariant { "" } else { " penalties moved" }
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    report(6, ok, format!("{DIRECTIONS} directions, tol {GRADIENT_TOL:e}: {detail}"));
}

#[test]
fn criterion_07_glae_reduces_to_gae() {
    let g = glae_reduction_suite(SEED, TRAJECTORIES).unwrap();
    report(
        7,
        g.trajectories == TRAJECTORIES && g.root_mismatches == 0 && g.zero_beta_mismatches == 0,
        format!("{} trajectories: {} mismatches without ancestors, {} with zero multiplier", g.trajectories, g.root_mismatches, g.zero_beta_mismatches),
    );
}

fn exact_rows(cfg: &ExperimentConfig, name: &str) -> (Vec<SweepRow>, f64) {
    let started = Instant::now();
    let rows = run_sweep(cfg, true, &scratch(name)).unwrap().rows;
    (rows, started.elapsed().as_secs_f64())
}

fn non_decreasing(rows: &[SweepRow], ch: Channel) -> bool {
    rows.windows(2).all(|w| w[1].value(ch) >= w[0].value(ch) - MONOTONE_TOL)
}

#[test]
fn criterion_08_slack_trends_in_exact_mode() {
    // chain M -> A -> G, slack from 0 to large
    let mut mag = bundled("chain-mag.toml");
    let grid = mag.sweep.clone().unwrap();
    mag.sweep.as_mut().unwrap().values = vec![0.0, LARGE_SLACK];
    let (ends, t_mag) = exact_rows(&mag, "mag");
    let goal_gain = ends[1].v_goal - ends[0].v_goal;
    let mag_ok = goal_gain >= TREND_FRACTION * GOAL_RANGE && ends[1].v_monitor <= ends[0].v_monitor + MONOTONE_TOL;
    // the full grid, reported for information
    let mut mag_grid = bundled("chain-mag.toml");
    mag_grid.sweep = Some(grid);
    let (grid_rows, _) = exact_rows(&mag_grid, "mag-grid");

    let (gma, t_gma) = exact_rows(&bundled("chain-gma.toml"), "gma");
    let gma_ok = non_decreasing(&gma, Channel::Avoid) && non_decreasing(&gma, Channel::Monitor);
    let (fan, t_fan) = exact_rows(&bundled("fan-am-g.toml"), "fan");
    let fan_ok = non_decreasing(&fan, Channel::Goal);
    let fast = [t_mag, t_gma, t_fan].iter().all(|&t| t < 60.0);

    report(
        8,
        mag_ok && gma_ok && fan_ok && fast,
        format!(
            "M>A>G eta 0 -> {LARGE_SLACK}: V_goal {:.3} -> {:.3} (gain {:.1}% of {GOAL_RANGE}), V_monitor {:.3} -> {:.3} [{}]; \
             on the full grid V_goal non-decreasing {}, V_monitor non-increasing {}; \
             G>M>A eta1 sweep: V_avoid and V_monitor non-decreasing [{}]; (A,M)>G joint sweep: V_goal non-decreasing [{}]; \
             {t_mag:.2}s, {t_gma:.2}s, {t_fan:.2}s (< 60s each)",
            ends[0].v_goal,
            ends[1].v_goal,
            100.0 * goal_gain / GOAL_RANGE,
            ends[0].v_monitor,
            ends[1].v_monitor,
            ok(mag_ok),
            non_decreasing(&grid_rows, Channel::Goal),
            grid_rows.windows(2).all(|w| w[1].v_monitor <= w[0].v_monitor + MONOTONE_TOL),
            ok(gma_ok),
            ok(fan_ok),
        ),
    );
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "violated"
    }
}

#[test]
fn criterion_09_learned_leaf_value() {
    let cfg = bundled("train-chain-mag.toml");
    assert_eq!(cfg.train.iterations, Some(20000));
    let setup = Setup::new(&cfg).unwrap();
    let (_, exact) = exact_solution(&setup, &setup.eta, false).unwrap();
    let started = Instant::now();
    let trained = train(&cfg, &scratch("tpo")).unwrap();
    let train_seconds = started.elapsed().as_secs_f64();
    let est = evaluate(&cfg, &trained.checkpoint, None).unwrap();
    let learned = est.mean(Channel::Goal);
    let rel = (learned - exact.leaf_value).abs() / exact.leaf_value.abs();
    report(
        9,
        rel <= LEAF_REL_TOL && train_seconds < 600.0,
        format!(
            "leaf (goal) value {learned:.3} +/- {:.3} vs exact {:.3}: relative error {:.2}% (<= {}%); training {train_seconds:.0}s (< 600s); \
             avoid {:.3}, monitor {:.3} (exact {:.3}, {:.3})",
            est.std_err(Channel::Goal),
            exact.leaf_value,
            100.0 * rel,
            100.0 * LEAF_REL_TOL,
            est.mean(Channel::Avoid),
            est.mean(Channel::Monitor),
            exact.values[Channel::Avoid as usize],
            exact.values[Channel::Monitor as usize],
        ),
    );
}

#[test]
fn criterion_10_reruns_are_byte_identical() {
    let mut cfg = bundled("train-chain-mag.toml");
    cfg.train.iterations = Some(300);
    let a = train(&cfg, &scratch("train-a")).unwrap();
    let b = train(&cfg, &scratch("train-b")).unwrap();
    let same_ckpt = fs::read(&a.checkpoint).unwrap() == fs::read(&b.checkpoint).unwrap();
    let same_log = fs::read(&a.log).unwrap() == fs::read(&b.log).unwrap();

    cfg.train.iterations = Some(50);
    cfg.eval.episodes = 100;
    cfg.sweep = bundled("chain-mag.toml").sweep;
    cfg.sweep.as_mut().unwrap().values = vec![0.0, 5.0, 100.0];
    let learned_a = run_sweep(&cfg, false, &scratch("sweep-a")).unwrap();
    let learned_b = run_sweep(&cfg, false, &scratch("sweep-b")).unwrap();
    let same_learned = fs::read(&learned_a.csv).unwrap() == fs::read(&learned_b.csv).unwrap();
    let exact = bundled("fan-am-g.toml");
    let exact_a = run_sweep(&exact, true, &scratch("exact-a")).unwrap();
    let exact_b = run_sweep(&exact, true, &scratch("exact-b")).unwrap();
    let same_exact = fs::read(&exact_a.csv).unwrap() == fs::read(&exact_b.csv).unwrap();
    report(
        10,
        same_ckpt && same_log && same_learned && same_exact,
        format!(
            "checkpoint identical {same_ckpt}, training log identical {same_log}, learned sweep csv identical {same_learned}, exact sweep csv identical {same_exact}"
        ),
    );
}
