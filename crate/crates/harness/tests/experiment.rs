use std::fs;
use std::path::PathBuf;

use tmdp::navenv::{to_tabular, Channel};
use tmdp::tabular::{value_iteration, SolverConfig};
use tmdp::tpo::{Approximator, Checkpoint, CheckpointError, CriticSet, Policy};
use tmdp::ObjectiveDag;
use tmdp_harness::chart::sweep_svg;
use tmdp_harness::config::ExperimentConfig;
use tmdp_harness::experiment::{
    evaluate, exact_channel_values, exact_solution, fingerprints, read_sweep_csv, run_sweep, solve_exact, train, Setup,
};
use tmdp_harness::HarnessError;

fn fresh(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("experiment").join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

fn exact_sweep(preset: &str, values: &str, edges: &str) -> ExperimentConfig {
    config(&format!("schema = 1\nexact = true\n[dag]\npreset = \"{preset}\"\n[sweep]\nvalues = {values}\n{edges}\n"))
}

fn tiny_train(preset: &str, seed: u64) -> ExperimentConfig {
    config(&format!(
        "schema = 1\nseed = {seed}\n[dag]\npreset = \"{preset}\"\n[train]\niterations = 4\nbatch_episodes = 2\nhorizon = 40\nsnapshot_every = 2\nsnapshot_episodes = 3\n[eval]\nepisodes = 20\nhorizon = 200\n"
    ))
}

#[test]
fn solve_exact_cross_check_on_home_map() {
    let cfg = config("schema = 1\n[dag]\npreset = \"chain-MAG\"\neta = 0.0\n");
    let out = fresh("solve-exact");
    let report = solve_exact(&cfg, &out).unwrap();
    assert!(report.max_value_gap < 1e-6, "{}", report.max_value_gap);
    assert!((report.leaf_value + 100.0).abs() < 1e-6);
    for i in 1..=3 {
        let text = fs::read_to_string(out.join(format!("objective_{i}.csv"))).unwrap();
        assert!(text.starts_with("state,row,col,v,q_up,q_down,q_left,q_right,allowed\n"));
        assert_eq!(text.lines().count(), 1 + 88);
    }
    let grid = fs::read_to_string(out.join("policy.txt")).unwrap();
    assert_eq!(grid.lines().count(), 10);
    assert!(grid.lines().nth(9).unwrap().ends_with('G'));
}

#[test]
fn unbounded_slack_gives_unconstrained_optima() {
    let cfg = config("schema = 1\n[dag]\npreset = \"chain-MAG\"\n");
    let setup = Setup::new(&cfg).unwrap();
    let (lar, _) = exact_solution(&setup, &[f64::INFINITY; 2], true).unwrap();
    let spec = to_tabular(&setup.map, 0.99, ObjectiveDag::new(3, [(1, 3, 0.0), (2, 3, 0.0)]).unwrap(), &setup.channels).unwrap();
    let all: Vec<Vec<usize>> = vec![(0..4).collect(); spec.n_states()];
    for i in 1..=3 {
        let free = value_iteration(&spec, i, &all, &SolverConfig::default()).unwrap();
        let gap = lar.objective(i).v.iter().zip(&free.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-9, "objective {i}: {gap}");
    }
}

#[test]
fn unreachable_goal_is_rejected_before_solving() {
    let dir = fresh("unreachable");
    fs::create_dir_all(&dir).unwrap();
    let map = dir.join("walled.map");
    fs::write(&map, "rows 3\ncols 3\nS#.\n##.\n..G\n").unwrap();
    let cfg = config(&format!("schema = 1\nmap = {:?}\n[dag]\npreset = \"single-G\"\n", map.display().to_string()));
    let err = solve_exact(&cfg, &dir).unwrap_err();
    assert!(matches!(err, HarnessError::Validation(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
    assert!(!dir.join("policy.txt").exists());
}

#[test]
fn single_objective_sweep_is_constant() {
    let cfg = exact_sweep("single-G", "[0.0, 3.0, 50.0, 1000.0]", "");
    let res = run_sweep(&cfg, true, &fresh("single")).unwrap();
    assert_eq!(res.rows.len(), 4);
    for r in &res.rows[1..] {
        assert_eq!((r.v_goal, r.v_avoid, r.v_monitor), (res.rows[0].v_goal, res.rows[0].v_avoid, res.rows[0].v_monitor));
        assert_eq!((r.se_goal, r.seconds), (0.0, 0.0));
    }
}

#[test]
fn relaxing_the_goal_constraint_helps_monitor_and_avoid() {
    let cfg = exact_sweep("chain-GMA", "[0.0, 0.5, 1.0, 2.0, 5.0]", "edges = [[1, 2]]");
    let res = run_sweep(&cfg, true, &fresh("gma")).unwrap();
    for ch in [Channel::Avoid, Channel::Monitor] {
        let col = res.column(ch);
        assert!(col.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{ch:?}: {col:?}");
    }
    assert!(res.rows[4].v_monitor > res.rows[0].v_monitor + 1.0);
}

#[test]
fn chart_is_rebuilt_from_the_csv() {
    let cfg = exact_sweep("fan-AM-G", "[0.0, 2.0, 100.0]", "");
    let out = fresh("chart");
    let res = run_sweep(&cfg, true, &out).unwrap();
    let svg = fs::read_to_string(&res.svg).unwrap();
    fs::remove_file(&res.svg).unwrap();
    let rows = read_sweep_csv(&res.csv).unwrap();
    assert_eq!(rows, res.rows);
    assert_eq!(sweep_svg(&rows), svg);
    assert!(svg.starts_with("<svg") && svg.matches("<polyline").count() == 3);
}

#[test]
fn sweep_rejects_bad_bindings() {
    let missing = exact_sweep("chain-MAG", "[1.0]", "edges = [[1, 3]]");
    assert!(matches!(run_sweep(&missing, true, &fresh("bad-edge")), Err(HarnessError::Config(_))));
    let negative = exact_sweep("chain-MAG", "[-1.0]", "");
    assert!(matches!(run_sweep(&negative, true, &fresh("bad-value")), Err(HarnessError::Config(_))));
    let none = config("schema = 1\n[dag]\npreset = \"chain-MAG\"\n");
    assert!(run_sweep(&none, true, &fresh("no-sweep")).is_err());
}

#[test]
fn failed_point_leaves_partial_results() {
    // at the start cell the avoid objective must go right and the monitor
    // objective left, so zero slack on both fan edges is infeasible
    let dir = fresh("partial");
    fs::create_dir_all(&dir).unwrap();
    let map = dir.join("split.map");
    fs::write(&map, "rows 1\ncols 3\n.SG\navoid 0 0 0 0\nmonitor 0 0 0 0\n").unwrap();
    let cfg = config(&format!(
        "schema = 1\nmap = {:?}\n[dag]\npreset = \"fan-AM-G\"\n[sweep]\nvalues = [250.0, 0.0, 1.0]\n",
        map.display().to_string()
    ));
    let out = dir.join("out");
    let err = run_sweep(&cfg, true, &out).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let rows = read_sweep_csv(&out.join("sweep.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].sweep_value, 250.0);
    assert!(fs::read_to_string(out.join("sweep.partial")).unwrap().starts_with("partial: 1 of 3"));

    let ok = config(&format!(
        "schema = 1\nmap = {:?}\n[dag]\npreset = \"fan-AM-G\"\n[sweep]\nvalues = [250.0]\n",
        map.display().to_string()
    ));
    run_sweep(&ok, true, &out).unwrap();
    assert!(!out.join("sweep.partial").exists());
}

#[test]
fn learned_sweep_is_reproducible() {
    let mut cfg = tiny_train("chain-MAG", 3);
    cfg.sweep = exact_sweep("chain-MAG", "[0.0, 10.0]", "").sweep;
    let a = run_sweep(&cfg, false, &fresh("learned-a")).unwrap();
    let b = run_sweep(&cfg, false, &fresh("learned-b")).unwrap();
    assert_eq!(fs::read(&a.csv).unwrap(), fs::read(&b.csv).unwrap());
    assert!(a.rows.iter().all(|r| r.se_goal > 0.0 || r.v_goal == -100.0));
}

#[test]
fn training_log_has_one_phase_per_objective() {
    let chain = train(&tiny_train("chain-GMA", 1), &fresh("phases-chain")).unwrap();
    assert_eq!(chain.phases, vec![1, 2, 3]);
    let log = fs::read_to_string(&chain.log).unwrap();
    assert!(log.starts_with("objective,iteration,loss,entropy,clip_fraction,mean_return,mean_penalty,beta,critic_loss\n"));
    assert_eq!(log.lines().count(), 1 + 3 * 4);
    let snaps = fs::read_to_string(chain.checkpoint.with_file_name("snapshots.csv")).unwrap();
    assert_eq!(snaps.lines().count(), 1 + 3 * 2);

    let single = train(&tiny_train("single-G", 1), &fresh("phases-single")).unwrap();
    assert_eq!(single.phases, vec![1]);
}

#[test]
fn training_and_evaluation_are_reproducible() {
    let cfg = tiny_train("chain-MAG", 9);
    let a = train(&cfg, &fresh("repro-a")).unwrap();
    let b = train(&cfg, &fresh("repro-b")).unwrap();
    assert_eq!(fs::read(&a.checkpoint).unwrap(), fs::read(&b.checkpoint).unwrap());
    assert_eq!(fs::read(&a.log).unwrap(), fs::read(&b.log).unwrap());
    let e1 = evaluate(&cfg, &a.checkpoint, None).unwrap();
    let out = fresh("repro-eval");
    let e2 = evaluate(&cfg, &a.checkpoint, Some(&out)).unwrap();
    assert_eq!(e1, e2);
    let text = fs::read_to_string(out.join("evaluation.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn evaluation_refuses_a_foreign_checkpoint() {
    let cfg = tiny_train("chain-MAG", 2);
    let report = train(&cfg, &fresh("foreign")).unwrap();
    let other_dag = tiny_train("chain-AMG", 2);
    let err = evaluate(&other_dag, &report.checkpoint, None).unwrap_err();
    assert!(matches!(err, HarnessError::Checkpoint(CheckpointError::ChecksumMismatch { .. })), "{err}");
    assert_eq!(err.exit_code(), 1);
    let mut other_train = cfg.clone();
    other_train.train.policy_lr = Some(0.5);
    assert!(matches!(evaluate(&other_train, &report.checkpoint, None), Err(HarnessError::Checkpoint(CheckpointError::ChecksumMismatch { .. }))));
    let missing = evaluate(&cfg, &report.checkpoint.with_file_name("nope.bin"), None).unwrap_err();
    assert_eq!(missing.exit_code(), 3);
}

#[test]
fn optimal_table_policy_evaluates_to_the_exact_values() {
    let cfg = config("schema = 1\nseed = 5\n[dag]\npreset = \"chain-MAG\"\neta = 0.0\n[eval]\nepisodes = 200\nhorizon = 1000\n");
    let setup = Setup::new(&cfg).unwrap();
    let (_, report) = exact_solution(&setup, &setup.eta, false).unwrap();
    let n = setup.map.n_free();
    // near-deterministic softmax on the exact leaf policy
    let mut logits = vec![0.0; n * 4];
    for (s, &a) in report.policy.iter().enumerate() {
        logits[s * 4 + a] = 40.0;
    }
    let kind = tmdp::tpo::ApproxKind::Tabular { n_states: n };
    let policy = Policy::from_approximator(Approximator::from_params(kind, 4, logits).unwrap());
    let (dag_hash, config_hash) = fingerprints(&cfg).unwrap();
    let ck = Checkpoint { dag_hash, config_hash, policy, critics: CriticSet::new() };
    let dir = fresh("hand-built");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join("checkpoint.bin");
    fs::write(&path, ck.to_bytes()).unwrap();
    let est = evaluate(&cfg, &path, None).unwrap();
    let exact = exact_channel_values(&setup.map, 0.99, &report.policy).unwrap();
    // episodes stop at the horizon; rewards are bounded by 1
    let truncation = 0.99f64.powi(1000) / (1.0 - 0.99);
    for ch in Channel::ALL {
        let (m, se) = (est.mean(ch), est.std_err(ch));
        assert!((m - exact[ch as usize]).abs() <= 3.0 * se + truncation + 1e-9, "{ch:?}: {m} +/- {se} vs {}", exact[ch as usize]);
    }
}
