use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tmdp::linalg::evaluate_deterministic;
use tmdp::tabular::random::{random_feasible_instance, random_instance, random_tables, DagShape, InstanceParams};
use tmdp::tabular::*;
use tmdp::{LocalSlacks, ObjectiveDag, TmdpSpec};

fn cfg() -> SolverConfig<f64> {
    SolverConfig::default()
}

fn all_actions(spec: &TmdpSpec<f64>) -> ActionSets {
    vec![(0..spec.n_actions()).collect(); spec.n_states()]
}

/// Hand-checked instance, gamma = 0.5, every action leads to the absorbing state 2.
///
/// Objective 1: Q(s0) = [1.2, 1.15], Q(s1) = [0.2, 0.7], Q(s2) = [0.4, 0.4],
/// so −A_1 = [0, 0.05], [0.5, 0], [0, 0].
fn hand_chain() -> TmdpSpec<f64> {
    let to2 = vec![0.0, 0.0, 1.0];
    let transition = vec![vec![to2.clone(); 2]; 3];
    let r1 = vec![vec![1.0, 0.95], vec![0.0, 0.5], vec![0.2, 0.2]];
    let r2 = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 0.0]];
    let dag = ObjectiveDag::new(2, [(1, 2, 0.2)]).unwrap();
    TmdpSpec::new(3, 2, transition, vec![r1, r2], 0.5, dag, 0)
}

fn solved_root(spec: &TmdpSpec<f64>) -> SolvedObjectives<f64> {
    let mut m = BTreeMap::new();
    m.insert(1, value_iteration(spec, 1, &all_actions(spec), &cfg()).unwrap());
    m
}

#[test]
fn geometric_series() {
    let spec = TmdpSpec::new(1, 1, vec![vec![vec![1.0]]], vec![vec![vec![1.0]]], 0.9, ObjectiveDag::single(), 0);
    let sol = value_iteration(&spec, 1, &all_actions(&spec), &cfg()).unwrap();
    assert!((sol.v[0] - 10.0).abs() <= 1e-8);
}

#[test]
fn deterministic_two_state_chain() {
    let transition = vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]];
    let rewards = vec![vec![vec![0.0], vec![1.0]]];
    let spec = TmdpSpec::new(2, 1, transition, rewards, 0.5, ObjectiveDag::single(), 0);
    let sol = value_iteration(&spec, 1, &all_actions(&spec), &cfg()).unwrap();
    assert!((sol.v[0] - 1.0).abs() <= 1e-8);
    assert!((sol.v[1] - 2.0).abs() <= 1e-8);
}

#[test]
fn value_iteration_matches_linear_solve_of_greedy_policy() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t, r) = random_tables::<f64, _>(&mut rng, 10, 3, 1);
        let spec = TmdpSpec::new(10, 3, t, r, 0.9, ObjectiveDag::single(), 0);
        let sol = value_iteration(&spec, 1, &all_actions(&spec), &cfg()).unwrap();
        let exact = evaluate_deterministic(&spec, 1, &sol.policy);
        for s in 0..10 {
            assert!((sol.v[s] - exact[s]).abs() < 1e-6, "seed {seed} state {s}");
            let best = sol.q[s].iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(sol.v[s], best);
        }
    }
}

#[test]
fn non_convergence_is_reported() {
    let spec = TmdpSpec::new(1, 1, vec![vec![vec![1.0]]], vec![vec![vec![1.0]]], 0.99, ObjectiveDag::single(), 0);
    let tight = SolverConfig { max_iter: 5, ..cfg() };
    let err = value_iteration(&spec, 1, &all_actions(&spec), &tight).unwrap_err();
    assert!(matches!(err, SolveError::NonConvergence { objective: 1, iterations: 5, .. }));
}

#[test]
fn empty_allowed_set_rejected() {
    let spec = hand_chain();
    let mut allowed = all_actions(&spec);
    allowed[1].clear();
    assert_eq!(value_iteration(&spec, 1, &allowed, &cfg()).unwrap_err(), SolveError::BadActionSet { state: 1 });
}

#[test]
fn restricted_actions_examples() {
    let spec = hand_chain();
    let solved = solved_root(&spec);
    let dag = spec.dag();
    let unbounded = LocalSlacks::unbounded(dag);
    assert_eq!(restricted_actions(&spec, 2, &solved, &unbounded, 1e-7).unwrap(), all_actions(&spec));

    let zero = LocalSlacks::zero(dag);
    // objective 1 argmax sets: s0 {0}, s1 {1}, s2 {0, 1}
    assert_eq!(restricted_actions(&spec, 2, &solved, &zero, 1e-7).unwrap(), vec![vec![0], vec![1], vec![0, 1]]);

    // −A_1 = 0.05 at (s0, a1) fits in 0.1, 0.5 at (s1, a0) does not
    let eta = LocalSlacks::uniform(dag, 0.1);
    assert_eq!(restricted_actions(&spec, 2, &solved, &eta, 1e-7).unwrap(), vec![vec![0, 1], vec![1], vec![0, 1]]);

    assert_eq!(
        restricted_actions(&spec, 2, &BTreeMap::new(), &eta, 1e-7).unwrap_err(),
        SolveError::MissingAncestorSolution { objective: 2, ancestor: 1 }
    );
}

#[test]
fn constraint_term_examples() {
    let spec = hand_chain();
    let solved = solved_root(&spec);
    let dag = spec.dag();
    let eta = LocalSlacks::uniform(dag, 0.0);
    assert_eq!(constraint_term(&spec, 2, 1, 1, &solved, &eta, 0.0).unwrap(), vec![0.0]);
    // boundary: −A = 0.5 = η
    let at = LocalSlacks::uniform(dag, 0.5);
    assert_eq!(constraint_term(&spec, 2, 1, 0, &solved, &at, 0.0).unwrap(), vec![0.0]);
    let below = LocalSlacks::uniform(dag, 0.2);
    let c = constraint_term(&spec, 2, 1, 0, &solved, &below, 0.0).unwrap();
    assert!((c[0] - 0.3).abs() < 1e-8);
    // the root has no ancestral edges
    assert!(constraint_term(&spec, 1, 1, 0, &solved, &below, 0.0).unwrap().is_empty());
}

#[test]
fn beta_lower_bound_examples() {
    assert_eq!(beta_lower_bound(&[1.0, 3.0, 0.5], &[0.0, 0.0, 0.0], 1), 0.0);
    assert_eq!(beta_lower_bound(&[1.0, 3.0], &[0.0, 0.5], 0), 4.0);
    // a violating action that is already worse needs no multiplier
    assert_eq!(beta_lower_bound(&[1.0, 0.0], &[0.0, 0.5], 0), 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let q: Vec<f64> = (0..5).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let c: Vec<f64> = (0..5).map(|_| if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.01..2.0) }).collect();
        let feasible: Vec<usize> = (0..5).filter(|&a| c[a] == 0.0).collect();
        let Some(&a_star) = feasible.iter().max_by(|&&x, &&y| q[x].partial_cmp(&q[y]).unwrap()) else { continue };
        // exhaustive max of the ratio over violating actions
        let mut expected: f64 = 0.0;
        for a in 0..5 {
            if c[a] > 0.0 {
                expected = expected.max((q[a] - q[a_star]) / c[a]);
            }
        }
        let got = beta_lower_bound(&q, &c, a_star);
        assert!((got - expected).abs() < 1e-12);
        for a in 0..5 {
            assert!(q[a] - (got + 1e-9) * c[a] <= q[a_star] + 1e-12);
        }
    }
}

#[test]
fn solve_lar_single_objective_is_value_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (t, r) = random_tables::<f64, _>(&mut rng, 6, 3, 1);
    let spec = TmdpSpec::new(6, 3, t, r, 0.8, ObjectiveDag::single(), 0);
    let eta = LocalSlacks::zero(spec.dag());
    let lar = solve_lar(&spec, &eta, &cfg()).unwrap();
    let vi = value_iteration(&spec, 1, &all_actions(&spec), &cfg()).unwrap();
    assert_eq!(lar.leaf().v, vi.v);
}

#[test]
fn zero_slack_cannot_help_the_leaf() {
    for seed in 0..20 {
        let inst = random_instance::<f64>(seed, &InstanceParams::default(), Some(DagShape::Chain));
        let eta = LocalSlacks::zero(inst.spec.dag());
        let lar = solve_lar(&inst.spec, &eta, &cfg()).unwrap();
        let leaf = inst.spec.dag().leaf();
        let free = value_iteration(&inst.spec, leaf, &all_actions(&inst.spec), &cfg()).unwrap();
        for s in 0..inst.spec.n_states() {
            assert!(lar.leaf().v[s] <= free.v[s] + 1e-8);
        }
    }
}

#[test]
fn chain_matches_oracle() {
    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (t, r) = random_tables::<f64, _>(&mut rng, 8, 3, 3);
        let dag = ObjectiveDag::chain(&[1.0, 1.0]).unwrap();
        let spec = TmdpSpec::new(8, 3, t, r, 0.7, dag, 0);
        let eta = LocalSlacks::uniform(spec.dag(), rng.gen_range(0.0..0.3));
        let lar = solve_lar(&spec, &eta, &cfg()).unwrap();
        let oracle = brute_force_oracle(&spec, &eta, &cfg()).unwrap();
        assert!((lar.leaf_value() - oracle.leaf_value).abs() < 1e-6, "seed {seed}");
    }
}

#[test]
fn lagrangian_single_objective_equals_value_iteration_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (t, r) = random_tables::<f64, _>(&mut rng, 7, 4, 1);
    let spec = TmdpSpec::new(7, 4, t, r, 0.9, ObjectiveDag::single(), 0);
    let eta = LocalSlacks::zero(spec.dag());
    let lag = lagrangian_value_iteration(&spec, &eta, 1.0, &cfg()).unwrap();
    let vi = value_iteration(&spec, 1, &all_actions(&spec), &cfg()).unwrap();
    assert_eq!(lag.leaf().v, vi.v);
    assert_eq!(lag.leaf().policy, vi.policy);
}

#[test]
fn lagrangian_matches_lar_on_chains() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let (t, r) = random_tables::<f64, _>(&mut rng, 10, 3, 3);
        let spec = TmdpSpec::new(10, 3, t, r, 0.85, ObjectiveDag::chain(&[1.0, 1.0]).unwrap(), 0);
        let eta = LocalSlacks::uniform(spec.dag(), rng.gen_range(0.0..0.5));
        let lar = solve_lar(&spec, &eta, &cfg()).unwrap();
        let lag = lagrangian_value_iteration(&spec, &eta, 1.0, &cfg()).unwrap();
        assert!(lar.max_value_gap(&lag) < 1e-6, "seed {seed}");
        for s in 0..10 {
            let leaf = lag.leaf();
            assert_eq!(leaf.constraint_sum[s][leaf.policy[s]], 0.0);
        }
    }
}

#[test]
fn zero_multiplier_can_pick_violating_actions() {
    // objective 2 prefers a1 at s1 by 1.0 but objective 1 loses 0.5 there
    let spec = hand_chain();
    let eta = LocalSlacks::zero(spec.dag());
    let sol = lagrangian_value_iteration_with(&spec, &eta, BetaRule::Fixed(0.0), &cfg()).unwrap();
    let leaf = sol.leaf();
    assert!((0..3).any(|s| leaf.constraint_sum[s][leaf.policy[s]] > 0.0));
    let bounded = lagrangian_value_iteration(&spec, &eta, 1.0, &cfg()).unwrap();
    let leaf = bounded.leaf();
    assert!((0..3).all(|s| leaf.constraint_sum[s][leaf.policy[s]] == 0.0));
}

/// Objective 2 has reward 1 everywhere; objective 1 prefers a0 by 0.1 at s0.
/// With η = 0.5 both actions are strictly feasible and objective 2 should
/// just collect 1/(1 − γ).
fn slack_instance() -> TmdpSpec<f64> {
    let transition = vec![vec![vec![1.0]; 2]];
    let r1 = vec![vec![1.0, 0.9]];
    let r2 = vec![vec![1.0, 1.0]];
    TmdpSpec::new(1, 2, transition, vec![r1, r2], 0.5, ObjectiveDag::new(2, [(1, 2, 1.0)]).unwrap(), 0)
}

#[test]
fn naive_lagrangian_inflates_values() {
    let spec = slack_instance();
    let eta = LocalSlacks::uniform(spec.dag(), 0.5);
    let lar = solve_lar(&spec, &eta, &cfg()).unwrap();
    let naive = naive_lagrangian_value_iteration(&spec, &eta, 1.0, &cfg()).unwrap();
    assert!((lar.leaf_value() - 2.0).abs() < 1e-8);
    assert!(naive.leaf_value() > lar.leaf_value() + 0.1);
}

#[test]
fn naive_lagrangian_agrees_in_degenerate_cases() {
    let spec = hand_chain();
    let zero = LocalSlacks::zero(spec.dag());
    let lar = solve_lar(&spec, &zero, &cfg()).unwrap();
    let naive = naive_lagrangian_value_iteration(&spec, &zero, 1e3, &cfg()).unwrap();
    assert!(lar.max_value_gap(&naive) < 1e-6);

    let eta = LocalSlacks::uniform(spec.dag(), 0.1);
    let naive0 = naive_lagrangian_value_iteration(&spec, &eta, 0.0, &cfg()).unwrap();
    let free = value_iteration(&spec, 2, &all_actions(&spec), &cfg()).unwrap();
    assert_eq!(naive0.leaf().v, free.v);
}

#[test]
fn oracle_trivial_cases() {
    let spec = TmdpSpec::new(1, 3, vec![vec![vec![1.0]; 3]], vec![vec![vec![0.1, 0.7, 0.3]]], 0.9, ObjectiveDag::single(), 0);
    let eta = LocalSlacks::zero(spec.dag());
    let oracle = brute_force_oracle(&spec, &eta, &cfg()).unwrap();
    let vi = value_iteration(&spec, 1, &all_actions(&spec), &cfg()).unwrap();
    assert!((oracle.leaf_value - vi.v[0]).abs() < 1e-8);
    assert_eq!(oracle.policy, vec![1]);

    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t, r) = random_tables::<f64, _>(&mut rng, 3, 2, 1);
        let spec = TmdpSpec::new(3, 2, t, r, 0.9, ObjectiveDag::single(), 0);
        let eta = LocalSlacks::zero(spec.dag());
        let oracle = brute_force_oracle(&spec, &eta, &SolverConfig { tol: 1e-11, ..cfg() }).unwrap();
        let vi = value_iteration(&spec, 1, &all_actions(&spec), &SolverConfig { tol: 1e-11, ..cfg() }).unwrap();
        assert!((oracle.leaf_value - vi.v[0]).abs() < 1e-9);
    }
}

#[test]
fn oracle_refuses_large_models() {
    let n = 11;
    let spec = TmdpSpec::new(
        n,
        4,
        vec![vec![vec![1.0 / n as f64; n]; 4]; n],
        vec![vec![vec![0.0; 4]; n]],
        0.9,
        ObjectiveDag::single(),
        0,
    );
    let err = brute_force_oracle(&spec, &LocalSlacks::zero(spec.dag()), &cfg()).unwrap_err();
    assert!(matches!(err, SolveError::TooLarge { .. }));
}

#[test]
fn fan_with_conflicting_parents_is_infeasible() {
    // roots 1 and 2 want different actions; η = 0 leaves nothing for 3
    let transition = vec![vec![vec![1.0]; 2]];
    let rewards = vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]], vec![vec![0.0, 0.0]]];
    let dag = ObjectiveDag::new(3, [(1, 3, 0.0), (2, 3, 0.0)]).unwrap();
    let spec = TmdpSpec::new(1, 2, transition, rewards, 0.5, dag, 0);
    let eta = LocalSlacks::zero(spec.dag());
    assert_eq!(solve_lar(&spec, &eta, &cfg()).unwrap_err(), SolveError::Infeasible { objective: 3, state: 0 });
    assert!(solve_lar(&spec, &LocalSlacks::uniform(spec.dag(), 2.0), &cfg()).is_ok());
}

#[test]
fn invalid_spec_refused() {
    let spec = TmdpSpec::new(1, 1, vec![vec![vec![0.5]]], vec![vec![vec![0.0]]], 0.9, ObjectiveDag::single(), 0);
    assert!(matches!(
        solve_lar(&spec, &LocalSlacks::zero(spec.dag()), &cfg()),
        Err(SolveError::InvalidSpec(_))
    ));
}

#[test]
fn solution_csv_layout() {
    let spec = hand_chain();
    let sol = solve_lar(&spec, &LocalSlacks::zero(spec.dag()), &cfg()).unwrap();
    let csv = solution_csv(&sol);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "objective,state,V,Q0,Q1");
    assert_eq!(lines.len(), 1 + 2 * 3);
    let first: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(&first[..2], &[1.0, 0.0]);
    assert!((first[2] - 1.2).abs() < 1e-8 && (first[4] - 1.15).abs() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lagrangian_equivalence_and_bound(seed in any::<u64>()) {
        let inst = random_feasible_instance::<f64>(seed, &InstanceParams::default(), None, &cfg()).unwrap();
        let lar = solve_lar(&inst.spec, &inst.eta, &cfg()).unwrap();
        let lag = lagrangian_value_iteration(&inst.spec, &inst.eta, 1.0, &cfg()).unwrap();
        prop_assert!(lar.max_value_gap(&lag) < 10.0 * cfg().tol + 1e-9);
        for (i, sol) in lag.objectives() {
            for s in 0..inst.spec.n_states() {
                prop_assert_eq!(sol.constraint_sum[s][sol.policy[s]], 0.0);
                prop_assert!(!lar.objective(*i).allowed[s].is_empty());
                // policies agree where the restricted argmax is clear
                let l = lar.objective(*i);
                let best = l.q[s][l.policy[s]];
                let clear = l.allowed[s].iter().all(|&a| a == l.policy[s] || best - l.q[s][a] > 10.0 * cfg().tol);
                if clear {
                    prop_assert_eq!(sol.policy[s], l.policy[s]);
                }
            }
        }
    }

    #[test]
    fn enlarging_slack_enlarges_single_level_action_sets(seed in any::<u64>(), bump in 0.0f64..1.0) {
        // fan DAGs constrain only the leaf by fixed root solutions
        let inst = random_feasible_instance::<f64>(seed, &InstanceParams::default(), Some(DagShape::Fan), &cfg()).unwrap();
        let wider = LocalSlacks::from_values(inst.spec.dag(), inst.eta.values().iter().map(|e| e + bump).collect()).unwrap();
        let a = solve_lar(&inst.spec, &inst.eta, &cfg()).unwrap();
        let b = solve_lar(&inst.spec, &wider, &cfg()).unwrap();
        for s in 0..inst.spec.n_states() {
            for act in &a.leaf().allowed[s] {
                prop_assert!(b.leaf().allowed[s].contains(act));
            }
            prop_assert!(b.leaf().v[s] >= a.leaf().v[s] - 1e-8);
        }
    }
}

fn leaf_values_over_slack(seed: u64, k: usize, sweep: &[f64]) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t, r) = random_tables::<f64, _>(&mut rng, 4, 2, k);
    let dag = ObjectiveDag::chain(&vec![0.0; k - 1]).unwrap();
    let spec = TmdpSpec::new(4, 2, t, r, 0.9, dag, 0);
    sweep
        .iter()
        .map(|&e| brute_force_oracle(&spec, &LocalSlacks::uniform(spec.dag(), e), &cfg()).unwrap().leaf_value)
        .collect()
}

#[test]
fn single_edge_leaf_value_is_monotone_in_slack() {
    for seed in 0..200 {
        let v = leaf_values_over_slack(seed, 2, &[0.0, 0.5, 1.0]);
        assert!(v[0] <= v[1] + 1e-9 && v[1] <= v[2] + 1e-9, "seed {seed}: {v:?}");
    }
}

#[test]
fn deeper_chains_need_not_be_monotone_in_slack() {
    // loosening the first edge changes objective 2's values, which can tighten
    // the constraint objective 3 sees
    let witness = (0..200).find(|&seed| {
        let v = leaf_values_over_slack(seed, 3, &[0.0, 0.5, 1.0]);
        v[1] < v[0] - 1e-6 || v[2] < v[1] - 1e-6
    });
    assert!(witness.is_some());
}
