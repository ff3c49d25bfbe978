use std::sync::Arc;

use abc_core::exact::{
    compile_floor, is_nash, joint_response_sweep, optimal_joint_policy, policy_values, DEFAULT_TABLE_CAP,
};
use abc_core::factory::{initial_state, parse_domain_config, step};
use abc_core::heuristic::heuristic_action;
use abc_core::mmdp::evaluate_policy;
use abc_core::policy::PolicyHandle;
use abc_core::{Action, JointAction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SOLO: &str = "\
[grid]
width=3
height=2
horizon=5
move_success=1.0
act_success=1.0
[robots]
1,0,0
[tasks]
0,2,2
1,1,1
1,0,1
[spawns]
events=0,0
";

/// Every open-loop action sequence of a deterministic single-robot floor.
fn best_sequence_return(text: &str) -> f64 {
    let spec = parse_domain_config(text).unwrap();
    let h = spec.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut best = f64::NEG_INFINITY;
    for code in 0..Action::COUNT.pow(h as u32) {
        let mut state = initial_state(&spec);
        let mut total = 0.0;
        let mut c = code;
        for _ in 0..h {
            let a = Action::from_index(c % Action::COUNT).unwrap();
            c /= Action::COUNT;
            let out = step(&state, &JointAction::new(vec![a]), &spec, &mut rng).unwrap();
            total += out.reward();
            state = out.state;
        }
        best = best.max(total);
    }
    best
}

#[test]
fn optimal_value_matches_brute_force_over_sequences() {
    let floor = compile_floor(&parse_domain_config(SOLO).unwrap(), DEFAULT_TABLE_CAP).unwrap();
    let v = policy_values(&floor.mmdp, &optimal_joint_policy(&floor.mmdp)).get(floor.mmdp.start(), 0);
    let brute = best_sequence_return(SOLO);
    assert_eq!(brute, 2.0);
    assert!((v - brute).abs() < 1e-12, "solver {v}, brute force {brute}");
}

#[test]
fn shorter_horizon_brute_force() {
    let text = SOLO.replace("horizon=5", "horizon=3");
    let floor = compile_floor(&parse_domain_config(&text).unwrap(), DEFAULT_TABLE_CAP).unwrap();
    let v = policy_values(&floor.mmdp, &optimal_joint_policy(&floor.mmdp)).get(floor.mmdp.start(), 0);
    assert!((v - best_sequence_return(&text)).abs() < 1e-12);
    assert_eq!(v, 1.0);
}

const PAIR: &str = "\
[grid]
width=3
height=3
horizon=4
move_success=0.9
act_success=1.0
[robots]
1,0,0
2,0,2
[tasks]
0,1,1
2,2,2
[spawns]
events=0,0
";

#[test]
fn sweep_from_heuristic_reaches_equilibrium_and_simulates_to_its_value() {
    let spec = parse_domain_config(PAIR).unwrap();
    let floor = compile_floor(&spec, DEFAULT_TABLE_CAP).unwrap();
    let start = floor.tabulate(heuristic_action);
    let base = policy_values(&floor.mmdp, &start).get(floor.mmdp.start(), 0);
    let sweep = joint_response_sweep(&floor.mmdp, &start, &[0, 1]).unwrap();
    assert!(sweep.monotone);
    assert!(is_nash(&floor.mmdp, &sweep.policy).is_nash());
    let v = policy_values(&floor.mmdp, &sweep.policy).get(floor.mmdp.start(), 0);
    assert!(v >= base - 1e-12);

    let handles: Vec<PolicyHandle> =
        (0..2).map(|i| PolicyHandle::FixedTable(Arc::new(floor.table_policy(&sweep.policy, i)))).collect();
    let summary = evaluate_policy(&spec, &handles, 4000, 99).unwrap();
    let se = summary.sample_sd / (summary.n_episodes as f64).sqrt();
    assert!((summary.mean - v).abs() <= 4.0 * se + 1e-3, "simulated {} vs exact {v} (se {se})", summary.mean);
}

#[test]
fn heuristic_table_simulates_to_its_exact_value() {
    let spec = parse_domain_config(PAIR).unwrap();
    let floor = compile_floor(&spec, DEFAULT_TABLE_CAP).unwrap();
    let joint = floor.tabulate(heuristic_action);
    let v = policy_values(&floor.mmdp, &joint).get(floor.mmdp.start(), 0);
    let exact = evaluate_policy(&spec, &[PolicyHandle::Heuristic, PolicyHandle::Heuristic], 4000, 5).unwrap();
    let se = exact.sample_sd / (exact.n_episodes as f64).sqrt();
    assert!((exact.mean - v).abs() <= 4.0 * se + 1e-3, "simulated {} vs exact {v}", exact.mean);
}
