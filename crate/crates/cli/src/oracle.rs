//! `abc oracle`: exact checks of the theory and the numerics.

use abc_core::exact::{
    compile_floor, exact_best_response, exact_q_values, is_nash, joint_response_sweep, policy_values,
    EnumerableMmdp, TabularJointPolicy, DEFAULT_TABLE_CAP,
};
use abc_core::factory::{initial_state, parse_domain_config, EncodedState};
use abc_core::mcts::{plan_tree, MctsParams};
use abc_core::mmdp::derive_seed;
use abc_core::nn::{gradient_check, init_weights, NetworkArch, PolicyModel};
use abc_core::policy::ModelActor;
use abc_core::{DomainSpec, PolicyHandle};
use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{EXIT_OK, EXIT_RUNTIME};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    All,
    Monotone,
    Nash,
    Mcts,
    Gradient,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Random tiny MMDP: 2-12 states, 2 to `max_agents` agents, 2-3 actions, horizon 1-4.
pub fn random_instance(rng: &mut ChaCha8Rng, max_agents: usize) -> EnumerableMmdp {
    let n_agents = rng.gen_range(2..=max_agents.max(2));
    let actions: Vec<usize> = (0..n_agents).map(|_| rng.gen_range(2..=3)).collect();
    let n_states = rng.gen_range(2..=12);
    let horizon = rng.gen_range(1..=4);
    let discount = if rng.gen_bool(0.5) { 1.0 } else { 0.9 };
    EnumerableMmdp::random(rng, n_states, actions, horizon, discount)
}

/// Best responses never lower any state value.
pub fn monotonicity(seed: u64, instances: usize) -> SuiteReport {
    let mut violations = 0usize;
    let mut checks = 0usize;
    for k in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
        let m = random_instance(&mut rng, 2);
        let pi = TabularJointPolicy::random(&m, &mut rng);
        let before = policy_values(&m, &pi);
        for agent in 0..m.n_agents() {
            let after = policy_values(&m, &exact_best_response(&m, &pi, agent));
            checks += 1;
            violations += usize::from(!after.dominates(&before));
        }
    }
    SuiteReport {
        name: "monotone",
        passed: violations == 0,
        detail: format!("{checks} best responses over {instances} instances, {violations} value decreases"),
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Joint-response sweeps terminate in a Nash equilibrium for every order.
pub fn sweep_convergence(seed: u64, instances: usize) -> SuiteReport {
    let mut failures = Vec::new();
    let mut sweeps_max = 0;
    let mut runs = 0;
    for k in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ 0xC0, k as u64));
        let m = random_instance(&mut rng, 3);
        let pi = TabularJointPolicy::random(&m, &mut rng);
        for order in permutations(m.n_agents()) {
            runs += 1;
            match joint_response_sweep(&m, &pi, &order) {
                Ok(res) => {
                    sweeps_max = sweeps_max.max(res.sweeps);
                    let trace_ok = res.start_value_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()));
                    if !res.monotone || !trace_ok || !is_nash(&m, &res.policy).is_nash() {
                        failures.push(format!("instance {k} order {order:?}"));
                    }
                }
                Err(e) => failures.push(format!("instance {k} order {order:?}: {e}")),
            }
        }
    }
    SuiteReport {
        name: "nash",
        passed: failures.is_empty(),
        detail: format!(
            "{runs} sweeps over {instances} instances, at most {sweeps_max} sweeps to converge, {} failures{}",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    }
}

/// Single robot at the left end of a 1x3 corridor with one task at the far end.
pub fn corridor() -> DomainSpec {
    parse_domain_config(
        "[grid]\nwidth=3\nheight=1\nhorizon=3\nmove_success=0.9\nact_success=1\n[robots]\n1,0,0\n[tasks]\n0,2,1\n[spawns]\nevents=0,0\n",
    )
    .expect("corridor config")
}

/// Largest root error |Q~ - Q| of one search on the corridor.
pub fn corridor_root_error(spec: &DomainSpec, exact: &[f64], iterations: usize, seed: u64) -> f64 {
    let params = MctsParams { diy_bonus: 0.0, ..MctsParams::new(0.5, iterations, spec.horizon) };
    let mut rollout = ModelActor::new(&PolicyHandle::Heuristic, 0, spec).expect("heuristic actor");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = plan_tree(&initial_state(spec), 0, spec, &mut [], &mut rollout, &params, &mut rng).expect("search");
    tree.root_q()
        .iter()
        .zip(exact)
        .map(|(q, e)| q.map_or(f64::INFINITY, |q| (q - e).abs()))
        .fold(0.0, f64::max)
}

pub fn corridor_exact_q(spec: &DomainSpec) -> Vec<f64> {
    let c = compile_floor(spec, DEFAULT_TABLE_CAP).expect("corridor compiles");
    let q = exact_q_values(&c.mmdp, &TabularJointPolicy::constant(&c.mmdp, &[0]), 0);
    let s0 = c.state_id(&initial_state(spec)).expect("start state");
    q.row(s0, 0).to_vec()
}

/// Search estimates at the root approach the exact Q values.
pub fn mcts_convergence(seed: u64, runs: usize, iterations: usize) -> SuiteReport {
    let spec = corridor();
    let exact = corridor_exact_q(&spec);
    let errors: Vec<f64> =
        (0..runs).map(|r| corridor_root_error(&spec, &exact, iterations, derive_seed(seed, r as u64))).collect();
    let good = errors.iter().filter(|&&e| e <= 0.05).count();
    let need = (runs * 95).div_ceil(100);
    SuiteReport {
        name: "mcts",
        passed: good >= need,
        detail: format!(
            "{good}/{runs} runs within 0.05 of the exact root Q values (need {need}), worst error {:.4}",
            errors.iter().copied().fold(0.0, f64::max)
        ),
    }
}

/// Standard initialization with every parameter, biases included, jittered
/// by up to ±0.05.
pub fn random_model(arch: NetworkArch, rng: &mut ChaCha8Rng) -> PolicyModel {
    let mut m = init_weights(arch, rng.gen());
    m.weights.iter_mut().for_each(|w| *w += rng.gen_range(-0.05..0.05));
    m
}

/// Backprop agrees with central differences.
pub fn gradient(seed: u64, pairs: usize) -> SuiteReport {
    let mut worst: f64 = 0.0;
    for k in 0..pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ 0x6AD, k as u64));
        let arch = NetworkArch::for_grid(rng.gen_range(1..=3), rng.gen_range(3..=4), rng.gen_range(3..=5));
        let model = random_model(arch, &mut rng);
        let (c, h, w) = arch.input_shape();
        let values = (0..c * h * w).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let input = EncodedState { channels: c, height: h, width: w, values };
        let label = rng.gen_range(0..5);
        worst = worst.max(gradient_check(&model, &input, label, 1e-5).expect("shapes agree"));
    }
    SuiteReport {
        name: "gradient",
        passed: worst < 1e-4,
        detail: format!("{pairs} (model, sample) pairs, worst relative error {worst:.2e}"),
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Vec<SuiteReport> {
    match suite {
        Suite::All => [Suite::Monotone, Suite::Nash, Suite::Mcts, Suite::Gradient]
            .into_iter()
            .flat_map(|s| run_suite(s, seed))
            .collect(),
        Suite::Monotone => vec![monotonicity(seed, 100)],
        Suite::Nash => vec![sweep_convergence(seed, 100)],
        Suite::Mcts => vec![mcts_convergence(seed, 100, 50_000)],
        Suite::Gradient => vec![gradient(seed, 20)],
    }
}

pub fn execute(suite: Suite, seed: u64) -> i32 {
    let reports = run_suite(suite, seed);
    for r in &reports {
        eprintln!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if reports.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_RUNTIME
    }
}
