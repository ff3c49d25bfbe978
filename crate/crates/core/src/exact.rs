//! Finite-horizon dynamic programming on enumerable multi-agent MDPs.
//!
//! Provides exact Q values of a single agent's projected MDP (teammates
//! fixed), exact best responses, round-robin best-response sweeps, and a Nash
//! check. Policies are time-indexed tables. A compiler turns tiny Factory
//! Floor domains into explicit tables so the real dynamics can be checked.

use std::collections::{HashMap, VecDeque};

use rand::Rng;

use crate::factory::{self, Action, DomainSpec, GridState};
use crate::mmdp::JointAction;
use crate::policy::TablePolicy;

pub const DEFAULT_TABLE_CAP: usize = 1_000_000;
pub const MAX_SWEEPS: usize = 10_000;
const VALUE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("table of {entries} (state, joint action) entries exceeds the cap of {cap}")]
    Capacity { entries: usize, cap: usize },
    #[error("best-response sweeps did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Explicit MMDP: states `0..n_states`, joint actions in mixed radix with
/// agent 0 as the least significant digit.
#[derive(Clone, Debug)]
pub struct EnumerableMmdp {
    n_states: usize,
    action_counts: Vec<usize>,
    horizon: usize,
    discount: f64,
    start: usize,
    rewards: Vec<f64>,
    transitions: Vec<Vec<(usize, f64)>>,
}

impl EnumerableMmdp {
    /// `model(s, joint)` returns `(reward, [(next, prob)])`.
    pub fn from_fn<F>(
        n_states: usize,
        action_counts: Vec<usize>,
        horizon: usize,
        discount: f64,
        start: usize,
        cap: usize,
        mut model: F,
    ) -> Result<Self, SolverError>
    where
        F: FnMut(usize, &[usize]) -> (f64, Vec<(usize, f64)>),
    {
        let n_joint: usize = action_counts.iter().product();
        let entries = n_states.saturating_mul(n_joint);
        if entries > cap {
            return Err(SolverError::Capacity { entries, cap });
        }
        if n_states == 0 || start >= n_states || action_counts.is_empty() || action_counts.contains(&0) {
            return Err(SolverError::Invalid("need states, a valid start and at least one action per agent".into()));
        }
        let mut rewards = Vec::with_capacity(entries);
        let mut transitions = Vec::with_capacity(entries);
        let mut joint = vec![0usize; action_counts.len()];
        for s in 0..n_states {
            for j in 0..n_joint {
                decode(j, &action_counts, &mut joint);
                let (r, row) = model(s, &joint);
                let total: f64 = row.iter().map(|e| e.1).sum();
                if (total - 1.0).abs() > 1e-12 || row.iter().any(|&(n, p)| n >= n_states || p < 0.0) {
                    return Err(SolverError::Invalid(format!("bad transition row at state {s}, joint {joint:?}")));
                }
                rewards.push(r);
                transitions.push(row);
            }
        }
        Ok(EnumerableMmdp { n_states, action_counts, horizon, discount, start, rewards, transitions })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_agents(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn start(&self) -> usize {
        self.start
    }

    fn n_joint(&self) -> usize {
        self.action_counts.iter().product()
    }

    fn encode(&self, joint: &[usize]) -> usize {
        let mut j = 0;
        let mut stride = 1;
        for (a, n) in joint.iter().zip(&self.action_counts) {
            j += a * stride;
            stride *= n;
        }
        j
    }

    pub fn reward(&self, s: usize, joint: &[usize]) -> f64 {
        self.rewards[s * self.n_joint() + self.encode(joint)]
    }

    pub fn transition(&self, s: usize, joint: &[usize]) -> &[(usize, f64)] {
        &self.transitions[s * self.n_joint() + self.encode(joint)]
    }

    /// Seeded random instance: rewards uniform in [0,1], transition rows drawn
    /// uniformly from the probability simplex.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        n_states: usize,
        action_counts: Vec<usize>,
        horizon: usize,
        discount: f64,
    ) -> Self {
        EnumerableMmdp::from_fn(n_states, action_counts, horizon, discount, 0, DEFAULT_TABLE_CAP, |_, _| {
            let raw: Vec<f64> = (0..n_states).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let sum: f64 = raw.iter().sum();
            (rng.gen::<f64>(), raw.iter().enumerate().map(|(k, &x)| (k, x / sum)).collect())
        })
        .expect("random instances are well formed")
    }
}

fn decode(mut j: usize, counts: &[usize], out: &mut [usize]) {
    for (o, &n) in out.iter_mut().zip(counts) {
        *o = j % n;
        j /= n;
    }
}

/// Deterministic time-indexed joint policy: `actions[agent][t * S + s]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TabularJointPolicy {
    n_states: usize,
    horizon: usize,
    actions: Vec<Vec<usize>>,
}

impl TabularJointPolicy {
    pub fn constant(mmdp: &EnumerableMmdp, actions: &[usize]) -> Self {
        TabularJointPolicy {
            n_states: mmdp.n_states,
            horizon: mmdp.horizon,
            actions: actions.iter().map(|&a| vec![a; mmdp.n_states * mmdp.horizon]).collect(),
        }
    }

    pub fn random<R: Rng + ?Sized>(mmdp: &EnumerableMmdp, rng: &mut R) -> Self {
        TabularJointPolicy {
            n_states: mmdp.n_states,
            horizon: mmdp.horizon,
            actions: mmdp
                .action_counts
                .iter()
                .map(|&n| (0..mmdp.n_states * mmdp.horizon).map(|_| rng.gen_range(0..n)).collect())
                .collect(),
        }
    }

    /// Tabulates a per-agent rule over all states and times.
    pub fn from_fn<F: FnMut(usize, usize, usize) -> usize>(mmdp: &EnumerableMmdp, mut rule: F) -> Self {
        let mut actions = vec![Vec::with_capacity(mmdp.n_states * mmdp.horizon); mmdp.n_agents()];
        for (agent, table) in actions.iter_mut().enumerate() {
            for t in 0..mmdp.horizon {
                for s in 0..mmdp.n_states {
                    table.push(rule(agent, s, t));
                }
            }
        }
        TabularJointPolicy { n_states: mmdp.n_states, horizon: mmdp.horizon, actions }
    }

    pub fn action(&self, agent: usize, s: usize, t: usize) -> usize {
        self.actions[agent][t * self.n_states + s]
    }

    pub fn set(&mut self, agent: usize, s: usize, t: usize, a: usize) {
        self.actions[agent][t * self.n_states + s] = a;
    }

    fn joint(&self, s: usize, t: usize, out: &mut [usize]) {
        for (agent, o) in out.iter_mut().enumerate() {
            *o = self.action(agent, s, t);
        }
    }

    /// Agent components other than `agent` are identical.
    pub fn others_equal(&self, other: &TabularJointPolicy, agent: usize) -> bool {
        self.actions.iter().zip(&other.actions).enumerate().all(|(i, (a, b))| i == agent || a == b)
    }
}

/// `values[t * S + s]` for `t` in `0..=H`; row `H` is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    n_states: usize,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.values[t * self.n_states + s]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Equal everywhere up to a relative tolerance.
    pub fn approx_eq(&self, other: &ValueTable) -> bool {
        self.values
            .iter()
            .zip(&other.values)
            .all(|(a, b)| (a - b).abs() <= VALUE_TOL * (1.0 + a.abs().max(b.abs())))
    }

    /// Every entry at least the other's, up to the tolerance.
    pub fn dominates(&self, other: &ValueTable) -> bool {
        self.values
            .iter()
            .zip(&other.values)
            .all(|(a, b)| *a >= b - VALUE_TOL * (1.0 + a.abs().max(b.abs())))
    }
}

/// `q[(t * S + s) * A_i + a]` for the projected single-agent MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    q: Vec<f64>,
}

impl QTable {
    pub fn get(&self, s: usize, t: usize, a: usize) -> f64 {
        self.q[(t * self.n_states + s) * self.n_actions + a]
    }

    pub fn row(&self, s: usize, t: usize) -> &[f64] {
        let base = (t * self.n_states + s) * self.n_actions;
        &self.q[base..base + self.n_actions]
    }

    /// Maximizing action; ties go to the lowest index.
    pub fn greedy(&self, s: usize, t: usize) -> usize {
        let row = self.row(s, t);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = a;
            }
        }
        best
    }
}

fn expected_next(mmdp: &EnumerableMmdp, row: &[(usize, f64)], next: &[f64]) -> f64 {
    let _ = mmdp;
    row.iter().map(|&(n, p)| p * next[n]).sum()
}

/// Value of a joint policy at every (state, time).
pub fn policy_values(mmdp: &EnumerableMmdp, joint: &TabularJointPolicy) -> ValueTable {
    let s_n = mmdp.n_states;
    let mut values = vec![0.0; (mmdp.horizon + 1) * s_n];
    let mut a = vec![0usize; mmdp.n_agents()];
    for t in (0..mmdp.horizon).rev() {
        let (head, tail) = values.split_at_mut((t + 1) * s_n);
        let next = &tail[..s_n];
        for s in 0..s_n {
            joint.joint(s, t, &mut a);
            let v = mmdp.reward(s, &a) + mmdp.discount * expected_next(mmdp, mmdp.transition(s, &a), next);
            head[t * s_n + s] = v;
        }
    }
    ValueTable { n_states: s_n, values }
}

/// Backward induction on agent `agent`'s projection, others following `joint`.
/// Q values use the optimal continuation of the projected MDP.
pub fn exact_q_values(mmdp: &EnumerableMmdp, joint: &TabularJointPolicy, agent: usize) -> QTable {
    let s_n = mmdp.n_states;
    let n_a = mmdp.action_counts[agent];
    let mut q = vec![0.0; mmdp.horizon * s_n * n_a];
    let mut next = vec![0.0; s_n];
    let mut cur = vec![0.0; s_n];
    let mut a = vec![0usize; mmdp.n_agents()];
    for t in (0..mmdp.horizon).rev() {
        for s in 0..s_n {
            joint.joint(s, t, &mut a);
            let mut best = f64::NEG_INFINITY;
            for own in 0..n_a {
                a[agent] = own;
                let v = mmdp.reward(s, &a) + mmdp.discount * expected_next(mmdp, mmdp.transition(s, &a), &next);
                q[(t * s_n + s) * n_a + own] = v;
                best = best.max(v);
            }
            cur[s] = best;
        }
        std::mem::swap(&mut next, &mut cur);
    }
    QTable { n_states: s_n, n_actions: n_a, q }
}

/// Replaces agent `agent`'s component with the greedy policy of its exact Q values.
pub fn exact_best_response(mmdp: &EnumerableMmdp, joint: &TabularJointPolicy, agent: usize) -> TabularJointPolicy {
    let q = exact_q_values(mmdp, joint, agent);
    let mut out = joint.clone();
    for t in 0..mmdp.horizon {
        for s in 0..mmdp.n_states {
            out.set(agent, s, t, q.greedy(s, t));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub policy: TabularJointPolicy,
    pub sweeps: usize,
    /// Start-state value before any update, then after every best response.
    pub start_value_trace: Vec<f64>,
    /// True if no best response ever lowered any state value.
    pub monotone: bool,
}

/// Applies best responses in `order` until one full sweep leaves every state
/// value unchanged.
pub fn joint_response_sweep(
    mmdp: &EnumerableMmdp,
    joint: &TabularJointPolicy,
    order: &[usize],
) -> Result<SweepResult, SolverError> {
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..mmdp.n_agents()).collect::<Vec<_>>() {
        return Err(SolverError::Invalid(format!("{order:?} is not a permutation of the agents")));
    }
    let mut policy = joint.clone();
    let mut values = policy_values(mmdp, &policy);
    let mut trace = vec![values.get(mmdp.start, 0)];
    let mut monotone = true;
    for sweep in 1..=MAX_SWEEPS {
        let before = values.clone();
        for &agent in order {
            policy = exact_best_response(mmdp, &policy, agent);
            let next = policy_values(mmdp, &policy);
            monotone &= next.dominates(&values);
            values = next;
            trace.push(values.get(mmdp.start, 0));
        }
        if values.approx_eq(&before) {
            return Ok(SweepResult { policy, sweeps: sweep, start_value_trace: trace, monotone });
        }
    }
    Err(SolverError::NoConvergence(MAX_SWEEPS))
}

#[derive(Clone, Debug, PartialEq)]
pub enum NashCheck {
    Equilibrium,
    /// Agent `agent` gains `gain` by playing `action` at (`state`, `time`).
    Deviation { agent: usize, state: usize, time: usize, action: usize, gain: f64 },
}

impl NashCheck {
    pub fn is_nash(&self) -> bool {
        matches!(self, NashCheck::Equilibrium)
    }
}

/// Nash iff no single agent's best response changes any state value.
pub fn is_nash(mmdp: &EnumerableMmdp, joint: &TabularJointPolicy) -> NashCheck {
    let values = policy_values(mmdp, joint);
    for agent in 0..mmdp.n_agents() {
        let q = exact_q_values(mmdp, joint, agent);
        let mut worst: Option<(usize, usize, usize, f64)> = None;
        for t in 0..mmdp.horizon {
            for s in 0..mmdp.n_states {
                let a = q.greedy(s, t);
                let v = values.get(s, t);
                let gain = q.get(s, t, a) - v;
                if gain > VALUE_TOL * (1.0 + v.abs()) && worst.is_none_or(|w| gain > w.3) {
                    worst = Some((s, t, a, gain));
                }
            }
        }
        if let Some((state, time, action, gain)) = worst {
            return NashCheck::Deviation { agent, state, time, action, gain };
        }
    }
    NashCheck::Equilibrium
}

/// Centralized optimum over joint actions, split into per-agent tables.
pub fn optimal_joint_policy(mmdp: &EnumerableMmdp) -> TabularJointPolicy {
    let s_n = mmdp.n_states;
    let n_joint = mmdp.n_joint();
    let mut policy = TabularJointPolicy::constant(mmdp, &vec![0; mmdp.n_agents()]);
    let mut next = vec![0.0; s_n];
    let mut cur = vec![0.0; s_n];
    let mut a = vec![0usize; mmdp.n_agents()];
    for t in (0..mmdp.horizon).rev() {
        for s in 0..s_n {
            let mut best = (f64::NEG_INFINITY, 0);
            for j in 0..n_joint {
                decode(j, &mmdp.action_counts, &mut a);
                let v = mmdp.reward(s, &a) + mmdp.discount * expected_next(mmdp, mmdp.transition(s, &a), &next);
                if v > best.0 {
                    best = (v, j);
                }
            }
            cur[s] = best.0;
            decode(best.1, &mmdp.action_counts, &mut a);
            for (agent, &act) in a.iter().enumerate() {
                policy.set(agent, s, t, act);
            }
        }
        std::mem::swap(&mut next, &mut cur);
    }
    policy
}

/// A Factory Floor domain compiled to explicit tables over its reachable states.
#[derive(Clone, Debug)]
pub struct CompiledFloor {
    pub mmdp: EnumerableMmdp,
    /// Reachable states with the time step zeroed; index = state id.
    pub states: Vec<GridState>,
    index: HashMap<GridState, usize>,
}

impl CompiledFloor {
    pub fn state_id(&self, state: &GridState) -> Option<usize> {
        self.index.get(&state.clone().with_time_step(0)).copied()
    }

    /// Tabulates a state-based rule for every agent.
    pub fn tabulate<F: FnMut(&GridState, usize) -> Action>(&self, mut rule: F) -> TabularJointPolicy {
        TabularJointPolicy::from_fn(&self.mmdp, |agent, s, t| {
            rule(&self.states[s].clone().with_time_step(t), agent).index()
        })
    }

    /// One agent's component as a lookup table usable in episodes.
    pub fn table_policy(&self, joint: &TabularJointPolicy, agent: usize) -> TablePolicy {
        let mut table = TablePolicy::default();
        for t in 0..self.mmdp.horizon {
            for (s, state) in self.states.iter().enumerate() {
                let a = Action::from_index(joint.action(agent, s, t)).expect("action index");
                table.actions.insert(state.clone().with_time_step(t), a);
            }
        }
        table
    }
}

/// Enumerates the states reachable from the initial state (ignoring time)
/// and tabulates the robot-phase dynamics. Domains with task spawning are
/// rejected.
pub fn compile_floor(spec: &DomainSpec, cap: usize) -> Result<CompiledFloor, SolverError> {
    if spec.has_spawns() {
        return Err(SolverError::Invalid("task spawning is not supported by the tabular compiler".into()));
    }
    let n = spec.n_agents();
    let n_joint = Action::COUNT.pow(n as u32);
    let all_joint: Vec<JointAction> = (0..n_joint)
        .map(|j| {
            let mut a = vec![0; n];
            decode(j, &vec![Action::COUNT; n], &mut a);
            JointAction::new(a.into_iter().map(|i| Action::from_index(i).unwrap()).collect())
        })
        .collect();

    // Use a probe horizon of one so the step function always accepts time 0.
    let mut probe = spec.clone();
    probe.horizon = 1;
    let start = factory::initial_state(spec);
    let mut states = vec![start.clone()];
    let mut index = HashMap::from([(start, 0usize)]);
    let mut rows: Vec<Vec<(f64, Vec<(usize, f64)>)>> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(s) = queue.pop_front() {
        if states.len().saturating_mul(n_joint) > cap {
            return Err(SolverError::Capacity { entries: states.len() * n_joint, cap });
        }
        let mut state_rows = Vec::with_capacity(n_joint);
        for joint in &all_joint {
            let outcomes = factory::action_outcomes(&states[s], joint, &probe)
                .map_err(|e| SolverError::Invalid(e.to_string()))?;
            let mut reward = 0.0;
            let mut row: Vec<(usize, f64)> = Vec::new();
            for (next, r, p) in outcomes {
                reward += p * r;
                let next = next.with_time_step(0);
                let id = match index.get(&next) {
                    Some(&id) => id,
                    None => {
                        let id = states.len();
                        index.insert(next.clone(), id);
                        states.push(next);
                        queue.push_back(id);
                        id
                    }
                };
                match row.iter_mut().find(|e| e.0 == id) {
                    Some(e) => e.1 += p,
                    None => row.push((id, p)),
                }
            }
            state_rows.push((reward, row));
        }
        rows.push(state_rows);
    }
    let counts = vec![Action::COUNT; n];
    let mmdp = EnumerableMmdp::from_fn(states.len(), counts.clone(), spec.horizon, spec.discount, 0, cap, |s, joint| {
        let mut j = 0;
        let mut stride = 1;
        for &a in joint {
            j += a * stride;
            stride *= Action::COUNT;
        }
        rows[s][j].clone()
    })?;
    Ok(CompiledFloor { mmdp, states, index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factory::parse_domain_config;
    use crate::heuristic::heuristic_action;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_state(reward: f64, horizon: usize, discount: f64) -> EnumerableMmdp {
        EnumerableMmdp::from_fn(1, vec![2], horizon, discount, 0, DEFAULT_TABLE_CAP, |_, _| (reward, vec![(0, 1.0)])).unwrap()
    }

    #[test]
    fn constant_reward_accumulates() {
        let m = single_state(1.0, 3, 1.0);
        let v = policy_values(&m, &TabularJointPolicy::constant(&m, &[0]));
        assert_eq!(v.get(0, 0), 3.0);
        let q = exact_q_values(&m, &TabularJointPolicy::constant(&m, &[0]), 0);
        assert_eq!(q.get(0, 0, 1), 3.0);
    }

    #[test]
    fn myopic_q_equals_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = EnumerableMmdp::random(&mut rng, 5, vec![3, 2], 4, 0.0);
        let pi = TabularJointPolicy::random(&m, &mut rng);
        let q = exact_q_values(&m, &pi, 0);
        for t in 0..4 {
            for s in 0..5 {
                for a in 0..3 {
                    let joint = [a, pi.action(1, s, t)];
                    assert_eq!(q.get(s, t, a), m.reward(s, &joint));
                }
            }
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let e = EnumerableMmdp::from_fn(10, vec![5, 5], 2, 1.0, 0, 100, |_, _| (0.0, vec![(0, 1.0)])).unwrap_err();
        assert_eq!(e, SolverError::Capacity { entries: 250, cap: 100 });
    }

    #[test]
    fn corridor_q_table() {
        // 1x3 corridor, robot at the left end, one task at the right end, H=3.
        let spec = parse_domain_config(
            "[grid]\nwidth=3\nheight=1\nhorizon=3\nmove_success=1\nact_success=1\n[robots]\n1,0,0\n[tasks]\n0,2,1\n[spawns]\nevents=0,0\n",
        )
        .unwrap();
        let c = compile_floor(&spec, DEFAULT_TABLE_CAP).unwrap();
        let pi = TabularJointPolicy::constant(&c.mmdp, &[0]);
        let q = exact_q_values(&c.mmdp, &pi, 0);
        let s0 = c.state_id(&factory::initial_state(&spec)).unwrap();
        // Only RIGHT, RIGHT, ACT collects the task.
        assert_eq!(q.row(s0, 0), &[0.0, 0.0, 0.0, 1.0, 0.0]);
        let mid = factory::initial_state(&spec).with_robot(0, crate::Cell::new(0, 1));
        let s1 = c.state_id(&mid).unwrap();
        assert_eq!(q.row(s1, 1), &[0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(q.row(s1, 2), &[0.0; 5]);
        let end = factory::initial_state(&spec).with_robot(0, crate::Cell::new(0, 2));
        let s2 = c.state_id(&end).unwrap();
        assert_eq!(q.row(s2, 2), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        // LEFT leaves no time to come back.
        assert_eq!(q.row(s2, 1), &[1.0, 1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn best_response_fixed_point_and_single_agent_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = EnumerableMmdp::random(&mut rng, 6, vec![3], 4, 1.0);
        let pi = TabularJointPolicy::random(&m, &mut rng);
        let res = joint_response_sweep(&m, &pi, &[0]).unwrap();
        let opt = optimal_joint_policy(&m);
        assert!(policy_values(&m, &res.policy).approx_eq(&policy_values(&m, &opt)));
        let again = exact_best_response(&m, &res.policy, 0);
        assert!(policy_values(&m, &again).approx_eq(&policy_values(&m, &res.policy)));
        // Starting at the fixed point takes a single sweep.
        assert_eq!(joint_response_sweep(&m, &res.policy, &[0]).unwrap().sweeps, 1);
    }

    #[test]
    fn suboptimal_equilibrium_in_anti_coordination_game() {
        // Two agents pick one of two tasks; splitting pays 2 one way and 1 the other way.
        let m = EnumerableMmdp::from_fn(1, vec![2, 2], 1, 1.0, 0, DEFAULT_TABLE_CAP, |_, a| {
            let r = match (a[0], a[1]) {
                (0, 1) => 2.0,
                (1, 0) => 1.0,
                _ => 0.0,
            };
            (r, vec![(0, 1.0)])
        })
        .unwrap();
        let opt = optimal_joint_policy(&m);
        assert_eq!((opt.action(0, 0, 0), opt.action(1, 0, 0)), (0, 1));
        assert!(is_nash(&m, &opt).is_nash());
        let worse = TabularJointPolicy::constant(&m, &[1, 0]);
        assert_eq!(policy_values(&m, &worse).get(0, 0), 1.0);
        assert!(is_nash(&m, &worse).is_nash());
        let bad = TabularJointPolicy::constant(&m, &[0, 0]);
        match is_nash(&m, &bad) {
            NashCheck::Deviation { agent, action, gain, .. } => {
                assert_eq!((agent, action), (0, 1));
                assert_eq!(gain, 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn heuristic_pair_collides_and_best_response_improves() {
        // Both heuristic robots head for the same single task.
        let spec = parse_domain_config(
            "[grid]\nwidth=3\nheight=3\nhorizon=4\nmove_success=1\nact_success=1\n[robots]\n1,0,0\n2,0,2\n[tasks]\n0,1,1\n2,2,1\n[spawns]\nevents=0,0\n",
        )
        .unwrap();
        let c = compile_floor(&spec, DEFAULT_TABLE_CAP).unwrap();
        let heur = c.tabulate(heuristic_action);
        let base = policy_values(&c.mmdp, &heur).get(0, 0);
        let br = exact_best_response(&c.mmdp, &heur, 1);
        let improved = policy_values(&c.mmdp, &br).get(0, 0);
        assert!(improved > base + 0.5, "{base} -> {improved}");
    }
}
