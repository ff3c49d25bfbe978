//! The Factory Floor spatial task allocation domain.
//!
//! Robots move on a rectangular grid and clean tasks. Several robots and
//! several tasks may share a cell. Each step every robot picks one of five
//! actions; movements and cleaning succeed with configured probabilities and
//! the shared reward is the number of tasks removed. New tasks may appear
//! after the robot phase of each step.

mod config;
mod encode;

pub use config::{experiment_entries, parse_domain_config, render_domain_config, ParseError};
pub use encode::{encode_state, EncodedState};

use rand::Rng;
use std::fmt;

use crate::mmdp::JointAction;

/// A grid position, `row` counted from the top.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub row: u16,
    pub col: u16,
}

impl Cell {
    pub const fn new(row: u16, col: u16) -> Self {
        Cell { row, col }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        (self.row as i32 - other.row as i32).unsigned_abs()
            + (self.col as i32 - other.col as i32).unsigned_abs()
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Individual robot action. The discriminant is the canonical action index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Act = 4,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Act];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Action::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "UP",
            Action::Down => "DOWN",
            Action::Left => "LEFT",
            Action::Right => "RIGHT",
            Action::Act => "ACT",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parsed and validated domain configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub width: usize,
    pub height: usize,
    pub horizon: usize,
    pub move_success: f64,
    pub act_success: f64,
    pub discount: f64,
    /// Robot identifiers in ascending order; agent index `i` controls `robot_ids[i]`.
    pub robot_ids: Vec<u32>,
    pub robot_starts: Vec<Cell>,
    pub fixed_tasks: Vec<(Cell, u32)>,
    pub spawn_cells: Vec<Cell>,
    pub spawn_probability: f64,
    pub spawn_events_per_step: usize,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DomainError {
    #[error("episode is over: time step {time_step} has reached the horizon {horizon}")]
    EpisodeOver { time_step: usize, horizon: usize },
    #[error("joint action has {got} entries but the domain has {expected} agents")]
    JointActionArity { expected: usize, got: usize },
    #[error("invalid domain: {0}")]
    Invalid(String),
}

impl DomainSpec {
    pub fn n_agents(&self) -> usize {
        self.robot_starts.len()
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        (cell.row as usize) < self.height && (cell.col as usize) < self.width
    }

    pub fn total_fixed_tasks(&self) -> u64 {
        self.fixed_tasks.iter().map(|&(_, n)| n as u64).sum()
    }

    pub fn has_spawns(&self) -> bool {
        self.spawn_events_per_step > 0 && self.spawn_probability > 0.0
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        let bad = |msg: String| Err(DomainError::Invalid(msg));
        if self.width == 0 || self.height == 0 {
            return bad("grid must have at least one cell".into());
        }
        if self.width > u16::MAX as usize || self.height > u16::MAX as usize {
            return bad("grid dimensions too large".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        for (name, p) in [
            ("move_success", self.move_success),
            ("act_success", self.act_success),
            ("discount", self.discount),
            ("spawn probability", self.spawn_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name}={p} outside [0,1]"));
            }
        }
        if self.robot_starts.is_empty() {
            return bad("at least one robot is required".into());
        }
        if self.robot_ids.len() != self.robot_starts.len() {
            return bad("robot id list and start list differ in length".into());
        }
        if self.robot_ids.windows(2).any(|w| w[0] >= w[1]) {
            return bad("robot ids must be unique and ascending".into());
        }
        for &c in self
            .robot_starts
            .iter()
            .chain(self.fixed_tasks.iter().map(|(c, _)| c))
            .chain(self.spawn_cells.iter())
        {
            if !self.in_bounds(c) {
                return bad(format!("cell {c} outside the {}x{} grid", self.width, self.height));
            }
        }
        if self.spawn_events_per_step > 0 && self.spawn_cells.is_empty() {
            return bad("spawn events configured without spawn cells".into());
        }
        Ok(())
    }
}

/// Full world state. Immutable by convention: transitions return new values.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridState {
    width: u16,
    height: u16,
    time_step: u16,
    tasks: Vec<u16>,
    robots: Vec<Cell>,
}

impl GridState {
    pub fn new(width: usize, height: usize, time_step: usize, tasks: Vec<u16>, robots: Vec<Cell>) -> Self {
        assert_eq!(tasks.len(), width * height, "task grid has wrong size");
        GridState {
            width: width as u16,
            height: height as u16,
            time_step: time_step as u16,
            tasks,
            robots,
        }
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn height(&self) -> usize {
        self.height as usize
    }

    pub fn time_step(&self) -> usize {
        self.time_step as usize
    }

    pub fn robots(&self) -> &[Cell] {
        &self.robots
    }

    pub fn robot(&self, agent: usize) -> Cell {
        self.robots[agent]
    }

    /// Row-major task counts.
    pub fn task_grid(&self) -> &[u16] {
        &self.tasks
    }

    pub fn tasks_at(&self, cell: Cell) -> u16 {
        self.tasks[self.index(cell)]
    }

    pub fn total_tasks(&self) -> u64 {
        self.tasks.iter().map(|&n| n as u64).sum()
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row as usize * self.width as usize + cell.col as usize
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new((index / self.width as usize) as u16, (index % self.width as usize) as u16)
    }

    pub fn with_tasks(mut self, cell: Cell, count: u16) -> Self {
        let i = self.index(cell);
        self.tasks[i] = count;
        self
    }

    pub fn with_robot(mut self, agent: usize, cell: Cell) -> Self {
        self.robots[agent] = cell;
        self
    }

    pub fn with_time_step(mut self, t: usize) -> Self {
        self.time_step = t as u16;
        self
    }

    fn moved(&self, from: Cell, action: Action) -> Cell {
        let (r, c) = (from.row, from.col);
        match action {
            Action::Up if r > 0 => Cell::new(r - 1, c),
            Action::Down if r + 1 < self.height => Cell::new(r + 1, c),
            Action::Left if c > 0 => Cell::new(r, c - 1),
            Action::Right if c + 1 < self.width => Cell::new(r, c + 1),
            _ => from,
        }
    }
}

pub fn initial_state(spec: &DomainSpec) -> GridState {
    let mut tasks = vec![0u16; spec.n_cells()];
    for &(cell, count) in &spec.fixed_tasks {
        let i = cell.row as usize * spec.width + cell.col as usize;
        tasks[i] = tasks[i].saturating_add(count.min(u16::MAX as u32) as u16);
    }
    GridState::new(spec.width, spec.height, 0, tasks, spec.robot_starts.clone())
}

/// Result of the robot phase of one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: GridState,
    /// Tasks removed by each robot this step.
    pub removed_by: Vec<u32>,
}

impl StepOutcome {
    pub fn reward(&self) -> f64 {
        self.removed_by.iter().map(|&n| n as f64).sum()
    }
}

/// Robot phase only: moves and cleaning, time advanced by one. Each robot
/// draws one uniform from `rng`, in agent order.
pub fn apply_actions<R: Rng + ?Sized>(
    state: &GridState,
    joint: &JointAction,
    spec: &DomainSpec,
    rng: &mut R,
) -> Result<StepOutcome, DomainError> {
    check_step(state, joint, spec)?;
    let successes: Vec<bool> = joint
        .actions()
        .iter()
        .map(|&a| {
            let p = if a == Action::Act { spec.act_success } else { spec.move_success };
            rng.gen::<f64>() < p
        })
        .collect();
    Ok(resolve(state, joint, &successes))
}

fn check_step(state: &GridState, joint: &JointAction, spec: &DomainSpec) -> Result<(), DomainError> {
    if state.time_step() >= spec.horizon {
        return Err(DomainError::EpisodeOver { time_step: state.time_step(), horizon: spec.horizon });
    }
    if joint.len() != state.robots.len() {
        return Err(DomainError::JointActionArity { expected: state.robots.len(), got: joint.len() });
    }
    Ok(())
}

/// Deterministic resolution given each robot's success flag. Cleaning is
/// resolved in ascending agent order, so contention on a cell never removes
/// more tasks than exist.
fn resolve(state: &GridState, joint: &JointAction, successes: &[bool]) -> StepOutcome {
    let mut next = state.clone();
    let mut removed_by = vec![0u32; state.robots.len()];
    for (agent, (&action, &ok)) in joint.actions().iter().zip(successes).enumerate() {
        if !ok {
            continue;
        }
        let pos = state.robots[agent];
        if action == Action::Act {
            let i = next.index(pos);
            if next.tasks[i] > 0 {
                next.tasks[i] -= 1;
                removed_by[agent] = 1;
            }
        } else {
            next.robots[agent] = state.moved(pos, action);
        }
    }
    next.time_step += 1;
    StepOutcome { state: next, removed_by }
}

/// Each of the configured spawn events adds one task, with the configured
/// probability, to a spawn cell drawn uniformly.
pub fn spawn_tasks<R: Rng + ?Sized>(state: &GridState, spec: &DomainSpec, rng: &mut R) -> GridState {
    let mut next = state.clone();
    if spec.spawn_cells.is_empty() {
        return next;
    }
    for _ in 0..spec.spawn_events_per_step {
        if rng.gen::<f64>() < spec.spawn_probability {
            let cell = spec.spawn_cells[rng.gen_range(0..spec.spawn_cells.len())];
            let i = next.index(cell);
            next.tasks[i] = next.tasks[i].saturating_add(1);
        }
    }
    next
}

/// One full environment transition: robot phase followed by spawning.
pub fn step<R: Rng + ?Sized>(
    state: &GridState,
    joint: &JointAction,
    spec: &DomainSpec,
    rng: &mut R,
) -> Result<StepOutcome, DomainError> {
    let mut outcome = apply_actions(state, joint, spec, rng)?;
    if spec.spawn_events_per_step > 0 {
        outcome.state = spawn_tasks(&outcome.state, spec, rng);
    }
    Ok(outcome)
}

/// Exact distribution over outcomes of the robot phase, used by the tabular
/// compiler. Spawning is not covered. Outcomes with equal resulting states are
/// merged; removal attribution is dropped, only the total reward is kept.
pub fn action_outcomes(
    state: &GridState,
    joint: &JointAction,
    spec: &DomainSpec,
) -> Result<Vec<(GridState, f64, f64)>, DomainError> {
    check_step(state, joint, spec)?;
    let n = joint.len();
    let mut out: Vec<(GridState, f64, f64)> = Vec::new();
    for mask in 0u32..(1 << n) {
        let mut prob = 1.0;
        let successes: Vec<bool> = (0..n)
            .map(|i| {
                let p = if joint.actions()[i] == Action::Act { spec.act_success } else { spec.move_success };
                let ok = mask & (1 << i) != 0;
                prob *= if ok { p } else { 1.0 - p };
                ok
            })
            .collect();
        if prob == 0.0 {
            continue;
        }
        let res = resolve(state, joint, &successes);
        let reward = res.reward();
        match out.iter_mut().find(|(s, r, _)| *s == res.state && *r == reward) {
            Some(entry) => entry.2 += prob,
            None => out.push((res.state, reward, prob)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(text: &str) -> DomainSpec {
        parse_domain_config(text).unwrap()
    }

    fn one_robot(w: usize, h: usize) -> String {
        format!(
            "[grid]\nwidth={w}\nheight={h}\nhorizon=10\nmove_success=1.0\nact_success=1.0\n[robots]\n1,0,0\n[tasks]\n[spawns]\nevents=0,0.0\n"
        )
    }

    fn ja(actions: &[Action]) -> JointAction {
        JointAction::new(actions.to_vec())
    }

    #[test]
    fn act_on_task_cell_removes_one() {
        let s = spec(&one_robot(3, 3));
        let st = initial_state(&s).with_tasks(Cell::new(0, 0), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = step(&st, &ja(&[Action::Act]), &s, &mut rng).unwrap();
        assert_eq!(out.state.tasks_at(Cell::new(0, 0)), 0);
        assert_eq!(out.reward(), 1.0);
        assert_eq!(out.state.time_step(), 1);
    }

    #[test]
    fn boundary_move_is_noop() {
        let s = spec(&one_robot(3, 3));
        let st = initial_state(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for a in [Action::Up, Action::Left] {
            let out = step(&st, &ja(&[a]), &s, &mut rng).unwrap();
            assert_eq!(out.state.robot(0), Cell::new(0, 0));
            assert_eq!(out.reward(), 0.0);
        }
        let out = step(&st, &ja(&[Action::Down]), &s, &mut rng).unwrap();
        assert_eq!(out.state.robot(0), Cell::new(1, 0));
    }

    #[test]
    fn contention_on_single_task_rewards_one() {
        let text = "[grid]\nwidth=1\nheight=1\nhorizon=3\nmove_success=1\nact_success=1\n[robots]\n1,0,0\n2,0,0\n[tasks]\n0,0,1\n[spawns]\nevents=0,0\n";
        let s = spec(text);
        let st = initial_state(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = step(&st, &ja(&[Action::Act, Action::Act]), &s, &mut rng).unwrap();
        assert_eq!(out.reward(), 1.0);
        assert_eq!(out.removed_by, vec![1, 0]);
        assert_eq!(out.state.total_tasks(), 0);
    }

    #[test]
    fn contention_matches_exhaustive_one_cell_oracle() {
        // Enumerate every success pattern and task count on a single shared cell.
        for tasks in 0u16..3 {
            for mask in 0u32..4 {
                let text = format!(
                    "[grid]\nwidth=1\nheight=1\nhorizon=3\nmove_success=1\nact_success=0.5\n[robots]\n1,0,0\n2,0,0\n[tasks]\n0,0,{tasks}\n[spawns]\nevents=0,0\n"
                );
                let s = spec(&text);
                let st = initial_state(&s);
                let succ = [mask & 1 != 0, mask & 2 != 0];
                let out = resolve(&st, &ja(&[Action::Act, Action::Act]), &succ);
                let attempts = succ.iter().filter(|&&b| b).count() as u16;
                let expected = attempts.min(tasks);
                assert_eq!(out.reward(), expected as f64);
                assert_eq!(out.state.total_tasks(), (tasks - expected) as u64);
            }
        }
    }

    #[test]
    fn step_past_horizon_is_an_error() {
        let s = spec(&one_robot(3, 3));
        let st = initial_state(&s).with_time_step(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            step(&st, &ja(&[Action::Act]), &s, &mut rng),
            Err(DomainError::EpisodeOver { .. })
        ));
    }

    #[test]
    fn failed_moves_never_change_position() {
        let mut s = spec(&one_robot(3, 3));
        s.move_success = 0.0;
        let st = initial_state(&s).with_robot(0, Cell::new(1, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for a in Action::ALL {
            let out = step(&st, &ja(&[a]), &s, &mut rng).unwrap();
            assert_eq!(out.state.robot(0), Cell::new(1, 1));
        }
    }

    #[test]
    fn spawn_zero_probability_is_identity() {
        let mut s = spec(&one_robot(3, 3));
        s.spawn_cells = vec![Cell::new(1, 1)];
        s.spawn_events_per_step = 3;
        s.spawn_probability = 0.0;
        let st = initial_state(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(spawn_tasks(&st, &s, &mut rng), st);
    }

    #[test]
    fn spawn_certain_single_cell() {
        let mut s = spec(&one_robot(3, 3));
        s.spawn_cells = vec![Cell::new(2, 1)];
        s.spawn_events_per_step = 1;
        s.spawn_probability = 1.0;
        let st = initial_state(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let next = spawn_tasks(&st, &s, &mut rng);
        assert_eq!(next.tasks_at(Cell::new(2, 1)), 1);
        assert_eq!(next.total_tasks(), 1);
    }

    #[test]
    fn spawn_rate_monte_carlo() {
        let mut s = spec(&one_robot(3, 3));
        s.spawn_cells = vec![Cell::new(0, 1), Cell::new(2, 2)];
        s.spawn_events_per_step = 2;
        s.spawn_probability = 0.9;
        let st = initial_state(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let steps = 10_000;
        let added: u64 = (0..steps).map(|_| spawn_tasks(&st, &s, &mut rng).total_tasks()).sum();
        let mean = added as f64 / steps as f64;
        assert!((mean - 1.8).abs() <= 0.05, "mean {mean}");
    }

    #[test]
    fn outcome_distribution_sums_to_one() {
        let text = "[grid]\nwidth=3\nheight=3\nhorizon=3\nmove_success=0.9\nact_success=0.7\n[robots]\n1,1,1\n2,1,1\n[tasks]\n1,1,1\n[spawns]\nevents=0,0\n";
        let s = spec(text);
        let st = initial_state(&s);
        for a in Action::ALL {
            for b in Action::ALL {
                let outs = action_outcomes(&st, &ja(&[a, b]), &s).unwrap();
                let total: f64 = outs.iter().map(|o| o.2).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }
}
