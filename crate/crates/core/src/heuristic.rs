//! Generation-0 teammate model: social-order destination assignment.
//!
//! Every robot scores each cell by `tasks / manhattan distance`, ranks the
//! cells, and picks the k-th best one where k is its rank among the robots
//! standing on the same cell (ordered by identifier). It cleans when it stands
//! on its target and otherwise walks towards it.

use crate::factory::{Action, Cell, GridState};

/// 1-based rank of `agent` among robots sharing its cell, by identifier.
pub fn social_rank(state: &GridState, agent: usize) -> usize {
    let pos = state.robot(agent);
    1 + state.robots()[..agent].iter().filter(|&&c| c == pos).count()
}

/// Destination score: `-inf` without tasks, `+inf` for a task cell under the
/// robot, otherwise task count over Manhattan distance.
pub fn destination_value(state: &GridState, cell: Cell, agent: usize) -> f64 {
    let tasks = state.tasks_at(cell);
    if tasks == 0 {
        return f64::NEG_INFINITY;
    }
    match state.robot(agent).manhattan(cell) {
        0 => f64::INFINITY,
        d => tasks as f64 / d as f64,
    }
}

/// Cells with tasks, best first; ties keep row-major order.
pub fn ranked_destinations(state: &GridState, agent: usize) -> Vec<(Cell, f64)> {
    let mut scored: Vec<(Cell, f64)> = state
        .task_grid()
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(i, _)| {
            let cell = state.cell_at(i);
            (cell, destination_value(state, cell, agent))
        })
        .collect();
    // Stable sort keeps row-major order among equal scores.
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored
}

pub fn target_destination(state: &GridState, agent: usize) -> Option<Cell> {
    let ranked = ranked_destinations(state, agent);
    if ranked.is_empty() {
        return None;
    }
    let k = social_rank(state, agent);
    Some(ranked[(k - 1) % ranked.len()].0)
}

/// First move of a shortest path. The axis with the larger displacement is
/// reduced first; on equal displacement the vertical axis goes first.
pub fn move_towards(from: Cell, to: Cell) -> Option<Action> {
    let dr = to.row as i32 - from.row as i32;
    let dc = to.col as i32 - from.col as i32;
    if dr == 0 && dc == 0 {
        return None;
    }
    Some(if dr.abs() >= dc.abs() {
        if dr < 0 {
            Action::Up
        } else {
            Action::Down
        }
    } else if dc < 0 {
        Action::Left
    } else {
        Action::Right
    })
}

pub fn heuristic_action(state: &GridState, agent: usize) -> Action {
    match target_destination(state, agent) {
        None => Action::Act,
        Some(target) => move_towards(state.robot(agent), target).unwrap_or(Action::Act),
    }
}
