//! Sparse UCT over a single agent's view of the world.
//!
//! Teammates are folded into the simulator through their models, so the tree
//! only branches over the planning agent's own actions. Action nodes keep a
//! bounded set of sampled outcomes; once the bound is reached, the next state
//! is redrawn from the recorded outcomes in proportion to how often each one
//! was observed.

use std::hash::Hash;

use rand::{Rng, RngCore};

use crate::factory::{self, Action, DomainSpec, GridState};
use crate::mmdp::JointAction;
use crate::policy::ModelActor;
use crate::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct MctsParams {
    /// Base exploration constant `C`; the constant used at time `t` is `C * (H - t)`.
    pub exploration: f64,
    pub iterations: usize,
    pub sparse_limit: usize,
    pub diy_bonus: f64,
    pub horizon: usize,
}

impl MctsParams {
    pub fn new(exploration: f64, iterations: usize, horizon: usize) -> Self {
        MctsParams { exploration, iterations, sparse_limit: 20, diy_bonus: 0.7, horizon }
    }

    pub fn exploration_at(&self, t: usize) -> f64 {
        self.exploration * self.horizon.saturating_sub(t) as f64
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.exploration > 0.0) {
            return Err(Error::Config(format!("exploration constant must be positive, got {}", self.exploration)));
        }
        if self.iterations == 0 {
            return Err(Error::Config("MCTS needs at least one iteration".into()));
        }
        if self.sparse_limit == 0 {
            return Err(Error::Config("sparse limit must be at least 1".into()));
        }
        Ok(())
    }
}

/// `q + c * sqrt(ln N / n)`, or `+inf` for an unvisited node.
pub fn uct_score(q_estimate: f64, parent_visits: u64, node_visits: u64, c: f64) -> f64 {
    if node_visits == 0 {
        return f64::INFINITY;
    }
    q_estimate + c * ((parent_visits as f64).ln() / node_visits as f64).sqrt()
}

/// A generative single-agent model the search can query.
pub trait SearchModel {
    type State: Clone + Eq + Hash;

    fn num_actions(&self) -> usize;
    fn horizon(&self) -> usize;
    fn time(&self, state: &Self::State) -> usize;
    fn discount(&self) -> f64 {
        1.0
    }
    /// Samples a successor and the reward of the transition.
    fn step(&mut self, state: &Self::State, action: usize, rng: &mut dyn RngCore) -> Result<(Self::State, f64), Error>;
    /// Estimated return from `state` to the horizon.
    fn rollout(&mut self, state: &Self::State, rng: &mut dyn RngCore) -> Result<f64, Error>;
}

#[derive(Clone, Debug)]
pub struct Outcome<S> {
    pub state: S,
    pub reward: f64,
    pub count: u64,
    node: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Draw {
    /// Simulator invoked, new outcome recorded.
    New,
    /// Simulator invoked, existing outcome seen again.
    Repeat,
    /// Cap reached, outcome redrawn from recorded frequencies.
    Redraw,
}

/// The sampled successors of one action node.
#[derive(Clone, Debug)]
pub struct OutcomeSet<S> {
    outcomes: Vec<Outcome<S>>,
    total: u64,
}

impl<S> Default for OutcomeSet<S> {
    fn default() -> Self {
        OutcomeSet { outcomes: Vec::new(), total: 0 }
    }
}

impl<S: Clone + PartialEq> OutcomeSet<S> {
    /// Builds a set with fixed occurrence counts.
    pub fn with_counts(counts: Vec<(S, f64, u64)>) -> Self {
        let total = counts.iter().map(|c| c.2).sum();
        OutcomeSet {
            outcomes: counts
                .into_iter()
                .map(|(state, reward, count)| Outcome { state, reward, count, node: usize::MAX })
                .collect(),
            total,
        }
    }

    pub fn outcomes(&self) -> &[Outcome<S>] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Below `limit` distinct outcomes the simulator is called and its result
    /// recorded; at the limit an existing outcome is drawn with probability
    /// proportional to its count, and counts stay frozen.
    pub fn sample<F>(&mut self, limit: usize, simulate: F, rng: &mut dyn RngCore) -> Result<(usize, Draw), Error>
    where
        F: FnOnce(&mut dyn RngCore) -> Result<(S, f64), Error>,
    {
        if self.outcomes.len() < limit {
            let (state, reward) = simulate(rng)?;
            self.total += 1;
            if let Some(i) = self.outcomes.iter().position(|o| o.reward == reward && o.state == state) {
                self.outcomes[i].count += 1;
                return Ok((i, Draw::Repeat));
            }
            self.outcomes.push(Outcome { state, reward, count: 1, node: usize::MAX });
            return Ok((self.outcomes.len() - 1, Draw::New));
        }
        let mut pick = rng.gen_range(0..self.total);
        for (i, o) in self.outcomes.iter().enumerate() {
            if pick < o.count {
                return Ok((i, Draw::Redraw));
            }
            pick -= o.count;
        }
        unreachable!("pick is below the total count")
    }
}

#[derive(Clone, Debug)]
pub struct ActionNode<S> {
    pub visits: u64,
    pub value_sum: f64,
    pub outcomes: OutcomeSet<S>,
}

impl<S> ActionNode<S> {
    pub fn q_estimate(&self) -> Option<f64> {
        (self.visits > 0).then(|| self.value_sum / self.visits as f64)
    }
}

#[derive(Clone, Debug)]
pub struct StateNode<S> {
    pub visits: u64,
    pub value_sum: f64,
    pub actions: Vec<ActionNode<S>>,
}

/// Arena-backed search tree; node 0 is the root.
#[derive(Clone, Debug)]
pub struct SearchTree<S> {
    nodes: Vec<StateNode<S>>,
    num_actions: usize,
}

impl<S: Clone + PartialEq> SearchTree<S> {
    fn new(num_actions: usize) -> Self {
        let mut tree = SearchTree { nodes: Vec::new(), num_actions };
        tree.push_node();
        tree
    }

    fn push_node(&mut self) -> usize {
        let actions = (0..self.num_actions)
            .map(|_| ActionNode { visits: 0, value_sum: 0.0, outcomes: OutcomeSet::default() })
            .collect();
        self.nodes.push(StateNode { visits: 0, value_sum: 0.0, actions });
        self.nodes.len() - 1
    }

    pub fn root(&self) -> &StateNode<S> {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> &[StateNode<S>] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &StateNode<S> {
        &self.nodes[index]
    }

    /// State-node index an outcome leads to.
    pub fn child_of(&self, outcome: &Outcome<S>) -> usize {
        outcome.node
    }

    pub fn root_q(&self) -> Vec<Option<f64>> {
        self.root().actions.iter().map(|a| a.q_estimate()).collect()
    }

    /// Visited root action with the largest estimate; ties go to the lowest index.
    pub fn best_action(&self) -> usize {
        let mut best = 0;
        let mut best_q = f64::NEG_INFINITY;
        for (i, q) in self.root_q().into_iter().enumerate() {
            if let Some(q) = q {
                if q > best_q {
                    best_q = q;
                    best = i;
                }
            }
        }
        best
    }

    fn select(&self, node: usize, c: f64) -> usize {
        let n = &self.nodes[node];
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, a) in n.actions.iter().enumerate() {
            let score = uct_score(a.q_estimate().unwrap_or(0.0), n.visits.max(1), a.visits, c);
            if score == f64::INFINITY {
                return i;
            }
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        best
    }
}

/// Runs `params.iterations` iterations of sparse UCT from `root`.
pub fn search<M: SearchModel>(
    model: &mut M,
    root: &M::State,
    params: &MctsParams,
    rng: &mut dyn RngCore,
) -> Result<SearchTree<M::State>, Error> {
    let mut tree = SearchTree::new(model.num_actions());
    for _ in 0..params.iterations {
        descend(&mut tree, model, 0, root, params, rng, true)?;
    }
    Ok(tree)
}

fn descend<M: SearchModel>(
    tree: &mut SearchTree<M::State>,
    model: &mut M,
    node: usize,
    state: &M::State,
    params: &MctsParams,
    rng: &mut dyn RngCore,
    is_root: bool,
) -> Result<f64, Error> {
    let t = model.time(state);
    let ret = if t >= model.horizon() {
        0.0
    } else if !is_root && tree.nodes[node].visits == 0 {
        model.rollout(state, rng)?
    } else {
        let a = tree.select(node, params.exploration_at(t));
        let mut outcomes = std::mem::take(&mut tree.nodes[node].actions[a].outcomes);
        let drawn = outcomes.sample(params.sparse_limit, |r| model.step(state, a, r), rng);
        let (k, draw) = match drawn {
            Ok(v) => v,
            Err(e) => {
                tree.nodes[node].actions[a].outcomes = outcomes;
                return Err(e);
            }
        };
        if draw == Draw::New {
            outcomes.outcomes[k].node = tree.push_node();
        }
        let (child, next, reward) = {
            let o = &outcomes.outcomes[k];
            (o.node, o.state.clone(), o.reward)
        };
        tree.nodes[node].actions[a].outcomes = outcomes;
        let future = descend(tree, model, child, &next, params, rng, false)?;
        let g = reward + model.discount() * future;
        let an = &mut tree.nodes[node].actions[a];
        an.visits += 1;
        an.value_sum += g;
        g
    };
    let sn = &mut tree.nodes[node];
    sn.visits += 1;
    sn.value_sum += ret;
    Ok(ret)
}

/// The planning agent's projection of the Factory Floor: teammates act
/// according to their models, and the agent's own cleaning earns an extra
/// bonus inside simulation.
pub struct ProjectedFloor<'a> {
    pub spec: &'a DomainSpec,
    pub agent: usize,
    pub teammates: &'a mut [ModelActor],
    pub rollout_policy: &'a mut ModelActor,
    pub diy_bonus: f64,
}

impl ProjectedFloor<'_> {
    fn joint(&mut self, state: &GridState, own: Action) -> Result<JointAction, Error> {
        let mut actions = vec![own; self.spec.n_agents()];
        for mate in self.teammates.iter_mut() {
            actions[mate.agent()] = mate.act(state)?;
        }
        Ok(JointAction::new(actions))
    }

    fn transition(&mut self, state: &GridState, own: Action, rng: &mut dyn RngCore) -> Result<(GridState, f64), Error> {
        let joint = self.joint(state, own)?;
        let out = factory::step(state, &joint, self.spec, rng)?;
        let reward = out.reward() + self.diy_bonus * out.removed_by[self.agent] as f64;
        Ok((out.state, reward))
    }
}

impl SearchModel for ProjectedFloor<'_> {
    type State = GridState;

    fn num_actions(&self) -> usize {
        Action::COUNT
    }

    fn horizon(&self) -> usize {
        self.spec.horizon
    }

    fn time(&self, state: &GridState) -> usize {
        state.time_step()
    }

    fn discount(&self) -> f64 {
        self.spec.discount
    }

    fn step(&mut self, state: &GridState, action: usize, rng: &mut dyn RngCore) -> Result<(GridState, f64), Error> {
        let own = Action::from_index(action).expect("action index in range");
        self.transition(state, own, rng)
    }

    fn rollout(&mut self, state: &GridState, rng: &mut dyn RngCore) -> Result<f64, Error> {
        let mut state = state.clone();
        let mut total = 0.0;
        let mut weight = 1.0;
        let spawns = self.spec.has_spawns();
        while state.time_step() < self.spec.horizon {
            if !spawns && state.total_tasks() == 0 {
                break;
            }
            let own = self.rollout_policy.act(&state)?;
            let (next, reward) = self.transition(&state, own, rng)?;
            total += weight * reward;
            weight *= self.spec.discount;
            state = next;
        }
        Ok(total)
    }
}

/// Return of one rollout from `state` with the rollout policy for `agent` and
/// teammate models for everyone else, including the do-it-yourself bonus.
pub fn rollout_return(
    state: &GridState,
    agent: usize,
    spec: &DomainSpec,
    teammates: &mut [ModelActor],
    rollout_policy: &mut ModelActor,
    params: &MctsParams,
    rng: &mut dyn RngCore,
) -> Result<f64, Error> {
    let mut model = ProjectedFloor { spec, agent, teammates, rollout_policy, diy_bonus: params.diy_bonus };
    model.rollout(state, rng)
}

/// Builds a fresh tree at `root` and returns the greedy action.
pub fn plan_action(
    root: &GridState,
    agent: usize,
    spec: &DomainSpec,
    teammates: &mut [ModelActor],
    rollout_policy: &mut ModelActor,
    params: &MctsParams,
    rng: &mut dyn RngCore,
) -> Result<Action, Error> {
    let tree = plan_tree(root, agent, spec, teammates, rollout_policy, params, rng)?;
    Ok(Action::from_index(tree.best_action()).expect("action index in range"))
}

pub fn plan_tree(
    root: &GridState,
    agent: usize,
    spec: &DomainSpec,
    teammates: &mut [ModelActor],
    rollout_policy: &mut ModelActor,
    params: &MctsParams,
    rng: &mut dyn RngCore,
) -> Result<SearchTree<GridState>, Error> {
    if root.time_step() >= spec.horizon {
        return Err(factory::DomainError::EpisodeOver { time_step: root.time_step(), horizon: spec.horizon }.into());
    }
    let mut model = ProjectedFloor { spec, agent, teammates, rollout_policy, diy_bonus: params.diy_bonus };
    search(&mut model, root, params, rng)
}
