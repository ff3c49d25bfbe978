//! Policy handles and the per-episode controllers that execute them.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::RngCore;

use crate::cloning::ClonedActor;
use crate::factory::{Action, DomainSpec, GridState};
use crate::heuristic::heuristic_action;
use crate::mcts::{plan_action, MctsParams};
use crate::nn::PolicyModel;
use crate::Error;

/// Explicit state-to-action table, only practical on tiny domains.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TablePolicy {
    pub actions: HashMap<GridState, Action>,
}

/// Configuration of a decentralized MCTS agent.
#[derive(Clone, Debug, PartialEq)]
pub struct MctsAgent {
    /// Model of every other agent, keyed by agent index.
    pub teammates: BTreeMap<usize, PolicyHandle>,
    pub rollout: PolicyHandle,
    pub params: MctsParams,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PolicyHandle {
    Heuristic,
    Cloned(Arc<PolicyModel>),
    FixedTable(Arc<TablePolicy>),
    Mcts(Arc<MctsAgent>),
}

impl PolicyHandle {
    pub fn kind(&self) -> &'static str {
        match self {
            PolicyHandle::Heuristic => "heuristic",
            PolicyHandle::Cloned(_) => "cloned-model",
            PolicyHandle::FixedTable(_) => "fixed-table",
            PolicyHandle::Mcts(_) => "mcts",
        }
    }

    pub fn is_deterministic_model(&self) -> bool {
        !matches!(self, PolicyHandle::Mcts(_))
    }
}

/// A deterministic state-to-action policy with a memo of past answers.
pub struct ModelActor {
    handle: PolicyHandle,
    agent: usize,
    spec: DomainSpec,
    net: Option<ClonedActor>,
    memo: HashMap<GridState, Action>,
}

impl ModelActor {
    pub fn new(handle: &PolicyHandle, agent: usize, spec: &DomainSpec) -> Result<Self, Error> {
        if !handle.is_deterministic_model() {
            return Err(Error::Config(format!(
                "agent {agent}: an MCTS policy cannot serve as a teammate or rollout model"
            )));
        }
        let net = match handle {
            PolicyHandle::Cloned(model) => Some(ClonedActor::new(model)),
            _ => None,
        };
        Ok(ModelActor { handle: handle.clone(), agent, spec: spec.clone(), net, memo: HashMap::new() })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn act(&mut self, state: &GridState) -> Result<Action, Error> {
        match &self.handle {
            PolicyHandle::Heuristic => Ok(heuristic_action(state, self.agent)),
            PolicyHandle::Cloned(_) => {
                if let Some(&a) = self.memo.get(state) {
                    return Ok(a);
                }
                let a = self.net.as_mut().expect("built for cloned handles").act(state, &self.spec)?;
                self.memo.insert(state.clone(), a);
                Ok(a)
            }
            PolicyHandle::FixedTable(table) => table
                .actions
                .get(state)
                .copied()
                .ok_or_else(|| Error::Config(format!("fixed table has no entry for agent {} at t={}", self.agent, state.time_step()))),
            PolicyHandle::Mcts(_) => unreachable!("rejected in ModelActor::new"),
        }
    }
}

/// Runtime form of a [`PolicyHandle`] for one agent over one episode.
pub enum Controller {
    Direct(ModelActor),
    Planner { agent: usize, spec: DomainSpec, teammates: Vec<ModelActor>, rollout: ModelActor, params: MctsParams },
}

impl Controller {
    pub fn new(handle: &PolicyHandle, agent: usize, spec: &DomainSpec) -> Result<Self, Error> {
        match handle {
            PolicyHandle::Mcts(cfg) => {
                let n = spec.n_agents();
                let expected: Vec<usize> = (0..n).filter(|&j| j != agent).collect();
                let got: Vec<usize> = cfg.teammates.keys().copied().collect();
                if got != expected {
                    return Err(Error::Config(format!(
                        "agent {agent}: teammate models cover agents {got:?}, expected {expected:?}"
                    )));
                }
                let teammates = cfg
                    .teammates
                    .iter()
                    .map(|(&j, h)| ModelActor::new(h, j, spec))
                    .collect::<Result<Vec<_>, _>>()?;
                let rollout = ModelActor::new(&cfg.rollout, agent, spec)?;
                Ok(Controller::Planner { agent, spec: spec.clone(), teammates, rollout, params: cfg.params.clone() })
            }
            other => Ok(Controller::Direct(ModelActor::new(other, agent, spec)?)),
        }
    }

    pub fn act(&mut self, state: &GridState, rng: &mut dyn RngCore) -> Result<Action, Error> {
        match self {
            Controller::Direct(actor) => actor.act(state),
            Controller::Planner { agent, spec, teammates, rollout, params } => {
                plan_action(state, *agent, spec, teammates, rollout, params, rng)
            }
        }
    }
}
