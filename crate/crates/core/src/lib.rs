//! Decentralized multi-agent planning with behaviorally cloned teammates.
//!
//! Each agent plans with its own sparse-UCT search in which teammates are
//! simulated by models. Generation by generation, the models of one agent are
//! replaced by networks cloned from the team's logged behavior, so the joint
//! policy climbs towards a Nash equilibrium. A tabular dynamic-programming
//! solver checks the underlying best-response guarantees on small problems.

pub mod cloning;
pub mod exact;
pub mod factory;
pub mod heuristic;
pub mod mcts;
pub mod mmdp;
pub mod nn;
pub mod pipeline;
pub mod policy;

pub use factory::{Action, Cell, DomainSpec, GridState};
pub use mmdp::{JointAction, ReturnSummary, Trajectory};
pub use policy::PolicyHandle;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Parse(#[from] factory::ParseError),
    #[error(transparent)]
    Domain(#[from] factory::DomainError),
    #[error(transparent)]
    Net(#[from] nn::NetError),
    #[error(transparent)]
    ModelFormat(#[from] nn::ModelFormatError),
    #[error(transparent)]
    Solver(#[from] exact::SolverError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Argument(_) | Error::Parse(_) | Error::ModelFormat(_))
    }
}
