//! Multi-agent MDP plumbing: joint actions, episodes, and return statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::factory::{self, Action, DomainSpec, GridState};
use crate::policy::{Controller, PolicyHandle};
use crate::Error;

/// One individual action per agent, in agent order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct JointAction(Vec<Action>);

impl JointAction {
    pub fn new(actions: Vec<Action>) -> Self {
        JointAction(actions)
    }

    pub fn actions(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, agent: usize) -> Action {
        self.0[agent]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    /// State the joint action was chosen in.
    pub state: GridState,
    pub joint_action: JointAction,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub seed: u64,
    pub initial_state: GridState,
    pub steps: Vec<TrajectoryStep>,
    pub final_state: GridState,
    pub discount: f64,
    pub total_return: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.reward)
    }
}

/// Mean, sample standard deviation and a 95% normal-approximation interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReturnSummary {
    pub n_episodes: usize,
    pub mean: f64,
    pub sample_sd: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

impl ReturnSummary {
    pub fn half_width(&self) -> f64 {
        (self.ci95_high - self.ci95_low) / 2.0
    }
}

pub fn summarize_returns(returns: &[f64]) -> Result<ReturnSummary, Error> {
    if returns.is_empty() {
        return Err(Error::Argument("cannot summarize an empty list of returns".into()));
    }
    let n = returns.len();
    let mean = returns.iter().sum::<f64>() / n as f64;
    let (sd, half) = if n >= 2 {
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        (sd, 1.96 * sd / (n as f64).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(ReturnSummary { n_episodes: n, mean, sample_sd: sd, ci95_low: mean - half, ci95_high: mean + half })
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a parent seed and an index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

const ENV_STREAM: u64 = u64::MAX;

/// Plays one episode to the horizon. The environment and every agent's
/// decision at every step draw from separate streams derived from `seed`.
pub fn run_episode(domain: &DomainSpec, policies: &[PolicyHandle], seed: u64) -> Result<Trajectory, Error> {
    if policies.len() != domain.n_agents() {
        return Err(Error::Config(format!(
            "{} policies supplied for {} agents",
            policies.len(),
            domain.n_agents()
        )));
    }
    let mut controllers = policies
        .iter()
        .enumerate()
        .map(|(agent, p)| Controller::new(p, agent, domain))
        .collect::<Result<Vec<_>, _>>()?;

    let mut env_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, ENV_STREAM));
    let initial = factory::initial_state(domain);
    let mut state = initial.clone();
    let mut steps = Vec::with_capacity(domain.horizon);
    let mut total = 0.0;
    let mut weight = 1.0;
    while state.time_step() < domain.horizon {
        let t = state.time_step() as u64;
        let mut actions = Vec::with_capacity(controllers.len());
        for (agent, ctl) in controllers.iter_mut().enumerate() {
            let stream = derive_seed(derive_seed(seed, t), agent as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(stream);
            actions.push(ctl.act(&state, &mut rng)?);
        }
        let joint = JointAction::new(actions);
        let outcome = factory::step(&state, &joint, domain, &mut env_rng)?;
        let reward = outcome.reward();
        total += weight * reward;
        weight *= domain.discount;
        steps.push(TrajectoryStep { state, joint_action: joint, reward });
        state = outcome.state;
    }
    Ok(Trajectory { seed, initial_state: initial, steps, final_state: state, discount: domain.discount, total_return: total })
}

/// Runs `n_episodes` episodes with seeds `derive_seed(seed, i)`, in parallel,
/// returned in episode order.
pub fn run_episodes(
    domain: &DomainSpec,
    policies: &[PolicyHandle],
    n_episodes: usize,
    seed: u64,
) -> Result<Vec<Trajectory>, Error> {
    (0..n_episodes as u64)
        .into_par_iter()
        .map(|i| run_episode(domain, policies, derive_seed(seed, i)))
        .collect()
}

pub fn evaluate_policy(
    domain: &DomainSpec,
    policies: &[PolicyHandle],
    n_episodes: usize,
    seed: u64,
) -> Result<ReturnSummary, Error> {
    if n_episodes == 0 {
        return Err(Error::Argument("n_episodes must be at least 1".into()));
    }
    let returns: Vec<f64> = run_episodes(domain, policies, n_episodes, seed)?
        .iter()
        .map(|t| t.total_return)
        .collect();
    summarize_returns(&returns)
}
