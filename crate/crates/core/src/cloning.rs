//! Behavioral cloning: logged episodes to per-agent datasets to policy models.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::factory::{encode_state, Action, DomainSpec, EncodedState, GridState};
use crate::mmdp::{derive_seed, Trajectory};
use crate::nn::{self, init_weights, AdamState, InferenceNet, NetworkArch, PolicyModel, Scratch};
use crate::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct CloningRecord {
    pub episode: usize,
    pub step: usize,
    pub input: EncodedState,
    pub action: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CloningDataset {
    pub agent: usize,
    pub generation: u32,
    pub records: Vec<CloningRecord>,
    pub source_episode_count: usize,
}

impl CloningDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends another dataset's records, keeping their order.
    pub fn extend(&mut self, other: &CloningDataset) {
        self.records.extend(other.records.iter().cloned());
        self.source_episode_count += other.source_episode_count;
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let width = self.records.first().map_or(0, |r| r.input.values.len());
        let mut header = String::from("generation,agent,episode,step,action");
        for k in 0..width {
            header.push_str(&format!(",v{k}"));
        }
        writeln!(out, "{header}")?;
        for r in &self.records {
            write!(out, "{},{},{},{},{}", self.generation, self.agent + 1, r.episode, r.step, r.action)?;
            for v in &r.input.values {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingHyperparams {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainingHyperparams {
    fn default() -> Self {
        TrainingHyperparams { batch_size: 32, epochs: 30, learning_rate: 1e-3, shuffle_seed: 0 }
    }
}

/// One record per (episode, step): the encoded pre-action state and the
/// action `agent` executed there.
pub fn build_dataset(
    trajectories: &[Trajectory],
    agent: usize,
    spec: &DomainSpec,
    generation: u32,
) -> Result<CloningDataset, Error> {
    if trajectories.is_empty() {
        return Err(Error::Argument("cannot build a dataset from zero trajectories".into()));
    }
    if agent >= spec.n_agents() {
        return Err(Error::Argument(format!("agent {agent} out of range")));
    }
    let mut records = Vec::with_capacity(trajectories.iter().map(Trajectory::len).sum());
    for (episode, traj) in trajectories.iter().enumerate() {
        for (step, s) in traj.steps.iter().enumerate() {
            records.push(CloningRecord {
                episode,
                step,
                input: encode_state(&s.state, spec),
                action: s.joint_action.get(agent).index(),
            });
        }
    }
    Ok(CloningDataset { agent, generation, records, source_episode_count: trajectories.len() })
}

/// Mini-batch Adam on the mean cross-entropy, reshuffling the full dataset
/// every epoch.
pub fn train_model(
    dataset: &CloningDataset,
    arch: NetworkArch,
    hp: &TrainingHyperparams,
    seed: u64,
) -> Result<PolicyModel, Error> {
    if dataset.is_empty() {
        return Err(Error::Argument("cannot train on an empty dataset".into()));
    }
    if hp.batch_size == 0 {
        return Err(Error::Argument("batch size must be at least 1".into()));
    }
    arch.validate()?;
    if let Some(r) = dataset.records.iter().find(|r| r.input.shape() != arch.input_shape()) {
        return Err(Error::Argument(format!(
            "dataset state shape {:?} does not match network input {:?}",
            r.input.shape(),
            arch.input_shape()
        )));
    }
    let mut model = init_weights(arch, seed);
    model.meta.generation = dataset.generation;
    model.meta.agent = dataset.agent as u32;
    let mut opt = AdamState::with_learning_rate(model.weights.len(), hp.learning_rate);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..hp.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(hp.shuffle_seed, epoch as u64));
        order.shuffle(&mut rng);
        for chunk in order.chunks(hp.batch_size) {
            let batch: Vec<(&EncodedState, usize)> = chunk
                .iter()
                .map(|&i| (&dataset.records[i].input, dataset.records[i].action))
                .collect();
            nn::training_step(&mut model, &mut opt, &batch)?;
        }
    }
    Ok(model)
}

/// A model prepared for repeated action queries.
#[derive(Clone, Debug)]
pub struct ClonedActor {
    net: InferenceNet,
    scratch: Scratch,
}

impl ClonedActor {
    pub fn new(model: &PolicyModel) -> Self {
        ClonedActor { net: InferenceNet::new(model), scratch: Scratch::default() }
    }

    /// Argmax action of the model; ties go to the lowest action index.
    pub fn act(&mut self, state: &GridState, spec: &DomainSpec) -> Result<Action, Error> {
        let shape = self.net.arch().input_shape();
        if (state.robots().len() + 2, state.height(), state.width()) != shape {
            return Err(Error::Argument(format!(
                "state with {} robots on a {}x{} grid does not fit a network expecting {shape:?}",
                state.robots().len(),
                state.height(),
                state.width(),
            )));
        }
        let index = self.net.action(&encode_state(state, spec), &mut self.scratch);
        Ok(Action::from_index(index).expect("five outputs"))
    }

    fn act_encoded(&mut self, input: &EncodedState) -> Result<usize, Error> {
        let shape = self.net.arch().input_shape();
        if input.shape() != shape {
            return Err(nn::NetError::ShapeMismatch { expected: shape, got: input.shape() }.into());
        }
        Ok(self.net.action(input, &mut self.scratch))
    }
}

/// Argmax action of the model; ties go to the lowest action index.
pub fn cloned_policy_action(model: &PolicyModel, state: &GridState, spec: &DomainSpec) -> Result<Action, Error> {
    ClonedActor::new(model).act(state, spec)
}

/// Fraction of records whose label equals the model's argmax.
pub fn accuracy(model: &PolicyModel, dataset: &CloningDataset) -> Result<f64, Error> {
    if dataset.is_empty() {
        return Err(Error::Argument("empty dataset".into()));
    }
    let mut actor = ClonedActor::new(model);
    let mut hits = 0usize;
    for r in &dataset.records {
        hits += (actor.act_encoded(&r.input)? == r.action) as usize;
    }
    Ok(hits as f64 / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factory::{initial_state, parse_domain_config};
    use crate::mmdp::run_episodes;
    use crate::policy::PolicyHandle;

    const SMALL: &str = "[grid]\nwidth=4\nheight=3\nhorizon=4\nmove_success=0.9\nact_success=1\n[robots]\n1,0,0\n2,2,3\n[tasks]\n1,1,2\n0,3,1\n[spawns]\nevents=0,0\n";

    fn spec() -> DomainSpec {
        parse_domain_config(SMALL).unwrap()
    }

    #[test]
    fn dataset_has_one_record_per_step() {
        let s = spec();
        let trajs = run_episodes(&s, &[PolicyHandle::Heuristic, PolicyHandle::Heuristic], 3, 1).unwrap();
        let d = build_dataset(&trajs, 1, &s, 0).unwrap();
        assert_eq!(d.len(), 12);
        assert!(d.records.iter().all(|r| r.action < 5));
        for (r, step) in d.records.iter().zip(trajs.iter().flat_map(|t| t.steps.iter())) {
            assert_eq!(r.input, encode_state(&step.state, &s));
        }
        assert!(build_dataset(&[], 0, &s, 0).is_err());
    }

    #[test]
    fn zero_epochs_returns_the_initial_model() {
        let s = spec();
        let trajs = run_episodes(&s, &[PolicyHandle::Heuristic, PolicyHandle::Heuristic], 1, 1).unwrap();
        let d = build_dataset(&trajs, 0, &s, 0).unwrap();
        let arch = NetworkArch::for_grid(2, 3, 4);
        let hp = TrainingHyperparams { epochs: 0, ..Default::default() };
        let m = train_model(&d, arch, &hp, 5).unwrap();
        assert_eq!(m.weights, init_weights(arch, 5).weights);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let s = spec();
        let trajs = run_episodes(&s, &[PolicyHandle::Heuristic, PolicyHandle::Heuristic], 1, 1).unwrap();
        let d = build_dataset(&trajs, 0, &s, 0).unwrap();
        let arch = NetworkArch::for_grid(2, 4, 4);
        assert!(matches!(train_model(&d, arch, &TrainingHyperparams::default(), 0), Err(Error::Argument(_))));
    }

    #[test]
    fn zero_model_picks_first_action() {
        let s = spec();
        let m = PolicyModel::zeros(NetworkArch::for_grid(2, 3, 4));
        assert_eq!(cloned_policy_action(&m, &initial_state(&s), &s).unwrap(), Action::Up);
        let wrong = PolicyModel::zeros(NetworkArch::for_grid(2, 5, 5));
        assert!(cloned_policy_action(&wrong, &initial_state(&s), &s).is_err());
    }

    #[test]
    fn memorizes_a_single_sample() {
        let s = spec();
        let state = initial_state(&s);
        let d = CloningDataset {
            agent: 0,
            generation: 0,
            records: vec![CloningRecord { episode: 0, step: 0, input: encode_state(&state, &s), action: 2 }],
            source_episode_count: 1,
        };
        let hp = TrainingHyperparams { batch_size: 1, epochs: 400, learning_rate: 1e-2, shuffle_seed: 0 };
        let m = train_model(&d, NetworkArch::for_grid(2, 3, 4), &hp, 3).unwrap();
        let loss = nn::sample_loss(&m, &d.records[0].input, 2).unwrap();
        assert!(loss < 1e-3, "{loss}");
        assert_eq!(cloned_policy_action(&m, &state, &s).unwrap(), Action::Left);
    }

    #[test]
    fn csv_layout() {
        let s = spec();
        let trajs = run_episodes(&s, &[PolicyHandle::Heuristic, PolicyHandle::Heuristic], 1, 1).unwrap();
        let d = build_dataset(&trajs, 0, &s, 2).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("generation,agent,episode,step,action,v0,v1"));
        assert_eq!(lines[0].split(',').count(), 5 + 4 * 12);
        assert!(lines[1].starts_with("2,1,0,0,"));
    }
}
