//! The generation loop: simulate, clone every agent's behavior, and hand one
//! agent (round robin) fresh models of its teammates and of itself.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::cloning::{accuracy, build_dataset, train_model, CloningDataset, TrainingHyperparams};
use crate::factory::DomainSpec;
use crate::mcts::MctsParams;
use crate::mmdp::{derive_seed, run_episodes, summarize_returns, ReturnSummary, Trajectory};
use crate::nn::{save_model, NetworkArch, PolicyModel};
use crate::policy::{MctsAgent, PolicyHandle};
use crate::Error;

const TRAIN_STREAM: u64 = u64::MAX - 1;

/// 1-based index of the agent updated at generation `g >= 1`.
pub fn next_update_agent(g: u32, n: usize) -> usize {
    assert!(g >= 1 && n >= 1, "generation and agent count must be positive");
    (g as usize % n) + 1
}

/// Every agent's planner configuration at one generation.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyRegistry {
    pub generation: u32,
    pub entries: Vec<Arc<MctsAgent>>,
}

impl PolicyRegistry {
    /// Generation 0: heuristic teammate and rollout models everywhere.
    pub fn initial(n_agents: usize, params: &MctsParams) -> Self {
        let entries = (0..n_agents)
            .map(|i| {
                let teammates = (0..n_agents).filter(|&j| j != i).map(|j| (j, PolicyHandle::Heuristic)).collect();
                Arc::new(MctsAgent { teammates, rollout: PolicyHandle::Heuristic, params: params.clone() })
            })
            .collect();
        PolicyRegistry { generation: 0, entries }
    }

    pub fn handles(&self) -> Vec<PolicyHandle> {
        self.entries.iter().map(|e| PolicyHandle::Mcts(Arc::clone(e))).collect()
    }

    /// Agents whose configuration differs between the two registries.
    pub fn changed_agents(&self, other: &PolicyRegistry) -> Vec<usize> {
        self.entries
            .iter()
            .zip(&other.entries)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect()
    }

    /// Copy with agent `agent` (0-based) planning against `models`, where
    /// `models[i]` is the clone of agent `i`.
    pub fn with_update(&self, agent: usize, models: &[Arc<PolicyModel>]) -> Self {
        let mut entries = self.entries.clone();
        let old = &self.entries[agent];
        let teammates: BTreeMap<usize, PolicyHandle> =
            old.teammates.keys().map(|&j| (j, PolicyHandle::Cloned(Arc::clone(&models[j])))).collect();
        entries[agent] = Arc::new(MctsAgent {
            teammates,
            rollout: PolicyHandle::Cloned(Arc::clone(&models[agent])),
            params: old.params.clone(),
        });
        PolicyRegistry { generation: self.generation + 1, entries }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRecord {
    pub generation: u32,
    /// 0-based; `None` for the baseline generation.
    pub updated_agent: Option<usize>,
    pub summary: ReturnSummary,
    /// Training-set argmax accuracy of each newly cloned model.
    pub training_accuracy: Vec<f64>,
    pub model_paths: Vec<PathBuf>,
    pub dataset_paths: Vec<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub generations: u32,
    pub episodes: usize,
    pub params: MctsParams,
    pub training: TrainingHyperparams,
    pub seed: u64,
    /// Train on every generation's episodes so far instead of only the latest.
    pub cumulative_history: bool,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub records: Vec<GenerationRecord>,
    pub registries: Vec<PolicyRegistry>,
}

/// Result of one generation step.
pub struct GenerationOutput {
    pub registry: PolicyRegistry,
    pub record: GenerationRecord,
    pub trajectories: Vec<Trajectory>,
}

fn simulate(
    domain: &DomainSpec,
    registry: &PolicyRegistry,
    cfg: &PipelineConfig,
) -> Result<(Vec<Trajectory>, ReturnSummary), Error> {
    if cfg.episodes == 0 {
        return Err(Error::Argument("episodes per generation must be at least 1".into()));
    }
    let trajs = run_episodes(domain, &registry.handles(), cfg.episodes, derive_seed(cfg.seed, registry.generation as u64))?;
    let returns: Vec<f64> = trajs.iter().map(|t| t.total_return).collect();
    Ok((trajs, summarize_returns(&returns)?))
}

/// Clones every agent from `data`, one model per agent.
pub fn train_generation(
    domain: &DomainSpec,
    data: &[Trajectory],
    generation: u32,
    hp: &TrainingHyperparams,
    seed: u64,
) -> Result<Vec<(CloningDataset, PolicyModel, f64)>, Error> {
    let arch = NetworkArch::for_grid(domain.n_agents(), domain.height, domain.width);
    let base = derive_seed(derive_seed(seed, TRAIN_STREAM), generation as u64);
    (0..domain.n_agents())
        .into_par_iter()
        .map(|i| {
            let dataset = build_dataset(data, i, domain, generation)?;
            let model_seed = derive_seed(base, i as u64);
            let agent_hp = TrainingHyperparams { shuffle_seed: derive_seed(model_seed, hp.shuffle_seed), ..hp.clone() };
            let model = train_model(&dataset, arch, &agent_hp, model_seed)?;
            let acc = accuracy(&model, &dataset)?;
            Ok((dataset, model, acc))
        })
        .collect()
}

/// Generation `g >= 1`: clone all agents from the previous generation's
/// episodes, update agent `next_update_agent(g, n)`, then simulate the new
/// registry. The returned record summarizes the new registry's episodes.
pub fn run_generation(
    registry: &PolicyRegistry,
    previous: &[Trajectory],
    domain: &DomainSpec,
    cfg: &PipelineConfig,
) -> Result<GenerationOutput, Error> {
    let g = registry.generation + 1;
    let n = domain.n_agents();
    let trained = train_generation(domain, previous, g, &cfg.training, cfg.seed)?;
    let models: Vec<Arc<PolicyModel>> = trained.iter().map(|(_, m, _)| Arc::new(m.clone())).collect();
    let agent = next_update_agent(g, n) - 1;
    let next = registry.with_update(agent, &models);
    debug_assert_eq!(next.changed_agents(registry).len(), usize::from(n > 0));

    let mut record = GenerationRecord {
        generation: g,
        updated_agent: Some(agent),
        summary: ReturnSummary { n_episodes: 0, mean: 0.0, sample_sd: 0.0, ci95_low: 0.0, ci95_high: 0.0 },
        training_accuracy: trained.iter().map(|t| t.2).collect(),
        model_paths: Vec::new(),
        dataset_paths: Vec::new(),
    };
    if let Some(dir) = &cfg.out_dir {
        let gen_dir = dir.join(format!("gen{g}"));
        for (i, (dataset, model, _)) in trained.iter().enumerate() {
            let dpath = gen_dir.join(format!("dataset_agent{}.csv", i + 1));
            write_atomic(&dpath, |w| dataset.write_csv(w))?;
            let mpath = gen_dir.join(format!("model_agent{}.abcnn", i + 1));
            write_atomic(&mpath, |w| w.write_all(&save_model(model)))?;
            record.dataset_paths.push(dpath);
            record.model_paths.push(mpath);
        }
    }
    let (trajectories, summary) = simulate(domain, &next, cfg)?;
    record.summary = summary;
    Ok(GenerationOutput { registry: next, record, trajectories })
}

/// Baseline generation followed by `cfg.generations` updates. Artifacts of
/// each completed generation are on disk before the next one starts.
pub fn run_pipeline(domain: &DomainSpec, cfg: &PipelineConfig) -> Result<PipelineRun, Error> {
    run_pipeline_with(domain, cfg, |_| {})
}

pub fn run_pipeline_with<F: FnMut(&GenerationRecord)>(
    domain: &DomainSpec,
    cfg: &PipelineConfig,
    mut on_generation: F,
) -> Result<PipelineRun, Error> {
    domain.validate()?;
    cfg.params.validate()?;
    if cfg.params.horizon != domain.horizon {
        return Err(Error::Config(format!(
            "planner horizon {} differs from the domain horizon {}",
            cfg.params.horizon, domain.horizon
        )));
    }
    let mut registry = PolicyRegistry::initial(domain.n_agents(), &cfg.params);
    let (mut latest, summary) = simulate(domain, &registry, cfg)?;
    let mut records = vec![GenerationRecord {
        generation: 0,
        updated_agent: None,
        summary,
        training_accuracy: Vec::new(),
        model_paths: Vec::new(),
        dataset_paths: Vec::new(),
    }];
    let mut registries = vec![registry.clone()];
    let mut history: Vec<Trajectory> = Vec::new();
    finish_generation(cfg, &records, &latest)?;
    on_generation(&records[0]);

    for _ in 0..cfg.generations {
        let data = if cfg.cumulative_history {
            history.extend(latest.iter().cloned());
            history.as_slice()
        } else {
            latest.as_slice()
        };
        let out = run_generation(&registry, data, domain, cfg)?;
        registry = out.registry;
        latest = out.trajectories;
        records.push(out.record);
        registries.push(registry.clone());
        finish_generation(cfg, &records, &latest)?;
        on_generation(records.last().expect("just pushed"));
    }
    Ok(PipelineRun { records, registries })
}

fn finish_generation(cfg: &PipelineConfig, records: &[GenerationRecord], trajs: &[Trajectory]) -> Result<(), Error> {
    let Some(dir) = &cfg.out_dir else { return Ok(()) };
    let rec = records.last().expect("at least one record");
    let gen_dir = dir.join(format!("gen{}", rec.generation));
    write_atomic(&gen_dir.join("episodes.csv"), |w| write_episodes(w, rec.generation, trajs))?;
    write_atomic(&gen_dir.join("episode_totals.csv"), |w| write_episode_totals(w, rec.generation, trajs))?;
    write_atomic(&dir.join("summary.csv"), |w| write_summary(w, records))?;
    write_atomic(&dir.join("plot_data.csv"), |w| write_plot_data(w, records))?;
    Ok(())
}

/// Writes through a temporary sibling and renames it into place; nothing is
/// left behind on failure.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<(), Error>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("partial");
    let result = (|| {
        let mut w = std::io::BufWriter::new(fs::File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
        drop(w);
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// One row per agent-step; agents are numbered from 1.
pub fn write_episodes(w: &mut dyn Write, generation: u32, trajs: &[Trajectory]) -> std::io::Result<()> {
    writeln!(w, "generation,episode,step,agent,action,reward,seed")?;
    for (e, traj) in trajs.iter().enumerate() {
        for (t, step) in traj.steps.iter().enumerate() {
            for (i, a) in step.joint_action.actions().iter().enumerate() {
                writeln!(w, "{generation},{e},{t},{},{},{},{}", i + 1, a.name(), step.reward, traj.seed)?;
            }
        }
    }
    Ok(())
}

pub fn write_episode_totals(w: &mut dyn Write, generation: u32, trajs: &[Trajectory]) -> std::io::Result<()> {
    writeln!(w, "generation,episode,seed,total_return")?;
    for (e, traj) in trajs.iter().enumerate() {
        writeln!(w, "{generation},{e},{},{}", traj.seed, traj.total_return)?;
    }
    Ok(())
}

pub fn write_summary(w: &mut dyn Write, records: &[GenerationRecord]) -> std::io::Result<()> {
    writeln!(w, "generation,updated_agent,n_episodes,mean,sd,ci95_low,ci95_high")?;
    for r in records {
        let agent = r.updated_agent.map(|a| (a + 1).to_string()).unwrap_or_default();
        let s = &r.summary;
        writeln!(w, "{},{agent},{},{},{},{},{}", r.generation, s.n_episodes, s.mean, s.sample_sd, s.ci95_low, s.ci95_high)?;
    }
    Ok(())
}

pub fn write_plot_data(w: &mut dyn Write, records: &[GenerationRecord]) -> std::io::Result<()> {
    writeln!(w, "generation,mean,ci95_low,ci95_high")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.generation, r.summary.mean, r.summary.ci95_low, r.summary.ci95_high)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factory::parse_domain_config;
    use crate::nn::init_weights;

    #[test]
    fn update_schedule() {
        assert_eq!(next_update_agent(1, 2), 2);
        assert_eq!(next_update_agent(4, 4), 1);
        assert_eq!(next_update_agent(3, 2), 2);
        for n in 1..6 {
            for start in 1..10u32 {
                let mut seen: Vec<usize> = (start..start + n as u32).map(|g| next_update_agent(g, n)).collect();
                seen.sort_unstable();
                assert_eq!(seen, (1..=n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn update_touches_one_agent() {
        let params = MctsParams::new(0.5, 10, 4);
        let reg = PolicyRegistry::initial(3, &params);
        let arch = NetworkArch::for_grid(3, 2, 2);
        let models: Vec<Arc<PolicyModel>> = (0..3).map(|i| Arc::new(init_weights(arch, i))).collect();
        let next = reg.with_update(1, &models);
        assert_eq!(next.generation, 1);
        assert_eq!(next.changed_agents(&reg), vec![1]);
        let e = &next.entries[1];
        assert_eq!(e.rollout, PolicyHandle::Cloned(Arc::clone(&models[1])));
        assert_eq!(e.teammates.keys().copied().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(e.teammates[&2], PolicyHandle::Cloned(Arc::clone(&models[2])));
    }

    #[test]
    fn zero_generations_is_the_baseline() {
        let spec = parse_domain_config(
            "[grid]\nwidth=3\nheight=2\nhorizon=3\nmove_success=0.9\nact_success=1\n[robots]\n1,0,0\n2,1,2\n[tasks]\n0,2,1\n[spawns]\nevents=0,0\n",
        )
        .unwrap();
        let cfg = PipelineConfig {
            generations: 0,
            episodes: 4,
            params: MctsParams::new(0.5, 20, 3),
            training: TrainingHyperparams::default(),
            seed: 1,
            cumulative_history: false,
            out_dir: None,
        };
        let run = run_pipeline(&spec, &cfg).unwrap();
        assert_eq!(run.records.len(), 1);
        assert_eq!(run.records[0].updated_agent, None);
        assert_eq!(run.records[0].summary.n_episodes, 4);
        assert_eq!(run.registries[0], PolicyRegistry::initial(2, &cfg.params));
    }

    #[test]
    fn summary_csv_layout() {
        let s = ReturnSummary { n_episodes: 2, mean: 6.0, sample_sd: 1.0, ci95_low: 5.0, ci95_high: 7.0 };
        let rec = |g, a| GenerationRecord {
            generation: g,
            updated_agent: a,
            summary: s,
            training_accuracy: vec![],
            model_paths: vec![],
            dataset_paths: vec![],
        };
        let mut buf = Vec::new();
        write_summary(&mut buf, &[rec(0, None), rec(1, Some(1))]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "generation,updated_agent,n_episodes,mean,sd,ci95_low,ci95_high\n0,,2,6,1,5,7\n1,2,2,6,1,5,7\n"
        );
    }
}
