use std::fs;
use std::path::Path;

use abc_core::cloning::TrainingHyperparams;
use abc_core::factory::parse_domain_config;
use abc_core::mcts::MctsParams;
use abc_core::nn::load_model;
use abc_core::pipeline::{next_update_agent, run_pipeline, PipelineConfig, PipelineRun};
use abc_core::{DomainSpec, PolicyHandle};

const SMALL: &str = "\
[grid]
width=4
height=3
horizon=5
move_success=0.9
act_success=1.0
[robots]
1,1,1
2,1,2
3,0,0
[tasks]
0,0,2
2,3,2
1,3,1
[spawns]
events=0,0
";

fn domain() -> DomainSpec {
    parse_domain_config(SMALL).unwrap()
}

fn config(out: Option<&Path>, generations: u32) -> PipelineConfig {
    PipelineConfig {
        generations,
        episodes: 6,
        params: MctsParams::new(1.0, 60, 5),
        training: TrainingHyperparams { epochs: 3, batch_size: 8, ..TrainingHyperparams::default() },
        seed: 2024,
        cumulative_history: false,
        out_dir: out.map(Path::to_path_buf),
    }
}

fn assert_single_updates(run: &PipelineRun, n: usize) {
    for (g, pair) in run.registries.windows(2).enumerate() {
        let g = g as u32 + 1;
        let expected = next_update_agent(g, n) - 1;
        assert_eq!(pair[1].changed_agents(&pair[0]), vec![expected], "generation {g}");
        assert_eq!(run.records[g as usize].updated_agent, Some(expected));
        let entry = &pair[1].entries[expected];
        assert!(entry.teammates.values().all(|h| matches!(h, PolicyHandle::Cloned(_))));
        assert!(matches!(entry.rollout, PolicyHandle::Cloned(_)));
    }
}

#[test]
fn end_to_end_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_pipeline(&domain(), &config(Some(dir.path()), 4)).unwrap();
    assert_eq!(run.records.len(), 5);
    assert_eq!(run.registries.len(), 5);
    assert_single_updates(&run, 3);
    assert_eq!(run.records[0].updated_agent, None);
    // Round robin over three agents starting from agent 2.
    let order: Vec<usize> = run.records[1..].iter().map(|r| r.updated_agent.unwrap() + 1).collect();
    assert_eq!(order, vec![2, 3, 1, 2]);

    for r in &run.records {
        assert_eq!(r.summary.n_episodes, 6);
        assert!(r.summary.mean >= 0.0 && r.summary.mean <= 5.0);
        let gen = dir.path().join(format!("gen{}", r.generation));
        assert!(gen.join("episodes.csv").is_file());
        assert!(gen.join("episode_totals.csv").is_file());
        if r.generation > 0 {
            assert_eq!(r.model_paths.len(), 3);
            assert_eq!(r.training_accuracy.len(), 3);
            for (i, p) in r.model_paths.iter().enumerate() {
                let m = load_model(&fs::read(p).unwrap()).unwrap();
                assert_eq!(m.meta.agent as usize, i);
                assert_eq!(m.meta.generation, r.generation);
            }
            let data = fs::read_to_string(&r.dataset_paths[0]).unwrap();
            // Header plus one line per (episode, step).
            assert_eq!(data.lines().count(), 1 + 6 * 5);
        }
    }
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "generation,updated_agent,n_episodes,mean,sd,ci95_low,ci95_high");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("0,,6,"));
    assert!(lines[2].starts_with("1,2,6,"));
    let episodes = fs::read_to_string(dir.path().join("gen0/episodes.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 1 + 6 * 5 * 3);
    assert!(fs::read_dir(dir.path()).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".partial")));
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_pipeline(&domain(), &config(Some(a.path()), 2)).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let rb = pool.install(|| run_pipeline(&domain(), &config(Some(b.path()), 2)).unwrap());
    assert_single_updates(&ra, 3);
    assert_single_updates(&rb, 3);
    for rel in ["summary.csv", "plot_data.csv", "gen1/model_agent1.abcnn", "gen2/model_agent3.abcnn", "gen2/episodes.csv"] {
        assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn different_seeds_differ() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(&domain(), &config(Some(a.path()), 0)).unwrap();
    let mut cfg = config(Some(b.path()), 0);
    cfg.seed += 1;
    run_pipeline(&domain(), &cfg).unwrap();
    let read = |d: &Path| fs::read(d.join("gen0/episodes.csv")).unwrap();
    assert_ne!(read(a.path()), read(b.path()));
}

#[test]
fn cumulative_history_trains_on_all_generations() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(Some(dir.path()), 2);
    cfg.cumulative_history = true;
    let run = run_pipeline(&domain(), &cfg).unwrap();
    assert_single_updates(&run, 3);
    let rows = |g: u32| fs::read_to_string(dir.path().join(format!("gen{g}/dataset_agent1.csv"))).unwrap().lines().count();
    assert_eq!(rows(1), 1 + 6 * 5);
    assert_eq!(rows(2), 1 + 12 * 5);
}

#[test]
fn mismatched_planner_horizon_is_rejected() {
    let mut cfg = config(None, 1);
    cfg.params.horizon = 7;
    assert!(run_pipeline(&domain(), &cfg).unwrap_err().is_config());
}
