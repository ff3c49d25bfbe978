//! `abc run`: resolve flags against the config file and run the pipeline.

use std::fs;
use std::path::{Path, PathBuf};

use abc_core::cloning::TrainingHyperparams;
use abc_core::factory::{experiment_entries, parse_domain_config, render_domain_config};
use abc_core::mcts::MctsParams;
use abc_core::pipeline::{run_pipeline_with, write_atomic, GenerationRecord, PipelineConfig};
use abc_core::{DomainSpec, Error};

use crate::{exit_code, RunArgs, EXIT_OK, EXIT_RUNTIME};

pub const DEFAULT_GENERATIONS: u32 = 5;
pub const DEFAULT_EPISODES: usize = 320;
pub const DEFAULT_UCT_ITERS: usize = 20_000;
pub const DEFAULT_EXPLORATION: f64 = 1.0;
pub const FAST_UCT_ITERS: usize = 2_000;
pub const FAST_EPISODES: usize = 50;

/// Fully resolved run settings. Precedence: explicit flag, then `--fast`,
/// then the config's `[experiment]` section, then built-in defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub config_path: PathBuf,
    pub domain: DomainSpec,
    pub generations: u32,
    pub episodes: usize,
    pub uct_iters: usize,
    pub exploration: f64,
    pub sparse_limit: usize,
    pub diy_bonus: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub training: TrainingHyperparams,
    pub cumulative_history: bool,
}

#[derive(Default)]
struct FileDefaults {
    generations: Option<u32>,
    episodes: Option<usize>,
    uct_iters: Option<usize>,
    exploration: Option<f64>,
    sparse_limit: Option<usize>,
    diy_bonus: Option<f64>,
    seed: Option<u64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    cumulative_history: Option<bool>,
}

fn parse_value<T: std::str::FromStr>(path: &Path, key: &str, value: &str, line: usize) -> Result<T, Error> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{}:{line}: invalid value '{value}' for {key}", path.display())))
}

fn file_defaults(path: &Path, text: &str) -> Result<FileDefaults, Error> {
    let mut d = FileDefaults::default();
    let entries = experiment_entries(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for (key, value, line) in entries {
        let v = value.as_str();
        match key.as_str() {
            "generations" => d.generations = Some(parse_value(path, &key, v, line)?),
            "episodes" => d.episodes = Some(parse_value(path, &key, v, line)?),
            "uct_iters" => d.uct_iters = Some(parse_value(path, &key, v, line)?),
            "exploration" => d.exploration = Some(parse_value(path, &key, v, line)?),
            "sparse_limit" => d.sparse_limit = Some(parse_value(path, &key, v, line)?),
            "diy_bonus" => d.diy_bonus = Some(parse_value(path, &key, v, line)?),
            "seed" => d.seed = Some(parse_value(path, &key, v, line)?),
            "batch_size" => d.batch_size = Some(parse_value(path, &key, v, line)?),
            "epochs" => d.epochs = Some(parse_value(path, &key, v, line)?),
            "learning_rate" => d.learning_rate = Some(parse_value(path, &key, v, line)?),
            "cumulative_history" => d.cumulative_history = Some(parse_value(path, &key, v, line)?),
            other => {
                return Err(Error::Config(format!("{}:{line}: unknown [experiment] key '{other}'", path.display())))
            }
        }
    }
    Ok(d)
}

/// `results_root` stands in for `$ABC_RESULTS_DIR` when `--out` is absent.
pub fn resolve_run_config(args: &RunArgs, results_root: Option<PathBuf>) -> Result<RunConfig, Error> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", args.config.display())))?;
    let domain = parse_domain_config(&text).map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    domain.validate().map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    let file = file_defaults(&args.config, &text)?;

    let fast_iters = args.fast.then_some(FAST_UCT_ITERS);
    let fast_episodes = args.fast.then_some(FAST_EPISODES);
    let base = TrainingHyperparams::default();
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let out_dir = match &args.out {
        Some(p) => p.clone(),
        None => {
            let stem = args.config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
            results_root.unwrap_or_else(|| PathBuf::from("results")).join(format!("{stem}-seed{seed}"))
        }
    };
    let cfg = RunConfig {
        config_path: args.config.clone(),
        generations: args.generations.or(file.generations).unwrap_or(DEFAULT_GENERATIONS),
        episodes: args.episodes.or(fast_episodes).or(file.episodes).unwrap_or(DEFAULT_EPISODES),
        uct_iters: args.uct_iters.or(fast_iters).or(file.uct_iters).unwrap_or(DEFAULT_UCT_ITERS),
        exploration: args.exploration.or(file.exploration).unwrap_or(DEFAULT_EXPLORATION),
        sparse_limit: args.sparse_limit.or(file.sparse_limit).unwrap_or(20),
        diy_bonus: args.diy_bonus.or(file.diy_bonus).unwrap_or(0.7),
        seed,
        out_dir,
        threads: args.threads,
        training: TrainingHyperparams {
            batch_size: args.batch_size.or(file.batch_size).unwrap_or(base.batch_size),
            epochs: args.epochs.or(file.epochs).unwrap_or(base.epochs),
            learning_rate: args.learning_rate.or(file.learning_rate).unwrap_or(base.learning_rate),
            shuffle_seed: base.shuffle_seed,
        },
        cumulative_history: args.cumulative_history || file.cumulative_history.unwrap_or(false),
        domain,
    };
    if cfg.episodes == 0 {
        return Err(Error::Config("--episodes must be at least 1".into()));
    }
    if cfg.threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    if !(cfg.diy_bonus >= 0.0) || !(cfg.training.learning_rate > 0.0) || cfg.training.batch_size == 0 {
        return Err(Error::Config("diy bonus must be non-negative, learning rate positive, batch size positive".into()));
    }
    cfg.mcts_params().validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn mcts_params(&self) -> MctsParams {
        MctsParams {
            exploration: self.exploration,
            iterations: self.uct_iters,
            sparse_limit: self.sparse_limit,
            diy_bonus: self.diy_bonus,
            horizon: self.domain.horizon,
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            generations: self.generations,
            episodes: self.episodes,
            params: self.mcts_params(),
            training: self.training.clone(),
            seed: self.seed,
            cumulative_history: self.cumulative_history,
            out_dir: Some(self.out_dir.clone()),
        }
    }

    /// Domain plus every resolved setting; running `abc run --config` on this
    /// text with no other flags repeats the run exactly.
    pub fn resolved_ini(&self) -> String {
        let mut s = render_domain_config(&self.domain);
        s.push_str("[experiment]\n");
        s.push_str(&format!("generations={}\n", self.generations));
        s.push_str(&format!("episodes={}\n", self.episodes));
        s.push_str(&format!("uct_iters={}\n", self.uct_iters));
        s.push_str(&format!("exploration={}\n", self.exploration));
        s.push_str(&format!("sparse_limit={}\n", self.sparse_limit));
        s.push_str(&format!("diy_bonus={}\n", self.diy_bonus));
        s.push_str(&format!("seed={}\n", self.seed));
        s.push_str(&format!("batch_size={}\n", self.training.batch_size));
        s.push_str(&format!("epochs={}\n", self.training.epochs));
        s.push_str(&format!("learning_rate={}\n", self.training.learning_rate));
        s.push_str(&format!("cumulative_history={}\n", self.cumulative_history));
        s
    }
}

fn report(r: &GenerationRecord) {
    let who = r.updated_agent.map_or("baseline".to_string(), |a| format!("agent {} updated", a + 1));
    let s = &r.summary;
    eprintln!(
        "generation {} ({who}): mean {:.3}, 95% CI [{:.3}, {:.3}], {} episodes",
        r.generation, s.mean, s.ci95_low, s.ci95_high, s.n_episodes
    );
    if !r.training_accuracy.is_empty() {
        let acc: Vec<String> = r.training_accuracy.iter().map(|a| format!("{a:.3}")).collect();
        eprintln!("  clone training accuracy: {}", acc.join(", "));
    }
}

/// Runs the pipeline for a resolved config, writing every artifact below `out_dir`.
pub fn run_resolved(cfg: &RunConfig) -> Result<Vec<GenerationRecord>, Error> {
    write_atomic(&cfg.out_dir.join("config_resolved.ini"), |w| w.write_all(cfg.resolved_ini().as_bytes()))?;
    let work = || run_pipeline_with(&cfg.domain, &cfg.pipeline_config(), report).map(|r| r.records);
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?
            .install(work),
        None => work(),
    }
}

pub fn execute(args: &RunArgs) -> i32 {
    let env_root = std::env::var_os("ABC_RESULTS_DIR").map(PathBuf::from);
    let cfg = match resolve_run_config(args, env_root) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("abc run: {e}");
            return exit_code(&e);
        }
    };
    eprintln!(
        "abc run: {} agents on {}x{}, {} generations x {} episodes, {} UCT iterations, C={}, seed {} -> {}",
        cfg.domain.n_agents(),
        cfg.domain.width,
        cfg.domain.height,
        cfg.generations,
        cfg.episodes,
        cfg.uct_iters,
        cfg.exploration,
        cfg.seed,
        cfg.out_dir.display()
    );
    match run_resolved(&cfg) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("abc run: {e}");
            if e.is_config() {
                exit_code(&e)
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
