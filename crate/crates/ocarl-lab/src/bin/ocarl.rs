//! Command-line entry point for the OCARL laboratory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ocarl_core::env::EnvConfig;
use ocarl_core::ppo::evaluate;
use ocarl_core::uod::{fit_uod, UodSettings};

use ocarl_lab::checkpoint::load_checkpoint;
use ocarl_lab::error::{LabError, Result};
use ocarl_lab::experiments::{run_confusion_sweep, run_training};
use ocarl_lab::export::export_experiment;
use ocarl_lab::modularity::{run_modularity_column, run_modularity_test, StudyTable, STUDY_ENVS, STUDY_MODS};
use ocarl_lab::spec::ExperimentSpec;
use ocarl_lab::uodstore;

#[derive(Parser)]
#[command(name = "ocarl", about = "Train and study object-category aware RL agents", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Spec fields as flags; a config file is read first and flags override it.
#[derive(Args)]
struct SpecArgs {
    /// Plain key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory name for artifacts.
    #[arg(long)]
    name: Option<String>,
    /// Agent variant: ocarl, ocarl_no_ocap, ocarl_no_ocmr, rrl, ppo_plain.
    #[arg(long)]
    variant: Option<String>,
    /// Training environment id, e.g. Z1C1.
    #[arg(long)]
    train_env: Option<String>,
    /// Extra evaluation environment ids.
    #[arg(long, value_delimiter = ',')]
    eval_envs: Option<Vec<String>>,
    /// Probability of masking each discovered object.
    #[arg(long)]
    confusion_p: Option<f64>,
    /// Object name whose expert is disabled for the whole run.
    #[arg(long)]
    disabled_category: Option<String>,
    /// Seeds to repeat the run over.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gae_lambda: Option<f64>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    value_coef: Option<f64>,
    #[arg(long)]
    entropy_coef: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_grad_norm: Option<f64>,
    /// Environments collected in lockstep.
    #[arg(long)]
    envs: Option<usize>,
    #[arg(long)]
    steps_per_collect: Option<usize>,
    #[arg(long)]
    repeat_per_collect: Option<usize>,
    #[arg(long)]
    minibatch: Option<usize>,
    #[arg(long)]
    total_steps: Option<usize>,
    /// Collects between evaluation passes.
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    /// Environment the object predictor is fitted on.
    #[arg(long)]
    uod_env: Option<String>,
    #[arg(long)]
    uod_categories: Option<usize>,
    #[arg(long)]
    uod_latent_dim: Option<usize>,
    #[arg(long)]
    uod_dataset_steps: Option<usize>,
    #[arg(long)]
    uod_seed: Option<u64>,
    /// Output root; defaults to $OCARL_OUT, then ./runs.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SpecArgs {
    fn build(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::from_file(path)?,
            None => ExperimentSpec::default(),
        };
        if let Some(v) = &self.name {
            spec.name = Some(v.clone());
        }
        if let Some(v) = &self.variant {
            spec.variant = v.clone();
        }
        if let Some(v) = &self.train_env {
            spec.train_env = v.clone();
        }
        if let Some(v) = &self.eval_envs {
            spec.eval_envs = v.clone();
        }
        if let Some(v) = self.confusion_p {
            spec.confusion_p = v;
        }
        if let Some(v) = &self.disabled_category {
            spec.disabled_category = if v.is_empty() { None } else { Some(v.clone()) };
        }
        if let Some(v) = &self.seeds {
            spec.seeds = v.clone();
        }
        if let Some(v) = self.gamma {
            spec.gamma = v;
        }
        if let Some(v) = self.gae_lambda {
            spec.gae_lambda = v;
        }
        if let Some(v) = self.clip {
            spec.clip = v;
        }
        if let Some(v) = self.value_coef {
            spec.value_coef = v;
        }
        if let Some(v) = self.entropy_coef {
            spec.entropy_coef = v;
        }
        if let Some(v) = self.learning_rate {
            spec.learning_rate = v;
        }
        if let Some(v) = self.max_grad_norm {
            spec.max_grad_norm = v;
        }
        if let Some(v) = self.envs {
            spec.envs = v;
        }
        if let Some(v) = self.steps_per_collect {
            spec.steps_per_collect = v;
        }
        if let Some(v) = self.repeat_per_collect {
            spec.repeat_per_collect = v;
        }
        if let Some(v) = self.minibatch {
            spec.minibatch = v;
        }
        if let Some(v) = self.total_steps {
            spec.total_steps = v;
        }
        if let Some(v) = self.eval_every {
            spec.eval_every = v;
        }
        if let Some(v) = self.eval_episodes {
            spec.eval_episodes = v;
        }
        if let Some(v) = &self.uod_env {
            spec.uod_env = v.clone();
        }
        if let Some(v) = self.uod_categories {
            spec.uod_categories = v;
        }
        if let Some(v) = self.uod_latent_dim {
            spec.uod_latent_dim = v;
        }
        if let Some(v) = self.uod_dataset_steps {
            spec.uod_dataset_steps = v;
        }
        if let Some(v) = self.uod_seed {
            spec.uod_seed = v;
        }
        if let Some(v) = &self.out {
            spec.out = Some(v.clone());
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the object predictor and cache it under the output root.
    FitUod {
        /// Environment to fit on.
        #[arg(long, default_value = "Z4C4")]
        env: String,
        #[arg(long, default_value_t = 4)]
        categories: usize,
        #[arg(long, default_value_t = 16)]
        latent_dim: usize,
        #[arg(long, default_value_t = 20_000)]
        dataset_steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output root; defaults to $OCARL_OUT, then ./runs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train an experiment spec over all its seeds.
    Train {
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Evaluate a checkpoint on one environment.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 30)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Take argmax actions instead of sampling.
        #[arg(long)]
        greedy: bool,
    },
    /// Train the spec once per confusion probability and tabulate returns.
    SweepConfusion {
        #[command(flatten)]
        spec: SpecArgs,
        /// Masking probabilities to sweep over.
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        p_values: Vec<f64>,
    },
    /// Knock-out study of a trained checkpoint on Z4C0 and Z0C4.
    Modularity {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluate a single knocked-out category instead of the full table.
        #[arg(long)]
        disable: Option<String>,
        #[arg(long, default_value_t = 30)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export plot-ready CSV curves from an experiment directory.
    Export {
        /// Experiment directory holding seed-* runs.
        #[arg(long)]
        experiment: PathBuf,
        /// Where to write the CSVs; defaults to <experiment>/plots.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_study_table(table: &StudyTable) {
    println!("{:<8} {:>14} {:>14} {:>14}", "env", "none", "no zombie", "no cow");
    for env in STUDY_ENVS {
        let mut row = format!("{env:<8}");
        for m in STUDY_MODS {
            match table.get(env, m) {
                Some(cell) => {
                    row.push_str(&format!(" {:>8.2} ±{:<4.2}", cell.mean_return, cell.std_return))
                }
                None => row.push_str(&format!(" {:>14}", "-")),
            }
        }
        println!("{row}");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::FitUod { env, categories, latent_dim, dataset_steps, seed, out } => {
            let settings = UodSettings { categories, latent_dim, dataset_steps, seed };
            let cfg = EnvConfig::from_id(&env)?;
            let root = out
                .or_else(|| std::env::var_os(ocarl_lab::spec::OUT_ENV_VAR).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("runs"));
            let path = uodstore::cache_path(&root, &env, &settings);
            let pred = fit_uod(&cfg, &settings)?;
            uodstore::save_predictor(&path, &pred)?;
            println!(
                "fitted {} categories on {} ({} steps); saved to {}",
                pred.categories(),
                env,
                dataset_steps,
                path.display()
            );
        }
        Command::Train { spec } => {
            let spec = spec.build()?;
            println!("training {} ({})", spec.experiment_name(), spec.hash());
            let records = run_training(&spec)?;
            for record in records {
                println!(
                    "seed {} finished after {} steps in {:.0}s",
                    record.seed, record.steps, record.wall_clock_s
                );
                for eval in &record.final_evals {
                    println!(
                        "  final on {}: {:.3} ± {:.3} over {} episodes",
                        eval.env, eval.mean_return, eval.std_return, eval.episodes
                    );
                }
            }
        }
        Command::Eval { checkpoint, env, episodes, seed, greedy } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let mut agent = ckpt.to_agent::<f32>()?;
            let cfg = EnvConfig::from_id(&env)?;
            let stats = evaluate(&mut agent, &cfg, episodes, seed, greedy)?;
            let std = {
                let m = stats.mean_return;
                let n = stats.returns.len();
                if n < 2 {
                    0.0
                } else {
                    (stats.returns.iter().map(|r| (r - m) * (r - m)).sum::<f64>()
                        / (n - 1) as f64)
                        .sqrt()
                }
            };
            println!(
                "{}: {:.3} ± {:.3} over {} episodes (mean length {:.1})",
                env, stats.mean_return, std, episodes, stats.mean_length
            );
        }
        Command::SweepConfusion { spec, p_values } => {
            let spec = spec.build()?;
            let rows = run_confusion_sweep(&spec, &p_values)?;
            println!("{:>6} {:>14}  per-seed", "p", "final return");
            for row in rows {
                let per_seed: Vec<String> =
                    row.per_seed.iter().map(|r| format!("{r:.2}")).collect();
                println!(
                    "{:>6.2} {:>14.3}  [{}]",
                    row.p,
                    row.mean_final_return,
                    per_seed.join(", ")
                );
            }
        }
        Command::Modularity { checkpoint, disable, episodes, seed } => match disable {
            Some(name) => {
                let cells = run_modularity_column(&checkpoint, Some(&name), episodes, seed)?;
                for cell in cells {
                    println!(
                        "{} with {} disabled: {:.3} ± {:.3} over {} episodes",
                        cell.env, name, cell.mean_return, cell.std_return, cell.episodes
                    );
                }
            }
            None => {
                let table = run_modularity_test(&checkpoint, episodes, seed)?;
                print_study_table(&table);
            }
        },
        Command::Export { experiment, out } => {
            let out = out.unwrap_or_else(|| experiment.join("plots"));
            let written = export_experiment(&experiment, &out)?;
            for path in written {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                LabError::Argument(_) | LabError::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
