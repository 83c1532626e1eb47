//! Driving a full experiment: train every seed of a spec, persist metrics,
//! evaluations, checkpoints, and the run record.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use ocarl_core::agent::Agent;
use ocarl_core::env::{Action, EnvConfig};
use ocarl_core::ppo::{evaluate, ppo_update, Adam, Collector};
use ocarl_core::uod::CategoryPredictor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::error::{LabError, Result};
use crate::metrics::{append_jsonl, read_jsonl, truncate, CollectRecord, EvalRecord};
use crate::modularity::resolve_category;
use crate::spec::ExperimentSpec;
use crate::uodstore;

/// Collects between snapshots of the resumable checkpoint.
const CHECKPOINT_EVERY: usize = 25;

/// File names inside one seed's run directory.
pub struct RunPaths {
    pub dir: PathBuf,
    pub metrics: PathBuf,
    pub evals: PathBuf,
    pub ckpt_latest: PathBuf,
    pub ckpt_final: PathBuf,
    pub record: PathBuf,
}

impl RunPaths {
    pub fn new(dir: PathBuf) -> Self {
        RunPaths {
            metrics: dir.join("metrics.jsonl"),
            evals: dir.join("evals.jsonl"),
            ckpt_latest: dir.join("ckpt-latest.json"),
            ckpt_final: dir.join("ckpt-final.json"),
            record: dir.join("run.json"),
            dir,
        }
    }
}

/// Everything one finished seed leaves behind.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec: std::collections::BTreeMap<String, String>,
    pub spec_hash: String,
    pub seed: u64,
    pub steps: u64,
    /// The last evaluation pass, one entry per environment.
    pub final_evals: Vec<EvalRecord>,
    pub checkpoints: Vec<String>,
    pub wall_clock_s: f64,
}

fn std_dev(xs: &[f64], mean: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}

/// Tracks episode returns across collect boundaries, one accumulator per
/// pool member, so episodes spanning collects are credited once and whole.
struct EpisodeTracker {
    carry: Vec<f64>,
}

impl EpisodeTracker {
    fn new(envs: usize) -> Self {
        EpisodeTracker { carry: vec![0.0; envs] }
    }

    fn completed(&mut self, buffer: &ocarl_core::ppo::CollectBuffer) -> Vec<f64> {
        let mut finished = Vec::new();
        for (env_idx, stream) in buffer.streams.iter().enumerate() {
            for t in stream {
                self.carry[env_idx] += t.reward;
                if t.done {
                    finished.push(self.carry[env_idx]);
                    self.carry[env_idx] = 0.0;
                }
            }
        }
        finished
    }
}

/// Fits the predictor this spec needs, or loads the cached fit; variants
/// that ignore discovery get none.
pub fn predictor_for(spec: &ExperimentSpec) -> Result<Option<CategoryPredictor>> {
    if !spec.variant()?.uses_discovery() {
        return Ok(None);
    }
    let pred = uodstore::fit_or_load(&spec.out_root(), &spec.uod_env, &spec.uod_settings())?;
    Ok(Some(pred))
}

/// Trains one seed end to end and returns its record. A finished run is
/// returned as-is; a run with a resumable checkpoint continues from it; a
/// stale artifact from a different spec is rejected.
pub fn run_training_seed(spec: &ExperimentSpec, seed: u64) -> Result<RunRecord> {
    spec.validate()?;
    let hash = spec.hash();
    let paths = RunPaths::new(spec.run_dir(seed));
    fs::create_dir_all(&paths.dir).map_err(|e| LabError::io(&paths.dir, e))?;

    if paths.record.exists() {
        let text = fs::read_to_string(&paths.record).map_err(|e| LabError::io(&paths.record, e))?;
        let record: RunRecord =
            serde_json::from_str(&text).map_err(|e| LabError::json(&paths.record, e))?;
        if record.spec_hash != hash {
            return Err(LabError::format(format!(
                "run directory {} holds a finished run of a different spec",
                paths.dir.display()
            )));
        }
        return Ok(record);
    }

    let started = Instant::now();
    let ppo = spec.ppo_config();
    let variant = spec.variant()?;
    let train_cfg = spec.train_env_config()?;
    let n_collects = spec.total_steps.div_ceil(spec.steps_per_collect);
    let steps_per_env = spec.steps_per_collect / spec.envs;

    let mut agent: Agent<f32>;
    let mut adam;
    let mut start_collect;
    if paths.ckpt_latest.exists() {
        let ckpt = load_checkpoint(&paths.ckpt_latest)?;
        if ckpt.spec_hash != hash {
            return Err(LabError::format(format!(
                "checkpoint {} belongs to a different spec; refusing to resume",
                paths.ckpt_latest.display()
            )));
        }
        if ckpt.seed != seed {
            return Err(LabError::format(format!(
                "checkpoint {} was trained with seed {}, not {seed}",
                paths.ckpt_latest.display(),
                ckpt.seed
            )));
        }
        agent = ckpt.to_agent()?;
        adam = ckpt.to_adam(ppo.learning_rate)?.unwrap_or(Adam::new(ppo.learning_rate)?);
        start_collect = (ckpt.step as usize) / spec.steps_per_collect;
        trim_jsonl::<CollectRecord>(&paths.metrics, ckpt.step)?;
        trim_jsonl::<EvalRecord>(&paths.evals, ckpt.step)?;
    } else {
        let predictor = predictor_for(spec)?;
        agent = Agent::new(
            variant,
            spec.uod_categories,
            Action::COUNT,
            seed,
            predictor,
            spec.confusion_p,
        )?;
        adam = Adam::new(ppo.learning_rate)?;
        start_collect = 0;
        truncate(&paths.metrics)?;
        truncate(&paths.evals)?;
    }
    if let Some(name) = &spec.disabled_category {
        let pred = agent
            .predictor()
            .ok_or_else(|| LabError::config("disabled_category needs an object predictor"))?;
        let cat = resolve_category(pred, name)?;
        agent.disable_category(cat)?;
    }

    // A resumed stream must not replay the experience it already consumed,
    // so the continuation reseeds with a value folded from the resume point.
    let stream_seed = if start_collect == 0 {
        seed
    } else {
        seed ^ (start_collect as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    };
    let mut collector = Collector::new(&train_cfg, spec.envs, stream_seed)?;
    let mut update_rng = ChaCha8Rng::seed_from_u64(stream_seed);
    update_rng.set_stream(4);

    let mut eval_envs: Vec<EnvConfig> = vec![train_cfg.clone()];
    for id in &spec.eval_envs {
        eval_envs.push(EnvConfig::from_id(id)?);
    }

    let mut tracker = EpisodeTracker::new(spec.envs);
    let mut last_mean = 0.0;
    let mut step = (start_collect * spec.steps_per_collect) as u64;
    let mut final_evals = Vec::new();

    if start_collect >= n_collects {
        start_collect = n_collects;
    }
    for collect_idx in start_collect..n_collects {
        let buffer = collector.collect(&mut agent, steps_per_env)?;
        step += buffer.len() as u64;
        let stats = ppo_update(&mut agent, &mut adam, &buffer, &ppo, &mut update_rng)?;

        let finished = tracker.completed(&buffer);
        if !finished.is_empty() {
            last_mean = finished.iter().sum::<f64>() / finished.len() as f64;
        }
        let record = CollectRecord {
            step,
            mean_return: last_mean,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            cat_loss: (variant.lambda() > 0.0).then_some(stats.category_loss),
            entropy: stats.entropy,
        };
        append_jsonl(&paths.metrics, &record)?;

        let last = collect_idx + 1 == n_collects;
        if (collect_idx + 1) % spec.eval_every == 0 || last {
            let mut pass = Vec::new();
            for cfg in &eval_envs {
                let stats = evaluate(&mut agent, cfg, spec.eval_episodes, seed, false)?;
                pass.push(EvalRecord {
                    step,
                    env: cfg.id(),
                    mean_return: stats.mean_return,
                    std_return: std_dev(&stats.returns, stats.mean_return),
                    episodes: spec.eval_episodes,
                });
            }
            for rec in &pass {
                append_jsonl(&paths.evals, rec)?;
            }
            final_evals = pass;
        }

        if (collect_idx + 1) % CHECKPOINT_EVERY == 0 && !last {
            let ckpt = Checkpoint::from_agent(&agent, &hash, seed, step, Some(&adam));
            save_checkpoint(&paths.ckpt_latest, &ckpt)?;
        }
    }

    let ckpt = Checkpoint::from_agent(&agent, &hash, seed, step, None);
    save_checkpoint(&paths.ckpt_final, &ckpt)?;

    let record = RunRecord {
        spec: spec.snapshot(),
        spec_hash: hash,
        seed,
        steps: step,
        final_evals,
        checkpoints: vec![paths.ckpt_final.display().to_string()],
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&record).map_err(|e| LabError::json(&paths.record, e))?;
    fs::write(&paths.record, text).map_err(|e| LabError::io(&paths.record, e))?;
    Ok(record)
}

/// Drops records past the resume point so the stream stays consistent with
/// the checkpoint it continues from.
fn trim_jsonl<T: serde::de::DeserializeOwned + Serialize>(path: &Path, step: u64) -> Result<()>
where
    T: HasStep,
{
    if !path.exists() {
        return Ok(());
    }
    let records: Vec<T> = read_jsonl(path)?;
    truncate(path)?;
    for r in records.iter().filter(|r| r.step() <= step) {
        append_jsonl(path, r)?;
    }
    Ok(())
}

trait HasStep {
    fn step(&self) -> u64;
}

impl HasStep for CollectRecord {
    fn step(&self) -> u64 {
        self.step
    }
}

impl HasStep for EvalRecord {
    fn step(&self) -> u64 {
        self.step
    }
}

/// Trains every seed of the spec in order.
pub fn run_training(spec: &ExperimentSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    spec.seeds.iter().map(|&seed| run_training_seed(spec, seed)).collect()
}

/// One row of a confusion sweep: the masking probability and the final
/// training-environment return, averaged over seeds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub mean_final_return: f64,
    pub per_seed: Vec<f64>,
}

/// Trains the base spec once per masking probability and tabulates final
/// returns. Each p gets its own artifact directory.
pub fn run_confusion_sweep(base: &ExperimentSpec, p_values: &[f64]) -> Result<Vec<SweepRow>> {
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(LabError::argument("confusion probabilities must lie in [0, 1]"));
    }
    let base_name = base.experiment_name();
    let mut rows = Vec::new();
    for &p in p_values {
        let mut spec = base.clone();
        spec.confusion_p = p;
        spec.name = Some(format!("{base_name}-p{p:.2}"));
        let records = run_training(&spec)?;
        let per_seed: Vec<f64> = records
            .iter()
            .map(|r| {
                r.final_evals
                    .iter()
                    .find(|e| e.env == spec.train_env)
                    .map(|e| e.mean_return)
                    .ok_or_else(|| LabError::format("run record lacks a train-env evaluation"))
            })
            .collect::<Result<_>>()?;
        let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        rows.push(SweepRow { p, mean_final_return: mean, per_seed });
    }
    let out = base.out_root().join(format!("{base_name}-sweep.json"));
    let text = serde_json::to_string_pretty(&rows).map_err(|e| LabError::json(&out, e))?;
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    fs::write(&out, text).map_err(|e| LabError::io(&out, e))?;
    Ok(rows)
}
