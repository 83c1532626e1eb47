//! Experiment specification: one struct describing a full run, readable
//! from a plain `key = value` file and overridable field by field.

use std::collections::BTreeMap;
use std::env;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ocarl_core::agent::Variant;
use ocarl_core::env::EnvConfig;
use ocarl_core::ppo::PpoConfig;
use ocarl_core::uod::UodSettings;

use crate::error::{LabError, Result};

/// Environment variable naming the default output root.
pub const OUT_ENV_VAR: &str = "OCARL_OUT";

/// Everything that defines an experiment: the agent variant, the training
/// and evaluation environments, discovery settings, optimization settings,
/// and the seeds to repeat the run over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Directory name for artifacts; derived from variant and train env
    /// when not given.
    pub name: Option<String>,
    pub variant: String,
    pub train_env: String,
    /// Extra environments evaluated alongside the training one.
    pub eval_envs: Vec<String>,
    /// Probability of masking each discovered object during collection.
    pub confusion_p: f64,
    /// Expert to knock out for the whole run, by object name.
    pub disabled_category: Option<String>,
    pub seeds: Vec<u64>,

    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub envs: usize,
    pub steps_per_collect: usize,
    pub repeat_per_collect: usize,
    pub minibatch: usize,
    pub total_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,

    /// Environment the object predictor is fitted on. Kept apart from the
    /// training env so every variant and env shares one predictor; the
    /// default shows all object kinds.
    pub uod_env: String,
    pub uod_categories: usize,
    pub uod_latent_dim: usize,
    pub uod_dataset_steps: usize,
    pub uod_seed: u64,

    /// Output root; falls back to `$OCARL_OUT`, then `./runs`.
    pub out: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let ppo = PpoConfig::default();
        let uod = UodSettings::default();
        ExperimentSpec {
            name: None,
            variant: String::from("ocarl"),
            train_env: String::from("Z1C1"),
            eval_envs: Vec::new(),
            confusion_p: 0.0,
            disabled_category: None,
            seeds: vec![0],
            gamma: ppo.gamma,
            gae_lambda: ppo.gae_lambda,
            clip: ppo.clip,
            value_coef: ppo.value_coef,
            entropy_coef: ppo.entropy_coef,
            learning_rate: ppo.learning_rate,
            max_grad_norm: ppo.max_grad_norm,
            envs: ppo.envs,
            steps_per_collect: ppo.steps_per_collect,
            repeat_per_collect: ppo.repeat_per_collect,
            minibatch: ppo.minibatch,
            total_steps: ppo.total_steps,
            eval_every: ppo.eval_every,
            eval_episodes: ppo.eval_episodes,
            uod_env: String::from("Z4C4"),
            uod_categories: uod.categories,
            uod_latent_dim: uod.latent_dim,
            uod_dataset_steps: uod.dataset_steps,
            uod_seed: uod.seed,
            out: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| LabError::config(format!("cannot parse {key} from {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| LabError::config(format!("cannot parse {key} entry {s:?}"))))
        .collect()
}

impl ExperimentSpec {
    /// Reads a spec from a `key = value` file. Blank lines and lines
    /// starting with `#` are skipped; later keys override earlier ones.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut spec = ExperimentSpec::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(LabError::config(format!(
                    "{}:{}: expected key = value, got {line:?}",
                    path.display(),
                    lineno + 1
                )));
            };
            spec.set(key.trim(), value.trim())?;
        }
        Ok(spec)
    }

    /// Applies one `key = value` assignment; the keys are the field names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "name" => self.name = Some(String::from(value)),
            "variant" => self.variant = String::from(value),
            "train_env" => self.train_env = String::from(value),
            "eval_envs" => self.eval_envs = parse_list(key, value)?,
            "confusion_p" => self.confusion_p = parse(key, value)?,
            "disabled_category" => {
                self.disabled_category =
                    if value.is_empty() { None } else { Some(String::from(value)) }
            }
            "seeds" => self.seeds = parse_list(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "gae_lambda" => self.gae_lambda = parse(key, value)?,
            "clip" => self.clip = parse(key, value)?,
            "value_coef" => self.value_coef = parse(key, value)?,
            "entropy_coef" => self.entropy_coef = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "max_grad_norm" => self.max_grad_norm = parse(key, value)?,
            "envs" => self.envs = parse(key, value)?,
            "steps_per_collect" => self.steps_per_collect = parse(key, value)?,
            "repeat_per_collect" => self.repeat_per_collect = parse(key, value)?,
            "minibatch" => self.minibatch = parse(key, value)?,
            "total_steps" => self.total_steps = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "uod_env" => self.uod_env = String::from(value),
            "uod_categories" => self.uod_categories = parse(key, value)?,
            "uod_latent_dim" => self.uod_latent_dim = parse(key, value)?,
            "uod_dataset_steps" => self.uod_dataset_steps = parse(key, value)?,
            "uod_seed" => self.uod_seed = parse(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(LabError::config(format!("unknown spec key {key:?}"))),
        }
        Ok(())
    }

    /// The run-defining fields in a fixed order, used for hashing and for
    /// snapshotting the spec next to its artifacts. Output location and
    /// display name are excluded: moving artifacts must not change their
    /// identity.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let kv = self.canonical_fields();
        for (k, v) in kv {
            writeln!(s, "{k} = {v}").expect("writing to a string cannot fail");
        }
        s
    }

    fn canonical_fields(&self) -> Vec<(&'static str, String)> {
        let join = |xs: &[String]| xs.join(",");
        let join_u = |xs: &[u64]| {
            xs.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
        };
        vec![
            ("variant", self.variant.clone()),
            ("train_env", self.train_env.clone()),
            ("eval_envs", join(&self.eval_envs)),
            ("confusion_p", self.confusion_p.to_string()),
            ("disabled_category", self.disabled_category.clone().unwrap_or_default()),
            ("seeds", join_u(&self.seeds)),
            ("gamma", self.gamma.to_string()),
            ("gae_lambda", self.gae_lambda.to_string()),
            ("clip", self.clip.to_string()),
            ("value_coef", self.value_coef.to_string()),
            ("entropy_coef", self.entropy_coef.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("max_grad_norm", self.max_grad_norm.to_string()),
            ("envs", self.envs.to_string()),
            ("steps_per_collect", self.steps_per_collect.to_string()),
            ("repeat_per_collect", self.repeat_per_collect.to_string()),
            ("minibatch", self.minibatch.to_string()),
            ("total_steps", self.total_steps.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("uod_env", self.uod_env.clone()),
            ("uod_categories", self.uod_categories.to_string()),
            ("uod_latent_dim", self.uod_latent_dim.to_string()),
            ("uod_dataset_steps", self.uod_dataset_steps.to_string()),
            ("uod_seed", self.uod_seed.to_string()),
        ]
    }

    /// Hex digest identifying the run-defining fields; stamped on every
    /// artifact so resumes against a different spec are rejected.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            write!(hex, "{byte:02x}").expect("writing to a string cannot fail");
        }
        hex
    }

    /// The spec as a key/value map, for embedding in run records.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.canonical_fields().into_iter().map(|(k, v)| (String::from(k), v)).collect()
    }

    pub fn variant(&self) -> Result<Variant> {
        Ok(Variant::from_name(&self.variant)?)
    }

    pub fn train_env_config(&self) -> Result<EnvConfig> {
        Ok(EnvConfig::from_id(&self.train_env)?)
    }

    pub fn ppo_config(&self) -> PpoConfig {
        PpoConfig {
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            clip: self.clip,
            value_coef: self.value_coef,
            entropy_coef: self.entropy_coef,
            learning_rate: self.learning_rate,
            max_grad_norm: self.max_grad_norm,
            envs: self.envs,
            steps_per_collect: self.steps_per_collect,
            repeat_per_collect: self.repeat_per_collect,
            minibatch: self.minibatch,
            total_steps: self.total_steps,
            eval_every: self.eval_every,
            eval_episodes: self.eval_episodes,
        }
    }

    pub fn uod_settings(&self) -> UodSettings {
        UodSettings {
            categories: self.uod_categories,
            latent_dim: self.uod_latent_dim,
            dataset_steps: self.uod_dataset_steps,
            seed: self.uod_seed,
        }
    }

    /// Validates every field that must be checkable before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.variant()?;
        self.train_env_config()?;
        for id in &self.eval_envs {
            EnvConfig::from_id(id)?;
        }
        EnvConfig::from_id(&self.uod_env)?;
        if !(0.0..=1.0).contains(&self.confusion_p) {
            return Err(LabError::config("confusion_p must lie in [0, 1]"));
        }
        if self.seeds.is_empty() {
            return Err(LabError::config("at least one seed is required"));
        }
        self.ppo_config().validate()?;
        Ok(())
    }

    /// Directory name for this experiment's artifacts.
    pub fn experiment_name(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => format!("{}-{}", self.variant, self.train_env.to_lowercase()),
        }
    }

    /// Output root: explicit `out`, else `$OCARL_OUT`, else `./runs`.
    pub fn out_root(&self) -> PathBuf {
        if let Some(out) = &self.out {
            return out.clone();
        }
        match env::var_os(OUT_ENV_VAR) {
            Some(root) => PathBuf::from(root),
            None => PathBuf::from("runs"),
        }
    }

    /// Directory holding one seed's artifacts.
    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.out_root().join(self.experiment_name()).join(format!("seed-{seed}"))
    }
}
