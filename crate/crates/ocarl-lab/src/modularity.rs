//! Knock-out evaluation: disable one object category's expert and measure
//! the damage on environments that contain only one object kind.

use std::path::Path;

use serde::{Deserialize, Serialize};

use ocarl_core::env::{sprites, EnvConfig, Kind};
use ocarl_core::ppo::evaluate;
use ocarl_core::uod::CategoryPredictor;

use crate::checkpoint::load_checkpoint;
use crate::error::{LabError, Result};

/// Environments the knock-out study evaluates on: all zombies, then all cows.
pub const STUDY_ENVS: [&str; 2] = ["Z4C0", "Z0C4"];

/// Column labels: untouched agent, then one knock-out per object kind.
pub const STUDY_MODS: [&str; 3] = ["none", "zombie", "cow"];

/// The kinds a category name may refer to.
const NAMED_KINDS: [(&str, Kind); 3] =
    [("hunter", Kind::Hunter), ("zombie", Kind::Zombie), ("cow", Kind::Cow)];

/// Maps an object name to the extended category index the predictor assigns
/// it. Cluster numbering is arbitrary after fitting, so the name is resolved
/// by classifying the object's canonical sprite patch.
pub fn resolve_category(pred: &CategoryPredictor, name: &str) -> Result<usize> {
    let lowered = name.to_lowercase();
    let kind = NAMED_KINDS
        .iter()
        .find(|(n, _)| *n == lowered)
        .map(|(_, k)| *k)
        .ok_or_else(|| LabError::argument(format!("unknown category name {name:?}")))?;
    let side = pred.background().cell_pixels();
    let patch: Vec<u8> = sprites::sprite(kind, side).into_iter().flatten().collect();
    Ok(pred.predict_category(&patch)? + 1)
}

/// One cell of the study: an evaluation of one modification on one env.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyCell {
    pub env: String,
    pub modification: String,
    pub mean_return: f64,
    pub std_return: f64,
    pub episodes: usize,
}

/// The full table, rows = environments, columns = modifications.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyTable {
    pub cells: Vec<StudyCell>,
}

impl StudyTable {
    pub fn get(&self, env: &str, modification: &str) -> Option<&StudyCell> {
        self.cells.iter().find(|c| c.env == env && c.modification == modification)
    }
}

fn std_dev(xs: &[f64], mean: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}

/// Evaluates one modification column of the study.
///
/// `disable` is `None` for the untouched agent or an object name whose
/// expert is rerouted to the background expert. The agent is rebuilt from
/// the checkpoint for every column, so columns cannot contaminate each
/// other.
pub fn run_modularity_column(
    ckpt_path: &Path,
    disable: Option<&str>,
    episodes: usize,
    seed: u64,
) -> Result<Vec<StudyCell>> {
    let ckpt = load_checkpoint(ckpt_path)?;
    let modification = disable.unwrap_or("none");
    let mut cells = Vec::new();
    for env_id in STUDY_ENVS {
        let mut agent = ckpt.to_agent::<f64>()?;
        if let Some(name) = disable {
            let pred = agent
                .predictor()
                .ok_or_else(|| LabError::argument("checkpointed agent has no object predictor"))?;
            let cat = resolve_category(pred, name)?;
            agent.disable_category(cat)?;
        }
        let cfg = EnvConfig::from_id(env_id)?;
        let stats = evaluate(&mut agent, &cfg, episodes, seed, false)?;
        cells.push(StudyCell {
            env: String::from(env_id),
            modification: String::from(modification),
            mean_return: stats.mean_return,
            std_return: std_dev(&stats.returns, stats.mean_return),
            episodes,
        });
    }
    Ok(cells)
}

/// Runs the whole 2x3 study: {untouched, zombie knocked out, cow knocked
/// out} on each of Z4C0 and Z0C4.
pub fn run_modularity_test(ckpt_path: &Path, episodes: usize, seed: u64) -> Result<StudyTable> {
    let mut cells = Vec::new();
    for modification in STUDY_MODS {
        let disable = (modification != "none").then_some(modification);
        cells.extend(run_modularity_column(ckpt_path, disable, episodes, seed)?);
    }
    Ok(StudyTable { cells })
}
