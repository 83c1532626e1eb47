//! The `ocarl-ckpt-v1` artifact: agent parameters, enough wiring to rebuild
//! the agent, and optionally the optimizer moments for resuming.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ocarl_core::agent::{Agent, Variant};
use ocarl_core::autodiff::Tensor;
use ocarl_core::ppo::{Adam, AdamState};
use ocarl_core::Scalar;

use crate::error::{LabError, Result};
use crate::uodstore::UodBlob;

pub const CKPT_FORMAT: &str = "ocarl-ckpt-v1";

/// One named parameter tensor. Values are stored as f64, which holds any
/// training precision losslessly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamBlob {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Optimizer moments, written only to resumable checkpoints.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamBlob {
    pub steps: u64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    /// Hash of the spec that produced this artifact.
    pub spec_hash: String,
    pub variant: String,
    pub categories: usize,
    pub actions: usize,
    pub confusion_p: f64,
    pub seed: u64,
    /// Environment steps consumed when the snapshot was taken.
    pub step: u64,
    pub params: BTreeMap<String, ParamBlob>,
    /// The fitted predictor, embedded so the checkpoint evaluates stand-alone.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uod: Option<UodBlob>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adam: Option<AdamBlob>,
}

impl Checkpoint {
    pub fn from_agent<T: Scalar>(
        agent: &Agent<T>,
        spec_hash: &str,
        seed: u64,
        step: u64,
        adam: Option<&Adam>,
    ) -> Self {
        let params = agent
            .params()
            .iter()
            .map(|(name, tensor)| {
                let blob = ParamBlob {
                    shape: tensor.shape().to_vec(),
                    data: tensor.data().iter().map(|v| v.as_f64()).collect(),
                };
                (String::from(name), blob)
            })
            .collect();
        Checkpoint {
            format: String::from(CKPT_FORMAT),
            spec_hash: String::from(spec_hash),
            variant: String::from(agent.variant().name()),
            categories: agent.categories(),
            actions: agent.actions(),
            confusion_p: agent.confusion(),
            seed,
            step,
            params,
            uod: agent.predictor().map(UodBlob::from_predictor),
            adam: adam.map(|a| {
                let state = a.state();
                AdamBlob { steps: state.steps, m: state.m, v: state.v }
            }),
        }
    }

    /// Rebuilds the agent this checkpoint describes. The parameter set must
    /// match the freshly constructed agent's exactly.
    pub fn to_agent<T: Scalar>(&self) -> Result<Agent<T>> {
        if self.format != CKPT_FORMAT {
            return Err(LabError::format(format!(
                "expected a {CKPT_FORMAT} artifact, found {:?}",
                self.format
            )));
        }
        let variant = Variant::from_name(&self.variant)?;
        let predictor = match &self.uod {
            Some(blob) => Some(blob.clone().into_predictor()?),
            None => None,
        };
        let mut agent = Agent::<T>::new(
            variant,
            self.categories,
            self.actions,
            self.seed,
            predictor,
            self.confusion_p,
        )?;
        let expected: Vec<String> = agent.params().names().map(String::from).collect();
        if expected.len() != self.params.len() {
            return Err(LabError::format(format!(
                "checkpoint stores {} parameters, agent has {}",
                self.params.len(),
                expected.len()
            )));
        }
        for name in expected {
            let blob = self
                .params
                .get(&name)
                .ok_or_else(|| LabError::format(format!("checkpoint lacks parameter {name}")))?;
            let data: Vec<T> = blob.data.iter().map(|&v| T::of(v)).collect();
            let tensor = Tensor::from_vec(&blob.shape, data)?;
            agent.params_mut().set(&name, tensor)?;
        }
        Ok(agent)
    }

    /// Rebuilds the optimizer with the stored moments.
    pub fn to_adam(&self, learning_rate: f64) -> Result<Option<Adam>> {
        let Some(blob) = &self.adam else { return Ok(None) };
        let mut adam = Adam::new(learning_rate)?;
        adam.set_state(AdamState { steps: blob.steps, m: blob.m.clone(), v: blob.v.clone() });
        Ok(Some(adam))
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    let text = serde_json::to_string(ckpt).map_err(|e| LabError::json(path, e))?;
    // Write-then-rename so an interrupted save never leaves a torn artifact.
    let tmp = tmp_path(path);
    fs::write(&tmp, text).map_err(|e| LabError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| LabError::io(path, e))?;
    Ok(())
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".tmp");
    PathBuf::from(os)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| LabError::json(path, e))?;
    if ckpt.format != CKPT_FORMAT {
        return Err(LabError::format(format!(
            "expected a {CKPT_FORMAT} artifact, found {:?}",
            ckpt.format
        )));
    }
    Ok(ckpt)
}
