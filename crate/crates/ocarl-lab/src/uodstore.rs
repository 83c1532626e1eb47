//! On-disk form of the fitted object predictor.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ocarl_core::env::EnvConfig;
use ocarl_core::uod::{fit_uod, Background, CategoryPredictor, UodSettings};

use crate::error::{LabError, Result};

pub const UOD_FORMAT: &str = "ocarl-uod-v1";

/// Serialized predictor: the per-cell background patches plus the
/// projection and the cluster centroids.
#[derive(Clone, Serialize, Deserialize)]
pub struct UodBlob {
    pub format: String,
    pub categories: usize,
    pub latent_dim: usize,
    pub grid_cells: usize,
    pub cell_pixels: usize,
    pub background: Vec<Vec<u8>>,
    pub mean: Vec<f64>,
    pub basis: Vec<f64>,
    pub centroids: Vec<f64>,
}

impl UodBlob {
    pub fn from_predictor(pred: &CategoryPredictor) -> Self {
        let bg = pred.background();
        let cells = bg.grid_cells() * bg.grid_cells();
        UodBlob {
            format: String::from(UOD_FORMAT),
            categories: pred.categories(),
            latent_dim: pred.latent_dim(),
            grid_cells: bg.grid_cells(),
            cell_pixels: bg.cell_pixels(),
            background: (0..cells).map(|c| bg.cell_patch(c).to_vec()).collect(),
            mean: pred.pca().mean().to_vec(),
            basis: pred.pca().basis().to_vec(),
            centroids: pred.centroids().to_vec(),
        }
    }

    pub fn into_predictor(self) -> Result<CategoryPredictor> {
        if self.format != UOD_FORMAT {
            return Err(LabError::format(format!(
                "expected a {UOD_FORMAT} artifact, found {:?}",
                self.format
            )));
        }
        let background =
            Background::from_patches(self.grid_cells, self.cell_pixels, self.background)?;
        Ok(CategoryPredictor::from_parts(
            background,
            self.mean,
            self.basis,
            self.centroids,
            self.categories,
            self.latent_dim,
        )?)
    }
}

pub fn save_predictor(path: &Path, pred: &CategoryPredictor) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    let blob = UodBlob::from_predictor(pred);
    let text = serde_json::to_string(&blob).map_err(|e| LabError::json(path, e))?;
    fs::write(path, text).map_err(|e| LabError::io(path, e))?;
    Ok(())
}

pub fn load_predictor(path: &Path) -> Result<CategoryPredictor> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let blob: UodBlob = serde_json::from_str(&text).map_err(|e| LabError::json(path, e))?;
    blob.into_predictor()
}

/// Canonical cache location of a fit, keyed by everything that determines
/// its result.
pub fn cache_path(root: &Path, env_id: &str, settings: &UodSettings) -> PathBuf {
    root.join("uod").join(format!(
        "uod-{}-c{}-d{}-n{}-s{}.json",
        env_id.to_lowercase(),
        settings.categories,
        settings.latent_dim,
        settings.dataset_steps,
        settings.seed
    ))
}

/// Loads the cached fit if present, otherwise fits and caches it.
pub fn fit_or_load(root: &Path, env_id: &str, settings: &UodSettings) -> Result<CategoryPredictor> {
    let path = cache_path(root, env_id, settings);
    if path.exists() {
        return load_predictor(&path);
    }
    let cfg = EnvConfig::from_id(env_id)?;
    let pred = fit_uod(&cfg, settings)?;
    save_predictor(&path, &pred)?;
    Ok(pred)
}
