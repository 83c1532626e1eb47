//! The category predictor and the presence-map plumbing around it.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::background::{Background, BackgroundAccum};
use super::kmeans::{kmeans, nearest};
use super::pca::{CovarianceAccum, Pca};
use crate::env::EnvConfig;
use crate::error::{Error, Result};

/// Per-cell object presence with the deviating patches kept alongside.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PresenceMap {
    pres: Vec<bool>,
    patches: Vec<Option<Vec<u8>>>,
}

impl PresenceMap {
    pub(crate) fn from_parts(pres: Vec<bool>, patches: Vec<Option<Vec<u8>>>) -> Self {
        debug_assert_eq!(pres.len(), patches.len());
        debug_assert!(pres
            .iter()
            .zip(&patches)
            .all(|(&p, patch)| p == patch.is_some()));
        PresenceMap { pres, patches }
    }

    pub fn len(&self) -> usize {
        self.pres.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pres.is_empty()
    }

    pub fn present(&self, cell: usize) -> bool {
        self.pres[cell]
    }

    pub fn patch(&self, cell: usize) -> Option<&[u8]> {
        self.patches[cell].as_deref()
    }

    pub fn count_present(&self) -> usize {
        self.pres.iter().filter(|&&p| p).count()
    }
}

/// Masks each present cell independently with probability `p`, simulating
/// an unreliable detector. Absent cells are untouched; at `p = 1` the map
/// degenerates to all-background.
pub fn confuse(map: &PresenceMap, p: f64, rng: &mut ChaCha8Rng) -> Result<PresenceMap> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::argument(alloc::format!(
            "confusion probability {p} outside [0, 1]"
        )));
    }
    let mut out = map.clone();
    for cell in 0..out.pres.len() {
        if out.pres[cell] && rng.gen_bool(p) {
            out.pres[cell] = false;
            out.patches[cell] = None;
        }
    }
    Ok(out)
}

/// One-hot index over C+1 extended categories: 0 for background, the
/// predicted 1..=C category otherwise.
pub fn extended_category(pres: bool, cat: Option<usize>, c: usize) -> Result<usize> {
    match (pres, cat) {
        (false, None) => Ok(0),
        (true, Some(k)) if (1..=c).contains(&k) => Ok(k),
        (true, Some(k)) => Err(Error::argument(alloc::format!(
            "category {k} outside 1..={c}"
        ))),
        (false, Some(_)) => Err(Error::argument("absent cell cannot carry a category")),
        (true, None) => Err(Error::argument("present cell needs a category")),
    }
}

/// Flat store of detected object patches.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PatchDataset {
    data: Vec<u8>,
    patch_dim: usize,
}

impl PatchDataset {
    pub fn new(patch_dim: usize) -> Self {
        PatchDataset { data: Vec::new(), patch_dim }
    }

    pub fn push(&mut self, patch: &[u8]) -> Result<()> {
        if patch.len() != self.patch_dim {
            return Err(Error::dimension(alloc::format!(
                "patch has {} bytes, dataset stores {}",
                patch.len(),
                self.patch_dim
            )));
        }
        self.data.extend_from_slice(patch);
        Ok(())
    }

    /// Adds every present patch of a map.
    pub fn push_map(&mut self, map: &PresenceMap) -> Result<()> {
        for cell in 0..map.len() {
            if let Some(patch) = map.patch(cell) {
                self.push(patch)?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        if self.patch_dim == 0 {
            0
        } else {
            self.data.len() / self.patch_dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_dim
    }

    pub fn patch(&self, i: usize) -> &[u8] {
        &self.data[i * self.patch_dim..(i + 1) * self.patch_dim]
    }
}

/// The fitted object-category predictor: background subtraction for
/// presence, then a PCA projection and nearest-centroid lookup for the
/// category. Immutable once fitted, so rollout workers can share it.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryPredictor {
    background: Background,
    pca: Pca,
    /// `c x d` row-major centroid matrix in the projected space.
    centroids: Vec<f64>,
    c: usize,
}

/// Fits PCA and clustering on a patch dataset.
///
/// `c` is the number of object categories, `d` the PCA latent dimension;
/// `seed` drives the k-means++ initialization. Refitting with identical
/// data and seed reproduces the predictor exactly.
pub fn fit_predictor(
    patches: &PatchDataset,
    background: Background,
    c: usize,
    d: usize,
    seed: u64,
) -> Result<CategoryPredictor> {
    let dim = patches.patch_dim();
    if dim == 0 || dim != background.patch_dim() {
        return Err(Error::dimension("patch size disagrees with the background model"));
    }
    if c == 0 {
        return Err(Error::argument("need at least one category"));
    }
    if patches.len() < c {
        return Err(Error::argument(alloc::format!(
            "{} patches cannot support {c} clusters",
            patches.len()
        )));
    }
    if d > dim {
        return Err(Error::argument(alloc::format!(
            "latent dimension {d} exceeds patch size {dim}"
        )));
    }
    let mut accum = CovarianceAccum::new(dim);
    let mut buf = alloc::vec![0.0f64; dim];
    for i in 0..patches.len() {
        for (slot, &b) in buf.iter_mut().zip(patches.patch(i)) {
            *slot = b as f64 / 255.0;
        }
        accum.add(&buf);
    }
    let pca = Pca::fit(accum, d)?;

    let n = patches.len();
    let mut projected = alloc::vec![0.0f64; n * d];
    for i in 0..n {
        for (slot, &b) in buf.iter_mut().zip(patches.patch(i)) {
            *slot = b as f64 / 255.0;
        }
        pca.project(&buf, &mut projected[i * d..(i + 1) * d]);
    }
    let (centroids, _assignment) = kmeans(&projected, n, d, c, 50, seed)?;
    Ok(CategoryPredictor { background, pca, centroids, c })
}

impl CategoryPredictor {
    /// Rebuilds a predictor from checkpointed parts.
    pub fn from_parts(
        background: Background,
        mean: Vec<f64>,
        basis: Vec<f64>,
        centroids: Vec<f64>,
        c: usize,
        d: usize,
    ) -> Result<Self> {
        if mean.len() != background.patch_dim() {
            return Err(Error::dimension("mean length disagrees with patch size"));
        }
        let pca = Pca::from_parts(mean, basis, d)?;
        if pca.orthonormality_error() > 1e-6 {
            return Err(Error::argument("projection basis is not orthonormal"));
        }
        if centroids.len() != c * d {
            return Err(Error::dimension("centroid matrix has wrong size"));
        }
        Ok(CategoryPredictor { background, pca, centroids, c })
    }

    pub fn background(&self) -> &Background {
        &self.background
    }

    pub fn pca(&self) -> &Pca {
        &self.pca
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    /// Number of object categories (extended categories add background as
    /// index 0, giving C+1 in total).
    pub fn categories(&self) -> usize {
        self.c
    }

    pub fn latent_dim(&self) -> usize {
        self.pca.latent_dim()
    }

    /// Presence map of one rendered frame.
    pub fn presence(&self, frame: &[u8]) -> Result<PresenceMap> {
        self.background.detect(frame)
    }

    /// Category of one object patch in `1..=C`: nearest centroid in the
    /// projected space, ties to the lowest index.
    pub fn predict_category(&self, patch: &[u8]) -> Result<usize> {
        if patch.len() != self.background.patch_dim() {
            return Err(Error::dimension(alloc::format!(
                "patch has {} bytes, predictor expects {}",
                patch.len(),
                self.background.patch_dim()
            )));
        }
        let x: Vec<f64> = patch.iter().map(|&b| b as f64 / 255.0).collect();
        let mut z = alloc::vec![0.0f64; self.pca.latent_dim()];
        self.pca.project(&x, &mut z);
        Ok(nearest(&z, &self.centroids, self.c, self.pca.latent_dim()) + 1)
    }

    /// Extended category (0 = background) for every cell of a map.
    pub fn extended_categories(&self, map: &PresenceMap) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(map.len());
        for cell in 0..map.len() {
            let cat = match map.patch(cell) {
                Some(patch) => Some(self.predict_category(patch)?),
                None => None,
            };
            out.push(extended_category(map.present(cell), cat, self.c)?);
        }
        Ok(out)
    }
}

/// Knobs for the end-to-end fitting pipeline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UodSettings {
    pub categories: usize,
    pub latent_dim: usize,
    pub dataset_steps: usize,
    pub seed: u64,
}

impl Default for UodSettings {
    fn default() -> Self {
        UodSettings { categories: 4, latent_dim: 16, dataset_steps: 20_000, seed: 0 }
    }
}

/// Collects a random-policy dataset and fits the full predictor.
///
/// Streams the rollout twice with the same seed (the frame sequence is
/// reproducible) so only detected object patches are ever held in memory:
/// the first pass fits the background, the second gathers patches for the
/// clustering fit.
pub fn fit_uod(cfg: &EnvConfig, settings: &UodSettings) -> Result<CategoryPredictor> {
    let mut accum = BackgroundAccum::new(cfg.grid_cells, cfg.cell_pixels);
    super::background::stream_dataset(cfg, settings.dataset_steps, settings.seed, |frame| {
        accum.add_frame(frame)
    })?;
    let background = accum.finish()?;

    let mut patches = PatchDataset::new(background.patch_dim());
    let mut detect_err = None;
    super::background::stream_dataset(cfg, settings.dataset_steps, settings.seed, |frame| {
        if detect_err.is_some() {
            return;
        }
        match background.detect(frame).and_then(|map| patches.push_map(&map)) {
            Ok(()) => {}
            Err(e) => detect_err = Some(e),
        }
    })?;
    if let Some(e) = detect_err {
        return Err(e);
    }
    fit_predictor(&patches, background, settings.categories, settings.latent_dim, settings.seed)
}
