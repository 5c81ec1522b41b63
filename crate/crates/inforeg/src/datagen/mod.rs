//! Synthetic multimodal classification datasets with controllable
//! per-modality informativeness, plus CSV ingestion.
//!
//! Class geometry is deliberately simple: for a modality with separation `s`,
//! the mean of class `k` is `s·e_k` when `k < informative_dims` and the zero
//! vector otherwise, and samples are that mean plus isotropic Gaussian noise.
//! A modality is made information-rich by giving it a large
//! separation-to-noise ratio and enough informative axes to distinguish every
//! class; starving any of those produces a weak modality. The nearest-class-
//! mean rule is exact for this geometry, which makes generated sets easy to
//! sanity-check.

mod csv;

pub use csv::{load_csv, parse_modality_csv, save_csv, ParsedCsv};

use crate::error::{Error, Result};
use crate::numerics::{RngState, Tensor};

/// Controls how informative one modality's features are.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalitySpec {
    pub dim: usize,
    /// Number of leading axes that carry class signal.
    pub informative_dims: usize,
    /// Distance of each informative class mean from the origin.
    pub class_separation: f64,
    pub noise_sigma: f64,
}

impl ModalitySpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("modality dim must be positive".into()));
        }
        if self.informative_dims > self.dim {
            return Err(Error::Config(format!(
                "informative_dims {} exceeds dim {}",
                self.informative_dims, self.dim
            )));
        }
        if !self.class_separation.is_finite() || self.class_separation < 0.0 {
            return Err(Error::Config("class_separation must be finite and >= 0".into()));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::Config("noise_sigma must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Configured mean vector of class `k`: `separation·e_k` on the k-th
    /// informative axis, zero everywhere else (and entirely zero for classes
    /// beyond `informative_dims`).
    pub fn class_mean(&self, k: usize) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        if k < self.informative_dims {
            mean[k] = self.class_separation;
        }
        mean
    }
}

/// Which split a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Per-modality feature matrices plus aligned integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalDataset {
    modalities: Vec<Tensor>,
    labels: Vec<usize>,
    classes: usize,
    split: Split,
}

impl MultimodalDataset {
    pub fn new(modalities: Vec<Tensor>, labels: Vec<usize>, classes: usize, split: Split) -> Result<Self> {
        if modalities.is_empty() {
            return Err(Error::Input("dataset needs at least one modality".into()));
        }
        if classes < 2 {
            return Err(Error::Input("dataset needs at least two classes".into()));
        }
        let n = labels.len();
        if n == 0 {
            return Err(Error::Input("dataset is empty".into()));
        }
        for (m, feats) in modalities.iter().enumerate() {
            feats.require_2d("modality features")?;
            if feats.rows() != n {
                return Err(Error::Input(format!(
                    "modality {m} has {} rows, labels have {n}",
                    feats.rows()
                )));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Input(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(MultimodalDataset { modalities, labels, classes, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_modalities(&self) -> usize {
        self.modalities.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn modality(&self, m: usize) -> &Tensor {
        &self.modalities[m]
    }

    pub fn dims(&self) -> Vec<usize> {
        self.modalities.iter().map(|t| t.cols()).collect()
    }

    /// Copy out the rows at `indices` as one batch (per-modality features
    /// plus labels).
    pub fn gather(&self, indices: &[usize]) -> (Vec<Tensor>, Vec<usize>) {
        let feats = self
            .modalities
            .iter()
            .map(|t| {
                let cols = t.cols();
                let mut data = Vec::with_capacity(indices.len() * cols);
                for &i in indices {
                    data.extend_from_slice(t.row(i));
                }
                Tensor::matrix(indices.len(), cols, data).expect("gather preserves invariants")
            })
            .collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (feats, labels)
    }
}

/// Draw a balanced synthetic dataset. Labels cycle `0..classes`; features for
/// each sample are the class mean plus `noise_sigma`-scaled Gaussian noise,
/// drawn modality-major so the stream layout is fixed.
pub fn generate(
    specs: &[ModalitySpec],
    classes: usize,
    n: usize,
    split: Split,
    rng: &mut RngState,
) -> Result<MultimodalDataset> {
    if specs.is_empty() {
        return Err(Error::Config("at least one modality spec required".into()));
    }
    for spec in specs {
        spec.validate()?;
    }
    if classes < 2 {
        return Err(Error::Config("need at least 2 classes".into()));
    }
    if n < classes {
        return Err(Error::Config(format!(
            "need at least one sample per class: n={n} < classes={classes}"
        )));
    }
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut modalities = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut data = Vec::with_capacity(n * spec.dim);
        for &label in &labels {
            let mean = spec.class_mean(label);
            for &mu in &mean {
                data.push(mu + spec.noise_sigma * rng.normal());
            }
        }
        modalities.push(Tensor::matrix(n, spec.dim, data)?);
    }
    MultimodalDataset::new(modalities, labels, classes, split)
}

/// One epoch of batches: a shuffled partition of `0..len` into chunks of
/// `batch_size`, last partial chunk kept.
pub fn batches(ds: &MultimodalDataset, batch_size: usize, rng: &mut RngState) -> Result<Vec<Vec<usize>>> {
    let n = ds.len();
    if batch_size == 0 || batch_size > n {
        return Err(Error::Input(format!(
            "batch_size {batch_size} out of range for {n} samples"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    // Fisher–Yates, back to front.
    for i in (1..n).rev() {
        let j = rng.next_below(i + 1);
        idx.swap(i, j);
    }
    Ok(idx.chunks(batch_size).map(|c| c.to_vec()).collect())
}
