//! The regulation controller: per-batch modality performance scores, the
//! score gaps that identify information-sufficient modalities, the adaptive
//! regulation strength, and the proximal penalty gradient.
//!
//! Scores are signed so that *higher is better*: a modality's score is the
//! mean log-probability its zeroed-fusion logits assign to the true labels
//! (the negative of its unimodal cross-entropy). The gap `Δ_m` averages the
//! score margin of modality `m` over strictly worse-scoring modalities, so
//! the weakest modality always has `Δ = 0` and is never regulated. A
//! modality is regulated on a batch only when all three hold: its trace is
//! inside the prime learning window, `Δ_m > 0`, and warmup has passed.
//!
//! The penalty on a regulated modality is proximal: `(α/2)·‖w − w_snap‖²`
//! against the weights snapshotted at the last epoch boundary, with strength
//! `α = exp(β·tanh(Δ_m))` recomputed every batch. The penalty gradient
//! `α·(w − w_snap)` is added to that modality's encoder gradient only — the
//! shared classifier is never regulated, since penalizing it would slow
//! every modality at once.

use crate::error::{Error, Result};
use crate::fisher::FisherHistory;
use crate::model::{self, ModelParams};
use crate::numerics::{norm_sq, softmax_cross_entropy, Tensor};

/// Controller hyperparameters. The learning rate lives in the trainer
/// config; the controller itself never needs it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegulationConfig {
    /// Sensitivity of α to the score gap.
    pub beta: f64,
    /// Prime-window threshold on the relative trace rise. `f64::INFINITY`
    /// is a valid sentinel that structurally disables regulation.
    pub k: f64,
    /// Epochs at the start of training that never regulate. At least 2,
    /// because the window criterion needs two completed epochs.
    pub warmup_epochs: usize,
}

impl Default for RegulationConfig {
    fn default() -> Self {
        RegulationConfig { beta: 0.9, k: 0.04, warmup_epochs: 2 }
    }
}

impl RegulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(Error::Config(format!("beta must be finite and > 0, got {}", self.beta)));
        }
        if self.k.is_nan() || self.k <= 0.0 {
            return Err(Error::Config(format!("K must be > 0, got {}", self.k)));
        }
        if self.warmup_epochs < 2 {
            return Err(Error::Config(format!(
                "warmup_epochs must be at least 2, got {}",
                self.warmup_epochs
            )));
        }
        Ok(())
    }
}

/// Flattened per-modality encoder weights captured at an epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotStore {
    flats: Vec<Vec<f64>>,
}

impl SnapshotStore {
    pub fn capture(params: &ModelParams) -> Self {
        let flats = (0..params.n_modalities()).map(|m| params.flatten_encoder(m)).collect();
        SnapshotStore { flats }
    }

    pub fn get(&self, m: usize) -> &[f64] {
        &self.flats[m]
    }

    pub fn n_modalities(&self) -> usize {
        self.flats.len()
    }
}

/// One modality's controller outputs for one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalityDecision {
    /// Performance score σ (higher is better).
    pub sigma: f64,
    /// Mean score margin over strictly worse modalities; 0 for the weakest.
    pub delta: f64,
    /// `exp(β·tanh(Δ))`, computed whether or not the modality is regulated.
    pub alpha: f64,
    pub in_window: bool,
    pub active: bool,
}

/// Controller outputs for every modality on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulationDecision {
    pub per_modality: Vec<ModalityDecision>,
}

/// Performance score of modality `m` on a batch: the mean log-probability of
/// the true labels under its zeroed-fusion logits. Equals the negative
/// unimodal cross-entropy, so better-performing modalities score higher.
pub fn modality_score(
    params: &ModelParams,
    batch: &[Tensor],
    labels: &[usize],
    m: usize,
) -> Result<f64> {
    let logits = model::unimodal_logits(params, batch, m)?;
    let (ce, _) = softmax_cross_entropy(&logits, labels)?;
    Ok(-ce)
}

/// Gaps and counts from a full score vector: `C_m` counts modalities scoring
/// strictly below `σ_m`, and `Δ_m` is the mean margin over exactly those.
/// `C_m = 0` (the weakest, or an all-tied group) yields `Δ_m = 0`.
pub fn performance_gap(scores: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let m_count = scores.len();
    let mut deltas = vec![0.0; m_count];
    let mut counts = vec![0usize; m_count];
    for m in 0..m_count {
        let mut sum = 0.0;
        let mut c = 0usize;
        for m2 in 0..m_count {
            if m2 != m && scores[m2] < scores[m] {
                sum += scores[m] - scores[m2];
                c += 1;
            }
        }
        counts[m] = c;
        if c > 0 {
            deltas[m] = sum / c as f64;
        }
    }
    (deltas, counts)
}

/// Batchwise regulation strength `α = exp(β·tanh(Δ))`: 1 at Δ = 0, strictly
/// increasing, saturating at `e^β`.
pub fn adaptive_alpha(delta: f64, beta: f64) -> f64 {
    (beta * delta.tanh()).exp()
}

/// Proximal penalty `(α/2)·‖w − snap‖²` and its gradient `α·(w − snap)`.
pub fn regulation_grad(w_current: &[f64], snapshot: &[f64], alpha: f64) -> Result<(f64, Vec<f64>)> {
    if w_current.len() != snapshot.len() {
        return Err(Error::Contract(format!(
            "regulation: weight len {} != snapshot len {}",
            w_current.len(),
            snapshot.len()
        )));
    }
    let diff: Vec<f64> = w_current.iter().zip(snapshot).map(|(w, s)| w - s).collect();
    let penalty = 0.5 * alpha * norm_sq(&diff);
    let grad = diff.into_iter().map(|d| alpha * d).collect();
    Ok((penalty, grad))
}

/// Combine scores, window status, and warmup into per-modality decisions for
/// the batch at epoch `t`. α is always computed (it is logged either way);
/// `active` additionally requires the window, a positive gap, and warmup.
pub fn decide(
    history: &FisherHistory,
    scores: &[f64],
    config: &RegulationConfig,
    epoch: usize,
) -> RegulationDecision {
    let (deltas, _) = performance_gap(scores);
    let per_modality = scores
        .iter()
        .enumerate()
        .map(|(m, &sigma)| {
            let in_window = history.prime_window(m, config.k).unwrap_or(false);
            let delta = deltas[m];
            let alpha = adaptive_alpha(delta, config.beta);
            let active = in_window && delta > 0.0 && epoch >= config.warmup_epochs;
            ModalityDecision { sigma, delta, alpha, in_window, active }
        })
        .collect();
    RegulationDecision { per_modality }
}
