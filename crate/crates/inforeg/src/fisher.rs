//! Per-modality Fisher-information traces and the prime-window criterion.
//!
//! The trace of a modality's Fisher information matrix is estimated as the
//! mean, over the batches of one epoch, of the squared norm of that
//! modality's flattened encoder gradient. Gradients are taken as training
//! produces them — with the weights evolving batch to batch — not recomputed
//! at epoch end with frozen weights. The epoch value is the mean over the
//! number of batches actually summed.
//!
//! A modality is inside its prime learning window at epoch `t` when the
//! relative rise of its trace over the two previous epochs,
//! `(Tr^{t-1} − Tr^{t-2}) / Tr^{t-1}`, exceeds the threshold `K`. The ratio
//! needs two completed epochs, so the first two epochs have no window flag.

use crate::error::{Error, Result};
use crate::model::GradSet;
use crate::numerics::cosine;

/// Guard for the window ratio's denominator.
const TRACE_EPS: f64 = 1e-12;

/// Running per-epoch sums of per-batch squared encoder gradient norms.
#[derive(Debug, Clone)]
pub struct EpochTraceAccumulator {
    sums: Vec<f64>,
    count: usize,
}

impl EpochTraceAccumulator {
    pub fn new(n_modalities: usize) -> Self {
        EpochTraceAccumulator { sums: vec![0.0; n_modalities], count: 0 }
    }

    /// Add one batch's per-modality squared gradient norms.
    pub fn record(&mut self, grads: &GradSet) {
        debug_assert_eq!(grads.encoder_norm_sq.len(), self.sums.len());
        self.record_norms(&grads.encoder_norm_sq);
    }

    /// Raw-norm entry point, shared with replay tests.
    pub fn record_norms(&mut self, norm_sq: &[f64]) {
        for (s, &n) in self.sums.iter_mut().zip(norm_sq) {
            *s += n;
        }
        self.count += 1;
    }

    pub fn batches_recorded(&self) -> usize {
        self.count
    }

    /// Per-modality trace estimates: mean of the recorded squared norms.
    pub fn finalize(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::Contract("finalize on an accumulator with zero batches".into()));
        }
        Ok(self.sums.iter().map(|s| s / self.count as f64).collect())
    }
}

/// Per-modality, per-epoch trace series with the window flags that were in
/// force during each epoch (`None` before two epochs have completed).
#[derive(Debug, Clone, PartialEq)]
pub struct FisherHistory {
    /// `traces[m][t]`.
    traces: Vec<Vec<f64>>,
    /// `windows[m][t]`, the flag used while epoch `t` ran.
    windows: Vec<Vec<Option<bool>>>,
}

impl FisherHistory {
    pub fn new(n_modalities: usize) -> Self {
        FisherHistory {
            traces: vec![Vec::new(); n_modalities],
            windows: vec![Vec::new(); n_modalities],
        }
    }

    pub fn n_modalities(&self) -> usize {
        self.traces.len()
    }

    /// Completed epochs.
    pub fn epochs(&self) -> usize {
        self.traces.first().map_or(0, Vec::len)
    }

    pub fn trace_series(&self, m: usize) -> &[f64] {
        &self.traces[m]
    }

    pub fn window_series(&self, m: usize) -> &[Option<bool>] {
        &self.windows[m]
    }

    /// Append one completed epoch: the finalized traces and the window flags
    /// that were in force while it ran.
    pub fn push_epoch(&mut self, traces: Vec<f64>, windows: Vec<Option<bool>>) -> Result<()> {
        if traces.len() != self.traces.len() || windows.len() != self.traces.len() {
            return Err(Error::Input("per-epoch vectors must cover every modality".into()));
        }
        if let Some(&bad) = traces.iter().find(|&&t| !(t.is_finite() && t >= 0.0)) {
            return Err(Error::Numeric(format!("trace must be finite and nonnegative, got {bad}")));
        }
        for (m, (t, w)) in traces.into_iter().zip(windows).enumerate() {
            self.traces[m].push(t);
            self.windows[m].push(w);
        }
        Ok(())
    }

    /// Prime-window status of modality `m` for the upcoming epoch, judged
    /// from the last two completed epochs: `None` until two epochs exist
    /// (callers skip regulation), otherwise the relative-rise test. A
    /// denominator at or below the guard reports `Some(false)`.
    pub fn prime_window(&self, m: usize, threshold: f64) -> Option<bool> {
        let series = &self.traces[m];
        let t = series.len();
        if t < 2 {
            return None;
        }
        let (prev, last) = (series[t - 2], series[t - 1]);
        if last <= TRACE_EPS {
            return Some(false);
        }
        Some((last - prev) / last > threshold)
    }
}

/// Elementwise `Tr_m1 − Tr_m2` across epochs.
pub fn trace_gap(history: &FisherHistory, m1: usize, m2: usize) -> Result<Vec<f64>> {
    let a = history.trace_series(m1);
    let b = history.trace_series(m2);
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "trace series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Pairwise cosine matrix of one epoch's stored per-batch gradients.
/// Diagonal entries are exactly 1; an entry involving a zero-norm gradient is
/// flagged undefined rather than invented.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineMatrix {
    n: usize,
    entries: Vec<Option<f64>>,
}

impl CosineMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn at(&self, i: usize, j: usize) -> Option<f64> {
        self.entries[i * self.n + j]
    }

    /// Mean of |cos| over defined off-diagonal entries.
    pub fn mean_abs_off_diagonal(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    if let Some(c) = self.at(i, j) {
                        sum += c.abs();
                        count += 1;
                    }
                }
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

/// Build the cosine matrix for at least two stored flattened gradients.
pub fn batch_cosine_matrix(grads: &[Vec<f64>]) -> Result<CosineMatrix> {
    let n = grads.len();
    if n < 2 {
        return Err(Error::Input("need at least two stored gradients".into()));
    }
    let len = grads[0].len();
    if grads.iter().any(|g| g.len() != len) {
        return Err(Error::Input("stored gradients have differing lengths".into()));
    }
    let mut entries = vec![None; n * n];
    for i in 0..n {
        entries[i * n + i] = Some(1.0);
        for j in i + 1..n {
            let c = cosine(&grads[i], &grads[j]).ok();
            entries[i * n + j] = c;
            entries[j * n + i] = c;
        }
    }
    Ok(CosineMatrix { n, entries })
}

/// Long-format CSV of a trace history: `epoch,modality,value`.
pub fn traces_csv(history: &FisherHistory) -> String {
    let mut out = String::from("epoch,modality,value\n");
    for t in 0..history.epochs() {
        for m in 0..history.n_modalities() {
            out.push_str(&format!("{t},{m},{}\n", history.trace_series(m)[t]));
        }
    }
    out
}

/// Long-format CSV of one cosine matrix: `i,j,value`, undefined entries
/// written as empty cells.
pub fn cosine_csv(matrix: &CosineMatrix) -> String {
    let mut out = String::from("i,j,value\n");
    for i in 0..matrix.n() {
        for j in 0..matrix.n() {
            match matrix.at(i, j) {
                Some(c) => out.push_str(&format!("{i},{j},{c}\n")),
                None => out.push_str(&format!("{i},{j},\n")),
            }
        }
    }
    out
}
