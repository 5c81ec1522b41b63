//! Post-hoc numerical verification of the method's mathematical claims.
//!
//! Three independent checks over logged runs:
//!
//! * **Orthogonality** — random vectors on a high-dimensional sphere are
//!   nearly orthogonal: Monte Carlo |cos θ| statistics against the analytic
//!   mean `√(2/(πn))`, plus the same statistics over real logged gradients.
//! * **Penalty equivalence** — for plain SGD the proximal penalty at batch
//!   `b` decomposes exactly into a diagonal term `(αη²/2)·Σ‖g_k‖²` plus the
//!   pairwise cross-term mass; the decomposition is algebra, while the claim
//!   that the cross-term is *small* is empirical and reported as a ratio.
//! * **Descent bound** — the reconstructed penalty gradient `αη²·Σ_{k<b} g_k`
//!   is bounded in norm by `αη²·b·G` with `G` the largest gradient norm seen
//!   so far in the epoch; a triangle-inequality fact that must hold exactly.
//!   The per-step smoothness descent inequality is also scored against an
//!   estimated curvature constant, as a satisfaction fraction only (batch
//!   losses are stochastic).

use serde::Serialize;

use crate::datagen::MultimodalDataset;
use crate::error::{Error, Result};
use crate::gradlog::GradLog;
use crate::model::{self, LossWeights, ModelParams};
use crate::numerics::{norm_sq, RngState};

/// |cos θ| statistics of random unit-vector pairs in dimension `n`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OrthogonalityReport {
    pub dimension: usize,
    /// Pairs that entered the statistics.
    pub pairs: usize,
    /// Degenerate pairs (|cos| at 1 within 1e-9) detected and excluded.
    pub excluded: usize,
    pub mean_abs_cos: f64,
    pub q95_abs_cos: f64,
    /// Analytic large-n mean: `√(2/(πn))`.
    pub analytic_mean_abs_cos: f64,
}

/// Analytic mean |cos θ| of uniform sphere pairs for large `n`.
pub fn analytic_mean_abs_cos(n: usize) -> f64 {
    (2.0 / (std::f64::consts::PI * n as f64)).sqrt()
}

/// Build a report from precomputed |cos| samples, excluding parallel pairs.
pub fn orthogonality_from_cosines(dimension: usize, abs_cosines: &[f64]) -> Result<OrthogonalityReport> {
    let mut kept: Vec<f64> = abs_cosines.iter().cloned().filter(|c| *c < 1.0 - 1e-9).collect();
    let excluded = abs_cosines.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::Input("no non-degenerate cosine samples".into()));
    }
    kept.sort_by(|a, b| a.partial_cmp(b).expect("finite cosines"));
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    let q95 = kept[((kept.len() as f64 * 0.95) as usize).min(kept.len() - 1)];
    Ok(OrthogonalityReport {
        dimension,
        pairs: kept.len(),
        excluded,
        mean_abs_cos: mean,
        q95_abs_cos: q95,
        analytic_mean_abs_cos: analytic_mean_abs_cos(dimension),
    })
}

/// Monte Carlo sphere sampling: `pairs` independent pairs of Gaussian-
/// normalized unit vectors in dimension `n`.
pub fn orthogonality_mc(n: usize, pairs: usize, rng: &mut RngState) -> Result<OrthogonalityReport> {
    if n < 2 {
        return Err(Error::Input("dimension must be at least 2".into()));
    }
    if pairs == 0 {
        return Err(Error::Input("need at least one pair".into()));
    }
    let mut cosines = Vec::with_capacity(pairs);
    let draw_unit = |rng: &mut RngState| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let norm = norm_sq(&v).sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    };
    for _ in 0..pairs {
        let u = draw_unit(rng);
        let v = draw_unit(rng);
        let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        cosines.push(dot.abs().min(1.0));
    }
    orthogonality_from_cosines(n, &cosines)
}

/// One record of the penalty decomposition.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EquivalenceRow {
    pub epoch: u32,
    pub batch: u32,
    pub modality: usize,
    /// `(α/2)·‖w_b − w_snapshot‖²` from the measured displacement.
    pub exact: f64,
    /// `(αη²/2)·Σ_{k≤b} ‖g_k‖²`.
    pub diagonal: f64,
    /// `αη²·Σ_{z<k≤b} g_z·g_k`.
    pub cross: f64,
    /// `|exact − (diagonal + cross)| / max(|exact|, tiny)`.
    pub identity_rel_err: f64,
    /// `|cross| / diagonal` (0 when the diagonal is 0).
    pub cross_ratio: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EquivalenceReport {
    pub rows: Vec<EquivalenceRow>,
    pub max_identity_rel_err: f64,
}

impl EquivalenceReport {
    /// Median |cross|/diagonal over records whose (epoch, modality) is in
    /// the given window set; `None` when no record falls inside.
    pub fn median_cross_ratio_in(&self, window: &dyn Fn(u32, usize) -> bool) -> Option<f64> {
        let mut ratios: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| window(r.epoch, r.modality))
            .map(|r| r.cross_ratio)
            .collect();
        if ratios.is_empty() {
            return None;
        }
        ratios.sort_by(|a, b| a.partial_cmp(b).expect("finite ratios"));
        Some(median_of_sorted(&ratios))
    }

    pub fn median_cross_ratio(&self) -> Option<f64> {
        self.median_cross_ratio_in(&|_, _| true)
    }
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if !n.is_multiple_of(2) {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Verify the per-batch penalty decomposition over a shadow-mode gradient
/// log. Requires a run in which no regulation gradient reached the weights;
/// otherwise the measured displacement is not the plain-SGD telescoping sum
/// and the identity cannot hold.
pub fn penalty_equivalence(log: &GradLog) -> Result<EquivalenceReport> {
    if log.regulation_applied {
        return Err(Error::Contract(
            "penalty equivalence needs a shadow run: this log saw applied regulation".into(),
        ));
    }
    if log.records.is_empty() {
        return Err(Error::Input("gradient log holds no records".into()));
    }
    let eta_sq = log.eta * log.eta;
    let mut rows = Vec::new();
    let mut max_rel = 0.0f64;
    for (_, records) in log.epochs() {
        // Running per-modality accumulators across the epoch.
        let m_count = log.n_modalities;
        let mut sum_vec: Vec<Vec<f64>> = Vec::with_capacity(m_count);
        let mut sum_norm_sq = vec![0.0; m_count];
        for rec in records {
            for (m, mg) in rec.modalities.iter().enumerate() {
                if sum_vec.len() <= m {
                    sum_vec.push(vec![0.0; mg.grad.len()]);
                }
                if sum_vec[m].len() != mg.grad.len() {
                    return Err(Error::Input("gradient length changed mid-epoch".into()));
                }
                for (s, g) in sum_vec[m].iter_mut().zip(&mg.grad) {
                    *s += g;
                }
                sum_norm_sq[m] += norm_sq(&mg.grad);

                let alpha = mg.alpha;
                let exact = 0.5 * alpha * mg.disp_sq;
                let diagonal = 0.5 * alpha * eta_sq * sum_norm_sq[m];
                let cross = 0.5 * alpha * eta_sq * (norm_sq(&sum_vec[m]) - sum_norm_sq[m]);
                let recon = diagonal + cross;
                let rel = (exact - recon).abs() / exact.abs().max(recon.abs()).max(1e-30);
                let ratio = if diagonal > 0.0 { cross.abs() / diagonal } else { 0.0 };
                max_rel = max_rel.max(rel);
                rows.push(EquivalenceRow {
                    epoch: rec.epoch,
                    batch: rec.batch,
                    modality: m,
                    exact,
                    diagonal,
                    cross,
                    identity_rel_err: rel,
                    cross_ratio: ratio,
                });
            }
        }
    }
    Ok(EquivalenceReport { rows, max_identity_rel_err: max_rel })
}

/// Per-batch descent bookkeeping.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DescentRow {
    pub epoch: u32,
    pub batch: u32,
    /// `loss_b − loss_{b+1}` (positive means the loss fell).
    pub loss_decrease: f64,
    /// `η·‖∇L‖²`.
    pub gradient_term: f64,
    /// `(Lη²/2)·‖∇L‖²`.
    pub curvature_term: f64,
    /// `gradient_term − curvature_term`, the guaranteed decrease under
    /// smoothness.
    pub guaranteed_decrease: f64,
    pub satisfied: bool,
}

/// Per regulated batch: the reconstructed penalty-gradient norm against its
/// triangle-inequality bound.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RegBoundRow {
    pub epoch: u32,
    pub batch: u32,
    pub modality: usize,
    /// `αη²·‖Σ_{k<b} g_k‖`.
    pub penalty_grad_norm: f64,
    /// `αη²·b·G`, `G = max_{k<b} ‖g_k‖`.
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DescentReport {
    pub rows: Vec<DescentRow>,
    pub bound_rows: Vec<RegBoundRow>,
    /// Fraction of consecutive-batch steps satisfying the smoothness
    /// descent inequality with the supplied curvature estimate.
    pub satisfaction_fraction: f64,
    /// Worst `penalty_grad_norm − bound` over regulated batches (≤ 0 means
    /// the bound held everywhere).
    pub max_bound_excess: f64,
    pub l_estimate: f64,
}

/// Check the regulation-gradient bound and the smoothness descent inequality
/// over a gradient log. `l_estimate` is the curvature constant to use for
/// the (soft) descent check; the gradient bound itself is parameter-free.
pub fn descent_check(log: &GradLog, l_estimate: f64) -> Result<DescentReport> {
    if log.records.is_empty() {
        return Err(Error::Input("gradient log holds no records".into()));
    }
    if !l_estimate.is_finite() || l_estimate < 0.0 {
        return Err(Error::Input(format!("bad curvature estimate {l_estimate}")));
    }
    let eta = log.eta;
    let mut rows = Vec::new();
    let mut bound_rows = Vec::new();
    let mut satisfied = 0usize;
    let mut total = 0usize;
    let mut max_excess = f64::NEG_INFINITY;

    for (_, records) in log.epochs() {
        let m_count = log.n_modalities;
        let mut sum_vec: Vec<Vec<f64>> = vec![Vec::new(); m_count];
        let mut max_norm = vec![0.0f64; m_count];
        for (i, rec) in records.iter().enumerate() {
            // Bound rows use strictly-previous batches: at batch b the
            // reconstructed penalty gradient is αη²·Σ_{k<b} g_k with b terms,
            // bounded by αη²·b·G.
            for (m, mg) in rec.modalities.iter().enumerate() {
                let b_terms = i as f64;
                let pnorm = if sum_vec[m].is_empty() {
                    0.0
                } else {
                    mg.alpha * eta * eta * norm_sq(&sum_vec[m]).sqrt()
                };
                let bound = mg.alpha * eta * eta * b_terms * max_norm[m];
                let holds = pnorm <= bound * (1.0 + 1e-9) + 1e-300;
                if mg.active {
                    max_excess = max_excess.max(pnorm - bound);
                }
                bound_rows.push(RegBoundRow {
                    epoch: rec.epoch,
                    batch: rec.batch,
                    modality: m,
                    penalty_grad_norm: pnorm,
                    bound,
                    holds,
                });
                // Now absorb this batch's gradient for the next iteration.
                if sum_vec[m].is_empty() {
                    sum_vec[m] = vec![0.0; mg.grad.len()];
                }
                if sum_vec[m].len() != mg.grad.len() {
                    return Err(Error::Input("gradient length changed mid-epoch".into()));
                }
                for (s, g) in sum_vec[m].iter_mut().zip(&mg.grad) {
                    *s += g;
                }
                max_norm[m] = max_norm[m].max(norm_sq(&mg.grad).sqrt());
            }
            // Descent inequality between consecutive logged batches.
            if i + 1 < records.len() {
                let next = records[i + 1];
                let gsq = rec.applied_grad_sq;
                let gradient_term = eta * gsq;
                let curvature_term = 0.5 * l_estimate * eta * eta * gsq;
                let guaranteed = gradient_term - curvature_term;
                let decrease = rec.loss - next.loss;
                let ok = decrease >= guaranteed - 1e-12;
                if ok {
                    satisfied += 1;
                }
                total += 1;
                rows.push(DescentRow {
                    epoch: rec.epoch,
                    batch: rec.batch,
                    loss_decrease: decrease,
                    gradient_term,
                    curvature_term,
                    guaranteed_decrease: guaranteed,
                    satisfied: ok,
                });
            }
        }
    }
    let satisfaction_fraction = if total == 0 { 1.0 } else { satisfied as f64 / total as f64 };
    Ok(DescentReport {
        rows,
        bound_rows,
        satisfaction_fraction,
        max_bound_excess: if max_excess == f64::NEG_INFINITY { 0.0 } else { max_excess },
        l_estimate,
    })
}

/// Rough curvature (smoothness) estimate along step directions: for a few
/// batches, compare the gradient at `w` and at `w − ε·ĝ` and take the worst
/// `‖Δg‖/ε`. A probe, not a guarantee — consumers treat it accordingly.
pub fn estimate_lipschitz(
    params: &ModelParams,
    ds: &MultimodalDataset,
    weights: &LossWeights,
    probe_batches: usize,
    batch_size: usize,
    epsilon: f64,
) -> Result<f64> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Input("epsilon must be positive".into()));
    }
    let n = ds.len();
    if batch_size == 0 || batch_size > n {
        return Err(Error::Input("bad probe batch size".into()));
    }
    let mut worst = 0.0f64;
    let mut probed = 0usize;
    let mut start = 0usize;
    while probed < probe_batches && start + batch_size <= n {
        let idx: Vec<usize> = (start..start + batch_size).collect();
        let (feats, labels) = ds.gather(&idx);
        let (_, trace) = model::forward(params, &feats)?;
        let (_, grads) = model::backward(params, &trace, &labels, weights)?;
        let flat = grads.flatten_all();
        let gnorm = norm_sq(&flat).sqrt();
        if gnorm > 1e-12 {
            // Step opposite the normalized gradient.
            let mut probe = params.clone();
            for (i, g) in flat.iter().enumerate() {
                probe.param_set(i, probe.param_get(i) - epsilon * g / gnorm);
            }
            let (_, trace2) = model::forward(&probe, &feats)?;
            let (_, grads2) = model::backward(&probe, &trace2, &labels, weights)?;
            let flat2 = grads2.flatten_all();
            let diff_sq: f64 = flat.iter().zip(&flat2).map(|(a, b)| (a - b) * (a - b)).sum();
            worst = worst.max(diff_sq.sqrt() / epsilon);
        }
        probed += 1;
        start += batch_size;
    }
    if probed == 0 {
        return Err(Error::Input("dataset too small for any probe batch".into()));
    }
    Ok(worst)
}

/// |cos| samples over one epoch's logged gradients of one modality, for the
/// real-gradient side of the orthogonality check.
pub fn logged_gradient_cosines(log: &GradLog, modality: usize, epoch: u32) -> Result<Vec<f64>> {
    if modality >= log.n_modalities {
        return Err(Error::Input(format!("modality {modality} out of range")));
    }
    let grads: Vec<&Vec<f64>> = log
        .records
        .iter()
        .filter(|r| r.epoch == epoch)
        .map(|r| &r.modalities[modality].grad)
        .collect();
    if grads.len() < 2 {
        return Err(Error::Input(format!("epoch {epoch} has fewer than two logged batches")));
    }
    let mut cosines = Vec::new();
    for i in 0..grads.len() {
        for j in i + 1..grads.len() {
            if let Ok(c) = crate::numerics::cosine(grads[i], grads[j]) {
                cosines.push(c.abs());
            }
        }
    }
    Ok(cosines)
}

/// CSV emission for the equivalence rows.
pub fn equivalence_csv(report: &EquivalenceReport) -> String {
    let mut out =
        String::from("epoch,batch,modality,exact,diagonal,cross,identity_rel_err,cross_ratio\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch, r.batch, r.modality, r.exact, r.diagonal, r.cross, r.identity_rel_err, r.cross_ratio
        ));
    }
    out
}

/// CSV emission for the descent/bound rows.
pub fn descent_csv(report: &DescentReport) -> String {
    let mut out = String::from("epoch,batch,modality,penalty_grad_norm,bound,holds\n");
    for r in &report.bound_rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.batch, r.modality, r.penalty_grad_norm, r.bound, r.holds
        ));
    }
    out
}
