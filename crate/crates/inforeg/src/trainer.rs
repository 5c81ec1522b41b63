//! Training orchestration: the per-epoch/per-batch loop, plain SGD updates,
//! snapshot management, metric rows, and the decision log.
//!
//! One run is strictly sequential. Per epoch: the window flags for every
//! modality are fixed from the trace history, then each shuffled batch is
//! forwarded, differentiated, recorded into the trace accumulator, passed to
//! the regulation controller (from the warmup epoch onward, for regulating
//! methods), penalized if the controller says so, and applied with a
//! constant-step SGD update. At the epoch boundary the order is fixed:
//! evaluate on the test split → finalize traces → snapshot weights.
//!
//! The optimizer is deliberately plain `w ← w − η·g` with constant η: the
//! telescoping identity `w_b − w_epoch_start = −η·Σ g_k` that the
//! diagnostics verify holds only for that update rule.
//!
//! Reported losses: the `joint_loss` column is the pure task loss so
//! regulated and baseline runs stay comparable; the penalty value goes to
//! its own column and never into the loss columns.

use crate::datagen::{self, MultimodalDataset};
use crate::error::{Error, Result};
use crate::fisher::{EpochTraceAccumulator, FisherHistory};
use crate::gradlog::{GradLog, GradRecord, LogMode, ModalityGradRecord};
use crate::model::{
    self, EvalResult, GradSet, LossWeights, ModelConfig, ModelParams,
};
use crate::numerics::{norm_sq, RngState, Stream};
use crate::regulation::{self, RegulationConfig, SnapshotStore};

/// Training method. The starred variants add per-modality unimodal losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Joint,
    JointUnimodal,
    Inforeg,
    InforegUnimodal,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Joint => "joint",
            Method::JointUnimodal => "joint_unimodal",
            Method::Inforeg => "inforeg",
            Method::InforegUnimodal => "inforeg_unimodal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Method::Joint),
            "joint_unimodal" => Ok(Method::JointUnimodal),
            "inforeg" => Ok(Method::Inforeg),
            "inforeg_unimodal" => Ok(Method::InforegUnimodal),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }

    pub fn regulates(self) -> bool {
        matches!(self, Method::Inforeg | Method::InforegUnimodal)
    }

    pub fn uses_unimodal_loss(self) -> bool {
        matches!(self, Method::JointUnimodal | Method::InforegUnimodal)
    }
}

/// What the trainer writes into the gradient log, if anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradLogMode {
    Off,
    /// Log task gradients; penalty gradients are excluded from the log.
    Shadow,
    /// Log the gradients actually applied (task + penalty).
    Total,
}

impl GradLogMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(GradLogMode::Off),
            "shadow" => Ok(GradLogMode::Shadow),
            "total" => Ok(GradLogMode::Total),
            other => Err(Error::Config(format!("unknown grad_log mode `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GradLogMode::Off => "off",
            GradLogMode::Shadow => "shadow",
            GradLogMode::Total => "total",
        }
    }
}

/// Full configuration of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub seed: u64,
    /// Weight of the per-modality unimodal losses; must be 0 for the base
    /// methods and positive for the starred variants.
    pub unimodal_loss_weight: f64,
    pub regulation: RegulationConfig,
    pub grad_log: GradLogMode,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(Error::Config(format!("eta must be finite and > 0, got {}", self.eta)));
        }
        if self.method.uses_unimodal_loss() {
            if self.unimodal_loss_weight.is_nan() || self.unimodal_loss_weight <= 0.0 {
                return Err(Error::Config(format!(
                    "method {} needs unimodal_loss_weight > 0",
                    self.method.as_str()
                )));
            }
        } else if self.unimodal_loss_weight != 0.0 {
            return Err(Error::Config(format!(
                "method {} must have unimodal_loss_weight = 0",
                self.method.as_str()
            )));
        }
        self.regulation.validate()
    }
}

/// One metrics row (one epoch).
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub overall_acc: f64,
    pub per_modality_acc: Vec<f64>,
    pub traces: Vec<f64>,
    /// Window flags in force during this epoch; `None` for the first two.
    pub windows: Vec<Option<bool>>,
    /// Mean applied regulation strength: α on batches where the modality was
    /// regulated, 1.0 elsewhere.
    pub mean_alpha: Vec<f64>,
    /// Mean pure task joint loss over batches.
    pub joint_loss: f64,
    /// Mean per-modality unimodal cross-entropy over batches.
    pub unimodal_losses: Vec<f64>,
    /// Mean applied proximal penalty value over batches.
    pub penalties: Vec<f64>,
}

/// One decision-log row (one modality on one batch).
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRow {
    pub epoch: usize,
    pub batch: usize,
    pub modality: usize,
    pub sigma: f64,
    pub delta: f64,
    pub alpha: f64,
    pub in_window: bool,
    pub active: bool,
}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunResult {
    pub rows: Vec<EpochRow>,
    pub decisions: Vec<DecisionRow>,
    pub params: ModelParams,
    pub history: FisherHistory,
    pub grad_log: Option<GradLog>,
}

/// Attach run position to numeric failures so aborts are diagnosable.
fn at_batch(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numeric(msg) => {
            Error::Numeric(format!("epoch {epoch} batch {batch}: {msg}; reduce eta or rescale the data"))
        }
        other => other,
    }
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numeric(msg) => {
            Error::Numeric(format!("epoch {epoch}: {msg}; reduce eta or rescale the data"))
        }
        other => other,
    }
}

/// Plain SGD: `w ← w − η·g` over every parameter tensor.
pub fn sgd_step(params: &mut ModelParams, grads: &GradSet, eta: f64) -> Result<()> {
    if grads.encoders.len() != params.encoders.len() {
        return Err(Error::Contract("gradient/parameter modality count mismatch".into()));
    }
    for (layers, glayers) in params.encoders.iter_mut().zip(&grads.encoders) {
        if layers.len() != glayers.len() {
            return Err(Error::Contract("gradient/parameter layer count mismatch".into()));
        }
        for (p, g) in layers.iter_mut().zip(glayers) {
            if p.w.shape() != g.w.shape() || p.b.shape() != g.b.shape() {
                return Err(Error::Contract("gradient/parameter shape mismatch".into()));
            }
            for (w, gw) in p.w.data_mut().iter_mut().zip(g.w.data()) {
                *w -= eta * gw;
            }
            for (b, gb) in p.b.data_mut().iter_mut().zip(g.b.data()) {
                *b -= eta * gb;
            }
        }
    }
    if params.classifier.w.shape() != grads.classifier.w.shape() {
        return Err(Error::Contract("classifier gradient shape mismatch".into()));
    }
    for (w, gw) in params.classifier.w.data_mut().iter_mut().zip(grads.classifier.w.data()) {
        *w -= eta * gw;
    }
    for (b, gb) in params.classifier.b.data_mut().iter_mut().zip(grads.classifier.b.data()) {
        *b -= eta * gb;
    }
    params.bump_version();
    Ok(())
}

/// Test-split metrics for one epoch; rejects empty sets explicitly.
pub fn evaluate_epoch(params: &ModelParams, test: &MultimodalDataset) -> Result<EvalResult> {
    if test.is_empty() {
        return Err(Error::Input("empty test set".into()));
    }
    model::evaluate(params, test)
}

/// Execute one full run.
pub fn train(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    train_ds: &MultimodalDataset,
    test_ds: &MultimodalDataset,
) -> Result<RunResult> {
    cfg.validate()?;
    model_cfg.validate()?;
    if train_ds.classes() != model_cfg.classes {
        return Err(Error::Config(format!(
            "dataset has {} classes, model configured for {}",
            train_ds.classes(),
            model_cfg.classes
        )));
    }
    if test_ds.dims() != train_ds.dims() {
        return Err(Error::Config("train/test modality dims differ".into()));
    }
    if cfg.batch_size > train_ds.len() {
        return Err(Error::Config(format!(
            "batch_size {} exceeds training set size {}",
            cfg.batch_size,
            train_ds.len()
        )));
    }

    let m_count = train_ds.n_modalities();
    let mut init_rng = RngState::stream(cfg.seed, Stream::Init);
    let mut shuffle_rng = RngState::stream(cfg.seed, Stream::Shuffle);
    let mut params = ModelParams::init(model_cfg, &train_ds.dims(), &mut init_rng)?;
    // Epoch-start anchor; for epoch 0 this is the initial weights.
    let mut snapshots = SnapshotStore::capture(&params);
    let mut history = FisherHistory::new(m_count);
    let weights = LossWeights { joint: 1.0, unimodal: cfg.unimodal_loss_weight };
    let mut grad_log = match cfg.grad_log {
        GradLogMode::Off => None,
        GradLogMode::Shadow => Some(GradLog::new(cfg.eta, m_count, LogMode::Shadow)),
        GradLogMode::Total => Some(GradLog::new(cfg.eta, m_count, LogMode::Total)),
    };
    let mut rows = Vec::with_capacity(cfg.epochs);
    let mut decisions = Vec::new();

    for epoch in 0..cfg.epochs {
        // Window flags in force for the whole epoch, from completed history.
        let windows: Vec<Option<bool>> =
            (0..m_count).map(|m| history.prime_window(m, cfg.regulation.k)).collect();

        let mut trace_acc = EpochTraceAccumulator::new(m_count);
        let mut alpha_sums = vec![0.0; m_count];
        let mut penalty_sums = vec![0.0; m_count];
        let mut uni_loss_sums = vec![0.0; m_count];
        let mut joint_loss_sum = 0.0;

        let batch_indices = datagen::batches(train_ds, cfg.batch_size, &mut shuffle_rng)?;
        let n_batches = batch_indices.len();

        for (b, idx) in batch_indices.iter().enumerate() {
            let (feats, labels) = train_ds.gather(idx);
            let (_logits, trace) =
                model::forward(&params, &feats).map_err(|e| at_batch(e, epoch, b))?;
            let (losses, mut grads) =
                model::backward(&params, &trace, &labels, &weights).map_err(|e| at_batch(e, epoch, b))?;
            if !losses.total.is_finite() || !grads.is_finite() {
                return Err(at_batch(Error::Numeric("non-finite loss or gradient".into()), epoch, b));
            }
            // Task-gradient quantities before any penalty touches them.
            trace_acc.record(&grads);
            let task_grad_sq = grads.total_norm_sq();
            let shadow_flat: Option<Vec<Vec<f64>>> = grad_log
                .as_ref()
                .filter(|log| log.mode == LogMode::Shadow)
                .map(|_| (0..m_count).map(|m| grads.flatten_encoder(m)).collect());

            joint_loss_sum += losses.joint;
            for (s, l) in uni_loss_sums.iter_mut().zip(&losses.unimodal) {
                *s += l;
            }

            // Regulation controller (regulating methods, past warmup only —
            // the first epochs just update and record traces).
            let mut batch_alpha = vec![1.0; m_count];
            let mut batch_active = vec![false; m_count];
            let mut batch_penalty = vec![0.0; m_count];
            if cfg.method.regulates() && epoch >= cfg.regulation.warmup_epochs {
                let sigma: Vec<f64> = losses.unimodal.iter().map(|ce| -ce).collect();
                let decision = regulation::decide(&history, &sigma, &cfg.regulation, epoch);
                for (m, d) in decision.per_modality.iter().enumerate() {
                    decisions.push(DecisionRow {
                        epoch,
                        batch: b,
                        modality: m,
                        sigma: d.sigma,
                        delta: d.delta,
                        alpha: d.alpha,
                        in_window: d.in_window,
                        active: d.active,
                    });
                    if d.active {
                        let flat_w = params.flatten_encoder(m);
                        let (penalty, pgrad) =
                            regulation::regulation_grad(&flat_w, snapshots.get(m), d.alpha)?;
                        grads.add_flat_to_encoder(m, &pgrad)?;
                        batch_alpha[m] = d.alpha;
                        batch_active[m] = true;
                        batch_penalty[m] = penalty;
                        if let Some(log) = grad_log.as_mut() {
                            log.regulation_applied = true;
                        }
                    }
                }
            }
            for (s, a) in alpha_sums.iter_mut().zip(&batch_alpha) {
                *s += a;
            }
            for (s, p) in penalty_sums.iter_mut().zip(&batch_penalty) {
                *s += p;
            }

            let applied_grad_sq = grads.total_norm_sq();
            sgd_step(&mut params, &grads, cfg.eta)?;

            if let Some(log) = grad_log.as_mut() {
                let modalities = (0..m_count)
                    .map(|m| {
                        let grad = match &shadow_flat {
                            Some(flats) => flats[m].clone(),
                            None => grads.flatten_encoder(m),
                        };
                        let disp: Vec<f64> = params
                            .flatten_encoder(m)
                            .iter()
                            .zip(snapshots.get(m))
                            .map(|(w, s)| w - s)
                            .collect();
                        ModalityGradRecord {
                            alpha: batch_alpha[m],
                            active: batch_active[m],
                            penalty: batch_penalty[m],
                            disp_sq: norm_sq(&disp),
                            grad,
                        }
                    })
                    .collect();
                log.records.push(GradRecord {
                    epoch: epoch as u32,
                    batch: b as u32,
                    loss: losses.total,
                    task_grad_sq,
                    applied_grad_sq,
                    modalities,
                });
            }
        }

        // Fixed epoch-boundary order: evaluate, finalize traces, snapshot.
        let eval = evaluate_epoch(&params, test_ds).map_err(|e| at_epoch(e, epoch))?;
        let traces = trace_acc.finalize()?;
        history
            .push_epoch(traces.clone(), windows.clone())
            .map_err(|e| at_epoch(e, epoch))?;
        snapshots = SnapshotStore::capture(&params);

        let nb = n_batches as f64;
        rows.push(EpochRow {
            epoch,
            overall_acc: eval.overall,
            per_modality_acc: eval.per_modality,
            traces,
            windows,
            mean_alpha: alpha_sums.iter().map(|s| s / nb).collect(),
            joint_loss: joint_loss_sum / nb,
            unimodal_losses: uni_loss_sums.iter().map(|s| s / nb).collect(),
            penalties: penalty_sums.iter().map(|s| s / nb).collect(),
        });
    }

    Ok(RunResult { rows, decisions, params, history, grad_log })
}

/// Fixed metrics CSV schema. Column order: `run_id,epoch,method,overall_acc`,
/// then per modality `acc_m*`, `trace_m*`, `window_m*`, `mean_alpha_m*`, then
/// `joint_loss`, per modality `unimodal_loss_m*`, per modality `penalty_m*`.
/// Window cells are empty while the flag is undefined (first two epochs).
pub fn metrics_csv(run_id: &str, method: Method, rows: &[EpochRow]) -> String {
    let m_count = rows.first().map_or(0, |r| r.per_modality_acc.len());
    let mut out = String::from("run_id,epoch,method,overall_acc");
    for tag in ["acc", "trace", "window", "mean_alpha"] {
        for m in 0..m_count {
            out.push_str(&format!(",{tag}_m{m}"));
        }
    }
    out.push_str(",joint_loss");
    for m in 0..m_count {
        out.push_str(&format!(",unimodal_loss_m{m}"));
    }
    for m in 0..m_count {
        out.push_str(&format!(",penalty_m{m}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{run_id},{},{}", row.epoch, method.as_str()));
        out.push_str(&format!(",{}", row.overall_acc));
        for v in &row.per_modality_acc {
            out.push_str(&format!(",{v}"));
        }
        for v in &row.traces {
            out.push_str(&format!(",{v}"));
        }
        for w in &row.windows {
            match w {
                Some(flag) => out.push_str(&format!(",{flag}")),
                None => out.push(','),
            }
        }
        for v in &row.mean_alpha {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{}", row.joint_loss));
        for v in &row.unimodal_losses {
            out.push_str(&format!(",{v}"));
        }
        for v in &row.penalties {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Decision log CSV: `epoch,batch,modality,sigma,delta,alpha,in_window,active`.
pub fn decisions_csv(rows: &[DecisionRow]) -> String {
    let mut out = String::from("epoch,batch,modality,sigma,delta,alpha,in_window,active\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch, r.batch, r.modality, r.sigma, r.delta, r.alpha, r.in_window, r.active
        ));
    }
    out
}

/// Parsed metrics file: header plus rows of raw string cells, with typed
/// accessors for the columns consumers need.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMetrics {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ParsedMetrics {
    pub fn n_modalities(&self) -> usize {
        self.header.iter().filter(|h| h.starts_with("acc_m")).count()
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Input(format!("metrics file has no column `{name}`")))
    }

    pub fn f64_at(&self, row: usize, col: usize) -> Result<f64> {
        let cell = &self.rows[row][col];
        cell.parse()
            .map_err(|_| Error::Input(format!("bad numeric cell `{cell}` at row {row}")))
    }

    /// Per-epoch values of one numeric column.
    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        let col = self.column(name)?;
        (0..self.rows.len()).map(|r| self.f64_at(r, col)).collect()
    }

    /// Window flags of one modality (`None` for empty cells).
    pub fn window_column(&self, m: usize) -> Result<Vec<Option<bool>>> {
        let col = self.column(&format!("window_m{m}"))?;
        self.rows
            .iter()
            .map(|row| match row[col].as_str() {
                "" => Ok(None),
                "true" => Ok(Some(true)),
                "false" => Ok(Some(false)),
                other => Err(Error::Input(format!("bad window cell `{other}`"))),
            })
            .collect()
    }
}

/// Parse a metrics CSV written by [`metrics_csv`]. Total over arbitrary
/// text; structural problems become `Input` errors.
pub fn parse_metrics_csv(text: &str) -> Result<ParsedMetrics> {
    let mut lines = text.lines();
    let header_line = lines.next().ok_or_else(|| Error::Input("empty metrics file".into()))?;
    let header: Vec<String> = header_line.split(',').map(|s| s.trim().to_string()).collect();
    if header.len() < 4 || header[0] != "run_id" {
        return Err(Error::Input("not a metrics file (bad header)".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split(',').map(|s| s.to_string()).collect();
        if cells.len() != header.len() {
            return Err(Error::Input(format!(
                "metrics row {} has {} cells, header has {}",
                i + 2,
                cells.len(),
                header.len()
            )));
        }
        rows.push(cells);
    }
    Ok(ParsedMetrics { header, rows })
}
