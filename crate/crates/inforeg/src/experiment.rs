//! Run orchestration: execute a config (with sweeps) into an output tree,
//! compare finished runs, emit plot-ready CSVs, and drive the diagnostics.
//!
//! Output layout for one executed config:
//!
//! ```text
//! <out>/
//!   manifest.json            config hash, run list, file content hashes
//!   config.resolved.toml     canonical form of the executed config
//!   dataset/
//!     train_modality_<m>.csv
//!     test_modality_<m>.csv
//!   runs/<run_id>/
//!     run_meta.json
//!     metrics.csv
//!     fisher_traces.csv
//!     checkpoint.json
//!     decisions.csv          regulating methods only
//!     gradlog.bin            when gradient logging is on
//! ```
//!
//! Every file is written deterministically (no timestamps, sorted manifest
//! keys, shortest-round-trip floats), so re-executing a config reproduces
//! every byte and every manifest hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, RunPlan};
use crate::datagen::{self, MultimodalDataset, Split};
use crate::diagnostics;
use crate::error::{Error, Result};
use crate::fisher;
use crate::gradlog::GradLog;
use crate::model::{Checkpoint, LossWeights};
use crate::numerics::{RngState, Stream};
use crate::trainer::{self, Method, ParsedMetrics};

/// FNV-1a 64-bit content hash, rendered as `fnv64:<hex>` in manifests.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn hash_tag(bytes: &[u8]) -> String {
    format!("fnv64:{:016x}", fnv64(bytes))
}

/// Command-line / environment overrides, strongest first: flag, env, config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunMeta {
    pub run_id: String,
    pub method: String,
    pub seed: u64,
    pub beta: f64,
    pub k: f64,
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub fusion: String,
    pub unimodal_loss_weight: f64,
    pub grad_log: String,
    pub n_modalities: usize,
    pub classes: usize,
    pub dataset_hash: String,
    /// Dataset directory relative to the run directory.
    pub dataset_rel: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub runs: Vec<String>,
    /// Path (relative to the output root) → content hash.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug)]
pub struct ExperimentSummary {
    pub out_dir: PathBuf,
    pub run_ids: Vec<String>,
}

fn resolve_out_dir(cfg: &ExperimentConfig, ov: &Overrides) -> PathBuf {
    if let Some(out) = &ov.out {
        return out.clone();
    }
    if let Ok(env_out) = std::env::var("INFOREG_OUT") {
        if !env_out.is_empty() {
            return PathBuf::from(env_out);
        }
    }
    PathBuf::from(&cfg.output.dir)
}

fn resolve_workers(cfg: &ExperimentConfig, ov: &Overrides) -> usize {
    if let Some(w) = ov.workers {
        return w.max(1);
    }
    if let Ok(env_w) = std::env::var("INFOREG_WORKERS") {
        if let Ok(w) = env_w.parse::<usize>() {
            return w.max(1);
        }
    }
    cfg.output.workers.max(1)
}

/// Expand a config into its run plans after applying the seed override
/// (a seed override collapses any seed sweep to that single seed).
pub fn plan(cfg: &ExperimentConfig, ov: &Overrides) -> (ExperimentConfig, Vec<RunPlan>) {
    let mut cfg = cfg.clone();
    if let Some(seed) = ov.seed {
        cfg.train.seed = seed;
        if let Some(sweep) = cfg.sweep.as_mut() {
            sweep.seeds = None;
        }
    }
    let plans = cfg.expand_sweep();
    (cfg, plans)
}

struct RunOutput {
    run_id: String,
    files: Vec<(String, Vec<u8>)>,
}

type RunSlots = Vec<Option<Result<RunOutput>>>;

/// Execute every planned run of a config and write the output tree.
pub fn execute(cfg: &ExperimentConfig, config_dir: &Path, ov: &Overrides) -> Result<ExperimentSummary> {
    let (cfg, plans) = plan(cfg, ov);
    let out_dir = resolve_out_dir(&cfg, ov);
    let workers = resolve_workers(&cfg, ov).min(plans.len().max(1));

    let (train_ds, test_ds) = cfg.build_datasets(config_dir)?;
    let model_cfg = cfg.model_config(train_ds.classes())?;

    std::fs::create_dir_all(out_dir.join("runs"))?;
    let dataset_dir = out_dir.join("dataset");
    write_dataset(&train_ds, &dataset_dir, "train")?;
    write_dataset(&test_ds, &dataset_dir, "test")?;
    let dataset_hash = dataset_hash(&dataset_dir, train_ds.n_modalities())?;

    let canonical = cfg.to_canonical_toml();
    std::fs::write(out_dir.join("config.resolved.toml"), &canonical)?;

    // Bounded pool: plans are claimed by index so outputs stay in plan order.
    let next = AtomicUsize::new(0);
    let outputs: Mutex<RunSlots> = Mutex::new((0..plans.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= plans.len() {
                    break;
                }
                let result = run_one(&cfg, &plans[i], &model_cfg, &train_ds, &test_ds, &dataset_hash);
                outputs.lock().expect("pool lock").insert_replace(i, result);
            });
        }
    });

    let mut manifest_files: BTreeMap<String, String> = BTreeMap::new();
    manifest_files.insert("config.resolved.toml".into(), hash_tag(canonical.as_bytes()));
    for m in 0..train_ds.n_modalities() {
        for split in ["train", "test"] {
            let rel = format!("dataset/{split}_modality_{m}.csv");
            let bytes = std::fs::read(out_dir.join(&rel))?;
            manifest_files.insert(rel, hash_tag(&bytes));
        }
    }

    let mut run_ids = Vec::with_capacity(plans.len());
    let collected = outputs.into_inner().expect("pool lock");
    for slot in collected {
        let output = slot.expect("every plan executed")?;
        let run_dir = out_dir.join("runs").join(&output.run_id);
        std::fs::create_dir_all(&run_dir)?;
        for (name, bytes) in &output.files {
            std::fs::write(run_dir.join(name), bytes)?;
            manifest_files.insert(format!("runs/{}/{name}", output.run_id), hash_tag(bytes));
        }
        run_ids.push(output.run_id);
    }

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash_tag(canonical.as_bytes()),
        runs: run_ids.clone(),
        files: manifest_files,
    };
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(out_dir.join("manifest.json"), manifest_json)?;

    Ok(ExperimentSummary { out_dir, run_ids })
}

trait InsertReplace<T> {
    fn insert_replace(&mut self, i: usize, value: T);
}

impl<T> InsertReplace<T> for Vec<Option<T>> {
    fn insert_replace(&mut self, i: usize, value: T) {
        self[i] = Some(value);
    }
}

fn write_dataset(ds: &MultimodalDataset, dir: &Path, prefix: &str) -> Result<()> {
    let paths = datagen::save_csv(ds, dir)?;
    for (m, path) in paths.iter().enumerate() {
        let renamed = dir.join(format!("{prefix}_modality_{m}.csv"));
        std::fs::rename(path, renamed)?;
    }
    Ok(())
}

fn dataset_hash(dir: &Path, n_modalities: usize) -> Result<String> {
    let mut all = Vec::new();
    for split in ["train", "test"] {
        for m in 0..n_modalities {
            all.extend_from_slice(&std::fs::read(dir.join(format!("{split}_modality_{m}.csv")))?);
        }
    }
    Ok(hash_tag(&all))
}

fn run_one(
    cfg: &ExperimentConfig,
    plan: &RunPlan,
    model_cfg: &crate::model::ModelConfig,
    train_ds: &MultimodalDataset,
    test_ds: &MultimodalDataset,
    dataset_hash: &str,
) -> Result<RunOutput> {
    let train_cfg = cfg.train_config_for(plan)?;
    let result = trainer::train(&train_cfg, model_cfg, train_ds, test_ds)?;

    let meta = RunMeta {
        run_id: plan.run_id.clone(),
        method: plan.method.as_str().to_string(),
        seed: plan.seed,
        beta: plan.beta,
        k: plan.k,
        eta: train_cfg.eta,
        epochs: train_cfg.epochs,
        batch_size: train_cfg.batch_size,
        fusion: model_cfg.fusion.as_str().to_string(),
        unimodal_loss_weight: train_cfg.unimodal_loss_weight,
        grad_log: train_cfg.grad_log.as_str().to_string(),
        n_modalities: train_ds.n_modalities(),
        classes: train_ds.classes(),
        dataset_hash: dataset_hash.to_string(),
        dataset_rel: "../../dataset".to_string(),
    };

    let mut files: Vec<(String, Vec<u8>)> = vec![(
        "run_meta.json".into(),
        serde_json::to_string_pretty(&meta).expect("meta serializes").into_bytes(),
    )];
    files.push((
        "metrics.csv".into(),
        trainer::metrics_csv(&plan.run_id, plan.method, &result.rows).into_bytes(),
    ));
    files.push(("fisher_traces.csv".into(), fisher::traces_csv(&result.history).into_bytes()));
    files.push((
        "checkpoint.json".into(),
        Checkpoint::from_params(&result.params).to_json().into_bytes(),
    ));
    if plan.method.regulates() {
        files.push(("decisions.csv".into(), trainer::decisions_csv(&result.decisions).into_bytes()));
    }
    if let Some(log) = &result.grad_log {
        files.push(("gradlog.bin".into(), log.encode()));
    }
    Ok(RunOutput { run_id: plan.run_id.clone(), files })
}

// ---------------------------------------------------------------------------
// compare

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub run_id: String,
    pub method: String,
    pub seed: Option<u64>,
    pub beta: f64,
    pub k: f64,
    pub overall: f64,
    pub per_modality: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
    /// Median rows per (method, beta, k) group, seeds pooled.
    pub medians: Vec<CompareRow>,
}

pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if !n.is_multiple_of(2) {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn median_of(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite metrics"));
    median(&values)
}

/// Final-epoch metrics of finished runs, side by side, plus per-group
/// medians. All runs must come from the same dataset.
pub fn compare(run_dirs: &[PathBuf]) -> Result<CompareTable> {
    if run_dirs.len() < 2 {
        return Err(Error::Input("compare needs at least two run directories".into()));
    }
    let mut rows = Vec::new();
    let mut dataset_hashes = Vec::new();
    for dir in run_dirs {
        let meta = read_meta(dir)?;
        let metrics = read_metrics(dir)?;
        let last = metrics
            .rows
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::Input(format!("{}: metrics file has no rows", dir.display())))?;
        let overall = metrics.f64_at(last, metrics.column("overall_acc")?)?;
        let per_modality = (0..metrics.n_modalities())
            .map(|m| metrics.f64_at(last, metrics.column(&format!("acc_m{m}"))?))
            .collect::<Result<Vec<f64>>>()?;
        dataset_hashes.push(meta.dataset_hash.clone());
        rows.push(CompareRow {
            run_id: meta.run_id,
            method: meta.method,
            seed: Some(meta.seed),
            beta: meta.beta,
            k: meta.k,
            overall,
            per_modality,
        });
    }
    if dataset_hashes.windows(2).any(|p| p[0] != p[1]) {
        return Err(Error::Input("runs were trained on different datasets".into()));
    }

    // Group by (method, beta, k) for the medians, insertion-ordered.
    type GroupKey = (String, u64, u64);
    let mut groups: Vec<(GroupKey, Vec<&CompareRow>)> = Vec::new();
    for row in &rows {
        let key = (row.method.clone(), row.beta.to_bits(), row.k.to_bits());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    let medians = groups
        .into_iter()
        .map(|(_, group)| {
            let m_count = group[0].per_modality.len();
            CompareRow {
                run_id: "median".into(),
                method: group[0].method.clone(),
                seed: None,
                beta: group[0].beta,
                k: group[0].k,
                overall: median_of(group.iter().map(|r| r.overall).collect()),
                per_modality: (0..m_count)
                    .map(|m| median_of(group.iter().map(|r| r.per_modality[m]).collect()))
                    .collect(),
            }
        })
        .collect();
    Ok(CompareTable { rows, medians })
}

impl CompareTable {
    pub fn to_csv(&self) -> String {
        let m_count = self.rows.first().map_or(0, |r| r.per_modality.len());
        let mut out = String::from("run_id,method,seed,beta,k,overall_acc");
        for m in 0..m_count {
            out.push_str(&format!(",acc_m{m}"));
        }
        out.push('\n');
        for row in self.rows.iter().chain(&self.medians) {
            let seed = row.seed.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{seed},{},{},{}",
                row.run_id, row.method, row.beta, row.k, row.overall
            ));
            for v in &row.per_modality {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn render_text(&self) -> String {
        let m_count = self.rows.first().map_or(0, |r| r.per_modality.len());
        let mut out = String::new();
        out.push_str(&format!("{:<28} {:<18} {:>6} {:>8}", "run", "method", "seed", "overall"));
        for m in 0..m_count {
            out.push_str(&format!(" {:>8}", format!("acc_m{m}")));
        }
        out.push('\n');
        for row in self.rows.iter().chain(&self.medians) {
            let seed = row.seed.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:<28} {:<18} {:>6} {:>8.4}",
                row.run_id, row.method, seed, row.overall
            ));
            for v in &row.per_modality {
                out.push_str(&format!(" {v:>8.4}"));
            }
            out.push('\n');
        }
        out
    }
}

fn read_meta(run_dir: &Path) -> Result<RunMeta> {
    let path = run_dir.join("run_meta.json");
    let bytes = std::fs::read(&path)
        .map_err(|e| Error::Input(format!("{} is not a run directory: {e}", run_dir.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Input(format!("bad run_meta.json: {e}")))
}

fn read_metrics(run_dir: &Path) -> Result<ParsedMetrics> {
    let text = std::fs::read_to_string(run_dir.join("metrics.csv"))
        .map_err(|e| Error::Input(format!("{}: missing metrics.csv: {e}", run_dir.display())))?;
    trainer::parse_metrics_csv(&text)
}

// ---------------------------------------------------------------------------
// plotdata

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Traces,
    Accuracy,
    Cosine,
    Gap,
}

impl PlotKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "traces" => Ok(PlotKind::Traces),
            "accuracy" => Ok(PlotKind::Accuracy),
            "cosine" => Ok(PlotKind::Cosine),
            "gap" => Ok(PlotKind::Gap),
            other => Err(Error::Input(format!(
                "unknown plot kind `{other}` (traces|accuracy|cosine|gap)"
            ))),
        }
    }
}

/// Tidy long-format plot data (`series,x,y`) for one finished run.
pub fn plotdata(run_dir: &Path, kind: PlotKind) -> Result<String> {
    let mut out = String::from("series,x,y\n");
    match kind {
        PlotKind::Traces => {
            let metrics = read_metrics(run_dir)?;
            for m in 0..metrics.n_modalities() {
                for (t, v) in metrics.f64_column(&format!("trace_m{m}"))?.iter().enumerate() {
                    out.push_str(&format!("trace_m{m},{t},{v}\n"));
                }
            }
        }
        PlotKind::Accuracy => {
            let metrics = read_metrics(run_dir)?;
            for (t, v) in metrics.f64_column("overall_acc")?.iter().enumerate() {
                out.push_str(&format!("overall,{t},{v}\n"));
            }
            for m in 0..metrics.n_modalities() {
                for (t, v) in metrics.f64_column(&format!("acc_m{m}"))?.iter().enumerate() {
                    out.push_str(&format!("acc_m{m},{t},{v}\n"));
                }
            }
        }
        PlotKind::Gap => {
            let metrics = read_metrics(run_dir)?;
            let m_count = metrics.n_modalities();
            let traces: Vec<Vec<f64>> = (0..m_count)
                .map(|m| metrics.f64_column(&format!("trace_m{m}")))
                .collect::<Result<_>>()?;
            for i in 0..m_count {
                for j in i + 1..m_count {
                    for (t, (a, b)) in traces[i].iter().zip(&traces[j]).enumerate() {
                        out.push_str(&format!("gap_m{i}_m{j},{t},{}\n", a - b));
                    }
                }
            }
        }
        PlotKind::Cosine => {
            let log = load_gradlog(run_dir)?;
            for (epoch, records) in log.epochs() {
                if records.len() < 2 {
                    continue;
                }
                for m in 0..log.n_modalities {
                    let grads: Vec<Vec<f64>> =
                        records.iter().map(|r| r.modalities[m].grad.clone()).collect();
                    let matrix = fisher::batch_cosine_matrix(&grads)?;
                    for i in 0..matrix.n() {
                        for j in 0..matrix.n() {
                            if let Some(c) = matrix.at(i, j) {
                                out.push_str(&format!("m{m}_t{epoch}_r{i},{j},{c}\n"));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn load_gradlog(run_dir: &Path) -> Result<GradLog> {
    let path = run_dir.join("gradlog.bin");
    if !path.exists() {
        return Err(Error::Input(
            "this run has no gradient log; rerun with train.grad_log = \"shadow\" (or \"total\")"
                .into(),
        ));
    }
    GradLog::load(&path)
}

// ---------------------------------------------------------------------------
// diagnose

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnoseCheck {
    Orthogonality,
    Equivalence,
    Descent,
}

impl DiagnoseCheck {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "orthogonality" => Ok(DiagnoseCheck::Orthogonality),
            "equivalence" => Ok(DiagnoseCheck::Equivalence),
            "descent" => Ok(DiagnoseCheck::Descent),
            other => Err(Error::Input(format!(
                "unknown check `{other}` (orthogonality|equivalence|descent)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OrthogonalitySummary {
    pub synthetic: Vec<diagnostics::OrthogonalityReport>,
    /// Mean |cos| of logged real gradients per (modality, epoch), when a
    /// gradient log exists.
    pub real_gradient_mean_abs_cos: Vec<(usize, u32, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceSummary {
    pub max_identity_rel_err: f64,
    pub median_cross_ratio_all: Option<f64>,
    pub median_cross_ratio_window: Option<f64>,
    pub window_records: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DescentSummary {
    pub l_estimate: f64,
    pub satisfaction_fraction: f64,
    pub regulated_batches: usize,
    pub bound_violations: usize,
    pub max_bound_excess: f64,
}

/// Run one diagnostic over a finished run directory, writing a JSON summary
/// (and a CSV of rows where applicable) into the run directory. Returns the
/// JSON summary text.
pub fn diagnose(run_dir: &Path, check: DiagnoseCheck) -> Result<String> {
    match check {
        DiagnoseCheck::Orthogonality => {
            let meta = read_meta(run_dir)?;
            let params = Checkpoint::load(&run_dir.join("checkpoint.json"))?.into_params()?;
            let mut dims: Vec<usize> =
                (0..meta.n_modalities).map(|m| params.encoder_param_count(m)).collect();
            dims.sort_unstable();
            dims.dedup();
            let mut rng = RngState::stream(meta.seed, Stream::Diagnostics);
            let synthetic = dims
                .iter()
                .map(|&n| diagnostics::orthogonality_mc(n, 200, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let mut real = Vec::new();
            if let Ok(log) = load_gradlog(run_dir) {
                for (epoch, records) in log.epochs() {
                    if records.len() < 2 {
                        continue;
                    }
                    for m in 0..log.n_modalities {
                        if let Ok(cosines) = diagnostics::logged_gradient_cosines(&log, m, epoch) {
                            let mean = cosines.iter().sum::<f64>() / cosines.len() as f64;
                            real.push((m, epoch, mean));
                        }
                    }
                }
            }
            let summary = OrthogonalitySummary { synthetic, real_gradient_mean_abs_cos: real };
            let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
            std::fs::write(run_dir.join("diag_orthogonality.json"), &json)?;
            Ok(json)
        }
        DiagnoseCheck::Equivalence => {
            let log = load_gradlog(run_dir)?;
            let report = diagnostics::penalty_equivalence(&log)?;
            let metrics = read_metrics(run_dir)?;
            let windows: Vec<Vec<Option<bool>>> = (0..metrics.n_modalities())
                .map(|m| metrics.window_column(m))
                .collect::<Result<_>>()?;
            let in_window = |epoch: u32, modality: usize| -> bool {
                windows
                    .get(modality)
                    .and_then(|col| col.get(epoch as usize))
                    .copied()
                    .flatten()
                    .unwrap_or(false)
            };
            let window_records = report
                .rows
                .iter()
                .filter(|r| in_window(r.epoch, r.modality))
                .count();
            let summary = EquivalenceSummary {
                max_identity_rel_err: report.max_identity_rel_err,
                median_cross_ratio_all: report.median_cross_ratio(),
                median_cross_ratio_window: report.median_cross_ratio_in(&in_window),
                window_records,
            };
            std::fs::write(run_dir.join("diag_equivalence.csv"), diagnostics::equivalence_csv(&report))?;
            let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
            std::fs::write(run_dir.join("diag_equivalence.json"), &json)?;
            Ok(json)
        }
        DiagnoseCheck::Descent => {
            let meta = read_meta(run_dir)?;
            let log = load_gradlog(run_dir)?;
            let params = Checkpoint::load(&run_dir.join("checkpoint.json"))?.into_params()?;
            let dataset_dir = run_dir.join(&meta.dataset_rel);
            let train_paths: Vec<PathBuf> = (0..meta.n_modalities)
                .map(|m| dataset_dir.join(format!("train_modality_{m}.csv")))
                .collect();
            let train_ds = datagen::load_csv(&train_paths, Split::Train)?;
            let weights = LossWeights { joint: 1.0, unimodal: meta.unimodal_loss_weight };
            let l_estimate = diagnostics::estimate_lipschitz(
                &params,
                &train_ds,
                &weights,
                4,
                meta.batch_size.min(train_ds.len()),
                1e-3,
            )?;
            let report = diagnostics::descent_check(&log, l_estimate)?;
            let regulated: Vec<_> = report.bound_rows.iter().filter(|r| {
                log.records
                    .iter()
                    .any(|rec| rec.epoch == r.epoch && rec.batch == r.batch && rec.modalities[r.modality].active)
            }).collect();
            let violations = regulated.iter().filter(|r| !r.holds).count();
            let summary = DescentSummary {
                l_estimate,
                satisfaction_fraction: report.satisfaction_fraction,
                regulated_batches: regulated.len(),
                bound_violations: violations,
                max_bound_excess: report.max_bound_excess,
            };
            std::fs::write(run_dir.join("diag_descent.csv"), diagnostics::descent_csv(&report))?;
            let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
            std::fs::write(run_dir.join("diag_descent.json"), &json)?;
            Ok(json)
        }
    }
}

/// Read back a run's metrics (public so the comparison surface and the
/// acceptance suite share one reader).
pub fn run_metrics(run_dir: &Path) -> Result<ParsedMetrics> {
    read_metrics(run_dir)
}

/// Read back a run's metadata.
pub fn run_meta(run_dir: &Path) -> Result<RunMeta> {
    read_meta(run_dir)
}

/// Methods whose runs carry a decision log.
pub fn method_has_decisions(method: &str) -> bool {
    Method::parse(method).map(Method::regulates).unwrap_or(false)
}
