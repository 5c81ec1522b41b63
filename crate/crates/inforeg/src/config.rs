//! Experiment configuration: one TOML file describing the dataset, the
//! model, the training run, an optional sweep, and output placement.
//!
//! ```toml
//! [dataset]
//! source = "generate"            # or "csv" with train_paths/test_paths
//! seed = 7
//! classes = 4
//! train_samples = 800
//! test_samples = 400
//!
//! [[dataset.modality]]
//! dim = 16
//! informative_dims = 4
//! class_separation = 2.5
//! noise_sigma = 0.4
//!
//! [model]
//! hidden = [16, 16]
//! embed_dim = 8
//! fusion = "concat"              # or "sum"
//!
//! [train]
//! method = "inforeg"             # joint | joint_unimodal | inforeg | inforeg_unimodal
//! epochs = 30
//! batch_size = 64
//! eta = 0.1
//! seed = 0
//! grad_log = "off"               # off | shadow | total
//!
//! [train.regulation]
//! beta = 0.9
//! k = 0.04                       # `inf` structurally disables regulation
//! warmup_epochs = 2
//!
//! [sweep]                        # optional; cross product of whatever lists appear
//! seeds = [0, 1, 2, 3, 4]
//! methods = ["joint", "inforeg"]
//!
//! [output]
//! dir = "out"
//! workers = 1
//! ```
//!
//! Unknown keys are rejected. `unimodal_loss_weight` defaults by method:
//! 0 for the base methods, 1.0 for the starred (`*_unimodal`) variants.
//! `INFOREG_OUT` and `INFOREG_WORKERS` environment variables override the
//! output section; command-line flags override both.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{self, ModalitySpec, MultimodalDataset, Split};
use crate::error::{Error, Result};
use crate::model::{Fusion, ModelConfig};
use crate::numerics::{RngState, Stream};
use crate::regulation::RegulationConfig;
use crate::trainer::{GradLogMode, Method, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModalitySection {
    pub dim: usize,
    pub informative_dims: usize,
    pub class_separation: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modality: Vec<ModalitySection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_paths: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_paths: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub fusion: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegulationSection {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default = "default_warmup")]
    pub warmup_epochs: usize,
}

fn default_beta() -> f64 {
    0.9
}
fn default_k() -> f64 {
    0.04
}
fn default_warmup() -> usize {
    2
}

impl Default for RegulationSection {
    fn default() -> Self {
        RegulationSection { beta: default_beta(), k: default_k(), warmup_epochs: default_warmup() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub method: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unimodal_loss_weight: Option<f64>,
    #[serde(default = "default_grad_log")]
    pub grad_log: String,
    #[serde(default)]
    pub regulation: RegulationSection,
}

fn default_grad_log() -> String {
    "off".into()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_out_dir() -> String {
    "out".into()
}
fn default_workers() -> usize {
    1
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_out_dir(), workers: default_workers() }
    }
}

/// The whole parsed experiment file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

/// One planned run after sweep expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub run_id: String,
    pub method: Method,
    pub seed: u64,
    pub beta: f64,
    pub k: f64,
}

impl ExperimentConfig {
    /// Parse and validate. Every malformed input maps to a config error.
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::from_toml_str(&text)
    }

    /// Canonical form: the validated structure re-serialized with defaults
    /// materialized. Parsing the canonical form yields an equal config.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match self.dataset.source.as_str() {
            "generate" => {
                if self.dataset.modality.is_empty() {
                    return Err(Error::Config("generate source needs [[dataset.modality]] entries".into()));
                }
                if !self.dataset.train_paths.is_empty() || !self.dataset.test_paths.is_empty() {
                    return Err(Error::Config("generate source must not list csv paths".into()));
                }
                let classes = self.dataset.classes.ok_or_else(|| {
                    Error::Config("generate source needs dataset.classes".into())
                })?;
                if classes < 2 {
                    return Err(Error::Config("dataset.classes must be at least 2".into()));
                }
                let train_n = self.dataset.train_samples.unwrap_or(0);
                let test_n = self.dataset.test_samples.unwrap_or(0);
                if train_n < classes || test_n == 0 {
                    return Err(Error::Config(
                        "generate source needs train_samples >= classes and test_samples > 0".into(),
                    ));
                }
                for m in &self.dataset.modality {
                    ModalitySpec {
                        dim: m.dim,
                        informative_dims: m.informative_dims,
                        class_separation: m.class_separation,
                        noise_sigma: m.noise_sigma,
                    }
                    .validate()?;
                }
            }
            "csv" => {
                if self.dataset.train_paths.is_empty() || self.dataset.test_paths.is_empty() {
                    return Err(Error::Config("csv source needs train_paths and test_paths".into()));
                }
                if self.dataset.train_paths.len() != self.dataset.test_paths.len() {
                    return Err(Error::Config("train_paths and test_paths must align per modality".into()));
                }
                if !self.dataset.modality.is_empty()
                    || self.dataset.classes.is_some()
                    || self.dataset.train_samples.is_some()
                    || self.dataset.test_samples.is_some()
                {
                    return Err(Error::Config(
                        "csv source must not carry generator fields (exactly one dataset source)".into(),
                    ));
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "dataset.source must be `generate` or `csv`, got `{other}`"
                )))
            }
        }

        if self.model.hidden.len() != 2 {
            return Err(Error::Config(format!(
                "model.hidden must list exactly the two hidden widths, got {:?}",
                self.model.hidden
            )));
        }
        Fusion::parse(&self.model.fusion)?;
        let _ = Method::parse(&self.train.method)?;
        GradLogMode::parse(&self.train.grad_log)?;
        if let Some(w) = self.train.unimodal_loss_weight {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Config("unimodal_loss_weight must be finite and >= 0".into()));
            }
        }
        if let Some(sweep) = &self.sweep {
            for m in sweep.methods.iter().flatten() {
                Method::parse(m)?;
            }
            let has_empty = sweep.seeds.as_ref().is_some_and(Vec::is_empty)
                || sweep.methods.as_ref().is_some_and(Vec::is_empty)
                || sweep.betas.as_ref().is_some_and(Vec::is_empty)
                || sweep.ks.as_ref().is_some_and(Vec::is_empty);
            if has_empty {
                return Err(Error::Config("sweep lists must be nonempty when present".into()));
            }
        }
        if self.output.workers == 0 {
            return Err(Error::Config("output.workers must be at least 1".into()));
        }
        // Full train-section validation happens per expanded plan, where
        // method-dependent defaults are resolved.
        for plan in self.expand_sweep() {
            self.train_config_for(&plan)?.validate()?;
        }
        Ok(())
    }

    /// The model section as runtime config; class count supplied by the
    /// dataset (generated or inferred from CSV labels).
    pub fn model_config(&self, classes: usize) -> Result<ModelConfig> {
        Ok(ModelConfig {
            hidden: [self.model.hidden[0], self.model.hidden[1]],
            embed_dim: self.model.embed_dim,
            fusion: Fusion::parse(&self.model.fusion)?,
            classes,
        })
    }

    /// Cross product of the sweep lists (falling back to the base train
    /// section for absent dimensions): methods × betas × ks × seeds, seeds
    /// innermost.
    pub fn expand_sweep(&self) -> Vec<RunPlan> {
        let base_method = vec![self.train.method.clone()];
        let base_seed = vec![self.train.seed];
        let base_beta = vec![self.train.regulation.beta];
        let base_k = vec![self.train.regulation.k];
        let (methods, seeds, betas, ks) = match &self.sweep {
            Some(s) => (
                s.methods.clone().unwrap_or(base_method),
                s.seeds.clone().unwrap_or(base_seed),
                s.betas.clone().unwrap_or(base_beta),
                s.ks.clone().unwrap_or(base_k),
            ),
            None => (base_method, base_seed, base_beta, base_k),
        };
        let mut plans = Vec::new();
        for method_name in &methods {
            let method = Method::parse(method_name).expect("validated");
            for &beta in &betas {
                for &k in &ks {
                    for &seed in &seeds {
                        let run_id = format!("{}_b{beta}_k{k}_s{seed}", method.as_str());
                        plans.push(RunPlan { run_id, method, seed, beta, k });
                    }
                }
            }
        }
        plans
    }

    /// Resolve one plan into a full train config, applying the
    /// method-dependent unimodal weight default.
    pub fn train_config_for(&self, plan: &RunPlan) -> Result<TrainConfig> {
        let weight = match self.train.unimodal_loss_weight {
            Some(w) => w,
            None if plan.method.uses_unimodal_loss() => 1.0,
            None => 0.0,
        };
        Ok(TrainConfig {
            method: plan.method,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            eta: self.train.eta,
            seed: plan.seed,
            unimodal_loss_weight: weight,
            regulation: RegulationConfig {
                beta: plan.beta,
                k: plan.k,
                warmup_epochs: self.train.regulation.warmup_epochs,
            },
            grad_log: GradLogMode::parse(&self.train.grad_log)?,
        })
    }

    /// Materialize the datasets, `base_dir` anchoring relative CSV paths.
    pub fn build_datasets(&self, base_dir: &Path) -> Result<(MultimodalDataset, MultimodalDataset)> {
        match self.dataset.source.as_str() {
            "generate" => {
                let specs: Vec<ModalitySpec> = self
                    .dataset
                    .modality
                    .iter()
                    .map(|m| ModalitySpec {
                        dim: m.dim,
                        informative_dims: m.informative_dims,
                        class_separation: m.class_separation,
                        noise_sigma: m.noise_sigma,
                    })
                    .collect();
                let classes = self.dataset.classes.expect("validated");
                let seed = self.dataset.seed.unwrap_or(7);
                let mut train_rng = RngState::stream(seed, Stream::DatasetTrain);
                let mut test_rng = RngState::stream(seed, Stream::DatasetTest);
                let train = datagen::generate(
                    &specs,
                    classes,
                    self.dataset.train_samples.expect("validated"),
                    Split::Train,
                    &mut train_rng,
                )?;
                let test = datagen::generate(
                    &specs,
                    classes,
                    self.dataset.test_samples.expect("validated"),
                    Split::Test,
                    &mut test_rng,
                )?;
                Ok((train, test))
            }
            "csv" => {
                let resolve = |p: &String| -> PathBuf {
                    let path = Path::new(p);
                    if path.is_absolute() {
                        path.to_path_buf()
                    } else {
                        base_dir.join(path)
                    }
                };
                let train_paths: Vec<PathBuf> = self.dataset.train_paths.iter().map(resolve).collect();
                let test_paths: Vec<PathBuf> = self.dataset.test_paths.iter().map(resolve).collect();
                let train = datagen::load_csv(&train_paths, Split::Train)?;
                let test = datagen::load_csv(&test_paths, Split::Test)?;
                if test.dims() != train.dims() {
                    return Err(Error::Config("csv train/test modality dims differ".into()));
                }
                Ok((train, test))
            }
            _ => unreachable!("validated"),
        }
    }
}
