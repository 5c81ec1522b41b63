//! Shared fixtures for the integration suites: the frozen strong/weak
//! benchmark and the high-dimensional shadow-logged run.

// Not every test target uses every fixture.
#![allow(dead_code)]

use inforeg::datagen::{generate, ModalitySpec, MultimodalDataset, Split};
use inforeg::model::{Fusion, ModelConfig};
use inforeg::numerics::{RngState, Stream};
use inforeg::regulation::RegulationConfig;
use inforeg::trainer::{GradLogMode, Method, TrainConfig};

/// The strong/weak benchmark matching `configs/strongweak.toml`: modality 0
/// dominates joint training, modality 1 is the weak one.
pub const STRONGWEAK_DATA_SEED: u64 = 7;
pub const STRONGWEAK_EPOCHS: usize = 20;

pub fn strongweak_specs() -> Vec<ModalitySpec> {
    vec![
        ModalitySpec { dim: 12, informative_dims: 4, class_separation: 2.2, noise_sigma: 0.6 },
        ModalitySpec { dim: 12, informative_dims: 4, class_separation: 1.2, noise_sigma: 0.85 },
    ]
}

pub fn strongweak_datasets() -> (MultimodalDataset, MultimodalDataset) {
    let specs = strongweak_specs();
    let mut tr = RngState::stream(STRONGWEAK_DATA_SEED, Stream::DatasetTrain);
    let mut te = RngState::stream(STRONGWEAK_DATA_SEED, Stream::DatasetTest);
    let train = generate(&specs, 4, 960, Split::Train, &mut tr).expect("train set");
    let test = generate(&specs, 4, 320, Split::Test, &mut te).expect("test set");
    (train, test)
}

pub fn strongweak_model() -> ModelConfig {
    ModelConfig { hidden: [16, 16], embed_dim: 8, fusion: Fusion::Concat, classes: 4 }
}

pub fn strongweak_train(method: Method, epochs: usize, seed: u64, grad_log: GradLogMode) -> TrainConfig {
    TrainConfig {
        method,
        epochs,
        batch_size: 16,
        eta: 0.02,
        seed,
        unimodal_loss_weight: 0.0,
        regulation: RegulationConfig { beta: 0.9, k: 0.04, warmup_epochs: 2 },
        grad_log,
    }
}

/// The high-dimensional (≥ 10⁴ encoder parameters) shadow-logged run
/// matching `configs/equivalence.toml`.
pub fn highdim_datasets() -> (MultimodalDataset, MultimodalDataset) {
    let specs = vec![
        ModalitySpec { dim: 48, informative_dims: 4, class_separation: 0.4, noise_sigma: 2.0 },
        ModalitySpec { dim: 48, informative_dims: 4, class_separation: 0.3, noise_sigma: 2.0 },
    ];
    let mut tr = RngState::stream(21, Stream::DatasetTrain);
    let mut te = RngState::stream(21, Stream::DatasetTest);
    let train = generate(&specs, 4, 256, Split::Train, &mut tr).expect("train set");
    let test = generate(&specs, 4, 128, Split::Test, &mut te).expect("test set");
    (train, test)
}

pub fn highdim_model() -> ModelConfig {
    ModelConfig { hidden: [128, 128], embed_dim: 16, fusion: Fusion::Concat, classes: 4 }
}

pub fn highdim_train(grad_log: GradLogMode) -> TrainConfig {
    TrainConfig {
        method: Method::Joint,
        epochs: 10,
        batch_size: 64,
        eta: 0.05,
        seed: 0,
        unimodal_loss_weight: 0.0,
        regulation: RegulationConfig::default(),
        grad_log,
    }
}

pub fn median(mut values: Vec<f64>) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = values.len();
    if !n.is_multiple_of(2) {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
