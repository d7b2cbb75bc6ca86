//! Interference detectors.
//!
//! The main detector is a Z-score-refined deep SVDD: features are
//! standardised with scalar statistics (pooled over the training set while
//! learning, per sample at test time) and mapped by a bias-free MLP; the
//! squared distance to the learned centre is the anomaly score. One-class
//! SVM and k-NN scorers serve as baselines.

mod knn;
mod mlp;
mod ocsvm;
mod svdd;
mod trigger;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{ComplexMatrix, C64};

pub use knn::{knn_score, KnnModel};
pub use mlp::{mlp_forward, svdd_objective_and_gradient, Activation, MlpParams, ObjectiveAndGradient};
pub use ocsvm::{median_bandwidth, ocsvm_score, ocsvm_train, rbf_kernel, OcSvmConfig, OcSvmModel};
pub use svdd::{
    calibrate_threshold, nearest_rank_quantile, svdd_score, svdd_train, Normalization, SvddModel, TrainConfig, TrainReport,
    FULL_BATCH_LIMIT,
};
pub use trigger::{trigger, Phase, TriggerThresholds};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("inconsistent dimensions: {0}")]
    InconsistentDimensions(String),
    #[error("data has (near) zero spread, std = {0:e}")]
    ConstantData(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training diverged (loss {0})")]
    NonFiniteLoss(f64),
    #[error("solver did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("k = {k} outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Real-valued detector input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for FeatureVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Flattens per-subcarrier estimates into one real vector: subcarrier-major,
/// then `vec()` order inside each estimate (antenna-minor), each complex entry
/// written as `re, im`.
pub fn featurize(channel_estimates: &[ComplexMatrix]) -> Result<FeatureVector, DetectorError> {
    let Some(first) = channel_estimates.first() else {
        return Ok(FeatureVector(Vec::new()));
    };
    let shape = (first.rows(), first.cols());
    let mut values = Vec::with_capacity(2 * shape.0 * shape.1 * channel_estimates.len());
    for (m, h) in channel_estimates.iter().enumerate() {
        if (h.rows(), h.cols()) != shape {
            return Err(DetectorError::InconsistentDimensions(format!(
                "estimate {m} is {}x{}, expected {}x{}",
                h.rows(),
                h.cols(),
                shape.0,
                shape.1
            )));
        }
        for z in h.vec() {
            values.push(z.re);
            values.push(z.im);
        }
    }
    Ok(FeatureVector(values))
}

/// [`featurize`] for the common case of one effective channel vector per subcarrier.
pub fn featurize_vectors(estimates: &[Vec<C64>]) -> Result<FeatureVector, DetectorError> {
    let n = estimates.first().map_or(0, Vec::len);
    let mut values = Vec::with_capacity(2 * n * estimates.len());
    for (m, h) in estimates.iter().enumerate() {
        if h.len() != n {
            return Err(DetectorError::InconsistentDimensions(format!("estimate {m} has {} antennas, expected {n}", h.len())));
        }
        for z in h {
            values.push(z.re);
            values.push(z.im);
        }
    }
    Ok(FeatureVector(values))
}

/// Scalar mean and (population) standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: f64,
    pub std: f64,
}

/// Smallest standard deviation accepted as non-constant.
pub const MIN_STD: f64 = 1e-12;

fn pooled_stats<'a>(values: impl Iterator<Item = &'a [f64]> + Clone) -> Result<NormalizationStats, DetectorError> {
    let count: usize = values.clone().map(<[f64]>::len).sum();
    if count == 0 {
        return Err(DetectorError::EmptyDataset);
    }
    let n = count as f64;
    let mean = values.clone().flat_map(|v| v.iter()).sum::<f64>() / n;
    let var = values.flat_map(|v| v.iter()).map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std >= MIN_STD * mean.abs().max(1.0)) {
        return Err(DetectorError::ConstantData(std));
    }
    Ok(NormalizationStats { mean, std })
}

/// Pools every entry of every vector and returns its scalar mean and std.
pub fn zscore_fit(dataset: &[FeatureVector]) -> Result<NormalizationStats, DetectorError> {
    pooled_stats(dataset.iter().map(FeatureVector::as_slice))
}

/// Statistics of a single sample (test-phase normalisation).
pub fn zscore_sample_stats(x: &FeatureVector) -> Result<NormalizationStats, DetectorError> {
    pooled_stats(std::iter::once(x.as_slice()))
}

/// `(x - mean) / std` elementwise.
pub fn zscore_apply(stats: &NormalizationStats, x: &FeatureVector) -> FeatureVector {
    FeatureVector(x.iter().map(|v| (v - stats.mean) / stats.std).collect())
}

/// Test-mode Z-score: statistics come from `x` itself.
pub fn zscore_apply_per_sample(x: &FeatureVector) -> Result<FeatureVector, DetectorError> {
    Ok(zscore_apply(&zscore_sample_stats(x)?, x))
}
