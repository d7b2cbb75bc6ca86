use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::mlp::{mlp_forward, svdd_objective_and_gradient, MlpParams};
use super::{zscore_apply, zscore_apply_per_sample, zscore_fit, DetectorError, FeatureVector, NormalizationStats};
use crate::random::rng_from_seed;

/// Feature standardisation applied before the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Pooled training statistics while learning, per-sample statistics when scoring.
    #[default]
    ZScore,
    /// Raw features everywhere.
    None,
}

/// Full-batch training is used when the set has at most this many samples
/// and `batch_size` is zero.
pub const FULL_BATCH_LIMIT: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Zero selects full batch up to [`FULL_BATCH_LIMIT`] samples, else that many per step.
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_dims: Vec<usize>,
    pub normalization: Normalization,
    pub threshold_quantile: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 1e-3,
            weight_decay: 1e-3,
            batch_size: 0,
            seed: 0,
            hidden_dims: vec![64, 32, 16],
            normalization: Normalization::ZScore,
            threshold_quantile: 0.95,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: &str| Err(DetectorError::InvalidConfig(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.hidden_dims.contains(&0) {
            return bad("hidden dims must be positive");
        }
        if !(self.threshold_quantile > 0.0 && self.threshold_quantile <= 1.0) {
            return bad("threshold_quantile must lie in (0, 1]");
        }
        Ok(())
    }

    fn effective_batch(&self, n: usize) -> usize {
        match self.batch_size {
            0 if n <= FULL_BATCH_LIMIT => n,
            0 => FULL_BATCH_LIMIT,
            b => b.min(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvddModel {
    pub params: MlpParams,
    pub center: Vec<f64>,
    pub threshold: f64,
    /// Pooled training statistics; `None` when trained on raw features.
    pub train_stats: Option<NormalizationStats>,
    pub normalization: Normalization,
    pub config: TrainConfig,
}

/// Per-epoch diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    /// Full-set objective after each epoch's recentring.
    pub epoch_loss: Vec<f64>,
    /// Mean per-dimension variance of the training embeddings after each epoch.
    pub embedding_variance: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.epoch_loss.last().copied().unwrap_or(self.initial_loss)
    }
}

fn mean_embedding(params: &MlpParams, data: &[FeatureVector]) -> Result<(Vec<f64>, f64), DetectorError> {
    let mut sum = vec![0.0; params.output_dim()];
    let mut embeddings = Vec::with_capacity(data.len());
    for x in data {
        let e = mlp_forward(params, x)?;
        for (s, v) in sum.iter_mut().zip(&e) {
            *s += v;
        }
        embeddings.push(e);
    }
    let n = data.len() as f64;
    let center: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
    let var = embeddings
        .iter()
        .flat_map(|e| e.iter().zip(&center).map(|(v, c)| (v - c) * (v - c)))
        .sum::<f64>()
        / (n * center.len() as f64);
    Ok((center, var))
}

/// Deep SVDD training: gradient descent on the hypersphere objective with the
/// centre reset to the mean embedding after every epoch.
pub fn svdd_train(trainset: &[FeatureVector], cfg: &TrainConfig) -> Result<(SvddModel, TrainReport), DetectorError> {
    cfg.validate()?;
    let first = trainset.first().ok_or(DetectorError::EmptyDataset)?;
    let dim = first.len();
    if let Some(bad) = trainset.iter().find(|x| x.len() != dim) {
        return Err(DetectorError::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let (train_stats, data) = match cfg.normalization {
        Normalization::ZScore => {
            let stats = zscore_fit(trainset)?;
            (Some(stats), trainset.iter().map(|x| zscore_apply(&stats, x)).collect::<Vec<_>>())
        }
        Normalization::None => (None, trainset.to_vec()),
    };

    let mut rng = rng_from_seed(cfg.seed);
    let mut dims = vec![dim];
    dims.extend_from_slice(&cfg.hidden_dims);
    let mut params = MlpParams::glorot(dims, &mut rng)?;
    let (mut center, _) = mean_embedding(&params, &data)?;
    let initial_loss = svdd_objective_and_gradient(&params, &center, &data, cfg.weight_decay)?.loss;

    let batch = cfg.effective_batch(data.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport { initial_loss, epoch_loss: Vec::with_capacity(cfg.epochs), embedding_variance: Vec::with_capacity(cfg.epochs) };
    for _ in 0..cfg.epochs {
        if batch < data.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let mb: Vec<FeatureVector> = if batch == data.len() { data.clone() } else { chunk.iter().map(|&i| data[i].clone()).collect() };
            let og = svdd_objective_and_gradient(&params, &center, &mb, cfg.weight_decay)?;
            if !og.loss.is_finite() {
                return Err(DetectorError::NonFiniteLoss(og.loss));
            }
            for (w, g) in params.weights.iter_mut().zip(&og.gradients) {
                for (wi, gi) in w.iter_mut().zip(g) {
                    *wi -= cfg.learning_rate * gi;
                }
            }
        }
        let (c, var) = mean_embedding(&params, &data)?;
        center = c;
        let loss = svdd_objective_and_gradient(&params, &center, &data, cfg.weight_decay)?.loss;
        if !loss.is_finite() {
            return Err(DetectorError::NonFiniteLoss(loss));
        }
        report.epoch_loss.push(loss);
        report.embedding_variance.push(var);
    }

    let model = SvddModel { params, center, threshold: 0.0, train_stats, normalization: cfg.normalization, config: cfg.clone() };
    Ok((model, report))
}

/// Squared distance of the embedding of an already-normalised `x` to the centre.
pub fn svdd_score(model: &SvddModel, x: &FeatureVector) -> Result<f64, DetectorError> {
    let e = mlp_forward(&model.params, x)?;
    Ok(e.iter().zip(&model.center).map(|(a, c)| (a - c) * (a - c)).sum())
}

/// Nearest-rank empirical quantile: the smallest value with at least
/// `ceil(q * n)` values at or below it.
pub fn nearest_rank_quantile(values: &[f64], q: f64) -> Result<f64, DetectorError> {
    if values.is_empty() {
        return Err(DetectorError::EmptyDataset);
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(DetectorError::InvalidConfig(format!("quantile {q} outside (0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

/// Sets `model.threshold` to the `quantile` of the training scores, each
/// sample prepared exactly as at test time, and returns it.
pub fn calibrate_threshold(model: &mut SvddModel, trainset: &[FeatureVector], quantile: f64) -> Result<f64, DetectorError> {
    let scores = trainset.iter().map(|x| model.score_raw(x)).collect::<Result<Vec<_>, _>>()?;
    let theta = nearest_rank_quantile(&scores, quantile)?.max(0.0);
    model.threshold = theta;
    Ok(theta)
}

impl SvddModel {
    /// Applies the test-phase normalisation to raw features.
    pub fn prepare(&self, x: &FeatureVector) -> Result<FeatureVector, DetectorError> {
        match self.normalization {
            Normalization::ZScore => zscore_apply_per_sample(x),
            Normalization::None => Ok(x.clone()),
        }
    }

    /// Anomaly score of raw features.
    pub fn score_raw(&self, x: &FeatureVector) -> Result<f64, DetectorError> {
        svdd_score(self, &self.prepare(x)?)
    }

    /// `score > threshold`.
    pub fn is_anomalous(&self, x: &FeatureVector) -> Result<bool, DetectorError> {
        Ok(self.score_raw(x)? > self.threshold)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, DetectorError> {
        let m: SvddModel = serde_json::from_str(s).map_err(|e| DetectorError::InvalidConfig(format!("model JSON: {e}")))?;
        m.params.validate()?;
        if m.center.len() != m.params.output_dim() {
            return Err(DetectorError::DimensionMismatch { expected: m.params.output_dim(), got: m.center.len() });
        }
        if !(m.threshold >= 0.0) {
            return Err(DetectorError::InvalidConfig(format!("threshold {} is negative", m.threshold)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, DetectorError> {
        let s = std::fs::read_to_string(path).map_err(|e| DetectorError::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }
}
