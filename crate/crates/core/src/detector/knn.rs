use serde::{Deserialize, Serialize};

use super::{DetectorError, FeatureVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub train: Vec<FeatureVector>,
    pub k: usize,
}

impl KnnModel {
    pub fn new(train: Vec<FeatureVector>, k: usize) -> Result<Self, DetectorError> {
        if k == 0 || k > train.len() {
            return Err(DetectorError::KOutOfRange { k, n: train.len() });
        }
        Ok(Self { train, k })
    }

    pub fn score(&self, x: &FeatureVector) -> Result<f64, DetectorError> {
        knn_score(&self.train, x, self.k)
    }
}

/// Mean Euclidean distance from `x` to its `k` nearest training points.
pub fn knn_score(trainset: &[FeatureVector], x: &FeatureVector, k: usize) -> Result<f64, DetectorError> {
    if k == 0 || k > trainset.len() {
        return Err(DetectorError::KOutOfRange { k, n: trainset.len() });
    }
    let mut d = Vec::with_capacity(trainset.len());
    for t in trainset {
        if t.len() != x.len() {
            return Err(DetectorError::DimensionMismatch { expected: t.len(), got: x.len() });
        }
        d.push(t.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
    }
    d.sort_by(f64::total_cmp);
    Ok(d[..k].iter().sum::<f64>() / k as f64)
}
