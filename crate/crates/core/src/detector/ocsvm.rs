use serde::{Deserialize, Serialize};

use super::{DetectorError, FeatureVector};

/// KKT violation tolerance of the SMO solver.
pub const KKT_TOL: f64 = 1e-6;
pub const MAX_SMO_ITERATIONS: usize = 1_000_000;
const TAU: f64 = 1e-12;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(-||a - b||^2 / (2 bw^2))`.
pub fn rbf_kernel(a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
    (-squared_distance(a, b) / (2.0 * bandwidth * bandwidth)).exp()
}

/// Square root of the median pairwise squared distance.
pub fn median_bandwidth(trainset: &[FeatureVector]) -> Result<f64, DetectorError> {
    if trainset.len() < 2 {
        return Err(DetectorError::EmptyDataset);
    }
    let mut d = Vec::with_capacity(trainset.len() * (trainset.len() - 1) / 2);
    for (i, a) in trainset.iter().enumerate() {
        for b in &trainset[i + 1..] {
            d.push(squared_distance(a, b));
        }
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    if !(med > 0.0) {
        return Err(DetectorError::ConstantData(med.sqrt()));
    }
    Ok(med.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcSvmConfig {
    pub nu: f64,
    /// `None` selects [`median_bandwidth`].
    pub bandwidth: Option<f64>,
}

impl Default for OcSvmConfig {
    fn default() -> Self {
        Self { nu: 0.1, bandwidth: None }
    }
}

impl OcSvmConfig {
    pub fn fit(&self, trainset: &[FeatureVector]) -> Result<OcSvmModel, DetectorError> {
        let bw = match self.bandwidth {
            Some(b) => b,
            None => median_bandwidth(trainset)?,
        };
        ocsvm_train(trainset, self.nu, bw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcSvmModel {
    /// Non-zero dual coefficients, summing to one.
    pub alphas: Vec<f64>,
    pub support_vectors: Vec<FeatureVector>,
    pub offset: f64,
    pub bandwidth: f64,
    pub iterations: usize,
}

impl OcSvmModel {
    /// `sum_i alpha_i k(x_i, x)`.
    pub fn kernel_expansion(&self, x: &[f64]) -> f64 {
        self.alphas.iter().zip(&self.support_vectors).map(|(a, sv)| a * rbf_kernel(sv, x, self.bandwidth)).sum()
    }
}

/// Larger is more anomalous.
pub fn ocsvm_score(model: &OcSvmModel, x: &FeatureVector) -> Result<f64, DetectorError> {
    if let Some(sv) = model.support_vectors.first() {
        if sv.len() != x.len() {
            return Err(DetectorError::DimensionMismatch { expected: sv.len(), got: x.len() });
        }
    }
    Ok(model.offset - model.kernel_expansion(x))
}

/// Solves `min 1/2 a'Ka` subject to `0 <= a_i <= 1/(nu l)`, `sum a_i = 1` by
/// SMO with second-order working-set selection.
pub fn ocsvm_train(trainset: &[FeatureVector], nu: f64, bandwidth: f64) -> Result<OcSvmModel, DetectorError> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(DetectorError::InvalidConfig(format!("nu = {nu} outside (0, 1]")));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(DetectorError::InvalidConfig(format!("bandwidth = {bandwidth} must be positive")));
    }
    let l = trainset.len();
    if l == 0 {
        return Err(DetectorError::EmptyDataset);
    }
    let dim = trainset[0].len();
    if let Some(bad) = trainset.iter().find(|x| x.len() != dim) {
        return Err(DetectorError::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let mut k = vec![0.0; l * l];
    for i in 0..l {
        k[i * l + i] = 1.0;
        for j in i + 1..l {
            let v = rbf_kernel(&trainset[i], &trainset[j], bandwidth);
            k[i * l + j] = v;
            k[j * l + i] = v;
        }
    }
    let c = 1.0 / (nu * l as f64);
    let mut alpha = vec![1.0 / l as f64; l];
    let mut grad: Vec<f64> = (0..l).map(|i| k[i * l..(i + 1) * l].iter().sum::<f64>() / l as f64).collect();
    let at_upper = |a: f64| a >= c * (1.0 - 1e-12);

    let mut iterations = 0;
    loop {
        // i: steepest ascent candidate among coefficients that can grow.
        let mut i_sel = None;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..l {
            if !at_upper(alpha[t]) && -grad[t] > g_max {
                g_max = -grad[t];
                i_sel = Some(t);
            }
        }
        let mut g_min = f64::INFINITY;
        let mut j_sel = None;
        let mut best = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..l {
                if alpha[t] <= 0.0 {
                    continue;
                }
                g_min = g_min.min(-grad[t]);
                let b = g_max + grad[t];
                if b > 0.0 {
                    let a = (k[i * l + i] + k[t * l + t] - 2.0 * k[i * l + t]).max(TAU);
                    let obj = -b * b / a;
                    if obj < best {
                        best = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let (Some(i), Some(j)) = (i_sel, j_sel) else { break };
        if g_max - g_min < KKT_TOL {
            break;
        }
        if iterations >= MAX_SMO_ITERATIONS {
            return Err(DetectorError::NoConvergence(iterations));
        }
        iterations += 1;
        let a = (k[i * l + i] + k[j * l + j] - 2.0 * k[i * l + j]).max(TAU);
        let b = grad[j] - grad[i];
        let delta = (b / a).min(c - alpha[i]).min(alpha[j]);
        alpha[i] += delta;
        alpha[j] -= delta;
        if alpha[j] < 1e-15 * c {
            alpha[j] = 0.0;
        }
        for t in 0..l {
            grad[t] += delta * (k[t * l + i] - k[t * l + j]);
        }
    }

    // Offset from free coefficients, else the midpoint of the feasible interval.
    let (mut sum, mut count) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..l {
        if alpha[t] > 0.0 && !at_upper(alpha[t]) {
            sum += grad[t];
            count += 1;
        } else if alpha[t] <= 0.0 {
            ub = ub.min(grad[t]);
        } else {
            lb = lb.max(grad[t]);
        }
    }
    let offset = if count > 0 {
        sum / count as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if lb.is_finite() {
        lb
    } else {
        ub
    };

    let total: f64 = alpha.iter().sum();
    let (alphas, support_vectors): (Vec<f64>, Vec<FeatureVector>) = alpha
        .iter()
        .zip(trainset)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, x)| (a / total, x.clone()))
        .unzip();
    Ok(OcSvmModel { alphas, support_vectors, offset, bandwidth, iterations })
}
