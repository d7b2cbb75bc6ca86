#![allow(dead_code)]

use ici_core::numerics::{ComplexMatrix, C64};
use ici_core::random::complex_gaussian;
use nalgebra::{Complex, DMatrix};
use rand::Rng;

pub fn to_na(a: &ComplexMatrix) -> DMatrix<Complex<f64>> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| {
        let z = a[(i, j)];
        Complex::new(z.re, z.im)
    })
}

pub fn from_na(a: &DMatrix<Complex<f64>>) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.nrows(), a.ncols(), |i, j| C64::new(a[(i, j)].re, a[(i, j)].im))
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, 1.0))
}

/// `A A^H + shift I`, Hermitian positive definite for `shift > 0`.
pub fn random_pd<R: Rng>(rng: &mut R, n: usize, shift: f64) -> ComplexMatrix {
    let a = random_matrix(rng, n, n + 2);
    let mut r = a.matmul(&a.adjoint());
    for i in 0..n {
        r[(i, i)] += C64::new(shift, 0.0);
    }
    // exact Hermitian symmetry
    ComplexMatrix::from_fn(n, n, |i, j| if i <= j { r[(i, j)] } else { r[(j, i)].conj() })
}

pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

use ici_core::detector::{rbf_kernel, svdd_objective_and_gradient, FeatureVector, MlpParams};

/// Central finite differences of the SVDD objective for every weight.
pub fn finite_difference_gradient(params: &MlpParams, center: &[f64], batch: &[FeatureVector], zeta: f64, h: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(params.weights.len());
    for l in 0..params.weights.len() {
        let mut g = Vec::with_capacity(params.weights[l].len());
        for k in 0..params.weights[l].len() {
            let mut plus = params.clone();
            plus.weights[l][k] += h;
            let mut minus = params.clone();
            minus.weights[l][k] -= h;
            let fp = svdd_objective_and_gradient(&plus, center, batch, zeta).unwrap().loss;
            let fm = svdd_objective_and_gradient(&minus, center, batch, zeta).unwrap().loss;
            g.push((fp - fm) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

/// Largest entrywise relative error, with magnitudes floored at `floor`.
pub fn max_relative_error(a: &[Vec<f64>], b: &[Vec<f64>], floor: f64) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Euclidean projection onto `{0 <= a_i <= c, sum a_i = 1}` by bisection on the shift.
fn project_capped_simplex(v: &[f64], c: f64) -> Vec<f64> {
    let total = |tau: f64| v.iter().map(|x| (x - tau).clamp(0.0, c)).sum::<f64>();
    let (mut lo, mut hi) = (v.iter().cloned().fold(f64::INFINITY, f64::min) - c - 1.0, v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|x| (x - tau).clamp(0.0, c)).collect()
}

/// Dense one-class SVM oracle: projected gradient on the dual, then the
/// offset from the free coefficients. Returns `(alphas, offset)`.
pub fn ocsvm_qp_oracle(train: &[FeatureVector], nu: f64, bandwidth: f64) -> (Vec<f64>, f64) {
    let l = train.len();
    let k: Vec<Vec<f64>> = train.iter().map(|a| train.iter().map(|b| rbf_kernel(a, b, bandwidth)).collect()).collect();
    let c = 1.0 / (nu * l as f64);
    // Gershgorin bound on the largest eigenvalue
    let lmax = k.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = 1.0 / lmax;
    let mut a = project_capped_simplex(&vec![1.0 / l as f64; l], c);
    for _ in 0..2_000_000 {
        let grad: Vec<f64> = k.iter().map(|r| r.iter().zip(&a).map(|(x, y)| x * y).sum()).collect();
        let next = project_capped_simplex(&a.iter().zip(&grad).map(|(x, g)| x - step * g).collect::<Vec<_>>(), c);
        let diff = next.iter().zip(&a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        a = next;
        if diff < 1e-14 {
            break;
        }
    }
    let grad: Vec<f64> = k.iter().map(|r| r.iter().zip(&a).map(|(x, y)| x * y).sum()).collect();
    let free: Vec<f64> = (0..l).filter(|&i| a[i] > 1e-7 * c && a[i] < c * (1.0 - 1e-7)).map(|i| grad[i]).collect();
    let offset = if free.is_empty() {
        let ub = (0..l).filter(|&i| a[i] <= 1e-7 * c).map(|i| grad[i]).fold(f64::INFINITY, f64::min);
        let lb = (0..l).filter(|&i| a[i] >= c * (1.0 - 1e-7)).map(|i| grad[i]).fold(f64::NEG_INFINITY, f64::max);
        0.5 * (ub + lb)
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };
    (a, offset)
}

pub fn ocsvm_oracle_score(train: &[FeatureVector], alphas: &[f64], offset: f64, bandwidth: f64, x: &[f64]) -> f64 {
    offset - train.iter().zip(alphas).map(|(t, a)| a * rbf_kernel(t, x, bandwidth)).sum::<f64>()
}

/// k-NN score by exhaustive selection: repeatedly remove the nearest remaining point.
pub fn knn_oracle(train: &[FeatureVector], x: &[f64], k: usize) -> f64 {
    let mut d: Vec<f64> = train.iter().map(|t| t.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()).collect();
    let mut total = 0.0;
    for _ in 0..k {
        let (i, v) = d.iter().cloned().enumerate().fold((0, f64::INFINITY), |b, (i, v)| if v < b.1 { (i, v) } else { b });
        total += v;
        d.remove(i);
    }
    total / k as f64
}

/// Exact rational `num / den`, reduced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio(pub u128, pub u128);

impl Ratio {
    fn new(num: u128, den: u128) -> Self {
        fn gcd(a: u128, b: u128) -> u128 {
            if b == 0 { a } else { gcd(b, a % b) }
        }
        let g = gcd(num, den).max(1);
        Ratio(num / g, den / g)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

/// Sensitivity, precision and F1 from their definitions in exact rational
/// arithmetic; `None` where a denominator vanishes.
pub fn metrics_oracle(tp: u64, fp: u64, fn_: u64) -> (Option<Ratio>, Option<Ratio>, Option<Ratio>) {
    let (tp, fp, fn_) = (tp as u128, fp as u128, fn_ as u128);
    let s = (tp + fn_ > 0).then(|| Ratio::new(tp, tp + fn_));
    let p = (tp + fp > 0).then(|| Ratio::new(tp, tp + fp));
    let f1 = match (p, s) {
        // 2 p s / (p + s) with p = a/b, s = c/d
        (Some(Ratio(a, b)), Some(Ratio(c, d))) if a * d + c * b > 0 => Some(Ratio::new(2 * a * c, a * d + c * b)),
        _ => None,
    };
    (s, p, f1)
}
