//! Interference-plus-noise covariance, whitening filters, and the
//! sample-covariance concentration bound together with its Monte-Carlo check.
//!
//! Complex Gaussian convention used throughout: `n ~ CN(0, s I)` means every
//! entry has total variance `s`, split evenly between real and imaginary
//! parts. `sigma_m^2` in the bound is that total per-entry variance.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, cholesky, invert_lower_triangular, ComplexMatrix, NumericsError, C64};
use crate::random::{complex_gaussian, derive_seed, rng_from_seed, stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WhiteningError {
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("inconsistent bound parameters: {0}")]
    InconsistentParams(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// One interference-plus-noise observation `u_{m,t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceNoiseSample {
    pub u: Vec<C64>,
    pub subcarrier: usize,
    pub time_index: usize,
}

/// `G G^H + sigma_sq I`.
pub fn expected_covariance(g: &ComplexMatrix, sigma_sq: f64) -> ComplexMatrix {
    (g * &g.adjoint()).add_scaled_identity(sigma_sq)
}

/// Covariance of `g + n` for a fixed interference vector: `g g^H + sigma_sq I`.
pub fn fixed_signal_covariance(g: &[C64], sigma_sq: f64) -> ComplexMatrix {
    ComplexMatrix::outer(g, g).add_scaled_identity(sigma_sq)
}

/// `(1/T) sum_t u_t u_t^H`.
pub fn sample_covariance(samples: &[InterferenceNoiseSample]) -> Result<ComplexMatrix, WhiteningError> {
    let first = samples.first().ok_or(WhiteningError::EmptySampleSet)?;
    let n = first.u.len();
    let mut acc = ComplexMatrix::zeros(n, n);
    for s in samples {
        if s.u.len() != n {
            return Err(WhiteningError::DimensionMismatch(format!("sample length {} != {n}", s.u.len())));
        }
        accumulate_outer(&mut acc, &s.u);
    }
    Ok(acc.scale(1.0 / samples.len() as f64))
}

fn accumulate_outer(acc: &mut ComplexMatrix, u: &[C64]) {
    let n = u.len();
    for i in 0..n {
        for j in 0..n {
            acc[(i, j)] += u[i] * u[j].conj();
        }
    }
}

/// `W = L^{-1}` with `R = L L^H`, so that `W R W^H = I`.
pub fn whitening_filter(r: &ComplexMatrix) -> Result<ComplexMatrix, WhiteningError> {
    let l = cholesky(r)?;
    Ok(invert_lower_triangular(&l)?)
}

pub fn apply_whitening(w: &ComplexMatrix, y: &[C64]) -> Result<Vec<C64>, WhiteningError> {
    if w.cols() != y.len() {
        return Err(WhiteningError::DimensionMismatch(format!("filter has {} columns, vector has {}", w.cols(), y.len())));
    }
    Ok(w.mul_vec(y))
}

/// Inputs of the sample-covariance concentration bound. `c1`, `sigma_f_sq`
/// and `l_z` are derived; use [`BernsteinParams::new`] to keep them in sync.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinParams {
    pub epsilon: f64,
    pub t_s: usize,
    pub n_r: usize,
    pub sigma_m: f64,
    pub g: Vec<C64>,
    /// `||g||^2 + N_r sigma_m^2`.
    pub c1: f64,
    /// Already multiplied by `T_s`.
    pub sigma_f_sq: f64,
    pub l_z: f64,
}

struct Derived {
    c1: f64,
    sigma_f_sq: f64,
    l_z: f64,
}

fn derive_constants(g: &[C64], sigma_m: f64, n_r: usize, t_s: usize) -> Derived {
    let g2 = numerics::vec_norm(g).powi(2);
    let nr = n_r as f64;
    let s2 = sigma_m * sigma_m;
    let c1 = g2 + nr * s2;
    let sigma_f_sq = t_s as f64 * s2 * (nr * nr * g2 * g2 + 2.0 * c1 * nr * g2 + c1 * c1 * nr).sqrt();
    let l_z = 2.0 * sigma_m * nr.sqrt() * g2.sqrt() + (nr - 1.0) * s2;
    Derived { c1, sigma_f_sq, l_z }
}

impl BernsteinParams {
    pub fn new(epsilon: f64, t_s: usize, sigma_m: f64, g: Vec<C64>) -> Result<Self, WhiteningError> {
        let n_r = g.len();
        if !(epsilon > 0.0) || t_s == 0 || !(sigma_m > 0.0) || n_r == 0 {
            return Err(WhiteningError::InconsistentParams(format!(
                "need epsilon > 0, t_s >= 1, sigma_m > 0 and a non-empty g (got {epsilon}, {t_s}, {sigma_m}, len {n_r})"
            )));
        }
        let d = derive_constants(&g, sigma_m, n_r, t_s);
        Ok(Self { epsilon, t_s, n_r, sigma_m, g, c1: d.c1, sigma_f_sq: d.sigma_f_sq, l_z: d.l_z })
    }

    pub fn g_norm(&self) -> f64 {
        numerics::vec_norm(&self.g)
    }

    /// Total per-entry noise variance.
    pub fn noise_variance(&self) -> f64 {
        self.sigma_m * self.sigma_m
    }

    /// Checks that the stored constants match a fresh derivation (1e-12 relative).
    pub fn validate(&self) -> Result<(), WhiteningError> {
        if self.g.len() != self.n_r {
            return Err(WhiteningError::InconsistentParams(format!("g has length {} but n_r = {}", self.g.len(), self.n_r)));
        }
        let d = derive_constants(&self.g, self.sigma_m, self.n_r, self.t_s);
        for (name, stored, fresh) in [("c1", self.c1, d.c1), ("sigma_f_sq", self.sigma_f_sq, d.sigma_f_sq), ("l_z", self.l_z, d.l_z)] {
            if (stored - fresh).abs() > 1e-12 * fresh.abs().max(f64::MIN_POSITIVE) {
                return Err(WhiteningError::InconsistentParams(format!("{name}: stored {stored}, derived {fresh}")));
            }
        }
        Ok(())
    }

    /// Covariance of one sample `g + n`.
    pub fn true_covariance(&self) -> ComplexMatrix {
        fixed_signal_covariance(&self.g, self.noise_variance())
    }
}

/// Lower bound on `P(||R_hat - R||_2 < epsilon)`:
/// `1 - 2 N_r exp(-(eps^2 T_s^2 / 2) / (sigma_F^2 + 2 L_z eps T_s / 3))`.
/// Values at or below zero are vacuous and returned unchanged.
pub fn bernstein_lower_bound(p: &BernsteinParams) -> f64 {
    let t = p.t_s as f64;
    let num = p.epsilon * p.epsilon * t * t / 2.0;
    let den = p.sigma_f_sq + 2.0 * p.l_z * p.epsilon * t / 3.0;
    1.0 - 2.0 * p.n_r as f64 * (-num / den).exp()
}

/// Fraction of `trials` experiments in which the sample covariance of `T_s`
/// draws of `g + n` lands within `epsilon` (spectral norm) of the truth.
///
/// Trial `i` draws from its own generator seeded by `(seed, i)`, so the result
/// does not depend on how trials are scheduled across threads.
pub fn empirical_discrepancy_probability(seed: u64, p: &BernsteinParams, trials: usize) -> f64 {
    if trials == 0 {
        return f64::NAN;
    }
    let truth = p.true_covariance();
    let noise_var = p.noise_variance();
    let base = derive_seed(seed, stream::TRIAL);
    let hits: usize = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng_from_seed(derive_seed(base, trial as u64));
            let n = p.n_r;
            let mut acc = ComplexMatrix::zeros(n, n);
            let mut u = vec![C64::new(0.0, 0.0); n];
            for _ in 0..p.t_s {
                for (ui, gi) in u.iter_mut().zip(&p.g) {
                    *ui = gi + complex_gaussian(&mut rng, noise_var);
                }
                accumulate_outer(&mut acc, &u);
            }
            let r_hat = acc.scale(1.0 / p.t_s as f64);
            usize::from(numerics::spectral_norm(&(&r_hat - &truth)) < p.epsilon)
        })
        .sum();
    hits as f64 / trials as f64
}

/// One row of the bound-versus-simulation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinRow {
    pub epsilon: f64,
    pub t_s: usize,
    pub sigma_m: f64,
    pub g_norm: f64,
    pub bound: f64,
    pub empirical_probability: f64,
    pub trials: usize,
}

impl BernsteinRow {
    pub fn evaluate(seed: u64, p: &BernsteinParams, trials: usize) -> Self {
        Self {
            epsilon: p.epsilon,
            t_s: p.t_s,
            sigma_m: p.sigma_m,
            g_norm: p.g_norm(),
            bound: bernstein_lower_bound(p),
            empirical_probability: empirical_discrepancy_probability(seed, p, trials),
            trials,
        }
    }

    /// Binomial standard deviation at the bound value.
    pub fn binomial_sigma(&self) -> f64 {
        let b = self.bound.clamp(0.0, 1.0);
        (b * (1.0 - b) / self.trials as f64).sqrt()
    }

    /// True when the bound is informative and the simulation undercuts it by more than 3 sigma.
    pub fn violates_bound(&self) -> bool {
        self.bound > 0.0 && self.empirical_probability < self.bound - 3.0 * self.binomial_sigma()
    }
}

pub const BERNSTEIN_CSV_HEADER: &str = "epsilon,t_s,sigma_m,g_norm,bound,empirical_probability,trials";

pub fn write_bernstein_csv<W: Write>(mut out: W, rows: &[BernsteinRow]) -> std::io::Result<()> {
    writeln!(out, "{BERNSTEIN_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            crate::fmt_real(r.epsilon),
            r.t_s,
            crate::fmt_real(r.sigma_m),
            crate::fmt_real(r.g_norm),
            crate::fmt_real(r.bound),
            crate::fmt_real(r.empirical_probability),
            r.trials
        )?;
    }
    Ok(())
}
