//! Experiment configs, seeded sweeps and their CSV/JSON outputs.
//!
//! A config is a TOML file with an `[experiment]` table and optional
//! `[scenario]`, `[channel]`, `[train]`, `[triggers]`, `[ocsvm]` and
//! `[bernstein]` tables. Unknown keys are rejected.

mod run;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, ChannelParams};
use crate::detector::{DetectorError, OcSvmConfig, TrainConfig, TriggerThresholds};
use crate::metrics::MetricsError;
use crate::scenario::{ScenarioConfig, ScenarioError};
use crate::whitening::WhiteningError;

pub use run::{
    execute, run_experiment, write_outputs, DetectionRow, ExperimentOutput, RunSummary, SerPositionRow, SerRow,
    TrainedDetector,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: unknown key `{key}`")]
    UnknownKey { path: String, key: String },
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Whitening(#[from] WhiteningError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl HarnessError {
    /// Problems with the config itself, as opposed to failures while running it.
    pub fn is_config_error(&self) -> bool {
        matches!(self, HarnessError::Parse { .. } | HarnessError::UnknownKey { .. } | HarnessError::InvalidSpec(_))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    F1VsNt,
    F1VsNf,
    DetectionVsRadius,
    SerVsRadius,
    Bernstein,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::F1VsNt => "f1_vs_nt",
            ExperimentKind::F1VsNf => "f1_vs_nf",
            ExperimentKind::DetectionVsRadius => "detection_vs_radius",
            ExperimentKind::SerVsRadius => "ser_vs_radius",
            ExperimentKind::Bernstein => "bernstein",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    ZrdSvdd,
    SvddNoZscore,
    Ocsvm,
    Knn5,
    Knn20,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] =
        [DetectorKind::ZrdSvdd, DetectorKind::SvddNoZscore, DetectorKind::Ocsvm, DetectorKind::Knn5, DetectorKind::Knn20];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::ZrdSvdd => "zrd_svdd",
            DetectorKind::SvddNoZscore => "svdd_no_zscore",
            DetectorKind::Ocsvm => "ocsvm",
            DetectorKind::Knn5 => "knn5",
            DetectorKind::Knn20 => "knn20",
        }
    }

    pub fn knn_k(self) -> Option<usize> {
        match self {
            DetectorKind::Knn5 => Some(5),
            DetectorKind::Knn20 => Some(20),
            _ => None,
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_n_drops() -> usize {
    10
}

fn default_detectors() -> Vec<DetectorKind> {
    DetectorKind::ALL.to_vec()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_n_train() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    /// `N_t` values, `N_f` values, cell radii in metres, or epsilon multipliers
    /// of `||g||^2 + N_r sigma^2`, depending on `kind`.
    pub grid: Vec<f64>,
    #[serde(default = "default_n_drops")]
    pub n_drops: usize,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<DetectorKind>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Training-set size for every kind except `f1_vs_nt`.
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    /// Overrides both scenario transmit powers when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_power_dbm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BernsteinSection {
    pub n_r: usize,
    /// Real amplitude of every entry of the fixed signal `g`.
    pub g_amplitude: f64,
    pub t_s: Vec<usize>,
    pub sigma_m: Vec<f64>,
    pub trials: usize,
}

impl Default for BernsteinSection {
    fn default() -> Self {
        Self { n_r: 4, g_amplitude: 0.5, t_s: vec![16, 64, 256, 1024], sigma_m: vec![0.1, 1.0], trials: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub channel: ChannelParams,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub triggers: TriggerThresholds,
    #[serde(default)]
    pub ocsvm: OcSvmConfig,
    #[serde(default)]
    pub bernstein: BernsteinSection,
}

const NF_CHOICES: [usize; 6] = [1, 2, 3, 4, 6, 12];

fn integral(v: f64) -> Option<usize> {
    (v >= 1.0 && v.fract() == 0.0 && v < 1e9).then_some(v as usize)
}

impl ExperimentSpec {
    /// Master seed of the sweep; drop `d` uses `derive_seed(master, d)`.
    pub fn master_seed(&self) -> u64 {
        self.scenario.seed
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSpec(m));
        let e = &self.experiment;
        if e.grid.is_empty() {
            return bad("experiment.grid must not be empty".into());
        }
        if e.n_drops == 0 {
            return bad("experiment.n_drops must be at least 1".into());
        }
        if let Some(v) = e.grid.iter().find(|v| !v.is_finite()) {
            return bad(format!("experiment.grid contains {v}"));
        }
        if e.kind == ExperimentKind::Bernstein {
            let b = &self.bernstein;
            if e.grid.iter().any(|v| *v <= 0.0) {
                return bad("bernstein grid holds positive epsilon multipliers".into());
            }
            if b.n_r == 0 || b.t_s.is_empty() || b.t_s.contains(&0) || b.trials == 0 {
                return bad("bernstein needs n_r >= 1, trials >= 1 and a non-empty t_s list of positive sizes".into());
            }
            if b.sigma_m.is_empty() || b.sigma_m.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return bad("bernstein sigma_m must be a non-empty list of positive values".into());
            }
            if !b.g_amplitude.is_finite() {
                return bad("bernstein g_amplitude must be finite".into());
            }
            return Ok(());
        }

        if e.detectors.is_empty() && e.kind != ExperimentKind::SerVsRadius {
            return bad("experiment.detectors must not be empty".into());
        }
        self.channel.validate().map_err(|err| HarnessError::InvalidSpec(err.to_string()))?;
        self.train.validate().map_err(|err| HarnessError::InvalidSpec(err.to_string()))?;
        if !(self.ocsvm.nu > 0.0 && self.ocsvm.nu <= 1.0) {
            return bad(format!("ocsvm.nu = {} outside (0, 1]", self.ocsvm.nu));
        }
        if let Some(p) = e.tx_power_dbm {
            if !p.is_finite() {
                return bad("experiment.tx_power_dbm must be finite".into());
            }
        }
        let n_avail = self.scenario.train_indices.len();
        let check_nt = |n_t: usize| -> Result<(), HarnessError> {
            if n_t > n_avail {
                return bad(format!("training size {n_t} exceeds the {n_avail} training positions"));
            }
            for d in &e.detectors {
                if let Some(k) = d.knn_k() {
                    if n_t <= k {
                        return bad(format!("{d} needs more than {k} training samples, got {n_t}"));
                    }
                }
            }
            if n_t < 2 {
                return bad("training size must be at least 2".into());
            }
            Ok(())
        };
        let mut scenarios = Vec::new();
        match e.kind {
            ExperimentKind::F1VsNt => {
                for v in &e.grid {
                    let n_t = integral(*v).ok_or_else(|| HarnessError::InvalidSpec(format!("N_t grid value {v} is not a positive integer")))?;
                    check_nt(n_t)?;
                }
                scenarios.push(self.scenario.clone());
            }
            ExperimentKind::F1VsNf => {
                check_nt(e.n_train)?;
                for v in &e.grid {
                    match integral(*v) {
                        Some(n) if NF_CHOICES.contains(&n) => scenarios.push(ScenarioConfig { n_f_per_rb: n, ..self.scenario.clone() }),
                        _ => return bad(format!("N_f grid value {v} must be one of {NF_CHOICES:?}")),
                    }
                }
            }
            ExperimentKind::DetectionVsRadius | ExperimentKind::SerVsRadius => {
                check_nt(e.n_train)?;
                for v in &e.grid {
                    scenarios.push(self.scenario_at(*v));
                }
            }
            ExperimentKind::Bernstein => unreachable!(),
        }
        for s in scenarios {
            s.validate(&self.channel).map_err(|err| HarnessError::InvalidSpec(err.to_string()))?;
        }
        Ok(())
    }

    /// Scenario for one grid point of a radius sweep.
    pub fn scenario_at(&self, radius_m: f64) -> ScenarioConfig {
        let mut s = ScenarioConfig { cell_radius_m: radius_m, ..self.scenario.clone() };
        if let Some(p) = self.experiment.tx_power_dbm {
            s.tx_power_serving_dbm = p;
            s.tx_power_interferer_dbm = p;
        }
        s
    }

    /// Fully resolved config, parseable by [`parse_config_str`].
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serialises to TOML")
    }
}

fn unknown_key(message: &str) -> Option<String> {
    let rest = message.split("unknown field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

/// Parses and validates a config; `origin` names the source in errors.
pub fn parse_config_str(text: &str, origin: &str) -> Result<ExperimentSpec, HarnessError> {
    let spec: ExperimentSpec = toml::from_str(text).map_err(|e| {
        let message = e.to_string();
        match unknown_key(&message) {
            Some(key) => HarnessError::UnknownKey { path: origin.to_string(), key },
            None => HarnessError::Parse { path: origin.to_string(), message: message.trim_end().to_string() },
        }
    })?;
    spec.validate()?;
    Ok(spec)
}

pub fn parse_config(path: &Path) -> Result<ExperimentSpec, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config_str(&text, &path.display().to_string())
}
