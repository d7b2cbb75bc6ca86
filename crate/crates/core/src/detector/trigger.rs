use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Test,
}

/// RSRP thresholds in dB; CSI-IM thresholds in the same unit as the measured
/// CSI-IM passed to [`trigger`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TriggerThresholds {
    pub rho_tr_db: f64,
    pub gamma_tr: f64,
    pub rho_te_db: f64,
    pub gamma_te: f64,
}

impl Default for TriggerThresholds {
    /// CSI-IM thresholds in dB above the noise floor.
    fn default() -> Self {
        Self { rho_tr_db: 6.0, gamma_tr: 3.0, rho_te_db: 6.0, gamma_te: 3.0 }
    }
}

/// Training starts where the serving cell clearly dominates or measured
/// interference is low; testing runs where the two cells are comparable or
/// interference is high.
pub fn trigger(phase: Phase, rsrp_s_dbm: f64, rsrp_n_dbm: f64, csi_im: f64, th: &TriggerThresholds) -> bool {
    let delta = rsrp_s_dbm - rsrp_n_dbm;
    match phase {
        Phase::Train => delta >= th.rho_tr_db || csi_im <= th.gamma_tr,
        Phase::Test => delta.abs() < th.rho_te_db || csi_im > th.gamma_te,
    }
}
