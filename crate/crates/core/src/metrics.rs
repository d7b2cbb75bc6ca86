//! Confusion-matrix metrics and symbol error rate. "Positive" means
//! interference present.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// A ratio whose denominator may vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    Value(f64),
    Undefined,
}

impl Metric {
    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::Undefined => None,
        }
    }

    /// Undefined cells render as empty CSV fields.
    pub fn csv_field(self) -> String {
        self.value().map(crate::fmt_real).unwrap_or_default()
    }

    fn ratio(num: u64, den: u64) -> Metric {
        if den == 0 {
            Metric::Undefined
        } else {
            Metric::Value(num as f64 / den as f64)
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Value(v) => write!(f, "{v:.4}"),
            Metric::Undefined => write!(f, "undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub sensitivity: Metric,
    pub precision: Metric,
    pub f1: Metric,
}

pub fn confusion(predictions: &[bool], labels: &[bool]) -> Result<ConfusionMatrix, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> ClassificationMetrics {
    let sensitivity = Metric::ratio(cm.tp, cm.tp + cm.fn_);
    let precision = Metric::ratio(cm.tp, cm.tp + cm.fp);
    // 2PS/(P+S) = 2tp/(2tp+fp+fn), undefined when tp = 0
    let f1 = if cm.tp > 0 { Metric::ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_) } else { Metric::Undefined };
    ClassificationMetrics { sensitivity, precision, f1 }
}

pub fn symbol_error_rate<T: PartialEq>(tx_symbols: &[T], decisions: &[T]) -> Result<f64, MetricsError> {
    if tx_symbols.len() != decisions.len() {
        return Err(MetricsError::LengthMismatch(decisions.len(), tx_symbols.len()));
    }
    if tx_symbols.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let errors = tx_symbols.iter().zip(decisions).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / tx_symbols.len() as f64)
}
