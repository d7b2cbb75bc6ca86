//! Two-cell MIMO-OFDM simulator for inter-cell interference: geometric
//! cluster channels, one-class interference detectors, interference
//! whitening, and the experiment harness that ties them together.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod detector;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod random;
pub mod scenario;
pub mod whitening;

/// Shortest-round-trip-safe rendering of a real: 17 significant digits in
/// scientific notation.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}
