//! Drift analytics over trained slice matrices and held-out evaluation.

mod drift;
mod eval;
mod histogram;

pub use drift::{
    compute_drift, directedness, drift_rank, drift_total, kendall_trend, quantile,
    stability_fraction, word_directedness, DriftSeries,
};
pub use eval::{evaluate_lpos, sgns_lpos, LposReport, LposSum, SliceEmbeddings};
pub use histogram::{drift_histogram, DriftHistogram};
