//! Pieces shared by the three trainers: epoch batches, mini-batch ranges and
//! per-epoch statistics.

use std::ops::Range;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{slice_pairs, Document, NoiseDistribution, SkipGramBatch};
use crate::exec::Execution;
use crate::{seed, Error, Result};

/// One line of a training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub slice: usize,
    pub epoch: usize,
    /// Mean log σ(score) per training positive, measured during the epoch.
    pub train_lpos: f64,
    /// Mean per-pair held-out L_pos after the epoch, when held-out data is given.
    pub heldout_lpos: Option<f64>,
    /// The objective maximised by the trainer, summed over the epoch.
    pub objective: f64,
    /// Drift-regularizer threshold in force during the epoch.
    pub beta: Option<f64>,
}

/// Training data of one slice.
#[derive(Debug, Clone, Copy)]
pub struct SliceData<'a> {
    pub index: usize,
    pub train: &'a [Document],
    pub heldout: Option<&'a [Document]>,
}

/// Documents of a slice in a per-(slice, epoch) shuffled order.
pub(crate) fn shuffled(docs: &[Document], base: u64, slice: usize, epoch: usize) -> Vec<&Document> {
    let mut order: Vec<&Document> = docs.iter().collect();
    let mut rng = seed::rng(base, &[seed::SHUFFLE, slice as u64, epoch as u64]);
    order.shuffle(&mut rng);
    order
}

/// Positive pairs of a shuffled epoch, each followed by its negatives.
#[allow(clippy::too_many_arguments)]
pub(crate) fn epoch_batch(
    docs: &[Document],
    noise: &NoiseDistribution,
    window: usize,
    ratio: usize,
    base: u64,
    slice: usize,
    epoch: usize,
    mode: Execution,
) -> SkipGramBatch {
    let order = shuffled(docs, base, slice, epoch);
    let positives = slice_pairs(&order, window, mode);
    let s = seed::derive(base, &[slice as u64, epoch as u64]);
    noise.sample_batch(&positives, ratio, s, slice, mode)
}

/// Ranges into an interleaved batch covering `batch_size` positives each.
pub(crate) fn minibatches(len: usize, batch_size: usize, ratio: usize) -> Vec<Range<usize>> {
    crate::exec::chunk_ranges(len, batch_size * (1 + ratio))
}

pub(crate) fn nan_at(slice: usize, epoch: usize, batch: usize, what: &str) -> Error {
    Error::NonFinite {
        what: format!("{what} at slice {slice}, epoch {epoch}, batch {batch}"),
    }
}

pub(crate) fn check_loss(x: f64, slice: usize, epoch: usize, batch: usize) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(nan_at(slice, epoch, batch, "log-likelihood"))
    }
}
