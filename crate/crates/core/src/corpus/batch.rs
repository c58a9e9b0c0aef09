use rand::distr::Distribution;
use rand_distr::weighted::WeightedAliasIndex;

use crate::corpus::{Document, Vocabulary};
use crate::exec::{self, Execution};
use crate::{seed, Error, Result};

/// Exponent applied to unigram counts to form the noise distribution.
pub const NOISE_POWER: f64 = 0.75;

const NEGATIVE_CHUNK: usize = 4096;

/// Redraw budget for a negative that collides with the observed word.
pub const MAX_REDRAWS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// 1 for observed pairs, 0 for noise pairs.
    #[inline]
    pub fn target(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => 0.0,
        }
    }
}

/// Positive and negative (center, context) examples of one slice. Each
/// positive is immediately followed by its negatives.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SkipGramBatch {
    pub center_ids: Vec<u32>,
    pub context_ids: Vec<u32>,
    pub labels: Vec<Label>,
    pub slice_index: usize,
}

impl SkipGramBatch {
    pub fn new(slice_index: usize) -> Self {
        SkipGramBatch {
            slice_index,
            ..Default::default()
        }
    }

    pub fn push(&mut self, center: u32, context: u32, label: Label) {
        self.center_ids.push(center);
        self.context_ids.push(context);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_positive(&self) -> usize {
        self.labels.iter().filter(|l| **l == Label::Positive).count()
    }

    pub fn view(&self) -> PairView<'_> {
        PairView {
            centers: &self.center_ids,
            contexts: &self.context_ids,
            labels: &self.labels,
        }
    }
}

/// Borrowed window into a [`SkipGramBatch`].
#[derive(Debug, Clone, Copy)]
pub struct PairView<'a> {
    pub centers: &'a [u32],
    pub contexts: &'a [u32],
    pub labels: &'a [Label],
}

impl<'a> PairView<'a> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn range(&self, r: std::ops::Range<usize>) -> PairView<'a> {
        PairView {
            centers: &self.centers[r.clone()],
            contexts: &self.contexts[r.clone()],
            labels: &self.labels[r],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, Label)> + 'a {
        let (c, x, l) = (self.centers, self.contexts, self.labels);
        (0..l.len()).map(move |k| (c[k], x[k], l[k]))
    }
}

/// Every (token[p], token[q]) with `0 < |p - q| <= window`, in position order.
pub fn extract_pairs(doc: &[u32], window: usize) -> impl Iterator<Item = (u32, u32)> + '_ {
    (0..doc.len()).flat_map(move |p| {
        let lo = p.saturating_sub(window);
        let hi = (p + window).min(doc.len().saturating_sub(1));
        (lo..=hi).filter(move |&q| q != p).map(move |q| (doc[p], doc[q]))
    })
}

/// Positive pairs of a list of documents, in document order.
pub fn slice_pairs(docs: &[&Document], window: usize, mode: Execution) -> Vec<(u32, u32)> {
    exec::map_chunks(mode, docs, 64, |_, chunk| {
        chunk
            .iter()
            .flat_map(|d| extract_pairs(d, window))
            .collect::<Vec<_>>()
    })
    .concat()
}

/// Unigram counts raised to [`NOISE_POWER`] and renormalised.
#[derive(Debug, Clone)]
pub struct NoiseDistribution {
    probabilities: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl NoiseDistribution {
    /// `None` when every count is zero.
    pub fn from_counts(counts: &[u64]) -> Option<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(NOISE_POWER)).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let probabilities = weights.iter().map(|w| w / total).collect();
        let alias = WeightedAliasIndex::new(weights).ok()?;
        Some(NoiseDistribution {
            probabilities,
            alias,
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// A draw different from `avoid` unless [`MAX_REDRAWS`] redraws all hit it.
    #[inline]
    pub fn sample_other<R: rand::Rng + ?Sized>(&self, avoid: u32, rng: &mut R) -> u32 {
        let mut w = self.sample(rng);
        for _ in 0..MAX_REDRAWS {
            if w != avoid {
                break;
            }
            w = self.sample(rng);
        }
        w
    }

    #[inline]
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.alias.sample(rng) as u32
    }

    /// Interleaves each positive with `ratio` negatives that share its center
    /// and draw the context from the noise distribution. A draw equal to the
    /// positive's own context is redrawn (up to [`MAX_REDRAWS`] times).
    pub fn sample_batch(
        &self,
        positives: &[(u32, u32)],
        ratio: usize,
        seed: u64,
        slice_index: usize,
        mode: Execution,
    ) -> SkipGramBatch {
        let parts = exec::map_chunks(mode, positives, NEGATIVE_CHUNK, |k, chunk| {
            let mut rng = seed::rng(seed, &[seed::NEGATIVES, k as u64]);
            let mut b = SkipGramBatch::new(slice_index);
            for &(c, x) in chunk {
                b.push(c, x, Label::Positive);
                for _ in 0..ratio {
                    b.push(c, self.sample_other(x, &mut rng), Label::Negative);
                }
            }
            b
        });
        let mut out = SkipGramBatch::new(slice_index);
        let n = positives.len() * (1 + ratio);
        out.center_ids.reserve(n);
        out.context_ids.reserve(n);
        out.labels.reserve(n);
        for p in parts {
            out.center_ids.extend(p.center_ids);
            out.context_ids.extend(p.context_ids);
            out.labels.extend(p.labels);
        }
        out
    }
}

/// Builds a batch from `positives` with noise drawn from the vocabulary's
/// total counts.
pub fn sample_negatives(
    vocab: &Vocabulary,
    positives: &[(u32, u32)],
    ratio: usize,
    seed: u64,
) -> Result<SkipGramBatch> {
    if ratio == 0 {
        return Err(Error::InvalidArgument("negative ratio must be at least 1".into()));
    }
    let noise = NoiseDistribution::from_counts(vocab.total_counts())
        .ok_or_else(|| Error::EmptyCorpus("vocabulary counts are all zero".into()))?;
    Ok(noise.sample_batch(positives, ratio, seed, 0, Execution::default()))
}
