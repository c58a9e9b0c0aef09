//! Corpus ingestion: tokenization, vocabulary, time slicing, held-out splits,
//! subsampling, skip-gram pair extraction and negative sampling.

mod batch;
pub mod io;
mod slicing;
mod tokenize;
mod vocab;

pub use batch::{
    extract_pairs, slice_pairs, sample_negatives, Label, NoiseDistribution, PairView,
    SkipGramBatch, MAX_REDRAWS, NOISE_POWER,
};
pub use slicing::{
    holdout_assignment, parse_timestamp, slice_documents, split_holdout, subsample_assignment,
    subsample_corpus, year_span, yearly_boundaries, Sliced,
    SubsampleReport, Timestamp,
};
pub use tokenize::tokenize;
pub use vocab::Vocabulary;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(crate::Error::InvalidArgument(format!(
                "unknown split `{other}` (expected train, valid or test)"
            ))),
        }
    }
}

/// A document is a sequence of vocabulary ids.
pub type Document = Vec<u32>;

/// Tokenized documents bucketed into chronologically ordered slices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeSlicedCorpus {
    pub slices: Vec<Vec<Document>>,
    pub split: Split,
}

impl TimeSlicedCorpus {
    pub fn new(slices: Vec<Vec<Document>>, split: Split) -> Self {
        TimeSlicedCorpus { slices, split }
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, t: usize) -> &[Document] {
        &self.slices[t]
    }

    pub fn slice_tokens(&self, t: usize) -> usize {
        self.slices[t].iter().map(Vec::len).sum()
    }

    pub fn total_tokens(&self) -> usize {
        (0..self.num_slices()).map(|t| self.slice_tokens(t)).sum()
    }

    /// All slices concatenated into one, for static (pooled) training.
    pub fn pooled(&self) -> TimeSlicedCorpus {
        TimeSlicedCorpus {
            slices: vec![self.slices.iter().flatten().cloned().collect()],
            split: self.split,
        }
    }

    /// Per-word token counts in slice `t`.
    pub fn counts(&self, t: usize, vocab_size: usize) -> Vec<u64> {
        let mut counts = vec![0u64; vocab_size];
        for doc in &self.slices[t] {
            for &w in doc {
                counts[w as usize] += 1;
            }
        }
        counts
    }

    pub fn check_ids(&self, vocab_size: usize) -> crate::Result<()> {
        for (t, slice) in self.slices.iter().enumerate() {
            for doc in slice {
                if let Some(&w) = doc.iter().find(|&&w| w as usize >= vocab_size) {
                    return Err(crate::Error::InvalidArgument(format!(
                        "token id {w} in slice {t} is out of range for vocabulary size {vocab_size}"
                    )));
                }
            }
        }
        Ok(())
    }
}
