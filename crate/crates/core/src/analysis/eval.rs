use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{extract_pairs, Document, TimeSlicedCorpus};
use crate::exec::{self, Execution};
use crate::model::{dot, log_sigmoid, EmbeddingMatrix};
use crate::{Error, ModelKind, Result};

/// Sum of log σ(score) over held-out positives of one slice.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LposSum {
    pub sum: f64,
    pub pairs: usize,
    pub tokens: usize,
}

impl LposSum {
    pub fn mean_per_pair(&self) -> Option<f64> {
        (self.pairs > 0).then(|| self.sum / self.pairs as f64)
    }

    pub(crate) fn add(&mut self, o: &LposSum) {
        self.sum += o.sum;
        self.pairs += o.pairs;
        self.tokens += o.tokens;
    }
}

/// Held-out skip-gram L_pos of documents under `(U, V)`.
pub fn sgns_lpos(docs: &[Document], window: usize, u: &EmbeddingMatrix, v: &EmbeddingMatrix, mode: Execution) -> LposSum {
    let parts = exec::map_chunks(mode, docs, 64, |_, chunk| {
        let mut s = LposSum::default();
        for d in chunk {
            s.tokens += d.len();
            for (c, x) in extract_pairs(d, window) {
                s.sum += log_sigmoid(dot(u.row(c as usize), v.row(x as usize)));
                s.pairs += 1;
            }
        }
        s
    });
    let mut total = LposSum::default();
    for p in &parts {
        total.add(p);
    }
    total
}

/// Trained vectors for every slice, in the layout of each model family.
#[derive(Debug, Clone, Copy)]
pub enum SliceEmbeddings<'a> {
    /// Per-slice word and context matrices (ISG, DSG posterior means).
    SkipGram {
        word: &'a [EmbeddingMatrix],
        context: &'a [EmbeddingMatrix],
    },
    /// Per-slice word matrices with one shared context matrix (DBE).
    Bernoulli {
        word: &'a [EmbeddingMatrix],
        context: &'a EmbeddingMatrix,
    },
}

impl SliceEmbeddings<'_> {
    pub fn num_slices(&self) -> usize {
        match self {
            SliceEmbeddings::SkipGram { word, .. } | SliceEmbeddings::Bernoulli { word, .. } => word.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LposReport {
    pub model: ModelKind,
    pub split: String,
    pub slices: Vec<LposSum>,
    /// Mean over slices of the per-pair means, skipping slices without pairs.
    pub mean: f64,
}

impl LposReport {
    pub fn slice_mean(&self, t: usize) -> Option<f64> {
        self.slices[t].mean_per_pair()
    }
}

impl fmt::Display for LposReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# {} L_pos on {} (mean log-probability per positive pair)", self.model, self.split)?;
        writeln!(f, "{:>6} {:>10} {:>10} {:>12}", "slice", "pairs", "tokens", "lpos")?;
        for (t, s) in self.slices.iter().enumerate() {
            match s.mean_per_pair() {
                Some(m) => writeln!(f, "{t:>6} {:>10} {:>10} {m:>12.4}", s.pairs, s.tokens)?,
                None => writeln!(f, "{t:>6} {:>10} {:>10} {:>12}", s.pairs, s.tokens, "-")?,
            }
        }
        write!(f, "{:>6} {:>10} {:>10} {:>12.4}", "mean", "", "", self.mean)
    }
}

/// Held-out L_pos per slice and its mean across slices.
pub fn evaluate_lpos(
    heldout: &TimeSlicedCorpus,
    embeddings: SliceEmbeddings<'_>,
    model: ModelKind,
    window: usize,
    mode: Execution,
) -> Result<LposReport> {
    if embeddings.num_slices() != heldout.num_slices() {
        return Err(Error::InvalidArgument(format!(
            "model has {} slices, held-out data {}",
            embeddings.num_slices(),
            heldout.num_slices()
        )));
    }
    let slices: Vec<LposSum> = (0..heldout.num_slices())
        .map(|t| match embeddings {
            SliceEmbeddings::SkipGram { word, context } => sgns_lpos(heldout.slice(t), window, &word[t], &context[t], mode),
            SliceEmbeddings::Bernoulli { word, context } => {
                crate::dbe::bernoulli_lpos(heldout.slice(t), window, &word[t], context, mode)
            }
        })
        .collect();
    let means: Vec<f64> = slices.iter().filter_map(LposSum::mean_per_pair).collect();
    if means.is_empty() {
        return Err(Error::EmptyCorpus("no held-out pairs in any slice".into()));
    }
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    Ok(LposReport {
        model,
        split: heldout.split.as_str().to_string(),
        slices,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::model::Role;

    #[test]
    fn zero_vectors_give_minus_ln2() {
        let u = EmbeddingMatrix::zeros(3, 2, Role::Word);
        let v = EmbeddingMatrix::zeros(3, 2, Role::Context);
        let h = TimeSlicedCorpus::new(vec![vec![vec![0, 1, 2]], vec![vec![2, 1]]], Split::Valid);
        let word = vec![u.clone(), u];
        let context = vec![v.clone(), v];
        let r = evaluate_lpos(
            &h,
            SliceEmbeddings::SkipGram {
                word: &word,
                context: &context,
            },
            ModelKind::Isg,
            1,
            Execution::Sequential,
        )
        .unwrap();
        assert!((r.mean + std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(r.slices[0].pairs, 4);
        let table = r.to_string();
        assert!(table.contains("-0.6931"));
        assert!(table.lines().last().unwrap().starts_with("  mean"));
    }

    #[test]
    fn slice_count_mismatch() {
        let u = vec![EmbeddingMatrix::zeros(3, 2, Role::Word)];
        let h = TimeSlicedCorpus::new(vec![vec![], vec![]], Split::Test);
        let e = evaluate_lpos(
            &h,
            SliceEmbeddings::SkipGram { word: &u, context: &u },
            ModelKind::Dsg,
            1,
            Execution::Sequential,
        );
        assert!(e.is_err());
    }
}
