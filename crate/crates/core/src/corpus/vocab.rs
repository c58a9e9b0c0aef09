use std::collections::{HashMap, HashSet};

use crate::corpus::{Document, Split, TimeSlicedCorpus};
use crate::{Error, Result};

/// Word ↔ id map with per-slice and total counts.
///
/// Ids are dense in `0..len()` and ordered by descending total count, ties
/// broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    id_of: HashMap<String, u32>,
    total_count: Vec<u64>,
    /// `slice_count[i][t]`
    slice_count: Vec<Vec<u64>>,
    num_slices: usize,
}

impl Vocabulary {
    /// Builds the vocabulary of the `max_size` most frequent non-stopword
    /// tokens. `slices[t]` holds the tokenized documents of slice `t`.
    pub fn build(
        slices: &[Vec<Vec<String>>],
        stopwords: &HashSet<String>,
        max_size: usize,
    ) -> Result<Self> {
        if max_size == 0 {
            return Err(Error::InvalidArgument("max_size must be at least 1".into()));
        }
        let num_slices = slices.len();
        let mut counts: HashMap<&str, Vec<u64>> = HashMap::new();
        for (t, docs) in slices.iter().enumerate() {
            for tok in docs.iter().flatten() {
                if stopwords.contains(tok) {
                    continue;
                }
                counts
                    .entry(tok.as_str())
                    .or_insert_with(|| vec![0; num_slices])[t] += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus(
                "no tokens left after stopword removal".into(),
            ));
        }
        let mut entries: Vec<(&str, Vec<u64>, u64)> = counts
            .into_iter()
            .map(|(w, per_slice)| {
                let total = per_slice.iter().sum();
                (w, per_slice, total)
            })
            .collect();
        entries.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(b.0)));
        entries.truncate(max_size);

        let mut vocab = Vocabulary {
            words: Vec::with_capacity(entries.len()),
            id_of: HashMap::with_capacity(entries.len()),
            total_count: Vec::with_capacity(entries.len()),
            slice_count: Vec::with_capacity(entries.len()),
            num_slices,
        };
        for (w, per_slice, total) in entries {
            vocab.id_of.insert(w.to_string(), vocab.words.len() as u32);
            vocab.words.push(w.to_string());
            vocab.total_count.push(total);
            vocab.slice_count.push(per_slice);
        }
        Ok(vocab)
    }

    /// Rebuilds a vocabulary from `(word, total_count)` rows in id order, as
    /// read back from an export. The counts are treated as a single slice.
    pub fn from_counts(rows: Vec<(String, u64)>) -> Result<Self> {
        let mut vocab = Vocabulary {
            words: Vec::with_capacity(rows.len()),
            id_of: HashMap::with_capacity(rows.len()),
            total_count: Vec::with_capacity(rows.len()),
            slice_count: Vec::with_capacity(rows.len()),
            num_slices: 1,
        };
        for (w, c) in rows {
            if vocab.id_of.contains_key(&w) {
                return Err(Error::InvalidArgument(format!("duplicate word `{w}`")));
            }
            vocab.id_of.insert(w.clone(), vocab.words.len() as u32);
            vocab.words.push(w);
            vocab.total_count.push(c);
            vocab.slice_count.push(vec![c]);
        }
        if vocab.words.is_empty() {
            return Err(Error::EmptyCorpus("vocabulary has no words".into()));
        }
        Ok(vocab)
    }

    /// Replaces all counts with those observed in `corpus`, keeping ids.
    pub fn recount(&mut self, corpus: &TimeSlicedCorpus) {
        let l = self.len();
        self.num_slices = corpus.num_slices();
        self.slice_count = vec![vec![0; self.num_slices]; l];
        for t in 0..self.num_slices {
            for (i, c) in corpus.counts(t, l).into_iter().enumerate() {
                self.slice_count[i][t] = c;
            }
        }
        self.total_count = self.slice_count.iter().map(|s| s.iter().sum()).collect();
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn num_slices(&self) -> usize {
        self.num_slices
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.id_of.get(word).copied()
    }

    pub fn total_count(&self, id: u32) -> u64 {
        self.total_count[id as usize]
    }

    pub fn total_counts(&self) -> &[u64] {
        &self.total_count
    }

    pub fn slice_count(&self, id: u32, t: usize) -> u64 {
        self.slice_count[id as usize][t]
    }

    /// Counts of every word in slice `t`.
    pub fn slice_counts(&self, t: usize) -> Vec<u64> {
        self.slice_count.iter().map(|c| c[t]).collect()
    }

    /// Maps tokens to ids, dropping out-of-vocabulary tokens.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Document {
        tokens.iter().filter_map(|t| self.id(t.as_ref())).collect()
    }

    pub fn encode_corpus(&self, slices: &[Vec<Vec<String>>], split: Split) -> TimeSlicedCorpus {
        TimeSlicedCorpus::new(
            slices
                .iter()
                .map(|docs| docs.iter().map(|d| self.encode(d)).collect())
                .collect(),
            split,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(texts: &[&str]) -> Vec<Vec<String>> {
        texts.iter().map(|t| crate::corpus::tokenize(t)).collect()
    }

    #[test]
    fn frequency_order_with_lexicographic_ties() {
        let v = Vocabulary::build(&[docs(&["a b a", "c a"])], &HashSet::new(), 2).unwrap();
        assert_eq!(v.words(), &["a", "b"]);
        assert_eq!(v.total_count(0), 3);
        assert_eq!(v.total_count(1), 1);
    }

    #[test]
    fn all_stopwords_is_empty_corpus() {
        let stop: HashSet<String> = ["a".to_string()].into();
        let err = Vocabulary::build(&[docs(&["a a"])], &stop, 10).unwrap_err();
        assert!(matches!(err, Error::EmptyCorpus(_)));
    }

    #[test]
    fn truncates_to_max_size() {
        let text: Vec<String> = (0..12_000).map(|i| format!("w{i}")).collect();
        let v = Vocabulary::build(&[vec![text]], &HashSet::new(), 10_000).unwrap();
        assert_eq!(v.len(), 10_000);
    }

    #[test]
    fn per_slice_counts_sum_to_total() {
        let slices = vec![docs(&["x y x", "z"]), docs(&["x z z z"])];
        let v = Vocabulary::build(&slices, &HashSet::new(), 10).unwrap();
        for id in 0..v.len() as u32 {
            let s: u64 = (0..2).map(|t| v.slice_count(id, t)).sum();
            assert_eq!(s, v.total_count(id));
            assert_eq!(v.id(v.word(id)), Some(id));
        }
        assert_eq!(v.words(), &["z", "x", "y"]);
        assert_eq!(v.slice_count(v.id("z").unwrap(), 1), 3);
    }

    #[test]
    fn encode_drops_oov() {
        let v = Vocabulary::build(&[docs(&["a b a"])], &HashSet::new(), 1).unwrap();
        assert_eq!(v.encode(&["a", "b", "q", "a"]), vec![0, 0]);
    }

    #[test]
    fn recount_follows_corpus() {
        let mut v = Vocabulary::build(&[docs(&["a b a"])], &HashSet::new(), 5).unwrap();
        let c = TimeSlicedCorpus::new(vec![vec![vec![1, 1]], vec![vec![0]]], Split::Train);
        v.recount(&c);
        assert_eq!(v.num_slices(), 2);
        assert_eq!(v.slice_counts(0), vec![0, 2]);
        assert_eq!(v.total_counts(), &[1, 2]);
    }
}
