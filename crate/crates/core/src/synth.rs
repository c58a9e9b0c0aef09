//! Synthetic diachronic corpora with planted semantic changes.
//!
//! Content words are split into disjoint topics; every document draws one
//! topic and mixes its words with a shared pool of function words. A planted
//! word appears in documents of its old topic before the change and of its
//! new topic after it, either abruptly or through a linear mixture.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::corpus::io::{write_manifest, TextSlices};
use crate::corpus::{Split, TimeSlicedCorpus, Vocabulary};
use crate::exec::{self, Execution};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Gradual,
    Abrupt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedChange {
    /// Index among content words.
    pub word: usize,
    pub change_slice: usize,
    pub old_topic: usize,
    pub new_topic: usize,
    pub kind: ChangeKind,
}

impl PlantedChange {
    /// Share of the word's occurrences drawn from the new topic at slice `t`.
    pub fn mix(&self, t: usize, num_slices: usize) -> f64 {
        match self.kind {
            ChangeKind::Abrupt => (t >= self.change_slice) as u8 as f64,
            ChangeKind::Gradual => {
                let span = (num_slices - self.change_slice) as f64;
                ((t as f64 - self.change_slice as f64 + 1.0) / span).clamp(0.0, 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub vocab_size: usize,
    pub num_slices: usize,
    pub tokens_per_slice: usize,
    pub seed: u64,
    pub num_topics: usize,
    pub function_words: usize,
    /// Probability that a token is a function word.
    pub function_rate: f64,
    pub doc_len: usize,
    /// Exponent of the Zipf weights inside each word pool.
    pub zipf_skew: f64,
    /// Probability that a content token of a matching document is the planted word.
    pub planted_rate: f64,
    pub changes: Vec<PlantedChange>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            vocab_size: 500,
            num_slices: 5,
            tokens_per_slice: 100_000,
            seed: 0,
            num_topics: 10,
            function_words: 20,
            function_rate: 0.3,
            doc_len: 50,
            zipf_skew: 1.0,
            planted_rate: 0.02,
            changes: Vec::new(),
        }
    }
}

impl SynthSpec {
    pub fn content_words(&self) -> usize {
        self.vocab_size.saturating_sub(self.function_words)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_slices == 0 || self.tokens_per_slice == 0 || self.doc_len < 2 {
            return bad("synth needs at least one slice, some tokens and documents of 2+ tokens".into());
        }
        if self.num_topics < 2 {
            return bad("synth needs at least 2 topics".into());
        }
        if self.content_words() < self.num_topics {
            return bad(format!(
                "{} content words cannot fill {} topics",
                self.content_words(),
                self.num_topics
            ));
        }
        if self.function_words == 0 && self.function_rate > 0.0 {
            return bad("function_rate > 0 needs function words".into());
        }
        for (name, p) in [("function_rate", self.function_rate), ("planted_rate", self.planted_rate)] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1)"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.changes {
            if c.word >= self.content_words() {
                return bad(format!("planted word {} is not a content word", c.word));
            }
            if !seen.insert(c.word) {
                return bad(format!("planted word {} appears twice", c.word));
            }
            if c.change_slice == 0 || c.change_slice >= self.num_slices {
                return bad(format!("change slice {} must lie in [1, {})", c.change_slice, self.num_slices));
            }
            if c.old_topic >= self.num_topics || c.new_topic >= self.num_topics || c.old_topic == c.new_topic {
                return bad("planted change needs two distinct existing topics".into());
            }
        }
        Ok(())
    }

    pub fn function_word(&self, i: usize) -> String {
        format!("fw{i:03}")
    }

    pub fn content_word(&self, i: usize) -> String {
        format!("w{i:04}")
    }

    /// All word forms: function words, then content words.
    pub fn words(&self) -> Vec<String> {
        (0..self.function_words)
            .map(|i| self.function_word(i))
            .chain((0..self.content_words()).map(|i| self.content_word(i)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub word: String,
    /// `None` for stable words.
    pub change_slice: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub slices: TextSlices,
    pub truth: Vec<GroundTruth>,
}

impl GeneratedCorpus {
    pub fn changed_words(&self) -> Vec<&str> {
        self.truth
            .iter()
            .filter(|g| g.change_slice.is_some())
            .map(|g| g.word.as_str())
            .collect()
    }

    /// Vocabulary over every generated word and the id-encoded corpus.
    pub fn encode(&self) -> Result<(Vocabulary, TimeSlicedCorpus)> {
        let vocab = Vocabulary::build(&self.slices, &Default::default(), usize::MAX)?;
        let corpus = vocab.encode_corpus(&self.slices, Split::Train);
        Ok((vocab, corpus))
    }
}

fn zipf(n: usize, skew: f64) -> WeightedAliasIndex<f64> {
    WeightedAliasIndex::new((0..n).map(|r| 1.0 / ((r + 1) as f64).powf(skew)).collect()).expect("nonempty pool")
}

pub fn generate(spec: &SynthSpec) -> Result<GeneratedCorpus> {
    spec.validate()?;
    let planted: std::collections::HashSet<usize> = spec.changes.iter().map(|c| c.word).collect();
    let topics: Vec<Vec<usize>> = (0..spec.num_topics)
        .map(|z| {
            (0..spec.content_words())
                .filter(|k| k % spec.num_topics == z && !planted.contains(k))
                .collect()
        })
        .collect();
    if let Some(z) = topics.iter().position(Vec::is_empty) {
        return Err(Error::Config(format!("topic {z} has no stable words")));
    }
    let topic_dist: Vec<WeightedAliasIndex<f64>> = topics.iter().map(|t| zipf(t.len(), spec.zipf_skew)).collect();
    let function_dist = (spec.function_words > 0).then(|| zipf(spec.function_words, spec.zipf_skew));

    let slices = exec::map_range(Execution::default(), spec.num_slices, |t| {
        let mut rng = seed::rng(spec.seed, &[seed::SYNTH, t as u64]);
        let mixes: Vec<f64> = spec.changes.iter().map(|c| c.mix(t, spec.num_slices)).collect();
        let mut docs = Vec::new();
        let mut left = spec.tokens_per_slice;
        while left > 0 {
            let len = spec.doc_len.min(left);
            left -= len;
            let z = rng.random_range(0..spec.num_topics);
            let doc: Vec<String> = (0..len)
                .map(|_| {
                    if let Some(f) = &function_dist {
                        if rng.random::<f64>() < spec.function_rate {
                            return spec.function_word(f.sample(&mut rng));
                        }
                    }
                    for (c, m) in spec.changes.iter().zip(&mixes) {
                        let weight = if z == c.old_topic {
                            1.0 - m
                        } else if z == c.new_topic {
                            *m
                        } else {
                            0.0
                        };
                        if weight > 0.0 && rng.random::<f64>() < spec.planted_rate * weight {
                            return spec.content_word(c.word);
                        }
                    }
                    spec.content_word(topics[z][topic_dist[z].sample(&mut rng)])
                })
                .collect();
            docs.push(doc);
        }
        docs
    });
    let truth = spec
        .words()
        .into_iter()
        .enumerate()
        .map(|(i, word)| {
            let change_slice = i
                .checked_sub(spec.function_words)
                .and_then(|k| spec.changes.iter().find(|c| c.word == k))
                .map(|c| c.change_slice);
            GroundTruth { word, change_slice }
        })
        .collect();
    Ok(GeneratedCorpus { slices, truth })
}

/// Writes `docs/t<k>/d<n>.txt` (one document per file), `manifest.tsv` with
/// slice `k` dated `<first_year + k>-06-15`, and `truth.csv` with
/// `word,change_slice` rows (empty change slice for stable words).
pub fn write_generated(dir: &Path, corpus: &GeneratedCorpus, first_year: i32) -> Result<()> {
    let mut entries = Vec::new();
    for (t, docs) in corpus.slices.iter().enumerate() {
        let sub = dir.join("docs").join(format!("t{t}"));
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (n, doc) in docs.iter().enumerate() {
            let rel = format!("docs/t{t}/d{n}.txt");
            let path = dir.join(&rel);
            fs::write(&path, doc.join(" ") + "\n").map_err(|e| Error::io(&path, e))?;
            entries.push((format!("{}-06-15", first_year + t as i32), rel));
        }
    }
    write_manifest(&dir.join("manifest.tsv"), &entries)?;
    let path = dir.join("truth.csv");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut text = String::from("word,change_slice\n");
    for g in &corpus.truth {
        let c = g.change_slice.map(|c| c.to_string()).unwrap_or_default();
        text.push_str(&format!("{},{c}\n", g.word));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn small(changes: Vec<PlantedChange>) -> SynthSpec {
        SynthSpec {
            vocab_size: 120,
            tokens_per_slice: 20_000,
            seed: 4,
            changes,
            ..Default::default()
        }
    }

    #[test]
    fn no_changes_means_all_stable() {
        let g = generate(&small(vec![])).unwrap();
        assert!(g.changed_words().is_empty());
        assert_eq!(g.truth.len(), 120);
        for docs in &g.slices {
            assert_eq!(docs.iter().map(Vec::len).sum::<usize>(), 20_000);
        }
    }

    fn context_distribution(docs: &[Vec<String>], word: &str) -> HashMap<String, f64> {
        let mut counts: HashMap<String, f64> = HashMap::new();
        let mut total = 0.0;
        for d in docs {
            for (p, w) in d.iter().enumerate() {
                if w != word {
                    continue;
                }
                for q in p.saturating_sub(4)..(p + 5).min(d.len()) {
                    if q != p {
                        *counts.entry(d[q].clone()).or_default() += 1.0;
                        total += 1.0;
                    }
                }
            }
        }
        counts.values_mut().for_each(|c| *c /= total);
        counts
    }

    #[test]
    fn abrupt_change_moves_contexts() {
        let change = PlantedChange {
            word: 3,
            change_slice: 2,
            old_topic: 3,
            new_topic: 7,
            kind: ChangeKind::Abrupt,
        };
        let spec = small(vec![change]);
        let g = generate(&spec).unwrap();
        assert_eq!(g.changed_words(), vec!["w0003"]);
        let a = context_distribution(&g.slices[1], "w0003");
        let b = context_distribution(&g.slices[3], "w0003");
        let keys: std::collections::HashSet<&String> = a.keys().chain(b.keys()).collect();
        let tv: f64 = 0.5
            * keys
                .into_iter()
                .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
                .sum::<f64>();
        assert!(tv > 0.5, "total variation {tv}");
    }

    #[test]
    fn deterministic_and_validated() {
        let spec = small(vec![]);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let bad = small(vec![PlantedChange {
            word: 1,
            change_slice: 0,
            old_topic: 0,
            new_topic: 1,
            kind: ChangeKind::Gradual,
        }]);
        assert!(generate(&bad).is_err());
    }

    #[test]
    fn gradual_mixture() {
        let c = PlantedChange {
            word: 0,
            change_slice: 1,
            old_topic: 0,
            new_topic: 1,
            kind: ChangeKind::Gradual,
        };
        let m: Vec<f64> = (0..5).map(|t| c.mix(t, 5)).collect();
        assert_eq!(m, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
