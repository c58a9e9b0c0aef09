//! Declarative training runs: a TOML configuration, the pipeline from a
//! sliced corpus directory to checkpoints, and loaders for finished runs.
//!
//! A run directory holds `manifest.json` and one subdirectory of checkpoints
//! named after the model:
//!
//! * `isg/t<k>.vec`, `isg/t<k>.ctx.vec`
//! * `dsg/t<k>.mean.vec`, `dsg/t<k>.var.vec`, `dsg/t<k>.ctx.mean.vec`,
//!   `dsg/t<k>.ctx.var.vec`
//! * `dbe/t<k>.vec`, `dbe/context.vec`

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    compute_drift, directedness, drift_histogram, evaluate_lpos, stability_fraction, DriftHistogram, DriftSeries,
    LposReport, SliceEmbeddings,
};
use crate::corpus::io::{corpus_files, read_text_slices, read_vocabulary};
use crate::corpus::{subsample_corpus, Split, TimeSlicedCorpus, Vocabulary};
use crate::dbe::{self, DbeParams};
use crate::drift_reg::RegConfig;
use crate::dsg::{self, DsgParams, GaussianEmbeddingMatrix};
use crate::init::{apply_scheme, InitKind, InitScheme, Initial};
use crate::isg::{self, Direction};
use crate::model::io::{read_vectors, write_vectors};
use crate::model::{EmbeddingMatrix, Role, TrainConfig};
use crate::train::EpochStats;
use crate::{Error, ModelKind, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    /// Sliced corpus directory (`<split>/t<k>.txt`).
    pub dir: PathBuf,
    /// Vocabulary file (`<word>\t<id>\t<count>`).
    pub vocab: PathBuf,
    /// Fraction of documents kept per slice.
    #[serde(default = "one")]
    pub subset: f64,
}

fn one() -> f64 {
    1.0
}

/// A complete training run.
///
/// ```toml
/// model = "dsg"
/// output = "runs/dsg"
///
/// [corpus]
/// dir = "corpus"
/// vocab = "vocab.tsv"
/// subset = 1.0
///
/// [init]
/// kind = "internal"
///
/// [train]
/// dim = 100
/// epochs = 100
///
/// [dsg]
/// diffusion = 1.0
/// anchor = 0.1
///
/// [reg]
/// alpha = 0.5
/// beta = "mean"
/// enabled = true
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub output: PathBuf,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub init: InitScheme,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsg: Option<DsgParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dbe: Option<DbeParams>,
    #[serde(default)]
    pub reg: RegConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths in it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| e.context(path.display().to_string()))?;
        let base = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let base = std::path::absolute(base).map_err(|e| Error::io(base, e))?;
        cfg.rebase(&base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output);
        fix(&mut self.corpus.dir);
        fix(&mut self.corpus.vocab);
        if let Some(p) = self.init.pretrained_path.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.init.validate()?;
        self.reg.validate()?;
        if !(self.corpus.subset > 0.0 && self.corpus.subset <= 1.0) {
            return Err(Error::Config(format!("corpus subset {} must lie in (0, 1]", self.corpus.subset)));
        }
        match self.model {
            ModelKind::Isg => {
                if self.dsg.is_some() || self.dbe.is_some() {
                    return Err(Error::Config("an isg run takes neither a [dsg] nor a [dbe] block".into()));
                }
                if self.reg.is_active() {
                    return Err(Error::Config("drift regularization applies to dsg and dbe only".into()));
                }
            }
            ModelKind::Dsg => {
                if self.dbe.is_some() {
                    return Err(Error::Config("a dsg run cannot take a [dbe] block".into()));
                }
            }
            ModelKind::Dbe => {
                if self.dsg.is_some() {
                    return Err(Error::Config("a dbe run cannot take a [dsg] block".into()));
                }
            }
        }
        if let Some(p) = &self.dsg {
            p.validate()?;
        }
        if let Some(p) = &self.dbe {
            p.validate()?;
        }
        Ok(())
    }

    /// Fills in the parameter block of the chosen model with defaults.
    pub fn resolved(mut self) -> Self {
        match self.model {
            ModelKind::Dsg => {
                self.dsg.get_or_insert_with(DsgParams::default);
            }
            ModelKind::Dbe => {
                self.dbe.get_or_insert_with(DbeParams::default);
            }
            ModelKind::Isg => {}
        }
        self
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Per-slice record in the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub slice: usize,
    pub tokens: usize,
    pub trace: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    /// `sha256:<hex>` over the vocabulary, corpus files and pretrained vectors.
    pub input_hash: String,
    pub vocab_size: usize,
    pub num_slices: usize,
    pub direction: Direction,
    pub slice_order: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrained_coverage: Option<f64>,
    pub slices: Vec<SliceRecord>,
    /// DBE only: value of the prior after each epoch.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prior_trace: Vec<f64>,
}

impl RunManifest {
    pub fn read(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(Error::MissingCheckpoint(path));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.line(), e.to_string()))
    }

    pub fn write(&self, run_dir: &Path) -> Result<()> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Resolved drift-regularizer thresholds, `[slice][epoch]`.
    pub fn betas(&self) -> Vec<Vec<Option<f64>>> {
        self.slices
            .iter()
            .map(|s| s.trace.iter().map(|e| e.beta).collect())
            .collect()
    }
}

/// Content hash of a list of files, each contributing its name and bytes.
pub fn hash_files(paths: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        h.update(name.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    let digest = h.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(format!("sha256:{hex}"))
}

/// The vocabulary and encoded split named in a run configuration.
pub fn load_split(cfg: &RunConfig, split: Split) -> Result<(Vocabulary, TimeSlicedCorpus)> {
    let vocab = read_vocabulary(&cfg.corpus.vocab)?;
    let text = read_text_slices(&cfg.corpus.dir, split)?;
    let mut corpus = vocab.encode_corpus(&text, split);
    if cfg.corpus.subset < 1.0 {
        let (sub, report) = subsample_corpus(&corpus, cfg.corpus.subset, cfg.train.seed)?;
        if !report.empty_slices.is_empty() {
            log::warn!("subsampling left slices {:?} empty", report.empty_slices);
        }
        corpus = sub;
    }
    Ok((vocab, corpus))
}

fn vec_path(dir: &Path, model: ModelKind, name: &str) -> PathBuf {
    dir.join(model.as_str()).join(name)
}

fn write_mat(dir: &Path, model: ModelKind, name: &str, words: &[String], m: &EmbeddingMatrix) -> Result<()> {
    write_vectors(&vec_path(dir, model, name), words, m)
}

fn read_mat(dir: &Path, model: ModelKind, name: &str, role: Role) -> Result<EmbeddingMatrix> {
    let path = vec_path(dir, model, name);
    if !path.exists() {
        return Err(Error::MissingCheckpoint(path));
    }
    Ok(read_vectors(&path, role)?.1)
}

/// Runs the whole pipeline and writes checkpoints plus the manifest.
pub fn train_run(cfg: &RunConfig) -> Result<RunManifest> {
    let cfg = cfg.clone().resolved();
    cfg.validate()?;
    let (vocab, corpus) = load_split(&cfg, Split::Train)?;
    let heldout = match read_text_slices(&cfg.corpus.dir, Split::Valid) {
        Ok(text) if text.len() == corpus.num_slices() => Some(vocab.encode_corpus(&text, Split::Valid)),
        _ => None,
    };
    let words = vocab.words().to_vec();
    let n = corpus.num_slices();
    info!("{} run: {} words, {n} slices, {} tokens", cfg.model, words.len(), corpus.total_tokens());

    let mut inputs = vec![cfg.corpus.vocab.clone()];
    inputs.extend(corpus_files(&cfg.corpus.dir));
    if cfg.init.kind == InitKind::BackwardExternal {
        inputs.extend(cfg.init.pretrained_path.clone());
    }
    let input_hash = hash_files(&inputs)?;

    let dsg_params = cfg.dsg.unwrap_or_default();
    let dbe_params = cfg.dbe.unwrap_or_default();
    let plan = apply_scheme(&cfg.init, cfg.model, &corpus, &words, &cfg.train, &dsg_params, &dbe_params)?;
    let reg = cfg.reg.is_active().then_some(&cfg.reg);
    let out = &cfg.output;
    fs::create_dir_all(out.join(cfg.model.as_str())).map_err(|e| Error::io(out, e))?;

    let (traces, order, prior_trace) = match plan.initial {
        Initial::Isg { word, context } => {
            let m = isg::train_incremental(&corpus, heldout.as_ref(), word, context, &cfg.train, plan.direction)?;
            for t in 0..n {
                write_mat(out, cfg.model, &format!("t{t}.vec"), &words, &m.word[t])?;
                write_mat(out, cfg.model, &format!("t{t}.ctx.vec"), &words, &m.context[t])?;
            }
            (m.traces, m.order, Vec::new())
        }
        Initial::Dsg { word, context } => {
            let m = dsg::train_dsg(
                &corpus,
                heldout.as_ref(),
                word,
                context,
                &dsg_params,
                &cfg.train,
                plan.direction,
                reg,
            )?;
            for t in 0..n {
                write_mat(out, cfg.model, &format!("t{t}.mean.vec"), &words, &m.word[t].mean)?;
                write_mat(out, cfg.model, &format!("t{t}.var.vec"), &words, &m.word[t].variance)?;
                write_mat(out, cfg.model, &format!("t{t}.ctx.mean.vec"), &words, &m.context[t].mean)?;
                write_mat(out, cfg.model, &format!("t{t}.ctx.var.vec"), &words, &m.context[t].variance)?;
            }
            (m.traces, m.order, Vec::new())
        }
        Initial::Dbe { word, context } => {
            if plan.direction == Direction::Backward {
                info!("dbe trains all slices jointly; the backward order only affects initialization");
            }
            let m = dbe::train_dbe(&corpus, heldout.as_ref(), word, context, &dbe_params, &cfg.train, reg)?;
            for t in 0..n {
                write_mat(out, cfg.model, &format!("t{t}.vec"), &words, &m.word[t])?;
            }
            write_mat(out, cfg.model, "context.vec", &words, &m.context)?;
            (m.traces, (0..n).collect(), m.prior_trace)
        }
    };

    let manifest = RunManifest {
        config: cfg.clone(),
        input_hash,
        vocab_size: words.len(),
        num_slices: n,
        direction: plan.direction,
        slice_order: order,
        pretrained_coverage: plan.coverage.map(|c| c.fraction()),
        slices: traces
            .into_iter()
            .enumerate()
            .map(|(t, trace)| SliceRecord {
                slice: t,
                tokens: corpus.slice_tokens(t),
                trace,
            })
            .collect(),
        prior_trace,
    };
    manifest.write(out)?;
    Ok(manifest)
}

/// Word and context parameters of a finished run, per slice.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub manifest: RunManifest,
    pub words: Vec<String>,
    /// Word vectors (means for DSG).
    pub word: Vec<EmbeddingMatrix>,
    /// Context vectors per slice (DBE repeats its shared matrix).
    pub context: Vec<EmbeddingMatrix>,
    /// DSG only: word variances.
    pub word_variance: Vec<EmbeddingMatrix>,
}

impl LoadedRun {
    pub fn model(&self) -> ModelKind {
        self.manifest.config.model
    }

    pub fn embeddings(&self) -> SliceEmbeddings<'_> {
        match self.model() {
            ModelKind::Dbe => SliceEmbeddings::Bernoulli {
                word: &self.word,
                context: &self.context[0],
            },
            _ => SliceEmbeddings::SkipGram {
                word: &self.word,
                context: &self.context,
            },
        }
    }

    /// DSG word posteriors of slice `t`.
    pub fn gaussian(&self, t: usize) -> Option<GaussianEmbeddingMatrix> {
        let variance = self.word_variance.get(t)?.clone();
        GaussianEmbeddingMatrix::new(self.word[t].clone(), variance).ok()
    }
}

pub fn load_run(run_dir: &Path) -> Result<LoadedRun> {
    let manifest = RunManifest::read(run_dir)?;
    let model = manifest.config.model;
    let n = manifest.num_slices;
    let mut word = Vec::with_capacity(n);
    let mut context = Vec::with_capacity(n);
    let mut word_variance = Vec::new();
    let words = match model {
        ModelKind::Isg => {
            for t in 0..n {
                word.push(read_mat(run_dir, model, &format!("t{t}.vec"), Role::Word)?);
                context.push(read_mat(run_dir, model, &format!("t{t}.ctx.vec"), Role::Context)?);
            }
            read_vectors(&vec_path(run_dir, model, "t0.vec"), Role::Word)?.0
        }
        ModelKind::Dsg => {
            for t in 0..n {
                word.push(read_mat(run_dir, model, &format!("t{t}.mean.vec"), Role::Word)?);
                word_variance.push(read_mat(run_dir, model, &format!("t{t}.var.vec"), Role::Word)?);
                context.push(read_mat(run_dir, model, &format!("t{t}.ctx.mean.vec"), Role::Context)?);
            }
            read_vectors(&vec_path(run_dir, model, "t0.mean.vec"), Role::Word)?.0
        }
        ModelKind::Dbe => {
            let v = read_mat(run_dir, model, "context.vec", Role::Context)?;
            for t in 0..n {
                word.push(read_mat(run_dir, model, &format!("t{t}.vec"), Role::Word)?);
                context.push(v.clone());
            }
            read_vectors(&vec_path(run_dir, model, "t0.vec"), Role::Word)?.0
        }
    };
    if words.len() != manifest.vocab_size {
        return Err(Error::DimensionMismatch {
            what: format!("checkpoints of {}", run_dir.display()),
            expected: manifest.vocab_size,
            found: words.len(),
        });
    }
    Ok(LoadedRun {
        manifest,
        words,
        word,
        context,
        word_variance,
    })
}

/// Held-out L_pos of a finished run on `split`.
pub fn eval_run(run_dir: &Path, split: Split) -> Result<LposReport> {
    let run = load_run(run_dir)?;
    let cfg = &run.manifest.config;
    let (_, heldout) = load_split(cfg, split)?;
    evaluate_lpos(&heldout, run.embeddings(), run.model(), cfg.train.window, cfg.train.execution)
}

/// Drift analysis of a finished run.
#[derive(Debug, Clone)]
pub struct DriftReport {
    pub series: DriftSeries,
    pub histogram: DriftHistogram,
    /// `None` with fewer than two target slices.
    pub directedness: Option<f64>,
    /// Stability fraction at the last slice.
    pub stability: f64,
    pub threshold: f64,
}

pub fn drift_run(run: &LoadedRun, t0: usize, bins: usize, threshold: f64) -> Result<DriftReport> {
    let mats: Vec<&EmbeddingMatrix> = run.word.iter().collect();
    let series = DriftSeries::from_matrices(&mats, t0, run.model(), run.manifest.config.train.execution)?;
    let histogram = drift_histogram(&series, bins)?;
    let last = series.num_slices() - 1;
    let stability = if last == t0 {
        1.0
    } else {
        stability_fraction(&series, last, threshold)?
    };
    Ok(DriftReport {
        directedness: directedness(&series).ok(),
        histogram,
        stability,
        threshold,
        series,
    })
}

/// Per-word drift of the word matrix of slice `t` from slice `t0`.
pub fn slice_drift(run: &LoadedRun, t0: usize, t: usize) -> Result<Vec<f64>> {
    let n = run.word.len();
    if t0 >= n || t >= n {
        return Err(Error::InvalidArgument(format!("slice index out of range 0..{n}")));
    }
    Ok(compute_drift(&run.word[t], &run.word[t0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
model = "dbe"
output = "out"

[corpus]
dir = "corpus"
vocab = "vocab.tsv"

[train]
dim = 8
epochs = 2

[reg]
alpha = 0.5
beta = "mean"
enabled = true
"#;

    #[test]
    fn config_parses_and_resolves() {
        let cfg = RunConfig::from_toml(CONFIG).unwrap();
        assert_eq!(cfg.model, ModelKind::Dbe);
        assert_eq!(cfg.train.dim, 8);
        assert_eq!(cfg.train.window, 4);
        assert_eq!(cfg.corpus.subset, 1.0);
        assert!(cfg.reg.is_active());
        let cfg = cfg.resolved();
        assert_eq!(cfg.dbe, Some(DbeParams::default()));
        cfg.validate().unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn mismatched_parameter_block_is_rejected() {
        let text = CONFIG.replace("[reg]", "[dsg]\ndiffusion = 1.0\n\n[reg]");
        let cfg = RunConfig::from_toml(&text).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let isg = CONFIG.replace("\"dbe\"", "\"isg\"");
        assert!(RunConfig::from_toml(&isg).unwrap().validate().is_err());
        assert!(RunConfig::from_toml("model = \"lda\"\noutput = \"x\"").is_err());
    }

    #[test]
    fn hash_depends_on_content() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.txt");
        fs::write(&a, "x y").unwrap();
        let h1 = hash_files(std::slice::from_ref(&a)).unwrap();
        assert!(h1.starts_with("sha256:"));
        assert_eq!(h1, hash_files(std::slice::from_ref(&a)).unwrap());
        fs::write(&a, "x z").unwrap();
        assert_ne!(h1, hash_files(&[a]).unwrap());
    }
}
