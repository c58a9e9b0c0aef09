use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use log::{info, warn};

use diachron::corpus::io::{
    load_documents, read_stopwords, read_text_slices, write_text_slices, write_vocabulary, TextSlices,
};
use diachron::corpus::{
    holdout_assignment, slice_documents, subsample_assignment, year_span, yearly_boundaries, Split, Timestamp,
    Vocabulary,
};
use diachron::drift_reg::Beta;
use diachron::init::InitKind;
use diachron::model::io::write_vectors;
use diachron::run::{drift_run, eval_run, load_run, train_run, RunConfig};
use diachron::synth::{generate, write_generated, ChangeKind, PlantedChange, SynthSpec};
use diachron::{Execution, ModelKind};

/// A command-line mistake that the core library cannot see.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Args)]
pub struct YearRange {
    /// First year of the first slice (defaults to the earliest document)
    #[arg(long)]
    first_year: Option<i32>,
    /// Year that closes the last slice; documents from it on are dropped
    /// (defaults to the year after the latest document)
    #[arg(long)]
    last_year: Option<i32>,
}

impl YearRange {
    fn boundaries(&self, stamps: &[Timestamp]) -> Result<Vec<Timestamp>> {
        let (lo, hi) = year_span(stamps).ok_or_else(|| diachron::Error::EmptyCorpus("manifest lists no documents".into()))?;
        let first = self.first_year.unwrap_or(lo);
        let last = self.last_year.unwrap_or(hi);
        if last <= first {
            return Err(usage(format!("last year {last} must come after first year {first}")));
        }
        Ok(yearly_boundaries(first, last))
    }
}

fn load_sliced(manifest: &Path, years: &YearRange) -> Result<TextSlices> {
    let docs = load_documents(manifest)?;
    let stamps: Vec<Timestamp> = docs.iter().map(|d| d.0).collect();
    let bounds = years.boundaries(&stamps)?;
    let sliced = slice_documents(docs, &bounds)?;
    if sliced.dropped > 0 {
        warn!("{} documents fall outside the slice boundaries and were dropped", sliced.dropped);
    }
    Ok(sliced.slices)
}

#[derive(Args)]
pub struct BuildVocabArgs {
    /// Manifest of `<timestamp>\t<path>` lines
    #[arg(long)]
    manifest: PathBuf,
    /// One stopword per line
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    max_size: usize,
    #[command(flatten)]
    years: YearRange,
    #[arg(long)]
    out: PathBuf,
}

pub fn build_vocab(a: BuildVocabArgs) -> Result<()> {
    let slices = load_sliced(&a.manifest, &a.years)?;
    let stop = match &a.stopwords {
        Some(p) => read_stopwords(p)?,
        None => HashSet::new(),
    };
    let vocab = Vocabulary::build(&slices, &stop, a.max_size)?;
    if vocab.len() < a.max_size {
        warn!("only {} distinct words, fewer than max size {}", vocab.len(), a.max_size);
    }
    write_vocabulary(&vocab, &a.out)?;
    let per_slice: Vec<u64> = (0..vocab.num_slices()).map(|t| vocab.slice_counts(t).iter().sum()).collect();
    println!("L = {}", vocab.len());
    println!("tokens = {} (per slice: {per_slice:?})", vocab.total_counts().iter().sum::<u64>());
    Ok(())
}

#[derive(Args)]
pub struct SliceArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    years: YearRange,
    /// Fraction of each slice's documents held out, split evenly into valid and test
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output corpus directory
    #[arg(long)]
    out: PathBuf,
}

fn pick(slices: &TextSlices, tags: &[Vec<Split>], which: Split) -> TextSlices {
    slices
        .iter()
        .zip(tags)
        .map(|(docs, tag)| docs.iter().zip(tag).filter(|(_, s)| **s == which).map(|(d, _)| d.clone()).collect())
        .collect()
}

pub fn slice(a: SliceArgs) -> Result<()> {
    let slices = load_sliced(&a.manifest, &a.years)?;
    match a.holdout {
        None => write_text_slices(&a.out, Split::Train, &slices)?,
        Some(fraction) => {
            let sizes: Vec<usize> = slices.iter().map(Vec::len).collect();
            let tags = holdout_assignment(&sizes, fraction, a.seed)?;
            for split in [Split::Train, Split::Valid, Split::Test] {
                write_text_slices(&a.out, split, &pick(&slices, &tags, split))?;
            }
        }
    }
    for (t, docs) in slices.iter().enumerate() {
        println!("t{t}\t{} documents\t{} tokens", docs.len(), docs.iter().map(Vec::len).sum::<usize>());
    }
    Ok(())
}

#[derive(Args)]
pub struct SubsampleArgs {
    /// Corpus directory written by `slice`
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn subsample(a: SubsampleArgs) -> Result<()> {
    let mut wrote = false;
    for split in [Split::Train, Split::Valid, Split::Test] {
        let Ok(slices) = read_text_slices(&a.corpus, split) else {
            continue;
        };
        let sizes: Vec<usize> = slices.iter().map(Vec::len).collect();
        let (kept, report) = subsample_assignment(&sizes, a.fraction, a.seed)?;
        let out: TextSlices = slices
            .iter()
            .zip(&kept)
            .map(|(docs, idx)| idx.iter().map(|&i| docs[i].clone()).collect())
            .collect();
        write_text_slices(&a.out, split, &out)?;
        let n: usize = kept.iter().map(Vec::len).sum();
        println!("{}: kept {n} of {} documents", split.as_str(), sizes.iter().sum::<usize>());
        if !report.empty_slices.is_empty() {
            println!("{}: empty slices {:?}", split.as_str(), report.empty_slices);
        }
        wrote = true;
    }
    if !wrote {
        return Err(diachron::Error::MissingCheckpoint(a.corpus.join("train").join("t0.txt")).into());
    }
    Ok(())
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    vocab_size: usize,
    #[arg(long, default_value_t = 5)]
    slices: usize,
    #[arg(long, default_value_t = 100_000)]
    tokens: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    topics: usize,
    #[arg(long)]
    planted_rate: Option<f64>,
    /// Year of slice 0 in the written manifest
    #[arg(long, default_value_t = 2000)]
    first_year: i32,
    /// Planted change `<content word index>:<slice>:<old topic>:<new topic>:<gradual|abrupt>`
    #[arg(long = "change")]
    changes: Vec<String>,
}

fn parse_change(s: &str) -> Result<PlantedChange> {
    let parts: Vec<&str> = s.split(':').collect();
    let [word, slice, old, new, kind] = parts.as_slice() else {
        return Err(usage(format!("bad change `{s}`, expected word:slice:old:new:kind")));
    };
    let num = |x: &str| x.parse::<usize>().map_err(|_| usage(format!("bad number `{x}` in change `{s}`")));
    let kind = match *kind {
        "gradual" => ChangeKind::Gradual,
        "abrupt" => ChangeKind::Abrupt,
        k => return Err(usage(format!("unknown change kind `{k}`"))),
    };
    Ok(PlantedChange {
        word: num(word)?,
        change_slice: num(slice)?,
        old_topic: num(old)?,
        new_topic: num(new)?,
        kind,
    })
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = SynthSpec {
        vocab_size: a.vocab_size,
        num_slices: a.slices,
        tokens_per_slice: a.tokens,
        seed: a.seed,
        num_topics: a.topics,
        changes: a.changes.iter().map(|c| parse_change(c)).collect::<Result<_>>()?,
        ..Default::default()
    };
    if let Some(r) = a.planted_rate {
        spec.planted_rate = r;
    }
    let corpus = generate(&spec)?;
    write_generated(&a.out, &corpus, a.first_year)?;
    println!(
        "wrote {} slices of {} tokens to {} ({} planted changes)",
        spec.num_slices,
        spec.tokens_per_slice,
        a.out.display(),
        corpus.changed_words().len()
    );
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    /// Run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    model: Option<ModelKind>,
    /// random, internal or backward-external
    #[arg(long)]
    init: Option<InitKind>,
    /// Pretrained vectors for backward-external init
    #[arg(long)]
    pretrained: Option<PathBuf>,
    #[arg(long)]
    reg_alpha: Option<f64>,
    /// A number or `mean`
    #[arg(long)]
    reg_beta: Option<Beta>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    subset: Option<f64>,
    /// Disable data parallelism
    #[arg(long)]
    sequential: bool,
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn apply_overrides(cfg: &mut RunConfig, a: &TrainArgs) {
    if let Some(m) = a.model {
        if m != cfg.model {
            if m != ModelKind::Dsg {
                cfg.dsg = None;
            }
            if m != ModelKind::Dbe {
                cfg.dbe = None;
            }
        }
        cfg.model = m;
    }
    if let Some(k) = a.init {
        cfg.init.kind = k;
    }
    if let Some(p) = &a.pretrained {
        cfg.init.pretrained_path = Some(absolute(p));
    }
    if let Some(x) = a.reg_alpha {
        cfg.reg.alpha = x;
        cfg.reg.enabled = x > 0.0;
    }
    if let Some(b) = a.reg_beta {
        cfg.reg.beta = b;
    }
    if let Some(o) = &a.output {
        cfg.output = absolute(o);
    }
    let t = &mut cfg.train;
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.dim = a.dim.unwrap_or(t.dim);
    t.learning_rate = a.learning_rate.unwrap_or(t.learning_rate);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.seed = a.seed.unwrap_or(t.seed);
    if a.sequential {
        t.execution = Execution::Sequential;
    }
    if let Some(s) = a.subset {
        cfg.corpus.subset = s;
    }
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    apply_overrides(&mut cfg, &a);
    info!("training {} into {}", cfg.model, cfg.output.display());
    let m = train_run(&cfg).with_context(|| format!("training run {}", a.config.display()))?;
    println!("{} run written to {}", m.config.model, m.config.output.display());
    println!("slices trained in order {:?}", m.slice_order);
    for s in &m.slices {
        let Some(last) = s.trace.last() else { continue };
        match last.heldout_lpos {
            Some(h) => println!("t{}\ttrain L_pos {:.4}\theld-out L_pos {h:.4}", s.slice, last.train_lpos),
            None => println!("t{}\ttrain L_pos {:.4}", s.slice, last.train_lpos),
        }
    }
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    /// Run directory
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let report = eval_run(&a.run, a.split)?;
    println!("{report}");
    Ok(())
}

#[derive(Args)]
pub struct DriftArgs {
    #[arg(long)]
    run: PathBuf,
    /// Reference slice
    #[arg(long, default_value_t = 0)]
    t0: usize,
    #[arg(long, default_value_t = 60)]
    bins: usize,
    /// Stability threshold as a fraction of the mean drift
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Output directory for drift.csv and histogram.csv (defaults to the run directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of top-drifting words to list
    #[arg(long, default_value_t = 10)]
    top: usize,
}

pub fn drift(a: DriftArgs) -> Result<()> {
    let run = load_run(&a.run)?;
    let report = drift_run(&run, a.t0, a.bins, a.threshold)?;
    let out = a.out.unwrap_or_else(|| a.run.clone());
    report.series.write_csv(&out.join("drift.csv"), &run.words)?;
    report.histogram.write_csv(&out.join("histogram.csv"))?;
    match report.directedness {
        Some(d) => println!("directedness\t{d:.4}"),
        None => println!("directedness\t-"),
    }
    let last = report.series.num_slices() - 1;
    println!("stability({})\t{:.4}", report.threshold, report.stability);
    let finals = report.series.at(last);
    let mut order: Vec<usize> = (0..finals.len()).collect();
    order.sort_by(|&i, &j| finals[j].total_cmp(&finals[i]).then(i.cmp(&j)));
    println!("top drift at t{last}:");
    for &i in order.iter().take(a.top) {
        println!("  {}\t{:.4}", run.words[i], finals[i]);
    }
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Part {
    Word,
    Context,
    Variance,
}

#[derive(Args)]
pub struct ExportArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    slice: usize,
    #[arg(long, value_enum, default_value = "word")]
    what: Part,
    #[arg(long)]
    out: PathBuf,
}

pub fn export(a: ExportArgs) -> Result<()> {
    let run = load_run(&a.run)?;
    let n = run.word.len();
    if a.slice >= n {
        return Err(usage(format!("slice {} out of range, the run has {n} slices", a.slice)));
    }
    let m = match a.what {
        Part::Word => &run.word[a.slice],
        Part::Context => &run.context[a.slice],
        Part::Variance => run
            .word_variance
            .get(a.slice)
            .ok_or_else(|| usage("variances exist for dsg runs only"))?,
    };
    write_vectors(&a.out, &run.words, m)?;
    println!("wrote {} vectors of dimension {} to {}", m.rows(), m.dim(), a.out.display());
    Ok(())
}
