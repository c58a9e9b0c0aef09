use std::fs;
use std::path::Path;

use diachron::corpus::io::{write_text_slices, write_vocabulary};
use diachron::corpus::{split_holdout, Split};
use diachron::run::{drift_run, eval_run, load_run, train_run, RunConfig, RunManifest};
use diachron::synth::{generate, SynthSpec};
use diachron::{ErrorKind, ModelKind};

/// Writes a small synthetic corpus with train/valid/test splits into `dir`.
fn write_corpus(dir: &Path) {
    let spec = SynthSpec {
        tokens_per_slice: 2_000,
        vocab_size: 80,
        num_slices: 3,
        seed: 5,
        ..Default::default()
    };
    let generated = generate(&spec).unwrap();
    let (vocab, corpus) = generated.encode().unwrap();
    let (train, valid, test) = split_holdout(&corpus, 0.2, 1).unwrap();
    write_vocabulary(&vocab, &dir.join("vocab.tsv")).unwrap();
    for (split, c) in [(Split::Train, train), (Split::Valid, valid), (Split::Test, test)] {
        let text: Vec<Vec<Vec<String>>> = c
            .slices
            .iter()
            .map(|docs| docs.iter().map(|d| d.iter().map(|&i| vocab.word(i).to_string()).collect()).collect())
            .collect();
        write_text_slices(&dir.join("corpus"), split, &text).unwrap();
    }
}

fn config(dir: &Path, model: &str, extra: &str) -> RunConfig {
    let text = format!(
        "model = \"{model}\"\noutput = \"runs/{model}\"\n\n[corpus]\ndir = \"corpus\"\nvocab = \"vocab.tsv\"\n\n\
         [train]\ndim = 5\nepochs = 3\nbatch_size = 512\nlearning_rate = 0.02\n{extra}"
    );
    let path = dir.join(format!("{model}.toml"));
    fs::write(&path, text).unwrap();
    RunConfig::load(&path).unwrap()
}

#[test]
fn every_model_trains_loads_and_evaluates() {
    let tmp = tempfile::tempdir().unwrap();
    write_corpus(tmp.path());
    for model in [ModelKind::Isg, ModelKind::Dsg, ModelKind::Dbe] {
        let cfg = config(tmp.path(), model.as_str(), "");
        let manifest = train_run(&cfg).unwrap();
        let out = tmp.path().join("runs").join(model.as_str());
        assert_eq!(RunManifest::read(&out).unwrap(), manifest);
        assert_eq!(manifest.num_slices, 3);
        assert!(manifest.slices.iter().all(|s| s.trace.len() == 3));

        let run = load_run(&out).unwrap();
        assert_eq!(run.word.len(), 3);
        assert_eq!(run.words.len(), manifest.vocab_size);
        assert_eq!(run.word[0].dim(), 5);
        assert_eq!(run.gaussian(1).is_some(), model == ModelKind::Dsg);

        let report = eval_run(&out, Split::Test).unwrap();
        assert!(report.mean < 0.0);
        assert!(report.slices.iter().all(|s| s.sum <= 0.0));

        let drift = drift_run(&run, 0, 10, 0.5).unwrap();
        assert!(drift.series.at(0).iter().all(|&d| d == 0.0));
        for (_, counts) in &drift.histogram.counts {
            assert_eq!(counts.iter().sum::<u64>(), run.words.len() as u64);
        }
        assert!((0.0..=1.0).contains(&drift.stability));
    }
}

#[test]
fn reruns_match_and_hash_tracks_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    write_corpus(tmp.path());
    let cfg = config(tmp.path(), "isg", "");
    let first = train_run(&cfg).unwrap();
    let a = fs::read(tmp.path().join("runs/isg/isg/t2.vec")).unwrap();
    let second = train_run(&cfg).unwrap();
    assert_eq!(first, second);
    assert_eq!(a, fs::read(tmp.path().join("runs/isg/isg/t2.vec")).unwrap());

    fs::write(tmp.path().join("corpus/train/t1.txt"), "w0001 w0002 w0003\n").unwrap();
    let third = train_run(&cfg).unwrap();
    assert_ne!(third.input_hash, first.input_hash);
}

#[test]
fn subset_trains_on_fewer_tokens() {
    let tmp = tempfile::tempdir().unwrap();
    write_corpus(tmp.path());
    let full = train_run(&config(tmp.path(), "isg", "")).unwrap();
    let mut cfg = config(tmp.path(), "isg", "");
    cfg.corpus.subset = 0.5;
    let half = train_run(&cfg).unwrap();
    for (f, h) in full.slices.iter().zip(&half.slices) {
        assert!(h.tokens < f.tokens, "{} vs {}", h.tokens, f.tokens);
    }
}

#[test]
fn bad_configs_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        "model = \"isg\"\noutput = \"o\"\ncolour = 1\n[corpus]\ndir = \"c\"\nvocab = \"v\"\n",
        "model = \"isg\"\noutput = \"o\"\n[corpus]\ndir = \"c\"\nvocab = \"v\"\n[dsg]\ndiffusion = 1.0\n",
        "model = \"sgns\"\noutput = \"o\"\n[corpus]\ndir = \"c\"\nvocab = \"v\"\n",
    ];
    for text in cases {
        let path = tmp.path().join("bad.toml");
        fs::write(&path, text).unwrap();
        let err = RunConfig::load(&path).and_then(|c| c.validate()).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::Usage, "{text}: {err}");
    }
}

#[test]
fn missing_run_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let err = load_run(&tmp.path().join("nothing")).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
}
