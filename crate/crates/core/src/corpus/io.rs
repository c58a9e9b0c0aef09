//! File formats owned by the corpus layer.
//!
//! * manifest: `<ISO-8601 timestamp>\t<path to UTF-8 document>` per line;
//!   relative paths resolve against the manifest's directory.
//! * stopwords: one word per line.
//! * vocabulary: `<word>\t<id>\t<total_count>` per line, in id order.
//! * sliced corpus directory: `<split>/t<k>.txt`, one tokenized document per
//!   line with tokens separated by single spaces.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::corpus::{parse_timestamp, tokenize, Split, Timestamp, Vocabulary};
use crate::{Error, Result};

/// Tokenized documents per slice.
pub type TextSlices = Vec<Vec<Vec<String>>>;

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub timestamp: Timestamp,
    pub path: PathBuf,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (ts, doc) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, n + 1, "expected `<timestamp>\\t<path>`"))?;
        let timestamp =
            parse_timestamp(ts).map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        let doc = PathBuf::from(doc.trim());
        let doc = if doc.is_absolute() { doc } else { base.join(doc) };
        out.push(ManifestEntry {
            timestamp,
            path: doc,
        });
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut w = create(path)?;
    for (ts, doc) in entries {
        writeln!(w, "{ts}\t{doc}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads and tokenizes every document listed in the manifest.
pub fn load_documents(manifest: &Path) -> Result<Vec<(Timestamp, Vec<String>)>> {
    read_manifest(manifest)?
        .into_iter()
        .map(|e| {
            let text = fs::read_to_string(&e.path).map_err(|err| Error::io(&e.path, err))?;
            Ok((e.timestamp, tokenize(&text)))
        })
        .collect()
}

pub fn read_stopwords(path: &Path) -> Result<HashSet<String>> {
    let mut out = HashSet::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let w = line.trim();
        if !w.is_empty() {
            out.insert(w.to_lowercase());
        }
    }
    Ok(out)
}

pub fn write_vocabulary(vocab: &Vocabulary, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for (id, word) in vocab.words().iter().enumerate() {
        writeln!(w, "{word}\t{id}\t{}", vocab.total_count(id as u32))
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_vocabulary(path: &Path) -> Result<Vocabulary> {
    let mut rows = Vec::new();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [word, id, count] = fields.as_slice() else {
            return Err(Error::parse(path, n + 1, "expected `<word>\\t<id>\\t<count>`"));
        };
        let id: usize = id
            .parse()
            .map_err(|_| Error::parse(path, n + 1, "bad id"))?;
        if id != rows.len() {
            return Err(Error::parse(path, n + 1, format!("ids must be dense, expected {}", rows.len())));
        }
        let count: u64 = count
            .parse()
            .map_err(|_| Error::parse(path, n + 1, "bad count"))?;
        rows.push((word.to_string(), count));
    }
    Vocabulary::from_counts(rows).map_err(|e| e.context(path.display().to_string()))
}

fn slice_file(dir: &Path, split: Split, t: usize) -> PathBuf {
    dir.join(split.as_str()).join(format!("t{t}.txt"))
}

pub fn write_text_slices(dir: &Path, split: Split, slices: &[Vec<Vec<String>>]) -> Result<()> {
    for (t, docs) in slices.iter().enumerate() {
        let path = slice_file(dir, split, t);
        let mut w = create(&path)?;
        for doc in docs {
            writeln!(w, "{}", doc.join(" ")).map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Reads `<dir>/<split>/t0.txt, t1.txt, ...` until the first missing file.
pub fn read_text_slices(dir: &Path, split: Split) -> Result<TextSlices> {
    let mut slices = Vec::new();
    loop {
        let path = slice_file(dir, split, slices.len());
        if !path.exists() {
            break;
        }
        let mut docs = Vec::new();
        for line in open(&path)?.lines() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            docs.push(line.split(' ').filter(|s| !s.is_empty()).map(String::from).collect());
        }
        slices.push(docs);
    }
    if slices.is_empty() {
        return Err(Error::MissingCheckpoint(slice_file(dir, split, 0)));
    }
    Ok(slices)
}

/// Files making up a sliced corpus directory, sorted, for content hashing.
pub fn corpus_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for split in [Split::Train, Split::Valid, Split::Test] {
        let mut t = 0;
        loop {
            let p = slice_file(dir, split, t);
            if !p.exists() {
                break;
            }
            out.push(p);
            t += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_and_documents() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "Hello, World").unwrap();
        fs::write(dir.path().join("b.txt"), "again").unwrap();
        let m = dir.path().join("manifest.tsv");
        fs::write(&m, "1987-01-05\ta.txt\n# comment\n1988\tb.txt\n").unwrap();
        let docs = load_documents(&m).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].1, vec!["hello", "world"]);

        fs::write(&m, "1987\tmissing.txt\n").unwrap();
        let err = load_documents(&m).unwrap_err();
        assert!(err.to_string().contains("missing.txt"));
    }

    #[test]
    fn vocabulary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let slices = vec![vec![tokenize("b a a c")]];
        let v = Vocabulary::build(&slices, &HashSet::new(), 10).unwrap();
        let p = dir.path().join("vocab.tsv");
        write_vocabulary(&v, &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a\t0\t2\nb\t1\t1\nc\t2\t1\n");
        let back = read_vocabulary(&p).unwrap();
        assert_eq!(back.words(), v.words());
        assert_eq!(back.total_counts(), v.total_counts());
    }

    #[test]
    fn text_slices_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let slices: TextSlices = vec![
            vec![vec!["a".into(), "b".into()], vec![]],
            vec![vec!["c".into()]],
        ];
        write_text_slices(dir.path(), Split::Valid, &slices).unwrap();
        assert_eq!(read_text_slices(dir.path(), Split::Valid).unwrap(), slices);
        assert!(read_text_slices(dir.path(), Split::Test).is_err());
        assert_eq!(corpus_files(dir.path()).len(), 2);
    }
}
