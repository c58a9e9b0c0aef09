//! Word-vector text format: a `<rows> <dim>` header, then one line per word,
//! `<word> <v1> ... <vd>`. Floats are written in shortest round-trip form, so
//! a write/read cycle is lossless.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::model::{EmbeddingMatrix, Role};
use crate::{Error, Result};

pub fn write_vectors(path: &Path, words: &[String], m: &EmbeddingMatrix) -> Result<()> {
    if words.len() != m.rows() {
        return Err(Error::DimensionMismatch {
            what: "word list for vector export".into(),
            expected: m.rows(),
            found: words.len(),
        });
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{} {}", m.rows(), m.dim()).map_err(io)?;
    for (i, word) in words.iter().enumerate() {
        write!(w, "{word}").map_err(io)?;
        for x in m.row(i) {
            write!(w, " {x}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a vector file, returning its words in file order and the matrix.
pub fn read_vectors(path: &Path, role: Role) -> Result<(Vec<String>, EmbeddingMatrix)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing `<count> <dim>` header"))?
        .map_err(|e| Error::io(path, e))?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::parse(path, 1, "bad header")))
        .collect::<Result<_>>()?;
    let [rows, dim] = nums[..] else {
        return Err(Error::parse(path, 1, "header must be `<count> <dim>`"));
    };
    let mut words = Vec::with_capacity(rows);
    let mut data = Vec::with_capacity(rows * dim);
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let word = toks.next().unwrap_or_default().to_string();
        let before = data.len();
        for t in toks {
            data.push(
                t.parse::<f64>()
                    .map_err(|_| Error::parse(path, n + 2, format!("bad float `{t}`")))?,
            );
        }
        if data.len() - before != dim {
            return Err(Error::DimensionMismatch {
                what: format!("{} line {}", path.display(), n + 2),
                expected: dim,
                found: data.len() - before,
            });
        }
        words.push(word);
    }
    if words.len() != rows {
        return Err(Error::parse(
            path,
            1,
            format!("header announces {rows} rows, found {}", words.len()),
        ));
    }
    Ok((words, EmbeddingMatrix::from_vec(rows, dim, data, role)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn roundtrip_is_lossless(vals in prop::collection::vec(-1e6f64..1e6, 6)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.vec");
            let m = EmbeddingMatrix::from_vec(3, 2, vals, Role::Word).unwrap();
            let words = vec!["a".to_string(), "b".into(), "c".into()];
            write_vectors(&p, &words, &m).unwrap();
            let (w2, m2) = read_vectors(&p, Role::Word).unwrap();
            prop_assert_eq!(w2, words);
            prop_assert_eq!(m2.as_slice(), m.as_slice());
        }
    }

    #[test]
    fn header_and_dimension_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.vec");
        fs::write(&p, "2 3\na 1 2 3\nb 1 2\n").unwrap();
        assert!(matches!(read_vectors(&p, Role::Word), Err(Error::DimensionMismatch { .. })));
        fs::write(&p, "3 1\na 1\n").unwrap();
        assert!(read_vectors(&p, Role::Word).is_err());
        assert!(read_vectors(&dir.path().join("none.vec"), Role::Word).is_err());
    }
}
