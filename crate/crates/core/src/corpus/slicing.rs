use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime};
use rand::seq::SliceRandom;

use crate::corpus::{Document, Split, TimeSlicedCorpus};
use crate::{seed, Error, Result};

pub type Timestamp = NaiveDateTime;

/// Parses `YYYY`, `YYYY-MM`, `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM:SS` or a full
/// RFC 3339 timestamp (converted to UTC).
pub fn parse_timestamp(s: &str) -> Result<Timestamp> {
    let s = s.trim();
    let bad = || Error::InvalidArgument(format!("unrecognised timestamp `{s}`"));
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt);
        }
    }
    let parts: Vec<&str> = s.split('-').collect();
    let num = |p: &str| p.parse::<u32>().map_err(|_| bad());
    let (y, m, d) = match parts.as_slice() {
        [y] => (y.parse::<i32>().map_err(|_| bad())?, 1, 1),
        [y, m] => (y.parse::<i32>().map_err(|_| bad())?, num(m)?, 1),
        [y, m, d] => (y.parse::<i32>().map_err(|_| bad())?, num(m)?, num(d)?),
        _ => return Err(bad()),
    };
    NaiveDate::from_ymd_opt(y, m, d)
        .and_then(|date| date.and_hms_opt(0, 0, 0))
        .ok_or_else(bad)
}

/// `(first, last + 1)` over the calendar years of `timestamps`, so that
/// [`yearly_boundaries`] of the result covers every timestamp.
pub fn year_span(timestamps: &[Timestamp]) -> Option<(i32, i32)> {
    let years = timestamps.iter().map(|t| t.date().year());
    let lo = years.clone().min()?;
    let hi = years.max()?;
    Some((lo, hi + 1))
}

/// January 1st of every year in `first..=last`; `last` closes the final slice.
pub fn yearly_boundaries(first: i32, last: i32) -> Vec<Timestamp> {
    (first..=last)
        .filter_map(|y| NaiveDate::from_ymd_opt(y, 1, 1)?.and_hms_opt(0, 0, 0))
        .collect()
}

/// Documents grouped by slice, plus the number dropped for falling outside
/// every interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Sliced<D> {
    pub slices: Vec<Vec<D>>,
    pub dropped: usize,
}

/// Assigns each document to the half-open interval `[b_t, b_{t+1})` that
/// contains its timestamp. `n` boundaries give `n - 1` slices.
pub fn slice_documents<D>(docs: Vec<(Timestamp, D)>, boundaries: &[Timestamp]) -> Result<Sliced<D>> {
    if boundaries.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two slice boundaries, got {}",
            boundaries.len()
        )));
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "slice boundaries must be strictly increasing".into(),
        ));
    }
    let mut slices: Vec<Vec<D>> = (1..boundaries.len()).map(|_| Vec::new()).collect();
    let mut dropped = 0;
    for (ts, doc) in docs {
        // index of the last boundary <= ts
        let upper = boundaries.partition_point(|b| *b <= ts);
        if upper == 0 || upper == boundaries.len() {
            dropped += 1;
        } else {
            slices[upper - 1].push(doc);
        }
    }
    if slices.iter().all(Vec::is_empty) {
        return Err(Error::EmptyCorpus(format!(
            "all {dropped} documents fall outside the slice boundaries"
        )));
    }
    Ok(Sliced { slices, dropped })
}

/// Per-slice split tags for slices of the given sizes: `fraction` of each
/// slice is held out, split evenly between validation and test (test takes
/// the odd one out).
pub fn holdout_assignment(sizes: &[usize], fraction: f64, seed: u64) -> Result<Vec<Vec<Split>>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction {fraction} must lie in (0, 1)"
        )));
    }
    sizes
        .iter()
        .enumerate()
        .map(|(t, &n)| {
            let held = (n as f64 * fraction).round() as usize;
            if held < 2 || n < 3 {
                return Err(Error::SliceTooSmall {
                    slice: t,
                    docs: n,
                    needed: held,
                });
            }
            let n_valid = held / 2;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut seed::rng(seed, &[seed::SPLIT, t as u64]));
            let mut tag = vec![Split::Train; n];
            for &i in &order[..n_valid] {
                tag[i] = Split::Valid;
            }
            for &i in &order[n_valid..held] {
                tag[i] = Split::Test;
            }
            Ok(tag)
        })
        .collect()
}

/// Applies [`holdout_assignment`] to a corpus, returning (train, valid, test).
pub fn split_holdout(
    corpus: &TimeSlicedCorpus,
    fraction: f64,
    seed: u64,
) -> Result<(TimeSlicedCorpus, TimeSlicedCorpus, TimeSlicedCorpus)> {
    let sizes: Vec<usize> = corpus.slices.iter().map(Vec::len).collect();
    let tags = holdout_assignment(&sizes, fraction, seed)?;
    let pick = |which: Split| -> TimeSlicedCorpus {
        let slices = corpus
            .slices
            .iter()
            .zip(&tags)
            .map(|(docs, tag)| {
                docs.iter()
                    .zip(tag)
                    .filter(|(_, s)| **s == which)
                    .map(|(d, _)| d.clone())
                    .collect::<Vec<Document>>()
            })
            .collect();
        TimeSlicedCorpus::new(slices, which)
    };
    Ok((pick(Split::Train), pick(Split::Valid), pick(Split::Test)))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SubsampleReport {
    /// Slices left without any document.
    pub empty_slices: Vec<usize>,
}

/// Indices (ascending) of the documents kept per slice when keeping
/// `round(fraction * n)` randomly chosen documents of each slice.
pub fn subsample_assignment(
    sizes: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<Vec<usize>>, SubsampleReport)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "subsample fraction {fraction} must lie in (0, 1]"
        )));
    }
    let mut report = SubsampleReport::default();
    let kept = sizes
        .iter()
        .enumerate()
        .map(|(t, &n)| {
            if fraction == 1.0 {
                return (0..n).collect();
            }
            let keep = (n as f64 * fraction).round() as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut seed::rng(seed, &[seed::SUBSAMPLE, t as u64]));
            let mut chosen = order[..keep].to_vec();
            chosen.sort_unstable();
            chosen
        })
        .collect::<Vec<Vec<usize>>>();
    for (t, k) in kept.iter().enumerate() {
        if k.is_empty() {
            log::warn!("slice {t} is empty after subsampling to {fraction}");
            report.empty_slices.push(t);
        }
    }
    Ok((kept, report))
}

/// Keeps `round(fraction * n)` randomly chosen documents per slice, in their
/// original order. Slices that end up empty are reported, not rejected.
pub fn subsample_corpus(
    corpus: &TimeSlicedCorpus,
    fraction: f64,
    seed: u64,
) -> Result<(TimeSlicedCorpus, SubsampleReport)> {
    let sizes: Vec<usize> = corpus.slices.iter().map(Vec::len).collect();
    let (kept, report) = subsample_assignment(&sizes, fraction, seed)?;
    let slices = corpus
        .slices
        .iter()
        .zip(kept)
        .map(|(docs, idx)| idx.into_iter().map(|i| docs[i].clone()).collect())
        .collect();
    Ok((TimeSlicedCorpus::new(slices, corpus.split), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn ts(s: &str) -> Timestamp {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn timestamp_formats() {
        assert_eq!(ts("1987"), ts("1987-01-01"));
        assert_eq!(ts("2007-06"), ts("2007-06-01T00:00:00"));
        assert_eq!(ts("2001-02-03T04:05:06Z"), ts("2001-02-03T04:05:06"));
        assert!(parse_timestamp("june").is_err());
        assert!(parse_timestamp("2001-13-01").is_err());
    }

    #[test]
    fn year_span_covers_all_documents() {
        let t = [ts("1990-05-01"), ts("1987-12-31"), ts("1988")];
        assert_eq!(year_span(&t), Some((1987, 1991)));
        assert_eq!(year_span(&[]), None);
    }

    #[test]
    fn incomplete_last_year_is_dropped() {
        let docs = vec![(ts("1987-03-01"), "a"), (ts("1988"), "b"), (ts("2007-06"), "c")];
        let s = slice_documents(docs, &yearly_boundaries(1987, 2007)).unwrap();
        assert_eq!(s.slices.len(), 20);
        assert_eq!(s.slices[0], vec!["a"]);
        assert_eq!(s.slices[1], vec!["b"]);
        assert_eq!(s.dropped, 1);
    }

    #[test]
    fn single_slice_and_errors() {
        let docs = vec![(ts("1990"), 1), (ts("1995"), 2)];
        let s = slice_documents(docs.clone(), &[ts("1900"), ts("2100")]).unwrap();
        assert_eq!(s.slices, vec![vec![1, 2]]);
        assert!(slice_documents(docs.clone(), &[]).is_err());
        assert!(slice_documents(docs.clone(), &[ts("2000"), ts("1990")]).is_err());
        let err = slice_documents(docs, &[ts("2000"), ts("2001")]).unwrap_err();
        assert!(matches!(err, Error::EmptyCorpus(_)));
    }

    #[test]
    fn uniform_years_conserve_documents() {
        // 100 documents spread over 1985..2010; boundaries cover 1987..2007.
        let docs: Vec<(Timestamp, usize)> = (0..100)
            .map(|i| {
                let year = 1985 + (i * 25 / 100) as i32;
                let month = 1 + (i % 12) as u32;
                (NaiveDate::from_ymd_opt(year, month, 15).unwrap().and_hms_opt(0, 0, 0).unwrap(), i)
            })
            .collect();
        let bounds = yearly_boundaries(1987, 2007);
        let s = slice_documents(docs.clone(), &bounds).unwrap();
        // brute-force assignment
        let mut expect = vec![0usize; 20];
        let mut dropped = 0;
        for (t, _) in &docs {
            match (0..20).find(|&k| bounds[k] <= *t && *t < bounds[k + 1]) {
                Some(k) => expect[k] += 1,
                None => dropped += 1,
            }
        }
        let got: Vec<usize> = s.slices.iter().map(Vec::len).collect();
        assert_eq!(got, expect);
        assert_eq!(s.dropped, dropped);
        assert_eq!(got.iter().sum::<usize>() + s.dropped, 100);
    }

    fn corpus_of(sizes: &[usize]) -> TimeSlicedCorpus {
        let mut next = 0u32;
        let slices = sizes
            .iter()
            .map(|&n| {
                (0..n)
                    .map(|_| {
                        next += 1;
                        vec![next]
                    })
                    .collect()
            })
            .collect();
        TimeSlicedCorpus::new(slices, Split::Train)
    }

    #[test]
    fn holdout_sizes() {
        let (tr, va, te) = split_holdout(&corpus_of(&[100]), 0.10, 1).unwrap();
        assert_eq!((tr.slices[0].len(), va.slices[0].len(), te.slices[0].len()), (90, 5, 5));
        assert_eq!(va.split, Split::Valid);
        let again = split_holdout(&corpus_of(&[100]), 0.10, 1).unwrap();
        assert_eq!(again.1, va);
        assert_eq!(again.2, te);
    }

    #[test]
    fn holdout_partition_is_exact() {
        let c = corpus_of(&[37]);
        let (tr, va, te) = split_holdout(&c, 0.10, 42).unwrap();
        let all: Vec<&Document> = tr.slices[0].iter().chain(&va.slices[0]).chain(&te.slices[0]).collect();
        assert_eq!(all.len(), 37);
        let set: HashSet<&Document> = all.iter().copied().collect();
        assert_eq!(set.len(), 37);
        let orig: HashSet<&Document> = c.slices[0].iter().collect();
        assert_eq!(set, orig);
    }

    #[test]
    fn holdout_too_small_names_slice() {
        match split_holdout(&corpus_of(&[100, 10]), 0.1, 0).unwrap_err() {
            Error::SliceTooSmall { slice, .. } => assert_eq!(slice, 1),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn subsample_counts() {
        let c = corpus_of(&[40, 3]);
        let (same, _) = subsample_corpus(&c, 1.0, 3).unwrap();
        assert_eq!(same, c);
        let (half, rep) = subsample_corpus(&c, 0.5, 3).unwrap();
        assert_eq!(half.slices[0].len(), 20);
        assert!(rep.empty_slices.is_empty());
        let (tiny, rep) = subsample_corpus(&c, 0.1, 3).unwrap();
        assert_eq!(tiny.slices[0].len(), 4);
        assert_eq!(rep.empty_slices, vec![1]);
        assert!(subsample_corpus(&c, 0.0, 3).is_err());
    }
}
