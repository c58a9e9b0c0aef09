use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::DriftSeries;
use crate::{Error, Result};

/// Drift histogram with edges shared by every target slice.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftHistogram {
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    /// `(slice, counts)` per target slice.
    pub counts: Vec<(usize, Vec<u64>)>,
    /// Plotting hint; counts are stored raw.
    pub log_scale: bool,
}

impl DriftHistogram {
    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "bin_lo,bin_hi,t,count").map_err(io)?;
        for (t, counts) in &self.counts {
            for (b, c) in counts.iter().enumerate() {
                writeln!(w, "{},{},{t},{c}", self.edges[b], self.edges[b + 1]).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

fn bin_of(x: f64, lo: f64, width: f64, bins: usize) -> usize {
    (((x - lo) / width).floor() as usize).min(bins - 1)
}

/// Histogram of word drifts at every target slice, edges spanning the global
/// minimum and maximum over all target slices.
pub fn drift_histogram(series: &DriftSeries, bins: usize) -> Result<DriftHistogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let targets = series.targets();
    let pooled = series.pooled_targets();
    if pooled.is_empty() {
        return Err(Error::InvalidArgument("no target slices to histogram".into()));
    }
    let lo = pooled.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|b| if b == bins { hi } else { lo + width * b as f64 })
        .collect();
    let counts = targets
        .iter()
        .map(|&t| {
            let mut c = vec![0u64; bins];
            for w in &series.values {
                c[bin_of(w[t], lo, width, bins)] += 1;
            }
            (t, c)
        })
        .collect();
    Ok(DriftHistogram {
        edges,
        counts,
        log_scale: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ModelKind;

    #[test]
    fn counts_cover_every_word() {
        let s = DriftSeries {
            reference_slice: 0,
            values: (0..50).map(|i| vec![0.0, i as f64, 2.0 * i as f64]).collect(),
            model: ModelKind::Dsg,
        };
        let h = drift_histogram(&s, 7).unwrap();
        assert_eq!(h.bins(), 7);
        assert_eq!(h.edges[0], 0.0);
        assert_eq!(h.edges[7], 98.0);
        for (_, c) in &h.counts {
            assert_eq!(c.iter().sum::<u64>(), 50);
        }
        assert_eq!(h.counts[1].1[6], 8);
    }

    #[test]
    fn degenerate_range() {
        let s = DriftSeries {
            reference_slice: 0,
            values: (0..5).map(|_| vec![0.0, 0.0]).collect(),
            model: ModelKind::Dsg,
        };
        let h = drift_histogram(&s, 4).unwrap();
        assert_eq!(h.edges, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(h.counts[0].1, vec![5, 0, 0, 0]);
        assert!(drift_histogram(&s, 0).is_err());
    }
}
