use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::exec::{self, Execution};
use crate::model::EmbeddingMatrix;
use crate::{Error, ModelKind, Result};

/// Per-word L2 distance `‖u_{i,t} − u_{i,t0}‖₂`.
pub fn compute_drift(u_t: &EmbeddingMatrix, u_t0: &EmbeddingMatrix) -> Vec<f64> {
    assert!(u_t.same_shape(u_t0), "drift needs matrices of equal shape");
    (0..u_t.rows())
        .map(|i| {
            u_t.row(i)
                .iter()
                .zip(u_t0.row(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Matrix-level drift: the root of the summed squared differences over all
/// words, i.e. the Frobenius norm of `U_t − U_t0`.
pub fn drift_total(u_t: &EmbeddingMatrix, u_t0: &EmbeddingMatrix) -> f64 {
    compute_drift(u_t, u_t0).iter().map(|d| d * d).sum::<f64>().sqrt()
}

/// Drift of every word from a reference slice to every slice.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSeries {
    pub reference_slice: usize,
    /// `values[i][t]`, zero at the reference slice.
    pub values: Vec<Vec<f64>>,
    pub model: ModelKind,
}

impl DriftSeries {
    /// `slices[t]` is the word matrix (posterior means for DSG) of slice `t`.
    pub fn from_matrices(
        slices: &[&EmbeddingMatrix],
        reference_slice: usize,
        model: ModelKind,
        mode: Execution,
    ) -> Result<Self> {
        let Some(reference) = slices.get(reference_slice) else {
            return Err(Error::InvalidArgument(format!(
                "reference slice {reference_slice} out of range for {} slices",
                slices.len()
            )));
        };
        for m in slices {
            m.check_shape(reference.rows(), reference.dim(), "slice matrix")?;
        }
        let columns = exec::map_range(mode, slices.len(), |t| compute_drift(slices[t], reference));
        let values = (0..reference.rows())
            .map(|i| columns.iter().map(|c| c[i]).collect())
            .collect();
        Ok(DriftSeries {
            reference_slice,
            values,
            model,
        })
    }

    pub fn num_words(&self) -> usize {
        self.values.len()
    }

    pub fn num_slices(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Drifts of all words at slice `t`.
    pub fn at(&self, t: usize) -> Vec<f64> {
        self.values.iter().map(|w| w[t]).collect()
    }

    pub fn mean_at(&self, t: usize) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|w| w[t]).sum::<f64>() / self.values.len() as f64
    }

    /// Target slices ordered by distance from the reference slice.
    pub fn targets(&self) -> Vec<usize> {
        let t0 = self.reference_slice as i64;
        let mut t: Vec<usize> = (0..self.num_slices()).filter(|&t| t != self.reference_slice).collect();
        t.sort_by_key(|&s| ((s as i64 - t0).abs(), s));
        t
    }

    /// Every drift at every target slice, pooled.
    pub fn pooled_targets(&self) -> Vec<f64> {
        let targets = self.targets();
        self.values
            .iter()
            .flat_map(|w| targets.iter().map(move |&t| w[t]))
            .collect()
    }

    /// `word,t,drift` rows for every word and slice.
    pub fn write_csv(&self, path: &Path, words: &[String]) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "word,t,drift").map_err(io)?;
        for (i, row) in self.values.iter().enumerate() {
            for (t, d) in row.iter().enumerate() {
                writeln!(w, "{},{t},{d}", words[i]).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// Kendall-style trend of a sequence against its index:
/// `(concordant − discordant) / pairs`; ties count as neither.
pub fn kendall_trend(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut score = 0i64;
    for a in 0..n {
        for b in a + 1..n {
            if values[b] > values[a] {
                score += 1;
            } else if values[b] < values[a] {
                score -= 1;
            }
        }
    }
    score as f64 / (n * (n - 1) / 2) as f64
}

fn need_targets(series: &DriftSeries) -> Result<Vec<usize>> {
    let targets = series.targets();
    if targets.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "directedness needs at least 2 target slices, got {}",
            targets.len()
        )));
    }
    Ok(targets)
}

/// Trend of the per-slice mean drift with distance from the reference slice;
/// +1 means drift grows at every step.
pub fn directedness(series: &DriftSeries) -> Result<f64> {
    let targets = need_targets(series)?;
    let means: Vec<f64> = targets.iter().map(|&t| series.mean_at(t)).collect();
    Ok(kendall_trend(&means))
}

/// [`directedness`] restricted to one word's drift series.
pub fn word_directedness(series: &DriftSeries, word: usize) -> Result<f64> {
    let targets = need_targets(series)?;
    let v: Vec<f64> = targets.iter().map(|&t| series.values[word][t]).collect();
    Ok(kendall_trend(&v))
}

/// Fraction of words whose drift at `target` is below
/// `threshold_fraction × mean drift at target`.
pub fn stability_fraction(series: &DriftSeries, target: usize, threshold_fraction: f64) -> Result<f64> {
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold fraction {threshold_fraction} must lie in (0, 1)"
        )));
    }
    if target >= series.num_slices() {
        return Err(Error::InvalidArgument(format!("target slice {target} out of range")));
    }
    let cut = threshold_fraction * series.mean_at(target);
    let below = series.values.iter().filter(|w| w[target] < cut).count();
    Ok(below as f64 / series.num_words() as f64)
}

/// Rank (0 = largest) of `word`'s drift at `target` among all words.
pub fn drift_rank(series: &DriftSeries, target: usize, word: usize) -> usize {
    let d = series.values[word][target];
    series.values.iter().filter(|w| w[target] > d).count()
}

/// Linear-interpolation quantile, `q` in [0, 1].
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}
