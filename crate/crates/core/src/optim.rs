//! Adam with per-row ("lazy") updates.
//!
//! The optimizer always *descends* the gradient it is given. Trainers that
//! maximise a log-likelihood negate their gradient before calling it.
//!
//! Rows are updated only when a step touches them: [`AdamState::step_rows`]
//! leaves every other row, including its moments, untouched. Bias correction
//! uses the row's own step count, so a sparsely touched row follows the
//! dense Adam recurrence over the subsequence of steps that touched it.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::model::RowGradient;
use crate::{Error, Result};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    name: String,
    rows: usize,
    dim: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    row_steps: Vec<u64>,
    step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// `name` identifies the parameter matrix in error messages.
    pub fn new(name: impl Into<String>, rows: usize, dim: usize) -> Self {
        AdamState {
            name: name.into(),
            rows,
            dim,
            m: vec![0.0; rows * dim],
            v: vec![0.0; rows * dim],
            row_steps: vec![0; rows],
            step_count: 0,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn row_steps(&self, row: usize) -> u64 {
        self.row_steps[row]
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    fn nan_error(&self) -> Error {
        Error::NonFinite {
            what: format!("gradient of `{}`", self.name),
        }
    }

    #[inline]
    fn update_row(&mut self, row: usize, params: &mut [f64], grad: &[f64], lr: f64) {
        self.row_steps[row] += 1;
        let k = self.row_steps[row] as f64;
        let c1 = 1.0 - self.beta1.powf(k);
        let c2 = 1.0 - self.beta2.powf(k);
        let base = row * self.dim;
        for j in 0..self.dim {
            let g = grad[j];
            let m = &mut self.m[base + j];
            let v = &mut self.v[base + j];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            params[base + j] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.rows * self.dim {
            return Err(Error::DimensionMismatch {
                what: format!("parameters of `{}`", self.name),
                expected: self.rows * self.dim,
                found: params.len(),
            });
        }
        Ok(())
    }

    /// Dense step: every row is updated.
    pub fn step_dense(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        self.check_params(params)?;
        self.check_params(grad)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(self.nan_error());
        }
        for r in 0..self.rows {
            let g = &grad[r * self.dim..(r + 1) * self.dim];
            self.update_row(r, params, g, lr);
        }
        self.step_count += 1;
        Ok(())
    }

    /// Sparse step: only the rows present in `grad` are updated.
    pub fn step_rows(&mut self, params: &mut [f64], grad: &RowGradient, lr: f64) -> Result<()> {
        self.check_params(params)?;
        if grad.dim() != self.dim && !grad.is_empty() {
            return Err(Error::DimensionMismatch {
                what: format!("gradient of `{}`", self.name),
                expected: self.dim,
                found: grad.dim(),
            });
        }
        if grad.iter().any(|(_, g)| g.iter().any(|x| !x.is_finite())) {
            return Err(self.nan_error());
        }
        for (r, g) in grad.iter() {
            self.update_row(r as usize, params, g, lr);
        }
        self.step_count += 1;
        Ok(())
    }

    /// Writes the state as text: a header line
    /// `adam <rows> <dim> <steps> <beta1> <beta2> <epsilon> <name>`, then one
    /// line per row: `<row_steps> <m_1..m_d> <v_1..v_d>`.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(
            w,
            "adam {} {} {} {} {} {} {}",
            self.rows, self.dim, self.step_count, self.beta1, self.beta2, self.epsilon, self.name
        )
        .map_err(io)?;
        for r in 0..self.rows {
            write!(w, "{}", self.row_steps[r]).map_err(io)?;
            for x in &self.m[r * self.dim..(r + 1) * self.dim] {
                write!(w, " {x}").map_err(io)?;
            }
            for x in &self.v[r * self.dim..(r + 1) * self.dim] {
                write!(w, " {x}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_text(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(path, 1, "empty optimizer state"))?
            .map_err(|e| Error::io(path, e))?;
        let h: Vec<&str> = header.splitn(8, ' ').collect();
        if h.len() != 8 || h[0] != "adam" {
            return Err(Error::parse(path, 1, "bad optimizer header"));
        }
        let bad = |line: usize| Error::parse(path, line, "bad number");
        let rows: usize = h[1].parse().map_err(|_| bad(1))?;
        let dim: usize = h[2].parse().map_err(|_| bad(1))?;
        let mut st = AdamState::new(h[7], rows, dim);
        st.step_count = h[3].parse().map_err(|_| bad(1))?;
        st.beta1 = h[4].parse().map_err(|_| bad(1))?;
        st.beta2 = h[5].parse().map_err(|_| bad(1))?;
        st.epsilon = h[6].parse().map_err(|_| bad(1))?;
        for r in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(path, r + 2, "missing row"))?
                .map_err(|e| Error::io(path, e))?;
            let mut toks = line.split(' ');
            st.row_steps[r] = toks
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(r + 2))?;
            let vals: Vec<f64> = toks
                .map(|t| t.parse::<f64>().map_err(|_| bad(r + 2)))
                .collect::<Result<_>>()?;
            if vals.len() != 2 * dim {
                return Err(Error::parse(path, r + 2, "wrong number of moments"));
            }
            st.m[r * dim..(r + 1) * dim].copy_from_slice(&vals[..dim]);
            st.v[r * dim..(r + 1) * dim].copy_from_slice(&vals[dim..]);
        }
        Ok(st)
    }
}

/// One dense Adam descent step on `params`.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, learning_rate: f64) -> Result<()> {
    if !(learning_rate > 0.0) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    state.step_dense(params, grad, learning_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RowAccumulator;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut s = AdamState::new("x", 3, 1);
        adam_step(&mut p, &[0.0; 3], &mut s, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn first_step_magnitude() {
        let mut p = vec![0.0];
        let mut s = AdamState::new("x", 1, 1);
        adam_step(&mut p, &[1.0], &mut s, 0.1).unwrap();
        assert!((p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn minimises_a_parabola() {
        let mut x = vec![5.0];
        let mut s = AdamState::new("x", 1, 1);
        for _ in 0..1000 {
            let g = [2.0 * x[0]];
            adam_step(&mut x, &g, &mut s, 0.1).unwrap();
        }
        assert!(x[0].abs() < 1e-2, "x = {}", x[0]);
    }

    #[test]
    fn nan_names_the_matrix() {
        let mut p = vec![0.0; 2];
        let mut s = AdamState::new("context V[3]", 2, 1);
        let err = adam_step(&mut p, &[f64::NAN, 0.0], &mut s, 0.1).unwrap_err();
        assert!(err.to_string().contains("context V[3]"));
        assert_eq!(p, vec![0.0; 2]);
    }

    #[test]
    fn sparse_steps_skip_untouched_rows() {
        let mut p = vec![1.0, 1.0, 1.0, 1.0];
        let mut s = AdamState::new("x", 2, 2);
        let mut acc = RowAccumulator::new(2, 2);
        acc.add_scaled(1, 1.0, &[0.5, -0.5]);
        let g = acc.finish();
        s.step_rows(&mut p, &g, 0.1).unwrap();
        s.step_rows(&mut p, &g, 0.1).unwrap();
        assert_eq!(&p[..2], &[1.0, 1.0]);
        assert_eq!(s.row_steps(0), 0);
        assert_eq!(s.row_steps(1), 2);
        assert_eq!(s.step_count(), 2);
    }

    #[test]
    fn deterministic_and_resumable() {
        let grads: Vec<Vec<f64>> = (0..20).map(|k| vec![(k as f64).sin(), (k as f64 * 0.3).cos()]).collect();
        let run = |split: Option<usize>| {
            let dir = tempfile::tempdir().unwrap();
            let mut p = vec![0.3, -0.2];
            let mut s = AdamState::new("w", 1, 2);
            for (k, g) in grads.iter().enumerate() {
                if Some(k) == split {
                    let path = dir.path().join("state.adam");
                    s.write_text(&path).unwrap();
                    s = AdamState::read_text(&path).unwrap();
                }
                adam_step(&mut p, g, &mut s, 0.05).unwrap();
            }
            (p, s)
        };
        let (a, sa) = run(None);
        let (b, sb) = run(Some(7));
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }
}
