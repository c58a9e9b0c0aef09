use crate::corpus::PairView;
use crate::exec::{self, Execution};
use crate::model::{dot, EmbeddingMatrix};

/// Pairs per gradient chunk. Fixed so the reduction order, and with it the
/// floating-point result, does not depend on the thread count.
const GRAD_CHUNK: usize = 1024;

/// `1 / (1 + e^{-x})` without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x) = -ln(1 + e^{-x})`, stable in both tails.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Positive and negative parts of the SGNS log-likelihood.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogLikelihood {
    pub positive: f64,
    pub negative: f64,
    pub n_positive: usize,
    pub n_negative: usize,
}

impl LogLikelihood {
    pub fn total(&self) -> f64 {
        self.positive + self.negative
    }

    /// Mean log-probability per positive pair (0 when there are none).
    pub fn mean_positive(&self) -> f64 {
        if self.n_positive == 0 {
            0.0
        } else {
            self.positive / self.n_positive as f64
        }
    }

    fn add(&mut self, o: &LogLikelihood) {
        self.positive += o.positive;
        self.negative += o.negative;
        self.n_positive += o.n_positive;
        self.n_negative += o.n_negative;
    }
}

/// Gradient restricted to the rows it touches; `rows` is sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGradient {
    dim: usize,
    rows: Vec<u32>,
    values: Vec<f64>,
}

impl RowGradient {
    pub fn empty(dim: usize) -> Self {
        RowGradient {
            dim,
            rows: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[f64])> + '_ {
        self.rows
            .iter()
            .zip(self.values.chunks_exact(self.dim.max(1)))
            .map(|(&r, v)| (r, v))
    }

    pub fn get(&self, row: u32) -> Option<&[f64]> {
        self.rows
            .binary_search(&row)
            .ok()
            .map(|k| &self.values[k * self.dim..(k + 1) * self.dim])
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|x| *x *= a);
    }

    pub fn to_dense(&self, num_rows: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_rows * self.dim];
        for (r, v) in self.iter() {
            let r = r as usize;
            out[r * self.dim..(r + 1) * self.dim].copy_from_slice(v);
        }
        out
    }
}

/// Sparse row accumulator backed by a dense slot table.
pub(crate) struct RowAccumulator {
    dim: usize,
    slot: Vec<u32>,
    rows: Vec<u32>,
    values: Vec<f64>,
}

impl RowAccumulator {
    pub(crate) fn new(num_rows: usize, dim: usize) -> Self {
        RowAccumulator {
            dim,
            slot: vec![u32::MAX; num_rows],
            rows: Vec::new(),
            values: Vec::new(),
        }
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, row: u32) -> &mut [f64] {
        let mut s = self.slot[row as usize];
        if s == u32::MAX {
            s = self.rows.len() as u32;
            self.slot[row as usize] = s;
            self.rows.push(row);
            self.values.resize(self.values.len() + self.dim, 0.0);
        }
        let s = s as usize;
        &mut self.values[s * self.dim..(s + 1) * self.dim]
    }

    #[inline]
    pub(crate) fn add_scaled(&mut self, row: u32, a: f64, x: &[f64]) {
        for (o, xi) in self.row_mut(row).iter_mut().zip(x) {
            *o += a * xi;
        }
    }

    pub(crate) fn merge(&mut self, g: &RowGradient) {
        for (r, v) in g.iter() {
            self.add_scaled(r, 1.0, v);
        }
    }

    pub(crate) fn finish(self) -> RowGradient {
        let mut order: Vec<usize> = (0..self.rows.len()).collect();
        order.sort_unstable_by_key(|&k| self.rows[k]);
        let mut values = Vec::with_capacity(self.values.len());
        for &k in &order {
            values.extend_from_slice(&self.values[k * self.dim..(k + 1) * self.dim]);
        }
        RowGradient {
            dim: self.dim,
            rows: order.iter().map(|&k| self.rows[k]).collect(),
            values,
        }
    }
}

fn check(view: &PairView<'_>, u: &EmbeddingMatrix, v: &EmbeddingMatrix) {
    assert_eq!(u.dim(), v.dim(), "U and V must share the embedding dimension");
    debug_assert!(view.centers.iter().all(|&c| (c as usize) < u.rows()));
    debug_assert!(view.contexts.iter().all(|&c| (c as usize) < v.rows()));
}

fn chunk_loglik(view: &PairView<'_>, u: &EmbeddingMatrix, v: &EmbeddingMatrix) -> LogLikelihood {
    let mut ll = LogLikelihood::default();
    for (c, x, label) in view.iter() {
        let s = dot(u.row(c as usize), v.row(x as usize));
        match label {
            crate::corpus::Label::Positive => {
                ll.positive += log_sigmoid(s);
                ll.n_positive += 1;
            }
            crate::corpus::Label::Negative => {
                ll.negative += log_sigmoid(-s);
                ll.n_negative += 1;
            }
        }
    }
    ll
}

/// `Σ_pos ln σ(uᵢ·vⱼ) + Σ_neg ln σ(-uᵢ·vⱼ)`, with the positive part kept
/// separately.
pub fn sgns_log_likelihood(view: PairView<'_>, u: &EmbeddingMatrix, v: &EmbeddingMatrix) -> LogLikelihood {
    check(&view, u, v);
    chunk_loglik(&view, u, v)
}

/// Gradients of [`sgns_log_likelihood`] with respect to the rows of `U` and
/// `V` that appear in the batch: `∂/∂uᵢ = Σ (label − σ(uᵢ·vⱼ)) vⱼ` and
/// symmetrically for `vⱼ`.
pub fn sgns_gradients(
    view: PairView<'_>,
    u: &EmbeddingMatrix,
    v: &EmbeddingMatrix,
) -> (RowGradient, RowGradient) {
    let (_, gu, gv) = sgns_accumulate(view, u, v, Execution::default());
    (gu, gv)
}

/// Likelihood and gradients in one pass, chunked over the batch.
pub(crate) fn sgns_accumulate(
    view: PairView<'_>,
    u: &EmbeddingMatrix,
    v: &EmbeddingMatrix,
    mode: Execution,
) -> (LogLikelihood, RowGradient, RowGradient) {
    check(&view, u, v);
    let dim = u.dim();
    let ranges = exec::chunk_ranges(view.len(), GRAD_CHUNK);
    let parts = exec::map_chunks(mode, &ranges, 1, |_, r| {
        let part = view.range(r[0].clone());
        let mut gu = RowAccumulator::new(u.rows(), dim);
        let mut gv = RowAccumulator::new(v.rows(), dim);
        let mut ll = LogLikelihood::default();
        for (c, x, label) in part.iter() {
            let (uc, vx) = (u.row(c as usize), v.row(x as usize));
            let s = dot(uc, vx);
            let g = label.target() - sigmoid(s);
            match label {
                crate::corpus::Label::Positive => {
                    ll.positive += log_sigmoid(s);
                    ll.n_positive += 1;
                }
                crate::corpus::Label::Negative => {
                    ll.negative += log_sigmoid(-s);
                    ll.n_negative += 1;
                }
            }
            gu.add_scaled(c, g, vx);
            gv.add_scaled(x, g, uc);
        }
        (ll, gu.finish(), gv.finish())
    });
    if parts.len() == 1 {
        return parts.into_iter().next().unwrap();
    }
    let mut ll = LogLikelihood::default();
    let mut gu = RowAccumulator::new(u.rows(), dim);
    let mut gv = RowAccumulator::new(v.rows(), dim);
    for (l, a, b) in &parts {
        ll.add(l);
        gu.merge(a);
        gv.merge(b);
    }
    (ll, gu.finish(), gv.finish())
}
