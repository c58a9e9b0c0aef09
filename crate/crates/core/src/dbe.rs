//! Dynamic Bernoulli embeddings: per-slice word vectors, one shared context
//! matrix, a Bernoulli likelihood on `u_{c,t} · Σ_{j∈ctx} v_j` and a Gaussian
//! random-walk prior tying consecutive slices, trained jointly.

use std::ops::Range;

use log::info;
use serde::{Deserialize, Serialize};

use crate::analysis::{compute_drift, LposSum};
use crate::corpus::{Document, Label, NoiseDistribution, TimeSlicedCorpus};
use crate::drift_reg::{add_regularizer_gradient, drift_regularizer, RegConfig};
use crate::exec::{self, Execution};
use crate::isg::count_tokens;
use crate::model::{dot, log_sigmoid, sigmoid, EmbeddingMatrix, RowAccumulator, RowGradient, SliceTag, TrainConfig};
use crate::optim::AdamState;
use crate::train::{self, EpochStats};
use crate::{seed, Error, Result};

const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbeParams {
    /// Precision of the random walk between slices.
    pub lambda: f64,
    /// Precision of the prior on `V` and `U_0`.
    pub lambda0: f64,
}

impl Default for DbeParams {
    fn default() -> Self {
        DbeParams {
            lambda: 1.0,
            lambda0: 0.01,
        }
    }
}

impl DbeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda0 > 0.0) {
            return Err(Error::Config("dbe lambda and lambda0 must be > 0".into()));
        }
        Ok(())
    }
}

/// Centers with their context spans. Negatives share the span of the
/// positive they follow.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BernoulliBatch {
    pub centers: Vec<u32>,
    pub spans: Vec<Range<usize>>,
    pub context_ids: Vec<u32>,
    pub labels: Vec<Label>,
    pub slice: usize,
}

impl BernoulliBatch {
    pub fn new(slice: usize) -> Self {
        BernoulliBatch {
            slice,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Label::Positive).count()
    }

    pub fn context(&self, k: usize) -> &[u32] {
        &self.context_ids[self.spans[k].clone()]
    }

    /// Appends a positive for `center` with a fresh context.
    pub fn push_positive(&mut self, center: u32, context: &[u32]) {
        let start = self.context_ids.len();
        self.context_ids.extend_from_slice(context);
        self.centers.push(center);
        self.spans.push(start..self.context_ids.len());
        self.labels.push(Label::Positive);
    }

    /// Appends a negative sharing the context of example `of`.
    pub fn push_negative(&mut self, center: u32, of: usize) {
        self.centers.push(center);
        self.spans.push(self.spans[of].clone());
        self.labels.push(Label::Negative);
    }

    fn append(&mut self, other: BernoulliBatch) {
        let shift = self.context_ids.len();
        self.context_ids.extend(other.context_ids);
        self.centers.extend(other.centers);
        self.spans.extend(other.spans.into_iter().map(|r| r.start + shift..r.end + shift));
        self.labels.extend(other.labels);
    }
}

/// Every position of a document with a nonempty window, as (center, context).
pub fn positional_examples(doc: &[u32], window: usize) -> impl Iterator<Item = (u32, Vec<u32>)> + '_ {
    (0..doc.len()).filter_map(move |p| {
        let lo = p.saturating_sub(window);
        let hi = (p + window).min(doc.len() - 1);
        let ctx: Vec<u32> = (lo..=hi).filter(|&q| q != p).map(|q| doc[q]).collect();
        (!ctx.is_empty()).then_some((doc[p], ctx))
    })
}

/// `u_{center,t} · Σ_{j∈context} v_j`.
pub fn dbe_positional_logit(center: u32, context: &[u32], u_t: &EmbeddingMatrix, v: &EmbeddingMatrix) -> Result<f64> {
    if context.is_empty() {
        return Err(Error::InvalidArgument("dbe logit needs a nonempty context".into()));
    }
    Ok(dot(u_t.row(center as usize), &context_sum(context, v)))
}

fn context_sum(context: &[u32], v: &EmbeddingMatrix) -> Vec<f64> {
    let mut s = vec![0.0; v.dim()];
    for &j in context {
        for (a, b) in s.iter_mut().zip(v.row(j as usize)) {
            *a += b;
        }
    }
    s
}

/// `−(λ0/2)Σ‖v_i‖² − (λ0/2)Σ‖u_{i,0}‖² − (λ/2)Σ_{t≥1}‖u_{i,t} − u_{i,t−1}‖²`.
pub fn dbe_prior(word: &[EmbeddingMatrix], context: &EmbeddingMatrix, params: &DbeParams) -> f64 {
    let sq = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>();
    let mut p = -0.5 * params.lambda0 * (sq(context.as_slice()) + word.first().map_or(0.0, |u| sq(u.as_slice())));
    for w in word.windows(2) {
        let d: f64 = w[1].as_slice().iter().zip(w[0].as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
        p -= 0.5 * params.lambda * d;
    }
    p
}

/// Adds `scale` times the gradient of [`dbe_prior`] to dense buffers.
pub fn add_prior_gradient(
    word: &[EmbeddingMatrix],
    context: &EmbeddingMatrix,
    params: &DbeParams,
    scale: f64,
    grad_word: &mut [Vec<f64>],
    grad_context: &mut [f64],
) {
    for (g, x) in grad_context.iter_mut().zip(context.as_slice()) {
        *g -= scale * params.lambda0 * x;
    }
    if let Some(u0) = word.first() {
        for (g, x) in grad_word[0].iter_mut().zip(u0.as_slice()) {
            *g -= scale * params.lambda0 * x;
        }
    }
    for t in 1..word.len() {
        let (cur, prev) = (word[t].as_slice(), word[t - 1].as_slice());
        for k in 0..cur.len() {
            let d = scale * params.lambda * (cur[k] - prev[k]);
            grad_word[t][k] -= d;
            grad_word[t - 1][k] += d;
        }
    }
}

/// Components of the joint objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DbeLoss {
    pub positive: f64,
    pub negative: f64,
    pub prior: f64,
    pub n_positive: usize,
}

impl DbeLoss {
    pub fn total(&self) -> f64 {
        self.positive + self.negative + self.prior
    }
}

/// Likelihood of a range of a batch and its gradients with respect to the
/// rows of `U_t` and `V`.
fn accumulate(
    batch: &BernoulliBatch,
    range: Range<usize>,
    u: &EmbeddingMatrix,
    v: &EmbeddingMatrix,
    mode: Execution,
) -> (DbeLoss, RowGradient, RowGradient) {
    let dim = u.dim();
    let ranges: Vec<Range<usize>> = exec::chunk_ranges(range.len(), CHUNK)
        .into_iter()
        .map(|r| r.start + range.start..r.end + range.start)
        .collect();
    let parts = exec::map_chunks(mode, &ranges, 1, |_, r| {
        let mut gu = RowAccumulator::new(u.rows(), dim);
        let mut gv = RowAccumulator::new(v.rows(), dim);
        let mut loss = DbeLoss::default();
        for k in r[0].clone() {
            let ctx = batch.context(k);
            let c = batch.centers[k];
            let s = context_sum(ctx, v);
            let uc = u.row(c as usize);
            let logit = dot(uc, &s);
            let label = batch.labels[k];
            match label {
                Label::Positive => {
                    loss.positive += log_sigmoid(logit);
                    loss.n_positive += 1;
                }
                Label::Negative => loss.negative += log_sigmoid(-logit),
            }
            let g = label.target() - sigmoid(logit);
            gu.add_scaled(c, g, &s);
            for &j in ctx {
                gv.add_scaled(j, g, uc);
            }
        }
        (loss, gu.finish(), gv.finish())
    });
    let mut loss = DbeLoss::default();
    let mut gu = RowAccumulator::new(u.rows(), dim);
    let mut gv = RowAccumulator::new(v.rows(), dim);
    for (l, a, b) in &parts {
        loss.positive += l.positive;
        loss.negative += l.negative;
        loss.n_positive += l.n_positive;
        gu.merge(a);
        gv.merge(b);
    }
    (loss, gu.finish(), gv.finish())
}

/// Joint objective over batches of any slices plus the full prior.
pub fn dbe_loss(batches: &[BernoulliBatch], word: &[EmbeddingMatrix], context: &EmbeddingMatrix, params: &DbeParams) -> DbeLoss {
    let mut total = DbeLoss::default();
    for b in batches {
        let (l, _, _) = accumulate(b, 0..b.len(), &word[b.slice], context, Execution::Sequential);
        total.positive += l.positive;
        total.negative += l.negative;
        total.n_positive += l.n_positive;
    }
    total.prior = dbe_prior(word, context, params);
    total
}

/// Dense gradient of [`dbe_loss`] with respect to every `U_t` and `V`.
pub fn dbe_gradients(
    batches: &[BernoulliBatch],
    word: &[EmbeddingMatrix],
    context: &EmbeddingMatrix,
    params: &DbeParams,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut gw: Vec<Vec<f64>> = word.iter().map(|u| vec![0.0; u.as_slice().len()]).collect();
    let mut gc = vec![0.0; context.as_slice().len()];
    let dim = context.dim();
    for b in batches {
        let (_, gu, gv) = accumulate(b, 0..b.len(), &word[b.slice], context, Execution::Sequential);
        for (r, g) in gu.iter() {
            let r = r as usize;
            for j in 0..dim {
                gw[b.slice][r * dim + j] += g[j];
            }
        }
        for (r, g) in gv.iter() {
            let r = r as usize;
            for j in 0..dim {
                gc[r * dim + j] += g[j];
            }
        }
    }
    add_prior_gradient(word, context, params, 1.0, &mut gw, &mut gc);
    (gw, gc)
}

/// Held-out L_pos of documents under the context-sum logit.
pub fn bernoulli_lpos(docs: &[Document], window: usize, u: &EmbeddingMatrix, v: &EmbeddingMatrix, mode: Execution) -> LposSum {
    let parts = exec::map_chunks(mode, docs, 64, |_, chunk| {
        let mut s = LposSum::default();
        for d in chunk {
            s.tokens += d.len();
            for (c, ctx) in positional_examples(d, window) {
                s.sum += log_sigmoid(dot(u.row(c as usize), &context_sum(&ctx, v)));
                s.pairs += 1;
            }
        }
        s
    });
    let mut total = LposSum::default();
    for p in &parts {
        total.add(p);
    }
    total
}

/// Positives of a shuffled epoch of one slice, each followed by `ratio`
/// negatives whose center is drawn from the noise distribution (redrawn when
/// it equals the observed center).
#[allow(clippy::too_many_arguments)]
pub fn epoch_batch(
    docs: &[Document],
    noise: &NoiseDistribution,
    window: usize,
    ratio: usize,
    base: u64,
    slice: usize,
    epoch: usize,
    mode: Execution,
) -> BernoulliBatch {
    let order = train::shuffled(docs, base, slice, epoch);
    let s = seed::derive(base, &[slice as u64, epoch as u64]);
    let parts = exec::map_chunks(mode, &order, 64, |k, chunk| {
        let mut rng = seed::rng(s, &[seed::NEGATIVES, k as u64]);
        let mut b = BernoulliBatch::new(slice);
        for d in chunk {
            for (c, ctx) in positional_examples(d, window) {
                let at = b.len();
                b.push_positive(c, &ctx);
                for _ in 0..ratio {
                    b.push_negative(noise.sample_other(c, &mut rng), at);
                }
            }
        }
        b
    });
    let mut out = BernoulliBatch::new(slice);
    for p in parts {
        out.append(p);
    }
    out
}

/// Jointly trained slices.
#[derive(Debug, Clone)]
pub struct DbeModel {
    pub word: Vec<EmbeddingMatrix>,
    pub context: EmbeddingMatrix,
    /// Per slice, one entry per epoch.
    pub traces: Vec<Vec<EpochStats>>,
    /// Value of the prior after each epoch.
    pub prior_trace: Vec<f64>,
}

impl DbeModel {
    pub fn num_slices(&self) -> usize {
        self.word.len()
    }
}

/// Adam ascent on the joint objective. Each epoch interleaves the slices'
/// mini-batches round-robin; every step also applies the prior gradient
/// scaled by the step's share of the epoch's positives, so one epoch applies
/// the whole prior once. With an active drift penalty, `U_t` for `t ≥ 1` is
/// penalised against `U_0`.
pub fn train_dbe(
    corpus: &TimeSlicedCorpus,
    heldout: Option<&TimeSlicedCorpus>,
    init_word: Vec<EmbeddingMatrix>,
    init_context: EmbeddingMatrix,
    params: &DbeParams,
    config: &TrainConfig,
    reg: Option<&RegConfig>,
) -> Result<DbeModel> {
    params.validate()?;
    config.validate()?;
    let n = corpus.num_slices();
    if n == 0 {
        return Err(Error::EmptyCorpus("corpus has no slices".into()));
    }
    if init_word.len() != n {
        return Err(Error::DimensionMismatch {
            what: "initial word matrices".into(),
            expected: n,
            found: init_word.len(),
        });
    }
    if let Some(h) = heldout {
        if h.num_slices() != n {
            return Err(Error::InvalidArgument(format!(
                "held-out corpus has {} slices, training corpus {n}",
                h.num_slices()
            )));
        }
    }
    let (rows, dim) = (init_context.rows(), init_context.dim());
    init_context.check_shape(rows, config.dim, "initial context matrix")?;
    for u in &init_word {
        u.check_shape(rows, dim, "initial word matrix")?;
    }
    let reg = reg.filter(|r| r.is_active() && n > 1);

    let mut word: Vec<EmbeddingMatrix> = init_word
        .into_iter()
        .enumerate()
        .map(|(t, u)| u.with_slice(SliceTag::Slice(t)))
        .collect();
    let mut context = init_context;
    let mut adam_word: Vec<AdamState> = (0..n).map(|t| AdamState::new(format!("dbe U_{t}"), rows, dim)).collect();
    let mut adam_context = AdamState::new("dbe V", rows, dim);
    let noise: Vec<Option<NoiseDistribution>> = (0..n)
        .map(|t| NoiseDistribution::from_counts(&count_tokens(corpus.slice(t), rows)))
        .collect();
    let mut grad_word: Vec<Vec<f64>> = vec![vec![0.0; rows * dim]; n];
    let mut grad_context = vec![0.0; rows * dim];
    let mut traces: Vec<Vec<EpochStats>> = vec![Vec::with_capacity(config.epochs); n];
    let mut prior_trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let betas: Vec<Option<f64>> = (0..n)
            .map(|t| reg.filter(|_| t > 0).map(|r| r.beta.resolve(&compute_drift(&word[t], &word[0]))))
            .collect();
        let batches: Vec<BernoulliBatch> = (0..n)
            .map(|t| match &noise[t] {
                Some(nd) => epoch_batch(
                    corpus.slice(t),
                    nd,
                    config.window,
                    config.negative_ratio,
                    config.seed,
                    t,
                    epoch,
                    config.execution,
                ),
                None => BernoulliBatch::new(t),
            })
            .collect();
        let total_pos: usize = batches.iter().map(BernoulliBatch::num_positive).sum();
        let ranges: Vec<Vec<Range<usize>>> = batches
            .iter()
            .map(|b| train::minibatches(b.len(), config.batch_size, config.negative_ratio))
            .collect();
        // round-robin schedule of (slice, minibatch)
        let rounds = ranges.iter().map(Vec::len).max().unwrap_or(0);
        let lens: Vec<usize> = ranges.iter().map(Vec::len).collect();
        let mut schedule: Vec<(usize, usize)> = (0..rounds)
            .flat_map(|k| (0..n).filter(|&t| k < lens[t]).map(move |t| (t, k)).collect::<Vec<_>>())
            .collect();
        let prior_only = schedule.is_empty();
        if prior_only {
            schedule.push((0, usize::MAX));
        }
        let mut stats = vec![(0.0, 0usize, 0.0); n];
        for (step, &(t, k)) in schedule.iter().enumerate() {
            let f = if prior_only {
                1.0
            } else {
                let r = ranges[t][k].clone();
                let (loss, gu, gv) = accumulate(&batches[t], r, &word[t], &context, config.execution);
                train::check_loss(loss.positive + loss.negative, t, epoch, k)?;
                stats[t].0 += loss.positive;
                stats[t].1 += loss.n_positive;
                stats[t].2 += loss.positive + loss.negative;
                scatter(&gu, dim, &mut grad_word[t]);
                scatter(&gv, dim, &mut grad_context);
                loss.n_positive as f64 / total_pos as f64
            };
            add_prior_gradient(&word, &context, params, f, &mut grad_word, &mut grad_context);
            // ascent -> descent
            grad_word.iter_mut().flatten().chain(grad_context.iter_mut()).for_each(|g| *g = -*g);
            if let Some(r) = reg {
                let (first, rest) = grad_word.split_at_mut(1);
                for s in 1..n {
                    if let Some(beta) = betas[s] {
                        add_regularizer_gradient(&word[s], &word[0], r.alpha, beta, f, &mut rest[s - 1], Some(&mut first[0]));
                    }
                }
            }
            let at = |e: Error| e.context(format!("slice {t}, epoch {epoch}, step {step}"));
            for s in 0..n {
                adam_word[s]
                    .step_dense(word[s].as_mut_slice(), &grad_word[s], config.learning_rate)
                    .map_err(at)?;
                grad_word[s].fill(0.0);
            }
            adam_context
                .step_dense(context.as_mut_slice(), &grad_context, config.learning_rate)
                .map_err(at)?;
            grad_context.fill(0.0);
        }
        let prior = dbe_prior(&word, &context, params);
        prior_trace.push(prior);
        for t in 0..n {
            let (lpos, npos, objective) = stats[t];
            let mut objective = objective;
            if let (Some(r), Some(beta)) = (reg, betas[t]) {
                objective -= drift_regularizer(&word[t], &word[0], r.alpha, beta);
            }
            traces[t].push(EpochStats {
                slice: t,
                epoch,
                train_lpos: if npos > 0 { lpos / npos as f64 } else { 0.0 },
                heldout_lpos: heldout
                    .and_then(|h| bernoulli_lpos(h.slice(t), config.window, &word[t], &context, config.execution).mean_per_pair()),
                objective,
                beta: betas[t],
            });
        }
        info!("dbe: epoch {epoch} prior {prior:.4}");
    }
    Ok(DbeModel {
        word,
        context,
        traces,
        prior_trace,
    })
}

fn scatter(g: &RowGradient, dim: usize, dense: &mut [f64]) {
    for (r, x) in g.iter() {
        let r = r as usize;
        for j in 0..dim {
            dense[r * dim + j] += x[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Role;

    fn mat(rows: usize, dim: usize, v: Vec<f64>) -> EmbeddingMatrix {
        EmbeddingMatrix::from_vec(rows, dim, v, Role::Word).unwrap()
    }

    #[test]
    fn logit_cases() {
        let z = EmbeddingMatrix::zeros(3, 2, Role::Word);
        let l = dbe_positional_logit(0, &[1, 2], &z, &z).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(sigmoid(l), 0.5);
        let u = mat(3, 2, vec![1.0, 2.0, -0.5, 0.25, 3.0, -1.0]);
        let v = mat(3, 2, vec![0.3, -0.7, 1.5, 2.5, -2.0, 0.125]);
        assert_eq!(dbe_positional_logit(1, &[2], &u, &v).unwrap(), dot(u.row(1), v.row(2)));
        let got = dbe_positional_logit(2, &[0, 1, 2], &u, &v).unwrap();
        let mut oracle = 0.0;
        for j in 0..2 {
            let mut s = 0.0;
            for c in [0, 1, 2] {
                s += v.row(c)[j];
            }
            oracle += u.row(2)[j] * s;
        }
        assert!((got - oracle).abs() < 1e-12);
        assert!(dbe_positional_logit(0, &[], &u, &v).is_err());
    }

    #[test]
    fn prior_values() {
        let p = DbeParams::default();
        let z = EmbeddingMatrix::zeros(2, 2, Role::Word);
        assert_eq!(dbe_prior(&[z.clone(), z.clone()], &z, &p), 0.0);
        let v = mat(1, 2, vec![1.0, 0.0]);
        let u = EmbeddingMatrix::zeros(1, 2, Role::Word);
        assert!((dbe_prior(&[u], &v, &p) + 0.005).abs() < 1e-12);
        let u = mat(1, 2, vec![0.5, -1.5]);
        let lam = DbeParams {
            lambda: 123.0,
            lambda0: 0.01,
        };
        let base = dbe_prior(std::slice::from_ref(&u), &v, &lam);
        assert_eq!(dbe_prior(&[u.clone(), u.clone(), u], &v, &lam), base);
    }

    #[test]
    fn single_positive_at_zero_logit() {
        let mut b = BernoulliBatch::new(0);
        b.push_positive(0, &[1]);
        let z = EmbeddingMatrix::zeros(2, 2, Role::Word);
        let loss = dbe_loss(&[b], &[z.clone()], &z, &DbeParams::default());
        assert!((loss.total() + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn positional_examples_skip_lonely_tokens() {
        assert_eq!(positional_examples(&[4], 2).count(), 0);
        let ex: Vec<_> = positional_examples(&[1, 2, 3], 1).collect();
        assert_eq!(ex, vec![(1, vec![2]), (2, vec![1, 3]), (3, vec![2])]);
    }
}
