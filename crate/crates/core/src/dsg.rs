//! Dynamic filtering of a Bayesian skip-gram.
//!
//! Every slice has a mean-field Gaussian posterior over `U_t` and `V_t`. The
//! prior of slice `t` is the previous posterior mean diffused by `D` and
//! multiplied by a zero-mean anchor `N(0, D0)`. Each slice maximises
//! `E_q[log p(data)] + E_q[log prior] + entropy`, with the likelihood
//! estimated by reparameterised draws and the other two terms in closed form.

use std::f64::consts::{E, PI};

use log::{debug, info};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::{compute_drift, sgns_lpos};
use crate::corpus::{Label, NoiseDistribution, PairView, SkipGramBatch, TimeSlicedCorpus};
use crate::drift_reg::{add_regularizer_gradient, drift_regularizer, RegConfig};
use crate::exec::Execution;
use crate::isg::{count_tokens, Direction};
use crate::model::{sgns_accumulate, EmbeddingMatrix, LogLikelihood, Role, RowGradient, SliceTag, TrainConfig};
use crate::optim::AdamState;
use crate::train::{self, EpochStats, SliceData};
use crate::{seed, Error, Result};

/// Log-variances are kept inside this range during optimisation.
pub const LOG_VARIANCE_RANGE: (f64, f64) = (-23.025850929940457, 6.907755278982137);

/// Diagonal Gaussian over an embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEmbeddingMatrix {
    pub mean: EmbeddingMatrix,
    pub variance: EmbeddingMatrix,
}

impl GaussianEmbeddingMatrix {
    pub fn new(mean: EmbeddingMatrix, variance: EmbeddingMatrix) -> Result<Self> {
        let g = GaussianEmbeddingMatrix { mean, variance };
        g.validate("gaussian")?;
        Ok(g)
    }

    /// Zero means and unit variances.
    pub fn standard(rows: usize, dim: usize, role: Role) -> Self {
        Self::with_fixed_variance(EmbeddingMatrix::zeros(rows, dim, role), 1.0)
    }

    pub fn with_fixed_variance(mean: EmbeddingMatrix, variance: f64) -> Self {
        let mut var = mean.clone();
        var.as_mut_slice().fill(variance);
        GaussianEmbeddingMatrix { mean, variance: var }
    }

    pub fn rows(&self) -> usize {
        self.mean.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        self.variance.check_shape(self.mean.rows(), self.mean.dim(), what)?;
        self.mean.check_finite(what)?;
        if let Some(index) = self.variance.as_slice().iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::NonPositiveVariance {
                what: what.to_string(),
                index,
            });
        }
        Ok(())
    }
}

/// Entropy term of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// Sum of all variance entries.
    #[default]
    SumOfVariances,
    /// `½ Σ ln(2πe s²)`.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DsgParams {
    /// Diffusion variance `D` between consecutive slices.
    pub diffusion: f64,
    /// Variance `D0` of the zero-mean anchor prior.
    pub anchor: f64,
    pub samples_per_step: usize,
    pub entropy: EntropyMode,
}

impl Default for DsgParams {
    fn default() -> Self {
        DsgParams {
            diffusion: 1.0,
            anchor: 0.1,
            samples_per_step: 1,
            entropy: EntropyMode::SumOfVariances,
        }
    }
}

impl DsgParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.diffusion > 0.0 && self.anchor > 0.0) {
            return Err(Error::Config("dsg diffusion and anchor variances must be > 0".into()));
        }
        if self.samples_per_step == 0 {
            return Err(Error::Config("dsg samples_per_step must be at least 1".into()));
        }
        Ok(())
    }
}

/// Product of `N(prev_mean, D)` and `N(0, D0)`, entrywise.
pub fn combine_priors(prev_mean: &EmbeddingMatrix, diffusion: f64, anchor: f64) -> GaussianEmbeddingMatrix {
    let precision = 1.0 / diffusion + 1.0 / anchor;
    let shrink = (1.0 / diffusion) / precision;
    let mut mean = prev_mean.clone();
    mean.as_mut_slice().iter_mut().for_each(|m| *m *= shrink);
    GaussianEmbeddingMatrix::with_fixed_variance(mean, 1.0 / precision)
}

/// Product of an arbitrary diagonal Gaussian and `N(0, D0)`.
fn anchored(g: &GaussianEmbeddingMatrix, anchor: f64) -> GaussianEmbeddingMatrix {
    let mut out = g.clone();
    for (m, s) in out.mean.as_mut_slice().iter_mut().zip(out.variance.as_mut_slice()) {
        let precision = 1.0 / *s + 1.0 / anchor;
        *m *= (1.0 / *s) / precision;
        *s = 1.0 / precision;
    }
    out
}

/// The three parts of the objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub likelihood: f64,
    pub log_prior: f64,
    pub entropy: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.likelihood + self.log_prior + self.entropy
    }
}

/// `E_q[log N(x; m, v)]` summed over entries, in closed form.
pub fn expected_log_prior(q: &GaussianEmbeddingMatrix, prior: &GaussianEmbeddingMatrix) -> f64 {
    let (qm, qs) = (q.mean.as_slice(), q.variance.as_slice());
    let (pm, ps) = (prior.mean.as_slice(), prior.variance.as_slice());
    (0..qm.len())
        .map(|k| {
            let dm = qm[k] - pm[k];
            -0.5 * (2.0 * PI * ps[k]).ln() - (qs[k] + dm * dm) / (2.0 * ps[k])
        })
        .sum()
}

pub fn entropy(q: &GaussianEmbeddingMatrix, mode: EntropyMode) -> f64 {
    let s = q.variance.as_slice();
    match mode {
        EntropyMode::SumOfVariances => s.iter().sum(),
        EntropyMode::Exact => s.iter().map(|v| 0.5 * (2.0 * PI * E * v).ln()).sum(),
    }
}

/// Likelihood of a batch at `U = μ_U + √Σ_U ⊙ ε_U` (likewise for `V`) for
/// given draws, with its gradients with respect to the means.
pub fn reparam_likelihood(
    view: PairView<'_>,
    q_word: &GaussianEmbeddingMatrix,
    q_context: &GaussianEmbeddingMatrix,
    eps_word: &EmbeddingMatrix,
    eps_context: &EmbeddingMatrix,
    mode: Execution,
) -> (LogLikelihood, RowGradient, RowGradient) {
    let draw = |q: &GaussianEmbeddingMatrix, eps: &EmbeddingMatrix| {
        let mut x = q.mean.clone();
        for ((x, s), e) in x.as_mut_slice().iter_mut().zip(q.variance.as_slice()).zip(eps.as_slice()) {
            *x += s.sqrt() * e;
        }
        x
    };
    sgns_accumulate(view, &draw(q_word, eps_word), &draw(q_context, eps_context), mode)
}

/// Monte-Carlo estimate of the objective for one batch against full-slice
/// prior and entropy terms.
#[allow(clippy::too_many_arguments)]
pub fn dsg_elbo(
    view: PairView<'_>,
    q_word: &GaussianEmbeddingMatrix,
    q_context: &GaussianEmbeddingMatrix,
    prior_word: &GaussianEmbeddingMatrix,
    prior_context: &GaussianEmbeddingMatrix,
    params: &DsgParams,
    seed: u64,
) -> Result<ElboTerms> {
    params.validate()?;
    q_word.validate("word posterior")?;
    q_context.validate("context posterior")?;
    prior_word.validate("word prior")?;
    prior_context.validate("context prior")?;
    let mut likelihood = 0.0;
    let s = params.samples_per_step;
    for k in 0..s {
        let mut rng = seed::rng(seed, &[seed::REPARAM, k as u64]);
        let draw = SampledBatch::draw(view, q_word, q_context, &mut rng);
        let (ll, _, _) = sgns_accumulate(draw.batch.view(), &draw.word, &draw.context, Execution::default());
        likelihood += ll.total() / s as f64;
    }
    Ok(ElboTerms {
        likelihood,
        log_prior: expected_log_prior(q_word, prior_word) + expected_log_prior(q_context, prior_context),
        entropy: entropy(q_word, params.entropy) + entropy(q_context, params.entropy),
    })
}

/// Rows touched by a batch, their noise and the sampled vectors, with the
/// batch rewritten to compact row ids.
struct Compact {
    rows: Vec<u32>,
    eps: Vec<f64>,
    sample: EmbeddingMatrix,
}

struct SampledBatch {
    batch: SkipGramBatch,
    word: EmbeddingMatrix,
    context: EmbeddingMatrix,
    word_rows: Compact,
    context_rows: Compact,
}

fn compact<'a, R: Rng + ?Sized>(
    ids: impl Iterator<Item = &'a u32>,
    mean: &EmbeddingMatrix,
    std: &dyn Fn(usize) -> f64,
    rng: &mut R,
) -> (Compact, Vec<u32>) {
    let dim = mean.dim();
    let mut slot = vec![u32::MAX; mean.rows()];
    let mut rows: Vec<u32> = ids.copied().filter(|&r| {
        let fresh = slot[r as usize] == u32::MAX;
        slot[r as usize] = 0;
        fresh
    }).collect();
    rows.sort_unstable();
    for (k, &r) in rows.iter().enumerate() {
        slot[r as usize] = k as u32;
    }
    let mut eps = Vec::with_capacity(rows.len() * dim);
    let mut data = Vec::with_capacity(rows.len() * dim);
    for &r in &rows {
        let m = mean.row(r as usize);
        for (j, mj) in m.iter().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            eps.push(e);
            data.push(mj + std(r as usize * dim + j) * e);
        }
    }
    let sample = EmbeddingMatrix::from_vec(rows.len(), dim, data, mean.role).expect("compact shape");
    (Compact { rows, eps, sample }, slot)
}

impl SampledBatch {
    fn draw<R: Rng + ?Sized>(
        view: PairView<'_>,
        q_word: &GaussianEmbeddingMatrix,
        q_context: &GaussianEmbeddingMatrix,
        rng: &mut R,
    ) -> Self {
        let sw = |k: usize| q_word.variance.as_slice()[k].sqrt();
        let sc = |k: usize| q_context.variance.as_slice()[k].sqrt();
        Self::draw_with(view, &q_word.mean, &q_context.mean, &sw, &sc, rng)
    }

    fn draw_with<R: Rng + ?Sized>(
        view: PairView<'_>,
        word_mean: &EmbeddingMatrix,
        context_mean: &EmbeddingMatrix,
        word_std: &dyn Fn(usize) -> f64,
        context_std: &dyn Fn(usize) -> f64,
        rng: &mut R,
    ) -> Self {
        let (w, wslot) = compact(view.centers.iter(), word_mean, word_std, rng);
        let (c, cslot) = compact(view.contexts.iter(), context_mean, context_std, rng);
        let mut batch = SkipGramBatch::new(0);
        for (a, b, l) in view.iter() {
            batch.push(wslot[a as usize], cslot[b as usize], l);
        }
        SampledBatch {
            batch,
            word: w.sample.clone(),
            context: c.sample.clone(),
            word_rows: w,
            context_rows: c,
        }
    }
}

/// Posterior of one slice and its trace.
#[derive(Debug, Clone)]
pub struct DsgSliceFit {
    pub word: GaussianEmbeddingMatrix,
    pub context: GaussianEmbeddingMatrix,
    pub trace: Vec<EpochStats>,
}

/// Variational parameters with log-variances, as optimised.
struct Variational {
    mean: EmbeddingMatrix,
    log_var: Vec<f64>,
    adam_mean: AdamState,
    adam_log_var: AdamState,
    grad_mean: Vec<f64>,
    grad_log_var: Vec<f64>,
}

impl Variational {
    fn new(q: &GaussianEmbeddingMatrix, name: &str, t: usize) -> Self {
        let (rows, dim) = (q.rows(), q.dim());
        let (lo, hi) = LOG_VARIANCE_RANGE;
        Variational {
            mean: q.mean.clone().with_slice(SliceTag::Slice(t)),
            log_var: q.variance.as_slice().iter().map(|s| s.ln().clamp(lo, hi)).collect(),
            adam_mean: AdamState::new(format!("dsg {name} mean {t}"), rows, dim),
            adam_log_var: AdamState::new(format!("dsg {name} log-variance {t}"), rows, dim),
            grad_mean: vec![0.0; rows * dim],
            grad_log_var: vec![0.0; rows * dim],
        }
    }

    fn std(&self, k: usize) -> f64 {
        (0.5 * self.log_var[k]).exp()
    }

    /// Adds the ascent gradient of one sampled likelihood pass, weighted by `w`.
    fn add_sample(&mut self, c: &Compact, g: &RowGradient, w: f64) {
        let dim = self.mean.dim();
        for (r, gr) in g.iter() {
            let row = c.rows[r as usize] as usize;
            for j in 0..dim {
                let k = row * dim + j;
                self.grad_mean[k] += w * gr[j];
                // dx/dρ = ε σ / 2 with σ = exp(ρ/2)
                self.grad_log_var[k] += w * gr[j] * c.eps[r as usize * dim + j] * 0.5 * self.std(k);
            }
        }
    }

    /// Adds `f` times the ascent gradient of the prior and entropy terms.
    fn add_prior(&mut self, prior: &GaussianEmbeddingMatrix, mode: EntropyMode, f: f64) {
        let (pm, ps) = (prior.mean.as_slice(), prior.variance.as_slice());
        let m = self.mean.as_slice();
        for k in 0..m.len() {
            let s2 = self.log_var[k].exp();
            self.grad_mean[k] -= f * (m[k] - pm[k]) / ps[k];
            let h = match mode {
                EntropyMode::SumOfVariances => s2,
                EntropyMode::Exact => 0.5,
            };
            self.grad_log_var[k] += f * (h - s2 / (2.0 * ps[k]));
        }
    }

    /// Turns the accumulated ascent gradients into one Adam descent step.
    fn step(&mut self, lr: f64, reg: Option<&[f64]>) -> Result<()> {
        for g in self.grad_mean.iter_mut().chain(self.grad_log_var.iter_mut()) {
            *g = -*g;
        }
        if let Some(r) = reg {
            for (g, x) in self.grad_mean.iter_mut().zip(r) {
                *g += x;
            }
        }
        self.adam_mean.step_dense(self.mean.as_mut_slice(), &self.grad_mean, lr)?;
        self.adam_log_var.step_dense(&mut self.log_var, &self.grad_log_var, lr)?;
        let (lo, hi) = LOG_VARIANCE_RANGE;
        self.log_var.iter_mut().for_each(|x| *x = x.clamp(lo, hi));
        self.grad_mean.fill(0.0);
        self.grad_log_var.fill(0.0);
        Ok(())
    }

    fn posterior(&self) -> GaussianEmbeddingMatrix {
        let mut variance = self.mean.clone();
        for (s, r) in variance.as_mut_slice().iter_mut().zip(&self.log_var) {
            *s = r.exp();
        }
        GaussianEmbeddingMatrix {
            mean: self.mean.clone(),
            variance,
        }
    }
}

/// Drift penalty against a fixed reference matrix.
#[derive(Debug, Clone, Copy)]
pub struct DriftPenalty<'a> {
    pub config: &'a RegConfig,
    pub reference: &'a EmbeddingMatrix,
}

/// Optimises the posterior of one slice from `q_init` against the given priors.
#[allow(clippy::too_many_arguments)]
pub fn fit_slice(
    data: SliceData<'_>,
    prior_word: &GaussianEmbeddingMatrix,
    prior_context: &GaussianEmbeddingMatrix,
    q_word: &GaussianEmbeddingMatrix,
    q_context: &GaussianEmbeddingMatrix,
    params: &DsgParams,
    config: &TrainConfig,
    penalty: Option<DriftPenalty<'_>>,
) -> Result<DsgSliceFit> {
    params.validate()?;
    config.validate()?;
    q_word.validate("initial word posterior")?;
    q_context.validate("initial context posterior")?;
    q_word.mean.check_shape(q_word.rows(), config.dim, "initial word posterior")?;
    let t = data.index;
    let rows = q_word.rows();
    let mut qu = Variational::new(q_word, "U", t);
    let mut qv = Variational::new(q_context, "V", t);
    let noise = NoiseDistribution::from_counts(&count_tokens(data.train, rows));
    let mut trace = Vec::with_capacity(config.epochs);
    let s_count = params.samples_per_step;
    let penalty = penalty.filter(|p| p.config.is_active());

    for epoch in 0..config.epochs {
        let beta = penalty.map(|p| p.config.beta.resolve(&compute_drift(&qu.mean, p.reference)));
        let batch = match &noise {
            Some(n) => train::epoch_batch(
                data.train,
                n,
                config.window,
                config.negative_ratio,
                config.seed,
                t,
                epoch,
                config.execution,
            ),
            None => SkipGramBatch::new(t),
        };
        let total_pos = batch.num_positive().max(1) as f64;
        let mut ranges = train::minibatches(batch.len(), config.batch_size, config.negative_ratio);
        if ranges.is_empty() {
            ranges.push(0..0);
        }
        let (mut lpos, mut npos, mut likelihood) = (0.0, 0usize, 0.0);
        for (b, r) in ranges.into_iter().enumerate() {
            let view = batch.view().range(r);
            let f = if batch.is_empty() {
                1.0
            } else {
                view.labels.iter().filter(|&&l| l == Label::Positive).count() as f64 / total_pos
            };
            for s in 0..s_count {
                if view.is_empty() {
                    break;
                }
                let mut rng = seed::rng(config.seed, &[seed::REPARAM, t as u64, epoch as u64, b as u64, s as u64]);
                let sw = |k: usize| qu.std(k);
                let sc = |k: usize| qv.std(k);
                let d = SampledBatch::draw_with(view, &qu.mean, &qv.mean, &sw, &sc, &mut rng);
                let (ll, gu, gv) = sgns_accumulate(d.batch.view(), &d.word, &d.context, config.execution);
                train::check_loss(ll.total(), t, epoch, b)?;
                let w = 1.0 / s_count as f64;
                lpos += w * ll.positive;
                npos += ll.n_positive;
                likelihood += w * ll.total();
                qu.add_sample(&d.word_rows, &gu, w);
                qv.add_sample(&d.context_rows, &gv, w);
            }
            qu.add_prior(prior_word, params.entropy, f);
            qv.add_prior(prior_context, params.entropy, f);
            let reg_grad = match (penalty, beta) {
                (Some(p), Some(beta)) => {
                    let mut g = vec![0.0; qu.mean.as_slice().len()];
                    add_regularizer_gradient(&qu.mean, p.reference, p.config.alpha, beta, f, &mut g, None);
                    Some(g)
                }
                _ => None,
            };
            let at = |e: Error| e.context(format!("slice {t}, epoch {epoch}, batch {b}"));
            qu.step(config.learning_rate, reg_grad.as_deref()).map_err(at)?;
            qv.step(config.learning_rate, None).map_err(at)?;
        }
        let (pu, pv) = (qu.posterior(), qv.posterior());
        let mut objective = likelihood
            + expected_log_prior(&pu, prior_word)
            + expected_log_prior(&pv, prior_context)
            + entropy(&pu, params.entropy)
            + entropy(&pv, params.entropy);
        if let (Some(p), Some(beta)) = (penalty, beta) {
            objective -= drift_regularizer(&pu.mean, p.reference, p.config.alpha, beta);
        }
        let npos_per_sample = npos as f64 / s_count as f64;
        trace.push(EpochStats {
            slice: t,
            epoch,
            train_lpos: if npos > 0 { lpos / npos_per_sample } else { 0.0 },
            heldout_lpos: data
                .heldout
                .and_then(|h| sgns_lpos(h, config.window, &pu.mean, &pv.mean, config.execution).mean_per_pair()),
            objective,
            beta,
        });
    }
    Ok(DsgSliceFit {
        word: qu.posterior(),
        context: qv.posterior(),
        trace,
    })
}

/// One filtering step: the prior is the previous posterior mean diffused and
/// anchored, and `q` starts at that prior.
pub fn dsg_filter_step(
    data: SliceData<'_>,
    prev: (&GaussianEmbeddingMatrix, &GaussianEmbeddingMatrix),
    params: &DsgParams,
    config: &TrainConfig,
) -> Result<DsgSliceFit> {
    prev.0.validate("previous word posterior")?;
    prev.1.validate("previous context posterior")?;
    let pu = combine_priors(&prev.0.mean, params.diffusion, params.anchor);
    let pv = combine_priors(&prev.1.mean, params.diffusion, params.anchor);
    fit_slice(data, &pu, &pv, &pu, &pv, params, config, None)
}

/// Posteriors of every slice, indexed by calendar slice.
#[derive(Debug, Clone)]
pub struct DsgModel {
    pub word: Vec<GaussianEmbeddingMatrix>,
    pub context: Vec<GaussianEmbeddingMatrix>,
    pub order: Vec<usize>,
    pub traces: Vec<Vec<EpochStats>>,
}

impl DsgModel {
    pub fn word_means(&self) -> Vec<EmbeddingMatrix> {
        self.word.iter().map(|g| g.mean.clone()).collect()
    }

    pub fn context_means(&self) -> Vec<EmbeddingMatrix> {
        self.context.iter().map(|g| g.mean.clone()).collect()
    }
}

/// Chains filtering steps over the slices in `direction` order. The first
/// slice starts at `init` with prior `init × N(0, D0)`; the drift penalty,
/// when active, is taken against the first trained slice's word means.
#[allow(clippy::too_many_arguments)]
pub fn train_dsg(
    corpus: &TimeSlicedCorpus,
    heldout: Option<&TimeSlicedCorpus>,
    init_word: GaussianEmbeddingMatrix,
    init_context: GaussianEmbeddingMatrix,
    params: &DsgParams,
    config: &TrainConfig,
    direction: Direction,
    reg: Option<&RegConfig>,
) -> Result<DsgModel> {
    params.validate()?;
    let n = corpus.num_slices();
    if n == 0 {
        return Err(Error::EmptyCorpus("corpus has no slices".into()));
    }
    if let Some(h) = heldout {
        if h.num_slices() != n {
            return Err(Error::InvalidArgument(format!(
                "held-out corpus has {} slices, training corpus {n}",
                h.num_slices()
            )));
        }
    }
    let order = direction.order(n);
    let mut word: Vec<Option<GaussianEmbeddingMatrix>> = vec![None; n];
    let mut context: Vec<Option<GaussianEmbeddingMatrix>> = vec![None; n];
    let mut traces = vec![Vec::new(); n];
    let mut reference: Option<EmbeddingMatrix> = None;
    let mut prev: Option<(GaussianEmbeddingMatrix, GaussianEmbeddingMatrix)> = None;
    for &t in &order {
        info!("dsg: training slice {t}");
        let data = SliceData {
            index: t,
            train: corpus.slice(t),
            heldout: heldout.map(|h| h.slice(t)),
        };
        let (pu, pv, qu, qv) = match &prev {
            None => (
                anchored(&init_word, params.anchor),
                anchored(&init_context, params.anchor),
                init_word.clone(),
                init_context.clone(),
            ),
            Some((u, v)) => {
                let pu = combine_priors(&u.mean, params.diffusion, params.anchor);
                let pv = combine_priors(&v.mean, params.diffusion, params.anchor);
                (pu.clone(), pv.clone(), pu, pv)
            }
        };
        let penalty = match (reg, &reference) {
            (Some(config), Some(reference)) => Some(DriftPenalty { config, reference }),
            _ => None,
        };
        let fit = fit_slice(data, &pu, &pv, &qu, &qv, params, config, penalty)
            .map_err(|e| e.context(format!("slice {t}")))?;
        debug!("dsg: slice {t} final objective {:?}", fit.trace.last().map(|s| s.objective));
        if reference.is_none() {
            reference = Some(fit.word.mean.clone());
        }
        prev = Some((fit.word.clone(), fit.context.clone()));
        word[t] = Some(fit.word);
        context[t] = Some(fit.context);
        traces[t] = fit.trace;
    }
    Ok(DsgModel {
        word: word.into_iter().map(Option::unwrap).collect(),
        context: context.into_iter().map(Option::unwrap).collect(),
        order,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sgns_log_likelihood;

    fn mat(rows: usize, dim: usize, v: Vec<f64>) -> EmbeddingMatrix {
        EmbeddingMatrix::from_vec(rows, dim, v, Role::Word).unwrap()
    }

    #[test]
    fn combine_priors_closed_form() {
        let prev = mat(1, 2, vec![1.1, -2.2]);
        let g = combine_priors(&prev, 1.0, 0.1);
        for &s in g.variance.as_slice() {
            assert!((s - 1.0 / 11.0).abs() < 1e-12);
        }
        assert!((g.mean.as_slice()[0] - 0.1).abs() < 1e-12);
        assert!((g.mean.as_slice()[1] + 0.2).abs() < 1e-12);
        let wide = combine_priors(&prev, 1.0, 1e300);
        assert!((wide.mean.as_slice()[0] - 1.1).abs() < 1e-12);
        assert!((wide.variance.as_slice()[0] - 1.0).abs() < 1e-12);
        let zero = combine_priors(&mat(1, 2, vec![0.0, 0.0]), 3.0, 0.5);
        assert_eq!(zero.mean.as_slice(), &[0.0, 0.0]);
        assert!(zero.variance.as_slice()[0] < 0.5);
    }

    #[test]
    fn entropy_of_unit_variances() {
        let q = GaussianEmbeddingMatrix::standard(3, 2, Role::Word);
        assert_eq!(entropy(&q, EntropyMode::SumOfVariances) * 2.0, 12.0);
        let exact = entropy(&q, EntropyMode::Exact);
        assert!((exact - 6.0 * 0.5 * (2.0 * PI * E).ln()).abs() < 1e-12);
    }

    #[test]
    fn log_prior_against_scalar_oracle() {
        let mut rng = seed::rng(5, &[]);
        let mean = EmbeddingMatrix::random_normal(4, 3, 1.0, Role::Word, &mut rng);
        let mut var = EmbeddingMatrix::random_normal(4, 3, 1.0, Role::Word, &mut rng);
        var.as_mut_slice().iter_mut().for_each(|x| *x = x.abs() + 0.1);
        let q = GaussianEmbeddingMatrix::new(mean, var).unwrap();
        let mut oracle = 0.0;
        for k in 0..12 {
            let s = q.variance.as_slice()[k];
            // cross-entropy of a Gaussian with itself: ½ ln(2π s) + ½
            oracle -= 0.5 * (2.0 * PI * s).ln() + 0.5;
        }
        assert!((expected_log_prior(&q, &q) - oracle).abs() < 1e-10);
    }

    #[test]
    fn zero_noise_likelihood_is_sgns_at_means() {
        let mut rng = seed::rng(6, &[]);
        let mu = EmbeddingMatrix::random_normal(4, 3, 1.0, Role::Word, &mut rng);
        let nu = EmbeddingMatrix::random_normal(4, 3, 1.0, Role::Context, &mut rng);
        let qu = GaussianEmbeddingMatrix::with_fixed_variance(mu.clone(), 1e-300);
        let qv = GaussianEmbeddingMatrix::with_fixed_variance(nu.clone(), 1e-300);
        let mut b = SkipGramBatch::new(0);
        b.push(0, 1, Label::Positive);
        b.push(2, 3, Label::Negative);
        b.push(1, 1, Label::Positive);
        let eps = EmbeddingMatrix::zeros(4, 3, Role::Word);
        let (ll, _, _) = reparam_likelihood(b.view(), &qu, &qv, &eps, &eps, Execution::Sequential);
        let direct = sgns_log_likelihood(b.view(), &mu, &nu);
        assert_eq!(ll.total(), direct.total());
        let elbo = dsg_elbo(b.view(), &qu, &qv, &qu, &qv, &DsgParams::default(), 1).unwrap();
        assert!((elbo.likelihood - direct.total()).abs() < 1e-9);
    }

    #[test]
    fn nonpositive_variance_is_an_error() {
        let mut q = GaussianEmbeddingMatrix::standard(2, 2, Role::Word);
        q.variance.as_mut_slice()[3] = 0.0;
        let b = SkipGramBatch::new(0);
        let e = dsg_elbo(b.view(), &q, &q, &q, &q, &DsgParams::default(), 0).unwrap_err();
        assert!(matches!(e, Error::NonPositiveVariance { index: 3, .. }));
    }

    #[test]
    fn empty_slice_shrinks_toward_zero() {
        let prev = GaussianEmbeddingMatrix::with_fixed_variance(mat(2, 2, vec![1.0, -2.0, 0.5, 3.0]), 0.3);
        let ctx = prev.clone();
        let config = TrainConfig {
            dim: 2,
            epochs: 20,
            ..Default::default()
        };
        let data = SliceData {
            index: 1,
            train: &[],
            heldout: None,
        };
        let fit = dsg_filter_step(data, (&prev, &ctx), &DsgParams::default(), &config).unwrap();
        let prior = combine_priors(&prev.mean, 1.0, 0.1);
        for (m, p) in fit.word.mean.as_slice().iter().zip(prior.mean.as_slice()) {
            assert!((m - p).abs() < 1e-9);
        }
        for (m, p) in fit.word.mean.as_slice().iter().zip(prev.mean.as_slice()) {
            assert!(m.abs() < p.abs());
        }
    }
}
