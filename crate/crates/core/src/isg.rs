//! Incremental skip-gram: each slice is trained with negative sampling,
//! starting from the vectors of the previously trained slice.

use log::{debug, info};

use crate::analysis::sgns_lpos;
use crate::corpus::{NoiseDistribution, TimeSlicedCorpus};
use crate::model::{sgns_accumulate, EmbeddingMatrix, SliceTag, TrainConfig};
use crate::optim::AdamState;
use crate::train::{self, EpochStats, SliceData};
use crate::{Error, Result};

/// Training order over slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Forward,
    /// Newest slice first.
    Backward,
}

impl Direction {
    /// Slice indices in training order.
    pub fn order(self, num_slices: usize) -> Vec<usize> {
        match self {
            Direction::Forward => (0..num_slices).collect(),
            Direction::Backward => (0..num_slices).rev().collect(),
        }
    }
}

/// Result of training one slice.
#[derive(Debug, Clone)]
pub struct SliceFit {
    pub word: EmbeddingMatrix,
    pub context: EmbeddingMatrix,
    pub trace: Vec<EpochStats>,
    pub adam_word: AdamState,
    pub adam_context: AdamState,
}

/// All slices of an incremental run, indexed by calendar slice.
#[derive(Debug, Clone)]
pub struct IsgModel {
    pub word: Vec<EmbeddingMatrix>,
    pub context: Vec<EmbeddingMatrix>,
    /// Slices in the order they were trained.
    pub order: Vec<usize>,
    pub traces: Vec<Vec<EpochStats>>,
}

impl IsgModel {
    pub fn num_slices(&self) -> usize {
        self.word.len()
    }
}

/// Trains one slice by Adam ascent on the negative-sampling log-likelihood.
/// A slice without any pair returns the initial matrices unchanged.
pub fn train_slice(
    data: SliceData<'_>,
    init_word: EmbeddingMatrix,
    init_context: EmbeddingMatrix,
    config: &TrainConfig,
) -> Result<SliceFit> {
    config.validate()?;
    let (rows, dim) = (init_word.rows(), init_word.dim());
    init_word.check_shape(rows, config.dim, "initial word matrix")?;
    init_context.check_shape(rows, dim, "initial context matrix")?;
    let t = data.index;
    let mut u = init_word.with_slice(SliceTag::Slice(t));
    let mut v = init_context.with_slice(SliceTag::Slice(t));
    let mut adam_u = AdamState::new(format!("isg U_{t}"), rows, dim);
    let mut adam_v = AdamState::new(format!("isg V_{t}"), rows, dim);
    let mut trace = Vec::with_capacity(config.epochs);

    let counts = count_tokens(data.train, rows);
    let Some(noise) = NoiseDistribution::from_counts(&counts) else {
        debug!("slice {t} is empty, keeping its initial vectors");
        return Ok(SliceFit {
            word: u,
            context: v,
            trace,
            adam_word: adam_u,
            adam_context: adam_v,
        });
    };

    for epoch in 0..config.epochs {
        let batch = train::epoch_batch(
            data.train,
            &noise,
            config.window,
            config.negative_ratio,
            config.seed,
            t,
            epoch,
            config.execution,
        );
        let (mut lpos, mut npos, mut objective) = (0.0, 0usize, 0.0);
        for (b, r) in train::minibatches(batch.len(), config.batch_size, config.negative_ratio)
            .into_iter()
            .enumerate()
        {
            let (ll, mut gu, mut gv) = sgns_accumulate(batch.view().range(r), &u, &v, config.execution);
            train::check_loss(ll.total(), t, epoch, b)?;
            lpos += ll.positive;
            npos += ll.n_positive;
            objective += ll.total();
            // Adam descends, the likelihood is maximised.
            gu.scale(-1.0);
            gv.scale(-1.0);
            adam_u
                .step_rows(u.as_mut_slice(), &gu, config.learning_rate)
                .map_err(|e| e.context(format!("slice {t}, epoch {epoch}, batch {b}")))?;
            adam_v
                .step_rows(v.as_mut_slice(), &gv, config.learning_rate)
                .map_err(|e| e.context(format!("slice {t}, epoch {epoch}, batch {b}")))?;
        }
        let heldout_lpos = data
            .heldout
            .and_then(|h| sgns_lpos(h, config.window, &u, &v, config.execution).mean_per_pair());
        trace.push(EpochStats {
            slice: t,
            epoch,
            train_lpos: if npos > 0 { lpos / npos as f64 } else { 0.0 },
            heldout_lpos,
            objective,
            beta: None,
        });
    }
    Ok(SliceFit {
        word: u,
        context: v,
        trace,
        adam_word: adam_u,
        adam_context: adam_v,
    })
}

pub(crate) fn count_tokens(docs: &[crate::corpus::Document], rows: usize) -> Vec<u64> {
    let mut counts = vec![0u64; rows];
    for d in docs {
        for &w in d {
            counts[w as usize] += 1;
        }
    }
    counts
}

/// Trains every slice in `direction` order, each from the result of the slice
/// trained just before it. Outputs are indexed by calendar slice.
pub fn train_incremental(
    corpus: &TimeSlicedCorpus,
    heldout: Option<&TimeSlicedCorpus>,
    init_word: EmbeddingMatrix,
    init_context: EmbeddingMatrix,
    config: &TrainConfig,
    direction: Direction,
) -> Result<IsgModel> {
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
    let mut word = vec![None; n];
    let mut context = vec![None; n];
    let mut traces = vec![Vec::new(); n];
    let (mut u, mut v) = (init_word, init_context);
    for &t in &order {
        info!("isg: training slice {t}");
        let data = SliceData {
            index: t,
            train: corpus.slice(t),
            heldout: heldout.map(|h| h.slice(t)),
        };
        let fit = train_slice(data, u, v, config).map_err(|e| e.context(format!("slice {t}")))?;
        u = fit.word.clone();
        v = fit.context.clone();
        word[t] = Some(fit.word);
        context[t] = Some(fit.context);
        traces[t] = fit.trace;
    }
    Ok(IsgModel {
        word: word.into_iter().map(Option::unwrap).collect(),
        context: context.into_iter().map(Option::unwrap).collect(),
        order,
        traces,
    })
}
