//! Initial parameters for a diachronic run: random, internal (a static model
//! trained on the pooled corpus) or backward external (pretrained vectors on
//! the newest slice, trained new to old).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::TimeSlicedCorpus;
use crate::dbe::{self, DbeParams};
use crate::dsg::{self, DsgParams, GaussianEmbeddingMatrix};
use crate::isg::{self, Direction};
use crate::model::io::read_vectors;
use crate::model::{EmbeddingMatrix, Role, TrainConfig};
use crate::train::SliceData;
use crate::{seed, Error, ModelKind, Result};

/// Standard deviation of rows filled in for words missing from a pretrained file.
pub const OOV_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    Random,
    Internal,
    BackwardExternal,
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitKind::Random),
            "internal" => Ok(InitKind::Internal),
            "backward_external" | "backward-external" => Ok(InitKind::BackwardExternal),
            other => Err(Error::Config(format!(
                "unknown init `{other}` (expected random, internal or backward-external)"
            ))),
        }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitKind::Random => "random",
            InitKind::Internal => "internal",
            InitKind::BackwardExternal => "backward_external",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitScheme {
    pub kind: InitKind,
    pub pretrained_path: Option<PathBuf>,
    /// DSG variance paired with pretrained means.
    pub fixed_variance: f64,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme {
            kind: InitKind::Random,
            pretrained_path: None,
            fixed_variance: 0.1,
        }
    }
}

impl InitScheme {
    pub fn validate(&self) -> Result<()> {
        if self.kind == InitKind::BackwardExternal && self.pretrained_path.is_none() {
            return Err(Error::Config("backward_external init needs a pretrained_path".into()));
        }
        if !(self.fixed_variance > 0.0 && self.fixed_variance.is_finite()) {
            return Err(Error::Config("init fixed_variance must be > 0".into()));
        }
        Ok(())
    }
}

/// Initial parameters in the layout each trainer expects.
#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Isg {
        word: EmbeddingMatrix,
        context: EmbeddingMatrix,
    },
    Dsg {
        word: GaussianEmbeddingMatrix,
        context: GaussianEmbeddingMatrix,
    },
    Dbe {
        word: Vec<EmbeddingMatrix>,
        context: EmbeddingMatrix,
    },
}

/// Share of the vocabulary found in a pretrained file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub found: usize,
    pub total: usize,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.found as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct InitPlan {
    pub initial: Initial,
    pub direction: Direction,
    pub coverage: Option<Coverage>,
}

fn normal(rows: usize, dim: usize, role: Role, base: u64, stream: u64) -> EmbeddingMatrix {
    let mut rng = seed::rng(base, &[seed::INIT, stream]);
    EmbeddingMatrix::random_normal(rows, dim, 1.0, role, &mut rng)
}

/// ISG and DBE: standard normal entries (DBE copies one draw to every slice).
/// DSG: zero means, unit variances.
pub fn init_random(rows: usize, dim: usize, base: u64, model: ModelKind, num_slices: usize) -> Initial {
    match model {
        ModelKind::Isg => Initial::Isg {
            word: normal(rows, dim, Role::Word, base, 0),
            context: normal(rows, dim, Role::Context, base, 1),
        },
        ModelKind::Dsg => Initial::Dsg {
            word: GaussianEmbeddingMatrix::standard(rows, dim, Role::Word),
            context: GaussianEmbeddingMatrix::standard(rows, dim, Role::Context),
        },
        ModelKind::Dbe => {
            let u = normal(rows, dim, Role::Word, base, 0);
            Initial::Dbe {
                word: vec![u; num_slices.max(1)],
                context: normal(rows, dim, Role::Context, base, 1),
            }
        }
    }
}

/// Trains the static version of `model` on `pooled` (a single slice) from a
/// random start and returns its parameters as an initializer.
pub fn init_internal(
    pooled: &TimeSlicedCorpus,
    rows: usize,
    config: &TrainConfig,
    model: ModelKind,
    dsg_params: &DsgParams,
    dbe_params: &DbeParams,
    num_slices: usize,
) -> Result<Initial> {
    if pooled.num_slices() != 1 {
        return Err(Error::InvalidArgument(format!(
            "internal init expects a pooled corpus with one slice, got {}",
            pooled.num_slices()
        )));
    }
    if pooled.total_tokens() == 0 {
        return Err(Error::EmptyCorpus("pooled corpus for internal init".into()));
    }
    info!("internal init: training a static {model} model on {} tokens", pooled.total_tokens());
    let ctx = |e: Error| e.context("internal init");
    let start = init_random(rows, config.dim, config.seed, model, 1);
    Ok(match start {
        Initial::Isg { word, context } => {
            let data = SliceData {
                index: 0,
                train: pooled.slice(0),
                heldout: None,
            };
            let fit = isg::train_slice(data, word, context, config).map_err(ctx)?;
            Initial::Isg {
                word: fit.word,
                context: fit.context,
            }
        }
        Initial::Dsg { word, context } => {
            let m = dsg::train_dsg(pooled, None, word, context, dsg_params, config, Direction::Forward, None)
                .map_err(ctx)?;
            Initial::Dsg {
                word: GaussianEmbeddingMatrix::with_fixed_variance(m.word[0].mean.clone(), 1.0),
                context: GaussianEmbeddingMatrix::with_fixed_variance(m.context[0].mean.clone(), 1.0),
            }
        }
        Initial::Dbe { word, context } => {
            let m = dbe::train_dbe(pooled, None, word, context, dbe_params, config, None).map_err(ctx)?;
            Initial::Dbe {
                word: vec![m.word[0].clone(); num_slices.max(1)],
                context: m.context,
            }
        }
    })
}

/// Reads pretrained vectors for `words`; rows for words missing from the file
/// are drawn from `N(0, 0.1²)` with `oov_seed`.
pub fn load_pretrained(path: &Path, words: &[String], dim: usize, oov_seed: u64, role: Role) -> Result<(EmbeddingMatrix, Coverage)> {
    let (file_words, m) = read_vectors(path, role)?;
    if m.dim() != dim {
        return Err(Error::DimensionMismatch {
            what: format!("pretrained vectors {}", path.display()),
            expected: dim,
            found: m.dim(),
        });
    }
    let index: std::collections::HashMap<&str, usize> =
        file_words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let mut out = EmbeddingMatrix::zeros(words.len(), dim, role);
    let mut rng = seed::rng(oov_seed, &[seed::OOV]);
    let mut found = 0;
    for (i, w) in words.iter().enumerate() {
        match index.get(w.as_str()) {
            Some(&r) => {
                out.row_mut(i).copy_from_slice(m.row(r));
                found += 1;
            }
            None => {
                for x in out.row_mut(i) {
                    *x = OOV_SCALE * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
    Ok((
        out,
        Coverage {
            found,
            total: words.len(),
        },
    ))
}

/// Resolves a scheme into initial parameters and a training direction.
#[allow(clippy::too_many_arguments)]
pub fn apply_scheme(
    scheme: &InitScheme,
    model: ModelKind,
    corpus: &TimeSlicedCorpus,
    words: &[String],
    config: &TrainConfig,
    dsg_params: &DsgParams,
    dbe_params: &DbeParams,
) -> Result<InitPlan> {
    scheme.validate()?;
    let rows = words.len();
    let n = corpus.num_slices();
    match scheme.kind {
        InitKind::Random => {
            if let Some(p) = &scheme.pretrained_path {
                warn!("random init ignores pretrained_path {}", p.display());
            }
            Ok(InitPlan {
                initial: init_random(rows, config.dim, config.seed, model, n),
                direction: Direction::Forward,
                coverage: None,
            })
        }
        InitKind::Internal => Ok(InitPlan {
            initial: init_internal(&corpus.pooled(), rows, config, model, dsg_params, dbe_params, n)?,
            direction: Direction::Forward,
            coverage: None,
        }),
        InitKind::BackwardExternal => {
            let path = scheme.pretrained_path.as_deref().expect("validated");
            let (u, coverage) = load_pretrained(path, words, config.dim, config.seed, Role::Word)?;
            let v = u.clone().with_role(Role::Context);
            info!(
                "pretrained vectors cover {}/{} words ({:.1}%)",
                coverage.found,
                coverage.total,
                100.0 * coverage.fraction()
            );
            let initial = match model {
                ModelKind::Isg => Initial::Isg { word: u, context: v },
                ModelKind::Dsg => Initial::Dsg {
                    word: GaussianEmbeddingMatrix::with_fixed_variance(u, scheme.fixed_variance),
                    context: GaussianEmbeddingMatrix::with_fixed_variance(v, scheme.fixed_variance),
                },
                ModelKind::Dbe => Initial::Dbe {
                    word: vec![u; n.max(1)],
                    context: v,
                },
            };
            Ok(InitPlan {
                initial,
                direction: Direction::Backward,
                coverage: Some(coverage),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_init_statistics() {
        let Initial::Isg { word, .. } = init_random(1000, 100, 7, ModelKind::Isg, 1) else {
            unreachable!()
        };
        let x = word.as_slice();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.02);
        assert_eq!(init_random(5, 3, 7, ModelKind::Isg, 1), init_random(5, 3, 7, ModelKind::Isg, 1));
    }

    #[test]
    fn dsg_random_init_is_standard() {
        let Initial::Dsg { word, context } = init_random(4, 3, 1, ModelKind::Dsg, 2) else {
            unreachable!()
        };
        assert!(word.mean.as_slice().iter().all(|&m| m == 0.0));
        assert!(context.variance.as_slice().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn dbe_random_init_copies_slices() {
        let Initial::Dbe { word, .. } = init_random(4, 3, 1, ModelKind::Dbe, 3) else {
            unreachable!()
        };
        assert_eq!(word.len(), 3);
        assert_eq!(word[0], word[2]);
    }

    #[test]
    fn scheme_validation() {
        let s = InitScheme {
            kind: InitKind::BackwardExternal,
            ..Default::default()
        };
        assert!(s.validate().is_err());
        assert_eq!("backward-external".parse::<InitKind>().unwrap(), InitKind::BackwardExternal);
        assert!("sideways".parse::<InitKind>().is_err());
    }
}
