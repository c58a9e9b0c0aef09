//! Point-estimate embedding matrices and the skip-gram negative-sampling
//! likelihood shared by the incremental and filtering trainers.

pub mod io;
mod sgns;

pub use sgns::{
    log_sigmoid, sgns_gradients, sgns_log_likelihood, sigmoid, LogLikelihood, RowGradient,
};
pub(crate) use sgns::{sgns_accumulate, RowAccumulator};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    /// Word (center) vectors, `U`.
    Word,
    /// Context vectors, `V`.
    Context,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SliceTag {
    Static,
    Slice(usize),
}

/// Row-major `rows × dim` matrix with one row per vocabulary word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
    pub role: Role,
    pub slice: SliceTag,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, dim: usize, role: Role) -> Self {
        EmbeddingMatrix {
            rows,
            dim,
            data: vec![0.0; rows * dim],
            role,
            slice: SliceTag::Static,
        }
    }

    pub fn from_vec(rows: usize, dim: usize, data: Vec<f64>, role: Role) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                what: "embedding matrix data".into(),
                expected: rows * dim,
                found: data.len(),
            });
        }
        Ok(EmbeddingMatrix {
            rows,
            dim,
            data,
            role,
            slice: SliceTag::Static,
        })
    }

    /// Entries drawn i.i.d. from `N(0, scale²)`.
    pub fn random_normal<R: Rng + ?Sized>(rows: usize, dim: usize, scale: f64, role: Role, rng: &mut R) -> Self {
        let data = (0..rows * dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        EmbeddingMatrix {
            rows,
            dim,
            data,
            role,
            slice: SliceTag::Static,
        }
    }

    pub fn with_slice(mut self, slice: SliceTag) -> Self {
        self.slice = slice;
        self
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &EmbeddingMatrix) -> bool {
        self.rows == other.rows && self.dim == other.dim
    }

    pub fn check_shape(&self, rows: usize, dim: usize, what: &str) -> Result<()> {
        if self.rows != rows {
            return Err(Error::DimensionMismatch {
                what: format!("{what} rows"),
                expected: rows,
                found: self.rows,
            });
        }
        if self.dim != dim {
            return Err(Error::DimensionMismatch {
                what: format!("{what} dimension"),
                expected: dim,
                found: self.dim,
            });
        }
        Ok(())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { what: what.into() })
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hyperparameters shared by all trainers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub negative_ratio: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Positive pairs per mini-batch (each carries its negatives along).
    pub batch_size: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 100,
            window: 4,
            negative_ratio: 1,
            learning_rate: 0.1,
            epochs: 100,
            batch_size: 1024,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.window == 0 {
            return bad("window must be at least 1");
        }
        if self.negative_ratio == 0 {
            return bad("negative_ratio must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn rows_and_shapes() {
        let mut m = EmbeddingMatrix::zeros(3, 2, Role::Word);
        m.row_mut(1).copy_from_slice(&[1.0, 2.0]);
        assert_eq!(m.row(1), &[1.0, 2.0]);
        assert!(m.check_shape(3, 2, "U").is_ok());
        assert!(m.check_shape(3, 4, "U").is_err());
        m.row_mut(2)[0] = f64::NAN;
        assert!(m.check_finite("U").is_err());
    }
}
