//! HardShrink penalty on per-word drift, added to the minimised loss of the
//! dynamic models.
//!
//! The penalty is `alpha * Σ_i hardshrink(drift_i, beta)` where `drift_i` is
//! the L2 distance between a word's vector and its vector in the reference
//! slice. Only word matrices are penalised, never context matrices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::compute_drift;
use crate::model::EmbeddingMatrix;
use crate::{Error, Result};

/// `x` above `beta`, `-x` below `-beta`, exactly 0 in between.
#[inline]
pub fn hardshrink(x: f64, beta: f64) -> f64 {
    if x > beta {
        x
    } else if x < -beta {
        -x
    } else {
        0.0
    }
}

/// Threshold of the penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BetaRepr", into = "BetaRepr")]
pub enum Beta {
    Fixed(f64),
    /// The mean drift of the penalised slice, refreshed once per epoch.
    MeanDrift,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BetaRepr {
    Number(f64),
    Word(String),
}

impl TryFrom<BetaRepr> for Beta {
    type Error = Error;

    fn try_from(r: BetaRepr) -> Result<Self> {
        match r {
            BetaRepr::Number(x) => Beta::fixed(x),
            BetaRepr::Word(w) => w.parse(),
        }
    }
}

impl From<Beta> for BetaRepr {
    fn from(b: Beta) -> Self {
        match b {
            Beta::Fixed(x) => BetaRepr::Number(x),
            Beta::MeanDrift => BetaRepr::Word("mean".into()),
        }
    }
}

impl Beta {
    pub fn fixed(x: f64) -> Result<Self> {
        if x >= 0.0 && x.is_finite() {
            Ok(Beta::Fixed(x))
        } else {
            Err(Error::Config(format!("beta must be a finite value >= 0, got {x}")))
        }
    }

    /// The threshold to use given the current drifts.
    pub fn resolve(self, drifts: &[f64]) -> f64 {
        match self {
            Beta::Fixed(x) => x,
            Beta::MeanDrift if drifts.is_empty() => 0.0,
            Beta::MeanDrift => drifts.iter().sum::<f64>() / drifts.len() as f64,
        }
    }
}

impl FromStr for Beta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mean" => Ok(Beta::MeanDrift),
            v => v
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("beta must be a number or `mean`, got `{v}`")))
                .and_then(Beta::fixed),
        }
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Fixed(x) => write!(f, "{x}"),
            Beta::MeanDrift => f.write_str("mean"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegConfig {
    pub alpha: f64,
    pub beta: Beta,
    pub enabled: bool,
}

impl Default for RegConfig {
    fn default() -> Self {
        RegConfig {
            alpha: 0.0,
            beta: Beta::MeanDrift,
            enabled: false,
        }
    }
}

impl RegConfig {
    pub fn new(alpha: f64, beta: Beta) -> Self {
        RegConfig {
            alpha,
            beta,
            enabled: alpha > 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("reg alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.enabled && self.alpha > 0.0
    }
}

/// `alpha · Σ_i hardshrink(‖u_{i,t} − u_{i,ref}‖, beta)`.
pub fn drift_regularizer(u_t: &EmbeddingMatrix, u_ref: &EmbeddingMatrix, alpha: f64, beta: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    alpha
        * compute_drift(u_t, u_ref)
            .into_iter()
            .map(|d| hardshrink(d, beta))
            .sum::<f64>()
}

/// Adds `scale · ∂reg/∂U_t` to `grad_t` (dense, row-major). The gradient is
/// `alpha (u_{i,t} − u_{i,ref}) / drift_i` for words above the threshold and
/// zero otherwise, including exactly at the threshold. The gradient with
/// respect to `U_ref` is the negation; it is added to `grad_ref` when given.
pub fn add_regularizer_gradient(
    u_t: &EmbeddingMatrix,
    u_ref: &EmbeddingMatrix,
    alpha: f64,
    beta: f64,
    scale: f64,
    grad_t: &mut [f64],
    mut grad_ref: Option<&mut [f64]>,
) {
    let d = u_t.dim();
    for i in 0..u_t.rows() {
        let (a, b) = (u_t.row(i), u_ref.row(i));
        let drift = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        if drift <= beta || drift == 0.0 {
            continue;
        }
        let c = scale * alpha / drift;
        for j in 0..d {
            let g = c * (a[j] - b[j]);
            grad_t[i * d + j] += g;
            if let Some(r) = grad_ref.as_deref_mut() {
                r[i * d + j] -= g;
            }
        }
    }
}

/// Dense gradient of [`drift_regularizer`] with respect to `U_t`.
pub fn drift_regularizer_gradient(u_t: &EmbeddingMatrix, u_ref: &EmbeddingMatrix, alpha: f64, beta: f64) -> Vec<f64> {
    let mut g = vec![0.0; u_t.rows() * u_t.dim()];
    add_regularizer_gradient(u_t, u_ref, alpha, beta, 1.0, &mut g, None);
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Role;
    use crate::seed;
    use proptest::prelude::*;

    #[test]
    fn hardshrink_branches() {
        assert_eq!(hardshrink(0.5, 1.0), 0.0);
        assert_eq!(hardshrink(2.0, 1.0), 2.0);
        assert_eq!(hardshrink(-2.0, 1.0), 2.0);
        assert_eq!(hardshrink(1.0, 1.0), 0.0);
        assert_eq!(hardshrink(-1.0, 1.0), 0.0);
    }

    proptest! {
        #[test]
        fn dead_zone_is_exact(beta in 0.0f64..10.0, t in -1.0f64..=1.0) {
            prop_assert_eq!(hardshrink(beta * t, beta), 0.0);
        }

        #[test]
        fn nonnegative_on_norms(x in 0.0f64..100.0, beta in 0.0f64..10.0) {
            prop_assert!(hardshrink(x, beta) >= 0.0);
        }
    }

    fn rows(v: &[[f64; 2]]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_vec(v.len(), 2, v.iter().flatten().copied().collect(), Role::Word).unwrap()
    }

    #[test]
    fn regularizer_values() {
        let r = rows(&[[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
        let u = rows(&[[0.2, 0.0], [0.0, 1.5], [3.0, 0.0]]);
        assert!((drift_regularizer(&u, &r, 0.5, 1.0) - 2.25).abs() < 1e-15);
        assert_eq!(drift_regularizer(&u, &u, 3.0, 0.0), 0.0);
        assert_eq!(drift_regularizer(&u, &r, 0.0, 0.0), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences_away_from_kink() {
        let mut rng = seed::rng(3, &[]);
        for _ in 0..100 {
            let u = EmbeddingMatrix::random_normal(6, 3, 1.0, Role::Word, &mut rng);
            let r = EmbeddingMatrix::random_normal(6, 3, 1.0, Role::Word, &mut rng);
            let drifts = compute_drift(&u, &r);
            let beta = Beta::MeanDrift.resolve(&drifts);
            if drifts.iter().any(|d| (d - beta).abs() < 1e-3) {
                continue;
            }
            let g = drift_regularizer_gradient(&u, &r, 0.7, beta);
            let h = 1e-6;
            for k in 0..18 {
                let (mut p, mut m) = (u.clone(), u.clone());
                p.as_mut_slice()[k] += h;
                m.as_mut_slice()[k] -= h;
                let fd = (drift_regularizer(&p, &r, 0.7, beta) - drift_regularizer(&m, &r, 0.7, beta)) / (2.0 * h);
                assert!((fd - g[k]).abs() / g[k].abs().max(1e-3) < 1e-4);
            }
        }
    }

    #[test]
    fn beta_parsing() {
        assert_eq!("mean".parse::<Beta>().unwrap(), Beta::MeanDrift);
        assert_eq!("0.25".parse::<Beta>().unwrap(), Beta::Fixed(0.25));
        assert!("-1".parse::<Beta>().is_err());
        assert!("big".parse::<Beta>().is_err());
        assert_eq!(Beta::MeanDrift.resolve(&[1.0, 2.0, 6.0]), 3.0);
        let c: RegConfig = toml::from_str("alpha = 0.5\nbeta = \"mean\"\nenabled = true").unwrap();
        assert_eq!(c, RegConfig::new(0.5, Beta::MeanDrift));
        let c: RegConfig = toml::from_str("alpha = 0.5\nbeta = 0.3").unwrap();
        assert_eq!(c.beta, Beta::Fixed(0.3));
    }
}
