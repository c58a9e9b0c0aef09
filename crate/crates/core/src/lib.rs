//! Diachronic word embeddings trained on small, time-sliced corpora.
//!
//! Three models share one corpus pipeline and one analysis layer:
//!
//! * [`isg`]: skip-gram with negative sampling, trained slice by slice with
//!   each slice initialised from its predecessor.
//! * [`dsg`]: a Bayesian skip-gram whose Gaussian posterior at each slice
//!   becomes, through a diffusion prior, the prior of the next one.
//! * [`dbe`]: dynamic Bernoulli embeddings, per-slice word vectors with one
//!   shared context matrix, trained jointly under a Gaussian random walk.
//!
//! [`analysis`] measures per-word drift between slices and summarises the
//! drift distributions; [`drift_reg`] adds a HardShrink penalty on drift to
//! the dynamic models' objectives.

pub mod corpus;
mod error;
pub mod exec;
pub mod model;
pub mod optim;
pub mod seed;

pub use error::{Error, ErrorKind, Result};
pub use exec::Execution;

pub mod analysis;
pub mod dbe;
pub mod drift_reg;
pub mod dsg;
pub mod init;
pub mod isg;
pub mod run;
pub mod synth;
pub mod train;

use serde::{Deserialize, Serialize};

/// The three diachronic models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Isg,
    Dsg,
    Dbe,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Isg => "isg",
            ModelKind::Dsg => "dsg",
            ModelKind::Dbe => "dbe",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isg" => Ok(ModelKind::Isg),
            "dsg" => Ok(ModelKind::Dsg),
            "dbe" => Ok(ModelKind::Dbe),
            other => Err(Error::Config(format!(
                "unknown model `{other}` (expected isg, dsg or dbe)"
            ))),
        }
    }
}
