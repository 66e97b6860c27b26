//! Regression surrogates over unit-cube inputs and transformed targets.

use rand::Rng;
use serde::{Deserialize, Serialize};

pub mod gp;
pub mod rf;

pub use gp::{GpConfig, GpHyperparams, GpModel};
pub use rf::{RfConfig, RfModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    Gp,
    Rf,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FitError {
    #[error("cannot fit a surrogate on an empty training set")]
    Empty,
    #[error("inputs and targets differ in length ({inputs} vs {targets})")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("training targets must be finite")]
    NonFinite,
    #[error("kernel matrix is not positive definite even with jitter {jitter:e}")]
    IllConditioned { jitter: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub gp: GpConfig,
    pub rf: RfConfig,
}

#[derive(Debug, Clone)]
pub enum Surrogate {
    Gp(GpModel),
    Rf(RfModel),
}

impl Surrogate {
    pub fn fit<R: Rng + ?Sized>(
        kind: SurrogateKind,
        x: &[Vec<f64>],
        z: &[f64],
        config: &SurrogateConfig,
        rng: &mut R,
    ) -> Result<Self, FitError> {
        match kind {
            SurrogateKind::Gp => gp::fit_gp(x, z, &config.gp, rng).map(Surrogate::Gp),
            SurrogateKind::Rf => rf::fit_rf(x, z, &config.rf, rng).map(Surrogate::Rf),
        }
    }

    /// Predictive `(mean, variance)` at a unit-cube point.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        match self {
            Surrogate::Gp(m) => m.predict(x),
            Surrogate::Rf(m) => m.predict(x),
        }
    }

    pub fn kind(&self) -> SurrogateKind {
        match self {
            Surrogate::Gp(_) => SurrogateKind::Gp,
            Surrogate::Rf(_) => SurrogateKind::Rf,
        }
    }
}

fn check_training_set(x: &[Vec<f64>], z: &[f64]) -> Result<(), FitError> {
    if x.len() != z.len() {
        return Err(FitError::LengthMismatch {
            inputs: x.len(),
            targets: z.len(),
        });
    }
    if x.is_empty() {
        return Err(FitError::Empty);
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    Ok(())
}
