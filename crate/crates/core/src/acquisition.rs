//! Acquisition functions. Every kind returns a score to maximize.

use serde::{Deserialize, Serialize};

use crate::normal;

pub const DEFAULT_KAPPA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcqKind {
    Ei,
    /// Expected improvement of `exp(Z)` for a model fitted on log targets.
    LogEi,
    Pi,
    Lcb { kappa: f64 },
}

impl AcqKind {
    pub fn lcb() -> Self {
        AcqKind::Lcb {
            kappa: DEFAULT_KAPPA,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AcqKind::Ei => "ei",
            AcqKind::LogEi => "log_ei",
            AcqKind::Pi => "pi",
            AcqKind::Lcb { .. } => "lcb",
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AcqError {
    #[error("negative predictive variance {0}")]
    NegativeVariance(f64),
    #[error("non-finite acquisition input")]
    NonFinite,
    #[error("log_ei needs a positive shifted incumbent, got {0}")]
    NonPositiveIncumbent(f64),
    #[error("lcb kappa must be finite and positive, got {0}")]
    BadKappa(f64),
}

/// Scores a predictive `N(mean, variance)` against the incumbent `f_best`
/// (minimization).
///
/// `f_best` lives in the model's target space, except for [`AcqKind::LogEi`]:
/// there the model predicts `ln(y - min_y + delta)` and `f_best` is the
/// incumbent on the shifted raw scale, `y_best - min_y + delta > 0`.
pub fn acq_score(kind: AcqKind, mean: f64, variance: f64, f_best: f64) -> Result<f64, AcqError> {
    if !mean.is_finite() || !variance.is_finite() || !f_best.is_finite() {
        return Err(AcqError::NonFinite);
    }
    if variance < 0.0 {
        return Err(AcqError::NegativeVariance(variance));
    }
    let sigma = variance.sqrt();
    let score = match kind {
        AcqKind::Ei => {
            if sigma == 0.0 {
                (f_best - mean).max(0.0)
            } else {
                let u = (f_best - mean) / sigma;
                (sigma * (u * normal::cdf(u) + normal::pdf(u))).max(0.0)
            }
        }
        AcqKind::Pi => {
            if sigma == 0.0 {
                if mean < f_best {
                    1.0
                } else {
                    0.0
                }
            } else {
                normal::cdf((f_best - mean) / sigma)
            }
        }
        AcqKind::Lcb { kappa } => {
            if !(kappa.is_finite() && kappa > 0.0) {
                return Err(AcqError::BadKappa(kappa));
            }
            -(mean - kappa * sigma)
        }
        AcqKind::LogEi => {
            if f_best <= 0.0 {
                return Err(AcqError::NonPositiveIncumbent(f_best));
            }
            if sigma == 0.0 {
                (f_best - mean.exp()).max(0.0)
            } else {
                let v = (f_best.ln() - mean) / sigma;
                let s = f_best * normal::cdf(v)
                    - (mean + 0.5 * variance).exp() * normal::cdf(v - sigma);
                s.max(0.0)
            }
        }
    };
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_examples() {
        let ei = acq_score(AcqKind::Ei, 1.3, 1.0, 1.3).unwrap();
        assert!((ei - 0.398_942_3).abs() < 1e-6);
        assert_eq!(acq_score(AcqKind::Pi, 2.0, 0.25, 2.0).unwrap(), 0.5);
        let lcb = acq_score(AcqKind::Lcb { kappa: 2.0 }, 1.0, 4.0, 0.0).unwrap();
        assert_eq!(lcb, 3.0);
        assert_eq!(acq_score(AcqKind::Ei, 0.7, 0.0, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn zero_variance_limits() {
        assert_eq!(acq_score(AcqKind::Ei, 0.2, 0.0, 1.0).unwrap(), 0.8);
        assert_eq!(acq_score(AcqKind::Pi, 0.2, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(acq_score(AcqKind::Pi, 1.0, 0.0, 1.0).unwrap(), 0.0);
        let s = acq_score(AcqKind::LogEi, 0.0, 0.0, 3.0).unwrap();
        assert!((s - 2.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(
            acq_score(AcqKind::Ei, 0.0, -1.0, 0.0),
            Err(AcqError::NegativeVariance(-1.0))
        );
        assert_eq!(
            acq_score(AcqKind::Pi, f64::NAN, 1.0, 0.0),
            Err(AcqError::NonFinite)
        );
        assert_eq!(
            acq_score(AcqKind::LogEi, 0.0, 1.0, 0.0),
            Err(AcqError::NonPositiveIncumbent(0.0))
        );
        assert!(acq_score(AcqKind::Lcb { kappa: -1.0 }, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn scores_are_bounded_and_monotone_in_mean() {
        let kinds = [AcqKind::Ei, AcqKind::LogEi, AcqKind::Pi, AcqKind::lcb()];
        for kind in kinds {
            for var in [0.0, 0.01, 1.0, 9.0] {
                let mut prev = f64::INFINITY;
                for i in -40..=40 {
                    let mean = i as f64 * 0.1;
                    let s = acq_score(kind, mean, var, 0.5).unwrap();
                    assert!(s <= prev + 1e-12, "{kind:?} var={var} mean={mean}");
                    if matches!(kind, AcqKind::Ei | AcqKind::LogEi) {
                        assert!(s >= 0.0);
                    }
                    if kind == AcqKind::Pi {
                        assert!((0.0..=1.0).contains(&s));
                    }
                    prev = s;
                }
            }
        }
    }
}
