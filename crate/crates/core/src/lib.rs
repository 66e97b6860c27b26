//! Batch black-box optimizer that switches between an initial design,
//! portfolio Bayesian optimization and differential evolution.

pub mod acquisition;
pub mod bo;
pub mod de;
pub mod history;
pub mod normal;
pub mod protocol;
pub mod scheduler;
pub mod space;
pub mod surrogates;
pub mod transforms;
pub mod warmstart;

pub use acquisition::{acq_score, AcqKind};
pub use bo::{BoConfig, Portfolio, Triplet};
pub use de::DeConfig;
pub use history::{History, StageTag, Trial};
pub use scheduler::{Optimizer, OptimizerConfig, SchedulerError, Stage};
pub use space::{ConfigSpace, Configuration, ParamSpec, ParamValue, UnitVector};
pub use surrogates::{Surrogate, SurrogateKind};
pub use transforms::TransformKind;
pub use warmstart::Registry;
