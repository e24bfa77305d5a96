//! Mixtures of experts for distributional regression.
//!
//! Component densities and mixture weights are driven by additive predictors
//! built from linear effects and penalized B-spline smooths. Models are fitted
//! by mini-batch first-order optimization of the log-sum-exp negative
//! log-likelihood, with an EM baseline for constant-weight linear mixtures.

pub mod basis;
pub mod data;
pub mod em;
pub mod error;
pub mod families;
pub mod metrics;
pub mod mixture;
pub mod optim;
pub mod predictors;
pub mod scoring;
pub mod simgen;

pub use basis::{BasisConfig, SmoothTerm};
pub use data::{Column, DataTable};
pub use error::{Error, Result};
pub use families::{Family, Transform};
pub use optim::{fit, FitResult, OptimConfig, OptimMethod};
pub use mixture::{MixtureModel, ObjectiveParts, Prediction, Responsibilities};
pub use predictors::{
    ComponentSpec, DesignSet, ModelSpec, ParamLayout, ParamVector, PredictorSpec, SmoothSpec,
};
