//! Posterior-median prediction functions for the everyday "predicting the
//! future" task, and recovery of the implicit prior behind any black-box
//! predictor from its `(t, t*)` responses.
//!
//! - [`prior`]: prior families and their prediction functions.
//! - [`fit`]: least-squares recovery of prior parameters and model selection.
//! - [`elicitation`]: prompting a chat-completion endpoint over a `t` grid.
//! - [`store`]: records, manifests and fit results on disk.

pub mod elicitation;
pub mod fit;
pub mod prior;
pub mod store;

pub use elicitation::{ClientConfig, ElicitationRecord, ScenarioDef, ScenarioRegistry};
pub use fit::{
    fit_erlang, fit_gaussian, fit_power_law, mse, select_model, Aggregation, FitError, FitOptions,
    FitParams, FitResult, ModelSelection,
};
pub use prior::{
    posterior_median, posterior_median_analytic, posterior_median_numeric, prediction_curve,
    prior_density, Family, PredictionPair, PriorError, PriorSpec, QuadratureConfig,
    TabulatedDensity,
};
pub use store::{RunManifest, StoreError};
