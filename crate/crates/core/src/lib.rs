//! Training predictive models whose path-specific effect of a sensitive
//! feature on the outcome is constrained to a tolerance band.
//!
//! The crate covers five training procedures:
//!
//! * `M0` unconstrained maximum likelihood,
//! * `M1` maximum likelihood under a penalized effect constraint,
//! * `M2` maximum likelihood in a reparameterized outcome model whose
//!   effect coefficient is pinned to zero,
//! * `M3` a hybrid likelihood that adds empirical-likelihood weights on the
//!   baseline covariate,
//! * `M4` the reparameterized model combined with empirical-likelihood
//!   weights, solved by fixed-point iteration.
//!
//! Supporting modules generate the synthetic causal data, fit the parametric
//! factors, evaluate natural direct / path-specific effect estimators and run
//! seeded replication studies.

pub mod dataset;
pub mod design;
pub mod effects;
pub mod el;
mod error;
pub mod eval;
pub mod glm;
pub mod optim;
pub mod reparam;
pub mod rng;
pub mod train;

pub use dataset::{Dataset, DgpSpec, Graph, HeldOut};
pub use design::{Covariates, DesignSpec, Term};
pub use effects::{EffectEstimate, Estimator, Paths, PseFunctional};
pub use el::ElState;
pub use error::{Error, Result};
pub use eval::{Experiment, KlScope, Metrics};
pub use glm::{GlmParams, LinearModel, LogisticModel, ModelDesigns};
pub use reparam::ReparamOutcomeModel;
pub use train::{FitResult, Method, TrainConfig};
