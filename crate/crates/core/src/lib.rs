//! Resampled gradient and Newton-type chains that deliver a point estimate
//! and bootstrap-style inference from a single run.

pub mod baselines;
pub mod compare;
pub mod conditioning;
pub mod data;
pub mod engine;
pub mod error;
pub mod export;
pub mod inference;
pub mod models;
pub mod objective;
pub mod resampling;
pub mod rng;
pub mod study;

pub use data::Dataset;
pub use error::{Error, Result};
pub use objective::{
    evaluate, evaluate_full, hessian_vector_product, Model, ObjectiveEvaluation, Want,
};
pub use resampling::{draw_plan, unit_plan, ResamplePlan, Scheme, SchemeConfig};
