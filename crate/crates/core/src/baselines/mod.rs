//! Reference inference methods: re-optimizing bootstrap, k-step and
//! score bootstraps, and a preconditioned Langevin sampler.

mod bootstrap;
mod mala;

pub use bootstrap::{
    dmk_kstep, ks_score, standard_bootstrap, summarize_bootstrap, BootstrapDraws, InnerOptions,
};
pub use mala::{heuristic_gamma, mala_sample, MalaConfig, MalaResult, Posterior, Prior};
