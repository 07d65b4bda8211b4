//! Chain drivers: the resampled update loop, deterministic optimizers,
//! stochastic gradient descent, split-panel chains and the linear coupling
//! process used as a test oracle.

mod chain;
mod classical;
mod coupling;
mod sgd;
mod split_panel;

pub use chain::{
    burn_in_rule, iteration_plan, run_chain, ChainState, DrawChain, FailureEvent, Method,
    PenaltySchedule, QnInit, RunConfig, DIVERGENCE_BOUND,
};
pub use classical::{
    classical_optimize, newton_solve, ClassicalMethod, ClassicalOptions, NewtonResult, OptimizePath,
};
pub use coupling::CouplingOracle;
pub use sgd::{run_sgd, SgdConfig, SgdResult};
pub use split_panel::{run_split_panel, IdentityFeatures, PanelFeaturizer, SplitPanelResult};

use nalgebra::DVector;

use crate::error::{Error, Result};

pub(crate) fn guard(theta: &DVector<f64>, iteration: usize, last: &DVector<f64>) -> Result<()> {
    if theta.iter().all(|v| v.is_finite()) && theta.amax() <= DIVERGENCE_BOUND {
        Ok(())
    } else {
        Err(Error::Divergence {
            iteration,
            last_finite: last.iter().copied().collect(),
        })
    }
}
