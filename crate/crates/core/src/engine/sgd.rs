use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::guard;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::objective::{evaluate, Model, Want};
use crate::resampling::ResamplePlan;
use crate::rng::{substream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub gamma0: f64,
    /// Schedule exponent: `gamma_k = gamma0 k^(-delta)`.
    pub delta: f64,
    /// Fresh subsample size per iteration.
    pub m: usize,
    pub iters: usize,
    pub seed: u64,
    pub theta0: Vec<f64>,
    pub keep_path: bool,
}

impl SgdConfig {
    pub fn learning_rate(&self, k: usize) -> f64 {
        self.gamma0 * (k as f64).powf(-self.delta)
    }
}

#[derive(Debug, Clone)]
pub struct SgdResult {
    pub last: DVector<f64>,
    /// Running (Polyak-Ruppert) average of the iterates.
    pub average: DVector<f64>,
    pub path: Vec<DVector<f64>>,
    /// Per-observation gradient evaluations used.
    pub gradient_evaluations: usize,
}

/// Stochastic gradient descent with decaying steps and iterate averaging.
pub fn run_sgd(model: &dyn Model, data: &Dataset, config: &SgdConfig) -> Result<SgdResult> {
    if !(config.delta > 0.5 && config.delta <= 1.0) {
        return Err(Error::Config(format!(
            "delta = {} must lie in (1/2, 1]",
            config.delta
        )));
    }
    if !(config.gamma0 > 0.0) || config.m == 0 || config.iters == 0 {
        return Err(Error::Config(
            "sgd needs gamma0 > 0, m >= 1 and iters >= 1".into(),
        ));
    }
    if config.theta0.len() != model.dim() {
        return Err(Error::Config("theta0 has the wrong dimension".into()));
    }
    let n = data.n();
    let mut theta = DVector::from_vec(config.theta0.clone());
    let mut average = DVector::zeros(theta.len());
    let mut path = Vec::new();
    for k in 1..=config.iters {
        let mut rng = substream(config.seed, k as u64, Purpose::Sgd);
        let idx = (0..config.m).map(|_| rng.random_range(0..n)).collect();
        let plan = ResamplePlan::from_indices(idx)?;
        let g = evaluate(model, data, &theta, &plan, Want::GRADIENT)?
            .gradient
            .unwrap();
        let next = &theta - g * config.learning_rate(k);
        guard(&next, k, &theta)?;
        theta = next;
        average += (&theta - &average) / k as f64;
        if config.keep_path {
            path.push(theta.clone());
        }
    }
    Ok(SgdResult {
        last: theta,
        average,
        path,
        gradient_evaluations: config.iters * config.m,
    })
}
