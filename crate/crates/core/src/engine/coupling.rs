use nalgebra::{DMatrix, DVector};

use super::chain::{iteration_plan, DrawChain, Method};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::objective::{evaluate, evaluate_full, Model, Want};
use crate::resampling::ResamplePlan;

/// Linear process `theta*_{b+1} = theta_hat + Psi (theta*_b - theta_hat)
/// - gamma P_bar G_plan(theta_hat)` driven by a chain's plans.
#[derive(Debug, Clone)]
pub struct CouplingOracle {
    pub psi: DMatrix<f64>,
    pub p_bar: DMatrix<f64>,
    pub theta_hat: DVector<f64>,
    pub gamma: f64,
}

impl CouplingOracle {
    /// Coefficients at a converged full-sample minimizer `theta_hat`.
    pub fn new(
        model: &dyn Model,
        data: &Dataset,
        theta_hat: &DVector<f64>,
        method: Method,
        gamma: f64,
    ) -> Result<Self> {
        let d = theta_hat.len();
        let h = evaluate_full(model, data, theta_hat, Want::ALL)?
            .hessian
            .unwrap();
        let id = DMatrix::identity(d, d);
        let (psi, p_bar) = match method {
            Method::Rgd => (&id - &h * gamma, id),
            Method::Rnr | Method::Rqn => {
                let inv = h
                    .clone()
                    .cholesky()
                    .ok_or(Error::Singular {
                        min_eigenvalue: h.symmetric_eigenvalues().min(),
                    })?
                    .inverse();
                (id * (1.0 - gamma), inv)
            }
        };
        Ok(Self {
            psi,
            p_bar,
            theta_hat: theta_hat.clone(),
            gamma,
        })
    }

    /// Iterates `theta*_1 ..` (one row per plan) started at `theta0`.
    pub fn simulate(
        &self,
        model: &dyn Model,
        data: &Dataset,
        plans: &[ResamplePlan],
        theta0: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        let d = theta0.len();
        let mut out = DMatrix::zeros(plans.len(), d);
        let mut t = theta0.clone();
        for (b, plan) in plans.iter().enumerate() {
            let g = evaluate(model, data, &self.theta_hat, plan, Want::GRADIENT)?
                .gradient
                .unwrap();
            t = &self.theta_hat + &self.psi * (&t - &self.theta_hat) - &self.p_bar * g * self.gamma;
            out.set_row(b, &t.transpose());
        }
        Ok(out)
    }

    /// Replay the plans of a recorded chain (or regenerate them from its
    /// seed when none were recorded). Rows cover burn-in and retained draws.
    pub fn replay(
        &self,
        model: &dyn Model,
        data: &Dataset,
        chain: &DrawChain,
    ) -> Result<DMatrix<f64>> {
        let cfg = &chain.config;
        let total = cfg.burn() + cfg.draws;
        let plans = if chain.plans.is_empty() {
            (0..total)
                .map(|b| iteration_plan(&cfg.scheme, data, cfg.seed, b))
                .collect::<Result<Vec<_>>>()?
        } else {
            chain.plans.clone()
        };
        if plans.len() != total {
            return Err(Error::PlanMismatch(format!(
                "{} plans for a chain of {total} iterations",
                plans.len()
            )));
        }
        self.simulate(model, data, &plans, &DVector::from_vec(cfg.theta0.clone()))
    }
}
