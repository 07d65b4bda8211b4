use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::{iteration_plan, newton_solve};
use crate::error::{Error, Result};
use crate::inference::{summarize_draws, symmetric_inverse, InferenceReport};
use crate::objective::{evaluate, evaluate_full, row_gradients, Model, Want};
use crate::resampling::{Scheme, SchemeConfig};

/// Share of failed replications above which a result carries a warning.
const WARN_SHARE: f64 = 0.10;

#[derive(Debug, Clone)]
pub struct BootstrapDraws {
    /// One row per replication, failed ones included.
    pub draws: DMatrix<f64>,
    pub method: String,
    pub converged: Vec<bool>,
    pub warning: bool,
    pub effective_m: usize,
    pub sample_size: usize,
}

impl BootstrapDraws {
    fn new(method: &str, rows: Vec<(DVector<f64>, bool)>, d: usize, sizes: (usize, usize)) -> Self {
        let b = rows.len();
        let mut draws = DMatrix::zeros(b, d);
        let mut converged = Vec::with_capacity(b);
        for (i, (t, ok)) in rows.into_iter().enumerate() {
            draws.set_row(i, &t.transpose());
            converged.push(ok);
        }
        let failed = converged.iter().filter(|c| !**c).count();
        Self {
            draws,
            method: method.into(),
            warning: failed as f64 > WARN_SHARE * b as f64,
            converged,
            effective_m: sizes.0,
            sample_size: sizes.1,
        }
    }

    pub fn failures(&self) -> usize {
        self.converged.iter().filter(|c| !**c).count()
    }

    /// Converged draws only.
    pub fn kept(&self) -> DMatrix<f64> {
        let rows: Vec<usize> = (0..self.draws.nrows())
            .filter(|&i| self.converged[i])
            .collect();
        self.draws.select_rows(&rows)
    }

    pub fn m_over_n(&self) -> f64 {
        self.effective_m as f64 / self.sample_size as f64
    }
}

/// Percentile summary of converged bootstrap draws, scaled by `sqrt(m/n)`.
pub fn summarize_bootstrap(draws: &BootstrapDraws, alpha: f64) -> Result<InferenceReport> {
    summarize_draws(&draws.kept(), 1.0, draws.m_over_n(), alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

fn sizes(scheme: &SchemeConfig, data: &Dataset) -> (usize, usize) {
    let n = if scheme.cluster_aware {
        data.n_clusters()
    } else {
        data.n()
    };
    match scheme.scheme {
        Scheme::MOutOfN => (scheme.m.unwrap_or(n), n),
        _ => (n, n),
    }
}

fn check_start(model: &dyn Model, theta_hat: &DVector<f64>, b: usize) -> Result<()> {
    if theta_hat.len() != model.dim() {
        return Err(Error::Config("theta_hat has the wrong dimension".into()));
    }
    if b == 0 {
        return Err(Error::Config("B must be at least 1".into()));
    }
    Ok(())
}

/// Re-optimize the resampled objective from `theta_hat` for each of `b`
/// plans. Plan `i` comes from the same substream as iteration `i` of a
/// chain with this seed.
pub fn standard_bootstrap(
    model: &dyn Model,
    data: &Dataset,
    scheme: &SchemeConfig,
    b: usize,
    seed: u64,
    theta_hat: &DVector<f64>,
    inner: &InnerOptions,
) -> Result<BootstrapDraws> {
    check_start(model, theta_hat, b)?;
    scheme.validate(data)?;
    let rows = (0..b)
        .into_par_iter()
        .map(|i| {
            let plan = iteration_plan(scheme, data, seed, i)?;
            Ok(
                match newton_solve(model, data, &plan, theta_hat, inner.tol, inner.max_iter) {
                    Ok(r) => (r.theta, r.converged),
                    Err(Error::Singular { .. } | Error::NumericalEvaluation { .. }) => {
                        (theta_hat.clone(), false)
                    }
                    Err(e) => return Err(e),
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BootstrapDraws::new(
        "boot",
        rows,
        model.dim(),
        sizes(scheme, data),
    ))
}

/// `k` undamped Newton steps on each resampled objective from `theta_hat`.
pub fn dmk_kstep(
    model: &dyn Model,
    data: &Dataset,
    theta_hat: &DVector<f64>,
    k: usize,
    scheme: &SchemeConfig,
    b: usize,
    seed: u64,
) -> Result<BootstrapDraws> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    check_start(model, theta_hat, b)?;
    scheme.validate(data)?;
    let rows = (0..b)
        .into_par_iter()
        .map(|i| {
            let plan = iteration_plan(scheme, data, seed, i)?;
            let mut theta = theta_hat.clone();
            for _ in 0..k {
                let step = evaluate(model, data, &theta, &plan, Want::ALL).and_then(|e| {
                    let inv = symmetric_inverse(e.hessian.as_ref().unwrap())?;
                    Ok(inv * e.gradient.unwrap())
                });
                match step {
                    Ok(s) if s.iter().all(|v| v.is_finite()) => theta -= s,
                    Ok(_) | Err(Error::Singular { .. } | Error::NumericalEvaluation { .. }) => {
                        return Ok((theta_hat.clone(), false));
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok((theta, true))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BootstrapDraws::new(
        &format!("dmk{k}"),
        rows,
        model.dim(),
        sizes(scheme, data),
    ))
}

/// One Newton step from `theta_hat` on the score reweighted by de-meaned
/// multipliers: `theta_hat - H_n^-1 (1/n) sum (w_i - w_bar) grad q_i`.
pub fn ks_score(
    model: &dyn Model,
    data: &Dataset,
    theta_hat: &DVector<f64>,
    scheme: &SchemeConfig,
    b: usize,
    seed: u64,
) -> Result<BootstrapDraws> {
    if !scheme.demean || !scheme.scheme.is_weights() {
        return Err(Error::Config(
            "the score bootstrap needs a de-meaned weight scheme".into(),
        ));
    }
    check_start(model, theta_hat, b)?;
    scheme.validate(data)?;
    let h = evaluate_full(model, data, theta_hat, Want::ALL)?
        .hessian
        .unwrap();
    let h_inv = symmetric_inverse(&h)?;
    let scores = row_gradients(model, data, theta_hat)?;
    let n = data.n() as f64;
    let rows = (0..b)
        .into_par_iter()
        .map(|i| {
            let plan = iteration_plan(scheme, data, seed, i)?;
            let w = DVector::from_column_slice(plan.weights().expect("weight scheme"));
            let g = scores.tr_mul(&w) / n;
            Ok((theta_hat - &h_inv * g, true))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BootstrapDraws::new(
        "ks",
        rows,
        model.dim(),
        sizes(scheme, data),
    ))
}
