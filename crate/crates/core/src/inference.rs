//! Estimates, standard errors and confidence intervals from a chain of
//! draws, plus sandwich and delta-method references.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::DrawChain;
use crate::error::{Error, Result};
use crate::objective::{evaluate_full, row_gradients, symmetrize, Model, Want};

pub const MIN_DRAWS: usize = 10;

/// `gamma^2 / (1 - (1 - gamma)^2)`, which simplifies to `gamma / (2 - gamma)`.
pub fn phi(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("gamma = {gamma} outside (0, 1]")));
    }
    Ok(gamma / (2.0 - gamma))
}

/// Quantile by linear interpolation between order statistics of `sorted`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Lag-`lag` sample autocorrelation of each column of `draws`. Constant
/// columns report zero.
pub fn autocorrelation(draws: &DMatrix<f64>, lag: usize) -> DVector<f64> {
    let b = draws.nrows();
    DVector::from_iterator(
        draws.ncols(),
        draws.column_iter().map(|c| {
            if lag >= b {
                return 0.0;
            }
            let mean = c.mean();
            let den: f64 = c.iter().map(|x| (x - mean).powi(2)).sum();
            if den == 0.0 {
                return 0.0;
            }
            let num: f64 = (0..b - lag)
                .map(|t| (c[t] - mean) * (c[t + lag] - mean))
                .sum();
            num / den
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub estimate: f64,
    pub se: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
    pub alpha: f64,
    pub phi_gamma: f64,
    /// `sqrt(m / (n phi(gamma)))`.
    pub adjustment: f64,
    pub autocorr_lag1: Vec<f64>,
    pub draws: usize,
    pub gamma: f64,
    pub m_over_n: f64,
}

fn check_inputs(draws: &DMatrix<f64>, gamma: f64, m_over_n: f64, alpha: f64) -> Result<f64> {
    if draws.nrows() < MIN_DRAWS {
        return Err(Error::InsufficientDraws {
            got: draws.nrows(),
            need: MIN_DRAWS,
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} outside (0, 1)")));
    }
    if !(m_over_n > 0.0) {
        return Err(Error::Domain("m / n must be positive".into()));
    }
    let p = phi(gamma)?;
    Ok((m_over_n / p).sqrt())
}

/// Draws pulled toward their mean by `sqrt(m / (n phi(gamma)))`. Returned
/// unchanged when the factor is one.
pub fn adjusted_draws(draws: &DMatrix<f64>, gamma: f64, m_over_n: f64) -> Result<DMatrix<f64>> {
    let adj = (m_over_n / phi(gamma)?).sqrt();
    if adj == 1.0 {
        return Ok(draws.clone());
    }
    let mean = draws.row_mean();
    let mut out = draws.clone();
    for mut row in out.row_iter_mut() {
        let r = &mean + (&row - &mean) * adj;
        row.copy_from(&r);
    }
    Ok(out)
}

/// Summary of a scalar function `h` of the parameters.
pub fn summarize_target(
    draws: &DMatrix<f64>,
    gamma: f64,
    m_over_n: f64,
    alpha: f64,
    h: &dyn Fn(&DVector<f64>) -> f64,
) -> Result<TargetSummary> {
    let adj = check_inputs(draws, gamma, m_over_n, alpha)?;
    let b = draws.nrows();
    let mean: DVector<f64> = draws.row_mean().transpose();
    let h_bar = h(&mean);
    let mut ss = 0.0;
    let mut adjusted = Vec::with_capacity(b);
    for row in draws.row_iter() {
        let theta = row.transpose();
        ss += (h(&theta) - h_bar).powi(2);
        adjusted.push(if adj == 1.0 {
            h(&theta)
        } else {
            h(&(&mean + (&theta - &mean) * adj))
        });
    }
    let se = adj * (ss / b as f64).sqrt();
    let centre = adjusted.iter().sum::<f64>() / b as f64;
    let mut centred: Vec<f64> = adjusted.iter().map(|v| v - centre).collect();
    centred.sort_by(f64::total_cmp);
    let ci = (
        h_bar + quantile(&centred, alpha / 2.0),
        h_bar + quantile(&centred, 1.0 - alpha / 2.0),
    );
    Ok(TargetSummary {
        estimate: h_bar,
        se,
        ci,
    })
}

/// Per-coordinate summary of raw draws.
pub fn summarize_draws(
    draws: &DMatrix<f64>,
    gamma: f64,
    m_over_n: f64,
    alpha: f64,
) -> Result<InferenceReport> {
    let adj = check_inputs(draws, gamma, m_over_n, alpha)?;
    let d = draws.ncols();
    let mut estimate = Vec::with_capacity(d);
    let mut se = Vec::with_capacity(d);
    let mut ci = Vec::with_capacity(d);
    for j in 0..d {
        let t = summarize_target(draws, gamma, m_over_n, alpha, &|th: &DVector<f64>| th[j])?;
        estimate.push(t.estimate);
        se.push(t.se);
        ci.push(t.ci);
    }
    Ok(InferenceReport {
        estimate,
        se,
        ci,
        alpha,
        phi_gamma: phi(gamma)?,
        adjustment: adj,
        autocorr_lag1: autocorrelation(draws, 1).iter().copied().collect(),
        draws: draws.nrows(),
        gamma,
        m_over_n,
    })
}

pub fn summarize(chain: &DrawChain, alpha: f64) -> Result<InferenceReport> {
    summarize_draws(&chain.draws, chain.config.gamma, chain.m_over_n(), alpha)
}

#[derive(Debug, Clone)]
pub struct SandwichEstimate {
    pub bread: DMatrix<f64>,
    pub meat: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub cluster_mode: bool,
}

impl SandwichEstimate {
    /// `sqrt(V_jj / n)` for each coordinate.
    pub fn standard_errors(&self, n: usize) -> DVector<f64> {
        self.v.diagonal().map(|v| (v.max(0.0) / n as f64).sqrt())
    }
}

/// Inverse of a symmetric matrix, failing when it is numerically singular.
pub fn symmetric_inverse(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut a = h.clone();
    symmetrize(&mut a);
    let e = SymmetricEigen::new(a);
    let scale = e.eigenvalues.amax().max(1.0);
    let min = e
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, l| m.min(l.abs()));
    if !(min > 1e-12 * scale) {
        return Err(Error::Singular {
            min_eigenvalue: min,
        });
    }
    let inv = DVector::from_iterator(e.eigenvalues.len(), e.eigenvalues.iter().map(|l| 1.0 / l));
    let mut out = &e.eigenvectors * DMatrix::from_diagonal(&inv) * e.eigenvectors.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// `H^-1 Sigma H^-1` at `theta_hat`, with a cluster-summed score meat when
/// `cluster` is set.
pub fn sandwich(
    model: &dyn Model,
    data: &Dataset,
    theta_hat: &DVector<f64>,
    cluster: bool,
) -> Result<SandwichEstimate> {
    let h = evaluate_full(model, data, theta_hat, Want::ALL)?
        .hessian
        .unwrap();
    let bread = symmetric_inverse(&h)?;
    let scores = row_gradients(model, data, theta_hat)?;
    let n = data.n() as f64;
    let meat = if cluster {
        if data.cluster_ids().is_none() {
            return Err(Error::Config(
                "clustered sandwich requires cluster_ids".into(),
            ));
        }
        let d = theta_hat.len();
        let mut m = DMatrix::zeros(d, d);
        for rows in data.clusters() {
            let mut s = DVector::zeros(d);
            for &i in rows {
                s += scores.row(i).transpose();
            }
            m += &s * s.transpose();
        }
        m / n
    } else {
        scores.transpose() * &scores / n
    };
    let mut v = &bread * &meat * &bread;
    symmetrize(&mut v);
    Ok(SandwichEstimate {
        bread,
        meat,
        v,
        cluster_mode: cluster,
    })
}

/// `sqrt(grad_h' V grad_h / n)`.
pub fn delta_method_se(v: &SandwichEstimate, grad_h: &DVector<f64>, n: usize) -> f64 {
    (grad_h.dot(&(&v.v * grad_h)).max(0.0) / n as f64).sqrt()
}
