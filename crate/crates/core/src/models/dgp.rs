use nalgebra::DVector;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::PanelFeaturizer;
use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DgpKind {
    /// `y = x'theta + e`, `x = (1, z_2, ..)` with standard normal `z` and `e`.
    LinearGaussian { n: usize, theta: Vec<f64> },
    /// `y = 1{x'theta + e > 0}` with the same design.
    Probit { n: usize, theta: Vec<f64> },
    /// Probit with one intercept per unit. Rows are
    /// `(y, x_1..x_k, d_1..d_N)` with unit dummies `d`; the truth is
    /// `(beta, alpha_1..alpha_N)`.
    FixedEffectsProbit {
        n_units: usize,
        periods: usize,
        beta: Vec<f64>,
        fe_sd: f64,
    },
    /// Rows `(y, x)` with `x_it = mu_i + u_it` and
    /// `y_it = alpha + beta mu_i + e_it`. Regressing `y` on the within-sample
    /// unit mean of `x` has a slope bias of order `1/T`.
    NonlinearPanel {
        n_units: usize,
        periods: usize,
        alpha: f64,
        beta: f64,
        sigma_mu: f64,
        sigma_u: f64,
        sigma_e: f64,
    },
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub data: Dataset,
    pub truth: DVector<f64>,
}

fn normal(sd: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, sd).map_err(|e| Error::Config(format!("invalid standard deviation {sd}: {e}")))
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{name} must be positive")));
    }
    Ok(())
}

pub fn simulate_dgp(kind: &DgpKind, seed: u64) -> Result<SimulatedData> {
    let mut rng = substream(seed, 0, Purpose::Dgp);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    match kind {
        DgpKind::LinearGaussian { n, theta } | DgpKind::Probit { n, theta } => {
            positive("n", *n)?;
            positive("dimension", theta.len())?;
            let probit = matches!(kind, DgpKind::Probit { .. });
            let d = theta.len();
            let mut values = Vec::with_capacity(n * (d + 1));
            for _ in 0..*n {
                let mut x = vec![1.0; d];
                for xj in x.iter_mut().skip(1) {
                    *xj = z();
                }
                let index: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() + z();
                let y = if probit {
                    (index > 0.0) as u8 as f64
                } else {
                    index
                };
                values.push(y);
                values.extend_from_slice(&x);
            }
            let mut names = vec!["y".to_string(), "const".to_string()];
            names.extend((2..=d).map(|j| format!("x{j}")));
            Ok(SimulatedData {
                data: Dataset::from_flat(values, d + 1)?.with_column_names(names)?,
                truth: DVector::from_vec(theta.clone()),
            })
        }
        DgpKind::FixedEffectsProbit {
            n_units,
            periods,
            beta,
            fe_sd,
        } => {
            positive("n_units", *n_units)?;
            positive("periods", *periods)?;
            let k = beta.len();
            let width = 1 + k + n_units;
            let fe = normal(*fe_sd)?;
            let mut values = Vec::with_capacity(n_units * periods * width);
            let mut alphas = Vec::with_capacity(*n_units);
            for u in 0..*n_units {
                let a = fe.sample(&mut rng);
                alphas.push(a);
                for _ in 0..*periods {
                    let x: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let e: f64 = StandardNormal.sample(&mut rng);
                    let index = a + x.iter().zip(beta).map(|(p, q)| p * q).sum::<f64>() + e;
                    values.push((index > 0.0) as u8 as f64);
                    values.extend_from_slice(&x);
                    values.extend((0..*n_units).map(|v| (v == u) as u8 as f64));
                }
            }
            let mut names = vec!["y".to_string()];
            names.extend((1..=k).map(|j| format!("x{j}")));
            names.extend((1..=*n_units).map(|u| format!("fe{u}")));
            let truth = DVector::from_iterator(k + n_units, beta.iter().copied().chain(alphas));
            Ok(SimulatedData {
                data: Dataset::from_flat(values, width)?
                    .with_column_names(names)?
                    .with_panel(*n_units, *periods)?,
                truth,
            })
        }
        DgpKind::NonlinearPanel {
            n_units,
            periods,
            alpha,
            beta,
            sigma_mu,
            sigma_u,
            sigma_e,
        } => {
            positive("n_units", *n_units)?;
            positive("periods", *periods)?;
            let (mu_d, u_d, e_d) = (normal(*sigma_mu)?, normal(*sigma_u)?, normal(*sigma_e)?);
            let mut values = Vec::with_capacity(n_units * periods * 2);
            for _ in 0..*n_units {
                let mu = mu_d.sample(&mut rng);
                for _ in 0..*periods {
                    let x = mu + u_d.sample(&mut rng);
                    let y = alpha + beta * mu + e_d.sample(&mut rng);
                    values.push(y);
                    values.push(x);
                }
            }
            Ok(SimulatedData {
                data: Dataset::from_flat(values, 2)?
                    .with_column_names(vec!["y".into(), "x".into()])?
                    .with_panel(*n_units, *periods)?,
                truth: DVector::from_vec(vec![*alpha, *beta]),
            })
        }
    }
}

/// Maps panel rows `(y, x)` to `(y, 1, mean_t x_it)`, with the unit mean
/// taken over the periods present in the dataset.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnitMeanRegressor;

impl PanelFeaturizer for UnitMeanRegressor {
    fn features(&self, panel: &Dataset) -> Result<Dataset> {
        let (n_units, t) = panel
            .panel_shape()
            .ok_or_else(|| Error::Config("unit-mean features need a panel dataset".into()))?;
        let mut values = Vec::with_capacity(panel.n() * 3);
        for u in 0..n_units {
            let mean = (0..t).map(|p| panel.row(u * t + p)[1]).sum::<f64>() / t as f64;
            for p in 0..t {
                values.extend_from_slice(&[panel.row(u * t + p)[0], 1.0, mean]);
            }
        }
        Dataset::from_flat(values, 3)?
            .with_column_names(vec!["y".into(), "const".into(), "xbar".into()])?
            .with_panel(n_units, t)
    }
}
