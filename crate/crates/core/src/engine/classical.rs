use nalgebra::DVector;

use super::guard;
use crate::conditioning::{nr_conditioner, NrOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::objective::{evaluate, Model, Want};
use crate::resampling::{unit_plan, ResamplePlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicalMethod {
    Gd,
    Nr,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClassicalOptions {
    pub nr: NrOptions,
    /// Stop once `|G|_2` falls to this level.
    pub tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct OptimizePath {
    /// `theta_0, theta_1, ...`
    pub iterates: Vec<DVector<f64>>,
    pub gradient_norm: f64,
    pub converged: bool,
}

impl OptimizePath {
    pub fn last(&self) -> &DVector<f64> {
        self.iterates.last().expect("path holds the start")
    }
}

/// Deterministic full-sample iterations `theta - gamma P G_n(theta)`.
pub fn classical_optimize(
    model: &dyn Model,
    data: &Dataset,
    theta0: &DVector<f64>,
    method: ClassicalMethod,
    gamma: f64,
    iters: usize,
    options: &ClassicalOptions,
) -> Result<OptimizePath> {
    if iters == 0 {
        return Err(Error::Config("iters must be at least 1".into()));
    }
    let plan = unit_plan(data.n())?;
    let want = if method == ClassicalMethod::Nr {
        Want::ALL
    } else {
        Want::GRADIENT
    };
    let mut theta = theta0.clone();
    let mut iterates = vec![theta.clone()];
    let mut gradient_norm = f64::INFINITY;
    for k in 0..iters {
        let e = evaluate(model, data, &theta, &plan, want)?;
        let g = e.gradient.unwrap();
        gradient_norm = g.norm();
        if options.tol.is_some_and(|t| gradient_norm <= t) {
            return Ok(OptimizePath {
                iterates,
                gradient_norm,
                converged: true,
            });
        }
        let step = match method {
            ClassicalMethod::Gd => g,
            ClassicalMethod::Nr => nr_conditioner(&e.hessian.unwrap(), options.nr)?.matrix * g,
        };
        let next = &theta - step * gamma;
        guard(&next, k + 1, &theta)?;
        theta = next;
        iterates.push(theta.clone());
    }
    let converged = match options.tol {
        Some(t) => {
            gradient_norm = evaluate(model, data, &theta, &plan, Want::GRADIENT)?
                .gradient
                .unwrap()
                .norm();
            gradient_norm <= t
        }
        None => false,
    };
    Ok(OptimizePath {
        iterates,
        gradient_norm,
        converged,
    })
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub theta: DVector<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Newton-Raphson with step halving on the plan objective, stopping at
/// `|G|_2 <= tol`. Indefinite Hessians fall back to absolute eigenvalues.
pub fn newton_solve(
    model: &dyn Model,
    data: &Dataset,
    plan: &ResamplePlan,
    theta0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonResult> {
    let mut theta = theta0.clone();
    let mut e = evaluate(model, data, &theta, plan, Want::ALL)?;
    for it in 0..max_iter {
        let g = e.gradient.as_ref().unwrap();
        let gradient_norm = g.norm();
        if gradient_norm <= tol {
            return Ok(NewtonResult {
                theta,
                gradient_norm,
                iterations: it,
                converged: true,
            });
        }
        let p = nr_conditioner(e.hessian.as_ref().unwrap(), NrOptions::default())?;
        let dir = p.matrix * g;
        let slack = 1e-14 * e.value.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-10 {
            let cand = &theta - &dir * t;
            if cand.iter().all(|v| v.is_finite()) {
                if let Ok(c) = evaluate(model, data, &cand, plan, Want::ALL) {
                    if c.value <= e.value + slack {
                        accepted = Some((cand, c));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((cand, c)) => {
                theta = cand;
                e = c;
            }
            None => {
                return Ok(NewtonResult {
                    theta,
                    gradient_norm,
                    iterations: it,
                    converged: false,
                });
            }
        }
    }
    let gradient_norm = e.gradient.unwrap().norm();
    Ok(NewtonResult {
        converged: gradient_norm <= tol,
        theta,
        gradient_norm,
        iterations: max_iter,
    })
}
