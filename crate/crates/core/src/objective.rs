//! Per-observation objective models and plan-weighted evaluation of the
//! sample objective, its gradient and Hessian.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::resampling::{unit_plan, ResamplePlan, WeightedRows};

/// Rows per partial sum. Partials are combined in order, so the result does
/// not depend on how many threads ran.
const CHUNK: usize = 1024;
const PARALLEL_MIN_ROWS: usize = 4 * CHUNK;

/// Relative finite-difference step.
pub const FD_STEP: f64 = 1e-6;
const NESTED_FD_STEP: f64 = 1e-4;

pub fn fd_step(x: f64) -> f64 {
    FD_STEP * x.abs().max(1.0)
}

/// Term added once to the averaged objective (penalties, priors).
#[derive(Debug, Clone)]
pub struct GlobalTerm {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// A smooth per-observation loss `q(z_i; theta)`.
///
/// Implementations must be pure: evaluation fans out over rows on worker
/// threads.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn loss(&self, row: &[f64], theta: &[f64]) -> f64;

    fn has_analytic_gradient(&self) -> bool {
        false
    }

    /// Writes the row gradient into `out`. The default is a central
    /// difference of [`Model::loss`].
    fn gradient(&self, row: &[f64], theta: &[f64], out: &mut [f64]) {
        let mut t = theta.to_vec();
        for j in 0..theta.len() {
            let h = fd_step(theta[j]);
            t[j] = theta[j] + h;
            let up = self.loss(row, &t);
            t[j] = theta[j] - h;
            let down = self.loss(row, &t);
            t[j] = theta[j];
            out[j] = (up - down) / (2.0 * h);
        }
    }

    fn has_analytic_hessian(&self) -> bool {
        false
    }

    /// Adds `weight * hess q(row; theta)` to `out`. Only called when
    /// [`Model::has_analytic_hessian`] is true. Returns false if the row
    /// Hessian is not finite.
    fn add_hessian(
        &self,
        _row: &[f64],
        _theta: &[f64],
        _weight: f64,
        _out: &mut DMatrix<f64>,
    ) -> bool {
        unreachable!("add_hessian called on a model without an analytic Hessian")
    }

    /// Data-free term added after averaging; receives the sample size.
    fn global_term(&self, _theta: &[f64], _n: usize) -> Option<GlobalTerm> {
        None
    }

    /// Coordinates holding fixed effects (used for default priors).
    fn fixed_effect_coords(&self) -> Vec<usize> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Want {
    pub gradient: bool,
    pub hessian: bool,
}

impl Want {
    pub const VALUE: Want = Want {
        gradient: false,
        hessian: false,
    };
    pub const GRADIENT: Want = Want {
        gradient: true,
        hessian: false,
    };
    pub const ALL: Want = Want {
        gradient: true,
        hessian: true,
    };
}

#[derive(Debug, Clone)]
pub struct ObjectiveEvaluation {
    pub value: f64,
    pub gradient: Option<DVector<f64>>,
    pub hessian: Option<DMatrix<f64>>,
}

struct Partial {
    value: f64,
    gradient: Option<DVector<f64>>,
    hessian: Option<DMatrix<f64>>,
}

fn check_dim(model: &dyn Model, theta: &DVector<f64>) -> Result<()> {
    if theta.len() != model.dim() {
        return Err(Error::Config(format!(
            "theta has length {} but model '{}' has dimension {}",
            theta.len(),
            model.name(),
            model.dim()
        )));
    }
    Ok(())
}

fn chunk_partial(
    model: &dyn Model,
    data: &Dataset,
    theta: &[f64],
    entries: &[(usize, f64)],
    grad: bool,
    hess: bool,
) -> Result<Partial> {
    let d = theta.len();
    let mut value = 0.0;
    let mut g = grad.then(|| DVector::zeros(d));
    let mut h = hess.then(|| DMatrix::zeros(d, d));
    let mut row_grad = vec![0.0; d];
    for &(i, w) in entries {
        let row = data.row(i);
        let q = model.loss(row, theta);
        if !q.is_finite() {
            return Err(Error::NumericalEvaluation {
                row: i,
                what: "loss",
            });
        }
        value += w * q;
        if let Some(g) = g.as_mut() {
            model.gradient(row, theta, &mut row_grad);
            if row_grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalEvaluation {
                    row: i,
                    what: "gradient",
                });
            }
            for (gj, rj) in g.iter_mut().zip(&row_grad) {
                *gj += w * rj;
            }
        }
        if let Some(h) = h.as_mut() {
            if !model.add_hessian(row, theta, w, h) {
                return Err(Error::NumericalEvaluation {
                    row: i,
                    what: "hessian",
                });
            }
        }
    }
    Ok(Partial {
        value,
        gradient: g,
        hessian: h,
    })
}

/// Sum over the plan rows without global terms, divided by the plan divisor.
fn accumulate(
    model: &dyn Model,
    data: &Dataset,
    theta: &DVector<f64>,
    rows: &WeightedRows,
    grad: bool,
    hess: bool,
) -> Result<Partial> {
    let t = theta.as_slice();
    let chunks: Vec<&[(usize, f64)]> = rows.entries.chunks(CHUNK).collect();
    let partials: Vec<Result<Partial>> = if rows.entries.len() >= PARALLEL_MIN_ROWS {
        chunks
            .par_iter()
            .map(|c| chunk_partial(model, data, t, c, grad, hess))
            .collect()
    } else {
        chunks
            .iter()
            .map(|c| chunk_partial(model, data, t, c, grad, hess))
            .collect()
    };
    let d = theta.len();
    let mut total = Partial {
        value: 0.0,
        gradient: grad.then(|| DVector::zeros(d)),
        hessian: hess.then(|| DMatrix::zeros(d, d)),
    };
    for p in partials {
        let p = p?;
        total.value += p.value;
        if let (Some(a), Some(b)) = (total.gradient.as_mut(), p.gradient) {
            *a += b;
        }
        if let (Some(a), Some(b)) = (total.hessian.as_mut(), p.hessian) {
            *a += b;
        }
    }
    let inv = 1.0 / rows.divisor;
    total.value *= inv;
    if let Some(g) = total.gradient.as_mut() {
        *g *= inv;
    }
    if let Some(h) = total.hessian.as_mut() {
        *h *= inv;
    }
    Ok(total)
}

pub fn symmetrize(h: &mut DMatrix<f64>) {
    let d = h.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let m = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = m;
            h[(j, i)] = m;
        }
    }
}

/// Plan-weighted objective at `theta`.
///
/// Index plans average over the drawn rows; weight plans return
/// `(1/n) sum w_i q_i`. Without an analytic Hessian the Hessian is a central
/// difference of the plan gradient. The returned Hessian is always exactly
/// symmetric.
pub fn evaluate(
    model: &dyn Model,
    data: &Dataset,
    theta: &DVector<f64>,
    plan: &ResamplePlan,
    want: Want,
) -> Result<ObjectiveEvaluation> {
    check_dim(model, theta)?;
    let rows = plan.weighted_rows(data)?;
    evaluate_rows(model, data, theta, &rows, want)
}

fn evaluate_rows(
    model: &dyn Model,
    data: &Dataset,
    theta: &DVector<f64>,
    rows: &WeightedRows,
    want: Want,
) -> Result<ObjectiveEvaluation> {
    let analytic_h = want.hessian && model.has_analytic_hessian();
    let base = accumulate(model, data, theta, rows, want.gradient, analytic_h)?;
    let mut value = base.value;
    let mut gradient = base.gradient;
    let mut hessian = base.hessian;

    if want.hessian && !analytic_h {
        hessian = Some(fd_hessian(model, data, theta, rows)?);
    }
    if let Some(global) = model.global_term(theta.as_slice(), data.n()) {
        value += global.value;
        if let Some(g) = gradient.as_mut() {
            *g += &global.gradient;
        }
        if let Some(h) = hessian.as_mut() {
            *h += &global.hessian;
        }
    }
    if !value.is_finite() {
        return Err(Error::NumericalEvaluation {
            row: 0,
            what: "objective",
        });
    }
    if let Some(h) = hessian.as_mut() {
        symmetrize(h);
    }
    Ok(ObjectiveEvaluation {
        value,
        gradient,
        hessian,
    })
}

fn fd_hessian(
    model: &dyn Model,
    data: &Dataset,
    theta: &DVector<f64>,
    rows: &WeightedRows,
) -> Result<DMatrix<f64>> {
    // A differenced numeric gradient needs a coarser outer step.
    let rel = if model.has_analytic_gradient() {
        FD_STEP
    } else {
        NESTED_FD_STEP
    };
    let d = theta.len();
    let mut h = DMatrix::zeros(d, d);
    let mut t = theta.clone();
    for j in 0..d {
        let step = rel * theta[j].abs().max(1.0);
        t[j] = theta[j] + step;
        let up = accumulate(model, data, &t, rows, true, false)?
            .gradient
            .unwrap();
        t[j] = theta[j] - step;
        let down = accumulate(model, data, &t, rows, true, false)?
            .gradient
            .unwrap();
        t[j] = theta[j];
        h.set_column(j, &((up - down) / (2.0 * step)));
    }
    Ok(h)
}

/// Full-sample objective (unit weights).
pub fn evaluate_full(
    model: &dyn Model,
    data: &Dataset,
    theta: &DVector<f64>,
    want: Want,
) -> Result<ObjectiveEvaluation> {
    evaluate(model, data, theta, &unit_plan(data.n())?, want)
}

/// Hessian-vector product of the plan objective along `s`.
///
/// Exact when the model has an analytic Hessian; otherwise a central
/// difference of the plan gradient along the unit direction, rescaled by
/// `|s|`.
pub fn hessian_vector_product(
    model: &dyn Model,
    data: &Dataset,
    theta: &DVector<f64>,
    plan: &ResamplePlan,
    s: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim(model, theta)?;
    let norm = s.norm();
    if s.len() != theta.len() {
        return Err(Error::InvalidDirection(format!(
            "direction has length {} but theta has {}",
            s.len(),
            theta.len()
        )));
    }
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidDirection(
            "direction must be finite and nonzero".into(),
        ));
    }
    let rows = plan.weighted_rows(data)?;
    if model.has_analytic_hessian() {
        let h = evaluate_rows(model, data, theta, &rows, Want::ALL)?
            .hessian
            .unwrap();
        return Ok(h * s);
    }
    let u = s / norm;
    let eps = FD_STEP * theta.amax().max(1.0);
    let up = evaluate_rows(model, data, &(theta + &u * eps), &rows, Want::GRADIENT)?;
    let down = evaluate_rows(model, data, &(theta - &u * eps), &rows, Want::GRADIENT)?;
    let diff = up.gradient.unwrap() - down.gradient.unwrap();
    Ok(diff * (norm / (2.0 * eps)))
}

#[derive(Debug, Clone)]
pub struct GradientCheck {
    pub analytic: DVector<f64>,
    pub numeric: DVector<f64>,
    /// Per coordinate `|analytic - numeric| / max(1, |numeric|)`.
    pub discrepancy: DVector<f64>,
    pub max_discrepancy: f64,
}

/// Compare the full-sample gradient against central differences of the
/// full-sample objective.
pub fn check_gradient(
    model: &dyn Model,
    data: &Dataset,
    theta: &DVector<f64>,
) -> Result<GradientCheck> {
    let plan = unit_plan(data.n())?;
    let analytic = evaluate(model, data, theta, &plan, Want::GRADIENT)?
        .gradient
        .unwrap();
    let d = theta.len();
    let mut numeric = DVector::zeros(d);
    let mut t = theta.clone();
    for j in 0..d {
        let h = fd_step(theta[j]);
        t[j] = theta[j] + h;
        let up = evaluate(model, data, &t, &plan, Want::VALUE)?.value;
        t[j] = theta[j] - h;
        let down = evaluate(model, data, &t, &plan, Want::VALUE)?.value;
        t[j] = theta[j];
        numeric[j] = (up - down) / (2.0 * h);
    }
    let discrepancy = DVector::from_iterator(
        d,
        analytic
            .iter()
            .zip(numeric.iter())
            .map(|(a, f)| (a - f).abs() / f.abs().max(1.0)),
    );
    let max_discrepancy = discrepancy.max();
    Ok(GradientCheck {
        analytic,
        numeric,
        discrepancy,
        max_discrepancy,
    })
}

/// Per-row gradients at `theta`, one row per observation.
pub fn row_gradients(
    model: &dyn Model,
    data: &Dataset,
    theta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_dim(model, theta)?;
    let d = theta.len();
    let mut out = DMatrix::zeros(data.n(), d);
    let mut g = vec![0.0; d];
    for i in 0..data.n() {
        model.gradient(data.row(i), theta.as_slice(), &mut g);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalEvaluation {
                row: i,
                what: "gradient",
            });
        }
        for j in 0..d {
            out[(i, j)] = g[j];
        }
    }
    Ok(out)
}
