use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::objective::{GlobalTerm, Model};

/// Adds `(lambda / 2n) |theta - anchor|^2` to an inner model.
#[derive(Clone)]
pub struct PenaltyWrapper {
    inner: Arc<dyn Model>,
    lambda: f64,
    anchor: DVector<f64>,
    name: String,
}

pub fn wrap_penalty(inner: Arc<dyn Model>, lambda: f64, anchor: DVector<f64>) -> PenaltyWrapper {
    assert!(lambda >= 0.0, "penalty weight must be nonnegative");
    assert_eq!(anchor.len(), inner.dim(), "anchor dimension");
    let name = format!("{}+penalty", inner.name());
    PenaltyWrapper {
        inner,
        lambda,
        anchor,
        name,
    }
}

impl PenaltyWrapper {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }
}

/// Penalty term for weight `lambda` at sample size `n`.
pub(crate) fn penalty_term(
    theta: &[f64],
    anchor: &DVector<f64>,
    lambda: f64,
    n: usize,
) -> GlobalTerm {
    let d = theta.len();
    let k = lambda / n as f64;
    let diff = DVector::from_fn(d, |i, _| theta[i] - anchor[i]);
    GlobalTerm {
        value: 0.5 * k * diff.norm_squared(),
        gradient: diff * k,
        hessian: DMatrix::identity(d, d) * k,
    }
}

impl Model for PenaltyWrapper {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn loss(&self, row: &[f64], theta: &[f64]) -> f64 {
        self.inner.loss(row, theta)
    }

    fn has_analytic_gradient(&self) -> bool {
        self.inner.has_analytic_gradient()
    }

    fn gradient(&self, row: &[f64], theta: &[f64], out: &mut [f64]) {
        self.inner.gradient(row, theta, out)
    }

    fn has_analytic_hessian(&self) -> bool {
        self.inner.has_analytic_hessian()
    }

    fn add_hessian(&self, row: &[f64], theta: &[f64], weight: f64, out: &mut DMatrix<f64>) -> bool {
        self.inner.add_hessian(row, theta, weight, out)
    }

    fn global_term(&self, theta: &[f64], n: usize) -> Option<GlobalTerm> {
        let inner = self.inner.global_term(theta, n);
        if self.lambda == 0.0 {
            return inner;
        }
        let mut term = penalty_term(theta, &self.anchor, self.lambda, n);
        if let Some(g) = inner {
            term.value += g.value;
            term.gradient += g.gradient;
            term.hessian += g.hessian;
        }
        Some(term)
    }

    fn fixed_effect_coords(&self) -> Vec<usize> {
        self.inner.fixed_effect_coords()
    }
}
