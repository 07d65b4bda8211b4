use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{add_outer, dot};
use crate::objective::Model;

pub type MeanFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type MeanGradFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlsHessian {
    /// `2 grad f grad f'`.
    GaussNewton,
    /// Central differences of the gradient.
    FiniteDifference,
}

/// Nonlinear least squares `(y - f(x; theta))^2` on rows `(y, x)`.
#[derive(Clone)]
pub struct Nls {
    name: String,
    dim: usize,
    f: MeanFn,
    grad_f: MeanGradFn,
    hessian: NlsHessian,
}

impl fmt::Debug for Nls {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nls")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("hessian", &self.hessian)
            .finish()
    }
}

/// NLS model from a mean function `f(x, theta)` and its parameter gradient.
pub fn make_nls(dim: usize, f: MeanFn, grad_f: MeanGradFn) -> Nls {
    Nls {
        name: "nls".into(),
        dim,
        f,
        grad_f,
        hessian: NlsHessian::FiniteDifference,
    }
}

impl Nls {
    /// `f(x; theta) = exp(x'theta)`.
    pub fn exponential(dim: usize) -> Self {
        let mut m = make_nls(
            dim,
            Arc::new(|x, t| dot(x, t).exp()),
            Arc::new(|x, t, out| {
                let f = dot(x, t).exp();
                for (o, xj) in out.iter_mut().zip(x) {
                    *o = f * xj;
                }
            }),
        );
        m.name = "nls-exp".into();
        m
    }

    pub fn with_hessian(mut self, hessian: NlsHessian) -> Self {
        self.hessian = hessian;
        self
    }
}

impl Model for Nls {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, row: &[f64], theta: &[f64]) -> f64 {
        let r = row[0] - (self.f)(&row[1..], theta);
        r * r
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, row: &[f64], theta: &[f64], out: &mut [f64]) {
        let x = &row[1..];
        let r = row[0] - (self.f)(x, theta);
        (self.grad_f)(x, theta, out);
        for o in out.iter_mut() {
            *o *= -2.0 * r;
        }
    }

    fn has_analytic_hessian(&self) -> bool {
        self.hessian == NlsHessian::GaussNewton
    }

    fn add_hessian(&self, row: &[f64], theta: &[f64], weight: f64, out: &mut DMatrix<f64>) -> bool {
        let mut g = vec![0.0; self.dim];
        (self.grad_f)(&row[1..], theta, &mut g);
        if g.iter().any(|v| !v.is_finite()) {
            return false;
        }
        add_outer(out, 2.0 * weight, &g);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::objective::{check_gradient, evaluate_full, Want};
    use nalgebra::DVector;

    fn data() -> Dataset {
        let rows = (0..50)
            .map(|i| {
                let x = (i as f64) / 25.0 - 1.0;
                vec![(0.3 + 0.8 * x).exp() + 0.1 * (i as f64).sin(), 1.0, x]
            })
            .collect();
        Dataset::from_rows(rows).unwrap()
    }

    #[test]
    fn gradient_check() {
        let c = check_gradient(
            &Nls::exponential(2),
            &data(),
            &DVector::from_vec(vec![0.1, 0.5]),
        )
        .unwrap();
        assert!(c.max_discrepancy < 1e-6);
    }

    #[test]
    fn gauss_newton_close_to_full_hessian_at_good_fit() {
        let d = data();
        let theta = DVector::from_vec(vec![0.3, 0.8]);
        let full = evaluate_full(&Nls::exponential(2), &d, &theta, Want::ALL)
            .unwrap()
            .hessian
            .unwrap();
        let gn = evaluate_full(
            &Nls::exponential(2).with_hessian(NlsHessian::GaussNewton),
            &d,
            &theta,
            Want::ALL,
        )
        .unwrap()
        .hessian
        .unwrap();
        assert!((&full - &gn).norm() / full.norm() < 0.1);
    }
}
