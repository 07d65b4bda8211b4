//! Built-in models and synthetic data generators.

mod check;
mod dgp;
pub mod mroz;
mod nls;
mod ols;
mod penalty;
mod probit;
mod quadratic;

pub use check::{builtin_gradient_checks, builtin_models, ModelCheck};
pub use dgp::{simulate_dgp, DgpKind, SimulatedData, UnitMeanRegressor};
pub use nls::{make_nls, Nls, NlsHessian};
pub use ols::{make_ols, Ols};
pub use penalty::{wrap_penalty, PenaltyWrapper};
pub use probit::{log_norm_cdf, make_probit, mills_lambda, Probit};
pub use quadratic::{make_saddle, saddle_demo, QuadraticModel, SaddleConfig, SaddleRow};

use nalgebra::{DMatrix, DVectorView};

/// `out += alpha * x x'`.
pub(crate) fn add_outer(out: &mut DMatrix<f64>, alpha: f64, x: &[f64]) {
    let v = DVectorView::from_slice(x, x.len());
    out.ger(alpha, &v, &v, 1.0);
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
