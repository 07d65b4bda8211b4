use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use statrs::function::erf::erfc;

use super::{add_outer, dot};
use crate::objective::Model;

const TAIL: f64 = 8.0;
const CF_TERMS: usize = 60;

/// Probit negative log-likelihood on rows `(y, x)` with `y` in `{0, 1}`.
#[derive(Debug, Clone)]
pub struct Probit {
    dim: usize,
    fixed_effects: Vec<usize>,
}

pub fn make_probit(dim: usize) -> Probit {
    Probit {
        dim,
        fixed_effects: Vec::new(),
    }
}

impl Probit {
    /// Tag coordinates that carry fixed effects.
    pub fn with_fixed_effects(mut self, coords: Vec<usize>) -> Self {
        self.fixed_effects = coords;
        self
    }
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `Phi(-x) / phi(x)` for large positive `x` by continued fraction.
fn mills_ratio(x: f64) -> f64 {
    let mut t = x;
    for k in (1..=CF_TERMS).rev() {
        t = x + k as f64 / t;
    }
    1.0 / t
}

/// `log Phi(s)`, finite for all finite `s`.
pub fn log_norm_cdf(s: f64) -> f64 {
    if s < -TAIL {
        let x = -s;
        -0.5 * x * x - 0.5 * (2.0 * PI).ln() + mills_ratio(x).ln()
    } else if s > 0.0 {
        (-norm_cdf(-s)).ln_1p()
    } else {
        norm_cdf(s).ln()
    }
}

/// Inverse Mills ratio `phi(s) / Phi(s)`.
pub fn mills_lambda(s: f64) -> f64 {
    if s < -TAIL {
        1.0 / mills_ratio(-s)
    } else {
        norm_pdf(s) / norm_cdf(s)
    }
}

impl Probit {
    fn score(row: &[f64], theta: &[f64]) -> (f64, f64) {
        (row[0], dot(&row[1..], theta))
    }
}

impl Model for Probit {
    fn name(&self) -> &str {
        "probit"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, row: &[f64], theta: &[f64]) -> f64 {
        let (y, s) = Self::score(row, theta);
        let mut q = 0.0;
        if y != 0.0 {
            q -= y * log_norm_cdf(s);
        }
        if y != 1.0 {
            q -= (1.0 - y) * log_norm_cdf(-s);
        }
        q
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, row: &[f64], theta: &[f64], out: &mut [f64]) {
        let (y, s) = Self::score(row, theta);
        let mut dq = 0.0;
        if y != 0.0 {
            dq -= y * mills_lambda(s);
        }
        if y != 1.0 {
            dq += (1.0 - y) * mills_lambda(-s);
        }
        for (o, xj) in out.iter_mut().zip(&row[1..]) {
            *o = dq * xj;
        }
    }

    fn has_analytic_hessian(&self) -> bool {
        true
    }

    fn add_hessian(&self, row: &[f64], theta: &[f64], weight: f64, out: &mut DMatrix<f64>) -> bool {
        let (y, s) = Self::score(row, theta);
        let mut c = 0.0;
        if y != 0.0 {
            let l = mills_lambda(s);
            c += y * l * (s + l);
        }
        if y != 1.0 {
            let l = mills_lambda(-s);
            c += (1.0 - y) * l * (l - s);
        }
        if !c.is_finite() {
            return false;
        }
        add_outer(out, weight * c, &row[1..]);
        true
    }

    fn fixed_effect_coords(&self) -> Vec<usize> {
        self.fixed_effects.clone()
    }
}
