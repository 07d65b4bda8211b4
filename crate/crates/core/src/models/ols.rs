use nalgebra::DMatrix;

use super::{add_outer, dot};
use crate::objective::Model;

/// Least squares with loss `0.5 (y - x'theta)^2` on rows `(y, x)`.
#[derive(Debug, Clone)]
pub struct Ols {
    dim: usize,
}

pub fn make_ols(dim: usize) -> Ols {
    Ols { dim }
}

impl Model for Ols {
    fn name(&self) -> &str {
        "ols"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn loss(&self, row: &[f64], theta: &[f64]) -> f64 {
        let r = row[0] - dot(&row[1..], theta);
        0.5 * r * r
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, row: &[f64], theta: &[f64], out: &mut [f64]) {
        let x = &row[1..];
        let r = row[0] - dot(x, theta);
        for (o, xj) in out.iter_mut().zip(x) {
            *o = -xj * r;
        }
    }

    fn has_analytic_hessian(&self) -> bool {
        true
    }

    fn add_hessian(
        &self,
        row: &[f64],
        _theta: &[f64],
        weight: f64,
        out: &mut DMatrix<f64>,
    ) -> bool {
        let x = &row[1..];
        add_outer(out, weight, x);
        x.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::objective::{evaluate, evaluate_full, Want};
    use crate::resampling::ResamplePlan;
    use nalgebra::DVector;

    #[test]
    fn two_point_example() {
        let d = Dataset::from_rows(vec![vec![1.0, 1.0], vec![2.0, 1.0]]).unwrap();
        let e = evaluate_full(&make_ols(1), &d, &DVector::from_vec(vec![0.0]), Want::ALL).unwrap();
        // 0.5 * (1 + 4) / 2
        assert!((e.value - 1.25).abs() < 1e-15);
        assert_eq!(e.gradient.unwrap()[0], -1.5);
        assert_eq!(e.hessian.unwrap()[(0, 0)], 1.0);
        let at_hat = evaluate_full(
            &make_ols(1),
            &d,
            &DVector::from_vec(vec![1.5]),
            Want::GRADIENT,
        )
        .unwrap();
        assert_eq!(at_hat.gradient.unwrap()[0], 0.0);
    }

    #[test]
    fn matches_matrix_forms_on_index_plan() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64;
                vec![t.sin() * 3.0, 1.0, t.cos(), (0.3 * t).sin()]
            })
            .collect();
        let d = Dataset::from_rows(rows).unwrap();
        let idx = vec![0, 3, 3, 7, 19, 11, 11, 11, 2];
        let plan = ResamplePlan::from_indices(idx.clone()).unwrap();
        let theta = DVector::from_vec(vec![0.2, -0.4, 1.1]);
        let e = evaluate(&make_ols(3), &d, &theta, &plan, Want::ALL).unwrap();
        let m = idx.len();
        let x = DMatrix::from_fn(m, 3, |r, c| d.row(idx[r])[c + 1]);
        let y = DVector::from_fn(m, |r, _| d.row(idx[r])[0]);
        let g = -x.transpose() * (&y - &x * &theta) / m as f64;
        let h = x.transpose() * &x / m as f64;
        assert!((e.gradient.unwrap() - g).amax() < 1e-12);
        assert!((e.hessian.unwrap() - h).amax() < 1e-12);
    }
}
