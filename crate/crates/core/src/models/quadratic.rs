use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use crate::conditioning::{nr_conditioner, NrOptions};
use crate::data::Dataset;
use crate::engine::{classical_optimize, ClassicalMethod, ClassicalOptions};
use crate::error::{Error, Result};
use crate::objective::Model;
use crate::rng::{replication_seed, substream, Purpose};

/// `0.5 (theta - c)' H (theta - c) - r'(theta - c)` where each row holds a
/// shift `r`. All-zero rows give the plain quadratic.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    h: DMatrix<f64>,
    center: DVector<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl QuadraticModel {
    pub fn new(h: DMatrix<f64>, center: DVector<f64>) -> Result<Self> {
        let d = center.len();
        if h.nrows() != d || h.ncols() != d {
            return Err(Error::Config(format!("H must be {d}x{d}")));
        }
        if (&h - h.transpose()).amax() > 0.0 {
            return Err(Error::Config("H must be symmetric".into()));
        }
        let e = SymmetricEigen::new(h.clone());
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]));
        let eigenvalues = DVector::from_iterator(d, order.iter().map(|&i| e.eigenvalues[i]));
        let mut eigenvectors = DMatrix::zeros(d, d);
        for (k, &i) in order.iter().enumerate() {
            eigenvectors.set_column(k, &e.eigenvectors.column(i));
        }
        Ok(Self {
            h,
            center,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Eigenvectors as columns, matching [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn n_positive(&self) -> usize {
        self.eigenvalues.iter().filter(|&&l| l > 0.0).count()
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        let z = theta - &self.center;
        0.5 * z.dot(&(&self.h * &z))
    }

    /// `n` all-zero rows.
    pub fn zero_data(&self, n: usize) -> Dataset {
        Dataset::from_flat(vec![0.0; n * self.center.len()], self.center.len())
            .expect("positive size")
    }

    /// `n` rows of iid `N(0, sd^2)` shifts.
    pub fn noise_data(&self, n: usize, sd: f64, seed: u64) -> Dataset {
        let d = self.center.len();
        let mut rng = substream(seed, 0, Purpose::Dgp);
        let dist = Normal::new(0.0, sd).expect("sd must be finite and nonnegative");
        let values = (0..n * d).map(|_| dist.sample(&mut rng)).collect();
        Dataset::from_flat(values, d).expect("positive size")
    }
}

pub fn make_saddle(h: DMatrix<f64>, center: DVector<f64>) -> Result<QuadraticModel> {
    QuadraticModel::new(h, center)
}

impl Model for QuadraticModel {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.center.len()
    }

    fn loss(&self, row: &[f64], theta: &[f64]) -> f64 {
        let d = self.center.len();
        let mut q = 0.0;
        for i in 0..d {
            let zi = theta[i] - self.center[i];
            let mut hz = 0.0;
            for j in 0..d {
                hz += self.h[(i, j)] * (theta[j] - self.center[j]);
            }
            q += 0.5 * zi * hz - row[i] * zi;
        }
        q
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, row: &[f64], theta: &[f64], out: &mut [f64]) {
        let d = self.center.len();
        for i in 0..d {
            let mut hz = 0.0;
            for j in 0..d {
                hz += self.h[(i, j)] * (theta[j] - self.center[j]);
            }
            out[i] = hz - row[i];
        }
    }

    fn has_analytic_hessian(&self) -> bool {
        true
    }

    fn add_hessian(
        &self,
        _row: &[f64],
        _theta: &[f64],
        weight: f64,
        out: &mut DMatrix<f64>,
    ) -> bool {
        *out += &self.h * weight;
        true
    }
}

#[derive(Debug, Clone)]
pub struct SaddleConfig {
    pub h: DMatrix<f64>,
    pub center: DVector<f64>,
    pub gamma: f64,
    pub iters: usize,
    pub c_grid: Vec<f64>,
    /// Number of noise realizations for the resampled runs.
    pub seeds: usize,
    /// Standard deviation of the stylized gradient noise.
    pub noise_sd: f64,
    pub seed: u64,
    /// Threshold on `|q_neg'(theta - center)|` counted as an escape.
    pub escape: f64,
}

impl SaddleConfig {
    pub fn standard() -> Self {
        Self {
            h: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])),
            center: DVector::zeros(2),
            gamma: 0.1,
            iters: 50,
            c_grid: vec![0.0, 0.1, 0.5, 1.0, 5.0],
            seeds: 100,
            noise_sd: 10.0,
            seed: 1,
            escape: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SaddleRow {
    pub c: f64,
    pub nr_theta: Vec<f64>,
    pub nr_q: f64,
    /// First noise realization.
    pub rnr_theta: Vec<f64>,
    pub rnr_q: f64,
    /// Share of realizations ending beyond `escape` along the last
    /// eigenvector.
    pub rnr_escape_rate: f64,
}

/// Classical modified NR and resampled NR with stylized Gaussian gradient
/// noise, started at `center + q_1 + c q_d` for each `c`.
pub fn saddle_demo(cfg: &SaddleConfig) -> Result<Vec<SaddleRow>> {
    let model = QuadraticModel::new(cfg.h.clone(), cfg.center.clone())?;
    let d = cfg.center.len();
    let q1 = model.eigenvectors().column(0).into_owned();
    let qd = model.eigenvectors().column(d - 1).into_owned();
    let data = model.zero_data(1);
    let modified = NrOptions {
        modify: true,
        ridge: 0.0,
    };
    let p = nr_conditioner(&cfg.h, modified)?.matrix;

    let mut rows = Vec::with_capacity(cfg.c_grid.len());
    for &c in &cfg.c_grid {
        let theta0 = &cfg.center + &q1 + &qd * c;
        let path = classical_optimize(
            &model,
            &data,
            &theta0,
            ClassicalMethod::Nr,
            cfg.gamma,
            cfg.iters,
            &ClassicalOptions {
                nr: modified,
                tol: None,
            },
        )?;
        let nr_theta = path.last().clone();

        let mut finals = Vec::with_capacity(cfg.seeds);
        for s in 0..cfg.seeds {
            let seed = replication_seed(cfg.seed, s as u64);
            let mut theta = theta0.clone();
            for b in 0..cfg.iters {
                let mut rng = substream(seed, b as u64, Purpose::Noise);
                let noise = DVector::from_iterator(
                    d,
                    (0..d).map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        cfg.noise_sd * z
                    }),
                );
                let g = &cfg.h * (&theta - &cfg.center) + noise;
                theta -= &p * g * cfg.gamma;
            }
            finals.push(theta);
        }
        let escaped = finals
            .iter()
            .filter(|t| qd.dot(&(*t - &cfg.center)).abs() > cfg.escape)
            .count();
        rows.push(SaddleRow {
            c,
            nr_q: model.value(&nr_theta),
            nr_theta: nr_theta.iter().copied().collect(),
            rnr_q: model.value(&finals[0]),
            rnr_theta: finals[0].iter().copied().collect(),
            rnr_escape_rate: escaped as f64 / cfg.seeds.max(1) as f64,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{evaluate_full, hessian_vector_product, Want};
    use crate::resampling::unit_plan;

    #[test]
    fn eigen_sorted_descending() {
        let m = make_saddle(
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 3.0, 0.5])),
            DVector::zeros(3),
        )
        .unwrap();
        assert_eq!(m.eigenvalues().as_slice(), &[3.0, 0.5, -1.0]);
        assert_eq!(m.n_positive(), 2);
    }

    #[test]
    fn hvp_is_exact() {
        let m = QuadraticModel::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])),
            DVector::zeros(2),
        )
        .unwrap();
        let d = m.zero_data(3);
        let v = hessian_vector_product(
            &m,
            &d,
            &DVector::from_vec(vec![0.3, 0.1]),
            &unit_plan(3).unwrap(),
            &DVector::from_vec(vec![1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(v.as_slice(), &[2.0, 0.0]);
    }

    #[test]
    fn symmetrized_hessian_equals_analytic() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.7, 0.7, -1.0]);
        let m = QuadraticModel::new(h.clone(), DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let d = m.noise_data(7, 1.0, 3);
        let e = evaluate_full(&m, &d, &DVector::from_vec(vec![0.0, 0.0]), Want::ALL).unwrap();
        assert!((e.hessian.unwrap() - h).amax() < 1e-15);
    }

    #[test]
    fn modified_update_explodes_along_negative_curvature() {
        let cfg = SaddleConfig::standard();
        let p = nr_conditioner(
            &cfg.h,
            NrOptions {
                modify: true,
                ridge: 0.0,
            },
        )
        .unwrap()
        .matrix;
        // linearized recursion theta' = (I - gamma P H) theta
        let a = DMatrix::identity(2, 2) - &p * &cfg.h * cfg.gamma;
        assert!((a[(1, 1)] - (1.0 + cfg.gamma)).abs() < 1e-15);
        assert!((a[(0, 0)] - (1.0 - cfg.gamma)).abs() < 1e-15);
    }

    #[test]
    fn positive_definite_demo_converges() {
        let mut cfg = SaddleConfig::standard();
        cfg.h = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        cfg.center = DVector::from_vec(vec![3.0, -1.0]);
        cfg.noise_sd = 0.0;
        cfg.seeds = 3;
        cfg.iters = 400;
        for row in saddle_demo(&cfg).unwrap() {
            assert!((DVector::from_vec(row.nr_theta) - &cfg.center).norm() < 1e-6);
            assert!((DVector::from_vec(row.rnr_theta) - &cfg.center).norm() < 1e-6);
            assert_eq!(row.rnr_escape_rate, 0.0);
        }
    }
}
