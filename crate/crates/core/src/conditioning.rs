//! Conditioning matrices for the update step: identity, (modified) inverse
//! Hessians, and the least-squares secant quasi-Newton approximation.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::symmetrize;
use crate::rng::Stream;

const SINGULAR_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Identity,
    HessianInverse,
    /// Eigenvalues replaced by their absolute values. `fallback` is set when
    /// the plain inverse was requested but the matrix was not positive
    /// definite.
    ModifiedHessianInverse {
        fallback: bool,
    },
    QuasiNewton,
}

#[derive(Debug, Clone)]
pub struct ConditioningMatrix {
    pub matrix: DMatrix<f64>,
    pub provenance: Provenance,
    pub tau_applied: f64,
}

impl ConditioningMatrix {
    pub fn identity(d: usize) -> Self {
        Self {
            matrix: DMatrix::identity(d, d),
            provenance: Provenance::Identity,
            tau_applied: 0.0,
        }
    }
}

fn eigen(a: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let mut a = a.clone();
    symmetrize(&mut a);
    SymmetricEigen::new(a)
}

fn from_eigen(q: &DMatrix<f64>, values: impl Iterator<Item = f64>) -> DMatrix<f64> {
    let diag = DVector::from_iterator(q.ncols(), values);
    let mut m = q * DMatrix::from_diagonal(&diag) * q.transpose();
    symmetrize(&mut m);
    m
}

/// `(A + tau I)^(-1/2)` through the eigendecomposition of `A`.
pub fn sym_inv_sqrt(a: &DMatrix<f64>, tau: f64) -> Result<ConditioningMatrix> {
    let e = eigen(a);
    let min = e
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &l| m.min(l + tau));
    if !(min > SINGULAR_TOL) {
        return Err(Error::Singular {
            min_eigenvalue: min,
        });
    }
    Ok(ConditioningMatrix {
        matrix: from_eigen(
            &e.eigenvectors,
            e.eigenvalues.iter().map(|l| 1.0 / (l + tau).sqrt()),
        ),
        provenance: Provenance::QuasiNewton,
        tau_applied: tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NrOptions {
    /// Use `(H'H)^(1/2)` (absolute eigenvalues) in place of `H`.
    pub modify: bool,
    /// Ridge added to the diagonal, already divided by n.
    pub ridge: f64,
}

/// Inverse (optionally modified) Hessian with an optional ridge.
pub fn nr_conditioner(h: &DMatrix<f64>, options: NrOptions) -> Result<ConditioningMatrix> {
    let d = h.nrows();
    let mut a = h.clone();
    symmetrize(&mut a);
    if !options.modify {
        let ridged = &a + DMatrix::identity(d, d) * options.ridge;
        if let Some(chol) = Cholesky::new(ridged) {
            let mut inv = chol.inverse();
            symmetrize(&mut inv);
            if inv.iter().all(|v| v.is_finite()) {
                return Ok(ConditioningMatrix {
                    matrix: inv,
                    provenance: Provenance::HessianInverse,
                    tau_applied: options.ridge,
                });
            }
        }
    }
    let e = SymmetricEigen::new(a);
    let min = e
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |m, &l| m.min(l.abs() + options.ridge));
    if !(min > SINGULAR_TOL) {
        return Err(Error::Singular {
            min_eigenvalue: min,
        });
    }
    Ok(ConditioningMatrix {
        matrix: from_eigen(
            &e.eigenvectors,
            e.eigenvalues
                .iter()
                .map(|l| 1.0 / (l.abs() + options.ridge)),
        ),
        provenance: Provenance::ModifiedHessianInverse {
            fallback: !options.modify,
        },
        tau_applied: options.ridge,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QnParams {
    /// Number of secant pairs kept.
    pub l: usize,
    /// Cutoff on the smallest eigenvalue of `S'S / L`.
    pub lambda_s: f64,
    /// Curvature floor.
    pub lambda_min: f64,
    pub max_refresh: usize,
}

impl QnParams {
    pub fn for_dim(d: usize) -> Self {
        let l = 25usize.max((1.5 * d as f64).ceil() as usize);
        Self {
            l,
            lambda_s: 1e-6,
            lambda_min: 1e-4,
            max_refresh: l,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.l < d {
            return Err(Error::Config(format!(
                "qn.L = {} must be at least d = {d}",
                self.l
            )));
        }
        if !(self.lambda_s > 0.0) || !(self.lambda_min > 0.0) {
            return Err(Error::Config(
                "qn.lambda_S and qn.lambda_min must be positive".into(),
            ));
        }
        if self.max_refresh == 0 {
            return Err(Error::Config("qn.max_refresh must be at least 1".into()));
        }
        Ok(())
    }
}

/// Rolling window of unit directions and their Hessian-vector products,
/// oldest first.
#[derive(Debug, Clone)]
pub struct SecantBuffer {
    s: VecDeque<DVector<f64>>,
    y: VecDeque<DVector<f64>>,
    capacity: usize,
}

impl SecantBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            s: VecDeque::with_capacity(capacity),
            y: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.s.front().map_or(0, |s| s.len())
    }

    pub fn push(&mut self, s: DVector<f64>, y: DVector<f64>) {
        if self.s.len() == self.capacity {
            self.s.pop_front();
            self.y.pop_front();
        }
        self.s.push_back(s);
        self.y.push_back(y);
    }

    /// `L x d` matrix of directions, one per row.
    pub fn directions(&self) -> DMatrix<f64> {
        stack(&self.s)
    }

    pub fn products(&self) -> DMatrix<f64> {
        stack(&self.y)
    }

    /// Smallest eigenvalue of `S'S / L`.
    pub fn direction_spread(&self) -> f64 {
        let s = self.directions();
        let sts = s.transpose() * &s / self.s.len() as f64;
        eigen(&sts).eigenvalues.min()
    }

    /// Least-squares secant fit `Y'S (S'S)^(-1)`.
    pub fn secant_hessian(&self) -> Result<DMatrix<f64>> {
        let s = self.directions();
        let y = self.products();
        let mut sts = s.transpose() * &s;
        symmetrize(&mut sts);
        let chol = Cholesky::new(sts).ok_or(Error::ConditioningFailure {
            refreshes: 0,
            min_eigenvalue: self.direction_spread(),
        })?;
        // H' = (S'S)^(-1) S'Y
        let ht = chol.solve(&(s.transpose() * y));
        Ok(ht.transpose())
    }
}

fn stack(rows: &VecDeque<DVector<f64>>) -> DMatrix<f64> {
    let d = rows.front().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j])
}

pub fn random_unit(d: usize, rng: &mut Stream) -> DVector<f64> {
    loop {
        let v = DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        let norm: f64 = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

/// Fill a buffer with `L` random unit directions and `y = H0 s`
/// (`H0 = I` when `None`).
pub fn init_secant_buffer(
    h0: Option<&DMatrix<f64>>,
    d: usize,
    params: &QnParams,
    rng: &mut Stream,
) -> SecantBuffer {
    let mut buf = SecantBuffer::new(params.l);
    for _ in 0..params.l {
        let s = random_unit(d, rng);
        let y = match h0 {
            Some(h) => h * &s,
            None => s.clone(),
        };
        buf.push(s, y);
    }
    buf
}

#[derive(Debug, Clone)]
pub struct QnStep {
    pub conditioner: ConditioningMatrix,
    pub h_hat: DMatrix<f64>,
    pub refreshes: usize,
    /// Set when the step between iterates was numerically zero.
    pub random_direction: bool,
}

/// Conditioning matrix from the current buffer contents.
pub fn rqn_conditioner(
    buffer: &SecantBuffer,
    params: &QnParams,
) -> Result<(ConditioningMatrix, DMatrix<f64>)> {
    let h_hat = buffer.secant_hessian()?;
    let hth = h_hat.transpose() * &h_hat;
    let floor = params.lambda_min * params.lambda_min;
    let min = eigen(&hth).eigenvalues.min();
    let tau = if min <= floor { floor } else { 0.0 };
    let mut p = sym_inv_sqrt(&hth, tau)?;
    p.provenance = Provenance::QuasiNewton;
    Ok((p, h_hat))
}

/// One secant update: push the normalized step and its Hessian-vector
/// product, refresh degenerate windows with random directions, and return
/// the new conditioner.
pub fn rqn_step(
    buffer: &mut SecantBuffer,
    theta: &DVector<f64>,
    theta_prev: &DVector<f64>,
    hvp: &mut dyn FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    params: &QnParams,
    rng: &mut Stream,
) -> Result<QnStep> {
    let d = theta.len();
    let step = theta - theta_prev;
    let norm = step.norm();
    let scale = theta.amax().max(1.0);
    let random_direction = !(norm > f64::EPSILON * scale);
    let s = if random_direction {
        random_unit(d, rng)
    } else {
        step / norm
    };
    let y = hvp(&s)?;
    buffer.push(s, y);

    let mut refreshes = 0;
    let mut spread = buffer.direction_spread();
    while spread < params.lambda_s {
        if refreshes == params.max_refresh {
            return Err(Error::ConditioningFailure {
                refreshes,
                min_eigenvalue: spread,
            });
        }
        let s = random_unit(d, rng);
        let y = hvp(&s)?;
        // push evicts the oldest pair once the window is full
        buffer.push(s, y);
        refreshes += 1;
        spread = buffer.direction_spread();
    }
    let (conditioner, h_hat) = rqn_conditioner(buffer, params)?;
    Ok(QnStep {
        conditioner,
        h_hat,
        refreshes,
        random_direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn inv_sqrt_of_diagonal() {
        let p = sym_inv_sqrt(&diag(&[4.0, 9.0]), 0.0).unwrap();
        assert!((&p.matrix - diag(&[0.5, 1.0 / 3.0])).norm() < 1e-14);
        let i = sym_inv_sqrt(&DMatrix::identity(3, 3), 0.0).unwrap();
        assert!((i.matrix - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn inv_sqrt_singular() {
        assert!(matches!(
            sym_inv_sqrt(&diag(&[1.0, 0.0]), 0.0),
            Err(Error::Singular { .. })
        ));
        assert!(sym_inv_sqrt(&diag(&[1.0, 0.0]), 1e-4).is_ok());
    }

    #[test]
    fn nr_variants() {
        let p = nr_conditioner(
            &diag(&[2.0, -3.0]),
            NrOptions {
                modify: true,
                ridge: 0.0,
            },
        )
        .unwrap();
        assert!((&p.matrix - diag(&[0.5, 1.0 / 3.0])).norm() < 1e-14);
        let p = nr_conditioner(&diag(&[2.0, 3.0]), NrOptions::default()).unwrap();
        assert_eq!(p.provenance, Provenance::HessianInverse);
        assert!((&p.matrix - diag(&[0.5, 1.0 / 3.0])).norm() < 1e-14);
        let p = nr_conditioner(
            &DMatrix::zeros(2, 2),
            NrOptions {
                modify: false,
                ridge: 20.0 / 1000.0,
            },
        )
        .unwrap();
        assert!((&p.matrix - DMatrix::identity(2, 2) * 50.0).norm() < 1e-10);
    }

    #[test]
    fn indefinite_falls_back_to_modification() {
        let p = nr_conditioner(&diag(&[2.0, -3.0]), NrOptions::default()).unwrap();
        assert_eq!(
            p.provenance,
            Provenance::ModifiedHessianInverse { fallback: true }
        );
        assert!(matches!(
            nr_conditioner(&DMatrix::zeros(2, 2), NrOptions::default()),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn canonical_buffer_recovers_hessian() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]);
        let params = QnParams {
            l: 2,
            ..QnParams::for_dim(2)
        };
        let mut buf = init_secant_buffer(None, 2, &params, &mut substream(0, 0, Purpose::Secant));
        for j in 0..2 {
            let e = DVector::from_fn(2, |i, _| if i == j { 1.0 } else { 0.0 });
            buf.push(e.clone(), &h * e);
        }
        assert!((buf.secant_hessian().unwrap() - &h).norm() < 1e-14);
    }

    #[test]
    fn buffer_rows_are_unit() {
        let params = QnParams {
            l: 2,
            ..QnParams::for_dim(2)
        };
        let buf = init_secant_buffer(None, 2, &params, &mut substream(4, 0, Purpose::Secant));
        assert_eq!(buf.len(), 2);
        for i in 0..2 {
            assert!((buf.directions().row(i).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_start_gives_identity() {
        let params = QnParams::for_dim(3);
        let mut rng = substream(5, 0, Purpose::Secant);
        let mut buf = init_secant_buffer(None, 3, &params, &mut rng);
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let b = DVector::from_vec(vec![0.5, 1.0, 2.0]);
        let step = rqn_step(&mut buf, &a, &b, &mut |s| Ok(s.clone()), &params, &mut rng).unwrap();
        assert!((step.conditioner.matrix - DMatrix::<f64>::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn zero_step_uses_random_direction() {
        let params = QnParams::for_dim(2);
        let mut rng = substream(5, 0, Purpose::Secant);
        let mut buf = init_secant_buffer(None, 2, &params, &mut rng);
        let a = DVector::from_vec(vec![1.0, 2.0]);
        let step = rqn_step(&mut buf, &a, &a, &mut |s| Ok(s * 2.0), &params, &mut rng).unwrap();
        assert!(step.random_direction);
    }

    #[test]
    fn degenerate_window_is_refreshed() {
        let params = QnParams {
            l: 2,
            lambda_s: 1e-6,
            lambda_min: 1e-4,
            max_refresh: 1,
        };
        let mut rng = substream(8, 0, Purpose::Secant);
        let mut buf = init_secant_buffer(None, 2, &params, &mut rng);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        buf.push(e1.clone(), e1.clone());
        // a second identical direction collapses S'S; one refresh repairs it
        let step = rqn_step(
            &mut buf,
            &DVector::from_vec(vec![1.0, 0.0]),
            &DVector::zeros(2),
            &mut |s| Ok(s.clone()),
            &params,
            &mut rng,
        )
        .unwrap();
        assert_eq!(step.refreshes, 1);
    }

    #[test]
    fn refresh_cap_exhaustion() {
        let params = QnParams {
            l: 2,
            lambda_s: 10.0,
            lambda_min: 1e-4,
            max_refresh: 3,
        };
        let mut rng = substream(2, 0, Purpose::Secant);
        let mut buf = init_secant_buffer(None, 2, &params, &mut rng);
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let err = rqn_step(
            &mut buf,
            &a,
            &DVector::zeros(2),
            &mut |s| Ok(s.clone()),
            &params,
            &mut rng,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::ConditioningFailure { refreshes: 3, .. }
        ));
    }
}
