use nalgebra::{DMatrix, DVector};

use reinfer_core::baselines::{dmk_kstep, ks_score, mala_sample, standard_bootstrap, InnerOptions, MalaConfig, Posterior, Prior};
use reinfer_core::engine::{iteration_plan, newton_solve, run_chain, Method, RunConfig};
use reinfer_core::inference::{sandwich, summarize};
use reinfer_core::models::{make_ols, make_probit, simulate_dgp, DgpKind, QuadraticModel};
use reinfer_core::study::{run_study, Replication};
use reinfer_core::{unit_plan, Dataset, ResamplePlan, Scheme, SchemeConfig};

fn design(data: &Dataset) -> (DMatrix<f64>, DVector<f64>) {
    let d = data.width() - 1;
    let x = DMatrix::from_fn(data.n(), d, |i, j| data.row(i)[j + 1]);
    let y = DVector::from_fn(data.n(), |i, _| data.row(i)[0]);
    (x, y)
}

fn row_weights(plan: &ResamplePlan, n: usize) -> Vec<f64> {
    match (plan.indices(), plan.weights()) {
        (Some(idx), _) => {
            let mut w = vec![0.0; n];
            for &i in idx {
                w[i] += 1.0;
            }
            w
        }
        (None, Some(w)) => w.to_vec(),
        _ => unreachable!(),
    }
}

fn weighted_ls(x: &DMatrix<f64>, y: &DVector<f64>, w: &[f64]) -> DVector<f64> {
    let d = x.ncols();
    let mut xtx = DMatrix::zeros(d, d);
    let mut xty = DVector::zeros(d);
    for i in 0..x.nrows() {
        let xi = x.row(i).transpose();
        xtx += &xi * xi.transpose() * w[i];
        xty += xi * (w[i] * y[i]);
    }
    xtx.lu().solve(&xty).unwrap()
}

fn linear(n: usize, seed: u64) -> Dataset {
    simulate_dgp(&DgpKind::LinearGaussian { n, theta: vec![1.0, 0.5, -0.5] }, seed).unwrap().data
}

fn ols_hat(data: &Dataset) -> DVector<f64> {
    let (x, y) = design(data);
    weighted_ls(&x, &y, &vec![1.0; data.n()])
}

#[test]
fn bootstrap_draws_solve_normal_equations_per_plan() {
    let data = linear(120, 1);
    let (x, y) = design(&data);
    let hat = ols_hat(&data);
    for scheme in [SchemeConfig::m_out_of_n(120), SchemeConfig::m_out_of_n(60), SchemeConfig::new(Scheme::ExponentialWeights)] {
        let b = standard_bootstrap(&make_ols(3), &data, &scheme, 50, 8, &hat, &InnerOptions::default()).unwrap();
        assert!(b.converged.iter().all(|c| *c));
        for i in 0..50 {
            let plan = iteration_plan(&scheme, &data, 8, i).unwrap();
            let want = weighted_ls(&x, &y, &row_weights(&plan, 120));
            assert!((b.draws.row(i).transpose() - want).amax() < 1e-10);
        }
    }
}

#[test]
fn many_step_dmk_converges_to_bootstrap() {
    let data = simulate_dgp(&DgpKind::Probit { n: 400, theta: vec![0.3, 0.8, -0.6] }, 2).unwrap().data;
    let model = make_probit(3);
    let hat = newton_solve(&model, &data, &unit_plan(400).unwrap(), &DVector::zeros(3), 1e-12, 50).unwrap().theta;
    let scheme = SchemeConfig::m_out_of_n(400);
    let boot = standard_bootstrap(&model, &data, &scheme, 500, 4, &hat, &InnerOptions::default()).unwrap();
    let dist = |k: usize| {
        let d = dmk_kstep(&model, &data, &hat, k, &scheme, 500, 4).unwrap();
        (0..500).map(|i| (d.draws.row(i) - boot.draws.row(i)).norm()).collect::<Vec<_>>()
    };
    let (d1, d2, d25) = (dist(1), dist(2), dist(25));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&d2) < mean(&d1), "{} vs {}", mean(&d2), mean(&d1));
    assert!(d25.iter().cloned().fold(0.0, f64::max) <= 1e-6);
}

#[test]
fn score_bootstrap_dispersion_matches_sandwich() {
    let data = linear(400, 3);
    let (x, y) = design(&data);
    let hat = ols_hat(&data);
    let n = 400.0;
    let h = x.transpose() * &x / n;
    let e = &y - &x * &hat;
    let mut meat = DMatrix::zeros(3, 3);
    for i in 0..400 {
        let xi = x.row(i).transpose();
        meat += &xi * xi.transpose() * (e[i] * e[i]);
    }
    meat /= n;
    let hi = h.try_inverse().unwrap();
    let v = &hi * meat * &hi / n;

    let scheme = SchemeConfig::new(Scheme::GaussianWeights).demeaned();
    let b = ks_score(&make_ols(3), &data, &hat, &scheme, 5000, 12).unwrap();
    for j in 0..3 {
        let col = b.draws.column(j);
        let m = col.mean();
        let var = col.iter().map(|t| (t - m).powi(2)).sum::<f64>() / 4999.0;
        assert!((var / v[(j, j)] - 1.0).abs() < 0.15, "{j}: {var} vs {}", v[(j, j)]);
    }
    // and the library sandwich agrees with the one above
    let s = sandwich(&make_ols(3), &data, &hat, false).unwrap();
    assert!((&s.v / n - v).amax() < 1e-12);
}

#[test]
fn equal_weights_leave_score_draws_at_estimate() {
    let data = linear(50, 4);
    let hat = ols_hat(&data) + DVector::from_vec(vec![0.1, 0.0, 0.0]);
    let scheme = SchemeConfig::new(Scheme::GaussianWeights).demeaned();
    let b = ks_score(&make_ols(3), &data, &hat, &scheme, 3, 0).unwrap();
    // de-meaned constant weights vanish, so a unit weight shift is invisible
    let (x, y) = design(&data);
    let e = &y - &x * &hat;
    let scores: Vec<DVector<f64>> = (0..50).map(|i| -x.row(i).transpose() * e[i]).collect();
    let h = x.transpose() * &x / 50.0;
    let plan = iteration_plan(&scheme, &data, 0, 0).unwrap();
    let w = plan.weights().unwrap();
    let shifted: Vec<f64> = w.iter().map(|v| v + 5.0).collect();
    let wbar = shifted.iter().sum::<f64>() / 50.0;
    let g = scores.iter().zip(&shifted).fold(DVector::zeros(3), |acc, (s, wi)| acc + s * (wi - wbar)) / 50.0;
    let want = &hat - h.lu().solve(&g).unwrap();
    assert!((b.draws.row(0).transpose() - want).amax() < 1e-10);
}

#[test]
fn mala_recovers_gaussian_posterior() {
    let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let c = DVector::from_vec(vec![1.0, -2.0]);
    let model = QuadraticModel::new(h.clone(), c.clone()).unwrap();
    let data = model.zero_data(1);
    let post = Posterior::new(&model, &data, Prior::Flat).unwrap();
    let mut cfg = MalaConfig::new(0.8, 2000, 100_000, 21);
    cfg.tune = true;
    let r = mala_sample(&post, &c, &cfg).unwrap();
    let cov_true = h.try_inverse().unwrap();
    let batches = 100;
    let size = r.draws.nrows() / batches;
    for j in 0..2 {
        let col = r.draws.column(j);
        let means: Vec<f64> = (0..batches).map(|k| col.rows(k * size, size).mean()).collect();
        let grand = means.iter().sum::<f64>() / batches as f64;
        let se = (means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64 / batches as f64).sqrt();
        assert!((grand - c[j]).abs() < 3.0 * se, "{j}: {grand} vs {} (se {se})", c[j]);
    }
    let mean = r.draws.row_mean();
    let centred = DMatrix::from_fn(r.draws.nrows(), 2, |i, j| r.draws[(i, j)] - mean[j]);
    let cov = centred.transpose() * &centred / (r.draws.nrows() - 1) as f64;
    assert!((&cov - &cov_true).norm() / cov_true.norm() < 0.10);
}

#[test]
fn mala_transitions_balance() {
    let model = QuadraticModel::new(DMatrix::identity(1, 1), DVector::zeros(1)).unwrap();
    let data = model.zero_data(1);
    let post = Posterior::new(&model, &data, Prior::Flat).unwrap();
    let r = mala_sample(&post, &DVector::zeros(1), &MalaConfig::new(0.7, 100, 200_000, 5)).unwrap();
    let bin = |x: f64| ((x + 2.0) / 0.5).floor().clamp(0.0, 7.0) as usize;
    let mut flow = [[0f64; 8]; 8];
    let xs = r.draws.column(0);
    for k in 1..xs.len() {
        flow[bin(xs[k - 1])][bin(xs[k])] += 1.0;
    }
    let mut checked = 0;
    for i in 0..8 {
        for j in (i + 1)..8 {
            let (a, b) = (flow[i][j], flow[j][i]);
            if a + b > 500.0 {
                checked += 1;
                assert!((a - b).abs() <= 4.0 * (a + b).sqrt(), "{i}->{j}: {a} vs {b}");
            }
        }
    }
    assert!(checked >= 10);
}

#[test]
fn single_replication_study_equals_one_fit() {
    let kind = DgpKind::LinearGaussian { n: 150, theta: vec![1.0, 0.5, -0.5] };
    let fit = |seed: u64| {
        let data = simulate_dgp(&kind, seed).unwrap().data;
        let mut cfg = RunConfig::new(Method::Rnr, vec![0.0; 3], 0.2, 300);
        cfg.seed = seed;
        summarize(&run_chain(&make_ols(3), &data, &cfg).unwrap(), 0.05).unwrap()
    };
    let (summary, reps) =
        run_study(1, 77, &[1.0, 0.5, -0.5], 0.05, |_, seed| Ok(Replication::from(&fit(seed)))).unwrap();
    let single = fit(reinfer_core::rng::replication_seed(77, 0));
    assert_eq!(summary.mean, single.estimate);
    assert_eq!(reps[0].as_ref().unwrap().se, single.se);
}
