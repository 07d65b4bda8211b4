//! Side-by-side runs of the resampled chains and the reference methods on
//! one dataset.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::{
    dmk_kstep, heuristic_gamma, ks_score, mala_sample, standard_bootstrap, summarize_bootstrap,
    BootstrapDraws, InnerOptions, MalaConfig, Posterior, Prior,
};
use crate::conditioning::{nr_conditioner, NrOptions};
use crate::data::Dataset;
use crate::engine::{newton_solve, run_chain, run_sgd, Method, RunConfig, SgdConfig};
use crate::error::{Error, Result};
use crate::export::ErrorRecord;
use crate::inference::{summarize, summarize_draws, InferenceReport};
use crate::objective::Model;
use crate::resampling::{unit_plan, Scheme, SchemeConfig};

pub const METHODS: [&str; 8] = ["rnr", "rqn", "rgd", "boot", "dmk", "ks", "mala", "sgd"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    /// Shared settings: gamma, draws, burn, scheme, start and seed.
    pub run: RunConfig,
    pub alpha: f64,
    /// Resampling for `boot` and `dmk`; defaults to index resampling, m = n.
    pub boot_scheme: Option<SchemeConfig>,
    pub dmk_k: usize,
    pub inner: InnerOptions,
    pub mala_tune: bool,
    pub sgd_gamma0: f64,
    pub sgd_delta: f64,
    /// sGD batch size; defaults to `max(1, n / 10)`.
    pub sgd_batch: Option<usize>,
}

impl CompareConfig {
    pub fn new(run: RunConfig) -> Self {
        Self {
            run,
            alpha: 0.05,
            boot_scheme: None,
            dmk_k: 1,
            inner: InnerOptions::default(),
            mala_tune: true,
            sgd_gamma0: 0.5,
            sgd_delta: 0.75,
            sgd_batch: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: String,
    pub report: Option<InferenceReport>,
    pub draws: Option<DMatrix<f64>>,
    pub burned: Option<DMatrix<f64>>,
    pub acceptance_rate: Option<f64>,
    /// Failed bootstrap replications.
    pub failures: usize,
    pub warning: bool,
    pub error: Option<ErrorRecord>,
}

impl MethodRun {
    fn failed(method: &str, e: &Error) -> Self {
        Self {
            method: method.into(),
            report: None,
            draws: None,
            burned: None,
            acceptance_rate: None,
            failures: 0,
            warning: false,
            error: Some(e.into()),
        }
    }

    fn ok(method: &str, report: InferenceReport, draws: DMatrix<f64>) -> Self {
        Self {
            method: method.into(),
            report: Some(report),
            draws: Some(draws),
            burned: None,
            acceptance_rate: None,
            failures: 0,
            warning: false,
            error: None,
        }
    }
}

fn boot_run(method: &str, b: BootstrapDraws, alpha: f64) -> Result<MethodRun> {
    let report = summarize_bootstrap(&b, alpha)?;
    let mut run = MethodRun::ok(method, report, b.kept());
    run.failures = b.failures();
    run.warning = b.warning;
    Ok(run)
}

fn point_report(estimate: &DVector<f64>, alpha: f64) -> InferenceReport {
    let d = estimate.len();
    InferenceReport {
        estimate: estimate.iter().copied().collect(),
        se: vec![f64::NAN; d],
        ci: vec![(f64::NAN, f64::NAN); d],
        alpha,
        phi_gamma: f64::NAN,
        adjustment: f64::NAN,
        autocorr_lag1: vec![f64::NAN; d],
        draws: 0,
        gamma: f64::NAN,
        m_over_n: f64::NAN,
    }
}

fn run_one(
    method: &str,
    model: &dyn Model,
    data: &Dataset,
    config: &CompareConfig,
    theta_hat: &Result<DVector<f64>>,
) -> Result<MethodRun> {
    let run = &config.run;
    let hat = || {
        theta_hat
            .as_ref()
            .map_err(|e| Error::Config(format!("full-sample estimate unavailable: {e}")))
    };
    let boot_scheme = || {
        config.boot_scheme.clone().unwrap_or_else(|| SchemeConfig {
            cluster_aware: run.scheme.cluster_aware,
            ..SchemeConfig::new(Scheme::MOutOfN)
        })
    };
    match method {
        "rnr" | "rqn" | "rgd" => {
            let mut cfg = run.clone();
            cfg.method = Method::parse(method)?;
            let chain = run_chain(model, data, &cfg)?;
            let report = summarize(&chain, config.alpha)?;
            let mut out = MethodRun::ok(method, report, chain.draws);
            out.burned = Some(chain.burned);
            Ok(out)
        }
        "boot" => {
            let b = standard_bootstrap(
                model,
                data,
                &boot_scheme(),
                run.draws,
                run.seed,
                hat()?,
                &config.inner,
            )?;
            boot_run(method, b, config.alpha)
        }
        "dmk" => {
            let b = dmk_kstep(
                model,
                data,
                hat()?,
                config.dmk_k,
                &boot_scheme(),
                run.draws,
                run.seed,
            )?;
            boot_run(method, b, config.alpha)
        }
        "ks" => {
            let base = if run.scheme.scheme.is_weights() {
                run.scheme.scheme
            } else {
                Scheme::GaussianWeights
            };
            let scheme = SchemeConfig {
                scheme: base,
                m: None,
                cluster_aware: run.scheme.cluster_aware,
                demean: true,
            };
            let b = ks_score(model, data, hat()?, &scheme, run.draws, run.seed)?;
            boot_run(method, b, config.alpha)
        }
        "mala" => {
            let hat = hat()?;
            let post = Posterior::new(model, data, Prior::default_for(model))?;
            let p = nr_conditioner(
                &post.hessian(hat)?,
                NrOptions {
                    modify: true,
                    ..Default::default()
                },
            )?
            .matrix;
            let mut cfg = MalaConfig::new(
                heuristic_gamma(model.dim()),
                run.burn(),
                run.draws,
                run.seed,
            );
            cfg.preconditioner = Some(p);
            cfg.tune = config.mala_tune;
            let theta0 = DVector::from_vec(run.theta0.clone());
            let r = mala_sample(&post, &theta0, &cfg)?;
            let report = summarize_draws(&r.draws, 1.0, 1.0, config.alpha)?;
            let mut out = MethodRun::ok(method, report, r.draws);
            out.burned = Some(r.burned);
            out.acceptance_rate = Some(r.acceptance_rate);
            Ok(out)
        }
        "sgd" => {
            let cfg = SgdConfig {
                gamma0: config.sgd_gamma0,
                delta: config.sgd_delta,
                m: config.sgd_batch.unwrap_or((data.n() / 10).max(1)),
                iters: run.burn() + run.draws,
                seed: run.seed,
                theta0: run.theta0.clone(),
                keep_path: false,
            };
            let r = run_sgd(model, data, &cfg)?;
            let draws = DMatrix::from_row_slice(1, r.average.len(), r.average.as_slice());
            Ok(MethodRun::ok(
                method,
                point_report(&r.average, config.alpha),
                draws,
            ))
        }
        other => Err(Error::Config(format!(
            "unknown method '{other}' (expected one of {})",
            METHODS.join(", ")
        ))),
    }
}

/// Run each method in turn. A failing method yields a [`MethodRun`] with
/// `error` set; the rest still run. Bootstrap-type methods share plans with
/// each other through the run seed.
pub fn compare(
    model: &dyn Model,
    data: &Dataset,
    methods: &[String],
    config: &CompareConfig,
) -> Result<Vec<MethodRun>> {
    for m in methods {
        if !METHODS.contains(&m.as_str()) {
            return Err(Error::Config(format!(
                "unknown method '{m}' (expected one of {})",
                METHODS.join(", ")
            )));
        }
    }
    let needs_hat = methods
        .iter()
        .any(|m| matches!(m.as_str(), "boot" | "dmk" | "ks" | "mala"));
    let theta_hat = if needs_hat {
        let theta0 = DVector::from_vec(config.run.theta0.clone());
        unit_plan(data.n())
            .and_then(|plan| {
                newton_solve(
                    model,
                    data,
                    &plan,
                    &theta0,
                    config.inner.tol,
                    config.inner.max_iter,
                )
            })
            .and_then(|r| {
                if r.converged {
                    Ok(r.theta)
                } else {
                    Err(Error::Config(format!(
                        "full-sample optimizer stopped at |G| = {:e}",
                        r.gradient_norm
                    )))
                }
            })
    } else {
        Err(Error::Config("not computed".into()))
    };
    Ok(methods
        .iter()
        .map(|m| {
            run_one(m, model, data, config, &theta_hat).unwrap_or_else(|e| MethodRun::failed(m, &e))
        })
        .collect())
}
