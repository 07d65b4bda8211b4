use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::guard;
use crate::conditioning::{
    init_secant_buffer, nr_conditioner, rqn_conditioner, rqn_step, ConditioningMatrix, NrOptions,
    Provenance, QnParams, SecantBuffer,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::objective::{evaluate, evaluate_full, hessian_vector_product, Model, Want};
use crate::resampling::{draw_plan, unit_plan, ResamplePlan, Scheme, SchemeConfig};
use crate::rng::{substream, Purpose, Stream};

/// Iterates with `|theta|_inf` above this abort the chain.
pub const DIVERGENCE_BOUND: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rgd,
    Rnr,
    Rqn,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgd" => Ok(Method::Rgd),
            "rnr" => Ok(Method::Rnr),
            "rqn" => Ok(Method::Rqn),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected rgd, rnr or rqn)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rgd => "rgd",
            Method::Rnr => "rnr",
            Method::Rqn => "rqn",
        }
    }
}

/// Initial secant window for the quasi-Newton method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QnInit {
    /// `y = H_n(theta_0) s`.
    Hessian,
    /// `y = s`.
    Identity,
}

/// Quadratic penalty `(lambda_b / 2n) |theta - anchor|^2` during burn-in.
///
/// `lambda_b = lambda0` for the first `duration` iterations, then shrinks by
/// `decay` per iteration, and is zero once burn-in ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub lambda0: f64,
    pub decay: f64,
    /// Defaults to `theta0`.
    pub anchor: Option<Vec<f64>>,
    /// Defaults to `burn / 2`.
    pub duration: Option<usize>,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self {
            lambda0: 20.0,
            decay: 0.9,
            anchor: None,
            duration: None,
        }
    }
}

impl PenaltySchedule {
    pub fn lambda_at(&self, b: usize, burn: usize) -> f64 {
        if b >= burn {
            return 0.0;
        }
        let duration = self.duration.unwrap_or(burn / 2);
        if b < duration {
            self.lambda0
        } else {
            self.lambda0 * self.decay.powi((b - duration + 1) as i32)
        }
    }
}

/// `max(50, ceil(log(0.01) / log(1 - gamma)))`.
pub fn burn_in_rule(gamma: f64) -> usize {
    let k = (0.01f64.ln() / (1.0 - gamma).ln()).ceil();
    if k.is_finite() && k > 50.0 {
        k as usize
    } else {
        50
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub gamma: f64,
    /// Retained draws `B`.
    pub draws: usize,
    /// Burn-in length; `None` uses [`burn_in_rule`].
    pub burn: Option<usize>,
    pub scheme: SchemeConfig,
    pub method: Method,
    pub theta0: Vec<f64>,
    pub penalty: Option<PenaltySchedule>,
    pub seed: u64,
    /// `None` uses [`QnParams::for_dim`].
    pub qn: Option<QnParams>,
    pub qn_init: QnInit,
    /// Use absolute Hessian eigenvalues for rNR.
    pub modify_hessian: bool,
    /// Keep every iteration's plan in the chain.
    pub record_plans: bool,
}

impl RunConfig {
    pub fn new(method: Method, theta0: Vec<f64>, gamma: f64, draws: usize) -> Self {
        Self {
            gamma,
            draws,
            burn: None,
            scheme: SchemeConfig::new(Scheme::GaussianWeights),
            method,
            theta0,
            penalty: None,
            seed: 0,
            qn: None,
            qn_init: QnInit::Hessian,
            modify_hessian: false,
            record_plans: false,
        }
    }

    pub fn burn(&self) -> usize {
        self.burn.unwrap_or_else(|| burn_in_rule(self.gamma))
    }

    pub fn qn_params(&self) -> QnParams {
        self.qn
            .unwrap_or_else(|| QnParams::for_dim(self.theta0.len()))
    }

    /// Copy with every default made explicit.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.burn = Some(self.burn());
        if c.method == Method::Rqn {
            c.qn = Some(self.qn_params());
        }
        if let Some(p) = c.penalty.as_mut() {
            p.anchor.get_or_insert_with(|| self.theta0.clone());
            p.duration.get_or_insert(self.burn() / 2);
        }
        c
    }

    pub fn validate(&self, model: &dyn Model, data: &Dataset) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma = {} must lie in (0, 1]",
                self.gamma
            )));
        }
        if self.draws == 0 {
            return Err(Error::Config("B must be at least 1".into()));
        }
        if self.theta0.len() != model.dim() {
            return Err(Error::Config(format!(
                "theta0 has length {} but the model has dimension {}",
                self.theta0.len(),
                model.dim()
            )));
        }
        if self.theta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("theta0 must be finite".into()));
        }
        if let Some(p) = &self.penalty {
            if !(p.decay > 0.0 && p.decay <= 1.0) || !(p.lambda0 >= 0.0) {
                return Err(Error::Config(
                    "penalty needs lambda0 >= 0 and decay in (0, 1]".into(),
                ));
            }
            if p.anchor.as_ref().is_some_and(|a| a.len() != model.dim()) {
                return Err(Error::Config(
                    "penalty anchor has the wrong dimension".into(),
                ));
            }
        }
        if self.method == Method::Rqn {
            self.qn_params().validate(model.dim())?;
        }
        self.scheme.validate(data)
    }
}

/// Plan for iteration `b`, drawn from its own substream.
pub fn iteration_plan(
    scheme: &SchemeConfig,
    data: &Dataset,
    seed: u64,
    b: usize,
) -> Result<ResamplePlan> {
    if scheme.scheme == Scheme::Degenerate {
        return unit_plan(data.n());
    }
    draw_plan(scheme, data, &mut substream(seed, b as u64, Purpose::Plan))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub b: usize,
    pub event: String,
    pub detail: String,
}

/// Draws from one chain. Retained draw `k` (row `k - 1`) is iterate
/// `burn + k`.
#[derive(Debug, Clone)]
pub struct DrawChain {
    pub draws: DMatrix<f64>,
    pub burned: DMatrix<f64>,
    pub config: RunConfig,
    /// Resample size entering the variance adjustment (clusters for
    /// cluster-level index plans).
    pub effective_m: usize,
    /// Sample size in the same units as `effective_m`.
    pub sample_size: usize,
    pub failure_log: Vec<FailureEvent>,
    pub plans: Vec<ResamplePlan>,
}

impl DrawChain {
    pub fn m_over_n(&self) -> f64 {
        self.effective_m as f64 / self.sample_size as f64
    }

    pub fn draw(&self, k: usize) -> DVector<f64> {
        self.draws.row(k).transpose()
    }
}

pub(crate) fn variance_sizes(scheme: &SchemeConfig, data: &Dataset) -> (usize, usize) {
    let n = if scheme.cluster_aware {
        data.n_clusters()
    } else {
        data.n()
    };
    match scheme.scheme {
        Scheme::MOutOfN => (scheme.m.unwrap_or(n), n),
        _ => (n, n),
    }
}

/// Mutable state of one chain, advanced one plan at a time.
#[derive(Debug, Clone)]
pub struct ChainState {
    theta: DVector<f64>,
    prev: Option<DVector<f64>>,
    buffer: Option<SecantBuffer>,
    secant_rng: Stream,
    qn: QnParams,
    anchor: DVector<f64>,
    iteration: usize,
}

impl ChainState {
    /// `chain_id` selects the secant-direction stream.
    pub fn new(
        model: &dyn Model,
        data: &Dataset,
        config: &RunConfig,
        chain_id: u64,
    ) -> Result<Self> {
        let theta = DVector::from_vec(config.theta0.clone());
        let qn = config.qn_params();
        let mut secant_rng = substream(config.seed, chain_id, Purpose::Secant);
        let buffer = if config.method == Method::Rqn {
            let h0 = match config.qn_init {
                QnInit::Hessian => evaluate_full(model, data, &theta, Want::ALL)?.hessian,
                QnInit::Identity => None,
            };
            Some(init_secant_buffer(
                h0.as_ref(),
                theta.len(),
                &qn,
                &mut secant_rng,
            ))
        } else {
            None
        };
        let anchor = config
            .penalty
            .as_ref()
            .and_then(|p| p.anchor.clone())
            .map(DVector::from_vec)
            .unwrap_or_else(|| theta.clone());
        Ok(Self {
            theta,
            prev: None,
            buffer,
            secant_rng,
            qn,
            anchor,
            iteration: 0,
        })
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// `theta <- theta - gamma P G` on `plan`. `lambda` is the penalty weight
    /// for this iteration.
    pub fn step(
        &mut self,
        model: &dyn Model,
        data: &Dataset,
        plan: &ResamplePlan,
        config: &RunConfig,
        lambda: f64,
        log: &mut Vec<FailureEvent>,
    ) -> Result<()> {
        let b = self.iteration;
        let d = self.theta.len();
        let k = lambda / data.n() as f64;
        let want = if config.method == Method::Rnr {
            Want::ALL
        } else {
            Want::GRADIENT
        };
        let eval = evaluate(model, data, &self.theta, plan, want)?;
        let mut g = eval.gradient.unwrap();
        if k > 0.0 {
            g += (&self.theta - &self.anchor) * k;
        }

        let p: ConditioningMatrix = match config.method {
            Method::Rgd => ConditioningMatrix::identity(d),
            Method::Rnr => {
                let mut h = eval.hessian.unwrap();
                for i in 0..d {
                    h[(i, i)] += k;
                }
                let p = nr_conditioner(
                    &h,
                    NrOptions {
                        modify: config.modify_hessian,
                        ridge: 0.0,
                    },
                )?;
                if p.provenance == (Provenance::ModifiedHessianInverse { fallback: true }) {
                    log.push(FailureEvent {
                        b,
                        event: "hessian_fallback".into(),
                        detail:
                            "resampled Hessian not positive definite; used absolute eigenvalues"
                                .into(),
                    });
                }
                p
            }
            Method::Rqn => {
                let buffer = self.buffer.as_mut().expect("rqn chain has a secant buffer");
                match &self.prev {
                    None => rqn_conditioner(buffer, &self.qn)?.0,
                    Some(prev) => {
                        let theta = &self.theta;
                        let mut hvp = |s: &DVector<f64>| -> Result<DVector<f64>> {
                            let mut y = hessian_vector_product(model, data, theta, plan, s)?;
                            if k > 0.0 {
                                y += s * k;
                            }
                            Ok(y)
                        };
                        let step = rqn_step(
                            buffer,
                            theta,
                            prev,
                            &mut hvp,
                            &self.qn,
                            &mut self.secant_rng,
                        )?;
                        if step.refreshes > 0 {
                            log.push(FailureEvent {
                                b,
                                event: "secant_refresh".into(),
                                detail: format!("{} random directions added", step.refreshes),
                            });
                        }
                        if step.random_direction {
                            log.push(FailureEvent {
                                b,
                                event: "zero_step".into(),
                                detail: "iterates coincide; used a random secant direction".into(),
                            });
                        }
                        step.conditioner
                    }
                }
            }
        };

        let next = &self.theta - (&p.matrix * g) * config.gamma;
        guard(&next, b + 1, &self.theta)?;
        self.prev = Some(std::mem::replace(&mut self.theta, next));
        self.iteration += 1;
        Ok(())
    }
}

/// Collects iterates and splits them into burned and retained draws.
pub(crate) struct Recorder {
    rows: Vec<f64>,
    d: usize,
    plans: Vec<ResamplePlan>,
    log: Vec<FailureEvent>,
}

impl Recorder {
    pub(crate) fn new(d: usize, total: usize) -> Self {
        Self {
            rows: Vec::with_capacity(d * total),
            d,
            plans: Vec::new(),
            log: Vec::new(),
        }
    }

    pub(crate) fn log(&mut self) -> &mut Vec<FailureEvent> {
        &mut self.log
    }

    pub(crate) fn push(&mut self, theta: &DVector<f64>, plan: Option<ResamplePlan>) {
        self.rows.extend(theta.iter());
        if let Some(p) = plan {
            self.plans.push(p);
        }
    }

    pub(crate) fn finish(self, config: &RunConfig, sizes: (usize, usize)) -> DrawChain {
        let burn = config.burn();
        let total = self.rows.len() / self.d;
        let all = DMatrix::from_row_slice(total, self.d, &self.rows);
        DrawChain {
            burned: all.rows(0, burn).into_owned(),
            draws: all.rows(burn, total - burn).into_owned(),
            config: config.resolved(),
            effective_m: sizes.0,
            sample_size: sizes.1,
            failure_log: self.log,
            plans: self.plans,
        }
    }
}

/// Run `burn + B` resampled updates and return the chain.
pub fn run_chain(model: &dyn Model, data: &Dataset, config: &RunConfig) -> Result<DrawChain> {
    config.validate(model, data)?;
    let burn = config.burn();
    let total = burn + config.draws;
    let mut state = ChainState::new(model, data, config, 0)?;
    let mut rec = Recorder::new(model.dim(), total);
    for b in 0..total {
        let plan = iteration_plan(&config.scheme, data, config.seed, b)?;
        let lambda = config
            .penalty
            .as_ref()
            .map_or(0.0, |p| p.lambda_at(b, burn));
        state.step(model, data, &plan, config, lambda, rec.log())?;
        rec.push(state.theta(), config.record_plans.then_some(plan));
    }
    Ok(rec.finish(config, variance_sizes(&config.scheme, data)))
}
