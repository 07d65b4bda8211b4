use nalgebra::DMatrix;

use super::chain::{iteration_plan, variance_sizes, ChainState, DrawChain, Recorder, RunConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::objective::Model;
use crate::resampling::Scheme;

/// Turns raw panel rows into model rows. Applied separately to the full
/// panel and to each half, so unit-level statistics are computed within
/// the periods each chain sees.
pub trait PanelFeaturizer: Send + Sync {
    fn features(&self, panel: &Dataset) -> Result<Dataset>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityFeatures;

impl PanelFeaturizer for IdentityFeatures {
    fn features(&self, panel: &Dataset) -> Result<Dataset> {
        Ok(panel.clone())
    }
}

#[derive(Debug, Clone)]
pub struct SplitPanelResult {
    pub full: DrawChain,
    pub first_half: DrawChain,
    pub second_half: DrawChain,
    /// `2 theta_full - (theta_first + theta_second) / 2`, draw by draw.
    pub corrected: DMatrix<f64>,
}

/// Run the full-panel chain and both half-panel chains in lockstep. Every
/// iteration resamples units once and applies the same units to all three.
///
/// Resampling is always at the unit level; the scheme's `cluster_aware`
/// flag is forced on.
pub fn run_split_panel(
    model: &dyn Model,
    panel: &Dataset,
    features: &dyn PanelFeaturizer,
    config: &RunConfig,
) -> Result<SplitPanelResult> {
    let (_, t) = panel.panel_shape().ok_or_else(|| {
        Error::Config("split-panel chains need a dataset with panel_shape".into())
    })?;
    if t < 2 {
        return Err(Error::Config(
            "split-panel chains need at least two periods".into(),
        ));
    }
    let mut config = config.clone();
    config.scheme.cluster_aware = true;
    if config.scheme.demean {
        return Err(Error::Config(
            "split-panel chains cannot use demeaned weights".into(),
        ));
    }
    let half = t / 2;
    let datasets = [
        features.features(panel)?,
        features.features(&panel.panel_periods(0..half)?)?,
        features.features(&panel.panel_periods(half..t)?)?,
    ];
    for d in &datasets {
        config.validate(model, d)?;
    }
    let burn = config.burn();
    let total = burn + config.draws;
    let mut states = Vec::with_capacity(3);
    let mut recorders = Vec::with_capacity(3);
    for (id, d) in datasets.iter().enumerate() {
        states.push(ChainState::new(model, d, &config, id as u64)?);
        recorders.push(Recorder::new(model.dim(), total));
    }
    for b in 0..total {
        let full_plan = iteration_plan(&config.scheme, &datasets[0], config.seed, b)?;
        let lambda = config
            .penalty
            .as_ref()
            .map_or(0.0, |p| p.lambda_at(b, burn));
        for k in 0..3 {
            let plan = match k {
                0 => full_plan.clone(),
                _ if config.scheme.scheme == Scheme::Degenerate => {
                    iteration_plan(&config.scheme, &datasets[k], config.seed, b)?
                }
                _ => full_plan.project(&datasets[k])?,
            };
            states[k].step(
                model,
                &datasets[k],
                &plan,
                &config,
                lambda,
                recorders[k].log(),
            )?;
            recorders[k].push(states[k].theta(), config.record_plans.then_some(plan));
        }
    }
    let mut chains = recorders
        .into_iter()
        .zip(&datasets)
        .map(|(r, d)| r.finish(&config, variance_sizes(&config.scheme, d)));
    let full = chains.next().unwrap();
    let first_half = chains.next().unwrap();
    let second_half = chains.next().unwrap();
    let corrected = &full.draws * 2.0 - (&first_half.draws + &second_half.draws) * 0.5;
    Ok(SplitPanelResult {
        full,
        first_half,
        second_half,
        corrected,
    })
}
