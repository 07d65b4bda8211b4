//! Per-iteration randomness: m-out-of-n index plans and multiplier-weight
//! plans, with cluster-aware and de-meaned variants.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    MOutOfN,
    GaussianWeights,
    ExponentialWeights,
    PoissonWeights,
    /// Every weight equal to one: the full-sample objective.
    Degenerate,
}

impl Scheme {
    pub fn is_weights(self) -> bool {
        !matches!(self, Scheme::MOutOfN)
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "m-out-of-n" | "mn" | "resample" => Scheme::MOutOfN,
            "gaussian" | "gaussian-weights" => Scheme::GaussianWeights,
            "exponential" | "exponential-weights" => Scheme::ExponentialWeights,
            "poisson" | "poisson-weights" => Scheme::PoissonWeights,
            "degenerate" | "unit" => Scheme::Degenerate,
            other => return Err(Error::Config(format!("unknown scheme '{other}'"))),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::MOutOfN => "m-out-of-n",
            Scheme::GaussianWeights => "gaussian-weights",
            Scheme::ExponentialWeights => "exponential-weights",
            Scheme::PoissonWeights => "poisson-weights",
            Scheme::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Resample size for [`Scheme::MOutOfN`]; counts clusters when
    /// `cluster_aware`. Defaults to n (or the number of clusters).
    pub m: Option<usize>,
    pub cluster_aware: bool,
    pub demean: bool,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            m: None,
            cluster_aware: false,
            demean: false,
        }
    }

    pub fn m_out_of_n(m: usize) -> Self {
        Self {
            m: Some(m),
            ..Self::new(Scheme::MOutOfN)
        }
    }

    pub fn clustered(mut self) -> Self {
        self.cluster_aware = true;
        self
    }

    pub fn demeaned(mut self) -> Self {
        self.demean = true;
        self
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if self.demean && !self.scheme.is_weights() {
            return Err(Error::Config("demean requires a weight scheme".into()));
        }
        if self.cluster_aware && data.cluster_ids().is_none() {
            return Err(Error::Config(
                "cluster-aware resampling requires cluster_ids on the dataset".into(),
            ));
        }
        if let Some(m) = self.m {
            if m == 0 {
                return Err(Error::Config("m must be at least 1".into()));
            }
            if !self.cluster_aware && m > data.n() {
                return Err(Error::Config(format!("m = {m} exceeds n = {}", data.n())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlanDraw {
    Indices(Vec<usize>),
    Weights(Vec<f64>),
}

/// What was drawn at the cluster level, kept so the same draw can be
/// replayed on another dataset with the same cluster labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClusterDraw {
    Indices(Vec<usize>),
    Weights(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplePlan {
    draw: PlanDraw,
    effective_m: usize,
    cluster_draw: Option<ClusterDraw>,
}

impl ResamplePlan {
    pub fn from_indices(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::PlanMismatch("index plan is empty".into()));
        }
        Ok(Self {
            effective_m: indices.len(),
            draw: PlanDraw::Indices(indices),
            cluster_draw: None,
        })
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::PlanMismatch("weight plan is empty".into()));
        }
        Ok(Self {
            effective_m: weights.len(),
            draw: PlanDraw::Weights(weights),
            cluster_draw: None,
        })
    }

    pub fn draw(&self) -> &PlanDraw {
        &self.draw
    }

    pub fn indices(&self) -> Option<&[usize]> {
        match &self.draw {
            PlanDraw::Indices(i) => Some(i),
            PlanDraw::Weights(_) => None,
        }
    }

    pub fn weights(&self) -> Option<&[f64]> {
        match &self.draw {
            PlanDraw::Weights(w) => Some(w),
            PlanDraw::Indices(_) => None,
        }
    }

    pub fn effective_m(&self) -> usize {
        self.effective_m
    }

    pub fn cluster_draw(&self) -> Option<&ClusterDraw> {
        self.cluster_draw.as_ref()
    }

    /// Check that the plan can be evaluated against `data`.
    pub fn check(&self, data: &Dataset) -> Result<()> {
        match &self.draw {
            PlanDraw::Indices(idx) => {
                if let Some(&bad) = idx.iter().find(|&&i| i >= data.n()) {
                    return Err(Error::PlanMismatch(format!(
                        "index {bad} out of range for n = {}",
                        data.n()
                    )));
                }
            }
            PlanDraw::Weights(w) => {
                if w.len() != data.n() {
                    return Err(Error::PlanMismatch(format!(
                        "{} weights for n = {}",
                        w.len(),
                        data.n()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Sparse `(row, multiplier)` pairs in row order with the divisor that
    /// turns the weighted sum into the plan average.
    pub fn weighted_rows(&self, data: &Dataset) -> Result<WeightedRows> {
        self.check(data)?;
        match &self.draw {
            PlanDraw::Indices(idx) => {
                let mut counts = vec![0u32; data.n()];
                for &i in idx {
                    counts[i] += 1;
                }
                let entries = counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(i, &c)| (i, c as f64))
                    .collect();
                Ok(WeightedRows {
                    entries,
                    divisor: idx.len() as f64,
                })
            }
            PlanDraw::Weights(w) => Ok(WeightedRows {
                entries: w.iter().copied().enumerate().collect(),
                divisor: w.len() as f64,
            }),
        }
    }

    /// Replay this plan's cluster-level draw on another dataset whose
    /// cluster labels index the same clusters (e.g. a half panel).
    pub fn project(&self, data: &Dataset) -> Result<ResamplePlan> {
        let draw = self
            .cluster_draw
            .as_ref()
            .ok_or_else(|| Error::Config("plan has no cluster-level draw to project".into()))?;
        let ids = data
            .cluster_ids()
            .ok_or_else(|| Error::Config("target dataset has no cluster_ids".into()))?;
        match draw {
            ClusterDraw::Indices(cs) => {
                if let Some(&bad) = cs.iter().find(|&&c| c >= data.n_clusters()) {
                    return Err(Error::PlanMismatch(format!("cluster {bad} not present")));
                }
                let indices = cs
                    .iter()
                    .flat_map(|&c| data.clusters()[c].iter().copied())
                    .collect::<Vec<_>>();
                let mut plan = ResamplePlan::from_indices(indices)?;
                plan.cluster_draw = Some(draw.clone());
                Ok(plan)
            }
            ClusterDraw::Weights(cw) => {
                if cw.len() != data.n_clusters() {
                    return Err(Error::PlanMismatch(format!(
                        "{} cluster weights for {} clusters",
                        cw.len(),
                        data.n_clusters()
                    )));
                }
                let weights = ids.iter().map(|&c| cw[c]).collect();
                let mut plan = ResamplePlan::from_weights(weights)?;
                plan.cluster_draw = Some(draw.clone());
                Ok(plan)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeightedRows {
    pub entries: Vec<(usize, f64)>,
    pub divisor: f64,
}

/// Weight plan with all weights one (full-sample evaluation).
pub fn unit_plan(n: usize) -> Result<ResamplePlan> {
    if n == 0 {
        return Err(Error::Config("unit plan needs n >= 1".into()));
    }
    ResamplePlan::from_weights(vec![1.0; n])
}

fn draw_weight(scheme: Scheme, rng: &mut Stream) -> f64 {
    match scheme {
        Scheme::GaussianWeights => {
            let z: f64 = StandardNormal.sample(rng);
            1.0 + z
        }
        Scheme::ExponentialWeights => Exp1.sample(rng),
        Scheme::PoissonWeights => Poisson::new(1.0).expect("rate 1 is valid").sample(rng),
        Scheme::Degenerate => 1.0,
        Scheme::MOutOfN => unreachable!("index scheme has no weights"),
    }
}

/// Draw one iteration's plan from `rng`.
pub fn draw_plan(config: &SchemeConfig, data: &Dataset, rng: &mut Stream) -> Result<ResamplePlan> {
    config.validate(data)?;
    let n = data.n();
    if config.scheme == Scheme::MOutOfN {
        if config.cluster_aware {
            let k = data.n_clusters();
            let m = config.m.unwrap_or(k);
            let chosen: Vec<usize> = (0..m).map(|_| rng.random_range(0..k)).collect();
            let indices = chosen
                .iter()
                .flat_map(|&c| data.clusters()[c].iter().copied())
                .collect();
            let mut plan = ResamplePlan::from_indices(indices)?;
            plan.cluster_draw = Some(ClusterDraw::Indices(chosen));
            return Ok(plan);
        }
        let m = config.m.unwrap_or(n);
        let indices = (0..m).map(|_| rng.random_range(0..n)).collect();
        return ResamplePlan::from_indices(indices);
    }

    let (mut weights, cluster_weights) = if config.cluster_aware {
        let ids = data.cluster_ids().expect("validated");
        let cw: Vec<f64> = (0..data.n_clusters())
            .map(|_| draw_weight(config.scheme, rng))
            .collect();
        (ids.iter().map(|&c| cw[c]).collect::<Vec<_>>(), Some(cw))
    } else {
        (
            (0..n).map(|_| draw_weight(config.scheme, rng)).collect(),
            None,
        )
    };
    if config.demean {
        let mean = weights.iter().sum::<f64>() / n as f64;
        for w in &mut weights {
            *w -= mean;
        }
        // Kahan-free summation leaves ~1e-16 residue; remove it exactly
        // enough for downstream linearity checks.
        let resid = weights.iter().sum::<f64>() / n as f64;
        for w in &mut weights {
            *w -= resid;
        }
    }
    let mut plan = ResamplePlan::from_weights(weights)?;
    if !config.demean {
        plan.cluster_draw = cluster_weights.map(ClusterDraw::Weights);
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};

    fn toy(n: usize) -> Dataset {
        Dataset::from_rows((0..n).map(|i| vec![i as f64]).collect()).unwrap()
    }

    #[test]
    fn m_out_of_n_is_reproducible() {
        let d = toy(5);
        let cfg = SchemeConfig::m_out_of_n(5);
        let a = draw_plan(&cfg, &d, &mut substream(42, 0, Purpose::Plan)).unwrap();
        let b = draw_plan(&cfg, &d, &mut substream(42, 0, Purpose::Plan)).unwrap();
        assert_eq!(a, b);
        let idx = a.indices().unwrap();
        assert_eq!(idx.len(), 5);
        assert!(idx.iter().all(|&i| i < 5));
        assert_eq!(a.effective_m(), 5);
    }

    #[test]
    fn gaussian_weights_have_unit_mean_and_variance() {
        let d = toy(100_000);
        let cfg = SchemeConfig::new(Scheme::GaussianWeights);
        let p = draw_plan(&cfg, &d, &mut substream(7, 0, Purpose::Plan)).unwrap();
        let w = p.weights().unwrap();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn demeaned_weights_sum_to_zero() {
        let d = toy(1000);
        for scheme in [
            Scheme::GaussianWeights,
            Scheme::ExponentialWeights,
            Scheme::PoissonWeights,
        ] {
            let cfg = SchemeConfig::new(scheme).demeaned();
            let p = draw_plan(&cfg, &d, &mut substream(3, 1, Purpose::Plan)).unwrap();
            let s: f64 = p.weights().unwrap().iter().sum();
            assert!(s.abs() < 1e-12, "{scheme:?}: {s}");
        }
    }

    #[test]
    fn unit_plan_is_all_ones() {
        let p = unit_plan(3).unwrap();
        assert_eq!(p.weights().unwrap(), &[1.0, 1.0, 1.0]);
        assert_eq!(p.effective_m(), 3);
        assert!(unit_plan(0).is_err());
    }

    #[test]
    fn cluster_awareness_requires_ids() {
        let d = toy(4);
        let cfg = SchemeConfig::new(Scheme::GaussianWeights).clustered();
        let err = draw_plan(&cfg, &d, &mut substream(1, 0, Purpose::Plan)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn demean_requires_weights() {
        let d = toy(4);
        let cfg = SchemeConfig::m_out_of_n(2).demeaned();
        assert!(draw_plan(&cfg, &d, &mut substream(1, 0, Purpose::Plan)).is_err());
    }

    #[test]
    fn clustered_weights_constant_within_cluster() {
        let ids: Vec<usize> = (0..60).map(|i| (i * 7) % 9).collect();
        let d = toy(60).with_clusters(ids).unwrap();
        for scheme in [
            Scheme::GaussianWeights,
            Scheme::ExponentialWeights,
            Scheme::PoissonWeights,
        ] {
            for b in 0..20 {
                let cfg = SchemeConfig::new(scheme).clustered();
                let p = draw_plan(&cfg, &d, &mut substream(5, b, Purpose::Plan)).unwrap();
                let w = p.weights().unwrap();
                for rows in d.clusters() {
                    assert!(rows.iter().all(|&r| w[r] == w[rows[0]]));
                }
            }
        }
    }

    #[test]
    fn clustered_m_out_of_n_counts_clusters() {
        let d = toy(12).with_panel(4, 3).unwrap();
        let cfg = SchemeConfig::m_out_of_n(2).clustered();
        let p = draw_plan(&cfg, &d, &mut substream(11, 0, Purpose::Plan)).unwrap();
        assert_eq!(p.indices().unwrap().len(), 6);
        match p.cluster_draw() {
            Some(ClusterDraw::Indices(c)) => assert_eq!(c.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn projection_replays_cluster_draw() {
        let d = toy(12).with_panel(4, 3).unwrap();
        let half = d.panel_periods(0..1).unwrap();
        let cfg = SchemeConfig::m_out_of_n(3).clustered();
        let p = draw_plan(&cfg, &d, &mut substream(2, 9, Purpose::Plan)).unwrap();
        let q = p.project(&half).unwrap();
        assert_eq!(p.cluster_draw(), q.cluster_draw());
        assert_eq!(q.indices().unwrap().len(), 3);
    }

    #[test]
    fn out_of_range_indices_are_rejected() {
        let d = toy(3);
        let p = ResamplePlan::from_indices(vec![0, 3]).unwrap();
        assert!(matches!(p.check(&d), Err(Error::PlanMismatch(_))));
    }
}
