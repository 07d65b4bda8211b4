//! Monte Carlo studies: repeated simulate-estimate-summarize runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::inference::InferenceReport;
use crate::rng::replication_seed;

/// Share of failed replications above which a summary is flagged.
pub const FAILURE_FLAG_SHARE: f64 = 0.05;

/// Point estimates and intervals from one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
}

impl From<&InferenceReport> for Replication {
    fn from(r: &InferenceReport) -> Self {
        Self {
            estimate: r.estimate.clone(),
            se: r.se.clone(),
            ci: r.ci.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub category: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub bias: Vec<f64>,
    /// Share of replications whose quantile interval excludes the truth.
    pub reject_quantile: Vec<f64>,
    /// Share with `|estimate - truth| / se` above the normal critical value.
    pub reject_se: Vec<f64>,
    pub alpha: f64,
    pub requested: usize,
    pub completed: usize,
    pub failures: Vec<ReplicationFailure>,
    pub flagged: bool,
}

/// Run `replications` independent replications in parallel. Replication
/// `r` receives `replication_seed(seed, r)`; results are aggregated in
/// replication order.
pub fn run_study<F>(
    replications: usize,
    seed: u64,
    truth: &[f64],
    alpha: f64,
    run: F,
) -> Result<(StudySummary, Vec<Option<Replication>>)>
where
    F: Fn(usize, u64) -> Result<Replication> + Sync,
{
    if replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha = {alpha} outside (0, 1)")));
    }
    let outcomes: Vec<Result<Replication>> = (0..replications)
        .into_par_iter()
        .map(|r| run(r, replication_seed(seed, r as u64)))
        .collect();
    let mut failures = Vec::new();
    let mut kept = Vec::with_capacity(replications);
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(rep) if rep.estimate.len() == truth.len() => kept.push(Some(rep)),
            Ok(_) => {
                return Err(Error::Config(
                    "replication dimension differs from the truth".into(),
                ))
            }
            Err(e) => {
                failures.push(ReplicationFailure {
                    replication: r,
                    category: e.category().into(),
                    message: e.to_string(),
                });
                kept.push(None);
            }
        }
    }
    let summary =
        summarize_replications(truth, alpha, kept.iter().flatten(), replications, failures)?;
    Ok((summary, kept))
}

fn summarize_replications<'a>(
    truth: &[f64],
    alpha: f64,
    reps: impl Iterator<Item = &'a Replication>,
    requested: usize,
    failures: Vec<ReplicationFailure>,
) -> Result<StudySummary> {
    let reps: Vec<&Replication> = reps.collect();
    if reps.is_empty() {
        return Err(Error::Config(format!(
            "all {requested} replications failed"
        )));
    }
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let d = truth.len();
    let k = reps.len() as f64;
    let (mut mean, mut sd, mut bias, mut rq, mut rs) = (
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
    );
    for j in 0..d {
        mean[j] = reps.iter().map(|r| r.estimate[j]).sum::<f64>() / k;
        let ss: f64 = reps.iter().map(|r| (r.estimate[j] - mean[j]).powi(2)).sum();
        sd[j] = (ss / (k - 1.0).max(1.0)).sqrt();
        bias[j] = mean[j] - truth[j];
        rq[j] = reps
            .iter()
            .filter(|r| truth[j] < r.ci[j].0 || truth[j] > r.ci[j].1)
            .count() as f64
            / k;
        rs[j] = reps
            .iter()
            .filter(|r| (r.estimate[j] - truth[j]).abs() > z * r.se[j])
            .count() as f64
            / k;
    }
    Ok(StudySummary {
        truth: truth.to_vec(),
        mean,
        sd,
        bias,
        reject_quantile: rq,
        reject_se: rs,
        alpha,
        requested,
        completed: reps.len(),
        flagged: failures.len() as f64 > FAILURE_FLAG_SHARE * requested as f64,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(e: f64) -> Replication {
        Replication {
            estimate: vec![e],
            se: vec![0.1],
            ci: vec![(e - 0.2, e + 0.2)],
        }
    }

    #[test]
    fn single_replication_is_passed_through() {
        let (s, reps) = run_study(1, 4, &[1.0], 0.05, |_, _| Ok(rep(1.05))).unwrap();
        assert_eq!(s.mean, vec![1.05]);
        assert!((s.bias[0] - 0.05).abs() < 1e-15);
        assert_eq!(s.sd, vec![0.0]);
        assert_eq!(s.reject_quantile, vec![0.0]);
        assert_eq!(reps[0], Some(rep(1.05)));
    }

    #[test]
    fn rejection_rates_count_both_tests() {
        let (s, _) =
            run_study(4, 0, &[0.0], 0.05, |r, _| Ok(rep([0.0, 0.1, 0.25, 0.3][r]))).unwrap();
        // se test rejects beyond 0.196, quantile interval beyond 0.2
        assert_eq!(s.reject_se, vec![0.5]);
        assert_eq!(s.reject_quantile, vec![0.5]);
    }

    #[test]
    fn failures_are_logged_and_flagged() {
        let (s, reps) = run_study(10, 0, &[0.0], 0.05, |r, _| {
            if r == 3 {
                Err(Error::Singular {
                    min_eigenvalue: 0.0,
                })
            } else {
                Ok(rep(0.0))
            }
        })
        .unwrap();
        assert_eq!(s.completed, 9);
        assert_eq!(s.failures[0].replication, 3);
        assert!(s.flagged);
        assert!(reps[3].is_none());
    }

    #[test]
    fn seeds_differ_by_replication() {
        let seeds = std::sync::Mutex::new(Vec::new());
        run_study(3, 7, &[0.0], 0.05, |_, s| {
            seeds.lock().unwrap().push(s);
            Ok(rep(0.0))
        })
        .unwrap();
        let mut s = seeds.into_inner().unwrap();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 3);
    }
}
