use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::TrialResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub mean_errors: f64,
    pub std_errors: f64,
    pub mean_warnings: f64,
    pub std_warnings: f64,
}

/// Per-iteration mean and sample standard deviation across trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub iterations: Vec<IterationStats>,
}

impl AggregateStats {
    pub fn mean_errors(&self) -> Vec<f64> {
        self.iterations.iter().map(|s| s.mean_errors).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("need at least 2 trials, got {0}")]
    TooFewTrials(usize),
    #[error("trial {trial} has {found} iterations, expected {expected}")]
    LengthMismatch {
        trial: usize,
        expected: usize,
        found: usize,
    },
}

#[derive(Default)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn sample_std(&self) -> f64 {
        (self.m2 / (self.n - 1.0)).max(0.0).sqrt()
    }
}

pub fn aggregate(trials: &[TrialResult]) -> Result<AggregateStats, AggregateError> {
    if trials.len() < 2 {
        return Err(AggregateError::TooFewTrials(trials.len()));
    }
    let expected = trials[0].per_iteration_totals.len();
    if let Some((trial, t)) = trials
        .iter()
        .enumerate()
        .find(|(_, t)| t.per_iteration_totals.len() != expected)
    {
        return Err(AggregateError::LengthMismatch {
            trial,
            expected,
            found: t.per_iteration_totals.len(),
        });
    }
    let iterations = (0..expected)
        .map(|i| {
            let mut errors = Welford::default();
            let mut warnings = Welford::default();
            for t in trials {
                let (e, w) = t.per_iteration_totals[i];
                errors.push(e as f64);
                warnings.push(w as f64);
            }
            IterationStats {
                iteration: i,
                mean_errors: errors.mean,
                std_errors: errors.sample_std(),
                mean_warnings: warnings.mean,
                std_warnings: warnings.sample_std(),
            }
        })
        .collect();
    Ok(AggregateStats { iterations })
}

/// Smallest `k` such that each of the `window` steps after `k` changes the
/// mean by at most `epsilon * max(means[k], 1)`.
pub fn detect_plateau(means: &[f64], epsilon: f64, window: usize) -> Option<usize> {
    if window == 0 || means.len() < window + 1 {
        return None;
    }
    (0..means.len() - window).find(|&k| {
        let tolerance = epsilon * means[k].max(1.0);
        (k..k + window).all(|j| (means[j] - means[j + 1]).abs() <= tolerance)
    })
}
