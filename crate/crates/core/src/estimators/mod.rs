//! Monte Carlo estimators, parameter schedules and scaling fits.
//!
//! Every trial draws its randomness from a counter-based seed, and per-trial
//! values are folded in trial order, so reports are identical for any number
//! of worker threads.

mod chi;
pub mod fit;
pub mod induction;
pub mod schedule;
mod xi;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{usage, Result};
use crate::lattice::Params;
use crate::sampler::SeedSpec;
use crate::stats::RunningStats;

pub use chi::{chi_estimate, chi_hat, kmax_stats, second_moment_lb, KmaxStats};
pub use xi::{
    correlation_length, exploration_tail, exploration_tail_analytic, exterior_weight, phi_hat,
    CorrelationLength, ExteriorWeight, TailReport, XiStatus,
};

/// Runs `f` for trials `0..count` in parallel and returns results in trial order.
pub fn parallel_map<T, F>(count: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    (0..count).into_par_iter().map(&f).collect()
}

/// How many trials an estimator may spend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Budget {
    pub min_trials: u64,
    pub max_trials: u64,
    /// Stop once `se / |mean|` drops to this; `None` runs exactly `min_trials`.
    pub target_rel_se: Option<f64>,
}

impl Budget {
    pub fn fixed(trials: u64) -> Self {
        Budget { min_trials: trials, max_trials: trials, target_rel_se: None }
    }

    pub fn adaptive(target_rel_se: f64, max_trials: u64) -> Self {
        Budget { min_trials: 256.min(max_trials), max_trials, target_rel_se: Some(target_rel_se) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_trials < 2 {
            return usage(format!("at least 2 trials are required, got {}", self.min_trials));
        }
        if self.max_trials < self.min_trials {
            return usage("max trials below min trials");
        }
        if let Some(t) = self.target_rel_se {
            if !(t > 0.0 && t.is_finite()) {
                return usage(format!("target relative SE must be positive, got {t}"));
            }
        }
        Ok(())
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget::adaptive(0.01, 1_000_000)
    }
}

/// Runs trials in deterministic batches until the budget is met. The stopping
/// rule looks at the first coordinate.
pub(crate) fn run_trials<const N: usize, F>(budget: &Budget, f: F) -> Result<[RunningStats; N]>
where
    F: Fn(u64) -> Result<[f64; N]> + Sync,
{
    budget.validate()?;
    let mut stats: [RunningStats; N] = std::array::from_fn(|_| RunningStats::default());
    let mut done = 0u64;
    let mut next = budget.min_trials;
    loop {
        let values = (done..done + next).into_par_iter().map(&f).collect::<Result<Vec<_>>>()?;
        for v in values {
            for (s, x) in stats.iter_mut().zip(v) {
                s.push(x);
            }
        }
        done += next;
        let Some(target) = budget.target_rel_se else { break };
        if done >= budget.max_trials {
            break;
        }
        let (mean, se) = (stats[0].mean(), stats[0].standard_error());
        if se == 0.0 {
            break;
        }
        let rel = se / mean.abs();
        if rel <= target {
            break;
        }
        let wanted = (done as f64 * (rel / target).powi(2) * 1.1).ceil();
        let wanted = if wanted.is_finite() { wanted as u64 } else { budget.max_trials };
        next = wanted.saturating_sub(done).max(budget.min_trials).min(budget.max_trials - done);
    }
    Ok(stats)
}

/// A Monte Carlo estimate with its provenance.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub se: f64,
    pub trials: u64,
    pub seed: SeedSpec,
    pub params: Params,
    pub n: u32,
    /// Excluded from serialized output so reports are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl EstimateReport {
    pub(crate) fn from_stats(stats: &RunningStats, seed: SeedSpec, params: Params, n: u32, started: Instant) -> Self {
        EstimateReport {
            estimate: stats.mean(),
            se: stats.standard_error(),
            trials: stats.count(),
            seed,
            params,
            n,
            wall_time: started.elapsed(),
        }
    }

    /// `(estimate - 3 se, estimate + 3 se)`.
    pub fn interval(&self, sigmas: f64) -> (f64, f64) {
        (self.estimate - sigmas * self.se, self.estimate + sigmas * self.se)
    }
}
