use std::time::Instant;

use serde::Serialize;

use super::{run_trials, Budget, EstimateReport};
use crate::clusters::{cluster_of_origin_size, label};
use crate::error::{usage, Result};
use crate::lattice::Params;
use crate::sampler::{purpose, sample_mixed, SeedSpec};

/// `E|K_0 within Λ_n|`.
pub fn chi_hat(params: &Params, n: u32, budget: &Budget, seed: &SeedSpec) -> Result<EstimateReport> {
    if n < 1 {
        return usage("chi_hat needs n >= 1");
    }
    chi_estimate(params, n, budget, seed)
}

/// As [`chi_hat`] but also accepts `n = 0`.
pub fn chi_estimate(params: &Params, n: u32, budget: &Budget, seed: &SeedSpec) -> Result<EstimateReport> {
    params.validate()?;
    params.lattice(n)?;
    let started = Instant::now();
    let trial_seed = seed.child(purpose::CHI, 0);
    let [stats] = run_trials(budget, |t| {
        let config = sample_mixed(params, n, &trial_seed.with_trial(t))?;
        Ok([cluster_of_origin_size(&config, None) as f64])
    })?;
    Ok(EstimateReport::from_stats(&stats, *seed, *params, n, started))
}

/// `L^{-dn} E|K_max(Λ_n)|²`, a lower bound for the susceptibility.
pub fn second_moment_lb(params: &Params, n: u32, budget: &Budget, seed: &SeedSpec) -> Result<EstimateReport> {
    params.validate()?;
    let volume = params.lattice(n)?.volume() as f64;
    let started = Instant::now();
    let trial_seed = seed.child(purpose::SECOND_MOMENT, 0);
    let [stats] = run_trials(budget, |t| {
        let config = sample_mixed(params, n, &trial_seed.with_trial(t))?;
        let m = label(&config, None).largest().map_or(0, |(_, s)| s) as f64;
        Ok([m * m / volume])
    })?;
    Ok(EstimateReport::from_stats(&stats, *seed, *params, n, started))
}

/// Statistics of `|K_max(Λ_n)|`.
#[derive(Debug, Clone, Serialize)]
pub struct KmaxStats {
    pub mean_size: EstimateReport,
    /// `L^{-dn} E|K_max|²`.
    pub second_moment: EstimateReport,
    pub lambda: f64,
    /// `P(|K_max| >= λ L^{dn})`.
    pub fraction_above: EstimateReport,
}

pub fn kmax_stats(params: &Params, n: u32, lambda: f64, budget: &Budget, seed: &SeedSpec) -> Result<KmaxStats> {
    params.validate()?;
    if !(lambda > 0.0 && lambda <= 1.0) {
        return usage(format!("lambda must lie in (0, 1], got {lambda}"));
    }
    let volume = params.lattice(n)?.volume() as f64;
    let started = Instant::now();
    let trial_seed = seed.child(purpose::KMAX, 0);
    let stats = run_trials(budget, |t| {
        let config = sample_mixed(params, n, &trial_seed.with_trial(t))?;
        let m = label(&config, None).largest().map_or(0, |(_, s)| s) as f64;
        Ok([m, m * m / volume, if m >= lambda * volume { 1.0 } else { 0.0 }])
    })?;
    let report = |i: usize| EstimateReport::from_stats(&stats[i], *seed, *params, n, started);
    Ok(KmaxStats { mean_size: report(0), second_moment: report(1), lambda, fraction_above: report(2) })
}
