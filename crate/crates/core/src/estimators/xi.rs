use std::time::Instant;

use serde::Serialize;

use super::{chi_estimate, run_trials, Budget, EstimateReport};
use crate::error::{usage, Result};
use crate::lattice::Params;
use crate::sampler::{edge_prob, purpose, sample_bonds, SeedSpec};

const TAIL_TOLERANCE: f64 = 1e-12;
const MAX_TERMS: u32 = 1_000_000;

/// `W_m(β) = Σ_{ℓ>m} (L^{dℓ} - L^{d(ℓ-1)}) p_ℓ(β)`, the total edge probability
/// from a vertex of `Λ_m` to the exterior of `Λ_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExteriorWeight {
    pub value: f64,
    /// Last class included in the sum.
    pub last_class: u32,
    /// Upper bound on the omitted terms.
    pub remainder_bound: f64,
}

pub fn exterior_weight(params: &Params, m: u32) -> Result<ExteriorWeight> {
    params.validate()?;
    let l = params.side as f64;
    let d = params.d as f64;
    let ln_l = l.ln();
    let shell = 1.0 - l.powf(-d);
    let ratio = 1.0 / (1.0 - l.powf(-params.alpha));
    let tail = |next: u32| shell * params.beta * (-params.alpha * next as f64 * ln_l).exp() * ratio;
    if params.beta == 0.0 {
        return Ok(ExteriorWeight { value: 0.0, last_class: m, remainder_bound: 0.0 });
    }
    let mut sum = crate::stats::CompensatedSum::default();
    let mut class = m;
    loop {
        class += 1;
        let p = edge_prob(params, class);
        if p > 0.0 {
            sum.add(shell * (d * class as f64 * ln_l + p.ln()).exp());
        }
        let bound = tail(class + 1);
        if bound < TAIL_TOLERANCE * sum.value() || class - m >= MAX_TERMS {
            return Ok(ExteriorWeight { value: sum.value(), last_class: class, remainder_bound: bound });
        }
    }
}

/// `W_m(β) · E|K_0 within Λ_m|`.
pub fn phi_hat(params: &Params, m: u32, budget: &Budget, seed: &SeedSpec) -> Result<EstimateReport> {
    let w = exterior_weight(params, m)?.value;
    let mut report = chi_estimate(params, m, budget, seed)?;
    report.estimate *= w;
    report.se *= w;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum XiStatus {
    Determined,
    /// The confidence interval at the reported scale straddles 1/2.
    Indeterminate,
    /// No scale up to the cap satisfied the condition.
    Exceeded,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiRow {
    pub m: u32,
    pub phi: f64,
    pub se: f64,
    pub trials: u64,
}

/// `n(β)` and `ξ(β) = L^{n(β)}`.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationLength {
    pub status: XiStatus,
    /// For `Exceeded`, the cap (a strict lower bound).
    pub n: u32,
    pub xi: f64,
    pub rows: Vec<PhiRow>,
}

impl CorrelationLength {
    /// `"12"`, `"12?"` when indeterminate, `">20"` when the cap was exceeded.
    pub fn label(&self) -> String {
        match self.status {
            XiStatus::Determined => self.n.to_string(),
            XiStatus::Indeterminate => format!("{}?", self.n),
            XiStatus::Exceeded => format!(">{}", self.n),
        }
    }
}

/// Smallest `m <= n_cap` with `φ_β(Λ_m) <= 1/2`, decided at 3 SE.
///
/// A straddling interval is re-estimated once with the full trial cap; if it
/// still straddles, that `m` is reported as indeterminate.
pub fn correlation_length(params: &Params, budget: &Budget, n_cap: u32, seed: &SeedSpec) -> Result<CorrelationLength> {
    params.validate()?;
    let l = params.side as f64;
    let mut rows = Vec::new();
    for m in 0..=n_cap {
        let seed = seed.child(purpose::PHI, 0).child(m as u64, 0);
        let mut est = phi_hat(params, m, budget, &seed)?;
        let straddles = |e: &EstimateReport| e.estimate - 3.0 * e.se <= 0.5 && e.estimate + 3.0 * e.se > 0.5;
        if straddles(&est) && est.trials < budget.max_trials {
            est = phi_hat(params, m, &Budget::fixed(budget.max_trials), &seed)?;
        }
        rows.push(PhiRow { m, phi: est.estimate, se: est.se, trials: est.trials });
        let xi = l.powi(m as i32);
        if est.estimate + 3.0 * est.se <= 0.5 {
            return Ok(CorrelationLength { status: XiStatus::Determined, n: m, xi, rows });
        }
        if straddles(&est) {
            return Ok(CorrelationLength { status: XiStatus::Indeterminate, n: m, xi, rows });
        }
    }
    Ok(CorrelationLength { status: XiStatus::Exceeded, n: n_cap, xi: l.powi(n_cap as i32), rows })
}

/// `1 - exp[-β Σ_{ℓ=k+1}^{n} (L^{dℓ} - L^{d(ℓ-1)}) L^{-ℓ(d+α)}]`, the probability
/// that the origin has an open edge leaving `Λ_k` inside `Λ_n`.
pub fn exploration_tail_analytic(params: &Params, k: u32, n: u32) -> f64 {
    let l = params.side as f64;
    let d = params.d as f64;
    let exponent: f64 = ((k + 1)..=n)
        .map(|c| (1.0 - l.powf(-d)) * l.powf(d * c as f64) * l.powf(-(c as f64) * (d + params.alpha)))
        .sum();
    -(-params.beta * exponent).exp_m1()
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub k: u32,
    pub estimate: EstimateReport,
    pub analytic: f64,
    /// `|frequency - analytic| / σ` with the analytic binomial σ.
    pub z: f64,
    pub pass: bool,
}

/// Frequency of an open edge from the origin to `Λ_n \ Λ_k`, against the analytic value.
pub fn exploration_tail(params: &Params, k: u32, n: u32, budget: &Budget, seed: &SeedSpec) -> Result<TailReport> {
    if params.alpha != params.d as f64 {
        return usage("the exploration tail check applies to alpha = d");
    }
    if k >= n {
        return usage(format!("exploration tail needs k < n, got k = {k}, n = {n}"));
    }
    let started = Instant::now();
    let trial_seed = seed.child(purpose::TAIL, 0);
    let [stats] = run_trials(budget, |t| {
        let config = sample_bonds(params, n, &trial_seed.with_trial(t))?;
        let hit = ((k + 1)..=n).any(|c| config.open_pairs(c).next().is_some_and(|(x, _)| x == 0));
        Ok([if hit { 1.0 } else { 0.0 }])
    })?;
    let estimate = EstimateReport::from_stats(&stats, *seed, *params, n, started);
    let analytic = exploration_tail_analytic(params, k, n);
    let sigma = (analytic * (1.0 - analytic) / estimate.trials as f64).sqrt();
    let diff = (estimate.estimate - analytic).abs();
    let z = if sigma > 0.0 { diff / sigma } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(TailReport { k, estimate, analytic, z, pass: z <= 4.0 })
}
