//! Empirical checks of the multi-scale induction steps.

use std::time::Instant;

use serde::Serialize;

use super::{run_trials, Budget, EstimateReport};
use crate::clusters::label;
use crate::error::{usage, Result};
use crate::lattice::Params;
use crate::renorm::{phi, psi};
use crate::sampler::{purpose, sample_mixed, ClassEdges, MixedConfig, SeedSpec};

/// Largest scale sampled by these checks.
const MAX_LOG2_VOLUME: f64 = 22.0;

fn largest(config: &MixedConfig) -> u64 {
    label(config, None).largest().map_or(0, |(_, s)| s)
}

fn check_volume(params: &Params, n: u32) -> Result<()> {
    let bits = n as f64 * params.d as f64 * (params.side as f64).log2();
    if bits > MAX_LOG2_VOLUME {
        return Err(crate::error::Error::Resource(format!(
            "induction checks sample at most 2^{MAX_LOG2_VOLUME} sites, got volume 2^{bits:.1}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleRow {
    pub r: u32,
    pub scale: u32,
    /// Required fraction of `|Λ_scale|`.
    pub fraction: f64,
    pub estimate: EstimateReport,
    pub pass: bool,
}

/// `P(|K_max(Λ_{rk})| >= 3^{-r} L^{drk}) >= 1/2` for `r = 0..=ell`, each decided
/// at 3 SE.
pub fn check_scale_induction(
    params: &Params,
    k: u32,
    ell: u32,
    budget: &Budget,
    seed: &SeedSpec,
) -> Result<Vec<ScaleRow>> {
    if k < 1 {
        return usage("block scale k must be >= 1");
    }
    check_volume(params, k * ell)?;
    let mut rows = Vec::new();
    for r in 0..=ell {
        let scale = r * k;
        let fraction = 3f64.powi(-(r as i32));
        let threshold = fraction * params.lattice(scale)?.volume() as f64;
        let trial_seed = seed.child(purpose::INDUCTION, 0).child(1, r as u64);
        let started = Instant::now();
        let [stats] = run_trials(budget, |t| {
            let config = sample_mixed(params, scale, &trial_seed.with_trial(t))?;
            Ok([if largest(&config) as f64 >= threshold { 1.0 } else { 0.0 }])
        })?;
        let estimate = EstimateReport::from_stats(&stats, *seed, *params, scale, started);
        let pass = estimate.estimate + 3.0 * estimate.se >= 0.5;
        rows.push(ScaleRow { r, scale, fraction, estimate, pass });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Implication {
    /// Hypothesis established and conclusion consistent.
    Holds,
    /// Hypothesis established, conclusion rejected at 3 SE.
    Fails,
    /// Hypothesis rejected at 3 SE, so the implication is vacuous here.
    Vacuous,
    /// Hypothesis undecided at 3 SE.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct DoublingReport {
    pub eps: f64,
    pub n: u32,
    pub hypothesis: EstimateReport,
    /// Estimated at `(1 + 6ε)β` on `Λ_{2n}`, against `(1 - 2ε) |Λ_{2n}|`.
    pub conclusion: EstimateReport,
    pub status: Implication,
}

/// If `P_{β,p}(|K_max(Λ_n)| >= (1-ε)|Λ_n|) >= p` then
/// `P_{(1+6ε)β,p}(|K_max(Λ_{2n})| >= (1-2ε)|Λ_{2n}|) >= p`.
pub fn check_scale_doubling(params: &Params, eps: f64, n: u32, budget: &Budget, seed: &SeedSpec) -> Result<DoublingReport> {
    if params.alpha != params.d as f64 {
        return usage("the scale-doubling check applies to alpha = d");
    }
    if !(eps > 0.0 && eps <= 0.5) {
        return usage(format!("eps must lie in (0, 1/2], got {eps}"));
    }
    if !(params.beta >= 1.0) {
        return usage("the scale-doubling check needs beta >= 1");
    }
    check_volume(params, 2 * n)?;
    let seed_h = seed.child(purpose::INDUCTION, 0).child(2, 0);
    let seed_c = seed.child(purpose::INDUCTION, 0).child(2, 1);
    let event = |p: &Params, scale: u32, fraction: f64, s: SeedSpec| -> Result<EstimateReport> {
        let threshold = fraction * p.lattice(scale)?.volume() as f64;
        let started = Instant::now();
        let [stats] = run_trials(budget, |t| {
            let config = sample_mixed(p, scale, &s.with_trial(t))?;
            Ok([if largest(&config) as f64 >= threshold { 1.0 } else { 0.0 }])
        })?;
        Ok(EstimateReport::from_stats(&stats, *seed, *p, scale, started))
    };
    let hypothesis = event(params, n, 1.0 - eps, seed_h)?;
    let raised = params.beta((1.0 + 6.0 * eps) * params.beta)?;
    let conclusion = event(&raised, 2 * n, 1.0 - 2.0 * eps, seed_c)?;
    let p = params.p;
    let status = if hypothesis.estimate + 3.0 * hypothesis.se < p {
        Implication::Vacuous
    } else if hypothesis.estimate - 3.0 * hypothesis.se < p && hypothesis.se > 0.0 {
        Implication::Inconclusive
    } else if conclusion.estimate + 3.0 * conclusion.se >= p {
        Implication::Holds
    } else {
        Implication::Fails
    };
    Ok(DoublingReport { eps, n, hypothesis, conclusion, status })
}

/// Frequencies of the four base-case events and of their conclusion.
#[derive(Debug, Clone, Serialize)]
pub struct BaseCaseReport {
    pub delta: f64,
    pub n0: u32,
    pub trials: u64,
    /// `|η ∩ Λ_{n0}| >= (1 - 2δ) |Λ_{n0}|`.
    pub a1: f64,
    /// Every pair of occupied sites at distance at most `L²` is open.
    pub a2: f64,
    /// Every 2-block is occupied after `Ψ^{L^{-2d}, 2}`.
    pub a3: f64,
    /// `Φ^k` of the renormalized bonds opens every class-1 pair for `k <= n0 - 3`.
    pub a4: f64,
    pub all_four: f64,
    /// `|K_max(Λ_{n0})| >= (1 - 2δ) |Λ_{n0}|`.
    pub target: f64,
    /// Samples in which all four events hold but the target fails.
    pub violations: u64,
    pub pass: bool,
}

/// Samples `P_{β/2, 1-δ}` on `Λ_{n0}` with `δ = exp(-L^{-9d} β)` and checks that
/// the four base-case events force a giant cluster.
pub fn check_base_case(params: &Params, n0: Option<u32>, trials: u64, seed: &SeedSpec) -> Result<BaseCaseReport> {
    if params.alpha != params.d as f64 {
        return usage("the base-case check applies to alpha = d");
    }
    let l = params.side as f64;
    let d = params.d as f64;
    let delta = (-params.beta * l.powf(-9.0 * d)).exp();
    let n0 = match n0 {
        Some(n) => n,
        None => (2.0 * params.beta / (l.powf(9.0 * d) * d * l.ln())).ceil() as u32,
    };
    if n0 < 2 {
        return usage(format!("base scale n0 must be >= 2, got {n0}"));
    }
    if trials < 2 {
        return usage("at least 2 trials are required");
    }
    check_volume(params, n0)?;
    let sampled = Params::with_density(params.d, params.side, params.alpha, params.beta / 2.0, 1.0 - delta)?;
    let lattice = sampled.lattice(n0)?;
    let volume = lattice.volume() as f64;
    let lambda = l.powf(-2.0 * d);
    let trial_seed = seed.child(purpose::INDUCTION, 0).child(3, 0);
    let rows: Vec<[bool; 5]> = super::parallel_map(trials, |t| {
        let config = sample_mixed(&sampled, n0, &trial_seed.with_trial(t))?;
        let a1 = config.eta.count() as f64 >= (1.0 - 2.0 * delta) * volume;
        let a2 = (1..=2.min(n0)).all(|c| match config.omega.class_edges(c) {
            ClassEdges::AllBut(closed) => closed.iter().all(|&(x, y)| !(config.eta.contains(x) && config.eta.contains(y))),
            ClassEdges::Open(_) => lattice
                .class_pairs(c)
                .all(|(x, y)| !(config.eta.contains(x) && config.eta.contains(y)) || config.omega.is_open(x, y)),
        });
        let (a3, a4) = if n0 > 2 {
            let coarse = psi(&config, lambda, 2)?;
            let a3 = coarse.eta.is_full();
            let mut a4 = true;
            for k in 0..=(n0 - 3) {
                let projected = phi(&coarse.omega, k)?;
                if projected.open_count(1) != projected.lattice().pair_count(1)? {
                    a4 = false;
                    break;
                }
            }
            (a3, a4)
        } else {
            (config.eta.count() > 0, true)
        };
        let target = largest(&config) as f64 >= (1.0 - 2.0 * delta) * volume;
        Ok([a1, a2, a3, a4, target])
    })?;
    let freq = |i: usize| rows.iter().filter(|r| r[i]).count() as f64 / trials as f64;
    let all = |r: &[bool; 5]| r[..4].iter().all(|&b| b);
    let all_four = rows.iter().filter(|r| all(r)).count() as f64 / trials as f64;
    let violations = rows.iter().filter(|r| all(r) && !r[4]).count() as u64;
    Ok(BaseCaseReport {
        delta,
        n0,
        trials,
        a1: freq(0),
        a2: freq(1),
        a3: freq(2),
        a4: freq(3),
        all_four,
        target: freq(4),
        violations,
        pass: violations == 0,
    })
}
