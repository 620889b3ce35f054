//! Renormalization-group parameter schedules for the two regimes `α > d` and `α = d`.

use serde::Serialize;

use crate::error::{usage, Result};
use crate::lattice::Params;
use crate::stats::binomial_pmf;

/// Block sizes below this are checked exactly; above it Hoeffding's bound
/// `exp(-N/18) < 1/4` settles the condition.
const HOEFFDING_FROM: u64 = 25;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ScheduleOptions {
    /// Overrides the computed default of `k₀`.
    pub k0: Option<u32>,
}

/// One step of the doubling schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Step {
    pub r: u32,
    pub delta: f64,
    pub n: u64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "regime")]
pub enum RGSchedule {
    #[serde(rename = "alpha>d")]
    LongRange { k0: u32, k: u32, ell: u32 },
    #[serde(rename = "alpha=d")]
    Marginal {
        delta: f64,
        log2_delta: f64,
        n0: u64,
        ell: i64,
        /// False when `ell < 0`, so the doubling sequence is empty.
        admissible: bool,
        steps: Vec<Step>,
    },
}

/// `P(Bin(N, 1/2) >= N/3) >= 3/4` for `N = L^{dk}`.
pub fn majority_condition(params: &Params, k: u32) -> bool {
    let n = params.base().pow(k);
    if n >= HOEFFDING_FROM {
        return true;
    }
    let need = n.div_ceil(3);
    let mass: f64 = binomial_pmf(n, 0.5)[need as usize..].iter().sum();
    mass >= 0.75
}

/// Smallest `k₀ >= 1` with the majority condition for every `k >= k₀`.
pub fn default_k0(params: &Params) -> u32 {
    let mut k0 = 1;
    let mut k = 1;
    while params.base().pow(k) < HOEFFDING_FROM {
        if !majority_condition(params, k) {
            k0 = k + 1;
        }
        k += 1;
    }
    k0
}

/// `log(L^{2dk} exp(-β 9^{-ℓ} L^{-(α-d)ℓk} L^{-(d+α)k}))`.
fn ell_condition_log(params: &Params, k: u32, ell: u32) -> f64 {
    let (d, a, ln_l) = (params.d as f64, params.alpha, (params.side as f64).ln());
    let (k, ell) = (k as f64, ell as f64);
    let exponent = -ell * 9f64.ln() - (a - d) * ell * k * ln_l - (d + a) * k * ln_l;
    2.0 * d * k * ln_l - params.beta * exponent.exp()
}

pub fn ell_condition(params: &Params, k: u32, ell: u32) -> bool {
    ell_condition_log(params, k, ell) <= 0.25f64.ln()
}

pub fn schedule(params: &Params, options: &ScheduleOptions) -> Result<RGSchedule> {
    params.validate()?;
    if !(params.beta >= 1.0) {
        return usage(format!("schedules need beta >= 1, got {}", params.beta));
    }
    let d = params.d as f64;
    if params.alpha > d {
        let k0 = options.k0.unwrap_or_else(|| default_k0(params));
        if k0 < 1 {
            return usage("k0 must be >= 1");
        }
        let k = k0.max(params.beta.ln().sqrt().floor() as u32);
        let ell = if ell_condition(params, k, 1) {
            // The left side increases in ℓ, so solve for the crossing and adjust.
            let ln_l = (params.side as f64).ln();
            let kf = k as f64;
            let target = (2.0 * d * kf * ln_l + 4f64.ln()).ln();
            let slope = 9f64.ln() + (params.alpha - d) * kf * ln_l;
            let guess = (params.beta.ln() - (d + params.alpha) * kf * ln_l - target) / slope;
            let mut ell = guess.floor().clamp(1.0, 1e9) as u32;
            while ell > 1 && !ell_condition(params, k, ell) {
                ell -= 1;
            }
            while ell_condition(params, k, ell + 1) {
                ell += 1;
            }
            ell
        } else {
            0
        };
        Ok(RGSchedule::LongRange { k0, k, ell })
    } else if params.alpha == d {
        let l = params.side as f64;
        let ln_l = l.ln();
        let scaled = params.beta * l.powf(-9.0 * d);
        let log2_delta = -scaled / std::f64::consts::LN_2;
        let delta = (-scaled).exp();
        let n0 = (2.0 * params.beta / (l.powf(9.0 * d) * d * ln_l)).ceil() as u64;
        let ell = (-(100f64.log2()) - log2_delta).ceil() as i64;
        let mut steps = Vec::new();
        for r in 0..=ell.max(-1) {
            let r = r as u32;
            let delta_r = delta * 2f64.powi(r as i32);
            let n = n0
                .checked_mul(1u64.checked_shl(r).unwrap_or(0))
                .filter(|_| r < 64)
                .ok_or_else(|| crate::error::Error::Resource(format!("n_r = 2^{r} n0 overflows")))?;
            steps.push(Step { r, delta: delta_r, n, beta: (12.0 * delta_r).exp() * params.beta / 2.0 });
        }
        Ok(RGSchedule::Marginal { delta, log2_delta, n0, ell, admissible: ell >= 0, steps })
    } else {
        usage(format!("schedules need alpha >= d, got alpha = {} < d = {}", params.alpha, params.d))
    }
}

impl RGSchedule {
    /// Re-checks every defining inequality; returns a description of each failure.
    pub fn verify(&self, params: &Params) -> Vec<String> {
        let mut failures = Vec::new();
        match self {
            RGSchedule::LongRange { k0, k, ell } => {
                let expected_k = (*k0).max(params.beta.ln().sqrt().floor() as u32);
                if *k != expected_k {
                    failures.push(format!("k = {k}, expected {expected_k}"));
                }
                if *ell >= 1 && !ell_condition(params, *k, *ell) {
                    failures.push(format!("condition fails at ell = {ell}"));
                }
                if ell_condition(params, *k, ell + 1) {
                    failures.push(format!("condition holds at ell + 1 = {}", ell + 1));
                }
            }
            RGSchedule::Marginal { log2_delta, ell, steps, n0, .. } => {
                let scaled = *ell as f64 + log2_delta;
                if !(scaled >= -(100f64.log2()) && scaled <= -(50f64.log2())) {
                    failures.push(format!("2^ell delta = 2^{scaled} outside [1/100, 1/50]"));
                }
                if *ell >= 0 && steps.len() as i64 != ell + 1 {
                    failures.push(format!("{} steps for ell = {ell}", steps.len()));
                }
                for s in steps {
                    if !(s.beta <= params.beta && s.beta >= params.beta / 2.0) {
                        failures.push(format!("beta_{} = {} outside [beta/2, beta]", s.r, s.beta));
                    }
                }
                if let Some(first) = steps.first() {
                    if first.n != *n0 {
                        failures.push("n_0 mismatch".into());
                    }
                }
                for w in steps.windows(2) {
                    if w[1].delta != 2.0 * w[0].delta {
                        failures.push(format!("delta_{} is not twice delta_{}", w[1].r, w[0].r));
                    }
                    if w[1].n != 2 * w[0].n {
                        failures.push(format!("n_{} is not twice n_{}", w[1].r, w[0].r));
                    }
                }
            }
        }
        failures
    }
}
