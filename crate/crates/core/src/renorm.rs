//! Renormalization maps between scales.
//!
//! [`phi`] projects a bond configuration on `Λ_n` to `Λ_{n-k}` by keeping the
//! edges of class above `k` and shifting both endpoints left by `k` digits.
//! [`psi`] is the random-cluster renormalization: a coarse vertex is occupied
//! when the maximal cluster of its `k`-block is large, and two occupied coarse
//! vertices are joined when some open edge runs between their maximal clusters.

use serde::Serialize;
use serde_json::json;

use crate::clusters::{kmax_all, label};
use crate::error::{usage, Result};
use crate::lattice::Params;
use crate::report::CheckReport;
use crate::sampler::{
    edge_prob, purpose, sample_bonds, sample_mixed, BondConfig, ClassEdges, MixedConfig, SeedSpec, SiteSet,
};
use crate::stats::bonferroni_z;

/// `Φ^k`: the coarse configuration on `Λ_{n-k}`.
pub fn phi(config: &BondConfig, k: u32) -> Result<BondConfig> {
    let n = config.scale();
    if k == 0 {
        return Ok(config.clone());
    }
    if n < k + 1 {
        return usage(format!("phi^{k} needs n >= {}, got n = {n}", k + 1));
    }
    let coarse = config.lattice().coarsen(k)?;
    let shift = config.lattice().block_volume(k);
    let mut classes = Vec::with_capacity((n - k) as usize);
    for c in (k + 1)..=n {
        let mut edges: Vec<(u64, u64)> = config.open_pairs(c).map(|(x, y)| (x / shift, y / shift)).collect();
        edges.sort_unstable();
        edges.dedup();
        let class = coarse_class(&coarse, c - k, edges);
        classes.push(class);
    }
    Ok(BondConfig::from_classes(coarse, classes))
}

fn coarse_class(lattice: &crate::lattice::Lattice, k: u32, open: Vec<(u64, u64)>) -> ClassEdges {
    let total = lattice.pair_count(k).unwrap();
    if (open.len() as u128) * 2 > total {
        let closed = lattice.class_pairs(k).filter(|p| open.binary_search(p).is_err()).collect();
        ClassEdges::AllBut(closed)
    } else {
        ClassEdges::Open(open)
    }
}

/// Residual of the identity `1 - (1 - p_{k+1}(β))^{L^{2d}} = p_k(L^{d-α} β)`.
pub fn phi_marginal_identity(params: &Params, k: u32) -> Result<f64> {
    params.validate()?;
    if k < 1 {
        return usage("class index k must be >= 1");
    }
    let l = params.side as f64;
    let d = params.d as f64;
    let preimages = params.base().pow(2) as f64;
    let fine = (-params.beta * l.powf(-((k + 1) as f64) * (d + params.alpha))).exp();
    let lhs = 1.0 - fine.powf(preimages);
    let rhs = edge_prob(&params.beta(l.powf(d - params.alpha) * params.beta)?, k);
    Ok(lhs - rhs)
}

/// `Ψ^{λ,k}`: the renormalized mixed configuration on `Λ_{n-k}`.
pub fn psi(config: &MixedConfig, lambda: f64, k: u32) -> Result<MixedConfig> {
    let n = config.omega.scale();
    if !(lambda > 0.0 && lambda <= 1.0) {
        return usage(format!("lambda must lie in (0, 1], got {lambda}"));
    }
    if k < 1 || n < k + 1 {
        return usage(format!("psi needs 1 <= k < n, got k = {k}, n = {n}"));
    }
    let (labeling, records) = kmax_all(config, k);
    let threshold = lambda * config.lattice().block_volume(k) as f64;
    let coarse = config.lattice().coarsen(k)?;
    let mut eta = SiteSet::empty(coarse.volume());
    for r in &records {
        if r.size as f64 >= threshold {
            eta.insert(r.block.index);
        }
    }
    let shift = config.lattice().block_volume(k);
    let in_kmax = |x: u64| records[(x / shift) as usize].contains(&labeling, x);
    let mut classes = Vec::with_capacity((n - k) as usize);
    for c in (k + 1)..=n {
        let mut edges: Vec<(u64, u64)> = config
            .omega
            .open_pairs(c)
            .filter(|&(x, y)| in_kmax(x) && in_kmax(y))
            .map(|(x, y)| (x / shift, y / shift))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        classes.push(coarse_class(&coarse, c - k, edges));
    }
    let omega = BondConfig::from_classes(coarse, classes);
    MixedConfig::new(eta, omega)
}

/// A failure of the connectivity or volume property of `Ψ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PsiViolation {
    /// `x` and `y` lie in K_max sets whose blocks are `Ψ`-connected, yet are not connected.
    Connectivity { x: u64, y: u64 },
    Volume { fine: u64, bound: f64 },
}

/// Checks the two deterministic consequences of `Ψ^{λ,k}` on one configuration
/// of `Λ_{n+k}`: connectivity lifts from coarse to fine, and
/// `|K_max(Λ_{n+k})| >= λ L^{dk} |K_max(Λ_n; Ψ)|`.
pub fn check_psi_connectivity(config: &MixedConfig, lambda: f64, k: u32) -> Result<Vec<PsiViolation>> {
    let coarse = psi(config, lambda, k)?;
    let coarse_labels = label(&coarse, None);
    let fine_labels = label(config, None);
    let (block_labels, records) = kmax_all(config, k);
    let shift = config.lattice().block_volume(k);
    let mut witness: Vec<Option<u64>> = vec![None; coarse.lattice().volume() as usize];
    let mut violations = Vec::new();
    for x in 0..config.lattice().volume() {
        let block = x / shift;
        if !records[block as usize].contains(&block_labels, x) {
            continue;
        }
        let Some(rep) = coarse_labels.label(block) else { continue };
        match witness[rep as usize] {
            None => witness[rep as usize] = Some(x),
            Some(w) if fine_labels.connected(w, x) => {}
            Some(w) => violations.push(PsiViolation::Connectivity { x: w, y: x }),
        }
    }
    let fine = fine_labels.largest().map_or(0, |(_, s)| s);
    let coarse_size = coarse_labels.largest().map_or(0, |(_, s)| s);
    let bound = lambda * shift as f64 * coarse_size as f64;
    if (fine as f64) < bound {
        violations.push(PsiViolation::Volume { fine, bound });
    }
    Ok(violations)
}

/// Checks the identity of [`phi_marginal_identity`] over classes `1..=classes`.
pub fn check_phi_identity(params: &Params, classes: u32) -> Result<CheckReport> {
    let mut worst: f64 = 0.0;
    for k in 1..=classes {
        worst = worst.max(phi_marginal_identity(params, k)?.abs());
    }
    let threshold = 1e-12;
    Ok(CheckReport::new("phi-identity", *params, worst, threshold, worst <= threshold)
        .with_detail(json!({ "classes": classes })))
}

/// Per-class frequency of `Φ^k`-open edges against `p_c(L^{(d-α)k} β)`.
///
/// The statistic is the largest standardized deviation over the coarse
/// classes, compared with a Bonferroni-corrected 4σ threshold.
pub fn check_phi_law(params: &Params, n: u32, k: u32, samples: u64, seed: &SeedSpec) -> Result<CheckReport> {
    if n < k + 1 || k < 1 {
        return usage(format!("phi-law check needs 1 <= k < n, got k = {k}, n = {n}"));
    }
    let lattice = params.lattice(n)?.coarsen(k)?;
    let classes = n - k;
    let l = params.side as f64;
    let coarse_beta = l.powf((params.d as f64 - params.alpha) * k as f64) * params.beta;
    let coarse_params = params.beta(coarse_beta)?;
    let seed = seed.child(purpose::RENORM, 0);
    let counts: Vec<Vec<u128>> = crate::estimators::parallel_map(samples, |t| {
        let config = sample_bonds(params, n, &seed.with_trial(t))?;
        let coarse = phi(&config, k)?;
        Ok((1..=classes).map(|c| coarse.open_count(c)).collect())
    })?;
    let z = bonferroni_z(4.0, classes as usize);
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for c in 1..=classes {
        let total: u128 = counts.iter().map(|v| v[(c - 1) as usize]).sum();
        let trials = lattice.pair_count(c)? as f64 * samples as f64;
        let freq = total as f64 / trials;
        let p = edge_prob(&coarse_params, c);
        let sigma = (p * (1.0 - p) / trials).sqrt();
        let dev = if sigma > 0.0 { (freq - p).abs() / sigma } else if freq == p { 0.0 } else { f64::INFINITY };
        worst = worst.max(dev);
        rows.push(json!({ "class": c, "frequency": freq, "expected": p, "z": dev }));
    }
    Ok(CheckReport::new("phi-law", *params, worst, z, worst <= z)
        .with_detail(json!({ "n": n, "k": k, "samples": samples, "classes": rows })))
}

/// Monte Carlo check of the marginals of `Ψ^{λ,k}` on `Λ_n`.
///
/// Tests that the coarse site density matches the probability `p'` that
/// `|K_max(Λ_k)| >= λ L^{dk}` (estimated independently on `Λ_k`), and that for a
/// fixed pair of each coarse class the conditional probability of an open
/// edge given both endpoints occupied is at least `p_c(λ² L^{k(d-α)} β)`.
pub fn check_domination(
    params: &Params,
    lambda: f64,
    k: u32,
    n: u32,
    samples: u64,
    seed: &SeedSpec,
) -> Result<CheckReport> {
    if k < 1 || n < k + 1 {
        return usage(format!("domination check needs 1 <= k < n, got k = {k}, n = {n}"));
    }
    let classes = n - k;
    let coarse = params.lattice(n)?.coarsen(k)?;
    let partners: Vec<u64> = (1..=classes).map(|c| coarse.block_volume(c - 1)).collect();
    let seed = seed.child(purpose::RENORM, 0);
    let rows: Vec<(bool, Vec<(bool, bool)>)> = crate::estimators::parallel_map(samples, |t| {
        let config = sample_mixed(params, n, &seed.with_trial(t))?;
        let out = psi(&config, lambda, k)?;
        let site = out.eta.contains(0);
        let edges = partners
            .iter()
            .map(|&y| {
                let both = site && out.eta.contains(y);
                (both, both && out.omega.is_open(0, y))
            })
            .collect();
        Ok((site, edges))
    })?;
    let threshold = lambda * params.lattice(k)?.volume() as f64;
    let marginal_seed = seed.child(1, 0);
    let reference: Vec<bool> = crate::estimators::parallel_map(samples, |t| {
        let config = sample_mixed(params, k, &marginal_seed.with_trial(t))?;
        Ok(label(&config, None).largest().map_or(0, |(_, s)| s) as f64 >= threshold)
    })?;

    let z = bonferroni_z(4.0, 1 + classes as usize);
    let ns = samples as f64;
    let site_freq = rows.iter().filter(|r| r.0).count() as f64 / ns;
    let ref_freq = reference.iter().filter(|&&b| b).count() as f64 / ns;
    let pooled = (site_freq + ref_freq) / 2.0;
    let sigma = (2.0 * pooled * (1.0 - pooled) / ns).sqrt();
    let site_dev = standardized(site_freq - ref_freq, sigma);
    let mut worst = site_dev.abs();
    let l = params.side as f64;
    let beta_prime = lambda * lambda * l.powf(k as f64 * (params.d as f64 - params.alpha)) * params.beta;
    let prime = params.beta(beta_prime)?;
    let mut edge_rows = Vec::new();
    for c in 1..=classes {
        let idx = (c - 1) as usize;
        let conditioned = rows.iter().filter(|r| r.1[idx].0).count() as u64;
        let open = rows.iter().filter(|r| r.1[idx].1).count() as u64;
        let bound = edge_prob(&prime, c);
        let (freq, dev) = if conditioned == 0 {
            (f64::NAN, 0.0)
        } else {
            let freq = open as f64 / conditioned as f64;
            let sigma = (bound * (1.0 - bound) / conditioned as f64).sqrt();
            (freq, standardized(bound - freq, sigma).max(0.0))
        };
        worst = worst.max(dev);
        edge_rows.push(json!({
            "class": c, "conditioned": conditioned, "frequency": freq, "lower_bound": bound, "z": dev
        }));
    }
    Ok(CheckReport::new("domination", *params, worst, z, worst <= z).with_detail(json!({
        "lambda": lambda, "k": k, "n": n, "samples": samples,
        "site_frequency": site_freq, "reference_frequency": ref_freq, "site_z": site_dev,
        "beta_prime": beta_prime, "edges": edge_rows
    })))
}

fn standardized(diff: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        diff / sigma
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}
