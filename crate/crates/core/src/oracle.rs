//! Exact expectations by enumerating every configuration of a tiny block.
//!
//! A state is a pair of bit masks: bit `e` of the edge mask opens the `e`-th
//! pair of `Λ_n` in ascending lexicographic order, and bit `x` of the site mask
//! occupies site `x`. Weights are products of independent marginals, summed in
//! fixed-size chunks with compensated summation so results do not depend on
//! the thread count.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{usage, Error, Result};
use crate::estimators::exterior_weight;
use crate::lattice::{Lattice, Params};
use crate::report::CheckReport;
use crate::sampler::{edge_prob, purpose, sample_bonds, sprinkle, BondConfig, MixedConfig, SeedSpec, SiteSet};
use crate::stats::CompensatedSum;

/// Largest number of enumerated states.
pub const MAX_STATES: u64 = 1 << 24;
const MAX_VERTICES: usize = 8;
const CHUNK: u64 = 1 << 12;

/// How the site field is treated during enumeration.
#[derive(Debug, Clone)]
pub enum SiteMode {
    /// Every site occupied independently with probability `params.p`.
    Random,
    /// A fixed site field; only bonds are enumerated.
    Fixed(SiteSet),
}

/// Enumerator over all states of `Λ_n`.
#[derive(Debug, Clone)]
pub struct Oracle {
    lattice: Lattice,
    pairs: Vec<(u64, u64)>,
    edge_probs: Vec<f64>,
    site_prob: f64,
    fixed_sites: Option<u64>,
    vertices: usize,
}

/// One enumerated state with its cluster structure.
pub struct State<'a> {
    oracle: &'a Oracle,
    pub edge_mask: u64,
    pub site_mask: u64,
    root: [u8; MAX_VERTICES],
    size: [u8; MAX_VERTICES],
}

impl Oracle {
    pub fn new(params: &Params, n: u32, sites: SiteMode) -> Result<Self> {
        params.validate()?;
        let lattice = params.lattice(n)?;
        let vertices = lattice.volume();
        let too_large = || {
            Error::Resource(format!(
                "exact enumeration of Λ_{n} with L^d = {} exceeds 2^24 states",
                lattice.base()
            ))
        };
        if vertices as usize > MAX_VERTICES {
            return Err(too_large());
        }
        let pairs: Vec<(u64, u64)> = (1..=n).flat_map(|k| lattice.class_pairs(k).collect::<Vec<_>>()).collect();
        let mut pairs = pairs;
        pairs.sort_unstable();
        let edge_probs = pairs.iter().map(|&(x, y)| edge_prob(params, lattice.class_of(x, y))).collect();
        let (site_prob, fixed_sites) = match sites {
            SiteMode::Random if params.p >= 1.0 => (1.0, Some((1u64 << vertices) - 1)),
            SiteMode::Random => (params.p, None),
            SiteMode::Fixed(set) => {
                if set.len() != vertices {
                    return usage("fixed site field has the wrong length");
                }
                (1.0, Some(set.iter().fold(0u64, |m, x| m | (1 << x))))
            }
        };
        let site_bits = if fixed_sites.is_some() { 0 } else { vertices };
        if pairs.len() as u64 + site_bits > 24 {
            return Err(too_large());
        }
        Ok(Oracle { lattice, pairs, edge_probs, site_prob, fixed_sites, vertices: vertices as usize })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    /// Pairs of `Λ_n` in the order of edge-mask bits.
    pub fn pairs(&self) -> &[(u64, u64)] {
        &self.pairs
    }

    fn site_bits(&self) -> u32 {
        if self.fixed_sites.is_some() {
            0
        } else {
            self.vertices as u32
        }
    }

    pub fn state_count(&self) -> u64 {
        1u64 << (self.pairs.len() as u32 + self.site_bits())
    }

    /// Edge mask of a configuration of the same lattice.
    pub fn edge_mask(&self, config: &BondConfig) -> u64 {
        self.pairs
            .iter()
            .enumerate()
            .filter(|(_, &(x, y))| config.is_open(x, y))
            .fold(0u64, |m, (i, _)| m | (1 << i))
    }

    fn weight(&self, edge_mask: u64, site_mask: u64) -> f64 {
        let mut w = 1.0;
        for (i, &p) in self.edge_probs.iter().enumerate() {
            w *= if edge_mask >> i & 1 == 1 { p } else { 1.0 - p };
        }
        if self.fixed_sites.is_none() {
            for x in 0..self.vertices {
                w *= if site_mask >> x & 1 == 1 { self.site_prob } else { 1.0 - self.site_prob };
            }
        }
        w
    }

    fn state(&self, index: u64) -> State<'_> {
        let edge_bits = self.pairs.len() as u32;
        let edge_mask = index & ((1u64 << edge_bits) - 1);
        let site_mask = match self.fixed_sites {
            Some(m) => m,
            None => index >> edge_bits,
        };
        State::new(self, edge_mask, site_mask)
    }

    /// `Σ_states weight · f(state)` for a vector-valued `f` of length `len`.
    pub fn expect_vec<F>(&self, len: usize, f: F) -> Vec<f64>
    where
        F: Fn(&State<'_>, &mut [f64]) + Sync,
    {
        let total = self.state_count();
        let chunks = total.div_ceil(CHUNK);
        let partials: Vec<Vec<CompensatedSum>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![CompensatedSum::default(); len];
                let mut buf = vec![0.0; len];
                for index in c * CHUNK..((c + 1) * CHUNK).min(total) {
                    let state = self.state(index);
                    let w = self.weight(state.edge_mask, state.site_mask);
                    if w == 0.0 {
                        continue;
                    }
                    buf.iter_mut().for_each(|b| *b = 0.0);
                    f(&state, &mut buf);
                    for (a, &b) in acc.iter_mut().zip(&buf) {
                        a.add(w * b);
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![CompensatedSum::default(); len];
        for part in &partials {
            for (o, p) in out.iter_mut().zip(part) {
                o.merge(p);
            }
        }
        out.iter().map(|s| s.value()).collect()
    }

    pub fn expect<F>(&self, f: F) -> f64
    where
        F: Fn(&State<'_>) -> f64 + Sync,
    {
        self.expect_vec(1, |s, out| out[0] = f(s))[0]
    }

    /// Probability of every edge mask, summed over site fields.
    pub fn edge_law(&self) -> Result<Vec<f64>> {
        if self.pairs.len() > 16 {
            return Err(Error::Resource(format!("law table over 2^{} bond states", self.pairs.len())));
        }
        let len = 1usize << self.pairs.len();
        Ok(self.expect_vec(len, |s, out| out[s.edge_mask as usize] = 1.0))
    }

    /// All connection probabilities and cluster statistics in one pass.
    pub fn summary(&self) -> ExactSummary {
        let v = self.vertices;
        // Layout: [total, conn (v*v), kmax law (v+1), second moment].
        let len = 1 + v * v + (v + 1) + 1;
        let out = self.expect_vec(len, |s, out| {
            out[0] = 1.0;
            for x in 0..v {
                for y in 0..v {
                    if s.connected(x as u64, y as u64) {
                        out[1 + x * v + y] = 1.0;
                    }
                }
            }
            let m = s.kmax_size();
            out[1 + v * v + m as usize] = 1.0;
            out[len - 1] = (m * m) as f64 / v as f64;
        });
        let connection: Vec<Vec<f64>> = (0..v).map(|x| out[1 + x * v..1 + (x + 1) * v].to_vec()).collect();
        let chi = connection[0].iter().sum();
        let by_class = (0..=self.lattice.scale())
            .map(|c| if c == 0 { connection[0][0] } else { connection[0][self.lattice.block_volume(c - 1) as usize] })
            .collect();
        ExactSummary {
            total_weight: out[0],
            chi,
            by_class,
            connection,
            kmax_law: out[1 + v * v..1 + v * v + v + 1].to_vec(),
            second_moment: out[len - 1],
        }
    }
}

/// Exact cluster statistics of `Λ_n`.
#[derive(Debug, Clone, Serialize)]
pub struct ExactSummary {
    pub total_weight: f64,
    /// `E|K_0|`.
    pub chi: f64,
    /// `by_class[c] = P(0 ↔ x)` for any `x` at distance class `c`.
    pub by_class: Vec<f64>,
    /// `connection[x][y] = P(x ↔ y)`; the diagonal holds occupation probabilities.
    pub connection: Vec<Vec<f64>>,
    /// `kmax_law[s] = P(|K_max(Λ_n)| = s)`.
    pub kmax_law: Vec<f64>,
    /// `E|K_max|² / |Λ_n|`.
    pub second_moment: f64,
}

impl<'a> State<'a> {
    fn new(oracle: &'a Oracle, edge_mask: u64, site_mask: u64) -> Self {
        let mut root = [0u8; MAX_VERTICES];
        for (i, r) in root.iter_mut().enumerate() {
            *r = i as u8;
        }
        fn find(root: &mut [u8; MAX_VERTICES], mut x: u8) -> u8 {
            while root[x as usize] != x {
                x = root[x as usize];
            }
            x
        }
        for (i, &(x, y)) in oracle.pairs.iter().enumerate() {
            if edge_mask >> i & 1 == 1 && site_mask >> x & 1 == 1 && site_mask >> y & 1 == 1 {
                let (a, b) = (find(&mut root, x as u8), find(&mut root, y as u8));
                if a != b {
                    let (lo, hi) = (a.min(b), a.max(b));
                    root[hi as usize] = lo;
                }
            }
        }
        let mut size = [0u8; MAX_VERTICES];
        for x in 0..oracle.vertices {
            let r = find(&mut root, x as u8);
            root[x] = r;
            if site_mask >> x & 1 == 1 {
                size[r as usize] += 1;
            }
        }
        State { oracle, edge_mask, site_mask, root, size }
    }

    pub fn occupied(&self, x: u64) -> bool {
        self.site_mask >> x & 1 == 1
    }

    pub fn is_open(&self, x: u64, y: u64) -> bool {
        let (x, y) = (x.min(y), x.max(y));
        self.oracle
            .pairs
            .binary_search(&(x, y))
            .is_ok_and(|i| self.edge_mask >> i & 1 == 1)
    }

    pub fn connected(&self, x: u64, y: u64) -> bool {
        self.occupied(x) && self.occupied(y) && self.root[x as usize] == self.root[y as usize]
    }

    pub fn cluster_size(&self, x: u64) -> u64 {
        if self.occupied(x) {
            self.size[self.root[x as usize] as usize] as u64
        } else {
            0
        }
    }

    pub fn kmax_size(&self) -> u64 {
        self.size.iter().copied().max().unwrap_or(0) as u64
    }

    /// Size of the cluster of `x` using only sites in `within` (a bit mask).
    pub fn restricted_cluster(&self, x: u64, within: u64) -> u64 {
        let sub = State::new(self.oracle, self.edge_mask, self.site_mask & within);
        sub.cluster_size(x)
    }

    /// Connection `x ↔ y` using only sites in `within`.
    pub fn restricted_connected(&self, x: u64, y: u64, within: u64) -> bool {
        State::new(self.oracle, self.edge_mask, self.site_mask & within).connected(x, y)
    }

    pub fn to_config(&self) -> MixedConfig {
        let lattice = self.oracle.lattice.clone();
        let edges = self
            .oracle
            .pairs
            .iter()
            .enumerate()
            .filter(|(i, _)| self.edge_mask >> i & 1 == 1)
            .map(|(_, &p)| p);
        let omega = BondConfig::from_edges(lattice.clone(), edges).expect("enumerated pairs are valid");
        let eta = SiteSet::from_indices(lattice.volume(), (0..lattice.volume()).filter(|&x| self.occupied(x)))
            .expect("enumerated sites are valid");
        MixedConfig::new(eta, omega).expect("matching volumes")
    }
}

/// Exact `E|K_0|` on `Λ_n` under the pure bond model.
pub fn exact_chi(params: &Params, n: u32) -> Result<f64> {
    let oracle = Oracle::new(&params.density(1.0)?, n, SiteMode::Random)?;
    Ok(oracle.expect(|s| s.cluster_size(0) as f64))
}

/// `φ_β(Λ_m)` with the exact restricted susceptibility.
pub fn exact_phi(params: &Params, m: u32) -> Result<f64> {
    let w = exterior_weight(params, m)?.value;
    let chi = if m == 0 { 1.0 } else { exact_chi(params, m)? };
    Ok(w * chi)
}

/// Both sides of the chain `χ(Λ_n) <= χ(Λ_m) + φ(Λ_m) · sup_u Σ_x P(u ↔ x)`.
#[derive(Debug, Clone, Serialize)]
pub struct DctReport {
    pub m: u32,
    pub n: u32,
    pub chi_outer: f64,
    pub chi_inner: f64,
    /// Exterior weight summed over `Λ_n \ Λ_m` only.
    pub phi_finite: f64,
    pub phi_infinite: f64,
    pub sup_row: f64,
    pub rhs_finite: f64,
    pub rhs_infinite: f64,
    pub slack_finite: f64,
    pub slack_infinite: f64,
    pub pass: bool,
}

/// Evaluates the chain exactly for `m < n` on the pure bond model.
pub fn check_dct_chain(params: &Params, m: u32, n: u32) -> Result<DctReport> {
    if m >= n {
        return usage(format!("chain needs m < n, got m = {m}, n = {n}"));
    }
    let params = params.density(1.0)?;
    let oracle = Oracle::new(&params, n, SiteMode::Random)?;
    let lattice = oracle.lattice().clone();
    let v = lattice.volume() as usize;
    let inner = lattice.block_volume(m);
    let inner_mask = (1u64 << inner) - 1;
    // Layout: [P(0 ↔ x in Λ_m) for x in Λ_m, P(u ↔ x) for u, x in Λ_n].
    let len = inner as usize + v * v;
    let out = oracle.expect_vec(len, |s, out| {
        for x in 0..inner {
            if s.restricted_connected(0, x, inner_mask) {
                out[x as usize] = 1.0;
            }
        }
        for u in 0..v {
            for x in 0..v {
                if s.connected(u as u64, x as u64) {
                    out[inner as usize + u * v + x] = 1.0;
                }
            }
        }
    });
    let inner_conn = &out[..inner as usize];
    let chi_inner: f64 = inner_conn.iter().sum();
    let row = |u: usize| -> f64 { out[inner as usize + u * v..inner as usize + (u + 1) * v].iter().sum() };
    let chi_outer = row(0);
    let sup_row = (0..v).map(row).fold(0.0, f64::max);
    let mut phi_finite = CompensatedSum::default();
    for y in inner..v as u64 {
        for x in 0..inner {
            phi_finite.add(edge_prob(&params, lattice.class_of(x, y)) * inner_conn[x as usize]);
        }
    }
    let phi_finite = phi_finite.value();
    let phi_infinite = exterior_weight(&params, m)?.value * chi_inner;
    let rhs_finite = chi_inner + phi_finite * sup_row;
    let rhs_infinite = chi_inner + phi_infinite * sup_row;
    let slack_finite = rhs_finite - chi_outer;
    let slack_infinite = rhs_infinite - chi_outer;
    Ok(DctReport {
        m,
        n,
        chi_outer,
        chi_inner,
        phi_finite,
        phi_infinite,
        sup_row,
        rhs_finite,
        rhs_infinite,
        slack_finite,
        slack_infinite,
        pass: slack_finite >= -1e-10 && slack_infinite >= -1e-10,
    })
}

/// Total variation between the law of sprinkled samples and the exact law at
/// the target parameter, over all bond configurations of `Λ_n`.
pub fn check_sprinkle_law(
    params: &Params,
    n: u32,
    beta_from: f64,
    samples: u64,
    seed: &SeedSpec,
) -> Result<CheckReport> {
    let params = params.density(1.0)?;
    if !(beta_from >= 0.0 && beta_from <= params.beta) {
        return usage(format!("sprinkle base beta {beta_from} must lie in [0, {}]", params.beta));
    }
    let oracle = Oracle::new(&params, n, SiteMode::Random)?;
    let exact = oracle.edge_law()?;
    let base_params = params.beta(beta_from)?;
    let increment = params.beta(params.beta - beta_from)?;
    let seed = seed.child(purpose::SPRINKLE, 0);
    let masks: Vec<u64> = crate::estimators::parallel_map(samples, |t| {
        let trial = seed.with_trial(t);
        let base = sample_bonds(&base_params, n, &trial)?;
        let out = sprinkle(&base, &increment, &trial.child(2, 0))?;
        Ok(oracle.edge_mask(&out))
    })?;
    let mut counts = vec![0u64; exact.len()];
    for m in masks {
        counts[m as usize] += 1;
    }
    let mut residual: f64 = 0.0;
    for k in 1..=n.max(12) {
        residual = residual.max(crate::sampler::sprinkle_residual(&params, beta_from, params.beta, k)?);
    }
    let tv = 0.5
        * counts
            .iter()
            .zip(&exact)
            .map(|(&c, &p)| (c as f64 / samples as f64 - p).abs())
            .sum::<f64>();
    let threshold = 0.01;
    let pass = tv <= threshold && residual <= 1e-12;
    Ok(CheckReport::new("sprinkle", params, tv, threshold, pass).with_detail(json!({
        "n": n, "beta_from": beta_from, "samples": samples, "configurations": exact.len(),
        "identity_residual": residual
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(alpha: f64, beta: f64) -> Params {
        Params::new(1, 2, alpha, beta).unwrap()
    }

    #[test]
    fn weights_sum_to_one() {
        for &pr in &[1.0, 0.7] {
            let params = Params::with_density(1, 2, 1.0, 2.0, pr).unwrap();
            let oracle = Oracle::new(&params, 2, SiteMode::Random).unwrap();
            assert!((oracle.summary().total_weight - 1.0).abs() < 1e-14);
            let kmax: f64 = oracle.summary().kmax_law.iter().sum();
            assert!((kmax - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn lambda1_chi_closed_form() {
        // Two vertices joined with probability p_1: χ = 1 + p_1.
        let params = p(1.0, 3.0);
        let chi = exact_chi(&params, 1).unwrap();
        assert!((chi - 1.0 - edge_prob(&params, 1)).abs() < 1e-15);
    }

    #[test]
    fn connection_symmetric_by_class() {
        let oracle = Oracle::new(&p(1.0, 2.5), 2, SiteMode::Random).unwrap();
        let s = oracle.summary();
        // 0 ↔ 2 and 0 ↔ 3 are both class 2 and related by an automorphism.
        assert!((s.connection[0][2] - s.connection[0][3]).abs() < 1e-14);
        assert!((s.connection[0][1] - s.connection[2][3]).abs() < 1e-14);
        assert_eq!(s.by_class[2], s.connection[0][2]);
        for x in 0..4 {
            for y in 0..4 {
                assert!((s.connection[x][y] - s.connection[y][x]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn chi_monotone_in_beta() {
        let mut last = 0.0;
        for i in 0..20 {
            let chi = exact_chi(&p(1.0, i as f64 * 0.5), 2).unwrap();
            assert!(chi >= last - 1e-15);
            last = chi;
        }
        assert!((exact_chi(&p(1.0, 0.0), 2).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_sites_restrict_clusters() {
        let sites = SiteSet::from_indices(4, [0, 1]).unwrap();
        let oracle = Oracle::new(&p(1.0, 2.5), 2, SiteMode::Fixed(sites)).unwrap();
        let s = oracle.summary();
        let p1 = edge_prob(&p(1.0, 2.5), 1);
        assert!((s.chi - (1.0 + p1)).abs() < 1e-14);
        assert_eq!(s.connection[2][2], 0.0);
    }

    #[test]
    fn refuses_large_blocks() {
        assert!(matches!(Oracle::new(&p(1.0, 1.0), 3, SiteMode::Random), Err(Error::Resource(_))));
        assert!(Oracle::new(&Params::new(1, 3, 1.0, 1.0).unwrap(), 1, SiteMode::Random).is_ok());
    }

    #[test]
    fn dct_chain_holds() {
        for &alpha in &[0.5, 1.0, 2.0] {
            for &beta in &[0.1, 1.0, 4.0, 20.0] {
                for &(m, n) in &[(0, 1), (0, 2), (1, 2)] {
                    let r = check_dct_chain(&p(alpha, beta), m, n).unwrap();
                    assert!(r.pass, "{r:?}");
                }
                let r = check_dct_chain(&Params::new(1, 3, alpha, beta).unwrap(), 0, 1).unwrap();
                assert!(r.pass, "{r:?}");
            }
        }
    }

    #[test]
    fn chi_on_lambda_two_matches_independent_enumeration() {
        // Values from a separate brute-force enumeration of the 64 bond states.
        for &(beta, want) in &[
            (0.5, 1.1956990369470173),
            (1.0, 1.4043868088618845),
            (2.0, 1.8357323797019804),
            (4.0, 2.6143527803138973),
        ] {
            let got = exact_chi(&p(1.0, beta), 2).unwrap();
            assert!((got - want).abs() < 1e-13, "beta={beta}: {got} vs {want}");
        }
    }

    #[test]
    fn phi_on_lambda_one() {
        // W_1(1) (1 + p_1(1)) for d = α = 1, L = 2.
        let got = exact_phi(&p(1.0, 1.0), 1).unwrap();
        assert!((got - 0.2999490634992988).abs() < 1e-12, "{got}");
        assert_eq!(exact_phi(&p(1.0, 0.0), 1).unwrap(), 0.0);
    }

    #[test]
    fn chain_at_zero_and_large_beta() {
        let r = check_dct_chain(&p(1.0, 0.0), 1, 2).unwrap();
        assert!((r.chi_outer - 1.0).abs() < 1e-15 && r.pass);
        let r = check_dct_chain(&p(1.0, 50.0), 1, 2).unwrap();
        assert!(r.chi_outer > 3.5 && r.pass);
    }

    #[test]
    fn sprinkle_law_matches_exact() {
        let r = check_sprinkle_law(&p(1.0, 2.0), 2, 1.0, 200_000, &SeedSpec::new(1)).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn exact_phi_at_zero_scale() {
        let params = p(1.0, 2.0);
        let w = exterior_weight(&params, 0).unwrap().value;
        assert_eq!(exact_phi(&params, 0).unwrap(), w);
    }
}
