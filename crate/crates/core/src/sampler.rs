//! Sampling `ω ~ P_β` on `Λ_n` and mixed configurations `(η, ω) ~ P_{β,p}`.
//!
//! Every pair at distance `L^k` is open with the same probability `p_k`, so a
//! class holds a `Binomial(M_k, p_k)` number of open edges placed uniformly
//! without replacement among its `M_k` pairs. Sampling the count and then the
//! placement costs time proportional to the number of open edges rather than
//! to `|E_n|`. A class with `p_k > 1/2` samples its closed pairs instead and
//! stores the open set as their complement.

use base64::Engine as _;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::lattice::{ClassPairs, Lattice, Params};

/// `p_k = 1 - exp(-β L^{-k(d+α)})`.
pub fn edge_prob(params: &Params, k: u32) -> f64 {
    -(-params.beta * class_weight(params, k)).exp_m1()
}

/// `1 - p_k`, computed directly so that it keeps full relative precision.
pub fn closed_prob(params: &Params, k: u32) -> f64 {
    (-params.beta * class_weight(params, k)).exp()
}

/// `L^{-k(d+α)}`, the kernel `‖x-y‖^{-d-α}` at distance `L^k`.
pub fn class_weight(params: &Params, k: u32) -> f64 {
    (params.side as f64).powf(-(k as f64) * (params.d as f64 + params.alpha))
}

/// Stream purposes for [`SeedSpec`].
pub mod purpose {
    pub const BONDS: u64 = 0x626f_6e64;
    pub const SPRINKLE: u64 = 0x7370_726b;
    pub const CHI: u64 = 0x6368_6900;
    pub const SECOND_MOMENT: u64 = 0x6d32_0000;
    pub const PHI: u64 = 0x7068_6900;
    pub const TAIL: u64 = 0x7461_696c;
    pub const KMAX: u64 = 0x6b6d_6178;
    pub const RENORM: u64 = 0x726e_726d;
    pub const INDUCTION: u64 = 0x696e_6463;
}

/// Stream index reserved for the site field `η`; bond classes use `1..=n`.
pub const SITE_STREAM: u64 = u64::MAX;

#[inline]
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seed: the random stream for `(master, purpose, trial, class)`
/// is a pure function of those labels, so results never depend on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master: u64,
    pub purpose: u64,
    pub trial: u64,
}

impl SeedSpec {
    pub fn new(master: u64) -> Self {
        SeedSpec { master, purpose: purpose::BONDS, trial: 0 }
    }

    pub fn with_purpose(self, purpose: u64) -> Self {
        SeedSpec { purpose, ..self }
    }

    pub fn with_trial(self, trial: u64) -> Self {
        SeedSpec { trial, ..self }
    }

    /// A purpose derived from this one and an index, e.g. one per scale of a search.
    pub fn child(self, tag: u64, index: u64) -> Self {
        SeedSpec {
            purpose: splitmix64(self.purpose ^ splitmix64(tag ^ splitmix64(index))),
            ..self
        }
    }

    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut h = splitmix64(self.master);
        h = splitmix64(h ^ self.purpose);
        h = splitmix64(h ^ self.trial);
        h = splitmix64(h ^ stream);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_mut(8) {
            h = splitmix64(h);
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

/// A subset of `Λ_n`, used for the site field `η` and for restriction sets.
#[derive(Debug, Clone)]
pub struct SiteSet {
    len: u64,
    /// `None` means every site is present.
    words: Option<Vec<u64>>,
}

impl SiteSet {
    pub fn full(len: u64) -> Self {
        SiteSet { len, words: None }
    }

    pub fn empty(len: u64) -> Self {
        SiteSet { len, words: Some(vec![0; len.div_ceil(64) as usize]) }
    }

    pub fn from_indices(len: u64, indices: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut set = SiteSet::empty(len);
        for i in indices {
            if i >= len {
                return usage(format!("site {i} outside a set of {len} sites"));
            }
            set.insert(i);
        }
        Ok(set)
    }

    /// Sites in `range`; handy for blocks.
    pub fn from_range(len: u64, range: std::ops::Range<u64>) -> Self {
        if range.start == 0 && range.end >= len {
            return SiteSet::full(len);
        }
        let mut set = SiteSet::empty(len);
        range.for_each(|i| set.insert(i));
        set
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn is_full(&self) -> bool {
        self.words.is_none() || self.count() == self.len
    }

    #[inline]
    pub fn contains(&self, i: u64) -> bool {
        match &self.words {
            None => i < self.len,
            Some(w) => i < self.len && (w[(i / 64) as usize] >> (i % 64)) & 1 == 1,
        }
    }

    pub fn insert(&mut self, i: u64) {
        if let Some(w) = &mut self.words {
            w[(i / 64) as usize] |= 1 << (i % 64);
        }
    }

    pub fn count(&self) -> u64 {
        match &self.words {
            None => self.len,
            Some(w) => w.iter().map(|x| x.count_ones() as u64).sum(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.len).filter(|&i| self.contains(i))
    }

    pub fn is_subset(&self, other: &SiteSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    /// Bitfield bytes, site `i` at bit `i % 8` of byte `i / 8`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = vec![0u8; self.len.div_ceil(8) as usize];
        for i in self.iter() {
            bytes[(i / 8) as usize] |= 1 << (i % 8);
        }
        bytes
    }

    pub fn from_bytes(len: u64, bytes: &[u8]) -> Result<Self> {
        if bytes.len() as u64 != len.div_ceil(8) {
            return usage(format!("bitfield of {} bytes does not describe {len} sites", bytes.len()));
        }
        let ones = (0..len).filter(|&i| (bytes[(i / 8) as usize] >> (i % 8)) & 1 == 1);
        SiteSet::from_indices(len, ones)
    }
}

impl PartialEq for SiteSet {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && (0..self.len).all(|i| self.contains(i) == other.contains(i))
    }
}

impl Eq for SiteSet {}

/// Open edges of one distance class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassEdges {
    /// The listed pairs are open, everything else closed.
    Open(Vec<(u64, u64)>),
    /// Every class pair is open except the listed ones.
    AllBut(Vec<(u64, u64)>),
}

impl ClassEdges {
    fn contains(&self, pair: (u64, u64)) -> bool {
        match self {
            ClassEdges::Open(v) => v.binary_search(&pair).is_ok(),
            ClassEdges::AllBut(v) => v.binary_search(&pair).is_err(),
        }
    }
}

/// Iterator over the open pairs of a class in lexicographic order.
pub enum OpenPairs<'a> {
    Listed(std::slice::Iter<'a, (u64, u64)>),
    Complement {
        pairs: ClassPairs<'a>,
        closed: &'a [(u64, u64)],
    },
}

impl Iterator for OpenPairs<'_> {
    type Item = (u64, u64);

    fn next(&mut self) -> Option<(u64, u64)> {
        match self {
            OpenPairs::Listed(it) => it.next().copied(),
            OpenPairs::Complement { pairs, closed } => loop {
                let pair = pairs.next()?;
                match closed.first() {
                    Some(&c) if c == pair => *closed = &closed[1..],
                    _ => return Some(pair),
                }
            },
        }
    }
}

/// A bond configuration `ω` on `Λ_n`, grouped by distance class.
///
/// Every stored pair `(x, y)` has `x < y`, lies in its class, and appears once;
/// lists are sorted.
#[derive(Debug, Clone)]
pub struct BondConfig {
    lattice: Lattice,
    /// `classes[k - 1]` holds class `k`.
    classes: Vec<ClassEdges>,
}

impl BondConfig {
    pub fn empty(lattice: Lattice) -> Self {
        let classes = (0..lattice.scale()).map(|_| ClassEdges::Open(Vec::new())).collect();
        BondConfig { lattice, classes }
    }

    /// Builds a configuration from explicit open edges, in any order or orientation.
    pub fn from_edges(lattice: Lattice, edges: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let mut lists: Vec<Vec<(u64, u64)>> = vec![Vec::new(); lattice.scale() as usize];
        let vol = lattice.volume();
        for (a, b) in edges {
            if a == b || a >= vol || b >= vol {
                return usage(format!("invalid edge ({a}, {b}) in Λ_{}", lattice.scale()));
            }
            let pair = (a.min(b), a.max(b));
            lists[lattice.class_of(a, b) as usize - 1].push(pair);
        }
        for list in &mut lists {
            list.sort_unstable();
            list.dedup();
        }
        let classes = lists.into_iter().map(ClassEdges::Open).collect();
        Ok(BondConfig { lattice, classes })
    }

    /// All pairs of `Λ_n` open.
    pub fn complete(lattice: Lattice) -> Self {
        let classes = (0..lattice.scale()).map(|_| ClassEdges::AllBut(Vec::new())).collect();
        BondConfig { lattice, classes }
    }

    pub(crate) fn from_classes(lattice: Lattice, classes: Vec<ClassEdges>) -> Self {
        debug_assert_eq!(classes.len(), lattice.scale() as usize);
        BondConfig { lattice, classes }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn scale(&self) -> u32 {
        self.lattice.scale()
    }

    pub fn class_edges(&self, k: u32) -> &ClassEdges {
        &self.classes[k as usize - 1]
    }

    pub fn open_count(&self, k: u32) -> u128 {
        match self.class_edges(k) {
            ClassEdges::Open(v) => v.len() as u128,
            ClassEdges::AllBut(v) => self.lattice.pair_count(k).unwrap() - v.len() as u128,
        }
    }

    pub fn total_open(&self) -> u128 {
        (1..=self.scale()).map(|k| self.open_count(k)).sum()
    }

    pub fn is_open(&self, x: u64, y: u64) -> bool {
        let k = self.lattice.class_of(x, y);
        k != 0 && self.class_edges(k).contains((x.min(y), x.max(y)))
    }

    pub fn open_pairs(&self, k: u32) -> OpenPairs<'_> {
        match self.class_edges(k) {
            ClassEdges::Open(v) => OpenPairs::Listed(v.iter()),
            ClassEdges::AllBut(v) => OpenPairs::Complement {
                pairs: self.lattice.class_pairs(k),
                closed: v,
            },
        }
    }

    /// Every open edge, ascending lexicographic.
    pub fn edges(&self) -> Vec<(u64, u64)> {
        let mut all: Vec<_> = (1..=self.scale()).flat_map(|k| self.open_pairs(k)).collect();
        all.sort_unstable();
        all
    }

    /// Equality of open-edge sets, independent of the storage form of each class.
    pub fn same_edges(&self, other: &BondConfig) -> bool {
        self.lattice == other.lattice
            && (1..=self.scale()).all(|k| match (self.class_edges(k), other.class_edges(k)) {
                (ClassEdges::Open(a), ClassEdges::Open(b)) | (ClassEdges::AllBut(a), ClassEdges::AllBut(b)) => a == b,
                _ => self.open_pairs(k).eq(other.open_pairs(k)),
            })
    }

    /// Whether every open edge of `other` is open here.
    pub fn contains(&self, other: &BondConfig) -> bool {
        self.lattice == other.lattice
            && (1..=self.scale()).all(|k| match (self.class_edges(k), other.class_edges(k)) {
                (ClassEdges::AllBut(sup), ClassEdges::AllBut(sub)) => is_sorted_subset(sup, sub),
                (ClassEdges::Open(sup), ClassEdges::Open(sub)) => is_sorted_subset(sub, sup),
                (ClassEdges::AllBut(closed), ClassEdges::Open(sub)) => disjoint_sorted(closed, sub),
                (ClassEdges::Open(_), ClassEdges::AllBut(_)) => {
                    other.open_pairs(k).all(|(x, y)| self.class_edges(k).contains((x, y)))
                }
            })
    }

    /// Edge-set union.
    pub fn union(&self, other: &BondConfig) -> Result<BondConfig> {
        if self.lattice != other.lattice {
            return usage("union of configurations on different lattices");
        }
        let classes = self
            .classes
            .iter()
            .zip(&other.classes)
            .map(|(a, b)| match (a, b) {
                (ClassEdges::Open(a), ClassEdges::Open(b)) => ClassEdges::Open(merge_sorted(a, b)),
                (ClassEdges::AllBut(c), ClassEdges::Open(o)) | (ClassEdges::Open(o), ClassEdges::AllBut(c)) => {
                    ClassEdges::AllBut(difference_sorted(c, o))
                }
                (ClassEdges::AllBut(a), ClassEdges::AllBut(b)) => ClassEdges::AllBut(intersect_sorted(a, b)),
            })
            .collect();
        Ok(BondConfig { lattice: self.lattice.clone(), classes })
    }

    /// Neighbour lists of every vertex.
    pub fn adjacency(&self) -> Adjacency {
        let vol = self.lattice.volume() as usize;
        let mut degree = vec![0usize; vol + 1];
        for k in 1..=self.scale() {
            for (x, y) in self.open_pairs(k) {
                degree[x as usize] += 1;
                degree[y as usize] += 1;
            }
        }
        let mut offsets = vec![0usize; vol + 1];
        for i in 0..vol {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0u64; offsets[vol]];
        for k in 1..=self.scale() {
            for (x, y) in self.open_pairs(k) {
                targets[fill[x as usize]] = y;
                fill[x as usize] += 1;
                targets[fill[y as usize]] = x;
                fill[y as usize] += 1;
            }
        }
        for i in 0..vol {
            targets[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Adjacency { offsets, targets }
    }
}

/// Compressed neighbour lists built from a [`BondConfig`].
#[derive(Debug, Clone)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<u64>,
}

impl Adjacency {
    pub fn neighbors(&self, x: u64) -> &[u64] {
        &self.targets[self.offsets[x as usize]..self.offsets[x as usize + 1]]
    }
}

fn merge_sorted(a: &[(u64, u64)], b: &[(u64, u64)]) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn difference_sorted(a: &[(u64, u64)], b: &[(u64, u64)]) -> Vec<(u64, u64)> {
    a.iter().copied().filter(|p| b.binary_search(p).is_err()).collect()
}

fn intersect_sorted(a: &[(u64, u64)], b: &[(u64, u64)]) -> Vec<(u64, u64)> {
    a.iter().copied().filter(|p| b.binary_search(p).is_ok()).collect()
}

fn is_sorted_subset(sub: &[(u64, u64)], sup: &[(u64, u64)]) -> bool {
    sub.iter().all(|p| sup.binary_search(p).is_ok())
}

fn disjoint_sorted(a: &[(u64, u64)], b: &[(u64, u64)]) -> bool {
    b.iter().all(|p| a.binary_search(p).is_err())
}

/// A sample of the mixed site-bond model: an edge is effectively open iff it is
/// open in `omega` and both endpoints are occupied in `eta`.
#[derive(Debug, Clone)]
pub struct MixedConfig {
    pub eta: SiteSet,
    pub omega: BondConfig,
}

impl MixedConfig {
    /// Pure bond configuration: every site occupied.
    pub fn pure(omega: BondConfig) -> Self {
        MixedConfig { eta: SiteSet::full(omega.lattice().volume()), omega }
    }

    pub fn new(eta: SiteSet, omega: BondConfig) -> Result<Self> {
        if eta.len() != omega.lattice().volume() {
            return usage("site field and bond configuration have different volumes");
        }
        Ok(MixedConfig { eta, omega })
    }

    pub fn lattice(&self) -> &Lattice {
        self.omega.lattice()
    }

    pub fn effective_open(&self, x: u64, y: u64) -> bool {
        self.eta.contains(x) && self.eta.contains(y) && self.omega.is_open(x, y)
    }
}

/// Guards applied before sampling.
#[derive(Debug, Clone, Copy)]
pub struct SampleLimits {
    /// Refuse when `Σ_k M_k p_k` exceeds this.
    pub max_expected_open: f64,
}

impl Default for SampleLimits {
    fn default() -> Self {
        SampleLimits { max_expected_open: 1.5e8 }
    }
}

/// `Σ_k M_k p_k` for `Λ_n`.
pub fn expected_open_edges(params: &Params, lattice: &Lattice) -> f64 {
    (1..=lattice.scale())
        .map(|k| lattice.pair_count(k).unwrap() as f64 * edge_prob(params, k))
        .sum()
}

pub fn sample_bonds(params: &Params, n: u32, seed: &SeedSpec) -> Result<BondConfig> {
    sample_bonds_with(params, n, seed, &SampleLimits::default())
}

pub fn sample_bonds_with(params: &Params, n: u32, seed: &SeedSpec, limits: &SampleLimits) -> Result<BondConfig> {
    params.validate()?;
    let lattice = params.lattice(n)?;
    let expected = expected_open_edges(params, &lattice);
    if expected > limits.max_expected_open {
        return Err(Error::Resource(format!(
            "expected {expected:.3e} open edges exceeds the cap {:.3e}",
            limits.max_expected_open
        )));
    }
    let classes = (1..=n)
        .map(|k| {
            let mut rng = seed.rng(k as u64);
            sample_class(params, &lattice, k, &mut rng)
        })
        .collect();
    Ok(BondConfig::from_classes(lattice, classes))
}

fn sample_class<R: Rng>(params: &Params, lattice: &Lattice, k: u32, rng: &mut R) -> ClassEdges {
    let pairs = lattice.pair_count(k).unwrap();
    let p = edge_prob(params, k);
    if p <= 0.5 {
        let count = binomial_u128(rng, pairs, p);
        ClassEdges::Open(place_pairs(lattice, k, pairs, count, rng))
    } else {
        let q = closed_prob(params, k);
        let count = binomial_u128(rng, pairs, q);
        ClassEdges::AllBut(place_pairs(lattice, k, pairs, count, rng))
    }
}

/// Exact `Binomial(trials, p)` for trial counts beyond `u64`, by splitting
/// into independent chunks with the same success probability.
pub fn binomial_u128<R: Rng + ?Sized>(rng: &mut R, trials: u128, p: f64) -> u128 {
    if p <= 0.0 || trials == 0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    let mut remaining = trials;
    let mut total = 0u128;
    while remaining > 0 {
        let chunk = remaining.min(u64::MAX as u128) as u64;
        let dist = Binomial::new(chunk, p).expect("valid binomial parameters");
        total += dist.sample(rng) as u128;
        remaining -= chunk as u128;
    }
    total
}

/// `count` distinct class-`k` pairs, uniform among all subsets of that size,
/// returned sorted.
fn place_pairs<R: Rng>(lattice: &Lattice, k: u32, pairs: u128, count: u128, rng: &mut R) -> Vec<(u64, u64)> {
    if count == 0 {
        return Vec::new();
    }
    if pairs <= 2 * count {
        // Dense: pick sorted indices into the lexicographic pair list.
        let mut chosen = index::sample(rng, pairs as usize, count as usize).into_vec();
        chosen.sort_unstable();
        let mut wanted = chosen.into_iter().peekable();
        let mut out = Vec::with_capacity(count as usize);
        for (i, pair) in lattice.class_pairs(k).enumerate() {
            match wanted.peek() {
                Some(&w) if w == i => {
                    out.push(pair);
                    wanted.next();
                }
                Some(_) => {}
                None => break,
            }
        }
        return out;
    }
    // Sparse: draw uniform ordered pairs (each unordered pair has two
    // preimages), canonicalize, and redraw duplicates until `count` remain.
    let count = count as usize;
    let vol = lattice.volume();
    let draw = |rng: &mut R| {
        let x = rng.random_range(0..vol);
        let y = lattice.class_partner(x, k, rng);
        (x.min(y), x.max(y))
    };
    if vol <= 1 << 32 {
        let mut keys: Vec<u64> = Vec::with_capacity(count);
        loop {
            while keys.len() < count {
                let (x, y) = draw(rng);
                keys.push(x << 32 | y);
            }
            keys.sort_unstable();
            keys.dedup();
            if keys.len() == count {
                return keys.into_iter().map(|key| (key >> 32, key & 0xffff_ffff)).collect();
            }
        }
    }
    let mut chosen = Vec::with_capacity(count);
    loop {
        while chosen.len() < count {
            chosen.push(draw(rng));
        }
        chosen.sort_unstable();
        chosen.dedup();
        if chosen.len() == count {
            return chosen;
        }
    }
}

pub fn sample_mixed(params: &Params, n: u32, seed: &SeedSpec) -> Result<MixedConfig> {
    sample_mixed_with(params, n, seed, &SampleLimits::default())
}

pub fn sample_mixed_with(params: &Params, n: u32, seed: &SeedSpec, limits: &SampleLimits) -> Result<MixedConfig> {
    let omega = sample_bonds_with(params, n, seed, limits)?;
    let eta = sample_sites(params.p, omega.lattice().volume(), seed);
    Ok(MixedConfig { eta, omega })
}

/// `η ~ Q_p`: every site independently occupied with probability `p`.
pub fn sample_sites(p: f64, len: u64, seed: &SeedSpec) -> SiteSet {
    if p >= 1.0 {
        return SiteSet::full(len);
    }
    let mut set = SiteSet::empty(len);
    if p <= 0.0 {
        return set;
    }
    let mut rng = seed.rng(SITE_STREAM);
    for i in 0..len {
        if rng.random_bool(p) {
            set.insert(i);
        }
    }
    set
}

/// Superposes an independent sample at parameter `increment.beta` onto `base`.
///
/// Since `1 - e^{-β₁w} e^{-(β₂-β₁)w} = 1 - e^{-β₂w}`, a base sampled at `β₁`
/// sprinkled with increment `β₂ - β₁` is distributed as a sample at `β₂`.
pub fn sprinkle(base: &BondConfig, increment: &Params, seed: &SeedSpec) -> Result<BondConfig> {
    let extra = sample_bonds(increment, base.scale(), seed)?;
    if extra.lattice() != base.lattice() {
        return usage("sprinkle parameters describe a different lattice than the base");
    }
    let out = base.union(&extra)?;
    assert!(out.contains(base), "sprinkled configuration lost a base edge");
    Ok(out)
}

/// `|1 - (1 - p_k(β₁))(1 - p_k(β₂ - β₁)) - p_k(β₂)|`, zero in exact arithmetic.
pub fn sprinkle_residual(params: &Params, beta_from: f64, beta_to: f64, k: u32) -> Result<f64> {
    let at = |b: f64| -> Result<f64> { Ok(edge_prob(&params.beta(b)?, k)) };
    let lhs = 1.0 - (1.0 - at(beta_from)?) * (1.0 - at(beta_to - beta_from)?);
    Ok((lhs - at(beta_to)?).abs())
}

/// Raises a configuration sampled at `beta_from` to `beta_to`.
pub fn sprinkle_to(base: &BondConfig, params: &Params, beta_from: f64, beta_to: f64, seed: &SeedSpec) -> Result<BondConfig> {
    if !(beta_to >= beta_from) {
        return usage(format!("cannot sprinkle down from beta {beta_from} to {beta_to}"));
    }
    sprinkle(base, &params.beta(beta_to - beta_from)?, seed)
}

/// Canonical JSON dump of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigDump {
    pub params: Params,
    pub n: u32,
    pub seed: SeedSpec,
    pub edges: Vec<[u64; 2]>,
    /// Base64 bitfield (site `i` at bit `i % 8` of byte `i / 8`) or `"all-ones"`.
    pub eta: String,
}

pub const ALL_ONES: &str = "all-ones";

impl ConfigDump {
    pub fn new(params: &Params, seed: &SeedSpec, config: &MixedConfig) -> Self {
        let eta = if config.eta.is_full() {
            ALL_ONES.to_string()
        } else {
            base64::engine::general_purpose::STANDARD.encode(config.eta.to_bytes())
        };
        ConfigDump {
            params: *params,
            n: config.omega.scale(),
            seed: *seed,
            edges: config.omega.edges().into_iter().map(|(x, y)| [x, y]).collect(),
            eta,
        }
    }

    pub fn to_config(&self) -> Result<MixedConfig> {
        let lattice = self.params.lattice(self.n)?;
        let vol = lattice.volume();
        let omega = BondConfig::from_edges(lattice, self.edges.iter().map(|e| (e[0], e[1])))?;
        let eta = if self.eta == ALL_ONES {
            SiteSet::full(vol)
        } else {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(&self.eta)
                .map_err(|e| Error::Usage(format!("bad eta bitfield: {e}")))?;
            SiteSet::from_bytes(vol, &bytes)?
        };
        MixedConfig::new(eta, omega)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{binomial_pmf, chi_square_p_value, pearson_chi_square};
    use proptest::prelude::*;

    fn params(beta: f64) -> Params {
        Params::new(1, 2, 1.0, beta).unwrap()
    }

    #[test]
    fn edge_prob_examples() {
        assert_eq!(edge_prob(&params(0.0), 1), 0.0);
        assert_eq!(edge_prob(&params(0.0), 7), 0.0);
        let expect = 1.0 - (-0.25f64).exp();
        assert!((edge_prob(&params(1.0), 1) - expect).abs() < 1e-15);
        assert!((edge_prob(&params(1.0), 1) - 0.2211992).abs() < 1e-7);
        let mut last = 0.0;
        for beta in [0.1, 1.0, 10.0, 100.0, 1000.0] {
            let p = edge_prob(&params(beta), 2);
            assert!(p > last);
            last = p;
        }
        assert!(last > 1.0 - 1e-12);
    }

    #[test]
    fn edge_prob_keeps_relative_precision_for_tiny_weights() {
        let p = params(1e-3);
        let k = 40;
        let x = p.beta * class_weight(&p, k);
        // 1 - e^{-x} = x - x^2/2 + ... for tiny x.
        let series = x - x * x / 2.0;
        assert!(((edge_prob(&p, k) - series) / series).abs() < 1e-12);
    }

    #[test]
    fn zero_beta_gives_empty_config() {
        let c = sample_bonds(&params(0.0), 6, &SeedSpec::new(3)).unwrap();
        assert_eq!(c.total_open(), 0);
    }

    #[test]
    fn stored_pairs_respect_invariants() {
        for beta in [0.5, 3.0, 40.0] {
            let c = sample_bonds(&params(beta), 7, &SeedSpec::new(11)).unwrap();
            for k in 1..=7 {
                let list = match c.class_edges(k) {
                    ClassEdges::Open(v) | ClassEdges::AllBut(v) => v,
                };
                assert!(list.windows(2).all(|w| w[0] < w[1]));
                assert!(list.iter().all(|&(x, y)| x < y && c.lattice().class_of(x, y) == k));
            }
        }
    }

    #[test]
    fn large_beta_uses_complement_storage() {
        let c = sample_bonds(&params(50.0), 4, &SeedSpec::new(1)).unwrap();
        assert!(matches!(c.class_edges(1), ClassEdges::AllBut(_)));
        let listed: Vec<_> = c.open_pairs(1).collect();
        assert!(listed.iter().all(|&(x, y)| c.is_open(x, y)));
        assert_eq!(listed.len() as u128, c.open_count(1));
    }

    #[test]
    fn class_counts_follow_the_binomial_law() {
        // d=1, L=2, n=3: M_1 = 4, M_2 = 8, M_3 = 16.
        let p = params(3.0);
        let lat = p.lattice(3).unwrap();
        let trials = 100_000u64;
        let mut hist: Vec<Vec<u64>> = (1..=3).map(|k| vec![0; lat.pair_count(k).unwrap() as usize + 1]).collect();
        for t in 0..trials {
            let c = sample_bonds(&p, 3, &SeedSpec::new(5).with_trial(t)).unwrap();
            for k in 1..=3u32 {
                hist[k as usize - 1][c.open_count(k) as usize] += 1;
            }
        }
        for k in 1..=3u32 {
            let m = lat.pair_count(k).unwrap() as u64;
            let pmf = binomial_pmf(m, edge_prob(&p, k));
            let (stat, dof) = pearson_chi_square(&hist[k as usize - 1], &pmf, 5.0);
            let pv = chi_square_p_value(stat, dof);
            assert!(pv > 1e-3, "class {k}: chi2 = {stat}, dof = {dof}, p = {pv}");
        }
    }

    #[test]
    fn placement_is_uniform_over_pairs() {
        // Class 3 of Λ_3 has 16 pairs; at beta = 4 the mean count is ~0.98.
        let p = params(4.0);
        let lat = p.lattice(3).unwrap();
        let pairs: Vec<_> = lat.class_pairs(3).collect();
        let mut hits = vec![0u64; pairs.len()];
        let trials = 100_000;
        for t in 0..trials {
            let c = sample_bonds(&p, 3, &SeedSpec::new(8).with_trial(t)).unwrap();
            for e in c.open_pairs(3) {
                hits[pairs.binary_search(&e).unwrap()] += 1;
            }
        }
        let probs = vec![1.0 / pairs.len() as f64; pairs.len()];
        let (stat, dof) = pearson_chi_square(&hits, &probs, 5.0);
        assert!(chi_square_p_value(stat, dof) > 1e-3, "chi2 = {stat}");
    }

    #[test]
    fn mean_count_and_marginal_on_lambda_two() {
        let p = params(4.0);
        let trials = 100_000u64;
        let (mut total, mut hits) = (0u64, 0u64);
        for t in 0..trials {
            let c = sample_bonds(&p, 2, &SeedSpec::new(21).with_trial(t)).unwrap();
            total += c.open_count(2) as u64;
            hits += c.is_open(0, 3) as u64;
        }
        let p2 = edge_prob(&p, 2);
        let mean = 4.0 * p2;
        assert!((mean - 0.884_796_868).abs() < 1e-8);
        let sigma_mean = (4.0 * p2 * (1.0 - p2) / trials as f64).sqrt();
        assert!((total as f64 / trials as f64 - mean).abs() < 4.0 * sigma_mean);
        let sigma = (p2 * (1.0 - p2) / trials as f64).sqrt();
        assert!((hits as f64 / trials as f64 - p2).abs() < 4.0 * sigma);
    }

    #[test]
    fn mixed_site_density() {
        let full = Params::with_density(1, 2, 1.0, 1.0, 1.0).unwrap();
        assert!(sample_mixed(&full, 3, &SeedSpec::new(1)).unwrap().eta.is_full());
        let none = Params::with_density(1, 2, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(sample_mixed(&none, 3, &SeedSpec::new(1)).unwrap().eta.count(), 0);
        let half = Params::with_density(1, 2, 1.0, 1.0, 0.5).unwrap();
        let trials = 100_000u64;
        let total: u64 = (0..trials)
            .map(|t| sample_mixed(&half, 3, &SeedSpec::new(4).with_trial(t)).unwrap().eta.count())
            .sum();
        let sigma = (8.0 * 0.25 / trials as f64).sqrt();
        assert!((total as f64 / trials as f64 - 4.0).abs() < 4.0 * sigma);
    }

    #[test]
    fn sprinkle_identity_and_containment() {
        let p = params(2.0);
        let base = sample_bonds(&p, 6, &SeedSpec::new(2)).unwrap();
        let same = sprinkle(&base, &p.beta(0.0).unwrap(), &SeedSpec::new(99)).unwrap();
        assert!(same.same_edges(&base));
        let up = sprinkle_to(&base, &p, 2.0, 5.0, &SeedSpec::new(100)).unwrap();
        assert!(up.contains(&base));
        assert!(matches!(sprinkle_to(&base, &p, 2.0, 1.0, &SeedSpec::new(1)), Err(Error::Usage(_))));
    }

    #[test]
    fn sprinkle_probability_identity() {
        for (d, side, alpha) in [(1u32, 2u32, 1.0), (1, 3, 2.0), (2, 2, 2.0)] {
            for k in 1..=12 {
                for beta1 in [0.0, 0.3, 1.0, 7.0, 50.0] {
                    for beta2 in [beta1, beta1 + 0.5, beta1 * 3.0 + 1.0] {
                        let params = Params::new(d, side, alpha, 1.0).unwrap();
                        assert!(sprinkle_residual(&params, beta1, beta2, k).unwrap() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn union_mixes_storage_forms() {
        let lat = Lattice::new(1, 2, 2).unwrap();
        let open = BondConfig::from_edges(lat.clone(), [(0, 2), (1, 3)]).unwrap();
        let mut closed = BondConfig::complete(lat.clone());
        closed.classes[1] = ClassEdges::AllBut(vec![(0, 2), (0, 3)]);
        let u = open.union(&closed).unwrap();
        assert!(u.is_open(0, 2));
        assert!(!u.is_open(0, 3));
        assert_eq!(u.open_count(2), 3);
        assert!(u.contains(&open) && u.contains(&closed));
    }

    #[test]
    fn dump_round_trip() {
        let p = Params::with_density(1, 2, 1.0, 2.0, 0.5).unwrap();
        let seed = SeedSpec::new(77);
        let config = sample_mixed(&p, 5, &seed).unwrap();
        let dump = ConfigDump::new(&p, &seed, &config);
        let again = dump.to_config().unwrap();
        assert_eq!(again.eta, config.eta);
        assert!(again.omega.same_edges(&config.omega));
        assert!(dump.edges.windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #[test]
        fn identical_seeds_reproduce_configs(master in any::<u64>(), trial in 0u64..1000, beta in 0.0f64..30.0) {
            let p = Params::with_density(1, 2, 1.0, beta, 0.7).unwrap();
            let seed = SeedSpec::new(master).with_trial(trial);
            let a = sample_mixed(&p, 6, &seed).unwrap();
            let b = sample_mixed(&p, 6, &seed).unwrap();
            prop_assert_eq!(a.eta, b.eta);
            prop_assert_eq!(a.omega.edges(), b.omega.edges());
        }

        #[test]
        fn site_set_bytes_round_trip(len in 1u64..200, seed in any::<u64>()) {
            let set = sample_sites(0.4, len, &SeedSpec::new(seed));
            prop_assert_eq!(SiteSet::from_bytes(len, &set.to_bytes()).unwrap(), set);
        }
    }
}
