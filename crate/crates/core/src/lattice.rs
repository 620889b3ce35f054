//! Geometry of the hierarchical lattice truncated to the block `Λ_n`.
//!
//! A vertex of `Λ_n` is stored as an integer in `[0, L^{dn})` whose base-`L^d`
//! digits are its coordinates: digit `i` (0-indexed, least significant first)
//! is the coordinate at level `i + 1`. Two distinct vertices are at distance
//! `L^{j+1}` where `j` is the highest digit at which they differ. We call `j + 1`
//! the *distance class* of the pair; class 0 means the two vertices coincide.
//!
//! Ascending integer order of vertex indices is the fixed enumeration used for
//! every tie-break downstream.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};

/// Largest admissible block volume `L^{dn}`.
pub const MAX_VOLUME: u64 = 1 << 48;

/// Model parameters. All validation lives in [`Params::new`] and the setters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub d: u32,
    #[serde(rename = "L")]
    pub side: u32,
    pub alpha: f64,
    pub beta: f64,
    /// Site density of the mixed site-bond model; 1 gives pure bond percolation.
    pub p: f64,
}

impl Params {
    pub fn new(d: u32, side: u32, alpha: f64, beta: f64) -> Result<Self> {
        Self::with_density(d, side, alpha, beta, 1.0)
    }

    pub fn with_density(d: u32, side: u32, alpha: f64, beta: f64, p: f64) -> Result<Self> {
        let params = Params { d, side, alpha, beta, p };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return usage(format!("dimension d must be >= 1, got {}", self.d));
        }
        if self.side < 2 {
            return usage(format!("side length L must be >= 2, got {}", self.side));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return usage(format!("alpha must be positive and finite, got {}", self.alpha));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return usage(format!("beta must be nonnegative and finite, got {}", self.beta));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return usage(format!("site density p must lie in [0, 1], got {}", self.p));
        }
        Ok(())
    }

    pub fn beta(self, beta: f64) -> Result<Self> {
        let params = Params { beta, ..self };
        params.validate()?;
        Ok(params)
    }

    pub fn density(self, p: f64) -> Result<Self> {
        let params = Params { p, ..self };
        params.validate()?;
        Ok(params)
    }

    /// `L^d`, the number of children of every block.
    pub fn base(&self) -> u64 {
        (self.side as u64).pow(self.d)
    }

    pub fn lattice(&self, scale: u32) -> Result<Lattice> {
        Lattice::new(self.d, self.side, scale)
    }
}

/// A point of `Λ_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId {
    pub index: u64,
    pub scale: u32,
}

/// A `k`-block inside `Λ_n`: the vertices whose index divided by `L^{dk}` equals `index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId {
    pub level: u32,
    pub index: u64,
}

/// The block `Λ_n` of the `d`-dimensional hierarchical lattice with side `L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    d: u32,
    side: u32,
    scale: u32,
    /// `powers[i] = L^{d i}` for `i` in `0..=scale`.
    powers: Vec<u64>,
}

impl Lattice {
    pub fn new(d: u32, side: u32, scale: u32) -> Result<Self> {
        if d < 1 || side < 2 {
            return usage(format!("invalid geometry d={d}, L={side}"));
        }
        let base = (side as u64)
            .checked_pow(d)
            .filter(|&b| b <= MAX_VOLUME)
            .ok_or_else(|| Error::Resource(format!("L^d = {side}^{d} exceeds 2^48")))?;
        let mut powers = Vec::with_capacity(scale as usize + 1);
        let mut acc = 1u64;
        powers.push(acc);
        for _ in 0..scale {
            acc = acc
                .checked_mul(base)
                .filter(|&v| v <= MAX_VOLUME)
                .ok_or_else(|| {
                    Error::Resource(format!(
                        "volume L^(dn) with d={d}, L={side}, n={scale} exceeds 2^48"
                    ))
                })?;
            powers.push(acc);
        }
        Ok(Lattice { d, side, scale, powers })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn side(&self) -> u32 {
        self.side
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    /// `L^d`.
    pub fn base(&self) -> u64 {
        if self.scale == 0 {
            (self.side as u64).pow(self.d)
        } else {
            self.powers[1]
        }
    }

    /// `|Λ_n| = L^{dn}`.
    pub fn volume(&self) -> u64 {
        self.powers[self.scale as usize]
    }

    /// `|Λ_k| = L^{dk}` for `k <= n`.
    pub fn block_volume(&self, level: u32) -> u64 {
        self.powers[level as usize]
    }

    /// The same geometry `k` scales down, i.e. `Λ_{n-k}`.
    pub fn coarsen(&self, k: u32) -> Result<Lattice> {
        if k > self.scale {
            return usage(format!("cannot coarsen scale {} by {k}", self.scale));
        }
        Ok(Lattice {
            d: self.d,
            side: self.side,
            scale: self.scale - k,
            powers: self.powers[..=(self.scale - k) as usize].to_vec(),
        })
    }

    pub fn vertex(&self, index: u64) -> Result<VertexId> {
        if index >= self.volume() {
            return usage(format!("vertex {index} outside Λ_{} (volume {})", self.scale, self.volume()));
        }
        Ok(VertexId { index, scale: self.scale })
    }

    /// Distance class of two raw indices: 0 if equal, otherwise one plus the
    /// highest differing base-`L^d` digit.
    #[inline]
    pub fn class_of(&self, x: u64, y: u64) -> u32 {
        if x == y {
            return 0;
        }
        // Highest k with x div L^{dk} != y div L^{dk}, plus one.
        let mut lo = 0usize;
        let mut hi = self.powers.len() - 1;
        // Invariant: quotients differ at `lo` and agree at `hi + 1` (or beyond the table).
        if x / self.powers[hi] != y / self.powers[hi] {
            return hi as u32 + 1;
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x / self.powers[mid] != y / self.powers[mid] {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo as u32 + 1
    }

    /// Ultrametric distance `‖x - y‖`, which is `L^{class}` or 0 for equal points.
    pub fn distance(&self, x: VertexId, y: VertexId) -> Result<u64> {
        self.check_vertex(x)?;
        self.check_vertex(y)?;
        if x.scale != y.scale {
            return usage(format!("vertices at different scales {} and {}", x.scale, y.scale));
        }
        Ok(match self.class_of(x.index, y.index) {
            0 => 0,
            c => (self.side as u64).pow(c),
        })
    }

    fn check_vertex(&self, x: VertexId) -> Result<()> {
        if x.scale != self.scale {
            return usage(format!("vertex at scale {} used with Λ_{}", x.scale, self.scale));
        }
        if x.index >= self.volume() {
            return usage(format!("vertex {} outside Λ_{}", x.index, self.scale));
        }
        Ok(())
    }

    /// `π^k(x)`: drop the lowest `k` digits, landing in `Λ_{n-k}`.
    pub fn left_shift(&self, x: VertexId, k: u32) -> Result<VertexId> {
        self.check_vertex(x)?;
        if k > x.scale {
            return usage(format!("left shift by {k} exceeds scale {}", x.scale));
        }
        Ok(VertexId {
            index: x.index / self.powers[k as usize],
            scale: x.scale - k,
        })
    }

    /// The `level`-block containing `x`.
    pub fn block_of(&self, x: u64, level: u32) -> BlockId {
        BlockId {
            level,
            index: x / self.powers[level as usize],
        }
    }

    pub fn block_count(&self, level: u32) -> u64 {
        self.powers[(self.scale - level) as usize]
    }

    /// Vertex index range of a block.
    pub fn block_range(&self, block: BlockId) -> std::ops::Range<u64> {
        let size = self.powers[block.level as usize];
        block.index * size..(block.index + 1) * size
    }

    pub fn check_block(&self, block: BlockId) -> Result<()> {
        if block.level > self.scale || block.index >= self.block_count(block.level) {
            return usage(format!(
                "block (level {}, index {}) outside Λ_{}",
                block.level, block.index, self.scale
            ));
        }
        Ok(())
    }

    pub fn check_class(&self, k: u32) -> Result<()> {
        if k < 1 || k > self.scale {
            return usage(format!("distance class {k} outside 1..={}", self.scale));
        }
        Ok(())
    }

    /// Number of partners of any vertex at distance exactly `L^k`: `L^{dk} - L^{d(k-1)}`.
    pub fn class_degree(&self, k: u32) -> u64 {
        self.powers[k as usize] - self.powers[k as usize - 1]
    }

    /// `M_k = L^{dn}(L^{dk} - L^{d(k-1)})/2`, unordered pairs of `Λ_n` at distance `L^k`.
    pub fn pair_count(&self, k: u32) -> Result<u128> {
        self.check_class(k)?;
        Ok(self.volume() as u128 * self.class_degree(k) as u128 / 2)
    }

    /// A uniform partner of `x` at distance exactly `L^k`: digit `k-1` is
    /// resampled to a different value, lower digits uniformly, higher digits kept.
    pub fn class_partner<R: Rng + ?Sized>(&self, x: u64, k: u32, rng: &mut R) -> u64 {
        debug_assert!(k >= 1 && k <= self.scale);
        let low = self.powers[k as usize - 1];
        let base = self.base();
        let top = x / self.powers[k as usize] * self.powers[k as usize];
        let digit = (x / low) % base;
        let mut other = rng.random_range(0..base - 1);
        if other >= digit {
            other += 1;
        }
        top + other * low + rng.random_range(0..low)
    }

    /// [`Lattice::class_partner`] on validated vertex ids.
    pub fn kth_class_partner<R: Rng + ?Sized>(&self, x: VertexId, k: u32, rng: &mut R) -> Result<VertexId> {
        self.check_vertex(x)?;
        self.check_class(k)?;
        Ok(VertexId {
            index: self.class_partner(x.index, k, rng),
            scale: self.scale,
        })
    }

    /// All class-`k` pairs `(x, y)`, `x < y`, in ascending lexicographic order.
    pub fn class_pairs(&self, k: u32) -> ClassPairs<'_> {
        ClassPairs::new(self, k)
    }

    /// Class-`k` pairs of one `k`-block, lexicographic.
    pub fn class_pairs_in_block(&self, k: u32, block: u64) -> impl Iterator<Item = (u64, u64)> + '_ {
        let size = self.block_volume(k);
        let low = self.block_volume(k - 1);
        let start = block * size;
        (start..start + size).flat_map(move |x| {
            let from = (x / low + 1) * low;
            (from..start + size).map(move |y| (x, y))
        })
    }

    /// Class-`k` partners of `x` in ascending order.
    pub fn class_partners(&self, x: u64, k: u32) -> impl Iterator<Item = u64> + '_ {
        let low = self.powers[k as usize - 1];
        let block = self.powers[k as usize];
        let start = x / block * block;
        let own = (x - start) / low;
        (start..start + block).filter(move |y| (y - start) / low != own)
    }
}

/// Lexicographic iterator over the class-`k` pairs of a lattice.
#[derive(Debug, Clone)]
pub struct ClassPairs<'a> {
    lattice: &'a Lattice,
    low: u64,
    block: u64,
    x: u64,
    y: u64,
    y_end: u64,
}

impl<'a> ClassPairs<'a> {
    fn new(lattice: &'a Lattice, k: u32) -> Self {
        let low = lattice.powers[k as usize - 1];
        let block = lattice.powers[k as usize];
        let mut it = ClassPairs { lattice, low, block, x: 0, y: 0, y_end: 0 };
        it.reset_row();
        it
    }

    /// Partners of `x` above it occupy `[next sub-block start, block end)`.
    fn reset_row(&mut self) {
        let block_start = self.x / self.block * self.block;
        self.y = (self.x / self.low + 1) * self.low;
        self.y_end = block_start + self.block;
    }
}

impl Iterator for ClassPairs<'_> {
    type Item = (u64, u64);

    fn next(&mut self) -> Option<(u64, u64)> {
        loop {
            if self.x >= self.lattice.volume() {
                return None;
            }
            if self.y < self.y_end {
                let pair = (self.x, self.y);
                self.y += 1;
                return Some(pair);
            }
            self.x += 1;
            self.reset_row();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(lat: &Lattice, i: u64) -> VertexId {
        lat.vertex(i).unwrap()
    }

    #[test]
    fn distance_examples() {
        let lat = Lattice::new(1, 2, 2).unwrap();
        assert_eq!(lat.distance(v(&lat, 0), v(&lat, 1)).unwrap(), 2);
        assert_eq!(lat.distance(v(&lat, 3), v(&lat, 3)).unwrap(), 0);
        let lat3 = Lattice::new(1, 3, 2).unwrap();
        assert_eq!(lat3.distance(v(&lat3, 5), v(&lat3, 2)).unwrap(), 9);
    }

    #[test]
    fn distance_rejects_mixed_scales() {
        let a = Lattice::new(1, 2, 2).unwrap();
        let b = Lattice::new(1, 2, 3).unwrap();
        let err = a.distance(v(&a, 0), v(&b, 1)).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn left_shift_examples() {
        let lat = Lattice::new(1, 2, 3).unwrap();
        assert_eq!(lat.left_shift(v(&lat, 6), 1).unwrap(), VertexId { index: 3, scale: 2 });
        assert_eq!(lat.left_shift(v(&lat, 6), 0).unwrap(), v(&lat, 6));
        assert!(lat.left_shift(v(&lat, 6), 4).is_err());
        let lat2 = Lattice::new(2, 2, 2).unwrap();
        assert_eq!(lat2.left_shift(v(&lat2, 7), 1).unwrap().index, 1);
    }

    #[test]
    fn left_shift_divides_distance_by_side() {
        let lat = Lattice::new(1, 3, 3).unwrap();
        let coarse = lat.coarsen(1).unwrap();
        for x in 0..lat.volume() {
            for y in 0..lat.volume() {
                let dist = lat.distance(v(&lat, x), v(&lat, y)).unwrap();
                if dist >= 9 {
                    let px = lat.left_shift(v(&lat, x), 1).unwrap();
                    let py = lat.left_shift(v(&lat, y), 1).unwrap();
                    assert_eq!(coarse.distance(px, py).unwrap(), dist / 3);
                }
            }
        }
    }

    #[test]
    fn ultrametric_inequality_exhaustive() {
        for side in [2u32, 3] {
            for n in 0..=4u32 {
                let lat = Lattice::new(1, side, n).unwrap();
                let vol = lat.volume();
                for x in 0..vol {
                    for y in 0..vol {
                        let dxy = lat.distance(v(&lat, x), v(&lat, y)).unwrap();
                        for z in 0..vol {
                            let dxz = lat.distance(v(&lat, x), v(&lat, z)).unwrap();
                            let dyz = lat.distance(v(&lat, y), v(&lat, z)).unwrap();
                            assert!(dxz <= dxy.max(dyz), "L={side} n={n} ({x},{y},{z})");
                        }
                    }
                }
            }
        }
    }

    fn digit_add(lat: &Lattice, x: u64, w: u64) -> u64 {
        let base = lat.base();
        let (mut x, mut w, mut out, mut place) = (x, w, 0, 1);
        for _ in 0..lat.scale() {
            out += ((x % base + w % base) % base) * place;
            x /= base;
            w /= base;
            place *= base;
        }
        out
    }

    #[test]
    fn translation_invariance_exhaustive() {
        for (d, side, n) in [(1, 2, 3), (1, 3, 2), (2, 2, 2)] {
            let lat = Lattice::new(d, side, n).unwrap();
            let vol = lat.volume();
            for w in 0..vol {
                for x in 0..vol {
                    for y in 0..vol {
                        let (xs, ys) = (digit_add(&lat, x, w), digit_add(&lat, y, w));
                        assert_eq!(lat.class_of(x, y), lat.class_of(xs, ys));
                    }
                }
            }
        }
    }

    #[test]
    fn pair_count_matches_enumeration() {
        for d in 1..=3u32 {
            for side in 2..=16u32 {
                for n in 0..=12u32 {
                    let Ok(lat) = Lattice::new(d, side, n) else { continue };
                    if lat.volume() > 4096 {
                        continue;
                    }
                    let mut counts = vec![0u128; n as usize + 1];
                    for x in 0..lat.volume() {
                        for y in x + 1..lat.volume() {
                            counts[lat.class_of(x, y) as usize] += 1;
                        }
                    }
                    let vol = lat.volume() as u128;
                    let mut total = 0;
                    for k in 1..=n {
                        assert_eq!(lat.pair_count(k).unwrap(), counts[k as usize], "d={d} L={side} n={n} k={k}");
                        assert_eq!(lat.class_pairs(k).count() as u128, counts[k as usize]);
                        total += counts[k as usize];
                    }
                    assert_eq!(total, vol * (vol - 1) / 2);
                }
            }
        }
    }

    #[test]
    fn pair_count_examples() {
        let lat = Lattice::new(1, 2, 2).unwrap();
        assert_eq!(lat.pair_count(1).unwrap(), 2);
        assert_eq!(lat.pair_count(2).unwrap(), 4);
        assert!(lat.pair_count(0).is_err());
        assert!(lat.pair_count(3).is_err());
    }

    #[test]
    fn class_pairs_are_lexicographic_and_correct() {
        let lat = Lattice::new(1, 3, 3).unwrap();
        for k in 1..=3 {
            let pairs: Vec<_> = lat.class_pairs(k).collect();
            assert!(pairs.windows(2).all(|w| w[0] < w[1]));
            assert!(pairs.iter().all(|&(x, y)| x < y && lat.class_of(x, y) == k));
        }
    }

    #[test]
    fn class_partner_examples() {
        let lat = Lattice::new(1, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(lat.kth_class_partner(v(&lat, 0), 1, &mut rng).unwrap().index, 1);
        }
        let trials = 10_000;
        let twos = (0..trials)
            .filter(|_| {
                let y = lat.class_partner(0, 2, &mut rng);
                assert!(y == 2 || y == 3);
                y == 2
            })
            .count() as f64;
        let sigma = (trials as f64 * 0.25).sqrt();
        assert!((twos - trials as f64 / 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn class_partner_has_exact_class() {
        let lat = Lattice::new(2, 3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5000 {
            let x = rng.random_range(0..lat.volume());
            let k = rng.random_range(1..=3);
            let y = lat.class_partner(x, k, &mut rng);
            assert_eq!(lat.class_of(x, y), k);
        }
    }

    #[test]
    fn volume_guard() {
        assert!(Lattice::new(1, 2, 48).is_ok());
        assert!(matches!(Lattice::new(1, 2, 49), Err(Error::Resource(_))));
        assert!(matches!(Lattice::new(3, 4, 9), Err(Error::Resource(_))));
    }

    #[test]
    fn params_validation() {
        assert!(Params::new(0, 2, 1.0, 1.0).is_err());
        assert!(Params::new(1, 1, 1.0, 1.0).is_err());
        assert!(Params::new(1, 2, 0.0, 1.0).is_err());
        assert!(Params::new(1, 2, 1.0, -1.0).is_err());
        assert!(Params::with_density(1, 2, 1.0, 1.0, 1.5).is_err());
        assert!(Params::with_density(1, 2, 1.0, 0.0, 0.0).is_ok());
    }
}
