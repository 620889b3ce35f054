//! Cluster labeling of (mixed) configurations.
//!
//! Labels are computed with a union-find over `Λ_n`. Every cluster is named by
//! its minimal vertex, which makes ties in [`kmax`] resolve toward the cluster
//! holding the smallest index.

use std::collections::HashMap;

use serde::Serialize;

use crate::lattice::{BlockId, Lattice, VertexId};
use crate::sampler::{ClassEdges, MixedConfig, SiteSet};

const NONE: u64 = u64::MAX;

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        UnionFind {
            parent: (0..len).collect(),
            size: vec![1; len],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; returns whether they were distinct.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Component labels of the occupied (and admitted) vertices of `Λ_n`.
#[derive(Debug, Clone)]
pub struct ClusterLabeling {
    scale: u32,
    /// Minimal vertex of the component, or `NONE` for excluded vertices.
    labels: Vec<u64>,
    /// Component size indexed by its representative; zero elsewhere.
    sizes: Vec<u64>,
}

impl ClusterLabeling {
    pub fn scale(&self) -> u32 {
        self.scale
    }

    /// Representative (minimal vertex) of the cluster of `x`, if `x` is in the graph.
    pub fn label(&self, x: u64) -> Option<u64> {
        match self.labels[x as usize] {
            NONE => None,
            l => Some(l),
        }
    }

    pub fn representative(&self, x: VertexId) -> Option<VertexId> {
        self.label(x.index).map(|index| VertexId { index, scale: self.scale })
    }

    pub fn connected(&self, x: u64, y: u64) -> bool {
        matches!((self.label(x), self.label(y)), (Some(a), Some(b)) if a == b)
    }

    /// Size of the cluster of `x`; 0 when `x` is excluded.
    pub fn size_of(&self, x: u64) -> u64 {
        self.label(x).map_or(0, |r| self.sizes[r as usize])
    }

    /// `(representative, size)` for every cluster, by ascending representative.
    pub fn clusters(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.sizes
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0)
            .map(|(r, &s)| (r as u64, s))
    }

    pub fn component_sizes(&self) -> Vec<u64> {
        let mut sizes: Vec<u64> = self.clusters().map(|(_, s)| s).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }

    pub fn occupied(&self) -> u64 {
        self.sizes.iter().sum()
    }

    /// Maximal cluster, ties toward the smallest representative.
    pub fn largest(&self) -> Option<(u64, u64)> {
        self.clusters()
            .fold(None, |best: Option<(u64, u64)>, (r, s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((r, s)),
            })
    }
}

/// Labels the `(η, ω)`-clusters in `restrict` (all of `Λ_n` when `None`).
pub fn label(config: &MixedConfig, restrict: Option<&SiteSet>) -> ClusterLabeling {
    label_impl(config, restrict, config.omega.scale())
}

/// Labels clusters using only edges of class at most `level`, i.e. the
/// clusters internal to each `level`-block.
pub fn label_blocks(config: &MixedConfig, level: u32) -> ClusterLabeling {
    label_impl(config, None, level.min(config.omega.scale()))
}

fn label_impl(config: &MixedConfig, restrict: Option<&SiteSet>, max_class: u32) -> ClusterLabeling {
    let lattice = config.lattice();
    let vol = lattice.volume() as usize;
    let admitted = |x: u64| config.eta.contains(x) && restrict.is_none_or(|s| s.contains(x));
    let mut uf = UnionFind::new(vol);
    for k in 1..=max_class {
        match config.omega.class_edges(k) {
            ClassEdges::Open(list) => {
                for &(x, y) in list {
                    if admitted(x) && admitted(y) {
                        uf.union(x as usize, y as usize);
                    }
                }
            }
            ClassEdges::AllBut(closed) => union_complement_class(lattice, k, closed, &admitted, &mut uf),
        }
    }
    let mut labels = vec![NONE; vol];
    let mut sizes = vec![0u64; vol];
    let mut root_rep = vec![NONE; vol];
    for x in 0..vol {
        if !admitted(x as u64) {
            continue;
        }
        let r = uf.find(x);
        if root_rep[r] == NONE {
            root_rep[r] = x as u64;
        }
        labels[x] = root_rep[r];
        sizes[root_rep[r] as usize] += 1;
    }
    ClusterLabeling { scale: lattice.scale(), labels, sizes }
}

/// Unions the open pairs of a class stored as "all but `closed`".
///
/// Inside a `k`-block the class-`k` graph is complete multipartite over the
/// `(k-1)`-sub-blocks minus the closed pairs. A vertex with no closed pair
/// ("clean") is adjacent to every admitted vertex of every other part, which
/// settles connectivity in time linear in the block plus the closed list.
fn union_complement_class(
    lattice: &Lattice,
    k: u32,
    closed: &[(u64, u64)],
    admitted: &dyn Fn(u64) -> bool,
    uf: &mut UnionFind,
) {
    let block_size = lattice.block_volume(k);
    let part_size = lattice.block_volume(k - 1);
    let parts = lattice.base() as usize;
    let mut cursor = 0usize;
    let mut closed_degree: HashMap<u64, u64> = HashMap::new();
    let mut admitted_per_part = vec![0u64; parts];
    let mut clean_per_part = vec![0u64; parts];
    for block in 0..lattice.block_count(k) {
        let start = block * block_size;
        let end = start + block_size;
        let begin = cursor;
        while cursor < closed.len() && closed[cursor].0 < end {
            cursor += 1;
        }
        closed_degree.clear();
        for &(x, y) in &closed[begin..cursor] {
            if admitted(x) && admitted(y) {
                *closed_degree.entry(x).or_default() += 1;
                *closed_degree.entry(y).or_default() += 1;
            }
        }
        admitted_per_part.iter_mut().for_each(|c| *c = 0);
        clean_per_part.iter_mut().for_each(|c| *c = 0);
        let mut first_clean: Vec<Option<u64>> = vec![None; parts];
        for x in start..end {
            if admitted(x) {
                let part = ((x - start) / part_size) as usize;
                admitted_per_part[part] += 1;
                if !closed_degree.contains_key(&x) {
                    clean_per_part[part] += 1;
                    first_clean[part].get_or_insert(x);
                }
            }
        }
        let clean_parts: Vec<usize> = (0..parts).filter(|&p| clean_per_part[p] > 0).collect();
        match clean_parts.len() {
            0 => {
                for (x, y) in lattice.class_pairs_in_block(k, block) {
                    if admitted(x) && admitted(y) && closed[begin..cursor].binary_search(&(x, y)).is_err() {
                        uf.union(x as usize, y as usize);
                    }
                }
            }
            1 => {
                let home = clean_parts[0];
                let hub = first_clean[home].unwrap() as usize;
                let total: u64 = admitted_per_part.iter().sum();
                let outside = total - admitted_per_part[home];
                if outside == 0 {
                    continue;
                }
                for x in start..end {
                    if !admitted(x) {
                        continue;
                    }
                    let part = ((x - start) / part_size) as usize;
                    if part != home {
                        uf.union(hub, x as usize);
                        continue;
                    }
                    // All class-k partners of x lie outside its own part.
                    match closed_degree.get(&x) {
                        None => {
                            uf.union(hub, x as usize);
                        }
                        Some(&deg) if deg < outside => {
                            uf.union(hub, x as usize);
                        }
                        Some(_) => {}
                    }
                }
            }
            _ => {
                let hub = first_clean[clean_parts[0]].unwrap() as usize;
                for x in start..end {
                    if admitted(x) {
                        uf.union(hub, x as usize);
                    }
                }
            }
        }
    }
}

/// The maximal cluster of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KmaxRecord {
    pub block: BlockId,
    pub size: u64,
    /// Minimal vertex of the selected cluster; `None` when the block has no occupied site.
    pub representative: Option<u64>,
}

impl KmaxRecord {
    /// Membership in the selected cluster, given the block labeling it came from.
    pub fn contains(&self, labeling: &ClusterLabeling, x: u64) -> bool {
        self.representative.is_some() && labeling.label(x) == self.representative
    }
}

/// `K_max` of `block`: the largest `(η, ω)`-cluster using only edges internal
/// to the block, ties broken toward the cluster containing the minimal vertex.
pub fn kmax(config: &MixedConfig, block: BlockId) -> crate::error::Result<KmaxRecord> {
    config.lattice().check_block(block)?;
    let labeling = label_blocks(config, block.level);
    Ok(kmax_in(&labeling, config.lattice(), block))
}

/// `K_max` of every `level`-block, from one block-restricted labeling.
pub fn kmax_all(config: &MixedConfig, level: u32) -> (ClusterLabeling, Vec<KmaxRecord>) {
    let labeling = label_blocks(config, level);
    let lattice = config.lattice();
    let records = (0..lattice.block_count(level))
        .map(|index| kmax_in(&labeling, lattice, BlockId { level, index }))
        .collect();
    (labeling, records)
}

fn kmax_in(labeling: &ClusterLabeling, lattice: &Lattice, block: BlockId) -> KmaxRecord {
    let mut best: Option<(u64, u64)> = None;
    // Representatives are minimal vertices, and all members of a block-internal
    // cluster lie in the block, so scanning representatives in order suffices.
    for x in lattice.block_range(block) {
        let s = labeling.sizes[x as usize];
        if s > 0 && best.is_none_or(|(_, bs)| s > bs) {
            best = Some((x, s));
        }
    }
    KmaxRecord {
        block,
        size: best.map_or(0, |b| b.1),
        representative: best.map(|b| b.0),
    }
}

/// `|K_0|` within `restrict`; 0 if the origin is unoccupied or excluded.
pub fn cluster_of_origin_size(config: &MixedConfig, restrict: Option<&SiteSet>) -> u64 {
    label(config, restrict).size_of(0)
}
