//! White/black site percolation machinery: thresholded masks, cluster
//! labeling under both adjacencies, chemical distance, largest components in
//! shrunken boxes, and percolation-probability estimation.
//!
//! A site is white when its score is at least −λ; white sites percolate in
//! the nearest-neighbour graph, black sites are analysed in the L-graph.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{counter_hash, hash_to_unit, ScoreSource};
use crate::lattice::{Adjacency, Bounds, LatticeBox, Region, Site};
use crate::stats::{summarize, EstimateSeries, Record, Summary};

/// A cached white/black indicator over a box window.
#[derive(Clone, Debug)]
pub struct SiteMask {
    bounds: Bounds,
    white: Vec<bool>,
}

impl SiteMask {
    /// white(v) ⇔ score(v) ≥ −λ.
    pub fn from_field(f: &impl ScoreSource, window: &LatticeBox, lambda: f64) -> SiteMask {
        let bounds = window.bounds();
        let white = (0..bounds.len())
            .map(|i| f.score(&bounds.site_at(i)) >= -lambda)
            .collect();
        SiteMask { bounds, white }
    }

    /// An independent site percolation sample: each site open with
    /// probability p, coupled monotonically in p for a fixed seed.
    pub fn percolation(seed: u64, window: &LatticeBox, p: f64) -> SiteMask {
        let bounds = window.bounds();
        let white = (0..bounds.len())
            .map(|i| {
                let s = bounds.site_at(i);
                let words: Vec<u64> = s.coords().iter().map(|&c| c as u64).collect();
                hash_to_unit(counter_hash(seed, &words)) < p
            })
            .collect();
        SiteMask { bounds, white }
    }

    pub fn from_region(window: &LatticeBox, white_sites: &Region) -> SiteMask {
        let bounds = window.bounds();
        let white = (0..bounds.len())
            .map(|i| white_sites.contains(&bounds.site_at(i)))
            .collect();
        SiteMask { bounds, white }
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// False outside the window.
    pub fn is_white(&self, s: &Site) -> bool {
        self.bounds.contains(s) && self.white[self.bounds.index(s)]
    }

    /// The complementary mask over the same window (black sites).
    pub fn invert(&self) -> SiteMask {
        SiteMask {
            bounds: self.bounds,
            white: self.white.iter().map(|b| !b).collect(),
        }
    }

    pub fn white_count(&self) -> usize {
        self.white.iter().filter(|&&b| b).count()
    }

    pub fn white_region(&self) -> Region {
        (0..self.bounds.len())
            .filter(|&i| self.white[i])
            .map(|i| self.bounds.site_at(i))
            .collect()
    }
}

/// Disjoint-set forest with path halving and union by size.
struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            self.parent[x as usize] = self.parent[self.parent[x as usize] as usize];
            x = self.parent[x as usize];
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

/// Connected components of the in-mask sites of a window; black sites carry
/// no component (the empty-cluster convention).
#[derive(Clone, Debug)]
pub struct ClusterLabeling {
    bounds: Bounds,
    /// component id per site, u32::MAX for out-of-mask sites
    label: Vec<u32>,
    sizes: Vec<usize>,
    pub adjacency: Adjacency,
}

pub const NO_CLUSTER: u32 = u32::MAX;

impl ClusterLabeling {
    pub fn component_of(&self, s: &Site) -> Option<u32> {
        if !self.bounds.contains(s) {
            return None;
        }
        match self.label[self.bounds.index(s)] {
            NO_CLUSTER => None,
            id => Some(id),
        }
    }

    pub fn num_components(&self) -> usize {
        self.sizes.len()
    }

    pub fn size_of(&self, id: u32) -> usize {
        self.sizes[id as usize]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn component_sites(&self, id: u32) -> Region {
        (0..self.bounds.len())
            .filter(|&i| self.label[i] == id)
            .map(|i| self.bounds.site_at(i))
            .collect()
    }

    /// Components ordered by id; ids are assigned in order of each
    /// component's lexicographically minimal site.
    pub fn components(&self) -> Vec<Region> {
        let mut out = vec![Region::new(); self.sizes.len()];
        for i in 0..self.bounds.len() {
            let id = self.label[i];
            if id != NO_CLUSTER {
                out[id as usize].insert(self.bounds.site_at(i));
            }
        }
        out
    }

    /// The largest component; ties broken by smaller minimal site (i.e. the
    /// lowest id among maximal sizes).
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<u32> = None;
        for (id, &sz) in self.sizes.iter().enumerate() {
            if best.map_or(true, |b| sz > self.sizes[b as usize]) {
                best = Some(id as u32);
            }
        }
        best
    }
}

/// Union-find labeling of the mask's white sites under the given adjacency.
pub fn label_clusters(mask: &SiteMask, adj: Adjacency) -> ClusterLabeling {
    let bounds = mask.bounds;
    let len = bounds.len();
    let mut uf = UnionFind::new(len);
    for i in 0..len {
        if !mask.white[i] {
            continue;
        }
        let s = bounds.site_at(i);
        adj.for_each_neighbor(&s, |t| {
            if mask.is_white(&t) {
                let j = bounds.index(&t);
                if j > i {
                    uf.union(i as u32, j as u32);
                }
            }
        });
    }
    // assign dense ids in order of each root's first (minimal) site
    let mut label = vec![NO_CLUSTER; len];
    let mut sizes = Vec::new();
    let mut root_id = vec![NO_CLUSTER; len];
    for i in 0..len {
        if !mask.white[i] {
            continue;
        }
        let r = uf.find(i as u32) as usize;
        if root_id[r] == NO_CLUSTER {
            root_id[r] = sizes.len() as u32;
            sizes.push(0);
        }
        label[i] = root_id[r];
        sizes[root_id[r] as usize] += 1;
    }
    ClusterLabeling {
        bounds,
        label,
        sizes,
        adjacency: adj,
    }
}

/// Chemical distance `D(A, B)`: the minimal number of sites on a white
/// nearest-neighbour path from a white site of `a` to a white site of `b`,
/// confined to the mask window. `D(v, v) = 1` for white v. `None` when no
/// white path of length ≤ cutoff exists.
pub fn chemical_distance(mask: &SiteMask, a: &Region, b: &Region, cutoff: u64) -> Option<u64> {
    white_path(mask, a, b, cutoff).map(|p| p.len() as u64)
}

/// As [`chemical_distance`] but returns a witness path (a..b inclusive).
pub fn white_path(mask: &SiteMask, a: &Region, b: &Region, cutoff: u64) -> Option<Vec<Site>> {
    if cutoff == 0 {
        return None;
    }
    let bounds = mask.bounds;
    let mut dist: Vec<u64> = vec![0; bounds.len()];
    let mut parent: Vec<u32> = vec![u32::MAX; bounds.len()];
    let mut queue = VecDeque::new();
    for s in a.iter() {
        if mask.is_white(s) {
            let i = bounds.index(s);
            if dist[i] == 0 {
                dist[i] = 1;
                queue.push_back(i as u32);
            }
        }
    }
    let hit = |i: usize| b.contains(&bounds.site_at(i)) && mask.white[i];
    // an immediate hit: a white site in both a and b
    for &q in &queue {
        if hit(q as usize) {
            return Some(vec![bounds.site_at(q as usize)]);
        }
    }
    while let Some(i) = queue.pop_front() {
        let d = dist[i as usize];
        if d >= cutoff {
            continue;
        }
        let s = bounds.site_at(i as usize);
        let mut found: Option<u32> = None;
        Adjacency::NearestNeighbor.for_each_neighbor(&s, |t| {
            if found.is_some() || !mask.is_white(&t) {
                return;
            }
            let j = bounds.index(&t);
            if dist[j] == 0 {
                dist[j] = d + 1;
                parent[j] = i;
                if hit(j) {
                    found = Some(j as u32);
                } else {
                    queue.push_back(j as u32);
                }
            }
        });
        if let Some(j) = found {
            let mut path = Vec::new();
            let mut cur = j;
            loop {
                path.push(bounds.site_at(cur as usize));
                if parent[cur as usize] == u32::MAX {
                    break;
                }
                cur = parent[cur as usize];
            }
            path.reverse();
            return Some(path);
        }
    }
    None
}

/// `P_{F,C}`: the largest white nearest-neighbour component of the mask
/// restricted to the margin-C sub-box `{C, …, F−1−C}^d` (relative to the
/// mask's window, which must be a box of side F). Ties break toward the
/// component with the smaller minimal site.
pub fn largest_component_in_box(mask: &SiteMask, f_side: i64, c_margin: i64) -> Result<Region> {
    if f_side <= 2 * c_margin {
        return Err(Error::Precondition(format!(
            "box side {f_side} must exceed twice the margin {c_margin}"
        )));
    }
    let bounds = mask.bounds;
    if (0..bounds.dim).any(|i| bounds.extent(i) != f_side) {
        return Err(Error::Precondition("mask window is not a box of side F".into()));
    }
    let anchor = Site::new(
        &(0..bounds.dim)
            .map(|i| bounds.min[i] + c_margin)
            .collect::<Vec<_>>(),
    );
    let inner = LatticeBox::new(anchor, f_side - 2 * c_margin);
    let shrunk_white: Region = inner
        .sites()
        .filter(|s| mask.is_white(s))
        .collect();
    let shrunk = SiteMask::from_region(&inner, &shrunk_white);
    let labeling = label_clusters(&shrunk, Adjacency::NearestNeighbor);
    Ok(match labeling.largest() {
        Some(id) => labeling.component_sites(id),
        None => Region::new(),
    })
}

/// Finite-size proxy for θ(p): the fraction of replicas in which the
/// origin's open cluster reaches the hull of the box of radius n centred at
/// the origin. Overestimates θ(p) (boundary reach is easier than an
/// infinite cluster); the bias shrinks as n grows.
pub fn estimate_theta(p: f64, n: i64, reps: u64, master_seed: u64, dim: usize) -> Summary {
    let window = LatticeBox::centered(Site::origin(dim), n);
    let hits: Vec<f64> = (0..reps)
        .map(|r| {
            let seed = crate::field::derive_seed(master_seed, 0x7E, r);
            let mask = SiteMask::percolation(seed, &window, p);
            if origin_reaches_hull(&mask) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    summarize(hits)
}

fn origin_reaches_hull(mask: &SiteMask) -> bool {
    let origin = Site::origin(mask.bounds.dim);
    if !mask.is_white(&origin) {
        return false;
    }
    let bounds = mask.bounds;
    let mut seen = vec![false; bounds.len()];
    let mut stack = vec![bounds.index(&origin)];
    seen[stack[0]] = true;
    while let Some(i) = stack.pop() {
        let s = bounds.site_at(i);
        if bounds.on_hull(&s) {
            return true;
        }
        Adjacency::NearestNeighbor.for_each_neighbor(&s, |t| {
            if mask.is_white(&t) {
                let j = bounds.index(&t);
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        });
    }
    false
}

/// One row of the cluster CSV.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ClusterRow {
    pub n: u64,
    pub replica: u64,
    pub component_size: u64,
    pub density: f64,
}

/// Writes `n,replica,component_size,density` rows.
pub fn write_cluster_csv(rows: &[ClusterRow], w: &mut impl Write) -> Result<()> {
    writeln!(w, "n,replica,component_size,density")?;
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| (r.n, r.replica));
    for r in &sorted {
        writeln!(w, "{},{},{},{}", r.n, r.replica, r.component_size, r.density)?;
    }
    Ok(())
}

/// Largest-component densities `|P_{n,C}| / n^d` per scale and replica.
pub fn component_density_series(
    p: f64,
    c_margin: i64,
    n_list: &[i64],
    reps: u64,
    master_seed: u64,
    dim: usize,
) -> Result<(EstimateSeries, Vec<ClusterRow>)> {
    let mut series = EstimateSeries::new("component_density", false);
    let mut rows = Vec::new();
    for &n in n_list {
        for r in 0..reps {
            let seed = crate::field::derive_seed(master_seed, 0xC0, r);
            let window = LatticeBox::at_origin(dim, n);
            let mask = SiteMask::percolation(seed, &window, p);
            let comp = largest_component_in_box(&mask, n, c_margin)?;
            let density = comp.len() as f64 / (n as f64).powi(dim as i32);
            series.push(Record {
                n: n as u64,
                seed,
                raw: comp.len() as f64,
                normalized: density,
            });
            rows.push(ClusterRow {
                n: n as u64,
                replica: r,
                component_size: comp.len() as u64,
                density,
            });
        }
    }
    series.sort();
    Ok((series, rows))
}

/// A site lying in `P_{n,C}` for every n in [n0, n1] on a single sampled
/// realization, if one exists (the minimal such site).
pub fn persistent_site(
    p: f64,
    c_margin: i64,
    n0: i64,
    n1: i64,
    seed: u64,
    dim: usize,
) -> Result<Option<Site>> {
    if !(n1 > n0 && n0 > 2 * c_margin) {
        return Err(Error::Precondition("need n1 > n0 > 2C".into()));
    }
    let outer = LatticeBox::at_origin(dim, n1);
    let mask = SiteMask::percolation(seed, &outer, p);
    let mut common: Option<Region> = None;
    for n in n0..=n1 {
        let window = LatticeBox::at_origin(dim, n);
        let sub_white: Region = window.sites().filter(|s| mask.is_white(s)).collect();
        let sub = SiteMask::from_region(&window, &sub_white);
        let comp = largest_component_in_box(&sub, n, c_margin)?;
        common = Some(match common {
            None => comp,
            Some(prev) => prev.intersection(&comp),
        });
        if common.as_ref().unwrap().is_empty() {
            return Ok(None);
        }
    }
    Ok(common.and_then(|r| r.first().cloned()))
}
