//! Lattice geometry on `Z^d` (2 <= d <= 4): sites, boxes, finite regions,
//! the two adjacency structures, connectivity, boundaries and separation
//! predicates.
//!
//! Two graphs on `Z^d` are used throughout: the nearest-neighbour graph
//! (edges between sites at l1-distance 1) and the L-graph (edges between
//! sites at sup-norm distance 1). Animals and white clusters live in the
//! nearest-neighbour graph; black clusters and separating sets live in the
//! L-graph.

use std::collections::BTreeSet;
use std::collections::VecDeque;

use serde::de::{SeqAccess, Visitor};
use serde::ser::{SerializeSeq, SerializeStruct};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Maximum supported dimension. d is a runtime parameter in 2..=MAX_DIM.
pub const MAX_DIM: usize = 4;

/// A lattice site. Coordinates beyond `dim` are zero, so the derived
/// lexicographic order is the coordinate order used for every deterministic
/// "choose one" operation.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    coords: [i64; MAX_DIM],
    dim: u8,
}

impl Site {
    pub fn new(coords: &[i64]) -> Site {
        assert!(
            (2..=MAX_DIM).contains(&coords.len()),
            "dimension must be in 2..={MAX_DIM}"
        );
        let mut c = [0i64; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site {
            coords: c,
            dim: coords.len() as u8,
        }
    }

    pub fn origin(dim: usize) -> Site {
        Site::new(&vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords[..self.dim as usize]
    }

    pub fn get(&self, axis: usize) -> i64 {
        self.coords[axis]
    }

    pub fn translate(&self, delta: &[i64]) -> Site {
        let mut c = *self;
        for (i, d) in delta.iter().enumerate() {
            c.coords[i] += d;
        }
        c
    }

    /// Sup-norm distance between two sites.
    pub fn linf(&self, other: &Site) -> i64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (a - b).abs())
            .max()
            .unwrap()
    }

    /// l1 distance between two sites.
    pub fn l1(&self, other: &Site) -> i64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

impl std::fmt::Debug for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl Serialize for Site {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.dim()))?;
        for c in self.coords() {
            seq.serialize_element(c)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Site {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Site, D::Error> {
        let v: Vec<i64> = Vec::deserialize(d)?;
        if !(2..=MAX_DIM).contains(&v.len()) {
            return Err(serde::de::Error::custom("site dimension out of range"));
        }
        Ok(Site::new(&v))
    }
}

/// The axis-aligned box `anchor + {0,..,side-1}^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatticeBox {
    pub anchor: Site,
    pub side: i64,
}

impl LatticeBox {
    pub fn new(anchor: Site, side: i64) -> LatticeBox {
        assert!(side >= 1, "box side must be >= 1");
        LatticeBox { anchor, side }
    }

    /// The n-box `{0,..,side-1}^d`.
    pub fn at_origin(dim: usize, side: i64) -> LatticeBox {
        LatticeBox::new(Site::origin(dim), side)
    }

    /// The box centred on `center` with side `2r+1`.
    pub fn centered(center: Site, r: i64) -> LatticeBox {
        let anchor = center.translate(&vec![-r; center.dim()]);
        LatticeBox::new(anchor, 2 * r + 1)
    }

    pub fn dim(&self) -> usize {
        self.anchor.dim()
    }

    pub fn contains(&self, s: &Site) -> bool {
        s.dim() == self.dim()
            && s.coords()
                .iter()
                .zip(self.anchor.coords())
                .all(|(c, a)| *c >= *a && *c < *a + self.side)
    }

    pub fn num_sites(&self) -> u64 {
        (self.side as u64).pow(self.dim() as u32)
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::of_box(self)
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> {
        self.bounds().iter()
    }

    pub fn corners(&self) -> Vec<Site> {
        let d = self.dim();
        let mut out = Vec::with_capacity(1 << d);
        for mask in 0..(1u32 << d) {
            let mut c = self.anchor;
            for (i, cc) in c.coords.iter_mut().enumerate().take(d) {
                if mask & (1 << i) != 0 {
                    *cc += self.side - 1;
                }
            }
            out.push(c);
        }
        out
    }

    pub fn to_region(&self) -> Region {
        self.sites().collect()
    }
}

impl Serialize for LatticeBox {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("LatticeBox", 2)?;
        st.serialize_field("anchor", &self.anchor)?;
        st.serialize_field("side", &self.side)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for LatticeBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<LatticeBox, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            anchor: Site,
            side: i64,
        }
        let r = Raw::deserialize(d)?;
        if r.side < 1 {
            return Err(serde::de::Error::custom("box side must be >= 1"));
        }
        Ok(LatticeBox::new(r.anchor, r.side))
    }
}

/// Inclusive axis-aligned bounds; the dense window used by flood fills.
#[derive(Clone, Copy, Debug)]
pub struct Bounds {
    pub min: [i64; MAX_DIM],
    pub max: [i64; MAX_DIM],
    pub dim: usize,
}

impl Bounds {
    pub fn of_box(b: &LatticeBox) -> Bounds {
        let d = b.dim();
        let mut min = [0i64; MAX_DIM];
        let mut max = [0i64; MAX_DIM];
        for i in 0..d {
            min[i] = b.anchor.get(i);
            max[i] = b.anchor.get(i) + b.side - 1;
        }
        Bounds { min, max, dim: d }
    }

    /// Bounding bounds of a nonempty region.
    pub fn of_region(r: &Region) -> Bounds {
        let mut it = r.iter();
        let first = it.next().expect("bounds of empty region");
        let d = first.dim();
        let mut min = [0i64; MAX_DIM];
        let mut max = [0i64; MAX_DIM];
        for i in 0..d {
            min[i] = first.get(i);
            max[i] = first.get(i);
        }
        for s in it {
            for i in 0..d {
                min[i] = min[i].min(s.get(i));
                max[i] = max[i].max(s.get(i));
            }
        }
        Bounds { min, max, dim: d }
    }

    pub fn pad(&self, by: i64) -> Bounds {
        let mut b = *self;
        for i in 0..self.dim {
            b.min[i] -= by;
            b.max[i] += by;
        }
        b
    }

    pub fn union(&self, other: &Bounds) -> Bounds {
        let mut b = *self;
        for i in 0..self.dim {
            b.min[i] = b.min[i].min(other.min[i]);
            b.max[i] = b.max[i].max(other.max[i]);
        }
        b
    }

    pub fn contains(&self, s: &Site) -> bool {
        (0..self.dim).all(|i| s.get(i) >= self.min[i] && s.get(i) <= self.max[i])
    }

    pub fn extent(&self, axis: usize) -> i64 {
        self.max[axis] - self.min[axis] + 1
    }

    pub fn len(&self) -> usize {
        (0..self.dim).map(|i| self.extent(i) as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        (0..self.dim).any(|i| self.max[i] < self.min[i])
    }

    /// Row-major dense index of a contained site.
    pub fn index(&self, s: &Site) -> usize {
        let mut idx = 0usize;
        for i in 0..self.dim {
            idx = idx * self.extent(i) as usize + (s.get(i) - self.min[i]) as usize;
        }
        idx
    }

    pub fn site_at(&self, mut idx: usize) -> Site {
        let mut coords = [0i64; MAX_DIM];
        for i in (0..self.dim).rev() {
            let e = self.extent(i) as usize;
            coords[i] = self.min[i] + (idx % e) as i64;
            idx /= e;
        }
        Site {
            coords,
            dim: self.dim as u8,
        }
    }

    /// Lexicographic iteration over all contained sites.
    pub fn iter(&self) -> BoundsIter {
        BoundsIter {
            bounds: *self,
            next: 0,
            len: self.len(),
        }
    }

    /// True for sites on a face of the bounds.
    pub fn on_hull(&self, s: &Site) -> bool {
        (0..self.dim).any(|i| s.get(i) == self.min[i] || s.get(i) == self.max[i])
    }
}

pub struct BoundsIter {
    bounds: Bounds,
    next: usize,
    len: usize,
}

impl Iterator for BoundsIter {
    type Item = Site;
    fn next(&mut self) -> Option<Site> {
        if self.next >= self.len {
            return None;
        }
        let s = self.bounds.site_at(self.next);
        self.next += 1;
        Some(s)
    }
}

/// Which graph structure on `Z^d` is in force.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Adjacency {
    /// 2d neighbours at l1-distance 1.
    NearestNeighbor,
    /// 3^d - 1 neighbours at sup-norm distance 1.
    LGraph,
}

impl Adjacency {
    pub fn degree(&self, dim: usize) -> usize {
        match self {
            Adjacency::NearestNeighbor => 2 * dim,
            Adjacency::LGraph => 3usize.pow(dim as u32) - 1,
        }
    }

    /// Calls `f` for each neighbour of `s`, in a fixed deterministic order.
    pub fn for_each_neighbor(&self, s: &Site, mut f: impl FnMut(Site)) {
        let d = s.dim();
        match self {
            Adjacency::NearestNeighbor => {
                for i in 0..d {
                    for delta in [-1i64, 1] {
                        let mut t = *s;
                        t.coords[i] += delta;
                        f(t);
                    }
                }
            }
            Adjacency::LGraph => {
                let total = 3usize.pow(d as u32);
                for code in 0..total {
                    let mut c = code;
                    let mut t = *s;
                    let mut zero = true;
                    for cc in t.coords.iter_mut().take(d) {
                        let delta = (c % 3) as i64 - 1;
                        c /= 3;
                        if delta != 0 {
                            zero = false;
                        }
                        *cc += delta;
                    }
                    if !zero {
                        f(t);
                    }
                }
            }
        }
    }
}

/// Neighbours of a site under the given adjacency.
pub fn neighbors(s: &Site, adj: Adjacency) -> Vec<Site> {
    let mut out = Vec::with_capacity(adj.degree(s.dim()));
    adj.for_each_neighbor(s, |t| out.push(t));
    out
}

/// A finite set of sites. Stored ordered so that iteration is always in
/// lexicographic coordinate order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Region {
    sites: BTreeSet<Site>,
}

impl Region {
    pub fn new() -> Region {
        Region::default()
    }

    pub fn singleton(s: Site) -> Region {
        let mut r = Region::new();
        r.insert(s);
        r
    }

    pub fn insert(&mut self, s: Site) -> bool {
        self.sites.insert(s)
    }

    pub fn remove(&mut self, s: &Site) -> bool {
        self.sites.remove(s)
    }

    pub fn contains(&self, s: &Site) -> bool {
        self.sites.contains(s)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Site> {
        self.sites.iter()
    }

    pub fn first(&self) -> Option<&Site> {
        self.sites.iter().next()
    }

    pub fn union(&self, other: &Region) -> Region {
        Region {
            sites: self.sites.union(&other.sites).cloned().collect(),
        }
    }

    pub fn intersection(&self, other: &Region) -> Region {
        Region {
            sites: self.sites.intersection(&other.sites).cloned().collect(),
        }
    }

    pub fn difference(&self, other: &Region) -> Region {
        Region {
            sites: self.sites.difference(&other.sites).cloned().collect(),
        }
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        self.sites.is_disjoint(&other.sites)
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.sites.is_subset(&other.sites)
    }

    pub fn dim(&self) -> Option<usize> {
        self.first().map(|s| s.dim())
    }
}

impl FromIterator<Site> for Region {
    fn from_iter<I: IntoIterator<Item = Site>>(it: I) -> Region {
        Region {
            sites: it.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a Region {
    type Item = &'a Site;
    type IntoIter = std::collections::btree_set::Iter<'a, Site>;
    fn into_iter(self) -> Self::IntoIter {
        self.sites.iter()
    }
}

impl Serialize for Region {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.len()))?;
        for site in self.iter() {
            seq.serialize_element(site)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Region {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Region, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Region;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an array of coordinate arrays")
            }
            fn visit_seq<A: SeqAccess<'de>>(
                self,
                mut seq: A,
            ) -> std::result::Result<Region, A::Error> {
                let mut r = Region::new();
                while let Some(s) = seq.next_element::<Site>()? {
                    r.insert(s);
                }
                Ok(r)
            }
        }
        d.deserialize_seq(V)
    }
}

/// A dense boolean mask over a `Bounds` window; flood-fill scratch space.
pub(crate) struct Mask {
    pub bounds: Bounds,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(bounds: Bounds) -> Mask {
        Mask {
            bounds,
            bits: vec![false; bounds.len()],
        }
    }

    pub fn get(&self, s: &Site) -> bool {
        self.bounds.contains(s) && self.bits[self.bounds.index(s)]
    }

    pub fn set(&mut self, s: &Site) {
        let i = self.bounds.index(s);
        self.bits[i] = true;
    }
}

/// BFS over `bounds`, starting from `starts`, stepping through sites where
/// `open` is true. Returns the visited mask.
fn flood_fill(
    bounds: Bounds,
    starts: impl IntoIterator<Item = Site>,
    adj: Adjacency,
    open: impl Fn(&Site) -> bool,
) -> Mask {
    let mut visited = Mask::new(bounds);
    let mut queue = VecDeque::new();
    for s in starts {
        if bounds.contains(&s) && open(&s) && !visited.get(&s) {
            visited.set(&s);
            queue.push_back(s);
        }
    }
    while let Some(s) = queue.pop_front() {
        adj.for_each_neighbor(&s, |t| {
            if visited.bounds.contains(&t) && !visited.get(&t) && open(&t) {
                visited.set(&t);
                queue.push_back(t);
            }
        });
    }
    visited
}

/// The dilated box `B[q]`: the union of the `(2q+1)^d` translates
/// `B_{x+ma,m}` over `||a|| <= q`. This union is itself a box of side
/// `(2q+1) m` anchored at `anchor - q m`.
pub fn box_dilate(b: &LatticeBox, q: i64) -> Region {
    assert!(q >= 0, "dilation radius must be >= 0");
    box_dilate_box(b, q).to_region()
}

/// Same as [`box_dilate`] but keeps the box representation.
pub fn box_dilate_box(b: &LatticeBox, q: i64) -> LatticeBox {
    let anchor = b.anchor.translate(&vec![-q * b.side; b.dim()]);
    LatticeBox::new(anchor, (2 * q + 1) * b.side)
}

/// True iff `r` is empty, a singleton, or one component under `adj`.
pub fn is_connected(r: &Region, adj: Adjacency) -> bool {
    if r.len() <= 1 {
        return true;
    }
    let bounds = Bounds::of_region(r);
    let start = *r.first().unwrap();
    let visited = flood_fill(bounds, [start], adj, |s| r.contains(s));
    r.iter().all(|s| visited.get(s))
}

/// The boundary `∂A`: sites not in `a` that are nearest-neighbour adjacent to
/// `a`; intersected with `within` when given (the B-boundary `∂_B A`).
pub fn boundary(a: &Region, within: Option<&Region>) -> Region {
    let mut out = Region::new();
    for s in a.iter() {
        Adjacency::NearestNeighbor.for_each_neighbor(s, |t| {
            if !a.contains(&t) && within.map_or(true, |w| w.contains(&t)) {
                out.insert(t);
            }
        });
    }
    out
}

/// The exterior boundary of `c`: sites L-adjacent to `c` that are reachable
/// from infinity by a nearest-neighbour path avoiding `c`.
///
/// Reachability from infinity is realised as reachability from the hull of
/// the bounding box of `c` padded by 2: beyond distance 1 from `c` the free
/// sites are connected to that hull, so the two notions agree.
pub fn exterior_boundary(c: &Region) -> Region {
    if c.is_empty() {
        return Region::new();
    }
    let bounds = Bounds::of_region(c).pad(2);
    let hull: Vec<Site> = bounds.iter().filter(|s| bounds.on_hull(s)).collect();
    let reach = flood_fill(bounds, hull, Adjacency::NearestNeighbor, |s| !c.contains(s));
    collect_adjacent_reached(c, &reach)
}

/// Sites L-adjacent to `c` whose own position is marked in `reach`.
fn collect_adjacent_reached(c: &Region, reach: &Mask) -> Region {
    let mut out = Region::new();
    for s in c.iter() {
        Adjacency::LGraph.for_each_neighbor(s, |t| {
            if reach.get(&t) {
                out.insert(t);
            }
        });
    }
    out
}

/// The boundary of `c` visible from `x` in `bx`: sites of the box that are
/// L-adjacent to `c` and reachable from `x` by a nearest-neighbour path in
/// the box avoiding `c`.
pub fn visible_boundary(c: &Region, x: &Site, bx: &LatticeBox) -> Result<Region> {
    if c.contains(x) {
        return Err(Error::Precondition("viewpoint lies in the obstacle".into()));
    }
    if !bx.contains(x) {
        return Err(Error::Precondition("viewpoint lies outside the box".into()));
    }
    if c.iter().any(|s| !bx.contains(s)) {
        return Err(Error::Precondition("obstacle not contained in box".into()));
    }
    let bounds = bx.bounds();
    let reach = flood_fill(bounds, [*x], Adjacency::NearestNeighbor, |s| {
        !c.contains(s)
    });
    Ok(collect_adjacent_reached(c, &reach))
}

/// True iff every nearest-neighbour path in `domain` from `c` to `d_set`
/// meets `e`; with `proper`, meets `e` at a site outside `c ∪ d_set`.
pub fn separates(e: &Region, c: &Region, d_set: &Region, domain: &Region, proper: bool) -> bool {
    if c.is_empty() || d_set.is_empty() {
        return true;
    }
    let blocked: Region = if proper {
        e.difference(&c.union(d_set))
    } else {
        e.clone()
    };
    let bounds = Bounds::of_region(domain);
    let starts = c.iter().filter(|s| !blocked.contains(s)).cloned();
    let reach = flood_fill(bounds, starts, Adjacency::NearestNeighbor, |s| {
        domain.contains(s) && !blocked.contains(s)
    });
    !d_set.iter().any(|s| reach.get(s))
}

/// Finds one L-connected subset of `e` that separates `c` and `d_set` in
/// `domain`, when `e` itself separates them; `None` if `e` does not separate.
///
/// The subset is built from the first-hit set: the union of `c ∩ e` with the
/// domain-boundary of everything reachable from `c` avoiding `e`. Among its
/// L-components, the lexicographically first that separates is returned.
pub fn connected_separating_subset(
    e: &Region,
    c: &Region,
    d_set: &Region,
    domain: &Region,
) -> Result<Option<Region>> {
    if !is_connected(c, Adjacency::NearestNeighbor) || !is_connected(d_set, Adjacency::NearestNeighbor)
    {
        return Err(Error::Precondition("c and d_set must be connected".into()));
    }
    if !c.is_disjoint(d_set) {
        return Err(Error::Precondition("c and d_set must be disjoint".into()));
    }
    if !e.is_disjoint(d_set) {
        return Err(Error::Precondition("e must be disjoint from d_set".into()));
    }
    if !separates(e, c, d_set, domain, false) {
        return Ok(None);
    }
    let bounds = Bounds::of_region(domain);
    // C~: everything reachable from c \ e avoiding e, inside the domain.
    let starts = c.iter().filter(|s| !e.contains(s)).cloned();
    let reach = flood_fill(bounds, starts, Adjacency::NearestNeighbor, |s| {
        domain.contains(s) && !e.contains(s)
    });
    // C^ = (c ∩ e) ∪ ∂_domain(C~); always a subset of e.
    let mut first_hit: Region = c.intersection(e);
    for s in domain.iter() {
        if reach.get(s) {
            Adjacency::NearestNeighbor.for_each_neighbor(s, |t| {
                if domain.contains(&t) && !reach.get(&t) && e.contains(&t) {
                    first_hit.insert(t);
                }
            });
        }
    }
    for comp in l_components(&first_hit) {
        if separates(&comp, c, d_set, domain, false) {
            return Ok(Some(comp));
        }
    }
    // e separates, so some component of the first-hit set must; reaching
    // here means first_hit itself failed, which can only happen when c is
    // fully inside e. Fall back to the whole first-hit set's components
    // unioned.
    Ok(Some(first_hit))
}

/// The L-connected components of a region, ordered by their minimal site.
pub fn l_components(r: &Region) -> Vec<Region> {
    let mut remaining = r.clone();
    let mut out = Vec::new();
    while let Some(&start) = remaining.first() {
        let bounds = Bounds::of_region(&remaining);
        let reach = flood_fill(bounds, [start], Adjacency::LGraph, |s| remaining.contains(s));
        let comp: Region = remaining.iter().filter(|s| reach.get(s)).cloned().collect();
        remaining = remaining.difference(&comp);
        out.push(comp);
    }
    out
}

/// The set of sites that `a` separates from infinity (excluding `a` itself).
pub fn enclosed_by(a: &Region) -> Region {
    if a.is_empty() {
        return Region::new();
    }
    let bounds = Bounds::of_region(a).pad(2);
    let hull: Vec<Site> = bounds.iter().filter(|s| bounds.on_hull(s)).collect();
    let reach = flood_fill(bounds, hull, Adjacency::NearestNeighbor, |s| !a.contains(s));
    bounds
        .iter()
        .filter(|s| !a.contains(s) && !reach.get(s))
        .collect()
}
