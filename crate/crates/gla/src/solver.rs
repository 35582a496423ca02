//! Exact and heuristic solvers for the three maximum-weight animal problems:
//! origin-rooted fixed size, box-constrained free size (with the minimal-size
//! tie-break), and box-constrained fixed size.
//!
//! The exact search enumerates connected subsets in a canonical
//! Redelmeier-style growth order (each subset visited exactly once) with an
//! admissible branch-and-bound prune; the heuristic is greedy accretion
//! followed by simulated annealing over connectivity-preserving moves.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::FromPrimitive;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{derive_seed, region_weight, ScoreSource};
use crate::lattice::{Adjacency, Bounds, LatticeBox, Region, Site};

/// A connected set of sites with its cached total score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnimalWire", into = "AnimalWire")]
pub struct Animal {
    sites: Region,
    weight: f64,
}

#[derive(Serialize, Deserialize, Clone)]
struct AnimalWire {
    sites: Region,
    weight: f64,
}

impl From<Animal> for AnimalWire {
    fn from(a: Animal) -> AnimalWire {
        AnimalWire {
            sites: a.sites,
            weight: a.weight,
        }
    }
}

impl TryFrom<AnimalWire> for Animal {
    type Error = Error;
    fn try_from(w: AnimalWire) -> Result<Animal> {
        Animal::from_parts(w.sites, w.weight)
    }
}

impl Animal {
    /// Builds an animal, validating nearest-neighbour connectivity.
    pub fn from_region(sites: Region, f: &impl ScoreSource) -> Result<Animal> {
        let weight = region_weight(f, &sites);
        Animal::from_parts(sites, weight)
    }

    pub fn from_parts(sites: Region, weight: f64) -> Result<Animal> {
        if sites.is_empty() {
            return Err(Error::Precondition("animal must be nonempty".into()));
        }
        if !crate::lattice::is_connected(&sites, Adjacency::NearestNeighbor) {
            return Err(Error::Precondition("animal sites are not connected".into()));
        }
        Ok(Animal { sites, weight })
    }

    pub fn sites(&self) -> &Region {
        &self.sites
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn size(&self) -> usize {
        self.sites.len()
    }
}

/// Outcome of a solve: the best value found, its witness, whether the value
/// is the true maximum or only a feasible lower bound, and the search effort.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "SolveResultWire", into = "SolveResultWire")]
pub struct SolveResult {
    pub value: f64,
    pub witness: Animal,
    pub optimal: bool,
    pub nodes_explored: u64,
}

#[derive(Serialize, Deserialize, Clone)]
struct SolveResultWire {
    value: f64,
    size: u64,
    sites: Region,
    optimal: bool,
    nodes_explored: u64,
}

impl From<SolveResult> for SolveResultWire {
    fn from(r: SolveResult) -> SolveResultWire {
        SolveResultWire {
            value: r.value,
            size: r.witness.size() as u64,
            sites: r.witness.sites.clone(),
            optimal: r.optimal,
            nodes_explored: r.nodes_explored,
        }
    }
}

impl TryFrom<SolveResultWire> for SolveResult {
    type Error = Error;
    fn try_from(w: SolveResultWire) -> Result<SolveResult> {
        if w.size != w.sites.len() as u64 {
            return Err(Error::InvalidInput("size field disagrees with sites".into()));
        }
        Ok(SolveResult {
            value: w.value,
            witness: Animal::from_parts(w.sites, w.value)?,
            optimal: w.optimal,
            nodes_explored: w.nodes_explored,
        })
    }
}

/// Exact-search limits: refuse instances beyond these rather than run away.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Budget {
    pub max_exact_size: usize,
    pub max_nodes: u64,
}

impl Default for Budget {
    fn default() -> Budget {
        Budget {
            max_exact_size: 18,
            max_nodes: 10_000_000,
        }
    }
}

/// One of the three optimization problems (plus the corner-reach variant
/// requiring the witness to meet a target set).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Instance {
    /// max S(ξ) over connected ξ ∋ 0 with |ξ| = n.
    RootedFixedSize { n: u64 },
    /// max S(ξ) over nonempty connected ξ ⊆ b; minimal size breaks ties.
    BoxFree { b: LatticeBox },
    /// max S(ξ) over connected ξ ⊆ b with |ξ| = k.
    BoxFixedSize { b: LatticeBox, k: u64 },
    /// As BoxFree but the witness must intersect `targets`.
    BoxFreeIntersecting { b: LatticeBox, targets: Region },
}

impl Instance {
    fn window(&self, dim: usize) -> Bounds {
        match self {
            Instance::RootedFixedSize { n } => {
                LatticeBox::centered(Site::origin(dim), (*n as i64) - 1).bounds()
            }
            Instance::BoxFree { b }
            | Instance::BoxFixedSize { b, .. }
            | Instance::BoxFreeIntersecting { b, .. } => b.bounds(),
        }
    }

    fn fixed_size(&self) -> Option<u64> {
        match self {
            Instance::RootedFixedSize { n } => Some(*n),
            Instance::BoxFixedSize { k, .. } => Some(*k),
            _ => None,
        }
    }

    fn root(&self, dim: usize) -> Option<Site> {
        match self {
            Instance::RootedFixedSize { .. } => Some(Site::origin(dim)),
            _ => None,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Instance::RootedFixedSize { n } => {
                if *n == 0 {
                    return Err(Error::InvalidInput("size must be at least 1".into()));
                }
            }
            Instance::BoxFree { b } | Instance::BoxFreeIntersecting { b, .. } => {
                if b.dim() != dim {
                    return Err(Error::InvalidInput("box dimension mismatch".into()));
                }
            }
            Instance::BoxFixedSize { b, k } => {
                if b.dim() != dim {
                    return Err(Error::InvalidInput("box dimension mismatch".into()));
                }
                if *k == 0 || *k > b.num_sites() {
                    return Err(Error::InvalidInput(format!(
                        "fixed size {k} outside 1..={}",
                        b.num_sites()
                    )));
                }
            }
        }
        if let Instance::BoxFreeIntersecting { b, targets } = self {
            if targets.is_empty() || targets.iter().any(|s| !b.contains(s)) {
                return Err(Error::InvalidInput(
                    "target set must be nonempty and inside the box".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Dense window with precomputed scores and neighbour indices.
struct Window {
    bounds: Bounds,
    scores: Vec<f64>,
    nbrs: Vec<Vec<u32>>,
    max_pos: f64,
    /// suffix_pos[i] = sum of positive scores at indices >= i
    suffix_pos: Vec<f64>,
    /// classification against the two-point support, when available
    exact: Option<TwoPointExact>,
}

struct TwoPointExact {
    hi: BigRational,
    lo: BigRational,
    is_hi: Vec<bool>,
}

impl Window {
    fn build(f: &impl ScoreSource, bounds: Bounds, adj: Adjacency) -> Window {
        let len = bounds.len();
        let mut scores = Vec::with_capacity(len);
        let mut nbrs = Vec::with_capacity(len);
        for i in 0..len {
            let s = bounds.site_at(i);
            scores.push(f.score(&s));
            let mut ns = Vec::with_capacity(adj.degree(bounds.dim));
            adj.for_each_neighbor(&s, |t| {
                if bounds.contains(&t) {
                    ns.push(bounds.index(&t) as u32);
                }
            });
            nbrs.push(ns);
        }
        let max_pos = scores.iter().cloned().fold(0.0f64, f64::max);
        let mut suffix_pos = vec![0.0f64; len + 1];
        for i in (0..len).rev() {
            suffix_pos[i] = suffix_pos[i + 1] + scores[i].max(0.0);
        }
        let exact = f.two_support().and_then(|(hi, lo)| {
            let hi_r = BigRational::from_f64(hi)?;
            let lo_r = BigRational::from_f64(lo)?;
            let is_hi = scores.iter().map(|&x| x == hi).collect();
            Some(TwoPointExact {
                hi: hi_r,
                lo: lo_r,
                is_hi,
            })
        });
        Window {
            bounds,
            scores,
            nbrs,
            max_pos,
            suffix_pos,
            exact,
        }
    }
}

/// Slack under which two float values are treated as a potential tie and
/// referred to exact arithmetic (or declared equal for continuous laws).
const VALUE_TOL: f64 = 1e-9;

/// The running best candidate with full tie-break data.
struct Best {
    value: f64,
    counts: (u64, u64),
    sites: Vec<u32>,
}

/// Total order on candidates: higher value first; among value ties, smaller
/// size; among those, lexicographically smaller site set.
fn candidate_better(
    win: &Window,
    cand_value: f64,
    cand_counts: (u64, u64),
    cand_sites: &[u32],
    best: &Best,
) -> bool {
    let dv = cand_value - best.value;
    if dv.abs() > VALUE_TOL {
        return dv > 0.0;
    }
    if let Some(ex) = &win.exact {
        let v = |(h, l): (u64, u64)| {
            &ex.hi * BigRational::from(BigInt::from(h)) + &ex.lo * BigRational::from(BigInt::from(l))
        };
        let cv = v(cand_counts);
        let bv = v(best.counts);
        if cv != bv {
            return cv > bv;
        }
    }
    // value tie: smaller size, then lexicographically smaller site set
    if cand_sites.len() != best.sites.len() {
        return cand_sites.len() < best.sites.len();
    }
    let mut a: Vec<u32> = cand_sites.to_vec();
    let mut b: Vec<u32> = best.sites.clone();
    a.sort_unstable();
    b.sort_unstable();
    a < b
}

/// Canonical connected-subset enumeration with pruning hooks.
///
/// `rec` explores every connected superset of the current set exactly once:
/// candidates are consumed in order, and once a candidate's inclusion branch
/// has been fully explored it is excluded from the rest of the subtree.
struct Search<'w, V: Visitor> {
    win: &'w Window,
    visitor: &'w mut V,
    fixed_size: Option<usize>,
    max_size: Option<usize>,
    current: Vec<u32>,
    cur_weight: f64,
    cur_counts: (u64, u64),
    reached: Vec<bool>,
    pos_avail: f64,
    nodes: u64,
    max_nodes: u64,
}

trait Visitor {
    /// Called on every feasible candidate set.
    fn emit(&mut self, value: f64, counts: (u64, u64), sites: &[u32]) -> Result<()>;
    /// Extra pruning test (beyond size limits); `bound` is an upper bound on
    /// any value attainable in the subtree.
    fn keep_descending(&mut self, bound: f64) -> bool;
}

impl<'w, V: Visitor> Search<'w, V> {
    fn new(win: &'w Window, visitor: &'w mut V, fixed_size: Option<usize>, max_nodes: u64) -> Self {
        Search {
            win,
            visitor,
            fixed_size,
            max_size: None,
            current: Vec::new(),
            cur_weight: 0.0,
            cur_counts: (0, 0),
            reached: vec![false; win.bounds.len()],
            pos_avail: 0.0,
            nodes: 0,
            max_nodes,
        }
    }

    fn add(&mut self, idx: u32) {
        let sc = self.win.scores[idx as usize];
        self.current.push(idx);
        self.cur_weight += sc;
        if sc > 0.0 {
            self.pos_avail -= sc;
        }
        if let Some(ex) = &self.win.exact {
            if ex.is_hi[idx as usize] {
                self.cur_counts.0 += 1;
            } else {
                self.cur_counts.1 += 1;
            }
        }
    }

    fn drop_last(&mut self, idx: u32) {
        let sc = self.win.scores[idx as usize];
        self.current.pop();
        self.cur_weight -= sc;
        if let Some(ex) = &self.win.exact {
            if ex.is_hi[idx as usize] {
                self.cur_counts.0 -= 1;
            } else {
                self.cur_counts.1 -= 1;
            }
        }
        // the site stays excluded: its positive mass is restored by the
        // owning loop frame when it finishes
    }

    fn bound(&self) -> f64 {
        match self.fixed_size {
            Some(k) => {
                self.cur_weight + (k - self.current.len()) as f64 * self.win.max_pos
            }
            None => self.cur_weight + self.pos_avail,
        }
    }

    /// Explores all connected supersets of the current set reachable through
    /// `untried` (in order), excluding each candidate after its branch.
    fn rec(&mut self, untried: &[u32]) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.max_nodes {
            return Err(Error::BudgetExceeded {
                nodes: self.nodes,
                cap: self.max_nodes,
            });
        }
        let feasible = match self.fixed_size {
            Some(k) => self.current.len() == k,
            None => !self.current.is_empty(),
        };
        if feasible {
            self.visitor
                .emit(self.cur_weight, self.cur_counts, &self.current)?;
        }
        if let Some(k) = self.fixed_size {
            if self.current.len() >= k {
                return Ok(());
            }
        }
        if let Some(m) = self.max_size {
            if self.current.len() >= m {
                return Ok(());
            }
        }
        let mut excluded_pos = 0.0f64;
        let mut child: Vec<u32> = Vec::new();
        let mut newly: Vec<u32> = Vec::new();
        for (i, &c) in untried.iter().enumerate() {
            if !self.visitor.keep_descending(self.bound()) {
                break;
            }
            // inclusion branch for c
            child.clear();
            child.extend_from_slice(&untried[i + 1..]);
            newly.clear();
            for &nb in &self.win.nbrs[c as usize] {
                if !self.reached[nb as usize] {
                    self.reached[nb as usize] = true;
                    newly.push(nb);
                    child.push(nb);
                }
            }
            self.add(c);
            let child_owned = std::mem::take(&mut child);
            self.rec(&child_owned)?;
            child = child_owned;
            self.drop_last(c);
            for &nb in &newly {
                self.reached[nb as usize] = false;
            }
            // c is excluded for the remaining candidates of this frame
            let sc = self.win.scores[c as usize];
            if sc > 0.0 {
                excluded_pos += sc;
            }
        }
        self.pos_avail += excluded_pos;
        Ok(())
    }

    /// Runs the search from a given root with the given pre-excluded sites.
    fn run_root(&mut self, root: u32, banned: &[u32]) -> Result<()> {
        for r in self.reached.iter_mut() {
            *r = false;
        }
        self.current.clear();
        self.cur_weight = 0.0;
        self.cur_counts = (0, 0);
        let mut banned_pos = 0.0;
        for &b in banned {
            self.reached[b as usize] = true;
            let sc = self.win.scores[b as usize];
            if sc > 0.0 {
                banned_pos += sc;
            }
        }
        self.pos_avail = self.win.suffix_pos[0] - banned_pos;
        self.reached[root as usize] = true;
        self.add(root);
        let root_nbrs: Vec<u32> = self.win.nbrs[root as usize].clone();
        let mut untried: Vec<u32> = Vec::with_capacity(root_nbrs.len());
        for nb in root_nbrs {
            if !self.reached[nb as usize] {
                self.reached[nb as usize] = true;
                untried.push(nb);
            }
        }
        self.rec(&untried)
    }
}

/// Solve visitor with window-aware exact comparison and pruning.
struct PrunedVisitor<'w> {
    win: &'w Window,
    best: Option<Best>,
}

impl<'w> Visitor for PrunedVisitor<'w> {
    fn emit(&mut self, value: f64, counts: (u64, u64), sites: &[u32]) -> Result<()> {
        let take = match &self.best {
            None => true,
            Some(b) => candidate_better(self.win, value, counts, sites, b),
        };
        if take {
            self.best = Some(Best {
                value,
                counts,
                sites: sites.to_vec(),
            });
        }
        Ok(())
    }

    fn keep_descending(&mut self, bound: f64) -> bool {
        match &self.best {
            None => true,
            // keep subtrees that could still tie: ties may carry a smaller
            // witness, which the tie-break prefers
            Some(b) => bound >= b.value - VALUE_TOL,
        }
    }
}

fn best_to_result(
    win: &Window,
    best: Option<Best>,
    nodes: u64,
    optimal: bool,
) -> Result<SolveResult> {
    let best = best.ok_or_else(|| Error::Precondition("no feasible animal exists".into()))?;
    let sites: Region = best
        .sites
        .iter()
        .map(|&i| win.bounds.site_at(i as usize))
        .collect();
    Ok(SolveResult {
        value: best.value,
        witness: Animal::from_parts(sites, best.value)?,
        optimal,
        nodes_explored: nodes,
    })
}

/// Exact solve of any instance within the budget.
pub fn solve_exact(f: &impl ScoreSource, inst: &Instance, budget: &Budget) -> Result<SolveResult> {
    inst.validate(f.dim())?;
    if let Some(k) = inst.fixed_size() {
        if k as usize > budget.max_exact_size {
            return Err(Error::BudgetExceeded {
                nodes: k,
                cap: budget.max_exact_size as u64,
            });
        }
    }
    let bounds = inst.window(f.dim());
    let win = Window::build(f, bounds, Adjacency::NearestNeighbor);
    let mut vis = PrunedVisitor {
        win: &win,
        best: None,
    };
    let fixed = inst.fixed_size().map(|k| k as usize);
    let nodes;
    {
        let mut search = Search::new(&win, &mut vis, fixed, budget.max_nodes);
        match inst {
            Instance::RootedFixedSize { .. } => {
                let root = win.bounds.index(&Site::origin(win.bounds.dim)) as u32;
                search.run_root(root, &[])?;
            }
            Instance::BoxFree { .. } | Instance::BoxFixedSize { .. } => {
                // each connected subset is found exactly once, rooted at its
                // minimal site: later roots exclude all earlier sites
                let len = win.bounds.len() as u32;
                let mut banned: Vec<u32> = Vec::new();
                for root in 0..len {
                    search.run_root(root, &banned)?;
                    banned.push(root);
                }
            }
            Instance::BoxFreeIntersecting { targets, .. } => {
                // rooted at the minimal target site the subset contains
                let mut target_idx: Vec<u32> = targets
                    .iter()
                    .map(|s| win.bounds.index(s) as u32)
                    .collect();
                target_idx.sort_unstable();
                let mut banned: Vec<u32> = Vec::new();
                for &root in &target_idx {
                    search.run_root(root, &banned)?;
                    banned.push(root);
                }
            }
        }
        nodes = search.nodes;
    }
    let best = vis.best.take();
    best_to_result(&win, best, nodes, true)
}

/// `N_n`: exact maximum over connected origin-containing sets of size n,
/// searched within the sup-norm ball of radius n − 1.
pub fn solve_rooted_fixed_size(
    f: &impl ScoreSource,
    n: u64,
    budget: &Budget,
) -> Result<SolveResult> {
    solve_exact(f, &Instance::RootedFixedSize { n }, budget)
}

///// Free-size result: the maximum `G_B` plus the minimal maximizer size `L_B`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoxSolve {
    pub result: SolveResult,
    /// minimal |ξ| among maximizers (the witness attains it)
    pub min_size: u64,
}

/// `G_B` and `L_B`: exact free-size maximum over nonempty connected subsets
/// of the box, witness of minimal size among maximizers.
pub fn solve_box(f: &impl ScoreSource, b: &LatticeBox, budget: &Budget) -> Result<BoxSolve> {
    let result = solve_exact(f, &Instance::BoxFree { b: *b }, budget)?;
    let min_size = result.witness.size() as u64;
    Ok(BoxSolve { result, min_size })
}

/// Fixed-size maximum over connected k-subsets of the box.
pub fn solve_box_fixed_size(
    f: &impl ScoreSource,
    b: &LatticeBox,
    k: u64,
    budget: &Budget,
) -> Result<SolveResult> {
    solve_exact(f, &Instance::BoxFixedSize { b: *b, k }, budget)
}

/// Annealing schedule and restart policy for the heuristic.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HeuristicParams {
    pub restarts: u32,
    pub moves_per_restart: u32,
    pub cooling: f64,
    /// T0 = t0_factor × max |score| over the window
    pub t0_factor: f64,
}

impl Default for HeuristicParams {
    fn default() -> HeuristicParams {
        HeuristicParams {
            restarts: 32,
            moves_per_restart: 10_000,
            cooling: 0.995,
            t0_factor: 2.0,
        }
    }
}

/// Heuristic lower-bound solve: greedy accretion from the best seeds, then
/// simulated annealing over add / remove / exchange moves that preserve
/// connectivity, the root and (where required) the size. Always feasible, so
/// the reported value never exceeds the exact optimum.
pub fn heuristic_solve(
    f: &impl ScoreSource,
    inst: &Instance,
    params: &HeuristicParams,
    seed: u64,
) -> Result<SolveResult> {
    inst.validate(f.dim())?;
    let bounds = inst.window(f.dim());
    let win = Window::build(f, bounds, Adjacency::NearestNeighbor);
    let fixed = inst.fixed_size().map(|k| k as usize);
    let root = inst.root(f.dim()).map(|s| win.bounds.index(&s) as u32);
    let must_hit: Option<Vec<u32>> = match inst {
        Instance::BoxFreeIntersecting { targets, .. } => Some(
            targets.iter().map(|s| win.bounds.index(s) as u32).collect(),
        ),
        _ => None,
    };
    let t0 = params.t0_factor
        * win
            .scores
            .iter()
            .map(|x| x.abs())
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);

    let runs: Vec<Best> = (0..params.restarts.max(1))
        .into_par_iter()
        .filter_map(|r| {
            let rng_seed = derive_seed(seed, 0x5A, r as u64);
            anneal_once(
                &win,
                fixed,
                root,
                must_hit.as_deref(),
                params,
                t0,
                rng_seed,
            )
        })
        .collect();
    let mut best: Option<Best> = None;
    for cand in runs {
        let take = match &best {
            None => true,
            Some(b) => candidate_better(&win, cand.value, cand.counts, &cand.sites, b),
        };
        if take {
            best = Some(cand);
        }
    }
    let mut res = best_to_result(&win, best, 0, false)?;
    // recompute the weight from scratch to shed any incremental float drift
    res.value = region_weight(f, res.witness.sites());
    res.witness.weight = res.value;
    Ok(res)
}

/// One greedy + annealing run; returns its best candidate.
fn anneal_once(
    win: &Window,
    fixed: Option<usize>,
    root: Option<u32>,
    must_hit: Option<&[u32]>,
    params: &HeuristicParams,
    t0: f64,
    rng_seed: u64,
) -> Option<Best> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let len = win.bounds.len();
    let mut in_cur = vec![false; len];
    let mut cur: Vec<u32> = Vec::new();

    // seed site: the root if any, else the best-scoring admissible site
    // (within the target set when one is required)
    let seed_site = match root {
        Some(r) => r,
        None => {
            let candidates: Vec<u32> = match must_hit {
                Some(t) => t.to_vec(),
                None => (0..len as u32).collect(),
            };
            *candidates
                .iter()
                .max_by(|&&a, &&b| {
                    win.scores[a as usize]
                        .partial_cmp(&win.scores[b as usize])
                        .unwrap()
                })
                .unwrap()
        }
    };
    cur.push(seed_site);
    in_cur[seed_site as usize] = true;
    let mut weight = win.scores[seed_site as usize];

    let boundary = |cur: &[u32], in_cur: &[bool]| -> Vec<u32> {
        let mut out = Vec::new();
        let mut seen = vec![false; win.bounds.len()];
        for &c in cur {
            for &nb in &win.nbrs[c as usize] {
                if !in_cur[nb as usize] && !seen[nb as usize] {
                    seen[nb as usize] = true;
                    out.push(nb);
                }
            }
        }
        out
    };

    // greedy accretion
    loop {
        let target_reached = match fixed {
            Some(k) => cur.len() >= k,
            None => false,
        };
        if target_reached {
            break;
        }
        let bd = boundary(&cur, &in_cur);
        if bd.is_empty() {
            break;
        }
        let &bestb = bd
            .iter()
            .max_by(|&&a, &&b| {
                win.scores[a as usize]
                    .partial_cmp(&win.scores[b as usize])
                    .unwrap()
            })
            .unwrap();
        let sc = win.scores[bestb as usize];
        if fixed.is_none() && sc <= 0.0 {
            break;
        }
        cur.push(bestb);
        in_cur[bestb as usize] = true;
        weight += sc;
    }
    if let Some(k) = fixed {
        if cur.len() != k {
            return None; // window too tight; cannot build a feasible witness
        }
    }

    let counts_of = |cur: &[u32]| -> (u64, u64) {
        match &win.exact {
            None => (0, 0),
            Some(ex) => {
                let hi = cur.iter().filter(|&&i| ex.is_hi[i as usize]).count() as u64;
                (hi, cur.len() as u64 - hi)
            }
        }
    };

    let removal_ok = |cur: &[u32], in_cur: &[bool], victim: u32| -> bool {
        if cur.len() <= 1 {
            return false;
        }
        if let Some(r) = root {
            if victim == r {
                return false;
            }
        }
        if let Some(targets) = must_hit {
            let hits = cur
                .iter()
                .filter(|&&c| targets.contains(&c))
                .count();
            if hits == 1 && targets.contains(&victim) {
                return false;
            }
        }
        // connectivity after removal: BFS from any other site
        let start = *cur.iter().find(|&&c| c != victim).unwrap();
        let mut seen = vec![false; win.bounds.len()];
        let mut stack = vec![start];
        seen[start as usize] = true;
        let mut count = 1;
        while let Some(s) = stack.pop() {
            for &nb in &win.nbrs[s as usize] {
                if in_cur[nb as usize] && nb != victim && !seen[nb as usize] {
                    seen[nb as usize] = true;
                    count += 1;
                    stack.push(nb);
                }
            }
        }
        count == cur.len() - 1
    };

    let mut best = Best {
        value: weight,
        counts: counts_of(&cur),
        sites: cur.clone(),
    };
    enum Move {
        Add(u32),
        Remove(u32),
        Swap(u32, u32),
    }
    let mut temp = t0;
    for _ in 0..params.moves_per_restart {
        temp *= params.cooling;
        let bd = boundary(&cur, &in_cur);
        let mv = match fixed {
            Some(_) => {
                // exchange: add one boundary site, remove another site
                if bd.is_empty() {
                    continue;
                }
                let add = bd[rng.gen_range(0..bd.len())];
                let mut found = None;
                for _ in 0..6 {
                    let victim = cur[rng.gen_range(0..cur.len())];
                    // removal legality is checked on the post-add set
                    cur.push(add);
                    in_cur[add as usize] = true;
                    let ok = victim != add && removal_ok(&cur, &in_cur, victim);
                    cur.pop();
                    in_cur[add as usize] = false;
                    if ok {
                        found = Some(victim);
                        break;
                    }
                }
                match found {
                    Some(v) => Move::Swap(add, v),
                    None => continue,
                }
            }
            None => {
                if !bd.is_empty() && (cur.len() <= 1 || rng.gen_bool(0.5)) {
                    Move::Add(bd[rng.gen_range(0..bd.len())])
                } else {
                    let mut found = None;
                    for _ in 0..6 {
                        let victim = cur[rng.gen_range(0..cur.len())];
                        if removal_ok(&cur, &in_cur, victim) {
                            found = Some(victim);
                            break;
                        }
                    }
                    match found {
                        Some(v) => Move::Remove(v),
                        None => continue,
                    }
                }
            }
        };
        let delta = match &mv {
            Move::Add(a) => win.scores[*a as usize],
            Move::Remove(v) => -win.scores[*v as usize],
            Move::Swap(a, v) => win.scores[*a as usize] - win.scores[*v as usize],
        };
        let accept = delta >= 0.0 || rng.gen::<f64>() < (delta / temp).exp();
        if !accept {
            continue;
        }
        match mv {
            Move::Add(a) => {
                cur.push(a);
                in_cur[a as usize] = true;
            }
            Move::Remove(v) => {
                let pos = cur.iter().position(|&c| c == v).unwrap();
                cur.swap_remove(pos);
                in_cur[v as usize] = false;
            }
            Move::Swap(a, v) => {
                cur.push(a);
                in_cur[a as usize] = true;
                let pos = cur.iter().position(|&c| c == v).unwrap();
                cur.swap_remove(pos);
                in_cur[v as usize] = false;
            }
        }
        weight += delta;
        let feasible_now = match must_hit {
            Some(targets) => cur.iter().any(|c| targets.contains(c)),
            None => true,
        };
        if feasible_now {
            let cand_counts = counts_of(&cur);
            if candidate_better(win, weight, cand_counts, &cur, &best) {
                best = Best {
                    value: weight,
                    counts: cand_counts,
                    sites: cur.clone(),
                };
            }
        }
    }
    Some(best)
}

/// Enumerates every connected subset of the box under the given adjacency,
/// each exactly once, honouring optional fixed size and root constraints.
/// Returns the count. Stops with an error once `cap` sets have been emitted.
pub fn enumerate_connected(
    f: &impl ScoreSource,
    b: &LatticeBox,
    adj: Adjacency,
    k: Option<u64>,
    root: Option<Site>,
    max_size: Option<u64>,
    cap: u64,
    mut on_animal: impl FnMut(Region, f64) -> Result<()>,
) -> Result<u64> {
    let win = Window::build(f, b.bounds(), adj);
    struct EnumVisitor<'a, F: FnMut(Region, f64) -> Result<()>> {
        win: &'a Window,
        cap: u64,
        count: u64,
        sink: F,
    }
    impl<'a, F: FnMut(Region, f64) -> Result<()>> Visitor for EnumVisitor<'a, F> {
        fn emit(&mut self, value: f64, _counts: (u64, u64), sites: &[u32]) -> Result<()> {
            if self.count >= self.cap {
                return Err(Error::CapExceeded { cap: self.cap });
            }
            self.count += 1;
            let region: Region = sites
                .iter()
                .map(|&i| self.win.bounds.site_at(i as usize))
                .collect();
            (self.sink)(region, value)
        }
        fn keep_descending(&mut self, _bound: f64) -> bool {
            true
        }
    }
    let mut vis = EnumVisitor {
        win: &win,
        cap,
        count: 0,
        sink: |r: Region, v: f64| on_animal(r, v),
    };
    let count;
    {
        let mut search = Search::new(&win, &mut vis, k.map(|k| k as usize), u64::MAX);
        search.max_size = max_size.map(|m| m as usize);
        let roots: Vec<u32> = match root {
            Some(s) => {
                if !b.contains(&s) {
                    return Err(Error::Precondition("root outside the box".into()));
                }
                vec![win.bounds.index(&s) as u32]
            }
            None => (0..win.bounds.len() as u32).collect(),
        };
        let rooted = root.is_some();
        let mut banned: Vec<u32> = Vec::new();
        for &r in &roots {
            search.run_root(r, &banned)?;
            if !rooted {
                banned.push(r);
            }
        }
        count = search.visitor.count;
    }
    Ok(count)
}

/// Joins two animals through a connecting path: the union must be connected;
/// the weight is recomputed exactly over the union (no double counting).
pub fn concatenate(
    a1: &Animal,
    path: &Region,
    a2: &Animal,
    f: &impl ScoreSource,
) -> Result<Animal> {
    let union = a1.sites().union(path).union(a2.sites());
    if !crate::lattice::is_connected(&union, Adjacency::NearestNeighbor) {
        return Err(Error::Precondition(
            "animals and path do not form a connected set".into(),
        ));
    }
    Animal::from_region(union, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{DistributionSpec, WeightField};
    use std::collections::BTreeSet;

    /// Fixed score table for hand-checkable instances.
    struct Table {
        bounds: Bounds,
        values: Vec<f64>,
        fallback: f64,
    }

    impl ScoreSource for Table {
        fn dim(&self) -> usize {
            self.bounds.dim
        }
        fn score(&self, s: &Site) -> f64 {
            if self.bounds.contains(s) {
                self.values[self.bounds.index(s)]
            } else {
                self.fallback
            }
        }
    }

    fn table2(b: &LatticeBox, values: &[f64], fallback: f64) -> Table {
        let bounds = b.bounds();
        assert_eq!(bounds.len(), values.len());
        Table {
            bounds,
            values: values.to_vec(),
            fallback,
        }
    }

    fn field(seed: u64, p: f64, lambda: f64) -> WeightField {
        WeightField::new(seed, DistributionSpec::TwoPointPenalty { p, lambda }, 2).unwrap()
    }

    /// Independent oracle: breadth-first set growth with dedup; every
    /// connected subset of the box, each once.
    fn brute_force_subsets(
        b: &LatticeBox,
        adj: Adjacency,
        max_size: usize,
    ) -> BTreeSet<Vec<Site>> {
        let sites: Vec<Site> = b.sites().collect();
        let mut layer: BTreeSet<Vec<Site>> =
            sites.iter().map(|&s| vec![s]).collect();
        let mut all = layer.clone();
        for _ in 1..max_size {
            let mut next: BTreeSet<Vec<Site>> = BTreeSet::new();
            for set in &layer {
                let rs: Region = set.iter().cloned().collect();
                let mut cands: BTreeSet<Site> = BTreeSet::new();
                for s in set {
                    adj.for_each_neighbor(s, |t| {
                        if b.contains(&t) && !rs.contains(&t) {
                            cands.insert(t);
                        }
                    });
                }
                for c in cands {
                    let mut bigger = set.clone();
                    bigger.push(c);
                    bigger.sort();
                    next.insert(bigger);
                }
            }
            all.extend(next.iter().cloned());
            layer = next;
        }
        all
    }

    #[test]
    fn enumeration_counts() {
        let f = field(1, 0.5, 0.5);
        let b = LatticeBox::at_origin(2, 2);
        let mut n = 0u64;
        let count = enumerate_connected(
            &f,
            &b,
            Adjacency::NearestNeighbor,
            None,
            None,
            None,
            1 << 20,
            |_, _| {
                n += 1;
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(count, 13);
        assert_eq!(n, 13);
        // k = 1 singletons
        let b3 = LatticeBox::at_origin(2, 3);
        let count = enumerate_connected(
            &f,
            &b3,
            Adjacency::NearestNeighbor,
            Some(1),
            None,
            None,
            1 << 20,
            |_, _| Ok(()),
        )
        .unwrap();
        assert_eq!(count, 9);
    }

    #[test]
    fn rooted_animal_counts() {
        // rooted connected sets of sizes 1..=4 containing a fixed cell
        let f = field(1, 0.5, 0.5);
        let b = LatticeBox::centered(Site::origin(2), 3);
        let expect = [1u64, 4, 18, 76];
        for (i, &e) in expect.iter().enumerate() {
            let k = (i + 1) as u64;
            let count = enumerate_connected(
                &f,
                &b,
                Adjacency::NearestNeighbor,
                Some(k),
                Some(Site::origin(2)),
                None,
                1 << 22,
                |_, _| Ok(()),
            )
            .unwrap();
            assert_eq!(count, e, "size {k}");
        }
    }

    #[test]
    fn enumeration_matches_brute_force() {
        let f = field(77, 0.6, 0.4);
        let b = LatticeBox::at_origin(2, 3);
        let oracle = brute_force_subsets(&b, Adjacency::NearestNeighbor, 9);
        let mut got: BTreeSet<Vec<Site>> = BTreeSet::new();
        enumerate_connected(
            &f,
            &b,
            Adjacency::NearestNeighbor,
            None,
            None,
            None,
            1 << 22,
            |r, _| {
                let v: Vec<Site> = r.iter().cloned().collect();
                assert!(got.insert(v), "duplicate subset emitted");
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(got, oracle);
    }

    #[test]
    fn l_graph_enumeration_matches_brute_force() {
        let f = field(5, 0.5, 0.5);
        let b = LatticeBox::at_origin(2, 3);
        let oracle = brute_force_subsets(&b, Adjacency::LGraph, 4);
        let mut got: BTreeSet<Vec<Site>> = BTreeSet::new();
        enumerate_connected(
            &f,
            &b,
            Adjacency::LGraph,
            None,
            None,
            Some(4),
            1 << 22,
            |r, _| {
                if r.len() <= 4 {
                    got.insert(r.iter().cloned().collect());
                }
                Ok(())
            },
        )
        .unwrap();
        let oracle_small: BTreeSet<Vec<Site>> =
            oracle.into_iter().filter(|v| v.len() <= 4).collect();
        assert_eq!(got, oracle_small);
    }

    #[test]
    fn hand_checked_free_solve() {
        // scores (x,y) with x = column, y = row:
        // (0,0)=1 (1,0)=-3 (0,1)=2 (1,1)=-1 → G = 3 via {(0,0),(0,1)}, L = 2
        let b = LatticeBox::at_origin(2, 2);
        // bounds order is lexicographic in (x,y): (0,0),(0,1),(1,0),(1,1)
        let t = table2(&b, &[1.0, 2.0, -3.0, -1.0], 0.0);
        let sol = solve_box(&t, &b, &Budget::default()).unwrap();
        assert_eq!(sol.result.value, 3.0);
        assert_eq!(sol.min_size, 2);
        let w: Vec<Site> = sol.result.witness.sites().iter().cloned().collect();
        assert_eq!(w, vec![Site::new(&[0, 0]), Site::new(&[0, 1])]);
        assert!(sol.result.optimal);
    }

    #[test]
    fn all_negative_scores() {
        let b = LatticeBox::at_origin(2, 3);
        let vals: Vec<f64> = (0..9).map(|i| -1.0 - i as f64).collect();
        let t = table2(&b, &vals, 0.0);
        let sol = solve_box(&t, &b, &Budget::default()).unwrap();
        assert_eq!(sol.result.value, -1.0);
        assert_eq!(sol.min_size, 1);
    }

    #[test]
    fn degenerate_solves() {
        let f = WeightField::new(0, DistributionSpec::Degenerate { c: 1.0 }, 2).unwrap();
        let sol = solve_rooted_fixed_size(&f, 5, &Budget::default()).unwrap();
        assert_eq!(sol.value, 5.0);
        assert!(sol.witness.sites().contains(&Site::origin(2)));
        assert_eq!(sol.witness.size(), 5);
        let b = LatticeBox::at_origin(2, 3);
        let sol = solve_box(&f, &b, &Budget::default()).unwrap();
        assert_eq!(sol.result.value, 9.0);
        assert_eq!(sol.min_size, 9);
        let k4 = solve_box_fixed_size(&f, &b, 4, &Budget::default()).unwrap();
        assert_eq!(k4.value, 4.0);
    }

    #[test]
    fn rooted_matches_brute_force() {
        for seed in 0..10u64 {
            let f = field(seed, 0.5, 0.7);
            let n = 4usize;
            // oracle: all rooted size-4 sets from brute force over the ball
            let ball = LatticeBox::centered(Site::origin(2), (n - 1) as i64);
            let all = brute_force_subsets(&ball, Adjacency::NearestNeighbor, n);
            let best = all
                .iter()
                .filter(|v| v.len() == n && v.contains(&Site::origin(2)))
                .map(|v| {
                    let r: Region = v.iter().cloned().collect();
                    region_weight(&f, &r)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let sol = solve_rooted_fixed_size(&f, n as u64, &Budget::default()).unwrap();
            assert!((sol.value - best).abs() < 1e-9, "seed {seed}");
            assert_eq!(sol.witness.size(), n);
            assert!(sol.witness.sites().contains(&Site::origin(2)));
        }
    }

    #[test]
    fn free_solve_tie_break_minimal_size() {
        // two maximizers of equal weight but different size: a single +2
        // site, or the +2 site plus a 0 site; minimal size must win
        let b = LatticeBox::at_origin(2, 2);
        let t = table2(&b, &[2.0, 0.0, -1.0, -1.0], 0.0);
        let sol = solve_box(&t, &b, &Budget::default()).unwrap();
        assert_eq!(sol.result.value, 2.0);
        assert_eq!(sol.min_size, 1);
    }

    #[test]
    fn exact_tie_break_for_atomic_laws() {
        // hi = 1, lo = -1/3 (float): 3 lo-sites sum to ~ -1 + 1e-16-ish;
        // exact rational comparison must see 1 + 3·lo ≠ 0 in f64 world
        // consistently with the rational values built from the floats
        let f = WeightField::new(
            4,
            DistributionSpec::TwoPointPenalty {
                p: 0.5,
                lambda: 1.0 / 3.0,
            },
            2,
        )
        .unwrap();
        let b = LatticeBox::at_origin(2, 3);
        let sol = solve_box(&f, &b, &Budget::default()).unwrap();
        // oracle check: maximum over brute force within float tolerance
        let all = brute_force_subsets(&b, Adjacency::NearestNeighbor, 9);
        let best = all
            .iter()
            .map(|v| {
                let r: Region = v.iter().cloned().collect();
                region_weight(&f, &r)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((sol.result.value - best).abs() < 1e-9);
    }

    #[test]
    fn budget_enforced() {
        let f = field(1, 0.5, 0.5);
        let err = solve_rooted_fixed_size(&f, 30, &Budget::default()).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
        let tight = Budget {
            max_exact_size: 18,
            max_nodes: 10,
        };
        let b = LatticeBox::at_origin(2, 4);
        let err = solve_box(&f, &b, &tight).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn heuristic_is_feasible_lower_bound() {
        let params = HeuristicParams {
            restarts: 8,
            moves_per_restart: 800,
            ..HeuristicParams::default()
        };
        for seed in 0..8u64 {
            let f = field(seed, 0.6, 0.5);
            let b = LatticeBox::at_origin(2, 4);
            let exact = solve_box(&f, &b, &Budget::default()).unwrap();
            let h = heuristic_solve(&f, &Instance::BoxFree { b }, &params, seed).unwrap();
            assert!(!h.optimal);
            assert!(h.value <= exact.result.value + 1e-9, "seed {seed}");
            // witness weight honest
            assert!((region_weight(&f, h.witness.sites()) - h.value).abs() < 1e-9);
            // fixed-size variant
            let he =
                heuristic_solve(&f, &Instance::BoxFixedSize { b, k: 5 }, &params, seed).unwrap();
            assert_eq!(he.witness.size(), 5);
            let ex = solve_box_fixed_size(&f, &b, 5, &Budget::default()).unwrap();
            assert!(he.value <= ex.value + 1e-9);
        }
    }

    #[test]
    fn heuristic_often_matches_exact() {
        // on a 6x6 two-point field, default annealing effort reaches the
        // exact optimum on at least 95% of 100 seeds
        let params = HeuristicParams::default();
        let b = LatticeBox::at_origin(2, 6);
        let mut hits = 0;
        let trials = 100;
        for seed in 0..trials {
            let f = field(seed, 0.55, 0.6);
            let exact = solve_box(&f, &b, &Budget::default()).unwrap();
            let h = heuristic_solve(&f, &Instance::BoxFree { b }, &params, seed).unwrap();
            if (h.value - exact.result.value).abs() < 1e-9 {
                hits += 1;
            }
        }
        assert!(hits * 100 >= trials * 95, "hits {hits}/{trials}");
    }

    #[test]
    fn heuristic_rooted_keeps_origin_and_size() {
        let params = HeuristicParams {
            restarts: 4,
            moves_per_restart: 500,
            ..HeuristicParams::default()
        };
        let f = field(3, 0.5, 0.8);
        let h = heuristic_solve(&f, &Instance::RootedFixedSize { n: 9 }, &params, 3).unwrap();
        assert_eq!(h.witness.size(), 9);
        assert!(h.witness.sites().contains(&Site::origin(2)));
        let ex = solve_rooted_fixed_size(&f, 9, &Budget::default()).unwrap();
        assert!(h.value <= ex.value + 1e-9);
    }

    #[test]
    fn constrained_solve_hits_targets() {
        let b = LatticeBox::at_origin(2, 4);
        // big reward at (0,0) but target requires touching (3,3)
        let mut vals = vec![-0.5f64; 16];
        let bounds = b.bounds();
        vals[bounds.index(&Site::new(&[0, 0]))] = 10.0;
        vals[bounds.index(&Site::new(&[3, 3]))] = 0.25;
        let t = table2(&b, &vals, 0.0);
        let targets = Region::singleton(Site::new(&[3, 3]));
        let sol = solve_exact(
            &t,
            &Instance::BoxFreeIntersecting { b, targets: targets.clone() },
            &Budget::default(),
        )
        .unwrap();
        assert!(!sol.witness.sites().is_disjoint(&targets));
        // unconstrained would just take the singleton 10; constrained must
        // either bridge (cost 6 × -0.5 = -3 → 10 + 0.25 - 3 + ...) or stay
        // at the target alone (0.25); exact solver decides
        let alone = 0.25;
        let bridged = 10.0 + 0.25 - 2.5; // shortest path (0,0)→(3,3) uses 5 in-between...
        // just verify against a brute-force oracle instead of arithmetic
        let all = brute_force_subsets(&b, Adjacency::NearestNeighbor, 16);
        let best = all
            .iter()
            .filter(|v| v.contains(&Site::new(&[3, 3])))
            .map(|v| {
                let r: Region = v.iter().cloned().collect();
                region_weight(&t, &r)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((sol.value - best).abs() < 1e-9);
        let _ = (alone, bridged);
    }

    #[test]
    fn concatenation_bookkeeping() {
        let f = field(9, 0.5, 0.5);
        let a1 = Animal::from_region(Region::singleton(Site::new(&[0, 0])), &f).unwrap();
        let a2 = Animal::from_region(Region::singleton(Site::new(&[2, 0])), &f).unwrap();
        let bridge = Region::singleton(Site::new(&[1, 0]));
        let joined = concatenate(&a1, &bridge, &a2, &f).unwrap();
        let expect = a1.weight() + a2.weight() + f.score(&Site::new(&[1, 0]));
        assert!((joined.weight() - expect).abs() < 1e-12);
        // path inside a1: no double counting
        let pair: Region = [Site::new(&[0, 0]), Site::new(&[0, 1])].into_iter().collect();
        let a3 = Animal::from_region(pair.clone(), &f).unwrap();
        let sub = Region::singleton(Site::new(&[0, 1]));
        let a4 = Animal::from_region(Region::singleton(Site::new(&[0, 1])), &f).unwrap();
        let j2 = concatenate(&a3, &sub, &a4, &f).unwrap();
        assert!((j2.weight() - region_weight(&f, &pair)).abs() < 1e-12);
        // disconnected union is an error
        let far = Animal::from_region(Region::singleton(Site::new(&[5, 5])), &f).unwrap();
        assert!(concatenate(&a1, &Region::new(), &far, &f).is_err());
    }

    #[test]
    fn nested_box_monotonicity() {
        let f = field(21, 0.5, 0.6);
        let mut prev = f64::NEG_INFINITY;
        for n in 1..=4i64 {
            let b = LatticeBox::at_origin(2, n);
            let sol = solve_box(&f, &b, &Budget::default()).unwrap();
            assert!(sol.result.value >= prev - 1e-12);
            prev = sol.result.value;
        }
    }

    #[test]
    fn solve_result_serialization() {
        let f = field(2, 0.7, 0.5);
        let b = LatticeBox::at_origin(2, 2);
        let sol = solve_box(&f, &b, &Budget::default()).unwrap();
        let js = serde_json::to_value(&sol.result).unwrap();
        for key in ["value", "size", "sites", "optimal", "nodes_explored"] {
            assert!(js.get(key).is_some(), "missing {key}");
        }
        let back: SolveResult = serde_json::from_value(js).unwrap();
        assert_eq!(back.value, sol.result.value);
        assert_eq!(back.witness.sites(), sol.result.witness.sites());
    }
}
