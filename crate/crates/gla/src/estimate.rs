//! Monte Carlo estimation of the limiting constants and curves: the rooted
//! growth rate N, the box constants G and L, the constrained-density curve
//! G̃(α), criticality location by bisection, and critical scaling
//! diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse::SolveMode;
use crate::error::{Error, Result};
use crate::field::{derive_seed, DistributionSpec, WeightField};
use crate::lattice::LatticeBox;
use crate::solver::Instance;
use crate::stats::{summarize, EstimateSeries, Record, Summary};

const STREAM_N: u64 = 0x4E;
const STREAM_G: u64 = 0x47;
const STREAM_CURVE: u64 = 0x54;
const STREAM_CRIT: u64 = 0x43;

fn replica_field(
    dist: &DistributionSpec,
    dim: usize,
    master_seed: u64,
    stream: u64,
    index: u64,
) -> Result<WeightField> {
    WeightField::new(derive_seed(master_seed, stream, index), dist.clone(), dim)
}

fn is_heuristic(mode: &SolveMode) -> bool {
    matches!(mode, SolveMode::Heuristic(_))
}

/// Estimates N by the rooted fixed-size maximum at each scale in `n_list`,
/// normalized by n^{-1}. Replica seeds derive from the master seed only, so
/// two distributions estimated under one master seed share their underlying
/// uniform fields (monotone/shift couplings hold per realization).
pub fn estimate_n(
    dist: &DistributionSpec,
    dim: usize,
    n_list: &[u64],
    reps: u64,
    mode: &SolveMode,
    master_seed: u64,
) -> Result<EstimateSeries> {
    dist.validate()?;
    let jobs: Vec<(u64, u64)> = n_list
        .iter()
        .flat_map(|&n| (0..reps).map(move |r| (n, r)))
        .collect();
    let records: Vec<Result<Record>> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let f = replica_field(dist, dim, master_seed, STREAM_N, r)?;
            let sol = mode.solve(&f, &Instance::RootedFixedSize { n }, derive_seed(master_seed, STREAM_N ^ 0xFF, r))?;
            Ok(Record {
                n,
                seed: f.seed,
                raw: sol.value,
                normalized: sol.value / n as f64,
            })
        })
        .collect();
    let mut series = EstimateSeries::new("n_hat", is_heuristic(mode));
    for r in records {
        series.push(r?);
    }
    series.sort();
    Ok(series)
}

/// Fitted band for the free-size series: a constant c ∈ (0,1) such that
/// every per-scale mean lies in (c, 1/c), when one exists.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BandReport {
    pub c: f64,
    pub holds: bool,
}

/// Fits c from the per-scale means (slightly inside the extreme mean) and
/// reports whether the band contains every scale; None when some mean is
/// not positive, where no such band exists.
pub fn fit_band(series: &EstimateSeries) -> Option<BandReport> {
    let by_n = series.by_n();
    let means: Vec<f64> = by_n.values().map(|s| s.mean).collect();
    if means.iter().any(|&m| m <= 0.0) {
        return None;
    }
    let tight = means
        .iter()
        .map(|&m| m.min(1.0 / m))
        .fold(f64::INFINITY, f64::min);
    let c = (0.9 * tight).min(0.99);
    let holds = means.iter().all(|&m| m > c && m < 1.0 / c);
    Some(BandReport { c, holds })
}

/// Estimates the pair (G, L): per replica the free-size box maximum and the
/// size of its minimal maximizer, both normalized by n^{-d}. Heuristic mode
/// marks both series (the value is a feasible lower bound; the maximizer
/// size is then only the witness's size).
pub fn estimate_g_l(
    dist: &DistributionSpec,
    dim: usize,
    n_list: &[u64],
    reps: u64,
    mode: &SolveMode,
    master_seed: u64,
) -> Result<(EstimateSeries, EstimateSeries)> {
    dist.validate()?;
    let jobs: Vec<(u64, u64)> = n_list
        .iter()
        .flat_map(|&n| (0..reps).map(move |r| (n, r)))
        .collect();
    let records: Vec<Result<(Record, Record)>> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let f = replica_field(dist, dim, master_seed, STREAM_G, r)?;
            let b = LatticeBox::at_origin(dim, n as i64);
            let sol = mode.solve(&f, &Instance::BoxFree { b }, derive_seed(master_seed, STREAM_G ^ 0xFF, r))?;
            let vol = (n as f64).powi(dim as i32);
            let g = Record {
                n,
                seed: f.seed,
                raw: sol.value,
                normalized: sol.value / vol,
            };
            let l = Record {
                n,
                seed: f.seed,
                raw: sol.witness.size() as f64,
                normalized: sol.witness.size() as f64 / vol,
            };
            Ok((g, l))
        })
        .collect();
    let mut g_series = EstimateSeries::new("g_hat", is_heuristic(mode));
    let mut l_series = EstimateSeries::new("l_hat", is_heuristic(mode));
    for r in records {
        let (g, l) = r?;
        g_series.push(g);
        l_series.push(l);
    }
    g_series.sort();
    l_series.sort();
    Ok((g_series, l_series))
}

/// A reported failure of midpoint concavity at one interior grid point.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConcavityViolation {
    pub index: usize,
    /// interpolated value minus observed mean (positive = violation)
    pub deficit: f64,
    pub tolerance: f64,
}

/// The estimated constrained-density curve α ↦ G̃(α) on one grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveEstimate {
    pub n: u64,
    pub alpha_grid: Vec<f64>,
    pub series: Vec<EstimateSeries>,
    pub violations: Vec<ConcavityViolation>,
    /// G̃(α₁)/α₁ at the smallest grid point: converges to N as α ↓ 0 for
    /// laws bounded below
    pub small_alpha_slope: f64,
}

impl CurveEstimate {
    pub fn summaries(&self) -> Vec<Summary> {
        self.series.iter().map(|s| s.overall()).collect()
    }
}

/// Estimates G̃ on a strictly increasing grid in (0,1) at one scale; each
/// replica evaluates every grid point on the same field (common random
/// numbers sharpen the concavity comparison). Interior grid points are
/// tested for midpoint concavity against the chord through their
/// neighbors, with the replica CIs combined in quadrature.
pub fn estimate_gtilde_curve(
    dist: &DistributionSpec,
    dim: usize,
    n: u64,
    alpha_grid: &[f64],
    reps: u64,
    mode: &SolveMode,
    master_seed: u64,
) -> Result<CurveEstimate> {
    dist.validate()?;
    if alpha_grid.is_empty() {
        return Err(Error::InvalidInput("empty alpha grid".into()));
    }
    let vol = (n as f64).powi(dim as i32);
    for w in alpha_grid.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::InvalidInput(
                "alpha grid must be strictly increasing".into(),
            ));
        }
    }
    for &a in alpha_grid {
        if !(0.0 < a && a < 1.0) {
            return Err(Error::InvalidInput("alpha grid must lie in (0,1)".into()));
        }
        if (a * vol).floor() < 1.0 {
            return Err(Error::Precondition(format!(
                "alpha = {a} gives an empty constrained size at n = {n}"
            )));
        }
    }
    let rows: Vec<Result<Vec<Record>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let f = replica_field(dist, dim, master_seed, STREAM_CURVE, r)?;
            let b = LatticeBox::at_origin(dim, n as i64);
            alpha_grid
                .iter()
                .map(|&a| {
                    let k = (a * vol).floor() as u64;
                    let sol = mode.solve(
                        &f,
                        &Instance::BoxFixedSize { b, k },
                        derive_seed(master_seed, STREAM_CURVE ^ 0xFF, r),
                    )?;
                    Ok(Record {
                        n,
                        seed: f.seed,
                        raw: sol.value,
                        normalized: sol.value / vol,
                    })
                })
                .collect()
        })
        .collect();
    let mut series: Vec<EstimateSeries> = alpha_grid
        .iter()
        .map(|a| EstimateSeries::new(format!("gtilde_{a}"), is_heuristic(mode)))
        .collect();
    for row in rows {
        for (s, rec) in series.iter_mut().zip(row?) {
            s.push(rec);
        }
    }
    for s in &mut series {
        s.sort();
    }
    let sums: Vec<Summary> = series.iter().map(|s| s.overall()).collect();
    let mut violations = Vec::new();
    for i in 1..alpha_grid.len().saturating_sub(1) {
        let (a0, a1, a2) = (alpha_grid[i - 1], alpha_grid[i], alpha_grid[i + 1]);
        let p = (a2 - a1) / (a2 - a0);
        let chord = p * sums[i - 1].mean + (1.0 - p) * sums[i + 1].mean;
        let tol = ((p * sums[i - 1].ci_half).powi(2)
            + ((1.0 - p) * sums[i + 1].ci_half).powi(2)
            + sums[i].ci_half.powi(2))
        .sqrt()
            // floor effects: each of the three sizes may round down by one
            // site of bounded score
            + 2.0 / vol * sums.iter().map(|s| s.mean.abs()).fold(1.0, f64::max);
        let deficit = chord - sums[i].mean;
        if deficit > tol {
            violations.push(ConcavityViolation {
                index: i,
                deficit,
                tolerance: tol,
            });
        }
    }
    let small_alpha_slope = sums[0].mean / alpha_grid[0];
    Ok(CurveEstimate {
        n,
        alpha_grid: alpha_grid.to_vec(),
        series,
        violations,
        small_alpha_slope,
    })
}

/// Outcome of the criticality search: the located shift, the final
/// bracket, and the N-estimate at the located point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalityResult {
    pub epsilon: f64,
    pub bracket: (f64, f64),
    pub n_hat: Summary,
    pub iterations: u32,
}

/// Bisects the additive shift ε until the N-estimate at the probe scale is
/// within its own confidence half-width of zero (the operational notion of
/// "at criticality"). The base law must not itself be a shifted law.
pub fn locate_criticality(
    base: &DistributionSpec,
    dim: usize,
    bracket: (f64, f64),
    n_probe: u64,
    reps: u64,
    mode: &SolveMode,
    master_seed: u64,
) -> Result<CriticalityResult> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) {
        return Err(Error::InvalidInput("empty shift bracket".into()));
    }
    let probe = |eps: f64| -> Result<Summary> {
        let shifted = DistributionSpec::ShiftedBy {
            base: Box::new(base.clone()),
            epsilon: eps,
        };
        Ok(estimate_n(&shifted, dim, &[n_probe], reps, mode, master_seed)?.overall())
    };
    let s_lo = probe(lo)?;
    let s_hi = probe(hi)?;
    if !(s_lo.mean < 0.0 && s_hi.mean > 0.0) {
        return Err(Error::NoSignChange { lo, hi });
    }
    let mut iterations = 0u32;
    loop {
        let mid = 0.5 * (lo + hi);
        let s = probe(mid)?;
        iterations += 1;
        if s.mean.abs() <= s.ci_half + 1e-12 || hi - lo < 1e-9 || iterations >= 60 {
            return Ok(CriticalityResult {
                epsilon: mid,
                bracket: (lo, hi),
                n_hat: s,
                iterations,
            });
        }
        if s.mean > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

/// Series (log n)^{-c} n^{-1} G_n at the supplied scales; vanishing of the
/// limit requires c above d/(d−1).
pub fn critical_scaling_diag(
    dist: &DistributionSpec,
    dim: usize,
    c_exponent: f64,
    n_list: &[u64],
    reps: u64,
    mode: &SolveMode,
    master_seed: u64,
) -> Result<EstimateSeries> {
    if !(c_exponent > dim as f64 / (dim as f64 - 1.0)) {
        return Err(Error::InvalidInput(format!(
            "scaling exponent must exceed d/(d-1) = {}",
            dim as f64 / (dim as f64 - 1.0)
        )));
    }
    dist.validate()?;
    let jobs: Vec<(u64, u64)> = n_list
        .iter()
        .flat_map(|&n| (0..reps).map(move |r| (n, r)))
        .collect();
    let records: Vec<Result<Record>> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let f = replica_field(dist, dim, master_seed, STREAM_CRIT, r)?;
            let b = LatticeBox::at_origin(dim, n as i64);
            let sol = mode.solve(&f, &Instance::BoxFree { b }, derive_seed(master_seed, STREAM_CRIT ^ 0xFF, r))?;
            let scale = (n as f64).ln().powf(-c_exponent) / n as f64;
            Ok(Record {
                n,
                seed: f.seed,
                raw: sol.value,
                normalized: sol.value * scale,
            })
        })
        .collect();
    let mut series = EstimateSeries::new("critical_scaling", is_heuristic(mode));
    for r in records {
        series.push(r?);
    }
    series.sort();
    Ok(series)
}

/// True when the per-scale means are nonincreasing up to `slack`.
pub fn means_nonincreasing(series: &EstimateSeries, slack: f64) -> bool {
    let means: Vec<f64> = series.by_n().values().map(|s| s.mean).collect();
    means.windows(2).all(|w| w[1] <= w[0] + slack)
}

/// Pools the normalized values of one scale.
pub fn at_scale(series: &EstimateSeries, n: u64) -> Summary {
    summarize(
        series
            .records
            .iter()
            .filter(|r| r.n == n)
            .map(|r| r.normalized),
    )
}
