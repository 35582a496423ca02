//! Reproducible i.i.d. site-score fields and analytic tail diagnostics.
//!
//! Scores are generated counter-style: a 64-bit avalanche hash of
//! `(seed, site coordinates)` yields a uniform variate which is pushed
//! through the inverse CDF of the chosen law. This gives O(1) lazy access to
//! arbitrarily large windows, exact reproducibility, and exact translation
//! behaviour (the score at `v` under seed `s` depends only on `(s, v)`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Region, Site};

/// Verdict of the integral tail criterion
/// `∫_0^∞ (1 − F(x))^{1/d} dx < ∞` deciding whether the rooted fixed-size
/// optimum grows linearly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailVerdict {
    Satisfied,
    Violated,
    Unknown,
}

/// A marginal law for the site scores.
///
/// `HeavyTail` has upper-tail CDF `F(x) = 1 − x^{−d} (log x)^{−d(1+α)}` for
/// `x ≥ x0`; the remaining mass `F(x0)` sits in an atom at `x0 − 1`, so the
/// law is fully specified and tests can be exact. `TruncatedAbove` realises
/// `Y = X · 1{X > λ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum DistributionSpec {
    /// X ∈ {−λ, 1}, with P(X = 1) = p.
    TwoPointPenalty { p: f64, lambda: f64 },
    /// X ∈ {−1, λ}, with P(X = λ) = p.
    TwoPointReward { p: f64, lambda: f64 },
    /// Uniform on [a, b].
    UniformInterval { a: f64, b: f64 },
    /// base score plus epsilon, exactly, site by site.
    ShiftedBy {
        base: Box<DistributionSpec>,
        epsilon: f64,
    },
    /// Heavy upper tail with polynomial-log correction; atom at x0 − 1.
    HeavyTail { d: u32, alpha: f64, x0: f64 },
    /// Y = X · 1{X > lambda} for X drawn from base.
    TruncatedAbove {
        base: Box<DistributionSpec>,
        lambda: f64,
    },
    /// Constant c.
    Degenerate { c: f64 },
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DistributionSpec::TwoPointPenalty { p, .. }
            | DistributionSpec::TwoPointReward { p, .. } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidInput(format!("probability {p} not in [0,1]")));
                }
            }
            DistributionSpec::UniformInterval { a, b } => {
                if !(a <= b) {
                    return Err(Error::InvalidInput(format!("interval [{a},{b}] is empty")));
                }
            }
            DistributionSpec::ShiftedBy { base, epsilon } => {
                if !epsilon.is_finite() {
                    return Err(Error::InvalidInput("shift must be finite".into()));
                }
                if matches!(**base, DistributionSpec::ShiftedBy { .. }) {
                    return Err(Error::InvalidInput(
                        "at most one level of shifting is allowed".into(),
                    ));
                }
                base.validate()?;
            }
            DistributionSpec::HeavyTail { d, alpha, x0 } => {
                if !(2..=4).contains(d) {
                    return Err(Error::InvalidInput(format!("tail dimension {d} not in 2..=4")));
                }
                if !(*x0 > 1.0) {
                    return Err(Error::InvalidInput("x0 must exceed 1".into()));
                }
                let tail = heavy_tail(*d, *alpha, *x0);
                if !(tail <= 1.0) {
                    return Err(Error::InvalidInput(
                        "tail mass at x0 exceeds 1; increase x0".into(),
                    ));
                }
            }
            DistributionSpec::TruncatedAbove { base, .. } => base.validate()?,
            DistributionSpec::Degenerate { c } => {
                if !c.is_finite() {
                    return Err(Error::InvalidInput("constant must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Inverse CDF (generalised): maps u ∈ [0,1) to a score.
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            DistributionSpec::TwoPointPenalty { p, lambda } => {
                // u < p → high value, so that increasing p with a shared
                // uniform only ever turns penalties into rewards
                // (monotone coupling across a p-sweep).
                if u < *p {
                    1.0
                } else {
                    -lambda
                }
            }
            DistributionSpec::TwoPointReward { p, lambda } => {
                if u < *p {
                    *lambda
                } else {
                    -1.0
                }
            }
            DistributionSpec::UniformInterval { a, b } => a + u * (b - a),
            DistributionSpec::ShiftedBy { base, epsilon } => base.quantile(u) + epsilon,
            DistributionSpec::HeavyTail { d, alpha, x0 } => {
                let atom_mass = 1.0 - heavy_tail(*d, *alpha, *x0);
                if u < atom_mass {
                    return x0 - 1.0;
                }
                // Solve 1 − tail(x) = u for x ≥ x0; tail is decreasing there.
                let target = 1.0 - u;
                let mut lo = *x0;
                let mut hi = *x0 * 2.0;
                while heavy_tail(*d, *alpha, hi) > target {
                    lo = hi;
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if heavy_tail(*d, *alpha, mid) > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= f64::EPSILON * hi {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
            DistributionSpec::TruncatedAbove { base, lambda } => {
                let y = base.quantile(u);
                if y > *lambda {
                    y
                } else {
                    0.0
                }
            }
            DistributionSpec::Degenerate { c } => *c,
        }
    }

    /// Closed-form CDF F(x) = P(X ≤ x).
    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(match self {
            DistributionSpec::TwoPointPenalty { p, lambda } => {
                let (lo, hi) = (-lambda, 1.0);
                step_cdf(x, lo, 1.0 - p, hi)
            }
            DistributionSpec::TwoPointReward { p, lambda } => {
                let (lo, hi) = (-1.0, *lambda);
                if hi >= lo {
                    step_cdf(x, lo, 1.0 - p, hi)
                } else {
                    step_cdf(x, hi, *p, lo)
                }
            }
            DistributionSpec::UniformInterval { a, b } => {
                if x < *a {
                    0.0
                } else if x >= *b {
                    1.0
                } else if b > a {
                    (x - a) / (b - a)
                } else {
                    1.0
                }
            }
            DistributionSpec::ShiftedBy { base, epsilon } => base.cdf(x - epsilon)?,
            DistributionSpec::HeavyTail { d, alpha, x0 } => {
                if x < x0 - 1.0 {
                    0.0
                } else if x < *x0 {
                    1.0 - heavy_tail(*d, *alpha, *x0)
                } else {
                    1.0 - heavy_tail(*d, *alpha, x)
                }
            }
            DistributionSpec::TruncatedAbove { base, lambda } => {
                // All base mass at values ≤ λ collapses to an atom at 0;
                // values above λ keep their base law.
                let atom = base.cdf(*lambda)?;
                let mut f = 0.0;
                if x >= 0.0 {
                    f += atom;
                }
                if x > *lambda {
                    f += (base.cdf(x)? - atom).max(0.0);
                }
                f.min(1.0)
            }
            DistributionSpec::Degenerate { c } => {
                if x >= *c {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }

    /// Analytic verdict on the integral tail criterion.
    pub fn martins_condition(&self) -> TailVerdict {
        match self {
            DistributionSpec::TwoPointPenalty { .. }
            | DistributionSpec::TwoPointReward { .. }
            | DistributionSpec::UniformInterval { .. }
            | DistributionSpec::Degenerate { .. } => TailVerdict::Satisfied,
            // Integrand for x ≥ x0 is x^{-1} (log x)^{-(1+α)}, convergent
            // iff α > 0; at α = −1 the tail is exactly x^{-d} and the
            // integrand exactly x^{-1}.
            DistributionSpec::HeavyTail { alpha, .. } => {
                if *alpha > 0.0 {
                    TailVerdict::Satisfied
                } else {
                    TailVerdict::Violated
                }
            }
            // A finite shift or truncation changes the integral by a
            // bounded amount, so the verdict is inherited.
            DistributionSpec::ShiftedBy { base, .. }
            | DistributionSpec::TruncatedAbove { base, .. } => base.martins_condition(),
        }
    }

    /// `P(max over the n-box > t) = 1 − F(t)^{n^d}`, computed in log space.
    pub fn max_exceedance_prob(&self, dim: u32, n: u64, t: f64) -> Result<f64> {
        let f = self.cdf(t)?;
        if f <= 0.0 {
            return Ok(1.0);
        }
        if f >= 1.0 {
            return Ok(0.0);
        }
        let count = (n as f64).powi(dim as i32);
        Ok(-(count * f.ln()).exp_m1())
    }

    /// Smallest value in the support, when the law is bounded below.
    pub fn essential_infimum(&self) -> Option<f64> {
        match self {
            DistributionSpec::TwoPointPenalty { lambda, .. } => Some((-lambda).min(1.0)),
            DistributionSpec::TwoPointReward { lambda, .. } => Some(lambda.min(-1.0)),
            DistributionSpec::UniformInterval { a, .. } => Some(*a),
            DistributionSpec::ShiftedBy { base, epsilon } => {
                base.essential_infimum().map(|m| m + epsilon)
            }
            DistributionSpec::HeavyTail { x0, .. } => Some(x0 - 1.0),
            DistributionSpec::TruncatedAbove { base, lambda } => {
                // Values ≤ λ collapse to 0; survivors lie in (λ, ∞).
                base.essential_infimum().map(|m| {
                    if m > *lambda {
                        m
                    } else {
                        m.max(*lambda).min(0.0)
                    }
                })
            }
            DistributionSpec::Degenerate { c } => Some(*c),
        }
    }

    /// Largest value in the support, when bounded above.
    pub fn essential_supremum(&self) -> Option<f64> {
        match self {
            DistributionSpec::TwoPointPenalty { lambda, .. } => Some((-lambda).max(1.0)),
            DistributionSpec::TwoPointReward { lambda, .. } => Some(lambda.max(-1.0)),
            DistributionSpec::UniformInterval { b, .. } => Some(*b),
            DistributionSpec::ShiftedBy { base, epsilon } => {
                base.essential_supremum().map(|m| m + epsilon)
            }
            DistributionSpec::HeavyTail { .. } => None,
            DistributionSpec::TruncatedAbove { base, .. } => {
                base.essential_supremum().map(|m| m.max(0.0))
            }
            DistributionSpec::Degenerate { c } => Some(*c),
        }
    }

    /// The two support atoms `(hi, lo)` when the law takes at most two
    /// values; enables exact tie comparisons in the solvers.
    pub fn two_support_values(&self) -> Option<(f64, f64)> {
        match self {
            DistributionSpec::TwoPointPenalty { lambda, .. } => Some((1.0, -lambda)),
            DistributionSpec::TwoPointReward { lambda, .. } => Some((*lambda, -1.0)),
            DistributionSpec::Degenerate { c } => Some((*c, *c)),
            DistributionSpec::ShiftedBy { base, epsilon } => base
                .two_support_values()
                .map(|(h, l)| (h + epsilon, l + epsilon)),
            _ => None,
        }
    }
}

/// Upper tail `1 − F(x) = x^{−d} (log x)^{−d(1+α)}` for x > 1.
fn heavy_tail(d: u32, alpha: f64, x: f64) -> f64 {
    x.powi(-(d as i32)) * x.ln().powf(-(d as f64) * (1.0 + alpha))
}

fn step_cdf(x: f64, lo: f64, mass_lo: f64, hi: f64) -> f64 {
    if x < lo {
        0.0
    } else if x < hi {
        mass_lo
    } else {
        1.0
    }
}

/// The two-point law used to couple the animal model with site percolation:
/// rewards 1 with probability p, penalty −ρ/(1+ρ) otherwise.
pub fn rho_percolation_penalty(rho: f64, p: f64) -> Result<DistributionSpec> {
    if !(rho > 0.0) {
        return Err(Error::InvalidInput("rho must be positive".into()));
    }
    let spec = DistributionSpec::TwoPointPenalty {
        p,
        lambda: rho / (1.0 + rho),
    };
    spec.validate()?;
    Ok(spec)
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finaliser: a full-avalanche 64-bit mixer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of a seed and a coordinate tuple, used both for site scores and for
/// deriving replica seeds.
pub fn counter_hash(seed: u64, words: &[u64]) -> u64 {
    let mut h = mix64(seed);
    for &w in words {
        h = mix64(h ^ w);
    }
    mix64(h)
}

/// Uniform variate in [0, 1) with 53 random bits.
pub fn hash_to_unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Deterministic replica seed derived from a master seed.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    counter_hash(master, &[0xD5_11_CA, stream, index])
}

/// Anything that assigns a deterministic score to every site; solvers are
/// generic over this so they run equally on generated fields and explicit
/// score tables.
pub trait ScoreSource: Sync {
    fn dim(&self) -> usize;
    fn score(&self, s: &Site) -> f64;
    /// The two support atoms `(hi, lo)` when the law is (at most) two-valued,
    /// enabling exact tie comparisons downstream.
    fn two_support(&self) -> Option<(f64, f64)> {
        None
    }
}

/// An immutable, shareable score field: a law, a seed and a dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightField {
    pub seed: u64,
    pub dist: DistributionSpec,
    pub dim: usize,
}

impl WeightField {
    pub fn new(seed: u64, dist: DistributionSpec, dim: usize) -> Result<WeightField> {
        if !(2..=crate::lattice::MAX_DIM).contains(&dim) {
            return Err(Error::InvalidInput(format!(
                "dimension {dim} not in 2..={}",
                crate::lattice::MAX_DIM
            )));
        }
        dist.validate()?;
        Ok(WeightField { seed, dist, dim })
    }

    /// The uniform variate behind a site's score; shared by coupled sweeps.
    pub fn unit(&self, s: &Site) -> f64 {
        debug_assert_eq!(s.dim(), self.dim);
        let words: Vec<u64> = s.coords().iter().map(|&c| c as u64).collect();
        hash_to_unit(counter_hash(self.seed, &words))
    }

    pub fn score(&self, s: &Site) -> f64 {
        self.dist.quantile(self.unit(s))
    }

    /// `S(ξ)`: the total score of a region, summed in lexicographic site
    /// order so the float result is reproducible.
    pub fn animal_weight(&self, a: &Region) -> f64 {
        a.iter().map(|s| self.score(s)).sum()
    }
}

impl ScoreSource for WeightField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score(&self, s: &Site) -> f64 {
        WeightField::score(self, s)
    }

    fn two_support(&self) -> Option<(f64, f64)> {
        self.dist.two_support_values()
    }
}

/// `S(ξ)` for any score source, summed in lexicographic site order.
pub fn region_weight(f: &impl ScoreSource, a: &Region) -> f64 {
    a.iter().map(|s| f.score(s)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeBox;

    fn two_point(p: f64, lambda: f64) -> DistributionSpec {
        DistributionSpec::TwoPointPenalty { p, lambda }
    }

    #[test]
    fn purity_and_degenerate() {
        let f = WeightField::new(7, DistributionSpec::Degenerate { c: 1.0 }, 2).unwrap();
        let s = Site::new(&[3, -2]);
        assert_eq!(f.score(&s), 1.0);
        let g = WeightField::new(9, two_point(0.5, 0.25), 3).unwrap();
        let t = Site::new(&[1, 2, 3]);
        assert_eq!(g.score(&t), g.score(&t));
        let g2 = WeightField::new(9, two_point(0.5, 0.25), 3).unwrap();
        assert_eq!(g.score(&t), g2.score(&t));
    }

    #[test]
    fn two_point_frequency() {
        let p = 0.7;
        let f = WeightField::new(42, two_point(p, 1.0), 2).unwrap();
        let n: i64 = 400;
        let mut ones = 0u64;
        for x in 0..n {
            for y in 0..n {
                if f.score(&Site::new(&[x, y])) == 1.0 {
                    ones += 1;
                }
            }
        }
        let total = (n * n) as f64;
        let freq = ones as f64 / total;
        let sigma = (p * (1.0 - p) / total).sqrt();
        assert!((freq - p).abs() < 3.0 * sigma, "freq {freq} vs p {p}");
    }

    #[test]
    fn monotone_coupling_in_p() {
        let lo = WeightField::new(11, two_point(0.3, 1.0), 2).unwrap();
        let hi = WeightField::new(11, two_point(0.6, 1.0), 2).unwrap();
        for x in -10..10 {
            for y in -10..10 {
                let s = Site::new(&[x, y]);
                assert!(hi.score(&s) >= lo.score(&s));
            }
        }
    }

    #[test]
    fn shifted_exactness() {
        let base = two_point(0.4, 0.5);
        let shifted = DistributionSpec::ShiftedBy {
            base: Box::new(base.clone()),
            epsilon: 0.25,
        };
        let f = WeightField::new(5, base, 2).unwrap();
        let g = WeightField::new(5, shifted, 2).unwrap();
        for x in -5..5 {
            for y in -5..5 {
                let s = Site::new(&[x, y]);
                assert_eq!(g.score(&s), f.score(&s) + 0.25);
            }
        }
    }

    #[test]
    fn animal_weight_additive() {
        let f = WeightField::new(3, two_point(0.5, 0.5), 2).unwrap();
        let b = LatticeBox::at_origin(2, 3);
        let all = b.to_region();
        let hand: f64 = b.sites().map(|s| f.score(&s)).sum();
        assert_eq!(f.animal_weight(&all), hand);
        let left: Region = b.sites().filter(|s| s.get(0) == 0).collect();
        let right = all.difference(&left);
        let sum = f.animal_weight(&left) + f.animal_weight(&right);
        assert!((sum - hand).abs() < 1e-12);
    }

    #[test]
    fn tail_condition_verdicts() {
        assert_eq!(two_point(0.5, 1.0).martins_condition(), TailVerdict::Satisfied);
        let ht = |alpha: f64| DistributionSpec::HeavyTail { d: 2, alpha, x0: 10.0 };
        assert_eq!(ht(0.5).martins_condition(), TailVerdict::Satisfied);
        assert_eq!(ht(0.0).martins_condition(), TailVerdict::Violated);
        // alpha = -1 makes the tail exactly x^{-d}
        let pure = ht(-1.0);
        if let DistributionSpec::HeavyTail { d, alpha, x0 } = &pure {
            let x = 37.0f64;
            assert!((heavy_tail(*d, *alpha, x) - x.powi(-2)).abs() < 1e-15);
            let _ = x0;
        }
        assert_eq!(pure.martins_condition(), TailVerdict::Violated);
        let shifted = DistributionSpec::ShiftedBy {
            base: Box::new(ht(1.0)),
            epsilon: 1.0,
        };
        assert_eq!(shifted.martins_condition(), TailVerdict::Satisfied);
    }

    #[test]
    fn heavy_tail_cdf_and_quantile() {
        let d = DistributionSpec::HeavyTail { d: 2, alpha: 1.0, x0: 5.0 };
        d.validate().unwrap();
        assert_eq!(d.cdf(0.0).unwrap(), 0.0);
        let atom = d.cdf(4.5).unwrap();
        assert!(atom > 0.0 && atom < 1.0);
        assert_eq!(d.quantile(atom * 0.5), 4.0);
        for &t in &[0.1, 0.5, 0.9, 0.99] {
            let u = atom + (1.0 - atom) * t;
            let x = d.quantile(u);
            assert!(x >= 5.0);
            assert!((d.cdf(x).unwrap() - u).abs() < 1e-9);
        }
    }

    #[test]
    fn exceedance_probabilities() {
        let d = two_point(0.5, 1.0);
        assert_eq!(d.max_exceedance_prob(2, 10, -2.0).unwrap(), 1.0);
        assert_eq!(d.max_exceedance_prob(2, 10, 2.0).unwrap(), 0.0);
        let ht = DistributionSpec::HeavyTail { d: 2, alpha: 0.5, x0: 5.0 };
        // exactness against a direct power for a count small enough that
        // F(t)^(n^d) is representable head-on
        let t = 20.0;
        let f = ht.cdf(t).unwrap();
        let direct = 1.0 - f.powi(9); // n = 3, d = 2
        assert!((ht.max_exceedance_prob(2, 3, t).unwrap() - direct).abs() < 1e-12);
        // at the threshold n (log n)^{-1-alpha} the expected exceedance
        // count n^d (1-F(t)) tends to 1 from above, so the probability sits
        // strictly between 1 - 1/e and 1 at desk scales
        for n in [100u64, 1000, 10000] {
            let t = (n as f64) * (n as f64).ln().powf(-1.5);
            let p = ht.max_exceedance_prob(2, n, t).unwrap();
            assert!(p > 1.0 - (-1.0f64).exp() && p < 1.0, "p = {p} at n = {n}");
        }
    }

    #[test]
    fn truncated_above() {
        let base = DistributionSpec::UniformInterval { a: -1.0, b: 1.0 };
        let tr = DistributionSpec::TruncatedAbove {
            base: Box::new(base),
            lambda: 0.5,
        };
        // quantile: u -> 2u-1, kept only above 0.5
        assert_eq!(tr.quantile(0.9), 0.8);
        assert_eq!(tr.quantile(0.3), 0.0);
        // CDF: mass 0.75 collapses to the atom at 0
        assert_eq!(tr.cdf(-0.1).unwrap(), 0.0);
        assert_eq!(tr.cdf(0.0).unwrap(), 0.75);
        assert_eq!(tr.cdf(0.5).unwrap(), 0.75);
        assert!((tr.cdf(0.8).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(tr.cdf(1.0).unwrap(), 1.0);
        // mass below 0.5 collapses to the atom at 0
        assert_eq!(tr.essential_infimum(), Some(0.0));
        let low_cut = DistributionSpec::TruncatedAbove {
            base: Box::new(DistributionSpec::UniformInterval { a: -1.0, b: 1.0 }),
            lambda: -0.5,
        };
        assert_eq!(low_cut.essential_infimum(), Some(-0.5));
    }

    #[test]
    fn penalty_for_reach_exponent() {
        let one = rho_percolation_penalty(1.0, 0.5).unwrap();
        assert_eq!(one, two_point(0.5, 0.5));
        let three = rho_percolation_penalty(3.0, 0.9).unwrap();
        assert_eq!(three, two_point(0.9, 0.75));
        let tiny = rho_percolation_penalty(1e-9, 0.5).unwrap();
        if let DistributionSpec::TwoPointPenalty { lambda, .. } = tiny {
            assert!(lambda < 1e-8);
        }
        assert!(rho_percolation_penalty(0.0, 0.5).is_err());
    }

    #[test]
    fn spec_serde() {
        let d = two_point(0.7, 0.5);
        let js = serde_json::to_string(&d).unwrap();
        assert_eq!(js, r#"{"family":"TwoPointPenalty","p":0.7,"lambda":0.5}"#);
        let back: DistributionSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(back, d);
        let nested: DistributionSpec = serde_json::from_str(
            r#"{"family":"ShiftedBy","base":{"family":"Degenerate","c":2.0},"epsilon":-1.0}"#,
        )
        .unwrap();
        assert_eq!(nested.quantile(0.5), 1.0);
    }

    #[test]
    fn empirical_cdf_matches() {
        // Kolmogorov–Smirnov style check at desk scale for the uniform law.
        let f = WeightField::new(123, DistributionSpec::UniformInterval { a: 0.0, b: 1.0 }, 2)
            .unwrap();
        let n: i64 = 200;
        let mut xs: Vec<f64> = Vec::with_capacity((n * n) as usize);
        for x in 0..n {
            for y in 0..n {
                xs.push(f.score(&Site::new(&[x, y])));
            }
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, x)| ((i + 1) as f64 / m - x).abs().max((i as f64 / m - x).abs()))
            .fold(0.0f64, f64::max);
        // 0.1% critical value ~ 1.95 / sqrt(m)
        assert!(ks < 1.95 / m.sqrt(), "KS statistic {ks}");
    }
}
