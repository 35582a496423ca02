//! Replica bookkeeping shared by the estimation and verification layers:
//! per-replica records, normal-approximation confidence intervals, per-scale
//! summaries and the CSV writer.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One replica measurement at scale `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub n: u64,
    pub seed: u64,
    pub raw: f64,
    pub normalized: f64,
}

/// Mean / sample-sd / count triple with a 95% half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
    pub ci_half: f64,
}

pub fn summarize(values: impl IntoIterator<Item = f64>) -> Summary {
    let mut count = 0usize;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for x in values {
        count += 1;
        let delta = x - mean;
        mean += delta / count as f64;
        m2 += delta * (x - mean);
    }
    let sd = if count > 1 {
        (m2 / (count as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    Summary {
        mean,
        sd,
        count,
        ci_half: if count > 0 {
            1.96 * sd / (count as f64).sqrt()
        } else {
            f64::INFINITY
        },
    }
}

/// A named series of replica records across scales.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateSeries {
    pub statistic: String,
    /// True when each raw value is only a feasible lower bound for the
    /// quantity (heuristic witnesses).
    pub lower_bound_only: bool,
    pub records: Vec<Record>,
}

impl EstimateSeries {
    pub fn new(statistic: impl Into<String>, lower_bound_only: bool) -> EstimateSeries {
        EstimateSeries {
            statistic: statistic.into(),
            lower_bound_only,
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    /// Canonical order: by (n, seed). Parallel producers sort before use.
    pub fn sort(&mut self) {
        self.records.sort_by_key(|r| (r.n, r.seed));
    }

    pub fn overall(&self) -> Summary {
        summarize(self.records.iter().map(|r| r.normalized))
    }

    /// Per-scale summaries of the normalized values, keyed by n.
    pub fn by_n(&self) -> BTreeMap<u64, Summary> {
        let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for r in &self.records {
            groups.entry(r.n).or_default().push(r.normalized);
        }
        groups
            .into_iter()
            .map(|(n, v)| (n, summarize(v)))
            .collect()
    }

    /// Least-squares slope of the per-scale means against n; a convergence
    /// diagnostic (should drift toward 0 as the normalized series settles).
    pub fn trend_slope(&self) -> Result<f64> {
        let by_n = self.by_n();
        if by_n.len() < 2 {
            return Err(Error::InsufficientSamples {
                need: 2,
                got: by_n.len(),
            });
        }
        let xs: Vec<f64> = by_n.keys().map(|&n| n as f64).collect();
        let ys: Vec<f64> = by_n.values().map(|s| s.mean).collect();
        let k = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / k;
        let my = ys.iter().sum::<f64>() / k;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        Ok(sxy / sxx)
    }

    /// Writes `statistic,n,seed,raw,normalized` rows, sorted canonically.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let mut sorted = self.records.clone();
        sorted.sort_by_key(|r| (r.n, r.seed));
        writeln!(w, "statistic,n,seed,raw,normalized")?;
        for r in &sorted {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.statistic, r.n, r.seed, r.raw, r.normalized
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_matches_hand_computation() {
        let s = summarize([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.count, 4);
        let sd = (((1.5f64).powi(2) * 2.0 + 0.25 * 2.0) / 3.0).sqrt();
        assert!((s.sd - sd).abs() < 1e-12);
        assert!((s.ci_half - 1.96 * sd / 2.0).abs() < 1e-12);
    }

    #[test]
    fn series_grouping_and_trend() {
        let mut es = EstimateSeries::new("g", false);
        for (n, v) in [(4u64, 1.0), (4, 3.0), (8, 2.0), (8, 4.0)] {
            es.push(Record {
                n,
                seed: 0,
                raw: v,
                normalized: v,
            });
        }
        let by_n = es.by_n();
        assert_eq!(by_n[&4].mean, 2.0);
        assert_eq!(by_n[&8].mean, 3.0);
        assert!((es.trend_slope().unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn csv_schema_and_determinism() {
        let mut es = EstimateSeries::new("n_hat", false);
        es.push(Record { n: 8, seed: 2, raw: 5.0, normalized: 0.625 });
        es.push(Record { n: 4, seed: 1, raw: 3.0, normalized: 0.75 });
        let mut buf = Vec::new();
        es.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "statistic,n,seed,raw,normalized\nn_hat,4,1,3,0.75\nn_hat,8,2,5,0.625\n"
        );
        let mut buf2 = Vec::new();
        es.write_csv(&mut buf2).unwrap();
        assert_eq!(text.as_bytes(), &buf2[..]);
    }
}
