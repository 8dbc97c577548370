//! Effectiveness, efficiency and distribution metrics, and the rank-sum test
//! used to compare strategies.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{ArtError, Result};
use crate::generators::{Generator, GeneratorConfig, Strategy};
use crate::geometry::{InputDomain, RandomSource, TestPoint};

/// F-measure relative to random testing's `1 / theta`, in percent.
pub fn f_ratio(f_art_mean: f64, theta: f64) -> f64 {
    100.0 * f_art_mean * theta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub std: f64,
    pub values: Vec<f64>,
}

impl SampleSummary {
    pub fn new(values: Vec<f64>) -> Self {
        let n = values.len();
        let mean = if n == 0 {
            f64::NAN
        } else {
            values.iter().sum::<f64>() / n as f64
        };
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        SampleSummary { n, mean, std, values }
    }

    pub fn median(&self) -> f64 {
        median(&self.values)
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Axis-aligned sub-domain in unit coordinates, closed.
#[derive(Debug, Clone, PartialEq)]
pub struct SubDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SubDomain {
    /// Per axis: `[u, min(u + s, 1)]` with `u`, `s` uniform on `[0, 1)`.
    pub fn random<R: RandomSource + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let mut lo = Vec::with_capacity(dim);
        let mut hi = Vec::with_capacity(dim);
        for _ in 0..dim {
            let u = rng.next_unit();
            let s = rng.next_unit();
            lo.push(u);
            hi.push((u + s).min(1.0));
        }
        SubDomain { lo, hi }
    }

    pub fn whole(dim: usize) -> Self {
        SubDomain {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn volume_fraction(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&x, (&l, &h))| l <= x && x <= h)
    }
}

/// Largest gap between point share and volume share over `subdomains`.
pub fn discrepancy_over(points: &[TestPoint], domain: &InputDomain, subdomains: &[SubDomain]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let unit: Vec<Vec<f64>> = points.iter().map(|p| domain.to_unit(p.coords())).collect();
    let total = unit.len() as f64;
    subdomains
        .iter()
        .map(|sd| {
            let inside = unit.iter().filter(|u| sd.contains(u)).count() as f64;
            (inside / total - sd.volume_fraction()).abs()
        })
        .fold(0.0, f64::max)
}

/// Monte Carlo discrepancy over `m` random sub-domains. Result is in `[0, 1]`.
pub fn discrepancy<R: RandomSource + ?Sized>(
    points: &[TestPoint],
    domain: &InputDomain,
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    if points.is_empty() {
        return Err(ArtError::InvalidParameter(
            "discrepancy needs at least one point".into(),
        ));
    }
    if m == 0 {
        return Err(ArtError::InvalidParameter(
            "discrepancy needs at least one sub-domain".into(),
        ));
    }
    let subs: Vec<SubDomain> = (0..m).map(|_| SubDomain::random(domain.dim(), rng)).collect();
    Ok(discrepancy_over(points, domain, &subs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// Normal-approximation statistic, positive when the first sample ranks
    /// higher.
    pub z: f64,
    /// Two-tailed p-value.
    pub p_value: f64,
    /// `|z| / sqrt(n1 + n2)`.
    pub effect_size_r: f64,
    /// Mann-Whitney U of the first sample.
    pub u: f64,
    pub n1: usize,
    pub n2: usize,
    /// Whether `p_value` comes from the exact permutation distribution.
    pub exact: bool,
}

/// Pooled sample sizes up to this use the exact permutation distribution.
pub const EXACT_RANK_SUM_LIMIT: usize = 30;

/// Average ranks (1-based) of the pooled values, plus the tie term
/// `sum(t^3 - t)`.
fn midranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        let t = (end - start) as f64;
        ties += t * t * t - t;
        start = end;
    }
    (ranks, ties)
}

/// Two-tailed exact p-value: share of size-`n1` subsets of the pooled ranks
/// whose rank sum is at least as far from its mean as the observed one.
/// Counts rank-sum frequencies with a subset-sum table over doubled ranks.
fn exact_p_value(ranks: &[f64], n1: usize, observed: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // counts[c][s]: subsets of size c with doubled rank sum s.
    let mut counts = vec![vec![0.0f64; max_sum + 1]; n1 + 1];
    counts[0][0] = 1.0;
    for &r in &doubled {
        for c in (1..=n1).rev() {
            for s in (r..=max_sum).rev() {
                let prev = counts[c - 1][s - r];
                if prev != 0.0 {
                    counts[c][s] += prev;
                }
            }
        }
    }
    let n = ranks.len();
    let mean2 = (n1 * (n + 1)) as i64;
    let obs_dev = ((2.0 * observed).round() as i64 - mean2).abs();
    let total: f64 = counts[n1].iter().sum();
    let extreme: f64 = counts[n1]
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as i64 - mean2).abs() >= obs_dev)
        .map(|(_, c)| c)
        .sum();
    (extreme / total).min(1.0)
}

/// Two-tailed Wilcoxon rank-sum test with average ranks for ties.
///
/// `z` uses the tie-corrected normal approximation with a 0.5 continuity
/// correction. The p-value is exact when `n1 + n2 <= EXACT_RANK_SUM_LIMIT`
/// and normal otherwise. When every value is identical the test is
/// degenerate and reports `z = 0`, `p = 1`.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankSumResult> {
    if a.is_empty() || b.is_empty() {
        return Err(ArtError::InvalidParameter(
            "rank-sum test needs two non-empty samples".into(),
        ));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(ArtError::InvalidParameter("rank-sum samples contain NaN".into()));
    }
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let w: f64 = ranks[..n1].iter().sum();
    let u = w - (n1 * (n1 + 1)) as f64 / 2.0;

    let (nf, n1f, n2f) = (n as f64, n1 as f64, n2 as f64);
    let mean = n1f * (nf + 1.0) / 2.0;
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(RankSumResult {
            z: 0.0,
            p_value: 1.0,
            effect_size_r: 0.0,
            u,
            n1,
            n2,
            exact: false,
        });
    }
    let dev = w - mean;
    let z = dev.signum() * (dev.abs() - 0.5).max(0.0) / var.sqrt();
    let exact = n <= EXACT_RANK_SUM_LIMIT;
    let p_value = if exact {
        exact_p_value(&ranks, n1, w)
    } else {
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * normal.sf(z.abs())).min(1.0)
    };
    Ok(RankSumResult {
        z,
        p_value,
        effect_size_r: effect_size(z, n1, n2),
        u,
        n1,
        n2,
        exact,
    })
}

/// `|z| / sqrt(n1 + n2)`.
pub fn effect_size(z: f64, n1: usize, n2: usize) -> f64 {
    z.abs() / ((n1 + n2) as f64).sqrt()
}

/// Least-squares slope of `ln(y)` against `ln(x)`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub strategy: Strategy,
    pub d: usize,
    pub n: usize,
    /// Mean cumulative generation time to reach `n` test cases.
    pub mean_ms: f64,
}

/// Cumulative nanoseconds spent generating and storing test cases, read at
/// each target count. No failure region is involved.
pub fn time_generation(config: &GeneratorConfig, n_targets: &[usize]) -> Result<Vec<u64>> {
    let mut generator = Generator::new(config.clone())?;
    let last = n_targets.last().copied().unwrap_or(0);
    let mut out = Vec::with_capacity(n_targets.len());
    let mut next_target = 0;
    let start = Instant::now();
    for produced in 1..=last {
        let t = generator.next_test_case();
        generator.record_outcome(&t, false);
        while next_target < n_targets.len() && n_targets[next_target] == produced {
            out.push(start.elapsed().as_nanos() as u64);
            next_target += 1;
        }
    }
    Ok(out)
}

/// Mean generation time per target over `repeats` runs with seeds
/// `config.seed + r`. A short warm-up run to the first target is discarded.
pub fn timing_harness(config: &GeneratorConfig, n_targets: &[usize], repeats: usize) -> Result<Vec<TimingRow>> {
    if n_targets.is_empty() || n_targets.contains(&0) {
        return Err(ArtError::InvalidParameter("timing targets must be positive".into()));
    }
    if n_targets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ArtError::InvalidParameter(
            "timing targets must be strictly ascending".into(),
        ));
    }
    if repeats == 0 {
        return Err(ArtError::InvalidParameter("repeats must be at least 1".into()));
    }
    time_generation(config, &n_targets[..1])?;
    let mut sums = vec![0u128; n_targets.len()];
    for r in 0..repeats {
        let cfg = config.with_seed(config.seed.wrapping_add(r as u64));
        for (sum, ns) in sums.iter_mut().zip(time_generation(&cfg, n_targets)?) {
            *sum += ns as u128;
        }
    }
    Ok(n_targets
        .iter()
        .zip(sums)
        .map(|(&n, sum)| TimingRow {
            strategy: config.strategy,
            d: config.domain.dim(),
            n,
            mean_ms: sum as f64 / repeats as f64 / 1e6,
        })
        .collect())
}
