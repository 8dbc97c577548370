//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

/// Exact nearest-neighbor distance by linear scan.
pub fn brute_nn_distance(points: &[Vec<f64>], q: &[f64]) -> f64 {
    points
        .iter()
        .map(|p| p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min)
}

/// Index of the candidate with the largest nearest-neighbor distance; first
/// wins ties.
pub fn brute_select(executed: &[Vec<f64>], candidates: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let d = brute_nn_distance(executed, c);
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Average ranks by counting: rank = #smaller + (#equal + 1) / 2.
pub fn counted_midranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let less = values.iter().filter(|&&x| x < v).count() as f64;
            let equal = values.iter().filter(|&&x| x == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Calls `f` with every `k`-subset of `0..n`.
pub fn for_each_subset(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    go(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Two-tailed p-value of the rank-sum statistic by enumerating every
/// relabelling of the pooled sample.
pub fn permutation_p_value(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = counted_midranks(&pooled);
    let n = pooled.len();
    let n1 = a.len();
    let mean = n1 as f64 * (n as f64 + 1.0) / 2.0;
    let observed: f64 = ranks[..n1].iter().sum();
    let obs_dev = (observed - mean).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for_each_subset(n, n1, &mut |subset| {
        let s: f64 = subset.iter().map(|&i| ranks[i]).sum();
        total += 1;
        if (s - mean).abs() >= obs_dev - 1e-9 {
            extreme += 1;
        }
    });
    extreme as f64 / total as f64
}

/// Continuity-corrected, tie-corrected normal statistic of the rank sum.
pub fn reference_z(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = counted_midranks(&pooled);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let n = n1 + n2;
    let w: f64 = ranks[..a.len()].iter().sum();
    let mut tie_term = 0.0;
    let mut seen: Vec<f64> = Vec::new();
    for &v in &pooled {
        if !seen.contains(&v) {
            seen.push(v);
            let t = pooled.iter().filter(|&&x| x == v).count() as f64;
            tie_term += t.powi(3) - t;
        }
    }
    let sigma = (n1 * n2 / 12.0 * (n + 1.0 - tie_term / (n * (n - 1.0)))).sqrt();
    let dev = w - n1 * (n + 1.0) / 2.0;
    if sigma == 0.0 {
        return 0.0;
    }
    dev.signum() * (dev.abs() - 0.5).max(0.0) / sigma
}

/// Deterministic xorshift stream for building test inputs without touching
/// the crate's own generators.
pub struct Xorshift(pub u64);

impl Xorshift {
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }
}
