//! Test case generation engines.
//!
//! All four strategies share one loop: the first test case is a uniform
//! sample; after that the FSCS variants draw `k` uniform candidates and keep
//! the one whose nearest executed test case is farthest away. They differ only
//! in how the executed set is stored and searched.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ArtError, Result};
use crate::geometry::{InputDomain, Metric, TestPoint};
use crate::hnsw::{HnswParams, SearchScratch, SmallWorldIndex};
use crate::kdtree::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "rt")]
    RandomTesting,
    #[serde(rename = "fscs")]
    FscsBruteForce,
    /// Exact KD-tree nearest neighbor search, not LimBal-KDFC.
    #[serde(rename = "kd-exact")]
    FscsKdTree,
    #[serde(rename = "swfc")]
    SwfcArt,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::RandomTesting,
        Strategy::FscsBruteForce,
        Strategy::FscsKdTree,
        Strategy::SwfcArt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::RandomTesting => "rt",
            Strategy::FscsBruteForce => "fscs",
            Strategy::FscsKdTree => "kd-exact",
            Strategy::SwfcArt => "swfc",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = ArtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rt" | "random" | "random-testing" => Ok(Strategy::RandomTesting),
            "fscs" | "fscs-art" | "fscs-brute-force" => Ok(Strategy::FscsBruteForce),
            "kd" | "kd-exact" | "fscs-kd-tree" => Ok(Strategy::FscsKdTree),
            "swfc" | "swfc-art" => Ok(Strategy::SwfcArt),
            other => Err(ArtError::InvalidParameter(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub strategy: Strategy,
    /// Candidate set size.
    pub k: usize,
    /// Graph parameters; only read by `SwfcArt`.
    pub hnsw: HnswParams,
    pub domain: InputDomain,
    pub metric: Metric,
    pub seed: u64,
}

impl GeneratorConfig {
    pub const DEFAULT_K: usize = 10;

    /// `k = 10` and graph parameters derived from the domain's dimensionality.
    pub fn new(strategy: Strategy, domain: InputDomain, seed: u64) -> Self {
        GeneratorConfig {
            strategy,
            k: Self::DEFAULT_K,
            hnsw: HnswParams::for_dimension(domain.dim()),
            domain,
            metric: Metric::Euclidean,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GeneratorConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(ArtError::InvalidParameter("k must be at least 1".into()));
        }
        self.hnsw.validate()
    }
}

/// Brute-force executed set.
#[derive(Debug, Clone)]
struct FlatStore {
    dim: usize,
    coords: Vec<f64>,
}

impl FlatStore {
    fn nearest_key(&self, metric: Metric, q: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for p in self.coords.chunks_exact(self.dim) {
            let key = metric.rank_key(q, p);
            if key < best {
                best = key;
            }
        }
        best
    }

    /// Nearest key for every candidate in one pass over the store.
    fn nearest_keys(&self, metric: Metric, candidates: &[f64], out: &mut Vec<f64>) {
        let k = candidates.len() / self.dim;
        out.clear();
        out.resize(k, f64::INFINITY);
        for p in self.coords.chunks_exact(self.dim) {
            for (best, c) in out.iter_mut().zip(candidates.chunks_exact(self.dim)) {
                let key = metric.rank_key(c, p);
                if key < *best {
                    *best = key;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Executed {
    Flat(FlatStore),
    Kd(KdTree),
    Graph {
        index: SmallWorldIndex,
        scratch: SearchScratch,
    },
}

/// One trial's generator: configuration, executed set and random streams.
#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
    executed: Executed,
    count: usize,
    /// Uniform samples and candidates. Identical across strategies for the
    /// same seed.
    candidate_rng: ChaCha8Rng,
    /// Graph level assignment, kept apart so it cannot shift candidate draws.
    structure_rng: ChaCha8Rng,
    candidates: Vec<f64>,
    keys: Vec<f64>,
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let dim = config.domain.dim();
        let executed = match config.strategy {
            Strategy::RandomTesting | Strategy::FscsBruteForce => Executed::Flat(FlatStore {
                dim,
                coords: Vec::new(),
            }),
            Strategy::FscsKdTree => Executed::Kd(KdTree::new(dim)),
            Strategy::SwfcArt => Executed::Graph {
                index: SmallWorldIndex::new(dim, config.hnsw.clone(), config.metric)?,
                scratch: SearchScratch::new(),
            },
        };
        let candidate_rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut structure_rng = ChaCha8Rng::seed_from_u64(config.seed);
        structure_rng.set_stream(1);
        Ok(Generator {
            candidates: Vec::with_capacity(config.k * dim),
            keys: Vec::with_capacity(config.k),
            config,
            executed,
            count: 0,
            candidate_rng,
            structure_rng,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn strategy(&self) -> Strategy {
        self.config.strategy
    }

    /// Number of executed, non-failing test cases stored.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Graph capacity for `SwfcArt`, `None` otherwise.
    pub fn graph_capacity(&self) -> Option<usize> {
        match &self.executed {
            Executed::Graph { index, .. } => Some(index.capacity()),
            _ => None,
        }
    }

    pub fn graph(&self) -> Option<&SmallWorldIndex> {
        match &self.executed {
            Executed::Graph { index, .. } => Some(index),
            _ => None,
        }
    }

    /// Executed test cases in insertion order.
    pub fn executed(&self) -> Vec<TestPoint> {
        let dim = self.config.domain.dim();
        let to_points = |coords: &[f64]| -> Vec<TestPoint> {
            coords
                .chunks_exact(dim)
                .map(|c| TestPoint::new(c.to_vec()).expect("stored points are finite"))
                .collect()
        };
        match &self.executed {
            Executed::Flat(flat) => to_points(&flat.coords),
            Executed::Kd(tree) => to_points(tree.flat_coords()),
            Executed::Graph { index, .. } => index.points().map(|p| TestPoint::new(p.to_vec()).unwrap()).collect(),
        }
    }

    /// Nearest-neighbor distance from `q` to the executed set, exact or
    /// approximate depending on the strategy. `None` when nothing is stored.
    pub fn nearest_distance(&mut self, q: &[f64]) -> Option<f64> {
        if self.count == 0 {
            return None;
        }
        let metric = self.config.metric;
        Some(match &mut self.executed {
            Executed::Flat(flat) => metric.key_to_distance(flat.nearest_key(metric, q)),
            Executed::Kd(tree) => tree.nearest(q)?.1,
            Executed::Graph { index, scratch } => index.nearest_with(q, index.params().ef_search, scratch)?.1,
        })
    }

    /// Index of the candidate whose nearest executed neighbor is farthest,
    /// with that distance. The first candidate wins ties. With an empty
    /// executed set the first candidate is returned with infinite distance.
    pub fn select_best(&mut self, candidates: &[TestPoint]) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, c) in candidates.iter().enumerate() {
            let d = self.nearest_distance(c.coords()).unwrap_or(f64::INFINITY);
            if d > best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// Next test case to execute.
    pub fn next_test_case(&mut self) -> TestPoint {
        let dim = self.config.domain.dim();
        if self.config.strategy == Strategy::RandomTesting || self.count == 0 {
            let mut p = vec![0.0; dim];
            self.config.domain.sample_into(&mut self.candidate_rng, &mut p);
            return TestPoint::new(p).expect("samples are finite");
        }
        let k = self.config.k;
        let mut buf = std::mem::take(&mut self.candidates);
        buf.resize(k * dim, 0.0);
        for c in buf.chunks_exact_mut(dim) {
            self.config.domain.sample_into(&mut self.candidate_rng, c);
        }
        let metric = self.config.metric;
        // Every backend reports the metric's rank key, so ties agree across strategies.
        let mut keys = std::mem::take(&mut self.keys);
        match &mut self.executed {
            Executed::Flat(flat) => flat.nearest_keys(metric, &buf, &mut keys),
            Executed::Kd(tree) => {
                keys.clear();
                keys.extend(
                    buf.chunks_exact(dim)
                        .map(|c| tree.nearest_squared(c).map_or(f64::INFINITY, |x| x.1)),
                );
            }
            Executed::Graph { index, scratch } => {
                keys.clear();
                let ef = index.params().ef_search;
                keys.extend(
                    buf.chunks_exact(dim)
                        .map(|c| index.nearest_key_with(c, ef, scratch).map_or(f64::INFINITY, |x| x.1)),
                );
            }
        }
        let mut best_idx = 0;
        let mut best_key = f64::NEG_INFINITY;
        for (i, &key) in keys.iter().enumerate() {
            if key > best_key {
                best_key = key;
                best_idx = i;
            }
        }
        self.keys = keys;
        let chosen = buf[best_idx * dim..(best_idx + 1) * dim].to_vec();
        self.candidates = buf;
        TestPoint::new(chosen).expect("samples are finite")
    }

    /// Reports the outcome of executing `t`. Passing test cases join the
    /// executed set; failing ones are discarded.
    pub fn record_outcome(&mut self, t: &TestPoint, failed: bool) {
        if failed {
            return;
        }
        let p = t.coords();
        assert_eq!(p.len(), self.config.domain.dim(), "test case dimensionality");
        match &mut self.executed {
            Executed::Flat(flat) => flat.coords.extend_from_slice(p),
            Executed::Kd(tree) => tree.insert(p),
            Executed::Graph { index, scratch } => {
                if index.is_full() {
                    *index = index.rebuild_doubled(&mut self.structure_rng);
                }
                index.insert_with_scratch(p, &mut self.structure_rng, scratch);
            }
        }
        self.count += 1;
    }
}
