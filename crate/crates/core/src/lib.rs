//! Adaptive random testing with a fixed-size candidate set, where the
//! executed test cases are kept in a hierarchical navigable small world graph
//! so that each candidate's nearest neighbor is found in logarithmic time.
//!
//! Alongside the graph-backed generator (`SwfcArt`) the crate ships plain
//! random testing, brute-force FSCS-ART and an exact KD-tree variant, plus
//! the simulation pieces used to compare them: synthetic failure regions,
//! F-measure trials, discrepancy, generation timing and the rank-sum test.

pub mod error;
pub mod failure;
pub mod generators;
pub mod geometry;
pub mod hnsw;
pub mod kdtree;
pub mod metrics;

pub use error::{ArtError, Result};
pub use failure::{
    make_block, make_point_pattern, make_region, make_strip, region_rng, run_against, run_trial, ExternalSut,
    FailureRegion, Pattern, RegionRecord, SystemUnderTest, TrialRecord,
};
pub use generators::{Generator, GeneratorConfig, Strategy};
pub use geometry::{distance, sample_uniform, seeded_rng, InputDomain, Metric, RandomSource, SeededRng, TestPoint};
pub use hnsw::{HnswParams, SmallWorldIndex};
pub use kdtree::KdTree;
pub use metrics::{discrepancy, f_ratio, timing_harness, wilcoxon_rank_sum, RankSumResult, SampleSummary};
