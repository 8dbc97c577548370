use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use swfc_art::failure::default_max_tests;
use swfc_art::hnsw::SearchScratch;
use swfc_art::metrics::{log_log_slope, SampleSummary};
use swfc_art::{
    discrepancy, f_ratio, make_region, region_rng, run_trial, sample_uniform, seeded_rng, timing_harness,
    wilcoxon_rank_sum, Generator, GeneratorConfig, HnswParams, InputDomain, Metric, Pattern, RankSumResult,
    SmallWorldIndex, TrialRecord,
};

use crate::config::CampaignConfig;
use crate::error::CliError;

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BENCH_FILE: &str = "bench.csv";
pub const DISCREPANCY_FILE: &str = "discrepancy.csv";
pub const RECALL_FILE: &str = "recall.csv";
pub const RECALL_EF: [usize; 3] = [1, 2, 4];

#[derive(Debug, Serialize)]
struct TrialRow {
    strategy: String,
    pattern: String,
    d: usize,
    theta: f64,
    seed: u64,
    f_measure: usize,
    censored: bool,
    gen_time_ns: u64,
}

impl From<&TrialRecord> for TrialRow {
    fn from(r: &TrialRecord) -> Self {
        TrialRow {
            strategy: r.strategy.to_string(),
            pattern: r.pattern.to_string(),
            d: r.d,
            theta: r.theta,
            seed: r.seed,
            f_measure: r.f_measure,
            censored: r.censored,
            gen_time_ns: r.gen_time_ns,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct StrategySummary {
    pub strategy: String,
    pub trials: usize,
    pub censored: usize,
    pub mean_f_measure: f64,
    pub std_f_measure: f64,
    pub f_ratio: f64,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub rank_sum: RankSumResult,
}

#[derive(Debug, Serialize)]
pub struct CellSummary {
    pub d: usize,
    pub theta: f64,
    pub pattern: String,
    pub strategies: Vec<StrategySummary>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    config: &'a CampaignConfig,
    cells: Vec<CellSummary>,
}

fn output_file(config: &CampaignConfig, name: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&config.output_path)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", config.output_path.display())))?;
    Ok(config.output_path.join(name))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn pool(config: &CampaignConfig) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))
}

fn domain(config: &CampaignConfig, d: usize) -> Result<InputDomain, CliError> {
    Ok(InputDomain::hypercube(d, config.domain[0], config.domain[1])?)
}

/// Trials of one (d, theta, pattern) cell, grouped by strategy in config
/// order. Trial `i` places its region and seeds every strategy's generator
/// with the same seed, so strategies are compared on identical regions.
fn run_cell(
    config: &CampaignConfig,
    d: usize,
    theta: f64,
    pattern: Pattern,
) -> Result<Vec<Vec<TrialRecord>>, CliError> {
    let dom = domain(config, d)?;
    let max_tests = config.max_tests.unwrap_or_else(|| default_max_tests(theta));
    let per_trial: Vec<Vec<TrialRecord>> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let seed = config.trial_seed(i);
            let region = make_region(pattern, &dom, theta, &mut region_rng(seed))?;
            config
                .strategies
                .iter()
                .map(|&s| run_trial(&GeneratorConfig::new(s, dom.clone(), seed), &region, max_tests))
                .collect::<swfc_art::Result<Vec<_>>>()
        })
        .collect::<swfc_art::Result<_>>()?;
    Ok((0..config.strategies.len())
        .map(|s| per_trial.iter().map(|t| t[s].clone()).collect())
        .collect())
}

pub fn summarize_cell(d: usize, theta: f64, pattern: Pattern, groups: &[Vec<TrialRecord>]) -> CellSummary {
    let samples: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| g.iter().map(|r| r.f_measure as f64).collect())
        .collect();
    let strategies = groups
        .iter()
        .zip(&samples)
        .map(|(g, values)| {
            let s = SampleSummary::new(values.clone());
            StrategySummary {
                strategy: g[0].strategy.to_string(),
                trials: s.n,
                censored: g.iter().filter(|r| r.censored).count(),
                mean_f_measure: s.mean,
                std_f_measure: s.std,
                f_ratio: f_ratio(s.mean, theta),
            }
        })
        .collect();
    let mut comparisons = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            comparisons.push(Comparison {
                a: groups[i][0].strategy.to_string(),
                b: groups[j][0].strategy.to_string(),
                rank_sum: wilcoxon_rank_sum(&samples[i], &samples[j]).expect("cells hold at least one trial"),
            });
        }
    }
    CellSummary {
        d,
        theta,
        pattern: pattern.to_string(),
        strategies,
        comparisons,
    }
}

pub fn simulate(config: &CampaignConfig) -> Result<(), CliError> {
    let trials_path = output_file(config, TRIALS_FILE)?;
    let mut trials = csv_writer(&trials_path)?;
    let pool = pool(config)?;
    let mut cells = Vec::new();
    for &d in &config.dimensions {
        for &theta in &config.thetas {
            for &pattern in &config.patterns {
                let groups = pool.install(|| run_cell(config, d, theta, pattern))?;
                for record in groups.iter().flatten() {
                    trials.serialize(TrialRow::from(record))?;
                }
                let cell = summarize_cell(d, theta, pattern, &groups);
                for s in &cell.strategies {
                    eprintln!(
                        "d={d} theta={theta} {pattern} {}: F-ratio {:.2}%",
                        s.strategy, s.f_ratio
                    );
                }
                cells.push(cell);
            }
        }
    }
    trials.flush()?;
    let summary = Summary { config, cells };
    fs::write(
        output_file(config, SUMMARY_FILE)?,
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct BenchRow {
    strategy: String,
    d: usize,
    n: usize,
    mean_ms: f64,
    slope: Option<f64>,
}

/// Timing runs on the calling thread only; `jobs` is ignored here.
pub fn bench(config: &CampaignConfig) -> Result<(), CliError> {
    let mut out = csv_writer(&output_file(config, BENCH_FILE)?)?;
    for &d in &config.dimensions {
        let dom = domain(config, d)?;
        for &s in &config.strategies {
            let rows = timing_harness(
                &GeneratorConfig::new(s, dom.clone(), config.seed),
                &config.n_targets,
                config.repeats,
            )?;
            let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.mean_ms)).collect();
            let slope = log_log_slope(&points);
            eprintln!(
                "{s} d={d}: slope {}",
                slope.map_or("n/a".to_string(), |x| format!("{x:.3}"))
            );
            for r in rows {
                out.serialize(BenchRow {
                    strategy: s.to_string(),
                    d,
                    n: r.n,
                    mean_ms: r.mean_ms,
                    slope,
                })?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct DiscrepancyRow {
    strategy: String,
    d: usize,
    n: usize,
    seed: u64,
    discrepancy: f64,
}

/// One sequence per (strategy, d, seed), measured at every prefix length in
/// `n_targets`. Sub-domains come from their own stream of the same seed.
pub fn discrepancy_cmd(config: &CampaignConfig) -> Result<(), CliError> {
    let mut jobs = Vec::new();
    for &s in &config.strategies {
        for &d in &config.dimensions {
            for i in 0..config.trials {
                jobs.push((s, d, config.trial_seed(i)));
            }
        }
    }
    let last = *config.n_targets.last().expect("validated non-empty");
    let rows: Vec<Vec<DiscrepancyRow>> = pool(config)?.install(|| {
        jobs.par_iter()
            .map(|&(s, d, seed)| -> Result<Vec<DiscrepancyRow>, CliError> {
                let dom = domain(config, d)?;
                let mut g = Generator::new(GeneratorConfig::new(s, dom.clone(), seed))?;
                let mut points = Vec::with_capacity(last);
                for _ in 0..last {
                    let t = g.next_test_case();
                    g.record_outcome(&t, false);
                    points.push(t);
                }
                config
                    .n_targets
                    .iter()
                    .map(|&n| {
                        let mut rng = seeded_rng(seed);
                        rng.set_stream(3);
                        let value = discrepancy(&points[..n], &dom, config.subdomains, &mut rng)?;
                        Ok(DiscrepancyRow {
                            strategy: s.to_string(),
                            d,
                            n,
                            seed,
                            discrepancy: value,
                        })
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()
    })?;
    let mut out = csv_writer(&output_file(config, DISCREPANCY_FILE)?)?;
    for row in rows.iter().flatten() {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct RecallRow {
    d: usize,
    n: usize,
    ef_search: usize,
    queries: usize,
    recall: f64,
}

fn recall_series(config: &CampaignConfig, d: usize, n: usize) -> Result<Vec<RecallRow>, CliError> {
    let dom = domain(config, d)?;
    let mut params = HnswParams::for_dimension(d);
    params.base_capacity = params.base_capacity.max(n);
    params.ef_construct = HnswParams::ef_construct_for(params.m, params.base_capacity);
    let mut rng = seeded_rng(config.seed);
    let mut index = SmallWorldIndex::new(d, params, Metric::Euclidean)?;
    let points: Vec<Vec<f64>> = (0..n).map(|_| sample_uniform(&dom, &mut rng).into_coords()).collect();
    for p in &points {
        index.insert(p, &mut rng)?;
    }
    let queries: Vec<Vec<f64>> = (0..config.queries)
        .map(|_| sample_uniform(&dom, &mut rng).into_coords())
        .collect();
    let truth: Vec<usize> = queries
        .iter()
        .map(|q| {
            let dist = |i: usize| Metric::Euclidean.distance_raw(&points[i], q);
            (1..n).fold(0, |best, i| if dist(i) < dist(best) { i } else { best })
        })
        .collect();
    let mut scratch = SearchScratch::new();
    Ok(RECALL_EF
        .iter()
        .map(|&ef| {
            let hits = queries
                .iter()
                .zip(&truth)
                .filter(|(q, &t)| index.nearest_with(q, ef, &mut scratch).unwrap().0 == t)
                .count();
            RecallRow {
                d,
                n,
                ef_search: ef,
                queries: queries.len(),
                recall: hits as f64 / queries.len() as f64,
            }
        })
        .collect())
}

pub fn recall(config: &CampaignConfig) -> Result<(), CliError> {
    let series: Vec<(usize, usize)> = config
        .dimensions
        .iter()
        .flat_map(|&d| config.n_targets.iter().map(move |&n| (d, n)))
        .collect();
    let rows: Vec<Vec<RecallRow>> = pool(config)?.install(|| {
        series
            .par_iter()
            .map(|&(d, n)| recall_series(config, d, n))
            .collect::<Result<_, _>>()
    })?;
    let mut out = csv_writer(&output_file(config, RECALL_FILE)?)?;
    for row in rows.iter().flatten() {
        eprintln!("d={} n={} ef={}: recall {:.3}", row.d, row.n, row.ef_search, row.recall);
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use swfc_art::Strategy;

    fn record(strategy: Strategy, f: usize) -> TrialRecord {
        TrialRecord {
            strategy,
            pattern: Pattern::Block,
            d: 2,
            theta: 0.01,
            seed: f as u64,
            f_measure: f,
            censored: false,
            gen_time_ns: 1,
        }
    }

    #[test]
    fn summary_has_one_comparison_per_pair() {
        let groups: Vec<Vec<TrialRecord>> = [Strategy::RandomTesting, Strategy::FscsBruteForce, Strategy::SwfcArt]
            .iter()
            .map(|&s| (1..=5).map(|f| record(s, f * 10)).collect())
            .collect();
        let cell = summarize_cell(2, 0.01, Pattern::Block, &groups);
        assert_eq!(cell.strategies.len(), 3);
        assert_eq!(cell.comparisons.len(), 3);
        assert_eq!(cell.strategies[0].mean_f_measure, 30.0);
        assert!((cell.strategies[0].f_ratio - 30.0).abs() < 1e-12);
        assert_eq!(
            (cell.comparisons[2].a.as_str(), cell.comparisons[2].b.as_str()),
            ("fscs", "swfc")
        );
        assert_eq!(cell.comparisons[0].rank_sum.p_value, 1.0);
    }
}
