//! Synthetic failure regions and the F-measure trial runner.
//!
//! Regions are stored in unit-cube coordinates of their domain, so a region
//! built for `[-5000, 5000]^d` has the same shape as one built for `[0, 1]^d`.

use std::fmt;
use std::process::Command;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{ArtError, Result};
use crate::generators::{Generator, GeneratorConfig, Strategy};
use crate::geometry::{seeded_rng, InputDomain, RandomSource, SeededRng, TestPoint};

/// Number of sub-blocks in a point pattern.
pub const POINT_BLOCKS: usize = 25;
/// Placement attempts per sub-block before giving up.
pub const POINT_PLACEMENT_RETRIES: usize = 1000;
/// Strips whose anchors both lie this close to their shared corner are redrawn.
pub const STRIP_CORNER_FRACTION: f64 = 0.1;
pub const STRIP_BISECTION_STEPS: usize = 60;
const STRIP_RESAMPLE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    Block,
    Strip,
    Point,
}

impl Pattern {
    pub const ALL: [Pattern; 3] = [Pattern::Block, Pattern::Strip, Pattern::Point];

    pub fn name(&self) -> &'static str {
        match self {
            Pattern::Block => "block",
            Pattern::Strip => "strip",
            Pattern::Point => "point",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pattern {
    type Err = ArtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "block" => Ok(Pattern::Block),
            "strip" => Ok(Pattern::Strip),
            "point" => Ok(Pattern::Point),
            other => Err(ArtError::InvalidParameter(format!("unknown failure pattern `{other}`"))),
        }
    }
}

/// Axis-aligned cube in unit coordinates, closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub lo: Vec<f64>,
    pub side: f64,
}

impl Cube {
    fn contains(&self, u: &[f64]) -> bool {
        self.lo.iter().zip(u).all(|(&lo, &x)| lo <= x && x <= lo + self.side)
    }

    /// True when the interiors intersect.
    pub fn overlaps(&self, other: &Cube) -> bool {
        self.lo
            .iter()
            .zip(&other.lo)
            .all(|(&a, &b)| a < b + other.side && b < a + self.side)
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.lo.len() as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegionShape {
    Block {
        cube: Cube,
    },
    /// Band of half-width `half_width` around the line through `a` and `b`,
    /// measured in the plane of unit axes `axes`; every other axis is free.
    Strip {
        axes: [usize; 2],
        a: [f64; 2],
        b: [f64; 2],
        half_width: f64,
    },
    Point {
        cubes: Vec<Cube>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRegion {
    pub domain: InputDomain,
    pub theta: f64,
    pub shape: RegionShape,
}

impl FailureRegion {
    pub fn pattern(&self) -> Pattern {
        match self.shape {
            RegionShape::Block { .. } => Pattern::Block,
            RegionShape::Strip { .. } => Pattern::Strip,
            RegionShape::Point { .. } => Pattern::Point,
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Membership of a domain point.
    pub fn contains(&self, p: &[f64]) -> bool {
        let u = self.domain.to_unit(p);
        self.contains_unit(&u)
    }

    pub fn contains_unit(&self, u: &[f64]) -> bool {
        match &self.shape {
            RegionShape::Block { cube } => cube.contains(u),
            RegionShape::Strip { axes, a, b, half_width } => {
                strip_offset(a, b, [u[axes[0]], u[axes[1]]]).abs() <= *half_width
            }
            RegionShape::Point { cubes } => cubes.iter().any(|c| c.contains(u)),
        }
    }

    /// Fraction of the domain covered, computed from the geometry.
    pub fn analytic_fraction(&self) -> f64 {
        match &self.shape {
            RegionShape::Block { cube } => cube.volume(),
            RegionShape::Strip { a, b, half_width, .. } => strip_area(a, b, *half_width),
            RegionShape::Point { cubes } => cubes.iter().map(Cube::volume).sum(),
        }
    }

    /// Degenerate region covering the whole domain: every test case fails.
    pub fn whole_domain(domain: &InputDomain) -> Self {
        FailureRegion {
            domain: domain.clone(),
            theta: 1.0,
            shape: RegionShape::Block {
                cube: Cube {
                    lo: vec![0.0; domain.dim()],
                    side: 1.0,
                },
            },
        }
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(ArtError::InvalidParameter(format!(
            "failure rate must lie in (0, 1), got {theta}"
        )))
    }
}

fn random_cube<R: RandomSource + ?Sized>(dim: usize, side: f64, rng: &mut R) -> Cube {
    let lo = (0..dim).map(|_| rng.next_unit() * (1.0 - side)).collect();
    Cube { lo, side }
}

/// One hyper-cube of side `theta^(1/d)` (unit coordinates) placed uniformly
/// inside the domain.
pub fn make_block<R: RandomSource + ?Sized>(domain: &InputDomain, theta: f64, rng: &mut R) -> Result<FailureRegion> {
    check_theta(theta)?;
    let d = domain.dim();
    let side = theta.powf(1.0 / d as f64);
    Ok(FailureRegion {
        domain: domain.clone(),
        theta,
        shape: RegionShape::Block {
            cube: random_cube(d, side, rng),
        },
    })
}

/// 25 pairwise disjoint cubes, each covering `theta / 25` of the domain.
pub fn make_point_pattern<R: RandomSource + ?Sized>(
    domain: &InputDomain,
    theta: f64,
    rng: &mut R,
) -> Result<FailureRegion> {
    check_theta(theta)?;
    let d = domain.dim();
    let side = (theta / POINT_BLOCKS as f64).powf(1.0 / d as f64);
    let mut cubes: Vec<Cube> = Vec::with_capacity(POINT_BLOCKS);
    for n in 0..POINT_BLOCKS {
        let placed = (0..POINT_PLACEMENT_RETRIES)
            .map(|_| random_cube(d, side, rng))
            .find(|c| cubes.iter().all(|other| !c.overlaps(other)));
        match placed {
            Some(c) => cubes.push(c),
            None => {
                return Err(ArtError::RegionConstruction(format!(
                    "could not place point block {} of {POINT_BLOCKS} after {POINT_PLACEMENT_RETRIES} attempts",
                    n + 1
                )))
            }
        }
    }
    Ok(FailureRegion {
        domain: domain.clone(),
        theta,
        shape: RegionShape::Point { cubes },
    })
}

/// A band joining random points on two adjacent borders, widened until it
/// covers `theta` of the domain.
///
/// In more than two dimensions the band lives in a random pair of axes and
/// spans every other axis completely. One-dimensional domains have no
/// adjacent borders and are rejected.
pub fn make_strip<R: RandomSource + ?Sized>(domain: &InputDomain, theta: f64, rng: &mut R) -> Result<FailureRegion> {
    check_theta(theta)?;
    let d = domain.dim();
    if d < 2 {
        return Err(ArtError::InvalidParameter(
            "strip patterns need at least two dimensions".into(),
        ));
    }
    let i = (rng.next_unit() * d as f64) as usize % d;
    let mut j = (rng.next_unit() * (d - 1) as f64) as usize % (d - 1);
    if j >= i {
        j += 1;
    }
    let axes = [i.min(j), i.max(j)];

    for _ in 0..STRIP_RESAMPLE_LIMIT {
        // Corner shared by the two borders.
        let cx = if rng.next_unit() < 0.5 { 0.0 } else { 1.0 };
        let cy = if rng.next_unit() < 0.5 { 0.0 } else { 1.0 };
        let a = [cx, rng.next_unit()];
        let b = [rng.next_unit(), cy];
        let near_corner = (a[1] - cy).abs() < STRIP_CORNER_FRACTION && (b[0] - cx).abs() < STRIP_CORNER_FRACTION;
        if near_corner || a == b {
            continue;
        }
        let half_width = calibrate_strip(&a, &b, theta)?;
        return Ok(FailureRegion {
            domain: domain.clone(),
            theta,
            shape: RegionShape::Strip { axes, a, b, half_width },
        });
    }
    Err(ArtError::RegionConstruction("no acceptable strip anchors found".into()))
}

pub fn make_region<R: RandomSource + ?Sized>(
    pattern: Pattern,
    domain: &InputDomain,
    theta: f64,
    rng: &mut R,
) -> Result<FailureRegion> {
    match pattern {
        Pattern::Block => make_block(domain, theta, rng),
        Pattern::Strip => make_strip(domain, theta, rng),
        Pattern::Point => make_point_pattern(domain, theta, rng),
    }
}

/// Stream that places the failure region of the trial seeded with `seed`.
/// It is disjoint from the generator's candidate and structure streams.
pub fn region_rng(seed: u64) -> SeededRng {
    let mut rng = seeded_rng(seed);
    rng.set_stream(2);
    rng
}

/// Signed distance of `p` from the line through `a` and `b`.
fn strip_offset(a: &[f64; 2], b: &[f64; 2], p: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dy);
    (dx * (p[1] - a[1]) - dy * (p[0] - a[0])) / len
}

/// Clips a convex polygon to `offset(p) * sign <= w`.
fn clip(poly: &[[f64; 2]], a: &[f64; 2], b: &[f64; 2], sign: f64, w: f64) -> Vec<[f64; 2]> {
    let inside = |p: &[f64; 2]| sign * strip_offset(a, b, *p) - w;
    let mut out = Vec::with_capacity(poly.len() + 2);
    for idx in 0..poly.len() {
        let cur = poly[idx];
        let next = poly[(idx + 1) % poly.len()];
        let (fc, fnx) = (inside(&cur), inside(&next));
        if fc <= 0.0 {
            out.push(cur);
        }
        if (fc < 0.0 && fnx > 0.0) || (fc > 0.0 && fnx < 0.0) {
            let t = fc / (fc - fnx);
            out.push([cur[0] + t * (next[0] - cur[0]), cur[1] + t * (next[1] - cur[1])]);
        }
    }
    out
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    twice.abs() / 2.0
}

/// Exact area of the band `|offset| <= w` inside the unit square.
fn strip_area(a: &[f64; 2], b: &[f64; 2], w: f64) -> f64 {
    let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let upper = clip(&square, a, b, 1.0, w);
    let band = clip(&upper, a, b, -1.0, w);
    polygon_area(&band)
}

/// Half-width giving area `theta`, by bisection on the exact clipped area.
fn calibrate_strip(a: &[f64; 2], b: &[f64; 2], theta: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0f64, std::f64::consts::SQRT_2);
    for _ in 0..STRIP_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let area = strip_area(a, b, mid);
        if ((area - theta) / theta).abs() < 1e-9 {
            return Ok(mid);
        }
        if area < theta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(ArtError::RegionConstruction(format!(
        "strip width did not converge for theta {theta} in {STRIP_BISECTION_STEPS} steps"
    )))
}

/// Replayable region description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub seed: u64,
    pub region: FailureRegion,
}

impl RegionRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("region serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ArtError::InvalidParameter(format!("region file: {e}")))
    }
}

/// Anything that can execute a test case and report failure.
pub trait SystemUnderTest {
    fn fails(&mut self, t: &TestPoint) -> Result<bool>;
}

impl SystemUnderTest for FailureRegion {
    fn fails(&mut self, t: &TestPoint) -> Result<bool> {
        Ok(self.contains(t.coords()))
    }
}

/// Runs an external program once per test case, passing the coordinates as
/// trailing arguments. A non-zero exit status is a failure.
#[derive(Debug, Clone)]
pub struct ExternalSut {
    pub program: String,
    pub args: Vec<String>,
}

impl SystemUnderTest for ExternalSut {
    fn fails(&mut self, t: &TestPoint) -> Result<bool> {
        let status = Command::new(&self.program)
            .args(&self.args)
            .args(t.coords().iter().map(|c| c.to_string()))
            .status()
            .map_err(|e| ArtError::External(format!("{}: {e}", self.program)))?;
        Ok(!status.success())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    /// Tests executed up to and including the first failure, or `max_tests`.
    pub f_measure: usize,
    pub censored: bool,
    pub gen_time_ns: u64,
}

/// Generates and executes test cases until `sut` fails or `max_tests` run.
/// Only generation and executed-set updates are timed.
pub fn run_against<S: SystemUnderTest + ?Sized>(
    config: &GeneratorConfig,
    sut: &mut S,
    max_tests: usize,
) -> Result<TrialOutcome> {
    if max_tests == 0 {
        return Err(ArtError::InvalidParameter("max_tests must be at least 1".into()));
    }
    let mut generator = Generator::new(config.clone())?;
    let mut gen_time_ns = 0u64;
    for executed in 1..=max_tests {
        let start = Instant::now();
        let t = generator.next_test_case();
        gen_time_ns += start.elapsed().as_nanos() as u64;

        let failed = sut.fails(&t)?;

        let start = Instant::now();
        generator.record_outcome(&t, failed);
        gen_time_ns += start.elapsed().as_nanos() as u64;
        if failed {
            return Ok(TrialOutcome {
                f_measure: executed,
                censored: false,
                gen_time_ns,
            });
        }
    }
    Ok(TrialOutcome {
        f_measure: max_tests,
        censored: true,
        gen_time_ns,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub strategy: Strategy,
    pub pattern: Pattern,
    pub d: usize,
    pub theta: f64,
    pub seed: u64,
    pub f_measure: usize,
    pub censored: bool,
    pub gen_time_ns: u64,
}

/// Default test budget for a trial: ten times the expected random-testing
/// F-measure.
pub fn default_max_tests(theta: f64) -> usize {
    (10.0 / theta).ceil() as usize
}

/// One F-measure trial of `config` against `region`.
pub fn run_trial(config: &GeneratorConfig, region: &FailureRegion, max_tests: usize) -> Result<TrialRecord> {
    let mut region_copy = region.clone();
    let outcome = run_against(config, &mut region_copy, max_tests)?;
    Ok(TrialRecord {
        strategy: config.strategy,
        pattern: region.pattern(),
        d: region.dim(),
        theta: region.theta,
        seed: config.seed,
        f_measure: outcome.f_measure,
        censored: outcome.censored,
        gen_time_ns: outcome.gen_time_ns,
    })
}
