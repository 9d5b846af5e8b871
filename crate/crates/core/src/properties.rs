//! Sampled checks of the four encoding properties and of attribution
//! directedness.
//!
//! The properties quantify over all of the nonnegative orthant; these
//! checkers only look at a seeded sample of the sampling box, so they are
//! regression tests rather than proofs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::{Method, MethodTag};
use crate::dataset::BBox;
use crate::encodings::{Encoder, EncodingKind};
use crate::error::{check_dim, Error, Result};
use crate::function::ScalarModel;
use crate::lp::{LinearProgram, FEAS_TOL};
use crate::par;

pub const MIN_SAMPLE_COUNT: usize = 1000;
pub const MIN_BOUNDARY_POINTS: usize = 50;
/// Step sizes of the continuity test, largest first.
pub const CONTINUITY_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];
/// Allowed growth of the jump-to-step ratio relative to the largest step.
pub const CONTINUITY_RATIO: f64 = 10.0;
/// Points with `|min_slack|` above this are treated as off the boundary.
pub const OFF_BOUNDARY: f64 = 1e-6;
/// Value tolerance when comparing encoding outputs.
pub const VALUE_TOL: f64 = 1e-9;
const BISECTION_STEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Continuity,
    DistinguishClass,
    DistinguishBoundary,
    BoundaryExtrema,
}

impl Property {
    pub const ALL: [Property; 4] = [
        Property::Continuity,
        Property::DistinguishClass,
        Property::DistinguishBoundary,
        Property::BoundaryExtrema,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::Continuity => "Continuity",
            Property::DistinguishClass => "DistinguishClass",
            Property::DistinguishBoundary => "DistinguishBoundary",
            Property::BoundaryExtrema => "BoundaryExtrema",
        }
    }
}

/// Known verdicts per encoding, in [`Property::ALL`] order.
pub fn expected_properties(kind: &EncodingKind) -> [bool; 4] {
    match kind {
        EncodingKind::Feasibility => [false, true, false, false],
        EncodingKind::GainPenalty => [true, false, false, true],
        EncodingKind::BoundaryDistance => [true, true, true, false],
        EncodingKind::AbsBoundaryDistance => [true, false, true, true],
        EncodingKind::VertexDistance { .. } => [true, false, false, true],
    }
}

/// Feasible iff `value >= threshold` (or `<=` when `feasible_above` is false).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdWitness {
    pub threshold: f64,
    pub feasible_above: bool,
}

impl ThresholdWitness {
    pub fn classify(&self, value: f64) -> bool {
        if self.feasible_above {
            value >= self.threshold
        } else {
            value <= self.threshold
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityEvidence {
    pub pass: bool,
    /// `(h, max |φ(x + h·u) − φ(x)|)` per step size.
    pub max_jumps: Vec<(f64, f64)>,
    /// Largest jump divided by the largest step.
    pub lipschitz_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEvidence {
    pub pass: bool,
    pub feasible_range: (f64, f64),
    pub infeasible_range: (f64, f64),
    pub witness: Option<ThresholdWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEvidence {
    pub pass: bool,
    /// Range of values taken on the boundary.
    pub boundary_range: (f64, f64),
    /// Off-boundary samples whose value falls in `boundary_range`.
    pub collisions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub value: f64,
    /// Samples within tolerance of `value`.
    pub attained: usize,
    pub attained_off_boundary: usize,
    /// One sample attaining `value`.
    pub location: Vec<f64>,
}

impl Extremum {
    fn on_boundary_only(&self) -> bool {
        self.attained > 0 && self.attained_off_boundary == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremaEvidence {
    pub pass: bool,
    pub min: Extremum,
    pub max: Extremum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub encoding: EncodingKind,
    pub continuity: ContinuityEvidence,
    pub distinguish_class: ClassEvidence,
    pub distinguish_boundary: BoundaryEvidence,
    pub boundary_extrema: ExtremaEvidence,
    pub sample_count: usize,
    pub boundary_points: usize,
    pub seed: u64,
}

impl PropertyReport {
    /// Verdicts in [`Property::ALL`] order.
    pub fn verdicts(&self) -> [bool; 4] {
        [
            self.continuity.pass,
            self.distinguish_class.pass,
            self.distinguish_boundary.pass,
            self.boundary_extrema.pass,
        ]
    }

    pub fn matches_expected(&self) -> bool {
        self.verdicts() == expected_properties(&self.encoding)
    }
}

struct Point {
    x: Vec<f64>,
    slack: f64,
    value: f64,
}

impl Point {
    fn feasible(&self) -> bool {
        self.slack >= -FEAS_TOL
    }
}

/// Checks the four encoding properties on `sample_count` uniform samples of
/// the default sampling box, plus boundary points found by bisection and the
/// LP's vertices.
pub fn check_encoding_properties(
    lp: &LinearProgram,
    kind: &EncodingKind,
    sample_count: usize,
    seed: u64,
) -> Result<PropertyReport> {
    check_encoding_properties_in(lp, kind, &BBox::default_for(lp)?, sample_count, seed)
}

pub fn check_encoding_properties_in(
    lp: &LinearProgram,
    kind: &EncodingKind,
    bbox: &BBox,
    sample_count: usize,
    seed: u64,
) -> Result<PropertyReport> {
    if sample_count < MIN_SAMPLE_COUNT {
        return Err(Error::config(format!(
            "property checks need at least {MIN_SAMPLE_COUNT} samples"
        )));
    }
    check_dim(lp.n(), bbox.dim())?;
    let encoder = Encoder::new(lp, kind.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform: Vec<Vec<f64>> = (0..sample_count).map(|_| bbox.sample(&mut rng)).collect();

    let boundary = boundary_points(lp, &uniform, sample_count / 4)?;
    if boundary.len() < MIN_BOUNDARY_POINTS {
        return Err(Error::Inconclusive(format!(
            "only {} boundary points found, need {MIN_BOUNDARY_POINTS}",
            boundary.len()
        )));
    }
    let vertices = lp.enumerate_vertices()?.vertices;

    let xs: Vec<Vec<f64>> = uniform
        .into_iter()
        .chain(boundary.iter().cloned())
        .chain(vertices)
        .collect();
    let points = evaluate_points(&encoder, xs)?;

    let directions: Vec<Vec<f64>> = points
        .iter()
        .map(|_| {
            let mut u: Vec<f64> = (0..lp.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let len = crate::linalg::norm(&u).max(f64::MIN_POSITIVE);
            u.iter_mut().for_each(|v| *v /= len);
            u
        })
        .collect();

    Ok(PropertyReport {
        encoding: kind.clone(),
        continuity: continuity(&encoder, &points, &directions)?,
        distinguish_class: distinguish_class(&points),
        distinguish_boundary: distinguish_boundary(&points),
        boundary_extrema: boundary_extrema(&points),
        sample_count,
        boundary_points: boundary.len(),
        seed,
    })
}

fn evaluate_points(encoder: &Encoder, xs: Vec<Vec<f64>>) -> Result<Vec<Point>> {
    let lp = encoder.lp();
    let evaluated = par::map_indexed(xs.len(), |i| -> Result<(f64, f64)> {
        Ok((lp.min_slack(&xs[i])?, encoder.eval(&xs[i])?))
    });
    xs.into_iter()
        .zip(evaluated)
        .map(|(x, r)| {
            let (slack, value) = r?;
            Ok(Point { x, slack, value })
        })
        .collect()
}

/// Bisects segments between feasible and infeasible samples down to the
/// boundary, keeping the feasible end. Pairs the k-th feasible sample with
/// the k-th infeasible one.
fn boundary_points(
    lp: &LinearProgram,
    samples: &[Vec<f64>],
    limit: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut feasible = Vec::new();
    let mut infeasible = Vec::new();
    for x in samples {
        if lp.min_slack(x)? >= 0.0 {
            feasible.push(x);
        } else {
            infeasible.push(x);
        }
    }
    feasible
        .iter()
        .zip(&infeasible)
        .take(limit)
        .map(|(inside, outside)| {
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            let at = |t: f64| -> Vec<f64> {
                inside
                    .iter()
                    .zip(outside.iter())
                    .map(|(a, b)| a + t * (b - a))
                    .collect()
            };
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if lp.min_slack(&at(mid))? >= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(at(lo))
        })
        .collect()
}

fn continuity(
    encoder: &Encoder,
    points: &[Point],
    directions: &[Vec<f64>],
) -> Result<ContinuityEvidence> {
    let mut max_jumps = Vec::new();
    for &h in &CONTINUITY_STEPS {
        let jumps = par::map_indexed(points.len(), |i| -> Result<f64> {
            let x = &points[i].x;
            // Flip components that would leave the nonnegative orthant.
            let moved: Vec<f64> = x
                .iter()
                .zip(&directions[i])
                .map(|(xi, ui)| {
                    if xi + h * ui < 0.0 {
                        xi - h * ui
                    } else {
                        xi + h * ui
                    }
                })
                .collect();
            Ok((encoder.eval(&moved)? - points[i].value).abs())
        });
        let mut worst = 0.0_f64;
        for j in jumps {
            worst = worst.max(j?);
        }
        max_jumps.push((h, worst));
    }
    let (h0, j0) = max_jumps[0];
    let lipschitz_estimate = j0 / h0;
    let pass = max_jumps[1..]
        .iter()
        .all(|&(h, j)| j <= CONTINUITY_RATIO * h * lipschitz_estimate + VALUE_TOL);
    Ok(ContinuityEvidence {
        pass,
        max_jumps,
        lipschitz_estimate,
    })
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn distinguish_class(points: &[Point]) -> ClassEvidence {
    let outside_band = || points.iter().filter(|p| p.slack.abs() > FEAS_TOL);
    let feasible_range = range(outside_band().filter(|p| p.feasible()).map(|p| p.value));
    let infeasible_range = range(outside_band().filter(|p| !p.feasible()).map(|p| p.value));
    let boundary_mean = {
        let on: Vec<f64> = points
            .iter()
            .filter(|p| p.slack.abs() <= FEAS_TOL)
            .map(|p| p.value)
            .collect();
        (!on.is_empty()).then(|| on.iter().sum::<f64>() / on.len() as f64)
    };
    // The witness threshold sits at the boundary value when that separates
    // the classes, else midway through the gap.
    let witness_for = |lower: (f64, f64), upper: (f64, f64), feasible_above: bool| {
        let threshold = match boundary_mean {
            Some(t) if t > lower.1 && t <= upper.0 => t,
            _ => 0.5 * (lower.1 + upper.0),
        };
        ThresholdWitness {
            threshold,
            feasible_above,
        }
    };
    let witness = if infeasible_range.1 < feasible_range.0 {
        Some(witness_for(infeasible_range, feasible_range, true))
    } else if feasible_range.1 < infeasible_range.0 {
        Some(witness_for(feasible_range, infeasible_range, false))
    } else {
        None
    };
    ClassEvidence {
        pass: witness.is_some(),
        feasible_range,
        infeasible_range,
        witness,
    }
}

fn distinguish_boundary(points: &[Point]) -> BoundaryEvidence {
    let boundary_range = range(
        points
            .iter()
            .filter(|p| p.slack.abs() <= FEAS_TOL)
            .map(|p| p.value),
    );
    let (lo, hi) = (boundary_range.0 - VALUE_TOL, boundary_range.1 + VALUE_TOL);
    let collisions = points
        .iter()
        .filter(|p| p.slack.abs() > OFF_BOUNDARY && p.value >= lo && p.value <= hi)
        .count();
    BoundaryEvidence {
        pass: collisions == 0,
        boundary_range,
        collisions,
    }
}

fn extremum(points: &[Point], target: f64) -> Extremum {
    let tol = VALUE_TOL * target.abs().max(1.0);
    let attaining: Vec<&Point> = points
        .iter()
        .filter(|p| (p.value - target).abs() <= tol)
        .collect();
    Extremum {
        value: target,
        attained: attaining.len(),
        attained_off_boundary: attaining
            .iter()
            .filter(|p| p.slack.abs() > OFF_BOUNDARY)
            .count(),
        location: attaining.first().map(|p| p.x.clone()).unwrap_or_default(),
    }
}

/// Passes when the minimum or the maximum is attained on the boundary and
/// nowhere off it.
fn boundary_extrema(points: &[Point]) -> ExtremaEvidence {
    let (lo, hi) = range(points.iter().map(|p| p.value));
    let min = extremum(points, lo);
    let max = extremum(points, hi);
    ExtremaEvidence {
        pass: min.on_boundary_only() || max.on_boundary_only(),
        min,
        max,
    }
}

/// Text table of observed against known verdicts, one column per report.
pub fn render_comparison(reports: &[PropertyReport]) -> String {
    let mark = |b: bool| if b { "yes" } else { "no" };
    let mut out = format!("{:<20}", "property");
    for r in reports {
        out.push_str(&format!(" {:>24}", r.encoding.name()));
    }
    out.push('\n');
    for (i, prop) in Property::ALL.iter().enumerate() {
        out.push_str(&format!("{:<20}", prop.name()));
        for r in reports {
            let got = r.verdicts()[i];
            let want = expected_properties(&r.encoding)[i];
            let cell = if got == want {
                mark(got).to_string()
            } else {
                format!("{} (expected {})", mark(got), mark(want))
            };
            out.push_str(&format!(" {cell:>24}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directedness {
    Directed,
    Undirected,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectednessReport {
    pub method: MethodTag,
    pub verdict: Directedness,
    /// Share of attributions with the sign of the model's partial derivative.
    pub sign_agreement: f64,
    /// Mean and standard error of sign-aligned attributions.
    pub mean: f64,
    pub stderr: f64,
    /// Mean and standard error of absolute attributions.
    pub mean_abs: f64,
    pub stderr_abs: f64,
    pub samples: usize,
    pub seed: u64,
}

pub const DIRECTED_AGREEMENT: f64 = 0.95;
pub const UNDIRECTED_SIGMAS: f64 = 3.0;

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Tests whether `method` reports the direction of change on a model that
/// should be monotone over `domain`.
///
/// Each attribution is multiplied by the sign of the model's own partial
/// derivative at that point. Directed when at least 95% of those products
/// are positive; undirected when their mean is within three standard errors
/// of zero while the mean magnitude is not; inconclusive otherwise.
/// Integrated Gradients is not supported.
pub fn directedness_test(
    method: &Method,
    model: &impl ScalarModel,
    domain: &BBox,
    sample_count: usize,
    seed: u64,
) -> Result<DirectednessReport> {
    if method.tag() == MethodTag::IntegratedGradients {
        return Err(Error::config(
            "directedness is not tested empirically for integrated gradients",
        ));
    }
    if sample_count < 2 {
        return Err(Error::config(
            "directedness test needs at least two samples",
        ));
    }
    check_dim(model.input_dim(), domain.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<Vec<f64>> = (0..sample_count).map(|_| domain.sample(&mut rng)).collect();
    let per_point = par::map_indexed(sample_count, |k| -> Result<Vec<f64>> {
        let m = method.with_seed(par::derive_seed(seed, k as u64));
        let a = m.attribute(model, &xs[k])?;
        let g = model.gradient(&xs[k]);
        Ok(a.values
            .iter()
            .zip(&g)
            .map(|(ai, gi)| if *gi < 0.0 { -ai } else { *ai })
            .collect())
    });
    let mut aligned = Vec::new();
    for p in per_point {
        aligned.extend(p?);
    }
    let abs: Vec<f64> = aligned.iter().map(|v| v.abs()).collect();
    let sign_agreement = aligned.iter().filter(|v| **v > 0.0).count() as f64 / aligned.len() as f64;
    let (mean, stderr) = mean_and_stderr(&aligned);
    let (mean_abs, stderr_abs) = mean_and_stderr(&abs);
    let verdict = if sign_agreement >= DIRECTED_AGREEMENT {
        Directedness::Directed
    } else if mean.abs() <= UNDIRECTED_SIGMAS * stderr && mean_abs > UNDIRECTED_SIGMAS * stderr_abs
    {
        Directedness::Undirected
    } else {
        Directedness::Inconclusive
    };
    Ok(DirectednessReport {
        method: method.tag(),
        verdict,
        sign_agreement,
        mean,
        stderr,
        mean_abs,
        stderr_abs,
        samples: aligned.len(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::PerturbConfig;
    use crate::fixtures::lp_box;
    use crate::function::Affine;

    #[test]
    fn table_columns_on_box() {
        let lp = lp_box();
        for kind in EncodingKind::all(2) {
            let r = check_encoding_properties(&lp, &kind, 1000, 3).unwrap();
            assert_eq!(
                r.verdicts(),
                expected_properties(&kind),
                "{}\n{}",
                kind.name(),
                render_comparison(std::slice::from_ref(&r))
            );
        }
    }

    #[test]
    fn deterministic() {
        let lp = lp_box();
        let a = check_encoding_properties(&lp, &EncodingKind::GainPenalty, 1000, 9).unwrap();
        let b = check_encoding_properties(&lp, &EncodingKind::GainPenalty, 1000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_samples_and_no_boundary() {
        let lp = lp_box();
        assert!(matches!(
            check_encoding_properties(&lp, &EncodingKind::Feasibility, 10, 0),
            Err(Error::InvalidConfig(_))
        ));
        // A box lying strictly inside the polytope never sees the boundary.
        let inner = BBox::new(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert!(matches!(
            check_encoding_properties_in(&lp, &EncodingKind::Feasibility, &inner, 1000, 0),
            Err(Error::Inconclusive(_))
        ));
    }

    #[test]
    fn witness_threshold() {
        let w = ThresholdWitness {
            threshold: 0.0,
            feasible_above: true,
        };
        assert!(w.classify(0.0) && w.classify(1.0) && !w.classify(-1e-12));
        let w = ThresholdWitness {
            threshold: 2.0,
            feasible_above: false,
        };
        assert!(w.classify(1.0) && !w.classify(3.0));
    }

    #[test]
    fn directedness_on_affine_sum() {
        let model = Affine::new(vec![1.0, 1.0], 0.0);
        let domain = BBox::new(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let s = directedness_test(&Method::Saliency, &model, &domain, 200, 1).unwrap();
        assert_eq!(s.verdict, Directedness::Directed);
        let l = directedness_test(
            &Method::Lime(PerturbConfig::with_radius(0.05)),
            &model,
            &domain,
            200,
            1,
        )
        .unwrap();
        assert_eq!(l.verdict, Directedness::Directed);
        let fp = directedness_test(
            &Method::FeaturePermutation(PerturbConfig::with_radius(0.05)),
            &model,
            &domain,
            200,
            1,
        )
        .unwrap();
        assert_eq!(fp.verdict, Directedness::Undirected, "{fp:?}");
        let ig = Method::IntegratedGradients(crate::attribution::IgConfig::zero_baseline(2));
        assert!(directedness_test(&ig, &model, &domain, 200, 1).is_err());
    }
}
