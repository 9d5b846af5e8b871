//! Balanced, seeded samples of an encoding over a sampling box.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encodings::{Encoder, EncodingKind};
use crate::error::{check_dim, Error, Result};
use crate::lp::LinearProgram;
use crate::par;

/// Share of samples held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.1;
/// Draws allowed per requested sample before balancing gives up.
pub const DRAW_BUDGET_FACTOR: usize = 50;

/// Axis-aligned sampling box inside the nonnegative orthant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BBox {
    pub ranges: Vec<(f64, f64)>,
}

impl BBox {
    pub fn new(ranges: Vec<(f64, f64)>) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::config("sampling box needs at least one dimension"));
        }
        for &(lo, hi) in &ranges {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
                return Err(Error::config(format!(
                    "sampling range [{lo}, {hi}] must satisfy 0 <= low < high"
                )));
            }
        }
        Ok(BBox { ranges })
    }

    /// `[0, 1.5 · max vertex coordinate]` per dimension.
    pub fn default_for(lp: &LinearProgram) -> Result<Self> {
        let vertices = lp.enumerate_vertices()?;
        let ranges = vertices
            .bounding_box()
            .into_iter()
            .map(|(_, hi)| (0.0, if hi > 0.0 { 1.5 * hi } else { 1.0 }))
            .collect();
        BBox::new(ranges)
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.ranges)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.ranges
            .iter()
            .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.ranges.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }
}

/// What a dataset's labels are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum Target {
    Encoding {
        kind: EncodingKind,
    },
    /// `Σ xᵢ`, strictly increasing in every feature.
    FeatureSum,
}

impl Target {
    pub fn name(&self) -> &'static str {
        match self {
            Target::Encoding { kind } => kind.name(),
            Target::FeatureSum => "feature_sum",
        }
    }
}

/// Affine map between dataset targets and network outputs:
/// `target = scale · output + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaling {
    pub scale: f64,
    pub offset: f64,
}

impl TargetScaling {
    pub fn identity() -> Self {
        TargetScaling {
            scale: 1.0,
            offset: 0.0,
        }
    }

    pub fn to_model(&self, y: f64) -> f64 {
        (y - self.offset) / self.scale
    }
}

impl Default for TargetScaling {
    fn default() -> Self {
        TargetScaling::identity()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub count: usize,
    pub lp_digest: Option<String>,
    #[serde(flatten)]
    pub target: Target,
    pub bbox: BBox,
    pub seed: u64,
    /// Share of samples satisfying the LP; absent for LP-free targets.
    pub feasible_fraction: Option<f64>,
    /// Set when the draw budget ran out before both pools filled.
    pub partial_balance: bool,
    pub target_scaling: TargetScaling,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub meta: DatasetMeta,
}

/// Samples `count` points of `bbox` by stratified rejection, half feasible and
/// half infeasible, and labels them with the encoding.
///
/// Draws are uniform in `bbox`. Each draw goes to its class pool until that
/// pool holds its quota; surplus draws are kept aside. If the draw budget
/// (`50 · count`) runs out first, the short pool is topped up from the other
/// class's surplus and `partial_balance` is set.
pub fn generate_dataset(
    lp: &LinearProgram,
    kind: &EncodingKind,
    count: usize,
    bbox: &BBox,
    seed: u64,
) -> Result<Dataset> {
    check_dim(lp.n(), bbox.dim())?;
    let encoder = Encoder::new(lp, kind.clone())?;
    check_coverage(lp, bbox)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feasible_quota = count / 2;
    let infeasible_quota = count - feasible_quota;
    let budget = DRAW_BUDGET_FACTOR * count;

    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(count);
    let (mut n_feasible, mut n_infeasible) = (0usize, 0usize);
    let mut surplus_feasible: Vec<Vec<f64>> = Vec::new();
    let mut surplus_infeasible: Vec<Vec<f64>> = Vec::new();
    let mut draws = 0usize;
    while (n_feasible < feasible_quota || n_infeasible < infeasible_quota) && draws < budget {
        draws += 1;
        let x = bbox.sample(&mut rng);
        if lp.is_feasible(&x)? {
            if n_feasible < feasible_quota {
                n_feasible += 1;
                accepted.push(x);
            } else if surplus_feasible.len() < infeasible_quota {
                surplus_feasible.push(x);
            }
        } else if n_infeasible < infeasible_quota {
            n_infeasible += 1;
            accepted.push(x);
        } else if surplus_infeasible.len() < feasible_quota {
            surplus_infeasible.push(x);
        }
    }

    let partial_balance = n_feasible < feasible_quota || n_infeasible < infeasible_quota;
    if count > 0 && n_feasible == 0 {
        return Err(Error::Coverage(format!(
            "no feasible point among {draws} draws"
        )));
    }
    accepted.extend(
        surplus_infeasible
            .into_iter()
            .take(feasible_quota - n_feasible),
    );
    accepted.extend(
        surplus_feasible
            .into_iter()
            .take(infeasible_quota - n_infeasible),
    );

    let labels = par::map_indexed(accepted.len(), |i| encoder.eval(&accepted[i]));
    let samples = accepted
        .into_iter()
        .zip(labels)
        .map(|(x, y)| Ok(Sample { x, y: y? }))
        .collect::<Result<Vec<_>>>()?;

    let feasible = samples
        .iter()
        .map(|s| lp.is_feasible(&s.x))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&f| f)
        .count();
    let feasible_fraction = if samples.is_empty() {
        0.0
    } else {
        feasible as f64 / samples.len() as f64
    };

    Ok(finish(
        samples,
        Some(lp.digest()),
        Target::Encoding { kind: kind.clone() },
        bbox.clone(),
        seed,
        Some(feasible_fraction),
        partial_balance,
    ))
}

/// Uniform samples of `Σ xᵢ` over `bbox`, for the monotone reference model.
pub fn feature_sum_dataset(count: usize, bbox: &BBox, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..count)
        .map(|_| {
            let x = bbox.sample(&mut rng);
            let y = x.iter().sum();
            Sample { x, y }
        })
        .collect();
    finish(
        samples,
        None,
        Target::FeatureSum,
        bbox.clone(),
        seed,
        None,
        false,
    )
}

fn finish(
    samples: Vec<Sample>,
    lp_digest: Option<String>,
    target: Target,
    bbox: BBox,
    seed: u64,
    feasible_fraction: Option<f64>,
    partial_balance: bool,
) -> Dataset {
    let count = samples.len();
    let mut order: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(par::derive_seed(seed, 0x5_9117));
    order.shuffle(&mut rng);
    let n_val = (count as f64 * VALIDATION_FRACTION).floor() as usize;
    let mut validation_indices = order[..n_val].to_vec();
    let mut train_indices = order[n_val..].to_vec();
    validation_indices.sort_unstable();
    train_indices.sort_unstable();
    Dataset {
        samples,
        meta: DatasetMeta {
            n: bbox.dim(),
            count,
            lp_digest,
            target,
            bbox,
            seed,
            feasible_fraction,
            partial_balance,
            target_scaling: TargetScaling::identity(),
            train_indices,
            validation_indices,
        },
    }
}

/// Rejects boxes that cannot contain any part of the polytope.
fn check_coverage(lp: &LinearProgram, bbox: &BBox) -> Result<()> {
    let Ok(vertices) = lp.enumerate_vertices() else {
        return Ok(());
    };
    let disjoint = vertices
        .bounding_box()
        .iter()
        .zip(&bbox.ranges)
        .any(|(&(vlo, vhi), &(lo, hi))| vhi < lo || vlo > hi);
    if disjoint {
        return Err(Error::Coverage(
            "sampling box does not intersect the polytope".into(),
        ));
    }
    Ok(())
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.meta.n
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sidecar metadata path for a dataset CSV path.
    pub fn meta_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("meta.json")
    }

    /// Writes `x1,…,xn,y` rows with 17 significant digits plus the metadata sidecar.
    pub fn save(&self, csv_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        let mut w = csv::Writer::from_path(csv_path)?;
        let mut header: Vec<String> = (1..=self.n()).map(|i| format!("x{i}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for s in &self.samples {
            let row: Vec<String> =
                s.x.iter()
                    .chain(std::iter::once(&s.y))
                    .map(|v| fmt17(*v))
                    .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        std::fs::write(
            Self::meta_path(csv_path),
            serde_json::to_string_pretty(&self.meta)?,
        )?;
        Ok(())
    }

    pub fn load(csv_path: impl AsRef<Path>) -> Result<Self> {
        let csv_path = csv_path.as_ref();
        let meta: DatasetMeta =
            serde_json::from_str(&std::fs::read_to_string(Self::meta_path(csv_path))?)?;
        let mut r = csv::Reader::from_path(csv_path)?;
        let width = r.headers()?.len();
        check_dim(meta.n + 1, width)?;
        let mut samples = Vec::with_capacity(meta.count);
        for record in r.records() {
            let record = record?;
            let values = record
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad number `{f}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let (y, x) = values.split_last().expect("non-empty record");
            samples.push(Sample {
                x: x.to_vec(),
                y: *y,
            });
        }
        if samples.len() != meta.count {
            return Err(Error::Format(format!(
                "metadata declares {} samples, file has {}",
                meta.count,
                samples.len()
            )));
        }
        Ok(Dataset { samples, meta })
    }
}

/// Decimal with 17 significant digits; parses back to the identical `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{lp_box, lp_tri};

    fn box_bbox() -> BBox {
        BBox::new(vec![(0.0, 3.0), (0.0, 4.5)]).unwrap()
    }

    #[test]
    fn balanced_feasibility_sample() {
        let ds =
            generate_dataset(&lp_box(), &EncodingKind::Feasibility, 1000, &box_bbox(), 7).unwrap();
        assert_eq!(ds.len(), 1000);
        let feasible = ds.samples.iter().filter(|s| s.y == 1.0).count();
        assert!((450..=550).contains(&feasible), "{feasible}");
        assert!(!ds.meta.partial_balance);
        assert!(ds.samples.iter().all(|s| box_bbox().contains(&s.x)));
        assert_eq!(ds.meta.validation_indices.len(), 100);
        assert_eq!(ds.meta.train_indices.len(), 900);
    }

    #[test]
    fn empty_dataset() {
        let ds =
            generate_dataset(&lp_box(), &EncodingKind::Feasibility, 0, &box_bbox(), 1).unwrap();
        assert!(ds.is_empty());
        assert!(ds.meta.train_indices.is_empty());
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_dataset(
            &lp_tri(),
            &EncodingKind::BoundaryDistance,
            300,
            &BBox::default_for(&lp_tri()).unwrap(),
            11,
        )
        .unwrap();
        let b = generate_dataset(
            &lp_tri(),
            &EncodingKind::BoundaryDistance,
            300,
            &BBox::default_for(&lp_tri()).unwrap(),
            11,
        )
        .unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(
            &lp_tri(),
            &EncodingKind::BoundaryDistance,
            300,
            &BBox::default_for(&lp_tri()).unwrap(),
            12,
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn default_box_scales_vertex_box() {
        assert_eq!(BBox::default_for(&lp_box()).unwrap(), box_bbox());
    }

    #[test]
    fn disjoint_box_is_a_coverage_error() {
        let far = BBox::new(vec![(10.0, 11.0), (10.0, 11.0)]).unwrap();
        assert!(matches!(
            generate_dataset(&lp_box(), &EncodingKind::Feasibility, 10, &far, 0),
            Err(Error::Coverage(_))
        ));
    }

    #[test]
    fn tiny_feasible_region_tops_up() {
        // Feasible set is 0.5% of the box: ~25 feasible draws in a budget of 5000.
        let lp = LinearProgram::new(vec![1.0], vec![vec![1.0]], vec![0.05]).unwrap();
        let bbox = BBox::new(vec![(0.0, 10.0)]).unwrap();
        let ds = generate_dataset(&lp, &EncodingKind::Feasibility, 100, &bbox, 3).unwrap();
        assert!(ds.meta.partial_balance);
        assert_eq!(ds.len(), 100);
        let feasible = ds.samples.iter().filter(|s| s.y == 1.0).count();
        assert!(feasible > 0 && feasible < 50);
    }

    #[test]
    fn bbox_validation() {
        assert!(BBox::new(vec![(1.0, 1.0)]).is_err());
        assert!(BBox::new(vec![(-1.0, 1.0)]).is_err());
        assert!(BBox::new(vec![]).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let ds =
            generate_dataset(&lp_box(), &EncodingKind::GainPenalty, 200, &box_bbox(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        ds.save(&path).unwrap();
        let back = Dataset::load(&path).unwrap();
        assert_eq!(back, ds);
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("x1,x2,y\n"));
    }
}
