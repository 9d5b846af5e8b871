//! Experiment drivers: LIME against saliency, directed FP against LIME, the
//! five-dimensional feasibility run, and the full grid sweep.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::{self, cosine_similarity, IgConfig, Method, MethodTag, PerturbConfig};
use crate::dataset::{generate_dataset, BBox, Dataset};
use crate::encodings::EncodingKind;
use crate::error::{check_dim, Error, Result};
use crate::function::ScalarModel;
use crate::grid::{grid_attribution, GridResult, GridSpec};
use crate::linalg;
use crate::lp::LinearProgram;
use crate::neural::{accuracy, train_model, Model, ModelConfig};
use crate::par::{self, Execution};

/// Gradients shorter than this make a point degenerate for direction
/// comparisons.
pub const DEGENERATE_GRADIENT: f64 = 1e-8;
/// Attributions below this magnitude are flagged as negligible.
pub const SMALL_ATTRIBUTION: f64 = 0.01;

/// The four attribution methods with a shared perturbation radius.
pub fn standard_methods(n: usize, radius: f64, seed: u64) -> Vec<Method> {
    let perturb = PerturbConfig {
        seed,
        ..PerturbConfig::with_radius(radius)
    };
    vec![
        Method::IntegratedGradients(IgConfig::zero_baseline(n)),
        Method::Saliency,
        Method::FeaturePermutation(perturb.clone()),
        Method::Lime(perturb),
    ]
}

/// Generates a dataset for `kind` and trains a model on it.
pub fn train_encoding_model(
    lp: &LinearProgram,
    kind: &EncodingKind,
    count: usize,
    bbox: &BBox,
    config: &ModelConfig,
    seed: u64,
) -> Result<(Dataset, Model)> {
    let dataset = generate_dataset(lp, kind, count, bbox, seed)?;
    let model = train_model(&dataset, config)?;
    Ok((dataset, model))
}

fn sample_points(domain: &BBox, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| domain.sample(&mut rng)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusRow {
    pub radius: f64,
    pub mean_cosine: f64,
    pub min_cosine: f64,
    pub mean_lime_norm: f64,
    /// Mean of `‖lime‖ / ‖saliency‖`.
    pub mean_norm_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeSaliencyReport {
    pub rows: Vec<RadiusRow>,
    pub mean_saliency_norm: f64,
    pub points_used: usize,
    pub degenerate_excluded: usize,
    pub ridge_lambda: f64,
    pub seed: u64,
    /// Mean cosine never decreases as the radius shrinks.
    pub similarity_monotone: bool,
    /// Mean LIME magnitude strictly decreases as the radius shrinks.
    pub magnitude_shrinking: bool,
}

impl LimeSaliencyReport {
    pub fn render(&self) -> String {
        let mut out = format!(
            "points {} (excluded {} with zero gradient), lambda {}, mean |saliency| {:.6}\n",
            self.points_used, self.degenerate_excluded, self.ridge_lambda, self.mean_saliency_norm
        );
        out.push_str("radius      mean_cos    min_cos     mean_|lime|  |lime|/|sal|\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<11} {:<11.6} {:<11.6} {:<12.6} {:.6}\n",
                r.radius, r.mean_cosine, r.min_cosine, r.mean_lime_norm, r.mean_norm_ratio
            ));
        }
        out.push_str(&format!(
            "similarity monotone: {}, magnitude shrinking: {}\n",
            self.similarity_monotone, self.magnitude_shrinking
        ));
        out
    }
}

/// Compares LIME with saliency at `points` uniform samples of `domain` for
/// each radius in `radii` (descending).
pub fn experiment_lime_vs_saliency(
    model: &impl ScalarModel,
    domain: &BBox,
    radii: &[f64],
    points: usize,
    lime: &PerturbConfig,
    seed: u64,
) -> Result<LimeSaliencyReport> {
    if radii.len() < 2 {
        return Err(Error::config("need at least two radii"));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("radii must be strictly descending"));
    }
    if points < 10 {
        return Err(Error::config("need at least 10 points"));
    }
    check_dim(model.input_dim(), domain.dim())?;
    let xs = sample_points(domain, points, seed);
    let gradients = model.gradients(&xs);
    let used: Vec<usize> = (0..points)
        .filter(|&k| linalg::norm(&gradients[k]) > DEGENERATE_GRADIENT)
        .collect();
    if used.is_empty() {
        return Err(Error::Inconclusive(
            "every sampled point has zero gradient".into(),
        ));
    }
    let mean_saliency_norm = used
        .iter()
        .map(|&k| linalg::norm(&gradients[k]))
        .sum::<f64>()
        / used.len() as f64;

    let mut rows = Vec::new();
    for &radius in radii {
        let per_point = par::map_indexed(used.len(), |j| -> Result<(f64, f64, f64)> {
            let k = used[j];
            let cfg = PerturbConfig {
                radius,
                seed: par::derive_seed(seed, k as u64),
                ..lime.clone()
            };
            let a = attribution::lime(model, &xs[k], &cfg)?.values;
            let norm = linalg::norm(&a);
            Ok((
                cosine_similarity(&a, &gradients[k]),
                norm,
                norm / linalg::norm(&gradients[k]),
            ))
        });
        let mut cos_sum = 0.0;
        let mut min_cosine = f64::INFINITY;
        let mut norm_sum = 0.0;
        let mut ratio_sum = 0.0;
        for r in per_point {
            let (c, nrm, ratio) = r?;
            // A zero LIME vector has no direction; count it as orthogonal.
            let c = if c.is_finite() { c } else { 0.0 };
            cos_sum += c;
            min_cosine = min_cosine.min(c);
            norm_sum += nrm;
            ratio_sum += ratio;
        }
        let count = used.len() as f64;
        rows.push(RadiusRow {
            radius,
            mean_cosine: cos_sum / count,
            min_cosine,
            mean_lime_norm: norm_sum / count,
            mean_norm_ratio: ratio_sum / count,
        });
    }
    Ok(LimeSaliencyReport {
        similarity_monotone: rows
            .windows(2)
            .all(|w| w[1].mean_cosine >= w[0].mean_cosine),
        magnitude_shrinking: rows
            .windows(2)
            .all(|w| w[1].mean_lime_norm < w[0].mean_lime_norm),
        rows,
        mean_saliency_norm,
        points_used: used.len(),
        degenerate_excluded: points - used.len(),
        ridge_lambda: lime.ridge_lambda,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectedFpRow {
    pub point: Vec<f64>,
    pub directed_fp: Vec<f64>,
    pub lime: Vec<f64>,
    pub fp: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectedFpReport {
    pub radius: f64,
    pub seed: u64,
    pub rows: Vec<DirectedFpRow>,
    /// Largest `|directed FP − LIME|` over all points and features.
    pub max_deviation: f64,
    /// Same for plain FP, as a negative control.
    pub fp_max_deviation: f64,
}

impl DirectedFpReport {
    pub fn render(&self) -> String {
        format!(
            "radius {}, points {}\nmax |directed_fp - lime| = {:.3e}\nmax |fp - lime|          = {:.3e}\n",
            self.radius,
            self.rows.len(),
            self.max_deviation,
            self.fp_max_deviation
        )
    }
}

/// At each sampled point, fits unregularized LIME on the `2n` single-feature
/// perturbations `±radius·eᵢ` and compares it with directed FP and with
/// plain FP at the same radius.
pub fn experiment_directed_fp(
    model: &impl ScalarModel,
    domain: &BBox,
    radius: f64,
    points: usize,
    seed: u64,
) -> Result<DirectedFpReport> {
    check_dim(model.input_dim(), domain.dim())?;
    let n = model.input_dim();
    let xs = sample_points(domain, points, seed);
    let perturbations = attribution::single_feature_perturbations(n, radius);
    let rows = par::map_indexed(points, |k| -> Result<DirectedFpRow> {
        let x = &xs[k];
        let directed_fp = attribution::directed_feature_permutation(model, x, radius)?.values;
        let lime = attribution::lime_fit(model, x, &perturbations, 0.0)?;
        let cfg = PerturbConfig {
            seed: par::derive_seed(seed, k as u64),
            ..PerturbConfig::with_radius(radius)
        };
        let fp = attribution::feature_permutation(model, x, &cfg)?.values;
        Ok(DirectedFpRow {
            point: x.clone(),
            directed_fp,
            lime,
            fp,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let max_dev = |pick: fn(&DirectedFpRow) -> &Vec<f64>| {
        rows.iter()
            .flat_map(|r| pick(r).iter().zip(&r.lime).map(|(a, b)| (a - b).abs()))
            .fold(0.0_f64, f64::max)
    };
    Ok(DirectedFpReport {
        radius,
        seed,
        max_deviation: max_dev(|r| &r.directed_fp),
        fp_max_deviation: max_dev(|r| &r.fp),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp5dConfig {
    pub count: usize,
    pub model: ModelConfig,
    /// Defaults to the LP's default sampling box.
    pub bbox: Option<BBox>,
    pub radius: f64,
    pub seed: u64,
}

impl Default for Exp5dConfig {
    fn default() -> Self {
        Exp5dConfig {
            count: 100_000,
            model: ModelConfig::default(),
            bbox: None,
            radius: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: MethodTag,
    pub values: Vec<f64>,
    /// `|value| < 0.01` per feature.
    pub small: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub x: Vec<f64>,
    pub slacks: Vec<f64>,
    /// Indices of constraints with negative slack.
    pub violated: Vec<usize>,
    pub prediction: f64,
    pub attributions: Vec<MethodRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp5dReport {
    pub validation_accuracy: f64,
    pub feasible_fraction: Option<f64>,
    pub partial_balance: bool,
    /// Violates exactly one constraint.
    pub infeasible: Instance,
    /// Every slack strictly positive.
    pub feasible: Instance,
    pub seed: u64,
}

impl Instance {
    fn render(&self, title: &str) -> String {
        let mut out = format!("{title} instance, prediction {:.4}\n", self.prediction);
        out.push_str(&format!(
            "  x      {}\n",
            join(&self.x, |v| format!("{v:>9.4}"))
        ));
        for (i, s) in self.slacks.iter().enumerate() {
            let mark = if self.violated.contains(&i) {
                "  violated"
            } else {
                ""
            };
            out.push_str(&format!("  constraint {}: slack {s:>9.4}{mark}\n", i + 1));
        }
        for row in &self.attributions {
            let cells = row
                .values
                .iter()
                .zip(&row.small)
                .map(|(v, s)| format!("{v:>9.4}{}", if *s { "*" } else { " " }))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&format!("  {:<8}{cells}\n", row.method.name()));
        }
        out
    }
}

fn join(values: &[f64], f: impl Fn(f64) -> String) -> String {
    values.iter().map(|&v| f(v)).collect::<Vec<_>>().join("  ")
}

impl Exp5dReport {
    pub fn render(&self) -> String {
        let mut out = format!(
            "validation accuracy {:.4}, feasible fraction {:?}, partial balance {}\n",
            self.validation_accuracy, self.feasible_fraction, self.partial_balance
        );
        out.push_str(&self.infeasible.render("infeasible"));
        out.push_str(&self.feasible.render("feasible"));
        out.push_str(&format!("(* marks |attribution| < {SMALL_ATTRIBUTION})\n"));
        out
    }
}

/// Trains a feasibility model on `lp5` and explains one infeasible instance
/// (exactly one violated constraint) and one strictly feasible instance,
/// both taken from the held-out split.
pub fn experiment_5dim(lp5: &LinearProgram, cfg: &Exp5dConfig) -> Result<(Model, Exp5dReport)> {
    let bbox = match &cfg.bbox {
        Some(b) => b.clone(),
        None => BBox::default_for(lp5)?,
    };
    let (dataset, model) = train_encoding_model(
        lp5,
        &EncodingKind::Feasibility,
        cfg.count,
        &bbox,
        &cfg.model,
        cfg.seed,
    )?;
    let held_out = &dataset.meta.validation_indices;
    let validation_accuracy = accuracy(&model, &dataset, held_out, 0.5);

    let pick = |want: fn(&[f64]) -> bool, what: &str| -> Result<Vec<f64>> {
        for &i in held_out {
            let x = &dataset.samples[i].x;
            if want(&lp5.slacks(x)?) {
                return Ok(x.clone());
            }
        }
        Err(Error::Inconclusive(format!("no held-out sample is {what}")))
    };
    let one_violation = pick(
        |s| s.iter().filter(|v| **v < 0.0).count() == 1,
        "violating exactly one constraint",
    )?;
    let strictly_feasible = pick(|s| s.iter().all(|v| *v > 0.0), "strictly feasible")?;

    let methods = standard_methods(lp5.n(), cfg.radius, cfg.seed);
    let explain = |x: Vec<f64>| -> Result<Instance> {
        let slacks = lp5.slacks(&x)?;
        let attributions = methods
            .iter()
            .map(|m| {
                let values = m.attribute(&model, &x)?.values;
                Ok(MethodRow {
                    method: m.tag(),
                    small: values.iter().map(|v| v.abs() < SMALL_ATTRIBUTION).collect(),
                    values,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Instance {
            violated: (0..slacks.len()).filter(|&i| slacks[i] < 0.0).collect(),
            prediction: model.value(&x),
            slacks,
            attributions,
            x,
        })
    };
    let report = Exp5dReport {
        validation_accuracy,
        feasible_fraction: dataset.meta.feasible_fraction,
        partial_balance: dataset.meta.partial_balance,
        infeasible: explain(one_violation)?,
        feasible: explain(strictly_feasible)?,
        seed: cfg.seed,
    };
    Ok((model, report))
}

/// Runs every method on every model over the same grid and writes each
/// result to `out_dir/<encoding>/<method>/`.
pub fn grid_sweep(
    models: &[(EncodingKind, &Model)],
    methods: &[Method],
    grid: &GridSpec,
    lp: &LinearProgram,
    exec: Execution,
    out_dir: Option<&Path>,
) -> Result<Vec<GridResult>> {
    let mut results = Vec::new();
    for (kind, model) in models {
        for method in methods {
            let mut r = grid_attribution(*model, method, grid, exec)?;
            r.provenance.lp_digest = Some(lp.digest());
            r.provenance.encoding = Some(kind.name().to_string());
            if let Some(dir) = out_dir {
                r.write(dir.join(kind.name()).join(method.tag().name()))?;
            }
            results.push(r);
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::Analytic;

    fn smooth() -> impl ScalarModel {
        Analytic::new(
            2,
            |x: &[f64]| x[0].sin() + x[0] * x[1] + 0.5 * x[1] * x[1],
            |x: &[f64]| vec![x[0].cos() + x[1], x[0] + x[1]],
        )
    }

    fn unit_box() -> BBox {
        BBox::new(vec![(0.1, 1.0), (0.1, 1.0)]).unwrap()
    }

    /// `min(2 − x₀, 3 − x₁)`: the boundary distance of the unit-cost box LP.
    fn kinked() -> impl ScalarModel {
        Analytic::new(
            2,
            |x: &[f64]| (2.0 - x[0]).min(3.0 - x[1]),
            |x: &[f64]| {
                if 2.0 - x[0] < 3.0 - x[1] {
                    vec![-1.0, 0.0]
                } else {
                    vec![0.0, -1.0]
                }
            },
        )
    }

    #[test]
    fn lime_approaches_saliency() {
        // Large radii straddle the kink and lose the direction. On a nearly
        // affine function the ridge shrinkage dominates instead and the
        // ordering of the small radii is noise.
        let r = experiment_lime_vs_saliency(
            &kinked(),
            &BBox::new(vec![(0.0, 3.0), (0.0, 4.5)]).unwrap(),
            &[0.5, 0.1, 0.02],
            50,
            &PerturbConfig::default(),
            4,
        )
        .unwrap();
        assert!(
            r.rows[2].mean_cosine > r.rows[0].mean_cosine,
            "{}",
            r.render()
        );
        assert!(r.rows[2].mean_cosine >= 0.99, "{}", r.render());
        assert!(r.magnitude_shrinking, "{}", r.render());
        assert_eq!(r.points_used, 50);
    }

    #[test]
    fn ridge_shrinkage_bends_direction_on_affine_models() {
        // With λ fixed, w = (ΔᵀΔ + λI)⁻¹ΔᵀΔ·g: the smaller the radius, the
        // more the sample scatter ΔᵀΔ rotates w away from g.
        let f = crate::function::Affine::new(vec![1.0, -0.5], 0.2);
        let r = experiment_lime_vs_saliency(
            &f,
            &unit_box(),
            &[0.5, 0.1, 0.02],
            50,
            &PerturbConfig::default(),
            4,
        )
        .unwrap();
        assert!(
            r.rows
                .windows(2)
                .all(|w| w[1].mean_cosine < w[0].mean_cosine),
            "{}",
            r.render()
        );
        assert!(!r.similarity_monotone);
        let exact = PerturbConfig {
            ridge_lambda: 0.0,
            ..PerturbConfig::default()
        };
        let r = experiment_lime_vs_saliency(&f, &unit_box(), &[0.5, 0.02], 50, &exact, 4).unwrap();
        assert!(r.rows.iter().all(|row| row.min_cosine > 1.0 - 1e-12));
    }

    #[test]
    fn unregularized_lime_matches_saliency_magnitude() {
        let cfg = PerturbConfig {
            ridge_lambda: 0.0,
            ..PerturbConfig::default()
        };
        let r = experiment_lime_vs_saliency(&smooth(), &unit_box(), &[0.5, 0.1, 0.02], 50, &cfg, 4)
            .unwrap();
        assert!(
            (r.rows[2].mean_norm_ratio - 1.0).abs() <= 0.05,
            "{}",
            r.render()
        );
    }

    #[test]
    fn rejects_bad_radii() {
        let cfg = PerturbConfig::default();
        assert!(experiment_lime_vs_saliency(&smooth(), &unit_box(), &[0.1], 50, &cfg, 0).is_err());
        assert!(
            experiment_lime_vs_saliency(&smooth(), &unit_box(), &[0.1, 0.5], 50, &cfg, 0).is_err()
        );
        assert!(
            experiment_lime_vs_saliency(&smooth(), &unit_box(), &[0.5, 0.1], 5, &cfg, 0).is_err()
        );
    }

    #[test]
    fn flat_points_are_excluded() {
        let flat = Analytic::new(
            2,
            |x: &[f64]| {
                if x[0] < 0.5 {
                    0.0
                } else {
                    (x[0] - 0.5).powi(2) + x[1]
                }
            },
            |x: &[f64]| {
                if x[0] < 0.5 {
                    vec![0.0, 0.0]
                } else {
                    vec![2.0 * (x[0] - 0.5), 1.0]
                }
            },
        );
        let r = experiment_lime_vs_saliency(
            &flat,
            &unit_box(),
            &[0.5, 0.1],
            40,
            &PerturbConfig::default(),
            1,
        )
        .unwrap();
        assert!(r.degenerate_excluded > 0);
        assert_eq!(r.points_used + r.degenerate_excluded, 40);
    }

    #[test]
    fn directed_fp_is_lime() {
        let r = experiment_directed_fp(&smooth(), &unit_box(), 0.1, 100, 2).unwrap();
        assert!(r.max_deviation <= 1e-9, "{}", r.render());
        assert!(r.fp_max_deviation > 1e-8);
    }
}
