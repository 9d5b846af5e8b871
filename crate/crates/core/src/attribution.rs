//! Attribution methods: Integrated Gradients, Saliency, perturbation-based
//! Feature Permutation, LIME with a ridge surrogate, and the directed
//! (central-difference) variant of Feature Permutation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};
use crate::function::ScalarModel;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodTag {
    IntegratedGradients,
    Saliency,
    FeaturePermutation,
    Lime,
    DirectedFeaturePermutation,
}

impl MethodTag {
    pub fn name(self) -> &'static str {
        match self {
            MethodTag::IntegratedGradients => "ig",
            MethodTag::Saliency => "saliency",
            MethodTag::FeaturePermutation => "fp",
            MethodTag::Lime => "lime",
            MethodTag::DirectedFeaturePermutation => "directed_fp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgConfig {
    pub baseline: Vec<f64>,
    /// Trapezoid intervals along the path; `steps + 1` gradient evaluations.
    pub steps: usize,
}

impl IgConfig {
    pub const DEFAULT_STEPS: usize = 256;

    /// Origin baseline with the default resolution.
    pub fn zero_baseline(n: usize) -> Self {
        IgConfig {
            baseline: vec![0.0; n],
            steps: Self::DEFAULT_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    /// Largest perturbation per coordinate; offsets are uniform in `[−radius, radius]`.
    pub radius: f64,
    /// Perturbed samples per LIME fit.
    pub samples: usize,
    /// Draws averaged per feature by Feature Permutation.
    pub repeats: usize,
    pub ridge_lambda: f64,
    pub seed: u64,
}

impl PerturbConfig {
    pub fn with_radius(radius: f64) -> Self {
        PerturbConfig {
            radius,
            ..PerturbConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::config("perturbation radius must be positive"));
        }
        if self.samples == 0 || self.repeats == 0 {
            return Err(Error::config("sample and repeat counts must be positive"));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(Error::config("ridge penalty must be nonnegative"));
        }
        Ok(())
    }
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            radius: 0.1,
            samples: 50,
            repeats: 10,
            ridge_lambda: 1.0,
            seed: 0,
        }
    }
}

/// A configured attribution method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    IntegratedGradients(IgConfig),
    Saliency,
    FeaturePermutation(PerturbConfig),
    Lime(PerturbConfig),
    DirectedFeaturePermutation { radius: f64 },
}

impl Method {
    pub fn tag(&self) -> MethodTag {
        match self {
            Method::IntegratedGradients(_) => MethodTag::IntegratedGradients,
            Method::Saliency => MethodTag::Saliency,
            Method::FeaturePermutation(_) => MethodTag::FeaturePermutation,
            Method::Lime(_) => MethodTag::Lime,
            Method::DirectedFeaturePermutation { .. } => MethodTag::DirectedFeaturePermutation,
        }
    }

    /// First 16 hex digits of the SHA-256 of the method's JSON form.
    pub fn config_digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("method serializes");
        hex::encode(Sha256::digest(&json))[..16].to_string()
    }

    /// Same method with its random seed replaced (no-op for deterministic methods).
    pub fn with_seed(&self, seed: u64) -> Method {
        match self {
            Method::FeaturePermutation(c) => {
                Method::FeaturePermutation(PerturbConfig { seed, ..c.clone() })
            }
            Method::Lime(c) => Method::Lime(PerturbConfig { seed, ..c.clone() }),
            other => other.clone(),
        }
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self, Method::FeaturePermutation(_) | Method::Lime(_))
    }

    pub fn attribute(&self, model: &impl ScalarModel, x: &[f64]) -> Result<AttributionVector> {
        match self {
            Method::IntegratedGradients(cfg) => integrated_gradients(model, x, cfg),
            Method::Saliency => saliency(model, x),
            Method::FeaturePermutation(cfg) => feature_permutation(model, x, cfg),
            Method::Lime(cfg) => lime(model, x, cfg),
            Method::DirectedFeaturePermutation { radius } => {
                directed_feature_permutation(model, x, *radius)
            }
        }
    }
}

/// Per-feature attribution at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub method: MethodTag,
    pub config_digest: String,
    pub point: Vec<f64>,
    pub values: Vec<f64>,
    /// `Σ values`, summed in feature order.
    pub attribution_sum: f64,
}

impl AttributionVector {
    fn new(method: MethodTag, config_digest: String, point: &[f64], values: Vec<f64>) -> Self {
        let attribution_sum = values.iter().sum();
        AttributionVector {
            method,
            config_digest,
            point: point.to_vec(),
            values,
            attribution_sum,
        }
    }

    /// `method,x1..xn,a1..an,sum`.
    pub fn csv_row(&self) -> String {
        let mut fields = vec![self.method.name().to_string()];
        fields.extend(self.point.iter().map(|v| crate::dataset::fmt17(*v)));
        fields.extend(self.values.iter().map(|v| crate::dataset::fmt17(*v)));
        fields.push(crate::dataset::fmt17(self.attribution_sum));
        fields.join(",")
    }

    pub fn csv_header(n: usize) -> String {
        let mut fields = vec!["method".to_string()];
        fields.extend((1..=n).map(|i| format!("x{i}")));
        fields.extend((1..=n).map(|i| format!("a{i}")));
        fields.push("sum".into());
        fields.join(",")
    }
}

/// `(xᵢ − x′ᵢ) · ∫₀¹ ∂F/∂xᵢ(x′ + α(x − x′)) dα`, with the integral taken by
/// the trapezoid rule over `cfg.steps` equal intervals.
pub fn integrated_gradients(
    model: &impl ScalarModel,
    x: &[f64],
    cfg: &IgConfig,
) -> Result<AttributionVector> {
    let n = model.input_dim();
    check_dim(n, x.len())?;
    check_dim(n, cfg.baseline.len())?;
    if cfg.steps == 0 {
        return Err(Error::config(
            "integrated gradients needs at least one step",
        ));
    }
    let diff: Vec<f64> = x.iter().zip(&cfg.baseline).map(|(a, b)| a - b).collect();
    let path: Vec<Vec<f64>> = (0..=cfg.steps)
        .map(|k| {
            let alpha = k as f64 / cfg.steps as f64;
            cfg.baseline
                .iter()
                .zip(&diff)
                .map(|(b, d)| b + alpha * d)
                .collect()
        })
        .collect();
    let grads = model.gradients(&path);
    let mut avg = vec![0.0; n];
    for (k, g) in grads.iter().enumerate() {
        let w = if k == 0 || k == cfg.steps { 0.5 } else { 1.0 };
        for (a, gi) in avg.iter_mut().zip(g) {
            *a += w * gi;
        }
    }
    let values = avg
        .iter()
        .zip(&diff)
        .map(|(a, d)| d * a / cfg.steps as f64)
        .collect();
    let method = Method::IntegratedGradients(cfg.clone());
    Ok(AttributionVector::new(
        method.tag(),
        method.config_digest(),
        x,
        values,
    ))
}

/// `∂F/∂xᵢ(x)`.
pub fn saliency(model: &impl ScalarModel, x: &[f64]) -> Result<AttributionVector> {
    check_dim(model.input_dim(), x.len())?;
    let method = Method::Saliency;
    Ok(AttributionVector::new(
        method.tag(),
        method.config_digest(),
        x,
        model.gradient(x),
    ))
}

/// Feature Permutation on a perturbed batch of two.
///
/// For feature `i` and each of `cfg.repeats` draws, the batch
/// `[x + δ·eᵢ, x]` (input last) has feature `i` swapped between its rows; the
/// attribution of the input row is its original output minus its output
/// after the swap. Draws are averaged.
pub fn feature_permutation(
    model: &impl ScalarModel,
    x: &[f64],
    cfg: &PerturbConfig,
) -> Result<AttributionVector> {
    cfg.validate()?;
    let n = model.input_dim();
    check_dim(n, x.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let offsets: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..cfg.repeats)
                .map(|_| rng.random_range(-cfg.radius..=cfg.radius))
                .collect()
        })
        .collect();
    let values = feature_permutation_with_offsets(model, x, &offsets)?;
    let method = Method::FeaturePermutation(cfg.clone());
    Ok(AttributionVector::new(
        method.tag(),
        method.config_digest(),
        x,
        values,
    ))
}

/// Feature Permutation with explicit offsets: `offsets[i]` lists the draws of
/// feature `i`.
pub fn feature_permutation_with_offsets(
    model: &impl ScalarModel,
    x: &[f64],
    offsets: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let n = model.input_dim();
    check_dim(n, x.len())?;
    check_dim(n, offsets.len())?;
    if offsets.iter().any(Vec::is_empty) {
        return Err(Error::config("each feature needs at least one draw"));
    }
    let mut swapped_inputs = Vec::new();
    for (i, draws) in offsets.iter().enumerate() {
        for &delta in draws {
            let mut perturbed = x.to_vec();
            perturbed[i] += delta;
            let mut batch = [perturbed, x.to_vec()];
            swap_feature(&mut batch, i);
            let [_, input_after_swap] = batch;
            swapped_inputs.push(input_after_swap);
        }
    }
    let base = model.value(x);
    let outputs = model.values(&swapped_inputs);
    let mut outputs = outputs.into_iter();
    Ok(offsets
        .iter()
        .map(|draws| {
            let total: f64 = draws
                .iter()
                .map(|_| base - outputs.next().expect("one output per draw"))
                .sum();
            total / draws.len() as f64
        })
        .collect())
}

fn swap_feature(batch: &mut [Vec<f64>; 2], feature: usize) {
    let [a, b] = batch;
    std::mem::swap(&mut a[feature], &mut b[feature]);
}

/// LIME with a linear ridge surrogate fitted to `cfg.samples` joint
/// perturbations of all features, centered at `(x, F(x))`.
pub fn lime(model: &impl ScalarModel, x: &[f64], cfg: &PerturbConfig) -> Result<AttributionVector> {
    cfg.validate()?;
    let n = model.input_dim();
    check_dim(n, x.len())?;
    if cfg.samples < n {
        return Err(Error::config(format!(
            "LIME needs at least {n} samples, got {}",
            cfg.samples
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let perturbations: Vec<Vec<f64>> = (0..cfg.samples)
        .map(|_| {
            (0..n)
                .map(|_| rng.random_range(-cfg.radius..=cfg.radius))
                .collect()
        })
        .collect();
    let values = lime_fit(model, x, &perturbations, cfg.ridge_lambda)?;
    let method = Method::Lime(cfg.clone());
    Ok(AttributionVector::new(
        method.tag(),
        method.config_digest(),
        x,
        values,
    ))
}

/// Ridge weights `argmin_w ‖y − Δw‖² + λ‖w‖²` with rows `Δ` = `perturbations`
/// and `y = F(x + δ) − F(x)`.
pub fn lime_fit(
    model: &impl ScalarModel,
    x: &[f64],
    perturbations: &[Vec<f64>],
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = model.input_dim();
    check_dim(n, x.len())?;
    let points: Vec<Vec<f64>> = perturbations
        .iter()
        .map(|d| {
            check_dim(n, d.len())?;
            Ok(x.iter().zip(d).map(|(a, b)| a + b).collect())
        })
        .collect::<Result<_>>()?;
    let base = model.value(x);
    let ys: Vec<f64> = model
        .values(&points)
        .into_iter()
        .map(|v| v - base)
        .collect();
    ridge(perturbations, &ys, lambda)
}

/// Closed-form ridge regression without intercept.
pub fn ridge(design: &[Vec<f64>], ys: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_dim(design.len(), ys.len())?;
    let n = design.first().map_or(0, Vec::len);
    let mut normal = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    for (row, &y) in design.iter().zip(ys) {
        for i in 0..n {
            rhs[i] += row[i] * y;
            for j in 0..n {
                normal[i][j] += row[i] * row[j];
            }
        }
    }
    for (i, r) in normal.iter_mut().enumerate() {
        r[i] += lambda;
    }
    linalg::solve(normal, rhs, 1e-12).ok_or(Error::RankDeficient)
}

/// `(F(x + d·eᵢ) − F(x − d·eᵢ)) / 2d`.
pub fn directed_feature_permutation(
    model: &impl ScalarModel,
    x: &[f64],
    radius: f64,
) -> Result<AttributionVector> {
    let n = model.input_dim();
    check_dim(n, x.len())?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::config("radius must be positive"));
    }
    let points: Vec<Vec<f64>> = (0..n)
        .flat_map(|i| {
            [radius, -radius].map(|d| {
                let mut p = x.to_vec();
                p[i] += d;
                p
            })
        })
        .collect();
    let out = model.values(&points);
    let values = out
        .chunks_exact(2)
        .map(|pair| (pair[0] - pair[1]) / (2.0 * radius))
        .collect();
    let method = Method::DirectedFeaturePermutation { radius };
    Ok(AttributionVector::new(
        method.tag(),
        method.config_digest(),
        x,
        values,
    ))
}

/// The `2n` single-feature perturbations `±d·eᵢ`.
pub fn single_feature_perturbations(n: usize, radius: f64) -> Vec<Vec<f64>> {
    (0..n)
        .flat_map(|i| {
            [radius, -radius].map(|d| {
                let mut p = vec![0.0; n];
                p[i] = d;
                p
            })
        })
        .collect()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    linalg::dot(a, b) / (linalg::norm(a) * linalg::norm(b))
}

/// Static characterization of an attribution method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MethodProperties {
    pub method: MethodTag,
    pub gradient_based: bool,
    pub perturbation_based: bool,
    pub completeness: bool,
    pub randomness: bool,
    /// Ordinal, not binary: 0 consults the whole baseline path, 1 a
    /// perturbation-sized region, 2 an infinitesimal neighborhood.
    pub neighborhoodness: u8,
    pub directedness: bool,
}

pub fn method_property_table() -> [MethodProperties; 4] {
    [
        MethodProperties {
            method: MethodTag::IntegratedGradients,
            gradient_based: true,
            perturbation_based: false,
            completeness: true,
            randomness: false,
            neighborhoodness: 0,
            directedness: false,
        },
        MethodProperties {
            method: MethodTag::Saliency,
            gradient_based: true,
            perturbation_based: false,
            completeness: false,
            randomness: false,
            neighborhoodness: 2,
            directedness: true,
        },
        MethodProperties {
            method: MethodTag::FeaturePermutation,
            gradient_based: false,
            perturbation_based: true,
            completeness: false,
            randomness: true,
            neighborhoodness: 1,
            directedness: false,
        },
        MethodProperties {
            method: MethodTag::Lime,
            gradient_based: false,
            perturbation_based: true,
            completeness: false,
            randomness: true,
            neighborhoodness: 1,
            directedness: true,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::{Affine, Analytic};

    fn square() -> impl ScalarModel {
        Analytic::new(1, |x: &[f64]| x[0] * x[0], |x: &[f64]| vec![2.0 * x[0]])
    }

    #[test]
    fn ig_is_zero_at_baseline() {
        let f = Analytic::new(
            2,
            |x: &[f64]| x[0].sin() + x[1] * x[1],
            |x: &[f64]| vec![x[0].cos(), 2.0 * x[1]],
        );
        let cfg = IgConfig {
            baseline: vec![0.3, -1.0],
            steps: 16,
        };
        let a = integrated_gradients(&f, &[0.3, -1.0], &cfg).unwrap();
        assert_eq!(a.values, vec![0.0, 0.0]);
    }

    #[test]
    fn ig_on_square_is_exact() {
        let a = integrated_gradients(&square(), &[2.0], &IgConfig::zero_baseline(1)).unwrap();
        assert!((a.values[0] - 4.0).abs() < 1e-12);
        // Trapezoid is exact for a linear integrand even with one interval.
        let one = IgConfig {
            baseline: vec![0.0],
            steps: 1,
        };
        assert!(
            (integrated_gradients(&square(), &[2.0], &one)
                .unwrap()
                .values[0]
                - 4.0)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn ig_rejects_zero_steps() {
        let cfg = IgConfig {
            baseline: vec![0.0],
            steps: 0,
        };
        assert!(matches!(
            integrated_gradients(&square(), &[1.0], &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn saliency_examples() {
        let f = Analytic::new(
            2,
            |x: &[f64]| 3.0 * x[0] + x[1] * x[1],
            |x: &[f64]| vec![3.0, 2.0 * x[1]],
        );
        assert_eq!(saliency(&f, &[1.0, 2.0]).unwrap().values, vec![3.0, 4.0]);
        let g = Analytic::new(
            1,
            |x: &[f64]| (x[0] - 1.0).powi(2),
            |x: &[f64]| vec![2.0 * (x[0] - 1.0)],
        );
        assert_eq!(saliency(&g, &[1.0]).unwrap().values, vec![0.0]);
        assert!(saliency(&g, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn fp_with_forced_offsets() {
        let f = Affine::new(vec![2.0, 1.0], 0.0);
        let a = feature_permutation_with_offsets(&f, &[1.0, 1.0], &[vec![0.1], vec![0.0]]).unwrap();
        assert!((a[0] - (-0.2)).abs() < 1e-12);
        assert_eq!(a[1], 0.0);
    }

    #[test]
    fn fp_averages_to_zero_on_linear_model() {
        let f = Affine::new(vec![2.0, 1.0], 0.0);
        let cfg = PerturbConfig {
            repeats: 10_000,
            radius: 0.1,
            seed: 3,
            ..PerturbConfig::default()
        };
        let a = feature_permutation(&f, &[1.0, 1.0], &cfg).unwrap();
        assert!(a.values[0].abs() <= 0.01, "{}", a.values[0]);
    }

    #[test]
    fn ridge_closed_form_examples() {
        let design = vec![vec![0.1], vec![-0.1]];
        let ys = vec![0.2, -0.2];
        let w = ridge(&design, &ys, 1.0).unwrap();
        let expected = (2.0 * 0.01 * 2.0) / (2.0 * 0.01 + 1.0);
        assert!((w[0] - expected).abs() < 1e-15);
        assert!((expected - 0.0392).abs() < 1e-4);
        let w = ridge(&design, &ys, 0.0).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_without_penalty_detects_rank_deficiency() {
        let design = vec![vec![0.1, 0.2], vec![0.2, 0.4]];
        assert!(matches!(
            ridge(&design, &[1.0, 2.0], 0.0),
            Err(Error::RankDeficient)
        ));
        assert!(ridge(&design, &[1.0, 2.0], 1.0).is_ok());
    }

    #[test]
    fn lime_on_constant_model_is_zero() {
        let f = Affine::new(vec![0.0, 0.0], 5.0);
        let a = lime(&f, &[1.0, 1.0], &PerturbConfig::default()).unwrap();
        assert_eq!(a.values, vec![0.0, 0.0]);
    }

    #[test]
    fn lime_needs_enough_samples() {
        let f = Affine::new(vec![1.0; 3], 0.0);
        let cfg = PerturbConfig {
            samples: 2,
            ..PerturbConfig::default()
        };
        assert!(lime(&f, &[0.0; 3], &cfg).is_err());
    }

    #[test]
    fn directed_fp_examples() {
        let f = Affine::new(vec![2.0, 1.0], 0.0);
        let a = directed_feature_permutation(&f, &[1.0, 1.0], 0.1).unwrap();
        assert!((a.values[0] - 2.0).abs() < 1e-12);
        let g = Analytic::new(
            1,
            |x: &[f64]| (x[0] - 1.0).powi(2),
            |x: &[f64]| vec![2.0 * (x[0] - 1.0)],
        );
        // Symmetric around the minimum: zero up to rounding of 1 ± 0.1.
        assert!(
            directed_feature_permutation(&g, &[1.0], 0.1)
                .unwrap()
                .values[0]
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn randomized_methods_are_seed_deterministic() {
        let f = Analytic::new(
            2,
            |x: &[f64]| (x[0] * x[1]).sin(),
            |x: &[f64]| vec![x[1] * (x[0] * x[1]).cos(), x[0] * (x[0] * x[1]).cos()],
        );
        let cfg = PerturbConfig::default();
        assert_eq!(
            lime(&f, &[0.4, 0.7], &cfg).unwrap(),
            lime(&f, &[0.4, 0.7], &cfg).unwrap()
        );
        assert_eq!(
            feature_permutation(&f, &[0.4, 0.7], &cfg).unwrap(),
            feature_permutation(&f, &[0.4, 0.7], &cfg).unwrap()
        );
        let other = PerturbConfig {
            seed: 1,
            ..cfg.clone()
        };
        assert_ne!(
            lime(&f, &[0.4, 0.7], &cfg).unwrap().values,
            lime(&f, &[0.4, 0.7], &other).unwrap().values
        );
    }

    #[test]
    fn sum_matches_values() {
        let f = Affine::new(vec![0.1, 0.2, 0.3], 0.0);
        let a = saliency(&f, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(a.attribution_sum, a.values.iter().sum::<f64>());
        assert_eq!(
            AttributionVector::csv_header(3),
            "method,x1,x2,x3,a1,a2,a3,sum"
        );
        assert!(a.csv_row().starts_with("saliency,"));
    }

    #[test]
    fn property_table_matches_method_semantics() {
        let table = method_property_table();
        let directed: Vec<_> = table
            .iter()
            .filter(|p| p.directedness)
            .map(|p| p.method)
            .collect();
        assert_eq!(directed, vec![MethodTag::Saliency, MethodTag::Lime]);
        assert!(table
            .iter()
            .all(|p| p.gradient_based != p.perturbation_based));
        assert!(table.iter().all(|p| p.randomness == p.perturbation_based));
    }

    #[test]
    fn method_json_and_digest() {
        let m = Method::Lime(PerturbConfig::with_radius(0.05));
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.starts_with(r#"{"method":"lime""#), "{json}");
        let back: Method = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.config_digest().len(), 16);
        assert_ne!(m.config_digest(), m.with_seed(9).config_digest());
    }
}
