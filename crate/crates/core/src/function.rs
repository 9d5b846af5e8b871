//! The interface attribution methods need from a model, and a few analytic
//! models implementing it.

use crate::linalg;

/// A differentiable scalar function `F : ℝⁿ → ℝ`.
///
/// Inputs are assumed to have length [`input_dim`](Self::input_dim); callers
/// validate dimensions before evaluating.
pub trait ScalarModel: Sync {
    fn input_dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// `∂F/∂x` at `x`.
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    fn values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.value(x)).collect()
    }

    fn gradients(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.gradient(x)).collect()
    }
}

impl<M: ScalarModel + ?Sized> ScalarModel for &M {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).gradient(x)
    }
    fn values(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        (**self).values(xs)
    }
    fn gradients(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (**self).gradients(xs)
    }
}

/// `F(x) = wᵀx + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Affine {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Affine { weights, bias }
    }
}

impl ScalarModel for Affine {
    fn input_dim(&self) -> usize {
        self.weights.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        linalg::dot(&self.weights, x) + self.bias
    }
    fn gradient(&self, _x: &[f64]) -> Vec<f64> {
        self.weights.clone()
    }
}

/// A model given by a value closure and its hand-written gradient.
pub struct Analytic<F, G> {
    dim: usize,
    value: F,
    gradient: G,
}

impl<F, G> Analytic<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn new(dim: usize, value: F, gradient: G) -> Self {
        Analytic {
            dim,
            value,
            gradient,
        }
    }
}

impl<F, G> ScalarModel for Analytic<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }
}
