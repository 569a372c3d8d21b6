use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::error::{Error, Result};
use crate::numkit::{dot, Matrix};

/// `f(x) = xᵀAx + b·x + c`. Covers the closed-form test functions
/// (`x₂ − x₁`, `‖x‖²`, constants).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFunction {
    pub a: Matrix,
    pub b: Vec<f64>,
    pub c: f64,
}

impl QuadraticFunction {
    pub fn new(a: Matrix, b: Vec<f64>, c: f64) -> Result<Self> {
        if a.rows != a.cols || a.rows != b.len() {
            return Err(Error::DimensionMismatch { expected: b.len(), got: a.rows });
        }
        Ok(QuadraticFunction { a, b, c })
    }

    pub fn linear(w: Vec<f64>, bias: f64) -> Self {
        QuadraticFunction { a: Matrix::zeros(w.len(), w.len()), b: w, c: bias }
    }

    /// `x₂ − x₁`, the directional task used throughout the 2D experiments.
    pub fn difference_task() -> Self {
        Self::linear(vec![-1.0, 1.0], 0.0)
    }

    pub fn sum_of_squares(d: usize) -> Self {
        QuadraticFunction { a: Matrix::identity(d), b: vec![0.0; d], c: 0.0 }
    }

    pub fn constant(d: usize, c: f64) -> Self {
        QuadraticFunction { a: Matrix::zeros(d, d), b: vec![0.0; d], c }
    }
}

impl Predictor for QuadraticFunction {
    fn input_dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.a.quadratic_form(x)? + dot(&self.b, x) + self.c)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let d = x.len();
        Ok((0..d)
            .map(|i| self.b[i] + (0..d).map(|j| (self.a.get(i, j) + self.a.get(j, i)) * x[j]).sum::<f64>())
            .collect())
    }

    fn hessian(&self, x: &[f64]) -> Result<Matrix> {
        self.check_dim(x)?;
        let d = x.len();
        let mut h = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                h.set(i, j, self.a.get(i, j) + self.a.get(j, i));
            }
        }
        Ok(h)
    }

    fn id(&self) -> String {
        format!("quadratic-d{}", self.b.len())
    }
}
