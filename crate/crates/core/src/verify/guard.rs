use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::orthogonal_complement;

/// Hyperplane `h(x) = aᵀx + b = 0` with an orthonormal basis `B` of its
/// direction space and an anchor point `x'` on it.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineGuard {
    a: DVector<f64>,
    b: f64,
    basis: DMatrix<f64>,
    anchor: DVector<f64>,
}

impl AffineGuard {
    pub fn new(a: DVector<f64>, b: f64) -> Result<Self> {
        let nn = a.norm_squared();
        if !(nn > 0.0 && nn.is_finite() && b.is_finite()) {
            return Err(Error::InvalidParameter { name: "guard", reason: "normal must be nonzero and finite".into() });
        }
        if a.len() < 2 {
            // A point guard in one dimension has an empty direction space.
            let anchor = &a * (-b / nn);
            return Ok(Self { basis: DMatrix::zeros(a.len(), 0), a, b, anchor });
        }
        let basis = orthogonal_complement(&a);
        let anchor = &a * (-b / nn);
        Ok(Self { a, b, basis, anchor })
    }

    pub fn a(&self) -> &DVector<f64> {
        &self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }
    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.a.dot(x) + self.b
    }

    /// Point of the hyperplane with coordinates `z`.
    pub fn embed(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.basis * z + &self.anchor
    }

    /// Orthogonal projection onto the hyperplane.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        x - &self.a * (self.eval(x) / self.a.norm_squared())
    }

    /// The same hyperplane anchored at the projection of `x`.
    pub fn reanchored(&self, x: &DVector<f64>) -> Self {
        Self { anchor: self.project(x), ..self.clone() }
    }
}
