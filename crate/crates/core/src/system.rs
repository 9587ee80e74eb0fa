//! Interfaces between concrete models and the reachability machinery.

use nalgebra::{DMatrix, DVector};

use crate::interval::{Interval, IntervalMatrix};
use crate::verify::AffineGuard;

/// Continuous closed-loop dynamics `ẋ = f(t, x)`.
///
/// `t` is time since the last reset; periodic controllers use it as phase.
pub trait FlowSystem {
    fn dim(&self) -> usize;
    fn field(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64>;
    /// Enclosure of `∂f/∂x` over a box.
    fn jacobian_enclosure(&self, t: f64, bx: &[Interval]) -> IntervalMatrix;
    /// Enclosure of `f` over a box.
    fn field_enclosure(&self, t: f64, bx: &[Interval]) -> Vec<Interval>;
}

/// A single-domain hybrid system: flow, affine guard, reset.
pub trait HybridSystem: FlowSystem {
    fn guard(&self) -> &AffineGuard;
    fn reset(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Enclosure of `∂Δ/∂x` over a box.
    fn reset_jacobian_enclosure(&self, bx: &[Interval]) -> IntervalMatrix;
}

/// `ẋ = A x + c` with an affine reset; handy for checks with closed forms.
#[derive(Clone, Debug)]
pub struct AffineHybrid {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    pub guard: AffineGuard,
    pub reset_matrix: DMatrix<f64>,
    pub reset_offset: DVector<f64>,
}

impl FlowSystem for AffineHybrid {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn field(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.c
    }
    fn jacobian(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }
    fn jacobian_enclosure(&self, _t: f64, _bx: &[Interval]) -> IntervalMatrix {
        IntervalMatrix::from_point(&self.a)
    }
    fn field_enclosure(&self, _t: f64, bx: &[Interval]) -> Vec<Interval> {
        crate::interval::real_matvec(&self.a, bx)
            .expect("dimensions checked at construction")
            .into_iter()
            .zip(self.c.iter())
            .map(|(v, c)| v + *c)
            .collect()
    }
}

impl HybridSystem for AffineHybrid {
    fn guard(&self) -> &AffineGuard {
        &self.guard
    }
    fn reset(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.reset_matrix * x + &self.reset_offset
    }
    fn reset_jacobian_enclosure(&self, _bx: &[Interval]) -> IntervalMatrix {
        IntervalMatrix::from_point(&self.reset_matrix)
    }
}
