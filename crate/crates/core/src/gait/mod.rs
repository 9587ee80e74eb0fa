//! Periodic gaits of the walker and their controllers.

mod control;
mod sim;
mod synth;

pub use control::{
    baseline_shape, with_poles, design_tracking_gain, initial_shape, place_on_guard, pole_placement, DesignHistory, DesignOptions, DesignOutcome,
    GradientCheck, DEFAULT_SHAPE_MARGIN,
};
pub use sim::{
    closed_loop_step_jacobian, simulate_step, step_jacobians, step_map, StepLinearization, StepOutcome,
};
pub use synth::{synthesize_gait, SynthesisOptions};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::interval::{Interval, IntervalMatrix};
use crate::system::{FlowSystem, HybridSystem};
use crate::verify::AffineGuard;
use crate::walker::{
    transformed_dynamics, transformed_dynamics_enclosure, transformed_guard, transformed_jacobian,
    transformed_jacobian_enclosure, transformed_reset, transformed_reset_jacobian_enclosure, WalkerParams,
};

/// A periodic walking gait in transformed coordinates together with its
/// controllers.
///
/// Stance force: `u(τ) = u_ff(τ) + K (x − x^d(τ))` where `τ` is the time
/// since the last touchdown, clamped to `[0, period]`. Touchdown impulse:
/// `v = v_ff + K_ds (x⁻ − x⁻_nom)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitSpec {
    pub params: WalkerParams,
    /// Post-touchdown fixed point.
    pub x_star: [f64; 4],
    /// Nominal pre-touchdown state.
    pub x_minus: [f64; 4],
    /// Time to touchdown from `x_star`.
    pub period: f64,
    /// Spacing of the feedforward knots.
    pub knot_step: f64,
    /// Feedforward stance force at `τ = i · knot_step`, linearly interpolated.
    pub u_ff: Vec<f64>,
    pub v_ff: f64,
    pub k_ds: [f64; 4],
    pub k_track: [f64; 4],
    /// Nominal trajectory samples (`nominal_times[i]`, `nominal[i]`); the
    /// last sample is the touchdown state.
    pub nominal_times: Vec<f64>,
    pub nominal: Vec<[f64; 4]>,
    /// `‖F(x*) − x*‖₂` of the open-loop step map at synthesis time.
    pub residual: f64,
}

pub(crate) fn to_arr(x: &DVector<f64>) -> [f64; 4] {
    [x[0], x[1], x[2], x[3]]
}

pub(crate) fn to_vec(x: &[f64; 4]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

impl GaitSpec {
    pub fn phase(&self, tau: f64) -> f64 {
        tau.clamp(0.0, self.period)
    }

    /// Feedforward stance force.
    pub fn feedforward(&self, tau: f64) -> f64 {
        let n = self.u_ff.len();
        if n == 0 {
            return 0.0;
        }
        let s = (self.phase(tau) / self.knot_step).max(0.0);
        let i = s.floor() as usize;
        if i + 1 >= n {
            return self.u_ff[n - 1];
        }
        let w = s - i as f64;
        self.u_ff[i] * (1.0 - w) + self.u_ff[i + 1] * w
    }

    /// Nominal state at phase `tau` (cubic Hermite between samples).
    pub fn reference(&self, tau: f64) -> [f64; 4] {
        let ts = &self.nominal_times;
        if ts.is_empty() {
            return self.x_star;
        }
        let t = tau.clamp(ts[0], ts[ts.len() - 1]);
        let i = match ts.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.nominal[i],
            Err(i) => i.max(1) - 1,
        };
        let (t0, t1) = (ts[i], ts[i + 1]);
        let dt = t1 - t0;
        let s = (t - t0) / dt;
        let (x0, x1) = (&self.nominal[i], &self.nominal[i + 1]);
        let f0 = transformed_dynamics(&self.params, x0, self.feedforward(t0));
        let f1 = transformed_dynamics(&self.params, x1, self.feedforward(t1));
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        std::array::from_fn(|k| h00 * x0[k] + h10 * dt * f0[k] + h01 * x1[k] + h11 * dt * f1[k])
    }

    /// Closed-loop system with tracking gain `k_track` and the stored
    /// touchdown gain.
    pub fn closed_loop(&self, k_track: [f64; 4]) -> ClosedLoopWalker<'_> {
        ClosedLoopWalker { gait: self, k_track, k_ds: self.k_ds, guard: transformed_guard(&self.params) }
    }

    /// Open loop: no tracking and no touchdown feedback.
    pub fn open_loop(&self) -> ClosedLoopWalker<'_> {
        ClosedLoopWalker { gait: self, k_track: [0.0; 4], k_ds: [0.0; 4], guard: transformed_guard(&self.params) }
    }
}

/// The walker under a gait's controllers, as a hybrid system in transformed
/// coordinates.
#[derive(Clone, Debug)]
pub struct ClosedLoopWalker<'a> {
    pub gait: &'a GaitSpec,
    pub k_track: [f64; 4],
    pub k_ds: [f64; 4],
    guard: AffineGuard,
}

impl ClosedLoopWalker<'_> {
    pub fn stance_force(&self, tau: f64, x: &[f64; 4]) -> f64 {
        let xd = self.gait.reference(tau);
        self.gait.feedforward(tau) + (0..4).map(|i| self.k_track[i] * (x[i] - xd[i])).sum::<f64>()
    }

    fn force_enclosure(&self, tau: f64, bx: &[Interval]) -> Interval {
        let xd = self.gait.reference(tau);
        (0..4).fold(Interval::point(self.gait.feedforward(tau)), |acc, i| {
            if self.k_track[i] == 0.0 {
                acc
            } else {
                acc + (bx[i] - xd[i]) * self.k_track[i]
            }
        })
    }

    pub fn impulse(&self, x_minus: &[f64; 4]) -> f64 {
        self.gait.v_ff + (0..4).map(|i| self.k_ds[i] * (x_minus[i] - self.gait.x_minus[i])).sum::<f64>()
    }

    fn impulse_enclosure(&self, bx: &[Interval]) -> Interval {
        (0..4).fold(Interval::point(self.gait.v_ff), |acc, i| {
            if self.k_ds[i] == 0.0 {
                acc
            } else {
                acc + (bx[i] - self.gait.x_minus[i]) * self.k_ds[i]
            }
        })
    }
}

impl FlowSystem for ClosedLoopWalker<'_> {
    fn dim(&self) -> usize {
        4
    }
    fn field(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let xa = to_arr(x);
        to_vec(&transformed_dynamics(&self.gait.params, &xa, self.stance_force(t, &xa)))
    }
    fn jacobian(&self, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        transformed_jacobian(&self.gait.params, &to_arr(x), &self.k_track)
    }
    fn jacobian_enclosure(&self, _t: f64, bx: &[Interval]) -> IntervalMatrix {
        transformed_jacobian_enclosure(&self.gait.params, bx, &self.k_track)
    }
    fn field_enclosure(&self, t: f64, bx: &[Interval]) -> Vec<Interval> {
        transformed_dynamics_enclosure(&self.gait.params, bx, self.force_enclosure(t, bx)).to_vec()
    }
}

impl HybridSystem for ClosedLoopWalker<'_> {
    fn guard(&self) -> &AffineGuard {
        &self.guard
    }
    fn reset(&self, x: &DVector<f64>) -> DVector<f64> {
        let xa = to_arr(x);
        match transformed_reset(&self.gait.params, &xa, self.impulse(&xa)) {
            Ok(v) => to_vec(&v),
            Err(_) => DVector::from_element(4, f64::NAN),
        }
    }
    fn reset_jacobian_enclosure(&self, bx: &[Interval]) -> IntervalMatrix {
        transformed_reset_jacobian_enclosure(&self.gait.params, bx, self.impulse_enclosure(bx), &self.k_ds)
    }
}
