//! Single steps of the closed-loop walker and their linearizations.

use nalgebra::{DMatrix, DVector};

use super::{to_arr, to_vec, ClosedLoopWalker};
use crate::error::{Error, Result};
use crate::ode::{integrate, OdeOptions};
use crate::system::{FlowSystem, HybridSystem};
use crate::walker::transformed_reset;

/// One stance phase from a post-touchdown state.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub t_impact: f64,
    pub x_minus: [f64; 4],
    pub x_plus: [f64; 4],
    pub impulse: f64,
    /// States at the requested output times.
    pub outputs: Vec<(f64, [f64; 4])>,
}

fn horizon(sys: &ClosedLoopWalker) -> f64 {
    3.0 * sys.gait.period + 1.0
}

/// Flows from `x0` (phase 0) to the next touchdown and applies the reset.
pub fn simulate_step(
    sys: &ClosedLoopWalker,
    x0: &[f64; 4],
    output_times: &[f64],
    opts: &OdeOptions,
) -> Result<StepOutcome> {
    let f = |t: f64, x: &DVector<f64>| sys.field(t, x);
    let hz = horizon(sys);
    let tr = integrate(&f, Some(sys.guard()), 0.0, &to_vec(x0), hz, output_times, opts)?;
    if !tr.impact {
        return Err(Error::NoImpact { horizon: hz });
    }
    let x_minus = to_arr(&tr.x);
    let impulse = sys.impulse(&x_minus);
    let x_plus = transformed_reset(&sys.gait.params, &x_minus, impulse)?;
    Ok(StepOutcome {
        t_impact: tr.t,
        x_minus,
        x_plus,
        impulse,
        outputs: tr.outputs.iter().map(|(t, x)| (*t, to_arr(x))).collect(),
    })
}

/// Post-touchdown to post-touchdown map.
pub fn step_map(sys: &ClosedLoopWalker, x0: &[f64; 4], opts: &OdeOptions) -> Result<[f64; 4]> {
    simulate_step(sys, x0, &[], opts).map(|o| o.x_plus)
}

/// Fixed-step options aligned with the feedforward knots, so that finite
/// differences see a state-independent step grid.
pub(crate) fn fd_options(sys: &ClosedLoopWalker) -> OdeOptions {
    let mut o = OdeOptions::fixed(sys.gait.knot_step / 10.0);
    o.event_tol = 1e-12;
    o
}

/// Central differences of `g` at `x` with step `d` (per coordinate, scaled
/// by `max(1, |x_i|)`).
fn central_jacobian<G>(g: &G, x: &[f64], d: f64) -> Result<DMatrix<f64>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut m = 0;
    for j in 0..n {
        let hj = d * x[j].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += hj;
        xm[j] -= hj;
        let (fp, fm) = (g(&xp)?, g(&xm)?);
        m = fp.len();
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * hj)).collect::<Vec<_>>());
    }
    Ok(DMatrix::from_fn(m, n, |i, j| cols[j][i]))
}

/// Jacobian by central differences, cross-checked at two step sizes.
/// Fails when the two disagree by more than `rel_tol` (relative to the
/// larger norm).
pub(crate) fn checked_jacobian<G>(g: &G, x: &[f64], d: f64, d2: f64, rel_tol: f64) -> Result<DMatrix<f64>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let j1 = central_jacobian(g, x, d)?;
    let j2 = central_jacobian(g, x, d2)?;
    let scale = j1.norm().max(j2.norm()).max(1e-300);
    let deviation = (&j1 - &j2).norm() / scale;
    if !(deviation <= rel_tol) {
        return Err(Error::FiniteDifference { deviation });
    }
    Ok(j1)
}

/// Linearization of the pre-touchdown to pre-touchdown map around the
/// nominal gait, in guard coordinates.
#[derive(Clone, Debug)]
pub struct StepLinearization {
    /// `∂P/∂x⁻` in full coordinates.
    pub a_full: DMatrix<f64>,
    /// `∂P/∂v`.
    pub b_full: DVector<f64>,
    /// Restrictions to the touchdown surface: `Bgᵀ A Bg` and `Bgᵀ b`.
    pub a_z: DMatrix<f64>,
    pub b_z: DVector<f64>,
    pub basis: DMatrix<f64>,
}

/// Differentiates `(x⁻, v) ↦` next pre-touchdown state, with the open-loop
/// stance controller and the tracking gain `k_track`.
pub fn step_jacobians(sys: &ClosedLoopWalker) -> Result<StepLinearization> {
    let gait = sys.gait;
    let opts = fd_options(sys);
    let hz = horizon(sys);
    let f = |t: f64, x: &DVector<f64>| sys.field(t, x);
    let guard = sys.guard();
    let pre = |z: &[f64]| -> Result<Vec<f64>> {
        let xm = [z[0], z[1], z[2], z[3]];
        let xp = transformed_reset(&gait.params, &xm, z[4])?;
        let tr = integrate(&f, Some(guard), 0.0, &to_vec(&xp), hz, &[], &opts)?;
        if !tr.impact {
            return Err(Error::NoImpact { horizon: hz });
        }
        Ok(tr.x.iter().copied().collect())
    };
    let mut z0 = gait.x_minus.to_vec();
    z0.push(gait.v_ff);
    let j = checked_jacobian(&pre, &z0, 1e-6, 1e-5, 1e-4)?;
    let a_full = j.columns(0, 4).into_owned();
    let b_full = j.column(4).into_owned();
    let basis = guard.basis().clone();
    let a_z = basis.transpose() * &a_full * &basis;
    let b_z = basis.transpose() * &b_full;
    Ok(StepLinearization { a_full, b_full, a_z, b_z, basis })
}

/// Jacobian of the closed-loop post-to-post step map at `x0`.
pub fn closed_loop_step_jacobian(sys: &ClosedLoopWalker, x0: &[f64; 4]) -> Result<DMatrix<f64>> {
    let opts = fd_options(sys);
    let g = |z: &[f64]| -> Result<Vec<f64>> { Ok(step_map(sys, &[z[0], z[1], z[2], z[3]], &opts)?.to_vec()) };
    checked_jacobian(&g, x0, 1e-6, 1e-5, 1e-4)
}
