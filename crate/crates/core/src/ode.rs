//! Dormand–Prince 5(4) integration with touchdown detection on an affine
//! guard.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::verify::AffineGuard;

/// Step-size policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stepping {
    /// Error-controlled steps.
    Adaptive { rtol: f64, atol: f64 },
    /// Constant steps. The step grid does not depend on the initial state,
    /// which keeps finite differences of the flow free of step-selection
    /// noise.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub stepping: Stepping,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Required `|h(x)|` at a located guard event.
    pub event_tol: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            stepping: Stepping::Adaptive { rtol: 1e-10, atol: 1e-10 },
            h_init: 1e-4,
            h_min: 1e-14,
            h_max: 1e-2,
            max_steps: 2_000_000,
            event_tol: 1e-10,
        }
    }
}

impl OdeOptions {
    pub fn fixed(h: f64) -> Self {
        Self { stepping: Stepping::Fixed(h), h_max: h, ..Self::default() }
    }

    pub fn with_tolerance(tol: f64) -> Self {
        Self { stepping: Stepping::Adaptive { rtol: tol, atol: tol }, ..Self::default() }
    }
}

/// End state of an integration.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Final time: the impact time if `impact`, else the horizon.
    pub t: f64,
    pub x: DVector<f64>,
    pub impact: bool,
    /// States at the requested output times (those reached before the end).
    pub outputs: Vec<(f64, DVector<f64>)>,
    /// Every accepted step, including the endpoints.
    pub steps: Vec<(f64, DVector<f64>)>,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One Dormand–Prince step. Returns the 5th-order solution and the
/// embedded error estimate.
pub fn dp_step<F>(f: &F, t: f64, x: &DVector<f64>, k1: &DVector<f64>, dt: f64) -> (DVector<f64>, DVector<f64>)
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k2 = f(t + C2 * dt, &(x + k1 * (A21 * dt)));
    let k3 = f(t + C3 * dt, &(x + (k1 * A31 + &k2 * A32) * dt));
    let k4 = f(t + C4 * dt, &(x + (k1 * A41 + &k2 * A42 + &k3 * A43) * dt));
    let k5 = f(t + C5 * dt, &(x + (k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * dt));
    let k6 = f(t + dt, &(x + (k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * dt));
    let x_new = x + (k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * dt;
    let k7 = f(t + dt, &x_new);
    let err = (k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + k7 * E7) * dt;
    (x_new, err)
}

fn error_norm(err: &DVector<f64>, x: &DVector<f64>, x_new: &DVector<f64>, rtol: f64, atol: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..err.len() {
        let scale = atol + rtol * x[i].abs().max(x_new[i].abs());
        worst = worst.max((err[i] / scale).abs());
    }
    worst
}

/// Integrates `ẋ = f(t, x)` from `(t0, x0)` until the first downward
/// crossing of `guard` (from `h > 0` to `h ≤ 0`) or until `horizon`.
///
/// Upward crossings are ignored. The crossing is located to
/// `|h| ≤ event_tol` and must be transversal (`ḣ < 0`).
pub fn integrate<F>(
    f: &F,
    guard: Option<&AffineGuard>,
    t0: f64,
    x0: &DVector<f64>,
    horizon: f64,
    output_times: &[f64],
    opts: &OdeOptions,
) -> Result<Trajectory>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let mut t = t0;
    let mut x = x0.clone();
    let mut k1 = f(t, &x);
    if !k1.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { context: "vector field" });
    }
    let mut dt = match opts.stepping {
        Stepping::Fixed(h) => h,
        Stepping::Adaptive { .. } => opts.h_init.min(opts.h_max),
    };
    let mut outputs = Vec::new();
    let mut next_out = output_times.iter().position(|&s| s >= t0).unwrap_or(output_times.len());
    if next_out < output_times.len() && output_times[next_out] == t0 {
        outputs.push((t0, x.clone()));
        next_out += 1;
    }
    let mut steps = vec![(t, x.clone())];

    for _ in 0..opts.max_steps {
        if t >= horizon {
            return Ok(Trajectory { t, x, impact: false, outputs, steps });
        }
        let base = match opts.stepping {
            Stepping::Fixed(h) => h,
            Stepping::Adaptive { .. } => dt,
        };
        let mut step = base.min(horizon - t);
        let mut lands_on_output = false;
        if next_out < output_times.len() && t + step >= output_times[next_out] {
            step = output_times[next_out] - t;
            lands_on_output = true;
        }
        if step < opts.h_min && !lands_on_output && t + step < horizon {
            return Err(Error::StepSizeUnderflow { t });
        }
        let (x_new, err) = dp_step(f, t, &x, &k1, step);
        if let Stepping::Adaptive { rtol, atol } = opts.stepping {
            let e = error_norm(&err, &x, &x_new, rtol, atol);
            if !e.is_finite() || e > 1.0 {
                let factor = if e.is_finite() { (0.9 * e.powf(-0.2)).max(0.2) } else { 0.1 };
                dt = (step * factor).max(opts.h_min * 0.5);
                if step <= opts.h_min {
                    return Err(Error::StepSizeUnderflow { t });
                }
                continue;
            }
            let grow = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
            // Output clipping must not shrink the controller's step memory.
            dt = (base.max(step) * grow).min(opts.h_max);
        }
        if !x_new.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "integrated state" });
        }

        if let Some(g) = guard {
            let h0 = g.eval(&x);
            let h1 = g.eval(&x_new);
            if h0 > 0.0 && h1 <= 0.0 {
                let (tau, xe) = locate_event(f, g, t, &x, &k1, step, opts.event_tol)?;
                let te = t + tau;
                let hdot = g.a().dot(&f(te, &xe));
                if !(hdot < 0.0) {
                    return Err(Error::NonTransversalCrossing { t: te, hdot });
                }
                steps.push((te, xe.clone()));
                return Ok(Trajectory { t: te, x: xe, impact: true, outputs, steps });
            }
        }

        t = if lands_on_output { output_times[next_out] } else { t + step };
        x = x_new;
        k1 = f(t, &x);
        steps.push((t, x.clone()));
        while next_out < output_times.len() && output_times[next_out] <= t {
            outputs.push((t, x.clone()));
            next_out += 1;
        }
    }
    Err(Error::MaxSteps { steps: opts.max_steps })
}

/// Finds `τ ∈ (0, step]` with `h(x(t+τ)) ≈ 0` by the Illinois variant of
/// regula falsi on single integrator steps from `(t, x)`.
fn locate_event<F>(
    f: &F,
    g: &AffineGuard,
    t: f64,
    x: &DVector<f64>,
    k1: &DVector<f64>,
    step: f64,
    tol: f64,
) -> Result<(f64, DVector<f64>)>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let (mut lo, mut hi) = (0.0, step);
    let mut h_lo = g.eval(x);
    let (x_hi, _) = dp_step(f, t, x, k1, step);
    let mut h_hi = g.eval(&x_hi);
    let mut best = (step, x_hi, h_hi.abs());
    if h_hi == 0.0 {
        return Ok((best.0, best.1));
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let mut tau = (lo * h_hi - hi * h_lo) / (h_hi - h_lo);
        if !(tau > lo && tau < hi) {
            tau = 0.5 * (lo + hi);
        }
        let (xm, _) = dp_step(f, t, x, k1, tau);
        let hm = g.eval(&xm);
        if hm.abs() < best.2 || (hm.abs() == best.2 && tau > best.0) {
            best = (tau, xm.clone(), hm.abs());
        }
        if hm == 0.0 || (hi - lo) <= 4.0 * f64::EPSILON * (t + hi).abs().max(1e-300) {
            break;
        }
        if hm > 0.0 {
            lo = tau;
            h_lo = hm;
            if side == 1 {
                h_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = tau;
            h_hi = hm;
            if side == -1 {
                h_lo *= 0.5;
            }
            side = -1;
        }
        if best.2 <= tol * 1e-4 {
            break;
        }
    }
    if best.2 > tol {
        return Err(Error::NonTransversalCrossing { t: t + best.0, hdot: 0.0 });
    }
    Ok((best.0, best.1))
}
