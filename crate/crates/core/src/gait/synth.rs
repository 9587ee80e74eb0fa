//! Gait synthesis: a direct-transcription search for a periodic orbit with
//! small stance effort, followed by a Newton polish on the exact step map.

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::BFGS;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Mutex;

use super::control::place_on_guard;
use super::sim::{checked_jacobian, fd_options, simulate_step, step_jacobians, step_map};
use super::{to_vec, GaitSpec};
use crate::error::{Error, Result};
use crate::ode::OdeOptions;
use crate::walker::{
    transformed_dynamics, transformed_guard, transformed_jacobian, transformed_reset, transformed_reset_dv,
    transformed_reset_jacobian, WalkerParams,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisOptions {
    /// Number of zero-order-hold force knots.
    pub knots: usize,
    /// Knot spacing (s).
    pub knot_step: f64,
    /// Penalty continuation schedule.
    pub weights: Vec<f64>,
    pub max_iters: u64,
    /// Largest acceptable constraint residual after the search.
    pub feasibility_tol: f64,
    /// Required touchdown speed margin: `ḣ(x⁻) ≤ −min_descent`.
    pub min_descent: f64,
    /// Required guard value `h(x*)` at the start of the step.
    pub clearance: f64,
    /// Target of the Newton polish on `‖F(x) − x‖`.
    pub polish_tol: f64,
    /// Touchdown-gain poles on the touchdown surface.
    pub poles: [f64; 3],
    /// Initial guess: post-touchdown angle and angular rate.
    pub theta0: f64,
    pub thetadot0: f64,
    /// Spacing of the stored nominal samples (s).
    pub sample_dt: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            knots: 100,
            knot_step: 4e-3,
            weights: vec![1e2, 1e4, 1e6],
            max_iters: 4000,
            feasibility_tol: 1e-4,
            min_descent: 0.1,
            clearance: 0.1,
            polish_tol: 1e-8,
            poles: [0.1, 0.2, 0.3],
            theta0: 0.1,
            thetadot0: 1.5,
            sample_dt: 5e-4,
        }
    }
}

/// Transcribed problem. Variables: `x0` (4), force knots scaled by `mg`
/// (N), impulse (1).
#[derive(Clone)]
struct Transcription {
    p: WalkerParams,
    n: usize,
    h: f64,
    weight: f64,
    min_descent: f64,
    clearance: f64,
}

struct Forward {
    xs: Vec<[f64; 4]>,
    err: [f64; 4],
    cost: f64,
    violation: f64,
}

impl Transcription {
    /// Required guard clearance of sample `k`: the orbit must start well
    /// above the touchdown surface.
    fn margin(&self, k: usize) -> f64 {
        if k == 0 {
            self.clearance
        } else {
            0.0
        }
    }

    fn mg(&self) -> f64 {
        self.p.m * self.p.g
    }

    fn guard_coeffs(&self) -> ([f64; 4], f64) {
        let g = transformed_guard(&self.p);
        ([g.a()[0], g.a()[1], g.a()[2], g.a()[3]], g.b())
    }

    fn hdot_coeffs(&self) -> [f64; 4] {
        // ḣ = aᵀf(x) = a₀ṙ + a₁ẋ₁ with ẋ₁ = x₃.
        let (a, _) = self.guard_coeffs();
        [0.0, 0.0, a[0], a[1]]
    }

    fn forward(&self, z: &[f64]) -> Forward {
        let (a, b) = self.guard_coeffs();
        let hd = self.hdot_coeffs();
        let mg = self.mg();
        let mut xs = Vec::with_capacity(self.n + 1);
        let mut x = [z[0], z[1], z[2], z[3]];
        xs.push(x);
        for k in 0..self.n {
            let f = transformed_dynamics(&self.p, &x, mg * z[4 + k]);
            x = std::array::from_fn(|i| x[i] + self.h * f[i]);
            xs.push(x);
        }
        let v = z[4 + self.n];
        let xn = xs[self.n];
        let plus = transformed_reset(&self.p, &xn, v).unwrap_or([f64::NAN; 4]);
        let err: [f64; 4] = std::array::from_fn(|i| plus[i] - z[i]);
        let dot = |c: &[f64; 4], x: &[f64; 4]| (0..4).map(|i| c[i] * x[i]).sum::<f64>();

        let mut viol = err.iter().map(|e| e * e).sum::<f64>();
        viol += (dot(&a, &xn) + b).powi(2);
        viol += (dot(&hd, &xn) + self.min_descent).max(0.0).powi(2);
        for (k, xk) in xs.iter().enumerate() {
            if k < self.n {
                viol += (dot(&a, xk) + b - self.margin(k)).min(0.0).powi(2);
            }
            if k > 0 {
                viol += (xk[0] - self.p.r0).min(0.0).powi(2);
            }
        }
        let effort = z[4..4 + self.n].iter().map(|u| u * u).sum::<f64>() / self.n as f64;
        let cost = effort + self.weight * viol;
        Forward { xs, err, cost: if cost.is_finite() { cost } else { f64::MAX }, violation: viol }
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let fw = self.forward(z);
        let mut g = vec![0.0; z.len()];
        if fw.cost == f64::MAX {
            return g;
        }
        let (a, b) = self.guard_coeffs();
        let hd = self.hdot_coeffs();
        let w = self.weight;
        let mg = self.mg();
        let n = self.n;
        let v = z[4 + n];
        let xn = fw.xs[n];
        let e = DVector::from_row_slice(&fw.err);
        let dot = |c: &[f64; 4], x: &[f64; 4]| (0..4).map(|i| c[i] * x[i]).sum::<f64>();

        let dr = transformed_reset_jacobian(&self.p, &xn, v, &[0.0; 4]);
        let mut lam: DVector<f64> = dr.transpose() * &e * (2.0 * w);
        let dv = transformed_reset_dv(&self.p, &xn);
        g[4 + n] = 2.0 * w * (0..4).map(|i| dv[i] * fw.err[i]).sum::<f64>();
        let hn = dot(&a, &xn) + b;
        let sd = (dot(&hd, &xn) + self.min_descent).max(0.0);
        for i in 0..4 {
            lam[i] += 2.0 * w * (hn * a[i] + sd * hd[i]);
        }
        lam[0] += 2.0 * w * (xn[0] - self.p.r0).min(0.0);

        for k in (0..n).rev() {
            let xk = &fw.xs[k];
            g[4 + k] = self.h * lam[2] / self.p.m * mg + 2.0 * z[4 + k] / n as f64;
            let jk = transformed_jacobian(&self.p, xk, &[0.0; 4]);
            let step = DMatrix::identity(4, 4) + jk * self.h;
            lam = step.transpose() * lam;
            let hk = (dot(&a, xk) + b - self.margin(k)).min(0.0);
            for i in 0..4 {
                lam[i] += 2.0 * w * hk * a[i];
            }
            if k > 0 {
                lam[0] += 2.0 * w * (xk[0] - self.p.r0).min(0.0);
            }
        }
        for i in 0..4 {
            g[i] = lam[i] - 2.0 * w * fw.err[i];
        }
        g
    }
}

/// Cost wrapper remembering the best finite point seen, so that progress
/// survives line-search breakdowns.
struct Tracked<'a> {
    t: &'a Transcription,
    best: &'a Mutex<(f64, Vec<f64>)>,
}

impl CostFunction for Tracked<'_> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, z: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let c = self.t.forward(z).cost;
        let mut best = self.best.lock().expect("poisoned");
        if c < best.0 {
            *best = (c, z.clone());
        }
        Ok(c)
    }
}

impl Gradient for Tracked<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;
    fn gradient(&self, z: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.t.gradient(z))
    }
}

fn initial_guess(p: &WalkerParams, o: &SynthesisOptions) -> Vec<f64> {
    let c = o.theta0.cos();
    let mut z = vec![p.r0, o.theta0.tan(), 0.0, o.thetadot0 / (c * c)];
    z.extend(std::iter::repeat(1.0).take(o.knots));
    z.push(0.0);
    z
}

fn minimize(t: &Transcription, z0: Vec<f64>, max_iters: u64) -> Result<Vec<f64>> {
    let dim = z0.len();
    let mut z = z0;
    let mut used = 0;
    // Restart from the best point after a breakdown, with a fresh metric.
    for _ in 0..20 {
        let g = t.gradient(&z);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(gn > 1e-12) || used >= max_iters {
            break;
        }
        let h0 = (1.0 / gn).min(1.0);
        let hinv: Vec<Vec<f64>> = (0..dim).map(|i| (0..dim).map(|j| if i == j { h0 } else { 0.0 }).collect()).collect();
        let solver = BFGS::new(MoreThuenteLineSearch::new())
            .with_tolerance_grad(1e-12)
            .and_then(|s| s.with_tolerance_cost(0.0))
            .map_err(|e| Error::Parse(e.to_string()))?;
        let before = t.forward(&z).cost;
        let best = Mutex::new((before, z.clone()));
        let problem = Tracked { t, best: &best };
        let start = z.clone();
        let res = Executor::new(problem, solver)
            .configure(|s| s.param(start).inv_hessian(hinv).max_iters(max_iters - used))
            .run();
        let finished = match res {
            Ok(r) => {
                used += r.state.get_iter();
                true
            }
            // Line-search breakdown: keep the best point and restart.
            Err(_) => {
                used += 1;
                false
            }
        };
        let (cost, zb) = best.into_inner().expect("poisoned");
        let improved = cost < before;
        z = zb;
        if finished || !improved {
            break;
        }
    }
    Ok(z)
}

/// Builds a gait from an already transcribed solution without touchdown
/// feedback. `x0` is refined afterwards.
fn provisional(p: &WalkerParams, o: &SynthesisOptions, z: &[f64]) -> GaitSpec {
    let n = o.knots;
    let x0 = [z[0], z[1], z[2], z[3]];
    GaitSpec {
        params: *p,
        x_star: x0,
        x_minus: x0,
        period: n as f64 * o.knot_step,
        knot_step: o.knot_step,
        u_ff: z[4..4 + n].iter().map(|u| u * p.m * p.g).collect(),
        v_ff: z[4 + n],
        k_ds: [0.0; 4],
        k_track: [0.0; 4],
        nominal_times: Vec::new(),
        nominal: Vec::new(),
        residual: f64::NAN,
    }
}

/// Damped Newton on `F(x) − x` for the open-loop step map.
fn polish(gait: &mut GaitSpec, tol: f64) -> Result<f64> {
    let adaptive = OdeOptions::default();
    let resid = |g: &GaitSpec, x: &[f64; 4]| -> Result<(DVector<f64>, f64)> {
        let fx = step_map(&g.open_loop(), x, &adaptive)?;
        let r = to_vec(&fx) - to_vec(x);
        let nr = r.norm();
        Ok((r, nr))
    };
    let mut x = gait.x_star;
    let (mut r, mut nr) = resid(gait, &x)?;
    for _ in 0..40 {
        if nr <= tol {
            break;
        }
        let sys = gait.open_loop();
        let opts = fd_options(&sys);
        let map = |z: &[f64]| -> Result<Vec<f64>> {
            let fx = step_map(&sys, &[z[0], z[1], z[2], z[3]], &opts)?;
            Ok((0..4).map(|i| fx[i] - z[i]).collect())
        };
        let j = checked_jacobian(&map, &x, 1e-6, 1e-5, 1e-2)?;
        let dx = j.lu().solve(&(-&r)).ok_or(Error::InfeasibleGait { residual: nr })?;
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda >= 1.0 / 64.0 {
            let cand: [f64; 4] = std::array::from_fn(|i| x[i] + lambda * dx[i]);
            if let Ok((rc, nc)) = resid(gait, &cand) {
                if nc < nr {
                    x = cand;
                    r = rc;
                    nr = nc;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    gait.x_star = x;
    Ok(nr)
}

/// Fills the nominal samples, period and pre-touchdown state from `x_star`.
fn record_nominal(gait: &mut GaitSpec, sample_dt: f64) -> Result<()> {
    let sys = gait.open_loop();
    let horizon = 3.0 * gait.period + 1.0;
    let times: Vec<f64> = (0..).map(|k| k as f64 * sample_dt).take_while(|t| *t < horizon).collect();
    let out = simulate_step(&sys, &gait.x_star, &times, &OdeOptions::default())?;
    let mut ts: Vec<f64> = Vec::new();
    let mut xs = Vec::new();
    for (t, x) in out.outputs {
        if t < out.t_impact - 1e-9 {
            ts.push(t);
            xs.push(x);
        }
    }
    ts.push(out.t_impact);
    xs.push(out.x_minus);
    gait.nominal_times = ts;
    gait.nominal = xs;
    gait.period = out.t_impact;
    gait.x_minus = out.x_minus;
    gait.v_ff = out.impulse;
    Ok(())
}

/// Synthesizes a periodic gait with a stabilizing touchdown gain.
pub fn synthesize_gait(p: &WalkerParams, o: &SynthesisOptions) -> Result<GaitSpec> {
    p.validate()?;
    if o.knots < 2 || !(o.knot_step > 0.0) {
        return Err(Error::InvalidParameter { name: "knots", reason: "need at least two knots and a positive step".into() });
    }
    let mut t = Transcription { p: *p, n: o.knots, h: o.knot_step, weight: 1.0, min_descent: o.min_descent, clearance: o.clearance };
    let mut z = initial_guess(p, o);
    for &w in &o.weights {
        t.weight = w;
        z = minimize(&t, z, o.max_iters)?;
    }
    let residual = t.forward(&z).violation.sqrt();
    if !(residual <= o.feasibility_tol) {
        return Err(Error::InfeasibleGait { residual });
    }

    let mut gait = provisional(p, o, &z);
    // Period guess from the transcription; refined after the polish.
    let polished = polish(&mut gait, o.polish_tol)?;
    if !(polished <= o.polish_tol.max(1e-6)) {
        return Err(Error::InfeasibleGait { residual: polished });
    }
    record_nominal(&mut gait, o.sample_dt)?;
    gait.residual = polished;

    let lin = step_jacobians(&gait.open_loop())?;
    gait.k_ds = place_on_guard(&lin, &o.poles)?;
    Ok(gait)
}
