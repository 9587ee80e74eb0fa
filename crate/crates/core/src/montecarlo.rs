//! Monte Carlo falsification of certified tubes.
//!
//! Trajectories start on the boundary of the initial normotope and are
//! simulated for a number of touchdowns. At every tube sample time before
//! touchdown the state must lie in the tube sample for that time; each
//! post-touchdown state must lie in the initial set.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gait::{simulate_step, ClosedLoopWalker};
use crate::normotope::Normotope;
use crate::ode::OdeOptions;
use crate::verify::VerificationResult;

/// Relative slack on tube membership, matching the embedding tolerance.
pub const MEMBERSHIP_SLACK: f64 = 1e-6;

/// The sampled tube region: normotopes at increasing times since touchdown.
#[derive(Clone, Debug)]
pub struct TubeRegion {
    pub times: Vec<f64>,
    pub states: Vec<Normotope>,
}

impl TubeRegion {
    /// Coarse samples up to the window, then the (possibly refined) window.
    pub fn from_result(r: &VerificationResult) -> Self {
        let k = r.under_index;
        let mut times = r.tube.times[..k].to_vec();
        let mut states = r.tube.states[..k].to_vec();
        times.extend_from_slice(&r.window.times);
        states.extend(r.window.states.iter().cloned());
        Self { times, states }
    }

    /// Every sample with its offset multiplied by `factor`.
    pub fn inflated(&self, factor: f64) -> Result<Self> {
        let states = self.states.iter().map(|n| n.scaled(factor)).collect::<Result<_>>()?;
        Ok(Self { times: self.times.clone(), states })
    }

    pub fn initial(&self) -> &Normotope {
        &self.states[0]
    }
}

fn inside(n: &Normotope, x: &DVector<f64>) -> bool {
    n.norm_of(x) <= n.offset() * (1.0 + MEMBERSHIP_SLACK)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub start: Vec<f64>,
    /// Touchdowns completed before stopping.
    pub crossings: usize,
    /// `(crossing, time since touchdown)` of the first escape.
    pub escape: Option<(usize, f64)>,
    /// Largest `‖α(F(x) − x*)‖₂` over completed steps.
    pub max_post_norm: f64,
    /// Simulation failure, if any.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub n_traj: usize,
    pub n_crossings: usize,
    pub seed: u64,
    pub escapes: usize,
    pub failures: usize,
    pub max_post_norm: f64,
    pub trajectories: Vec<TrajectoryRecord>,
}

/// Uniform samples on the boundary of `n` (normalized Gaussians mapped
/// through the inverse shape).
pub fn boundary_samples(n: &Normotope, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let u: DVector<f64> = DVector::from_fn(n.dim(), |_, _| StandardNormal.sample(&mut rng));
            let norm = u.norm();
            if norm > 0.0 {
                break n.boundary_point(&(u / norm));
            }
        })
        .collect()
}

fn run_one(
    sys: &ClosedLoopWalker,
    region: &TubeRegion,
    x_star: &DVector<f64>,
    index: usize,
    start: &DVector<f64>,
    n_crossings: usize,
    opts: &OdeOptions,
) -> TrajectoryRecord {
    let initial = region.initial();
    let mut rec = TrajectoryRecord {
        index,
        start: start.iter().copied().collect(),
        crossings: 0,
        escape: None,
        max_post_norm: 0.0,
        failure: None,
    };
    let mut x = [start[0], start[1], start[2], start[3]];
    for c in 0..n_crossings {
        let out = match simulate_step(sys, &x, &region.times, opts) {
            Ok(o) => o,
            Err(e) => {
                rec.failure = Some(e.to_string());
                return rec;
            }
        };
        // One output per sample time reached before touchdown, in order.
        for (k, (t, xs)) in out.outputs.iter().enumerate() {
            if rec.escape.is_none() && !inside(&region.states[k], &DVector::from_row_slice(xs)) {
                rec.escape = Some((c, *t));
            }
        }
        let xp = DVector::from_row_slice(&out.x_plus);
        let post = (initial.shape() * (&xp - x_star)).norm();
        rec.max_post_norm = rec.max_post_norm.max(post);
        if rec.escape.is_none() && !inside(initial, &xp) {
            rec.escape = Some((c + 1, 0.0));
        }
        rec.crossings = c + 1;
        x = out.x_plus;
    }
    rec
}

/// Simulates `n_traj` trajectories from the boundary of the region's
/// initial set for `n_crossings` steps each.
pub fn monte_carlo(
    sys: &ClosedLoopWalker,
    region: &TubeRegion,
    x_star: &DVector<f64>,
    n_traj: usize,
    n_crossings: usize,
    seed: u64,
    opts: &OdeOptions,
) -> MonteCarloReport {
    let starts = boundary_samples(region.initial(), n_traj, seed);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(n_traj.max(1));
    let chunk = n_traj.div_ceil(workers).max(1);
    let run = |offset: usize, xs: &[DVector<f64>]| -> Vec<TrajectoryRecord> {
        xs.iter()
            .enumerate()
            .map(|(i, x0)| run_one(sys, region, x_star, offset + i, x0, n_crossings, opts))
            .collect()
    };
    let mut trajectories: Vec<TrajectoryRecord> = if workers <= 1 {
        run(0, &starts)
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> =
                starts.chunks(chunk).enumerate().map(|(ci, xs)| s.spawn(move || run(ci * chunk, xs))).collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
        })
    };
    trajectories.sort_by_key(|r| r.index);
    MonteCarloReport {
        n_traj,
        n_crossings,
        seed,
        escapes: trajectories.iter().filter(|r| r.escape.is_some()).count(),
        failures: trajectories.iter().filter(|r| r.failure.is_some()).count(),
        max_post_norm: trajectories.iter().map(|r| r.max_post_norm).fold(0.0, f64::max),
        trajectories,
    }
}

/// Samples `count` points uniformly in the window slices and returns the
/// largest ratio `‖α₀(Δ(x) − x*)‖ / γ_slice` observed; above one means the
/// per-slice bound was violated.
pub fn gamma_soundness(
    sys: &ClosedLoopWalker,
    r: &VerificationResult,
    alpha0: &DMatrix<f64>,
    x_star: &DVector<f64>,
    count: usize,
    seed: u64,
) -> (usize, f64) {
    use crate::system::HybridSystem;
    let guard = sys.guard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slices = &r.intersections;
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    if slices.is_empty() {
        return (0, 0.0);
    }
    for i in 0..count {
        let (_, s) = &slices[i % slices.len()];
        let bound = r.gamma_terms[i % slices.len()].total();
        let d = s.center.len();
        let u: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let rho: f64 = rand::Rng::gen::<f64>(&mut rng).powf(1.0 / d as f64);
        let z = &s.center + &s.r_inv * (u.normalize() * (s.radius * rho));
        let x = guard.embed(&z);
        let v = (alpha0 * (sys.reset(&x) - x_star)).norm();
        let ratio = if bound > 0.0 { v / bound } else if v == 0.0 { 0.0 } else { f64::INFINITY };
        if v > bound * (1.0 + 1e-9) + 1e-12 {
            violations += 1;
        }
        worst = worst.max(ratio);
    }
    (violations, worst)
}
