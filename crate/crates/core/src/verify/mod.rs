//! Forward-invariance certificates for hybrid reachable tubes.
//!
//! A tube is flowed from `⟨x*, α₀, 1⟩` until it has fully crossed the guard.
//! Between the last sample fully above the guard and the first sample fully
//! below, every slice of the tube by the guard must be crossed downwards,
//! and the reset of all those slices must land back in the initial set.

mod guard;
mod slice;

pub use guard::AffineGuard;
pub use slice::{gamma_bound, gamma_terms, slice, transversality_range, GammaTerm, SlicedNormotope};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normotope::{embed_flow, embed_flow_from, EmbedOptions, EmbeddingTrajectory, Normotope};
use crate::system::HybridSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Above,
    Below,
}

/// Whether the whole set lies strictly on one side of the guard.
pub fn check_sign_condition(n: &Normotope, guard: &AffineGuard, want: Side) -> bool {
    let r = n.linear_range(guard.a(), guard.b());
    match want {
        Side::Above => r.lo() > 0.0,
        Side::Below => r.hi() < 0.0,
    }
}

/// Sample indices `(under, over)` of the verification window.
///
/// `over` is the first sample fully below the guard; `under` is the latest
/// sample fully above it before the tube center reaches the guard.
pub fn find_window(traj: &EmbeddingTrajectory, guard: &AffineGuard) -> Result<(usize, usize)> {
    let impact = traj
        .states
        .iter()
        .position(|s| guard.eval(s.center()) <= 0.0)
        .ok_or(Error::NoWindow { reason: "nominal trajectory never reaches the guard" })?;
    let under = (0..impact)
        .rev()
        .find(|&k| check_sign_condition(&traj.states[k], guard, Side::Above))
        .ok_or(Error::NoWindow { reason: "tube is never fully above the guard" })?;
    let over = (under..traj.len())
        .find(|&k| check_sign_condition(&traj.states[k], guard, Side::Below))
        .ok_or(Error::NoWindow { reason: "tube is never fully below the guard" })?;
    Ok((under, over))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditions {
    /// Fully above the guard at `T_under`.
    pub above: bool,
    /// Fully below the guard at `T_over`.
    pub below: bool,
    /// Upward crossings only, up to `T_under`.
    pub transversal_before: bool,
    /// Downward crossings only, on `[T_under, T_over]`.
    pub transversal_window: bool,
}

impl Conditions {
    pub fn all(&self) -> bool {
        self.above && self.below && self.transversal_before && self.transversal_window
    }
}

#[derive(Clone, Debug)]
pub struct VerificationResult {
    pub t_under: f64,
    pub t_over: f64,
    /// Index of `T_under` in `tube`.
    pub under_index: usize,
    /// Nonempty slices of the window samples, indexed into `window`.
    pub intersections: Vec<(usize, SlicedNormotope)>,
    pub gamma_terms: Vec<GammaTerm>,
    pub gamma: f64,
    pub conditions: Conditions,
    pub verified: bool,
    /// Tube samples from `t = 0` until fully past the guard.
    pub tube: EmbeddingTrajectory,
    /// Slice of every tube sample up to `T_under` (`None` when empty).
    pub slices: Vec<Option<SlicedNormotope>>,
    /// Samples on `[T_under, T_over]`, at a finer step when the tube would
    /// otherwise cross the guard between two samples.
    pub window: EmbeddingTrajectory,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub embed: EmbedOptions,
    /// Largest guard-normal travel of the center between window samples, as
    /// a fraction of the tube's guard-normal half-width.
    pub window_resolution: f64,
    /// Largest subdivision of the step inside the window.
    pub max_refinement: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { embed: EmbedOptions::default(), window_resolution: 0.5, max_refinement: 4096 }
    }
}

fn fully_below_after_crossing<'g>(guard: &'g AffineGuard) -> impl FnMut(usize, f64, &Normotope) -> bool + 'g {
    let mut crossed = false;
    move |_, _, n| {
        crossed |= guard.eval(n.center()) <= 0.0;
        crossed && check_sign_condition(n, guard, Side::Below)
    }
}

/// Subdivision of the embedding step needed so that the center moves at
/// most `resolution` guard-normal half-widths per sample across the window.
fn window_refinement<S: HybridSystem + ?Sized>(
    sys: &S,
    tube: &EmbeddingTrajectory,
    under: usize,
    over: usize,
    opts: &VerifyOptions,
) -> usize {
    let guard = sys.guard();
    let mut need: f64 = 1.0;
    for k in under..=over {
        let n = &tube.states[k];
        let speed = guard.a().dot(&sys.field(tube.times[k], n.center())).abs();
        let half_width = 0.5 * n.linear_range(guard.a(), guard.b()).width();
        if half_width > 0.0 {
            need = need.max(speed * tube.h / (opts.window_resolution * half_width));
        }
    }
    let m = need.ceil().min(opts.max_refinement as f64).max(1.0) as usize;
    m.next_power_of_two().min(opts.max_refinement.max(1))
}

/// Runs the full certificate for the tube starting at `⟨x*, α₀, 1⟩`.
pub fn verify_tube<S: HybridSystem + ?Sized>(
    sys: &S,
    x_star: &DVector<f64>,
    alpha0: &DMatrix<f64>,
    opts: &VerifyOptions,
) -> Result<VerificationResult> {
    let guard = sys.guard();
    let n0 = Normotope::new(x_star.clone(), alpha0.clone(), 1.0)?;
    let tube = embed_flow(&n0, sys, fully_below_after_crossing(guard), &opts.embed)?;
    let (under, over) = find_window(&tube, guard)?;

    let refine = window_refinement(sys, &tube, under, over, opts);
    let window = if refine == 1 {
        EmbeddingTrajectory {
            times: tube.times[under..=over].to_vec(),
            states: tube.states[under..=over].to_vec(),
            h: tube.h,
        }
    } else {
        let fine = EmbedOptions { h: tube.h / refine as f64, ..opts.embed };
        embed_flow_from(&tube.states[under], tube.times[under], sys, fully_below_after_crossing(guard), &fine)?
    };
    let last = window.len() - 1;

    let mut slices = Vec::with_capacity(under + 1);
    for k in 0..=under {
        slices.push(slice(&tube.states[k], guard, tube.times[k])?);
    }
    let mut conditions = Conditions {
        above: check_sign_condition(&window.states[0], guard, Side::Above),
        below: check_sign_condition(&window.states[last], guard, Side::Below),
        transversal_before: true,
        transversal_window: true,
    };
    for (k, s) in slices.iter().enumerate() {
        let Some(s) = s else { continue };
        let t = tube.times[k];
        if !(transversality_range(s, guard, |bx| sys.field_enclosure(t, bx)).lo() > 0.0) {
            conditions.transversal_before = false;
        }
    }
    let mut intersections = Vec::new();
    for k in 0..=last {
        let t = window.times[k];
        let Some(s) = slice(&window.states[k], guard, t)? else { continue };
        if !(transversality_range(&s, guard, |bx| sys.field_enclosure(t, bx)).hi() < 0.0) {
            conditions.transversal_window = false;
        }
        intersections.push((k, s));
    }

    let window_slices: Vec<SlicedNormotope> = intersections.iter().map(|(_, s)| s.clone()).collect();
    let terms = gamma_terms(
        &window_slices,
        guard,
        |x| sys.reset(x),
        |bx| sys.reset_jacobian_enclosure(bx),
        alpha0,
        x_star,
        opts.embed.corner_cap,
    )?;
    let gamma = terms.iter().map(GammaTerm::total).fold(0.0, f64::max);
    // With no sampled intersection the sampled bound says nothing.
    let verified = conditions.all() && !intersections.is_empty() && gamma <= 1.0;
    Ok(VerificationResult {
        t_under: window.times[0],
        t_over: window.times[last],
        under_index: under,
        intersections,
        gamma_terms: terms,
        gamma,
        conditions,
        verified,
        tube,
        slices,
        window,
    })
}

/// Smallest and largest scales probed by [`rescale_bisection`].
pub const SCALE_BOUNDS: (f64, f64) = (1.0 / 1048576.0, 1048576.0);

/// Finds the largest scale `s` accepted by `accept(eval(s))`, assuming
/// acceptance is monotone (accepted below some threshold).
///
/// Brackets by doubling or halving from `s = 1`, bisects to relative width
/// `s_tol`, then re-evaluates the returned scale. Evaluation errors count as
/// rejection.
pub fn rescale_bisection<R, E, A>(mut eval: E, accept: A, s_tol: f64) -> Result<(f64, R)>
where
    E: FnMut(f64) -> Result<R>,
    A: Fn(&R) -> bool,
{
    let mut ok = |s: f64| matches!(eval(s), Ok(ref r) if accept(r));
    let (mut lo, mut hi);
    if ok(1.0) {
        lo = 1.0;
        loop {
            if lo * 2.0 > SCALE_BOUNDS.1 {
                hi = lo;
                break;
            }
            if ok(lo * 2.0) {
                lo *= 2.0;
            } else {
                hi = lo * 2.0;
                break;
            }
        }
    } else {
        hi = 1.0;
        lo = 0.5;
        while !ok(lo) {
            hi = lo;
            lo *= 0.5;
            if lo < SCALE_BOUNDS.0 {
                return Err(Error::NoVerifiableScale);
            }
        }
    }
    while hi - lo > s_tol * lo {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = eval(lo)?;
    if !accept(&r) {
        return Err(Error::NoVerifiableScale);
    }
    Ok((lo, r))
}

/// [`rescale_bisection`] over [`verify_tube`] with shape `α₀ / s`.
pub fn rescale_tube<S: HybridSystem + ?Sized>(
    sys: &S,
    x_star: &DVector<f64>,
    alpha0: &DMatrix<f64>,
    s_tol: f64,
    opts: &VerifyOptions,
) -> Result<(f64, VerificationResult)> {
    rescale_bisection(|s| verify_tube(sys, x_star, &(alpha0 / s), opts), |r| r.verified, s_tol)
}
