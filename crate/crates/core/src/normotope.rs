//! ℓ2 normotopes `{x : ‖α(x − x̊)‖₂ ≤ y}` and their embedding flow.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Interval, DEFAULT_CORNER_CAP};
use crate::linalg::{checked_inverse, lognorm2, rcond, specnorm2, RCOND_MIN};
use crate::linclusion::{build_inclusion, DerivativeEnclosure, FnEnclosure, InclusionForm, LinearInclusion};
use crate::system::FlowSystem;

/// Relative slack used by membership tests (four ulps).
const SLACK: f64 = 4.0 * f64::EPSILON;

#[derive(Clone, Debug)]
pub struct Normotope {
    center: DVector<f64>,
    shape: DMatrix<f64>,
    shape_inv: DMatrix<f64>,
    offset: f64,
}

impl Normotope {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>, offset: f64) -> Result<Self> {
        let n = center.len();
        if shape.nrows() != n || shape.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: shape.nrows() });
        }
        if !(offset > 0.0 && offset.is_finite()) {
            return Err(Error::InvalidParameter { name: "offset", reason: format!("must be positive, got {offset}") });
        }
        if !center.iter().chain(shape.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "normotope" });
        }
        let shape_inv = checked_inverse(&shape)?;
        Ok(Self { center, shape, shape_inv, offset })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }
    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }
    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }
    pub fn shape_inv(&self) -> &DMatrix<f64> {
        &self.shape_inv
    }
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `‖α(x − x̊)‖₂`.
    pub fn norm_of(&self, x: &DVector<f64>) -> f64 {
        (&self.shape * (x - &self.center)).norm()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.norm_of(x) <= self.offset * (1.0 + SLACK)
    }

    /// Range of `aᵀx + b` over the set (exact for the ℓ2 ball).
    pub fn linear_range(&self, a: &DVector<f64>, b: f64) -> Interval {
        let mid = a.dot(&self.center) + b;
        let rad = self.offset * (self.shape_inv.transpose() * a).norm();
        Interval::centered(mid, rad * (1.0 + SLACK))
    }

    /// Tight axis-aligned box: component `i` spans `x̊_i ± y‖α⁻ᵀe_i‖₂`.
    pub fn bounding_box(&self) -> Vec<Interval> {
        (0..self.dim())
            .map(|i| {
                let rad = self.offset * self.shape_inv.row(i).norm();
                Interval::centered(self.center[i], rad * (1.0 + SLACK))
            })
            .collect()
    }

    /// Same center and offset, shape divided by `s` (a tube `s` times larger).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.center.clone(), &self.shape / s, self.offset)
    }

    /// Point on the boundary in direction `u` of the unit sphere.
    pub fn boundary_point(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.center + &self.shape_inv * (u * (self.offset / u.norm()))
    }
}

/// Growth rate `max_i μ₂(α(M_i − D)α⁻¹)` over the matrices of an inclusion.
pub fn growth_rate(alpha: &DMatrix<f64>, alpha_inv: &DMatrix<f64>, df: &DMatrix<f64>, inclusion: &LinearInclusion) -> f64 {
    match &inclusion.form {
        InclusionForm::Corners(corners) => corners
            .iter()
            .map(|m| lognorm2(&(alpha * (m - df) * alpha_inv)))
            .fold(f64::NEG_INFINITY, f64::max),
        InclusionForm::CenterRadius { center, radius } => {
            lognorm2(&(alpha * (center - df) * alpha_inv)) + specnorm2(alpha) * specnorm2(radius) * specnorm2(alpha_inv)
        }
    }
}

/// One Euler step of the embedding system.
pub fn embed_step(
    n: &Normotope,
    f_center: &DVector<f64>,
    df: &DMatrix<f64>,
    inclusion: &LinearInclusion,
    h: f64,
) -> Result<Normotope> {
    let mu = growth_rate(&n.shape, &n.shape_inv, df, inclusion);
    let center = &n.center + f_center * h;
    let shape = &n.shape - (&n.shape * df) * h;
    let offset = n.offset * (1.0 + h * mu);
    if !(offset > 0.0) || rcond(&shape) < RCOND_MIN {
        return Err(Error::StepTooLarge { step: 0 });
    }
    Normotope::new(center, shape, offset).map_err(|e| match e {
        Error::SingularShape { .. } => Error::StepTooLarge { step: 0 },
        other => other,
    })
}

/// Integration scheme for the embedding system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedScheme {
    /// Explicit Euler on `(x̊, α, y)`.
    Euler,
    /// Classical Runge–Kutta on `(x̊, α)`; `y` grows by `exp(h μ)` with the
    /// larger of the rates at the two ends of the step.
    Rk4,
}

/// One Runge–Kutta step of the center/shape pair with exponential offset
/// growth. The rate is taken as the larger of its values at both ends,
/// each from the inclusion `inclusion_at(center)` around that end's center.
pub fn embed_step_rk4<S, I>(sys: &S, n: &Normotope, t: f64, inclusion_at: I, h: f64) -> Result<Normotope>
where
    S: FlowSystem + ?Sized,
    I: Fn(&DVector<f64>) -> Result<LinearInclusion>,
{
    let deriv = |tt: f64, x: &DVector<f64>, a: &DMatrix<f64>| (sys.field(tt, x), -(a * sys.jacobian(tt, x)));
    let (x0, a0) = (&n.center, &n.shape);
    let (k1x, k1a) = deriv(t, x0, a0);
    let (k2x, k2a) = deriv(t + 0.5 * h, &(x0 + &k1x * (0.5 * h)), &(a0 + &k1a * (0.5 * h)));
    let (k3x, k3a) = deriv(t + 0.5 * h, &(x0 + &k2x * (0.5 * h)), &(a0 + &k2a * (0.5 * h)));
    let (k4x, k4a) = deriv(t + h, &(x0 + &k3x * h), &(a0 + &k3a * h));
    let center = x0 + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
    let shape = a0 + (k1a + k2a * 2.0 + k3a * 2.0 + k4a) * (h / 6.0);
    if rcond(&shape) < RCOND_MIN {
        return Err(Error::StepTooLarge { step: 0 });
    }
    let shape_inv = checked_inverse(&shape).map_err(|_| Error::StepTooLarge { step: 0 })?;
    let mu0 = growth_rate(a0, &n.shape_inv, &sys.jacobian(t, x0), &inclusion_at(x0)?);
    let mu1 = growth_rate(&shape, &shape_inv, &sys.jacobian(t + h, &center), &inclusion_at(&center)?);
    let offset = n.offset * (h * mu0.max(mu1)).exp();
    Normotope::new(center, shape, offset).map_err(|e| match e {
        Error::SingularShape { .. } => Error::StepTooLarge { step: 0 },
        other => other,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedOptions {
    pub scheme: EmbedScheme,
    /// Output step.
    pub h: f64,
    pub max_steps: usize,
    pub corner_cap: usize,
    /// Relative enlargement of the bounding box used as the LDI domain.
    pub inflation: f64,
    /// Doublings of the inflation before the step is split.
    pub max_inflations: u32,
    /// Times a step may be halved before giving up.
    pub max_halvings: u32,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            scheme: EmbedScheme::Rk4,
            h: 1e-3,
            max_steps: 20_000,
            corner_cap: DEFAULT_CORNER_CAP,
            inflation: 0.1,
            max_inflations: 3,
            max_halvings: 6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmbeddingTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Normotope>,
    pub h: f64,
}

impl EmbeddingTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
    /// Index of the sample nearest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let k = ((t - self.times[0]) / self.h).round();
        (k.max(0.0) as usize).min(self.states.len() - 1)
    }
}

fn certified_step<S: FlowSystem + ?Sized>(
    sys: &S,
    n: &Normotope,
    t: f64,
    h: f64,
    opts: &EmbedOptions,
    depth: u32,
) -> Result<Normotope> {
    let f0 = sys.field(t, &n.center);
    let df = sys.jacobian(t, &n.center);
    let bb = n.bounding_box();
    // The error dynamics around the moving center only need an inclusion
    // over the set at each instant, so the box travels with the center. Its
    // half-widths allow for first-order growth over the step.
    let rad = DVector::from_iterator(bb.len(), bb.iter().map(|iv| iv.rad()));
    let grown = &rad + df.abs() * &rad * h;
    let enclosure = FnEnclosure::new(sys.dim(), sys.dim(), |bx: &[Interval]| sys.jacobian_enclosure(t, bx));
    let enclosure_end = FnEnclosure::new(sys.dim(), sys.dim(), |bx: &[Interval]| sys.jacobian_enclosure(t + h, bx));
    let mut inflation = opts.inflation;
    for _ in 0..=opts.max_inflations {
        let half = &grown * (1.0 + inflation);
        let around = |c: &DVector<f64>| -> Vec<Interval> {
            c.iter().zip(half.iter()).map(|(ci, ri)| Interval::centered(*ci, *ri)).collect()
        };
        let next = match opts.scheme {
            EmbedScheme::Euler => {
                let inclusion = build_inclusion(&enclosure, &around(&n.center), &n.center, opts.corner_cap)?;
                embed_step(n, &f0, &df, &inclusion, h)?
            }
            EmbedScheme::Rk4 => {
                let at = |c: &DVector<f64>| {
                    let e: &dyn DerivativeEnclosure = if c == &n.center { &enclosure } else { &enclosure_end };
                    build_inclusion(e, &around(c), c, opts.corner_cap)
                };
                embed_step_rk4(sys, n, t, at, h)?
            }
        };
        if next.bounding_box().iter().zip(&around(&next.center)).all(|(a, b)| a.is_subset_of(b)) {
            return Ok(next);
        }
        inflation *= 2.0;
    }
    if depth >= opts.max_halvings {
        return Err(Error::DomainViolation { step: 0 });
    }
    let half = certified_step(sys, n, t, 0.5 * h, opts, depth + 1)?;
    certified_step(sys, &half, t + 0.5 * h, 0.5 * h, opts, depth + 1)
}

/// Integrates the embedding system from `n0` with uniform output step
/// `opts.h` until `stop(index, t, set)` fires.
///
/// Each step builds its linear inclusions over inflated boxes around the
/// centers at both ends of the step and
/// checks that the stepped set stays inside it; failing that, the
/// inflation is doubled and finally the step is split in halves.
pub fn embed_flow<S, P>(n0: &Normotope, sys: &S, stop: P, opts: &EmbedOptions) -> Result<EmbeddingTrajectory>
where
    S: FlowSystem + ?Sized,
    P: FnMut(usize, f64, &Normotope) -> bool,
{
    embed_flow_from(n0, 0.0, sys, stop, opts)
}

/// [`embed_flow`] starting at time `t0`; sample `k` is at `t0 + k·h`.
pub fn embed_flow_from<S, P>(n0: &Normotope, t0: f64, sys: &S, mut stop: P, opts: &EmbedOptions) -> Result<EmbeddingTrajectory>
where
    S: FlowSystem + ?Sized,
    P: FnMut(usize, f64, &Normotope) -> bool,
{
    let mut times = vec![t0];
    let mut states = vec![n0.clone()];
    if stop(0, t0, n0) {
        return Ok(EmbeddingTrajectory { times, states, h: opts.h });
    }
    for k in 1..=opts.max_steps {
        let t = t0 + (k - 1) as f64 * opts.h;
        let next = certified_step(sys, &states[k - 1], t, opts.h, opts, 0).map_err(|e| match e {
            Error::StepTooLarge { .. } => Error::StepTooLarge { step: k },
            Error::DomainViolation { .. } => Error::DomainViolation { step: k },
            other => other,
        })?;
        let tk = t0 + k as f64 * opts.h;
        let done = stop(k, tk, &next);
        times.push(tk);
        states.push(next);
        if done {
            return Ok(EmbeddingTrajectory { times, states, h: opts.h });
        }
    }
    Err(Error::MaxSteps { steps: opts.max_steps })
}
