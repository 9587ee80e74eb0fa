use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::AffineGuard;
use crate::error::{Error, Result};
use crate::interval::{real_matvec, Interval, IntervalMatrix};
use crate::linalg::{rcond, specnorm2};
use crate::linclusion::{build_inclusion, DerivativeEnclosure, InclusionForm};
use crate::normotope::Normotope;

/// Intersection of a normotope with a guard, in guard coordinates:
/// `{B z + x' : ‖R(z − z̊)‖₂ ≤ radius}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlicedNormotope {
    pub center: DVector<f64>,
    pub r: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
    pub radius: f64,
    pub slack: f64,
    pub time: f64,
}

impl SlicedNormotope {
    /// Half-widths of the axis box around the slice in `z` coordinates.
    pub fn z_box(&self) -> Vec<Interval> {
        (0..self.center.len())
            .map(|i| Interval::centered(self.center[i], self.radius * self.r_inv.row(i).norm() * (1.0 + 1e-12)))
            .collect()
    }

    /// Axis box around the slice embedded in state space.
    pub fn x_box(&self, guard: &AffineGuard) -> Vec<Interval> {
        let br = guard.basis() * &self.r_inv;
        let c = guard.embed(&self.center);
        (0..c.len())
            .map(|i| Interval::centered(c[i], self.radius * br.row(i).norm() * (1.0 + 1e-12)))
            .collect()
    }

    /// Whether `z` lies in the slice, with relative slack `tol`.
    pub fn contains_z(&self, z: &DVector<f64>, tol: f64) -> bool {
        (&self.r * (z - &self.center)).norm() <= self.radius * (1.0 + tol) + tol
    }
}

/// Slices `n` with the guard. `Ok(None)` means the intersection is empty.
pub fn slice(n: &Normotope, guard: &AffineGuard, time: f64) -> Result<Option<SlicedNormotope>> {
    let ab = n.shape() * guard.basis();
    let qr = ab.qr();
    let q = qr.q();
    let r = qr.r();
    if r.ncols() == 0 || rcond(&r) < 1e-12 {
        return Err(Error::DegenerateSlice);
    }
    let d = n.shape() * (n.center() - guard.anchor());
    let qd = q.transpose() * &d;
    let r_inv = r.clone().try_inverse().ok_or(Error::DegenerateSlice)?;
    let center = &r_inv * &qd;
    let slack = d.norm_squared() - qd.norm_squared();
    let y2 = n.offset() * n.offset();
    if y2 < slack {
        return Ok(None);
    }
    Ok(Some(SlicedNormotope { center, r, r_inv, radius: (y2 - slack).sqrt(), slack, time }))
}

/// Enclosure of `ḣ = aᵀf` over the slice.
pub fn transversality_range<F>(s: &SlicedNormotope, guard: &AffineGuard, field_enclosure: F) -> Interval
where
    F: Fn(&[Interval]) -> Vec<Interval>,
{
    let fx = field_enclosure(&s.x_box(guard));
    guard
        .a()
        .iter()
        .zip(fx)
        .fold(Interval::point(0.0), |acc, (ai, fi)| acc + fi * *ai)
}

/// The reset expressed on guard coordinates, `z ↦ Δ(Bz + x')`, with its
/// Jacobian enclosure `DΔ(BZ + x')·B`.
struct SlicedReset<'a, J> {
    guard: &'a AffineGuard,
    reset_jacobian: &'a J,
    outputs: usize,
}

impl<J: Fn(&[Interval]) -> IntervalMatrix> DerivativeEnclosure for SlicedReset<'_, J> {
    fn nrows(&self) -> usize {
        self.outputs
    }
    fn ncols(&self) -> usize {
        self.guard.basis().ncols()
    }
    fn jacobian(&self, zbox: &[Interval]) -> IntervalMatrix {
        let xbox: Vec<Interval> = real_matvec(self.guard.basis(), zbox)
            .expect("basis matches guard coordinates")
            .into_iter()
            .zip(self.guard.anchor().iter())
            .map(|(v, a)| v + *a)
            .collect();
        (self.reset_jacobian)(&xbox)
            .mul_real(self.guard.basis())
            .expect("reset Jacobian matches state dimension")
    }
}

/// Per-slice terms of the post-reset bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaTerm {
    pub time: f64,
    /// `‖α₀(Δ(x̊_slice) − x*)‖₂`.
    pub center_term: f64,
    /// `max_j ‖α₀ M_j R⁻¹‖ · radius`.
    pub spread_term: f64,
}

impl GammaTerm {
    pub fn total(&self) -> f64 {
        self.center_term + self.spread_term
    }
}

/// Bound on `‖α₀(Δ(x) − x*)‖₂` over each slice; `γ` is the largest total.
pub fn gamma_terms<R, J>(
    slices: &[SlicedNormotope],
    guard: &AffineGuard,
    reset: R,
    reset_jacobian: J,
    alpha0: &DMatrix<f64>,
    x_star: &DVector<f64>,
    cap: usize,
) -> Result<Vec<GammaTerm>>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&[Interval]) -> IntervalMatrix,
{
    let enclosure = SlicedReset { guard, reset_jacobian: &reset_jacobian, outputs: x_star.len() };
    let mut out = Vec::with_capacity(slices.len());
    for s in slices {
        let image = reset(&guard.embed(&s.center));
        let center_term = (alpha0 * (image - x_star)).norm();
        let spread = if s.radius == 0.0 {
            0.0
        } else {
            let inc = build_inclusion(&enclosure, &s.z_box(), &s.center, cap)?;
            let gain = match &inc.form {
                InclusionForm::Corners(ms) => ms
                    .iter()
                    .map(|m| specnorm2(&(alpha0 * m * &s.r_inv)))
                    .fold(0.0, f64::max),
                InclusionForm::CenterRadius { center, radius } => {
                    specnorm2(&(alpha0 * center * &s.r_inv)) + specnorm2(alpha0) * specnorm2(radius) * specnorm2(&s.r_inv)
                }
            };
            gain * s.radius
        };
        if !(center_term.is_finite() && spread.is_finite()) {
            return Err(Error::NonFinite { context: "reset gain bound" });
        }
        out.push(GammaTerm { time: s.time, center_term, spread_term: spread });
    }
    Ok(out)
}

/// `γ = sup_t max_j (‖α₀(Δ(z̊) − x*)‖ + ‖α₀ M_j R⁻¹‖·√(y² − r))`.
pub fn gamma_bound<R, J>(
    slices: &[SlicedNormotope],
    guard: &AffineGuard,
    reset: R,
    reset_jacobian: J,
    alpha0: &DMatrix<f64>,
    x_star: &DVector<f64>,
    cap: usize,
) -> Result<f64>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&[Interval]) -> IntervalMatrix,
{
    Ok(gamma_terms(slices, guard, reset, reset_jacobian, alpha0, x_star, cap)?
        .iter()
        .map(GammaTerm::total)
        .fold(0.0, f64::max))
}
