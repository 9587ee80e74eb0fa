//! Touchdown pole placement, contraction shapes and tracking-gain design.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::sim::{closed_loop_step_jacobian, step_jacobians, StepLinearization};
use super::{to_vec, GaitSpec};
use crate::error::{Error, Result};
use crate::linalg::{lambda_min_sym, poly_from_roots, spectral_radius, sym_sqrt};
use crate::verify::{rescale_tube, verify_tube, VerificationResult, VerifyOptions};

/// Single-input pole placement by Ackermann's formula. Returns the row `K`
/// with `eig(A + bK) = poles`.
pub fn pole_placement(a: &DMatrix<f64>, b: &DVector<f64>, poles: &[f64]) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n || poles.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: poles.len().min(b.len()) });
    }
    let mut ctrb = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for j in 0..n {
        ctrb.set_column(j, &col);
        col = a * col;
    }
    let sv = ctrb.clone().svd(false, false).singular_values;
    if !(sv.min() > 1e-10) {
        return Err(Error::Uncontrollable);
    }
    // p(A) = Aⁿ + c₁Aⁿ⁻¹ + … + cₙI, by Horner.
    let coeffs = poly_from_roots(poles);
    let mut pa = DMatrix::zeros(n, n);
    for c in &coeffs {
        pa = &pa * a + DMatrix::identity(n, n) * *c;
    }
    let mut en = DMatrix::zeros(1, n);
    en[(0, n - 1)] = 1.0;
    let inv = ctrb.try_inverse().ok_or(Error::Uncontrollable)?;
    Ok(-(en * inv * pa))
}

/// Places the touchdown gain on the touchdown surface (where the pre-impact
/// state lives), giving the pre-to-pre map the spectrum `{0} ∪ poles`.
pub fn place_on_guard(lin: &StepLinearization, poles: &[f64; 3]) -> Result<[f64; 4]> {
    let kz = pole_placement(&lin.a_z, &lin.b_z, poles)?;
    let k = kz * lin.basis.transpose();
    Ok([k[(0, 0)], k[(0, 1)], k[(0, 2)], k[(0, 3)]])
}

/// The gait with its touchdown gain re-placed for `poles`.
pub fn with_poles(gait: &GaitSpec, poles: &[f64; 3]) -> Result<GaitSpec> {
    let lin = step_jacobians(&gait.open_loop())?;
    Ok(GaitSpec { k_ds: place_on_guard(&lin, poles)?, ..gait.clone() })
}

/// `α₀` for the closed loop with tracking gain `k_track`, from the step
/// Jacobian at the fixed point.
pub fn baseline_shape(gait: &GaitSpec, k_track: [f64; 4], eps: f64) -> Result<DMatrix<f64>> {
    let df = closed_loop_step_jacobian(&gait.closed_loop(k_track), &gait.x_star)?;
    initial_shape(&df, eps)
}

/// Default `ε` for [`initial_shape`]. Small margins give badly conditioned
/// shapes when the step matrix is far from normal.
pub const DEFAULT_SHAPE_MARGIN: f64 = 0.3;

/// Contraction shape for a stable step matrix: `P = Σ (Aᵀ/b)ᵏ (A/b)ᵏ` with
/// `b = ρ(A) + ε`, scaled so `λ_min(P) = 1`, and `α₀ = P^{1/2}`.
pub fn initial_shape(a_cl: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    let rho = spectral_radius(a_cl);
    if !(rho < 1.0) {
        return Err(Error::SpectralRadiusTooLarge { rho });
    }
    let b = rho + eps;
    let n = a_cl.nrows();
    let ab = a_cl / b;
    let mut term = DMatrix::identity(n, n);
    let mut p = term.clone();
    let mut power = DMatrix::identity(n, n);
    for _ in 0..1_000_000 {
        power = &ab * power;
        term = power.transpose() * &power;
        p += &term;
        if term.norm() < 1e-14 {
            break;
        }
    }
    if !(term.norm() < 1e-14) || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::SpectralRadiusTooLarge { rho });
    }
    let p = (&p + p.transpose()) * 0.5;
    let p = &p / lambda_min_sym(&p);
    Ok(sym_sqrt(&p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignOptions {
    pub eta: f64,
    pub n_grad: usize,
    pub s_min: f64,
    pub s_tol: f64,
    /// Per-entry central-difference step, and the step used to cross-check it.
    pub fd_step: f64,
    pub fd_check_step: f64,
    pub fd_rel_tol: f64,
    /// Consecutive increases that trigger halving `η`, and how many halvings
    /// are allowed.
    pub patience: usize,
    pub max_halvings: usize,
    pub max_rounds: usize,
    pub verify: VerifyOptions,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            eta: 0.5,
            n_grad: 20,
            s_min: 1.01,
            s_tol: 1e-3,
            fd_step: 1e-4,
            fd_check_step: 2e-4,
            fd_rel_tol: 1e-3,
            patience: 5,
            max_halvings: 4,
            max_rounds: 30,
            verify: VerifyOptions::default(),
        }
    }
}

/// Consistency of one finite-difference gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub gradient: [f64; 4],
    /// Relative deviation between the two step sizes.
    pub deviation: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DesignHistory {
    /// `Φ′` after every accepted inner step (first entry: start of a round).
    pub phi: Vec<f64>,
    /// Gain after every accepted inner step.
    pub gains: Vec<[f64; 4]>,
    pub checks: Vec<GradientCheck>,
    /// Rescale factor at the end of each round.
    pub scales: Vec<f64>,
    /// Index into `phi` where each round starts.
    pub round_starts: Vec<usize>,
}

impl DesignHistory {
    /// `Φ′` values of each round, in order.
    pub fn rounds(&self) -> impl Iterator<Item = &[f64]> {
        let ends = self.round_starts.iter().skip(1).copied().chain(std::iter::once(self.phi.len()));
        self.round_starts.iter().zip(ends).map(|(&a, b)| &self.phi[a..b])
    }
}

#[derive(Clone, Debug)]
pub struct DesignOutcome {
    pub k_track: [f64; 4],
    pub alpha: DMatrix<f64>,
    /// Rescale of `α₀` with no tracking.
    pub baseline_scale: f64,
    /// Product of the rescale factors after the baseline.
    pub enlargement: f64,
    pub history: DesignHistory,
    pub baseline: VerificationResult,
    pub result: VerificationResult,
}

/// `Φ′(K)`: the reset bound γ of the tube at the current shape when the
/// crossing conditions hold, `∞` otherwise.
fn objective(gait: &GaitSpec, k: [f64; 4], alpha: &DMatrix<f64>, opts: &VerifyOptions) -> f64 {
    let sys = gait.closed_loop(k);
    match verify_tube(&sys, &to_vec(&gait.x_star), alpha, opts) {
        Ok(r) if r.conditions.all() && !r.intersections.is_empty() && r.gamma.is_finite() => r.gamma,
        _ => f64::INFINITY,
    }
}

fn fd_gradient(gait: &GaitSpec, k: [f64; 4], alpha: &DMatrix<f64>, step: f64, opts: &VerifyOptions) -> [f64; 4] {
    let mut probes = Vec::with_capacity(8);
    for j in 0..4 {
        for sign in [1.0, -1.0] {
            let mut kk = k;
            kk[j] += sign * step;
            probes.push(kk);
        }
    }
    let values: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = probes.iter().map(|kk| s.spawn(move || objective(gait, *kk, alpha, opts))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or(f64::INFINITY)).collect()
    });
    std::array::from_fn(|j| (values[2 * j] - values[2 * j + 1]) / (2.0 * step))
}

fn relative_deviation(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let d = (0..4).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else if d.is_finite() {
        d / scale
    } else {
        f64::INFINITY
    }
}

/// Central-difference gradient and its relative deviation from the
/// gradient at the check step.
fn consistent_gradient(gait: &GaitSpec, k: [f64; 4], alpha: &DMatrix<f64>, o: &DesignOptions) -> ([f64; 4], f64) {
    let g1 = fd_gradient(gait, k, alpha, o.fd_step, &o.verify);
    let g2 = fd_gradient(gait, k, alpha, o.fd_check_step, &o.verify);
    (g1, relative_deviation(&g1, &g2))
}

/// Gradient descent on `Φ′` over the tracking gain, alternated with
/// rescaling the certified tube, until a round enlarges it by at most
/// `s_min`. The touchdown gain stays fixed.
pub fn design_tracking_gain(gait: &GaitSpec, alpha0: &DMatrix<f64>, o: &DesignOptions) -> Result<DesignOutcome> {
    if !(o.eta > 0.0 && o.s_min >= 1.0 && o.fd_step > 0.0 && o.fd_check_step > 0.0) {
        return Err(Error::InvalidParameter { name: "design", reason: "eta, fd steps must be positive and s_min ≥ 1".into() });
    }
    let x_star = to_vec(&gait.x_star);
    let (s0, baseline) = rescale_tube(&gait.closed_loop([0.0; 4]), &x_star, alpha0, o.s_tol, &o.verify)?;
    let mut alpha = alpha0 / s0;
    let mut k = [0.0; 4];
    let mut enlargement = 1.0;
    let mut history = DesignHistory::default();
    let mut last = baseline.clone();

    for _ in 0..o.max_rounds {
        let mut phi = objective(gait, k, &alpha, &o.verify);
        history.round_starts.push(history.phi.len());
        history.phi.push(phi);
        history.gains.push(k);
        // Step size and its halvings are per round: each rescale changes
        // the scale of Φ′ around the new shape.
        let mut eta = o.eta;
        let mut halvings = 0;
        let mut rejections = 0;
        let mut cached: Option<([f64; 4], f64)> = None;
        for _ in 0..o.n_grad {
            let (g1, deviation) = *cached.get_or_insert_with(|| consistent_gradient(gait, k, &alpha, o));
            if !(deviation <= o.fd_rel_tol && g1.iter().all(|v| v.is_finite())) {
                // A kink at K; the objective is deterministic, so retrying
                // here cannot help. End the round.
                history.checks.push(GradientCheck { gradient: g1, deviation, accepted: false });
                break;
            }
            if g1.iter().all(|v| *v == 0.0) {
                break;
            }
            let shrink = 0.5f64.powi(rejections as i32);
            let cand: [f64; 4] = std::array::from_fn(|i| k[i] - eta * shrink * g1[i]);
            let phi_c = objective(gait, cand, &alpha, &o.verify);
            let accepted = phi_c <= phi;
            history.checks.push(GradientCheck { gradient: g1, deviation, accepted });
            if accepted {
                k = cand;
                phi = phi_c;
                rejections = 0;
                cached = None;
                history.phi.push(phi);
                history.gains.push(k);
            } else {
                rejections += 1;
                if rejections >= o.patience {
                    rejections = 0;
                    eta *= 0.5;
                    halvings += 1;
                    if halvings > o.max_halvings {
                        return Err(Error::DivergentDescent { halvings });
                    }
                }
            }
        }
        let (s, r) = rescale_tube(&gait.closed_loop(k), &x_star, &alpha, o.s_tol, &o.verify)?;
        history.scales.push(s);
        alpha /= s;
        enlargement *= s;
        last = r;
        if s <= o.s_min {
            break;
        }
    }
    Ok(DesignOutcome { k_track: k, alpha, baseline_scale: s0, enlargement, history, baseline, result: last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_placement() {
        let k = pole_placement(&DMatrix::from_element(1, 1, 0.5), &DVector::from_element(1, 1.0), &[0.2]).unwrap();
        assert_abs_diff_eq!(k[(0, 0)], -0.3, epsilon = 1e-14);
        assert!(matches!(
            pole_placement(&DMatrix::from_element(1, 1, 0.5), &DVector::zeros(1), &[0.2]),
            Err(Error::Uncontrollable)
        ));
    }

    #[test]
    fn placement_hits_requested_spectrum() {
        let a = DMatrix::from_row_slice(3, 3, &[1.1, 0.3, 0.0, -0.2, 0.7, 0.4, 0.5, 0.0, 0.9]);
        let b = DVector::from_vec(vec![0.0, 1.0, 0.5]);
        let poles = [0.1, 0.2, 0.3];
        let k = pole_placement(&a, &b, &poles).unwrap();
        let cl = &a + &b * &k;
        let mut ev: Vec<f64> = cl.complex_eigenvalues().iter().map(|z| z.re).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (e, p) in ev.iter().zip(poles) {
            assert_abs_diff_eq!(*e, p, epsilon = 1e-8);
        }
    }

    #[test]
    fn shapes_of_trivial_steps() {
        let z = initial_shape(&DMatrix::zeros(3, 3), 1e-3).unwrap();
        assert_abs_diff_eq!(z, DMatrix::identity(3, 3), epsilon = 1e-14);
        let h = initial_shape(&(DMatrix::identity(2, 2) * 0.5), 0.1).unwrap();
        assert_abs_diff_eq!(h, DMatrix::identity(2, 2), epsilon = 1e-12);
        assert!(matches!(initial_shape(&(DMatrix::identity(2, 2) * 1.2), 1e-3), Err(Error::SpectralRadiusTooLarge { .. })));
    }

    #[test]
    fn shape_contracts_at_rate_b() {
        let a = DMatrix::from_row_slice(3, 3, &[0.2, 2.0, 0.0, 0.0, 0.3, 1.5, 0.0, 0.0, -0.4]);
        let eps = 1e-3;
        let alpha = initial_shape(&a, eps).unwrap();
        let p = &alpha * &alpha;
        let b = spectral_radius(&a) + eps;
        let gap = &p * (b * b) - a.transpose() * &p * &a;
        assert!(lambda_min_sym(&((&gap + gap.transpose()) * 0.5)) >= -1e-10);
        assert!(lambda_min_sym(&p) >= 1.0 - 1e-10);
    }
}
