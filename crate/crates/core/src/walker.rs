//! Planar telescoping-leg walker.
//!
//! The stance leg is an actuated prismatic inverted pendulum (length `r`,
//! angle `θ` from vertical). The swing leg is held at length `r0` and at a
//! fixed angle `θ_H` from the stance leg. Touchdown of the swing foot swaps
//! the legs, removes the velocity component along the new stance leg and
//! applies an impulse `v` along the old one.
//!
//! Analysis happens in the coordinates `x = (r, tan θ, ṙ, θ̇ / cos²θ)`,
//! where the touchdown surface is a hyperplane.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalMatrix};
use crate::verify::AffineGuard;

/// Physical constants of the walker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkerParams {
    /// Point mass at the hip (kg).
    pub m: f64,
    /// Gravitational acceleration (m/s²).
    pub g: f64,
    /// Swing-leg and post-impact stance length (m).
    pub r0: f64,
    /// Inter-leg angle (rad).
    pub theta_h: f64,
}

impl Default for WalkerParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            g: 9.81,
            r0: 1.0,
            theta_h: 0.5,
        }
    }
}

impl WalkerParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("m", self.m), ("g", self.g), ("r0", self.r0), ("theta_h", self.theta_h)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if self.theta_h >= FRAC_PI_2 {
            return Err(Error::InvalidParameter {
                name: "theta_h",
                reason: format!("must lie in (0, π/2), got {}", self.theta_h),
            });
        }
        Ok(())
    }
}

/// Physical state `[r, θ, ṙ, θ̇]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkerState {
    pub r: f64,
    pub theta: f64,
    pub rdot: f64,
    pub thetadot: f64,
}

impl WalkerState {
    pub fn new(r: f64, theta: f64, rdot: f64, thetadot: f64) -> Self {
        Self { r, theta, rdot, thetadot }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.r, self.theta, self.rdot, self.thetadot]
    }
}

/// Radial and angular accelerations `(r̈, θ̈)` under stance force `u`.
pub fn dynamics(p: &WalkerParams, s: &WalkerState, u: f64) -> Result<(f64, f64)> {
    if !(s.r > 0.0) {
        return Err(Error::NonPositiveLength { r: s.r });
    }
    let rdd = s.r * s.thetadot * s.thetadot + u / p.m - p.g * s.theta.cos();
    let thdd = -(2.0 * s.rdot * s.thetadot - p.g * s.theta.sin()) / s.r;
    Ok((rdd, thdd))
}

/// Height of the swing foot above the ground. Touchdown is its zero level.
pub fn guard_h_physical(p: &WalkerParams, s: &WalkerState) -> f64 {
    s.r * s.theta.cos() + p.r0 * (std::f64::consts::PI + p.theta_h - s.theta).cos()
}

/// Impact map: legs swap, the velocity along the new stance leg is lost,
/// and the impulse `v` acts along the old stance leg.
pub fn reset(p: &WalkerParams, s: &WalkerState, v: f64) -> WalkerState {
    let (sin_t, cos_t) = s.theta.sin_cos();
    let beta = s.theta - p.theta_h;
    let (sin_b, cos_b) = beta.sin_cos();
    let c = s.r * s.thetadot * p.theta_h.cos() + s.rdot * p.theta_h.sin();
    let wx = v * sin_t + c * cos_b;
    let wy = v * cos_t - c * sin_b;
    // Rotation by -θ.
    let r_thetadot = cos_t * wx + sin_t * wy;
    let rdot = -sin_t * wx + cos_t * wy;
    WalkerState {
        r: p.r0,
        theta: p.theta_h - s.theta,
        rdot,
        thetadot: r_thetadot / p.r0,
    }
}

/// `φ(s) = (r, tan θ, ṙ, θ̇ / cos²θ)`.
pub fn transform(s: &WalkerState) -> Result<[f64; 4]> {
    if !(s.theta.abs() < FRAC_PI_2) {
        return Err(Error::SingularAngle { theta: s.theta });
    }
    let c = s.theta.cos();
    Ok([s.r, s.theta.tan(), s.rdot, s.thetadot / (c * c)])
}

pub fn untransform(x: &[f64; 4]) -> WalkerState {
    let q = 1.0 + x[1] * x[1];
    WalkerState {
        r: x[0],
        theta: x[1].atan(),
        rdot: x[2],
        thetadot: x[3] / q,
    }
}

/// Field in transformed coordinates for stance force `u`.
pub fn transformed_dynamics(p: &WalkerParams, x: &[f64; 4], u: f64) -> [f64; 4] {
    let [r, t, rd, w] = *x;
    let q = 1.0 + t * t;
    let sq = q.sqrt();
    let f3 = r * w * w / (q * q) - p.g / sq + u / p.m;
    let f4 = (p.g * t * sq - 2.0 * rd * w) / r + 2.0 * t * w * w / q;
    [rd, w, f3, f4]
}

/// Jacobian of [`transformed_dynamics`] for a stance force with state
/// sensitivity `du_dx`.
pub fn transformed_jacobian(p: &WalkerParams, x: &[f64; 4], du_dx: &[f64; 4]) -> DMatrix<f64> {
    let [r, t, rd, w] = *x;
    let q = 1.0 + t * t;
    let sq = q.sqrt();
    let mut j = DMatrix::zeros(4, 4);
    j[(0, 2)] = 1.0;
    j[(1, 3)] = 1.0;
    j[(2, 0)] = w * w / (q * q);
    j[(2, 1)] = -4.0 * t * r * w * w / (q * q * q) + p.g * t / (q * sq);
    j[(2, 3)] = 2.0 * r * w / (q * q);
    j[(3, 0)] = -(p.g * t * sq - 2.0 * rd * w) / (r * r);
    j[(3, 1)] = p.g * (1.0 + 2.0 * t * t) / (r * sq) + 2.0 * w * w * (1.0 - t * t) / (q * q);
    j[(3, 2)] = -2.0 * w / r;
    j[(3, 3)] = -2.0 * rd / r + 4.0 * t * w / q;
    for (k, d) in du_dx.iter().enumerate() {
        j[(2, k)] += d / p.m;
    }
    j
}

/// Interval enclosure of the transformed field over a box, for a stance
/// force ranging over `u`.
pub fn transformed_dynamics_enclosure(p: &WalkerParams, x: &[Interval], u: Interval) -> [Interval; 4] {
    let (r, t, rd, w) = (x[0], x[1], x[2], x[3]);
    let q = 1.0 + t.sqr();
    let sq = q.sqrt();
    let f3 = r * w.sqr() / q.sqr() - p.g / sq + u / p.m;
    let f4 = (p.g * t * sq - 2.0 * rd * w) / r + 2.0 * t * w.sqr() / q;
    [rd, w, f3, f4]
}

/// Interval enclosure of the Jacobian of the transformed field over a box.
pub fn transformed_jacobian_enclosure(p: &WalkerParams, x: &[Interval], du_dx: &[f64; 4]) -> IntervalMatrix {
    let (r, t, rd, w) = (x[0], x[1], x[2], x[3]);
    let q = 1.0 + t.sqr();
    let sq = q.sqrt();
    let q2 = q.sqr();
    let w2 = w.sqr();
    let zero = Interval::point(0.0);
    let one = Interval::point(1.0);
    let mut j = IntervalMatrix::zeros(4, 4);
    j.set(0, 2, one);
    j.set(1, 3, one);
    j.set(2, 0, w2 / q2);
    j.set(2, 1, -4.0 * t * r * w2 / (q2 * q) + p.g * t / (q * sq));
    j.set(2, 2, zero);
    j.set(2, 3, 2.0 * r * w / q2);
    j.set(3, 0, -(p.g * t * sq - 2.0 * rd * w) / r.sqr());
    j.set(3, 1, p.g * (1.0 + 2.0 * t.sqr()) / (r * sq) + 2.0 * w2 * (1.0 - t.sqr()) / q2);
    j.set(3, 2, -2.0 * w / r);
    j.set(3, 3, -2.0 * rd / r + 4.0 * t * w / q);
    for (k, d) in du_dx.iter().enumerate() {
        if *d != 0.0 {
            j.set(2, k, j.get(2, k) + *d / p.m);
        }
    }
    j
}

/// Touchdown hyperplane in transformed coordinates, oriented so that the
/// pre-impact side (swing foot above ground) has `h > 0`.
pub fn transformed_guard(p: &WalkerParams) -> AffineGuard {
    let (s, t) = (p.theta_h.sin(), p.theta_h.tan());
    let a = DVector::from_vec(vec![1.0 / (p.r0 * s), -1.0, 0.0, 0.0]);
    AffineGuard::new(a, -1.0 / t).expect("nonzero guard normal")
}

/// Reset in transformed coordinates, `φ ∘ Δ ∘ φ⁻¹`.
pub fn transformed_reset(p: &WalkerParams, x: &[f64; 4], v: f64) -> Result<[f64; 4]> {
    let s = untransform(x);
    transform(&reset(p, &s, v))
}

/// Reset in transformed coordinates written as a rational function of `x`
/// (no trigonometry), used for interval evaluation.
fn reset_rational(p: &WalkerParams, x: &[Interval], v: Interval) -> [Interval; 4] {
    let (ch, sh, th) = (p.theta_h.cos(), p.theta_h.sin(), p.theta_h.tan());
    let (r, t, rd, w) = (x[0], x[1], x[2], x[3]);
    let q = 1.0 + t.sqr();
    let c = ch * r * w / q + sh * rd;
    let p1 = ch * (1.0 - t.sqr()) + 2.0 * sh * t;
    let p2 = 2.0 * ch * t - sh * (1.0 - t.sqr());
    let out1 = (2.0 * v * t + c * p1) / q;
    let out2 = (v * (1.0 - t.sqr()) - c * p2) / q;
    let tp = (th - t) / (1.0 + th * t);
    [
        Interval::point(p.r0),
        tp,
        out2,
        out1 * (1.0 + tp.sqr()) / p.r0,
    ]
}

/// Point evaluation of the rational reset; agrees with [`transformed_reset`].
pub fn transformed_reset_direct(p: &WalkerParams, x: &[f64; 4], v: f64) -> [f64; 4] {
    let xi: Vec<Interval> = x.iter().map(|&e| Interval::point(e)).collect();
    reset_rational(p, &xi, Interval::point(v)).map(|e| e.mid())
}

/// Enclosure of the reset image over a box, with impulse range `v`.
pub fn transformed_reset_enclosure(p: &WalkerParams, x: &[Interval], v: Interval) -> [Interval; 4] {
    reset_rational(p, x, v)
}

/// Interval Jacobian of the transformed reset over a box, where the impulse
/// `v` ranges over `v` and depends on the state through `dv_dx`.
pub fn transformed_reset_jacobian_enclosure(
    p: &WalkerParams,
    x: &[Interval],
    v: Interval,
    dv_dx: &[f64; 4],
) -> IntervalMatrix {
    let (ch, sh, th) = (p.theta_h.cos(), p.theta_h.sin(), p.theta_h.tan());
    let (r, t, rd, w) = (x[0], x[1], x[2], x[3]);
    let q = 1.0 + t.sqr();
    let q2 = q.sqr();
    let zero = Interval::point(0.0);

    let c = ch * r * w / q + sh * rd;
    let dc = [ch * w / q, -2.0 * ch * r * w * t / q2, Interval::point(sh), ch * r / q];

    let one_m_t2 = 1.0 - t.sqr();
    let p1 = ch * one_m_t2 + 2.0 * sh * t;
    let dp1 = 2.0 * sh - 2.0 * ch * t;
    let p2 = 2.0 * ch * t - sh * one_m_t2;
    let dp2 = 2.0 * ch + 2.0 * sh * t;

    let n1 = 2.0 * v * t + c * p1;
    let n2 = v * one_m_t2 - c * p2;

    let mut dout1 = [zero; 4];
    let mut dout2 = [zero; 4];
    for k in 0..4 {
        let mut dn1 = 2.0 * t * dv_dx[k] + dc[k] * p1;
        let mut dn2 = one_m_t2 * dv_dx[k] - dc[k] * p2;
        if k == 1 {
            dn1 = dn1 + 2.0 * v + c * dp1;
            dn2 = dn2 - 2.0 * t * v - c * dp2;
            dout1[k] = dn1 / q - n1 * 2.0 * t / q2;
            dout2[k] = dn2 / q - n2 * 2.0 * t / q2;
        } else {
            dout1[k] = dn1 / q;
            dout2[k] = dn2 / q;
        }
    }

    let den = 1.0 + th * t;
    let tp = (th - t) / den;
    let dtp = -(1.0 + th * th) / den.sqr();
    let out1 = n1 / q;
    let qp = 1.0 + tp.sqr();

    let mut j = IntervalMatrix::zeros(4, 4);
    j.set(1, 1, dtp);
    for k in 0..4 {
        j.set(2, k, dout2[k]);
        let mut d4 = dout1[k] * qp;
        if k == 1 {
            d4 = d4 + out1 * 2.0 * tp * dtp;
        }
        j.set(3, k, d4 / p.r0);
    }
    j
}

/// Point Jacobian of the transformed reset with respect to the state, for
/// an impulse with state sensitivity `dv_dx`.
pub fn transformed_reset_jacobian(p: &WalkerParams, x: &[f64; 4], v: f64, dv_dx: &[f64; 4]) -> DMatrix<f64> {
    let xi = crate::interval::point_box(x);
    let m = transformed_reset_jacobian_enclosure(p, &xi, Interval::point(v), dv_dx);
    m.center()
}

/// Derivative of the transformed reset with respect to the impulse.
pub fn transformed_reset_dv(p: &WalkerParams, x: &[f64; 4]) -> [f64; 4] {
    let t = x[1];
    let q = 1.0 + t * t;
    let th = p.theta_h.tan();
    let tp = (th - t) / (1.0 + th * t);
    [0.0, 0.0, (1.0 - t * t) / q, 2.0 * t / q * (1.0 + tp * tp) / p.r0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> WalkerParams {
        WalkerParams::default()
    }

    fn random_state(rng: &mut ChaCha8Rng) -> WalkerState {
        WalkerState::new(
            rng.gen_range(0.8..1.3),
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-3.0..3.0),
        )
    }

    #[test]
    fn passive_touchdown_does_not_add_energy() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let ke = |s: &WalkerState| 0.5 * p.m * (s.rdot * s.rdot + (s.r * s.thetadot).powi(2));
        for _ in 0..1000 {
            let s = random_state(&mut rng);
            let after = reset(&p, &s, 0.0);
            assert!(ke(&after) <= ke(&s) * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn params_validation() {
        assert!(params().validate().is_ok());
        let mut p = params();
        p.theta_h = 1.6;
        assert!(p.validate().is_err());
        p = params();
        p.m = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn dynamics_examples() {
        let p = params();
        let (rdd, thdd) = dynamics(&p, &WalkerState::new(1.0, 0.0, 0.0, 0.0), p.m * p.g).unwrap();
        assert_abs_diff_eq!(rdd, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(thdd, 0.0, epsilon = 1e-15);
        let (rdd, thdd) = dynamics(&p, &WalkerState::new(1.0, 0.0, 0.0, 0.0), 0.0).unwrap();
        assert_abs_diff_eq!(rdd, -p.g, epsilon = 1e-15);
        assert_abs_diff_eq!(thdd, 0.0, epsilon = 1e-15);
        let s = WalkerState::new(1.0, 0.1, 0.0, 2.0);
        let (rdd, thdd) = dynamics(&p, &s, p.m * p.g * 0.1f64.cos()).unwrap();
        assert_abs_diff_eq!(rdd, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(thdd, p.g * 0.1f64.sin(), epsilon = 1e-12);
        assert!(dynamics(&p, &WalkerState::new(0.0, 0.0, 0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn physical_guard_examples() {
        let p = params();
        let th = p.theta_h;
        assert_abs_diff_eq!(guard_h_physical(&p, &WalkerState::new(p.r0, th / 2.0, 0.0, 0.0)), 0.0, epsilon = 1e-15);
        let h = guard_h_physical(&p, &WalkerState::new(p.r0, th, 0.0, 0.0));
        assert_abs_diff_eq!(h, p.r0 * (th.cos() - 1.0), epsilon = 1e-15);
        assert!(h < 0.0);
        let h = guard_h_physical(&p, &WalkerState::new(2.0 * p.r0, th / 2.0, 0.0, 0.0));
        assert_abs_diff_eq!(h, p.r0 * (th / 2.0).cos(), epsilon = 1e-14);
    }

    #[test]
    fn reset_examples() {
        let p = params();
        let s = reset(&p, &WalkerState::new(1.03, 0.3, 0.0, 0.0), 0.0);
        assert_eq!(s.rdot, 0.0);
        assert_eq!(s.thetadot, 0.0);
        assert_eq!(s.r, p.r0);
        let s = reset(&p, &WalkerState::new(1.0, p.theta_h / 2.0, 0.3, 1.0), 0.4);
        assert_abs_diff_eq!(s.theta, p.theta_h / 2.0, epsilon = 1e-15);
    }

    /// Independent route: world-frame hip velocity, subtract its projection
    /// on the new stance leg, add the impulse along the old stance leg, then
    /// compare after undoing the output rotation.
    #[test]
    fn reset_matches_momentum_projection() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let s = random_state(&mut rng);
            let v = rng.gen_range(-1.0..1.0);
            let e_r = [s.theta.sin(), s.theta.cos()];
            let e_t = [s.theta.cos(), -s.theta.sin()];
            let vel = [
                s.rdot * e_r[0] + s.r * s.thetadot * e_t[0],
                s.rdot * e_r[1] + s.r * s.thetadot * e_t[1],
            ];
            // New stance leg: foot-to-hip direction of the old swing leg.
            let b = s.theta - p.theta_h;
            let leg = [b.sin(), b.cos()];
            let along = vel[0] * leg[0] + vel[1] * leg[1];
            let world = [vel[0] - along * leg[0] + v * e_r[0], vel[1] - along * leg[1] + v * e_r[1]];

            let out = reset(&p, &s, v);
            let a = p.r0 * out.thetadot;
            let bcomp = out.rdot;
            let (st, ct) = s.theta.sin_cos();
            // Rotate back by +θ.
            let back = [ct * a - st * bcomp, st * a + ct * bcomp];
            assert_abs_diff_eq!(back[0], world[0], epsilon = 1e-12);
            assert_abs_diff_eq!(back[1], world[1], epsilon = 1e-12);

            if v == 0.0 {
                continue;
            }
            let ke_pre = vel[0] * vel[0] + vel[1] * vel[1];
            let no_push = reset(&p, &s, 0.0);
            let ke_post = (p.r0 * no_push.thetadot).powi(2) + no_push.rdot.powi(2);
            assert!(ke_post <= ke_pre + 1e-12);
        }
    }

    #[test]
    fn reset_is_linear_in_velocities_and_impulse() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a = random_state(&mut rng);
            let mut b = a;
            b.rdot = rng.gen_range(-2.0..2.0);
            b.thetadot = rng.gen_range(-2.0..2.0);
            let (va, vb) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let mut sum = a;
            sum.rdot += b.rdot;
            sum.thetadot += b.thetadot;
            let ra = reset(&p, &a, va);
            let rb = reset(&p, &b, vb);
            let rs = reset(&p, &sum, va + vb);
            assert_abs_diff_eq!(rs.rdot, ra.rdot + rb.rdot, epsilon = 1e-12);
            assert_abs_diff_eq!(rs.thetadot, ra.thetadot + rb.thetadot, epsilon = 1e-12);
        }
    }

    #[test]
    fn transform_examples() {
        let x = transform(&WalkerState::new(1.0, 0.0, 0.5, 1.5)).unwrap();
        assert_eq!(x[1], 0.0);
        assert_eq!(x[3], 1.5);
        assert!(matches!(
            transform(&WalkerState::new(1.0, FRAC_PI_2, 0.0, 0.0)),
            Err(Error::SingularAngle { .. })
        ));
    }

    #[test]
    fn transform_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let s = random_state(&mut rng);
            let back = untransform(&transform(&s).unwrap());
            for (a, b) in s.to_array().iter().zip(back.to_array()) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst < 1e-12, "round-trip error {worst}");
    }

    /// Chain rule: Dφ(s)·ṡ must equal the transformed field at φ(s).
    #[test]
    fn transformed_field_matches_chain_rule() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let s = random_state(&mut rng);
            let u = rng.gen_range(0.0..20.0);
            let (rdd, thdd) = dynamics(&p, &s, u).unwrap();
            let c = s.theta.cos();
            let sec2 = 1.0 / (c * c);
            let expected = [
                s.rdot,
                sec2 * s.thetadot,
                rdd,
                sec2 * thdd + 2.0 * s.thetadot * s.thetadot * s.theta.tan() * sec2,
            ];
            let got = transformed_dynamics(&p, &transform(&s).unwrap(), u);
            for k in 0..4 {
                assert!((got[k] - expected[k]).abs() < 1e-9 * (1.0 + expected[k].abs()));
            }
        }
    }

    #[test]
    fn equilibrium_maps_to_rest() {
        let p = params();
        let f = transformed_dynamics(&p, &[1.0, 0.0, 0.0, 0.0], p.m * p.g);
        for v in f {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
        }
        let s = WalkerState::new(1.1, 0.0, 0.3, -0.7);
        let (_, thdd) = dynamics(&p, &s, 3.0).unwrap();
        assert_abs_diff_eq!(transformed_dynamics(&p, &transform(&s).unwrap(), 3.0)[3], thdd, epsilon = 1e-14);
    }

    fn random_x(rng: &mut ChaCha8Rng) -> [f64; 4] {
        transform(&WalkerState::new(
            rng.gen_range(0.9..1.2),
            rng.gen_range(-0.6..0.8),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-3.0..3.0),
        ))
        .unwrap()
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let du = [0.3, -1.0, 2.0, 0.5];
        for _ in 0..1000 {
            let x = random_x(&mut rng);
            let field = |y: &[f64; 4]| {
                let u = 7.0 + du.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
                transformed_dynamics(&p, y, u)
            };
            let j = transformed_jacobian(&p, &x, &du);
            let enc = transformed_jacobian_enclosure(&p, &crate::interval::point_box(&x), &du);
            for k in 0..4 {
                let eps = 1e-6;
                let (mut xp, mut xm) = (x, x);
                xp[k] += eps;
                xm[k] -= eps;
                let (fp, fm) = (field(&xp), field(&xm));
                for i in 0..4 {
                    let fd = (fp[i] - fm[i]) / (2.0 * eps);
                    assert!((j[(i, k)] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "J[{i},{k}] {} vs {fd}", j[(i, k)]);
                    let e = enc.get(i, k);
                    assert!(e.lo() - 1e-6 * (1.0 + fd.abs()) <= fd && fd <= e.hi() + 1e-6 * (1.0 + fd.abs()));
                }
            }
        }
    }

    #[test]
    fn jacobian_enclosure_contains_pointwise_jacobians() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let du = [0.0, 0.0, 0.0, 0.0];
        let x = random_x(&mut rng);
        let bx: Vec<Interval> = x.iter().map(|&c| Interval::centered(c, 0.05)).collect();
        let enc = transformed_jacobian_enclosure(&p, &bx, &du);
        for _ in 0..2000 {
            let y: [f64; 4] = std::array::from_fn(|k| bx[k].lo() + rng.gen::<f64>() * bx[k].width());
            assert!(enc.contains_matrix(&transformed_jacobian(&p, &y, &du)));
        }
    }

    #[test]
    fn rational_reset_matches_composition() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..1000 {
            let x = random_x(&mut rng);
            let v = rng.gen_range(-1.0..1.0);
            let a = transformed_reset(&p, &x, v).unwrap();
            let b = transformed_reset_direct(&p, &x, v);
            for k in 0..4 {
                assert!((a[k] - b[k]).abs() < 1e-10 * (1.0 + a[k].abs()), "{k}: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn reset_jacobian_matches_central_differences() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let dv = [0.4, -0.2, 0.1, 0.3];
        for _ in 0..1000 {
            let x = random_x(&mut rng);
            let xbar = random_x(&mut rng);
            let v0 = rng.gen_range(-1.0..1.0);
            let vfun = |y: &[f64; 4]| v0 + (0..4).map(|k| dv[k] * (y[k] - xbar[k])).sum::<f64>();
            let enc = transformed_reset_jacobian_enclosure(
                &p,
                &crate::interval::point_box(&x),
                Interval::point(vfun(&x)),
                &dv,
            );
            for k in 0..4 {
                let eps = 1e-6;
                let (mut xp, mut xm) = (x, x);
                xp[k] += eps;
                xm[k] -= eps;
                let fp = transformed_reset(&p, &xp, vfun(&xp)).unwrap();
                let fm = transformed_reset(&p, &xm, vfun(&xm)).unwrap();
                for i in 0..4 {
                    let fd = (fp[i] - fm[i]) / (2.0 * eps);
                    let e = enc.get(i, k);
                    let tol = 1e-6 * (1.0 + fd.abs());
                    assert!(e.lo() - tol <= fd && fd <= e.hi() + tol, "dΔ[{i},{k}] {e:?} vs {fd}");
                    assert!(e.width() < 1e-9 * (1.0 + fd.abs()));
                }
            }
        }
    }

    #[test]
    fn reset_impulse_derivative_matches_differences() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let x = random_x(&mut rng);
            let v = rng.gen_range(-1.0..1.0);
            let d = transformed_reset_dv(&p, &x);
            let a = transformed_reset(&p, &x, v + 1e-6).unwrap();
            let b = transformed_reset(&p, &x, v - 1e-6).unwrap();
            for k in 0..4 {
                assert!(((a[k] - b[k]) / 2e-6 - d[k]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn transformed_guard_matches_physical_guard() {
        let p = params();
        let g = transformed_guard(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..1000 {
            // Points on the physical touchdown set.
            let theta: f64 = rng.gen_range(p.theta_h / 2.0..1.0);
            let r = p.r0 * (theta - p.theta_h).cos() / theta.cos();
            let s = WalkerState::new(r, theta, rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0));
            assert_abs_diff_eq!(guard_h_physical(&p, &s), 0.0, epsilon = 1e-12);
            assert!(g.eval(&DVector::from_row_slice(&transform(&s).unwrap())).abs() < 1e-10);
            // Arbitrary states keep the side of the surface.
            let s = random_state(&mut rng);
            let hp = guard_h_physical(&p, &s);
            let hx = g.eval(&DVector::from_row_slice(&transform(&s).unwrap()));
            if hp.abs() > 1e-9 {
                assert_eq!(hp > 0.0, hx > 0.0, "{s:?}");
            }
        }
    }
}
