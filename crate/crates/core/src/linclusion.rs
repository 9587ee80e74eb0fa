//! Linear inclusions `g(x) − g(x̊) ∈ co{M_i}(x − x̊)` from mixed Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::interval::{corners, Interval, IntervalMatrix};

/// Interval enclosure of the Jacobian of some map `g: ℝⁿ → ℝᵐ`.
pub trait DerivativeEnclosure {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// Enclosure of `Dg(x)` for every `x` in `bx`.
    fn jacobian(&self, bx: &[Interval]) -> IntervalMatrix;

    /// Enclosure of `∂g/∂x_j` over `bx`.
    fn column(&self, bx: &[Interval], j: usize) -> Vec<Interval> {
        let m = self.jacobian(bx);
        (0..m.nrows()).map(|i| m.get(i, j)).collect()
    }
}

/// Adapts a closure returning the full interval Jacobian.
pub struct FnEnclosure<F> {
    rows: usize,
    cols: usize,
    f: F,
}

impl<F: Fn(&[Interval]) -> IntervalMatrix> FnEnclosure<F> {
    pub fn new(rows: usize, cols: usize, f: F) -> Self {
        Self { rows, cols, f }
    }
}

impl<F: Fn(&[Interval]) -> IntervalMatrix> DerivativeEnclosure for FnEnclosure<F> {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn jacobian(&self, bx: &[Interval]) -> IntervalMatrix {
        (self.f)(bx)
    }
}

/// Interval matrix `[M]` with `g(x) − g(x̊) ∈ [M](x − x̊)` on `bx`.
///
/// Column `j` is evaluated with the first `j+1` coordinates ranging over the
/// box and the remaining ones pinned at the center.
pub fn mixed_jacobian<G: DerivativeEnclosure + ?Sized>(
    g: &G,
    bx: &[Interval],
    center: &DVector<f64>,
) -> Result<IntervalMatrix> {
    let n = g.ncols();
    if bx.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: bx.len() });
    }
    if center.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: center.len() });
    }
    if let Some(index) = (0..n).find(|&i| !bx[i].contains(center[i])) {
        return Err(Error::CenterOutsideBox { index });
    }
    let mut mixed: Vec<Interval> = center.iter().map(|&c| Interval::point(c)).collect();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        mixed[j] = bx[j];
        let col = g.column(&mixed, j);
        if col.len() != g.nrows() {
            return Err(Error::DimensionMismatch { expected: g.nrows(), found: col.len() });
        }
        cols.push(col);
    }
    IntervalMatrix::from_columns(&cols)
}

/// How the matrix set of an inclusion is represented.
#[derive(Clone, Debug)]
pub enum InclusionForm {
    /// Finite corner set whose convex hull contains `[M]`.
    Corners(Vec<DMatrix<f64>>),
    /// Too many uncertain entries for corners: `[M] = M_c ± M_r`.
    CenterRadius { center: DMatrix<f64>, radius: DMatrix<f64> },
}

#[derive(Clone, Debug)]
pub struct LinearInclusion {
    pub center_point: DVector<f64>,
    pub domain_box: Vec<Interval>,
    pub hull: IntervalMatrix,
    pub form: InclusionForm,
}

impl LinearInclusion {
    pub fn corner_matrices(&self) -> Option<&[DMatrix<f64>]> {
        match &self.form {
            InclusionForm::Corners(c) => Some(c),
            InclusionForm::CenterRadius { .. } => None,
        }
    }

    pub fn is_fallback(&self) -> bool {
        matches!(self.form, InclusionForm::CenterRadius { .. })
    }
}

/// Builds the inclusion from the mixed Jacobian, switching to the
/// center/radius form when the corner count would exceed `cap`.
pub fn build_inclusion<G: DerivativeEnclosure + ?Sized>(
    g: &G,
    bx: &[Interval],
    center: &DVector<f64>,
    cap: usize,
) -> Result<LinearInclusion> {
    let hull = mixed_jacobian(g, bx, center)?;
    if !hull.is_finite() {
        return Err(Error::NonFinite { context: "mixed Jacobian" });
    }
    let form = match corners(&hull, cap) {
        Ok(c) => InclusionForm::Corners(c),
        Err(Error::CornerExplosion { .. }) => InclusionForm::CenterRadius {
            center: hull.center(),
            radius: hull.radius(),
        },
        Err(e) => return Err(e),
    };
    Ok(LinearInclusion {
        center_point: center.clone(),
        domain_box: bx.to_vec(),
        hull,
        form,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::{point_box, DEFAULT_CORNER_CAP};
    use crate::walker::{transformed_dynamics, transformed_jacobian_enclosure, WalkerParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_map_has_singleton_jacobian() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let am = a.clone();
        let g = FnEnclosure::new(2, 2, move |_: &[Interval]| IntervalMatrix::from_point(&am));
        let bx = vec![Interval::new(-1.0, 1.0).unwrap(); 2];
        let inc = build_inclusion(&g, &bx, &DVector::zeros(2), DEFAULT_CORNER_CAP).unwrap();
        let c = inc.corner_matrices().unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0], a);
    }

    #[test]
    fn square_on_zero_two() {
        let g = FnEnclosure::new(1, 1, |x: &[Interval]| {
            IntervalMatrix::from_fn(1, 1, |_, _| 2.0 * x[0])
        });
        let bx = [Interval::new(0.0, 2.0).unwrap()];
        let m = mixed_jacobian(&g, &bx, &DVector::from_vec(vec![1.0])).unwrap();
        let e = m.get(0, 0);
        assert!(e.lo() <= 0.0 && e.lo() > -1e-12);
        assert!(e.hi() >= 4.0 && e.hi() < 4.0 + 1e-12);
        for k in 0..=200 {
            let x = 2.0 * k as f64 / 200.0;
            let d = x * x - 1.0;
            let lo = (e.lo() * (x - 1.0)).min(e.hi() * (x - 1.0));
            let hi = (e.lo() * (x - 1.0)).max(e.hi() * (x - 1.0));
            assert!(lo - 1e-12 <= d && d <= hi + 1e-12);
        }
    }

    #[test]
    fn center_must_lie_in_box() {
        let g = FnEnclosure::new(1, 1, |_: &[Interval]| IntervalMatrix::zeros(1, 1));
        let bx = [Interval::new(0.0, 1.0).unwrap()];
        assert!(matches!(
            mixed_jacobian(&g, &bx, &DVector::from_vec(vec![2.0])),
            Err(Error::CenterOutsideBox { index: 0 })
        ));
    }

    #[test]
    fn two_uncertain_entries_give_four_corners() {
        // g(x) = (x0², x1²): diagonal Jacobian, both entries uncertain.
        let g = FnEnclosure::new(2, 2, |x: &[Interval]| {
            IntervalMatrix::from_fn(2, 2, |i, j| if i == j { 2.0 * x[i] } else { Interval::point(0.0) })
        });
        let bx = vec![Interval::new(0.0, 1.0).unwrap(); 2];
        let inc = build_inclusion(&g, &bx, &DVector::from_vec(vec![0.5, 0.5]), DEFAULT_CORNER_CAP).unwrap();
        assert_eq!(inc.corner_matrices().unwrap().len(), 4);
        let small = build_inclusion(&g, &bx, &DVector::from_vec(vec![0.5, 0.5]), 2).unwrap();
        assert!(small.is_fallback());
    }

    /// Solves for the entrywise-feasible matrix in the 1-D direction of each
    /// row: `g_i(x) − g_i(x̊) = Σ_j M_ij d_j` admits `M_ij ∈ [M]_ij` iff the
    /// interval dot product contains the left side.
    fn inclusion_holds(hull: &IntervalMatrix, d: &[f64], dg: &[f64], tol: f64) -> bool {
        (0..hull.nrows()).all(|i| {
            let mut acc = Interval::point(0.0);
            for (j, dj) in d.iter().enumerate() {
                acc = acc + hull.get(i, j) * *dj;
            }
            acc.lo() - tol <= dg[i] && dg[i] <= acc.hi() + tol
        })
    }

    #[test]
    fn walker_field_inclusion_on_samples() {
        let p = WalkerParams::default();
        let k = [2.0, -1.0, 0.5, 0.3];
        let center = [1.02, 0.2, 0.3, 2.0];
        let g = FnEnclosure::new(4, 4, |x: &[Interval]| transformed_jacobian_enclosure(&p, x, &k));
        let bx: Vec<Interval> = center.iter().zip([0.02, 0.05, 0.1, 0.2]).map(|(&c, r)| Interval::centered(c, r)).collect();
        let c = DVector::from_row_slice(&center);
        let inc = build_inclusion(&g, &bx, &c, DEFAULT_CORNER_CAP).unwrap();
        let field = |x: &[f64; 4]| {
            let u = 9.0 + (0..4).map(|i| k[i] * (x[i] - center[i])).sum::<f64>();
            transformed_dynamics(&p, x, u)
        };
        let f0 = field(&center);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10_000 {
            let x: [f64; 4] = std::array::from_fn(|i| bx[i].lo() + rng.gen::<f64>() * bx[i].width());
            let fx = field(&x);
            let d: Vec<f64> = (0..4).map(|i| x[i] - center[i]).collect();
            let dg: Vec<f64> = (0..4).map(|i| fx[i] - f0[i]).collect();
            assert!(inclusion_holds(&inc.hull, &d, &dg, 1e-12));
        }
    }

    #[test]
    fn shrinking_box_never_widens() {
        let p = WalkerParams::default();
        let k = [0.0; 4];
        let g = FnEnclosure::new(4, 4, |x: &[Interval]| transformed_jacobian_enclosure(&p, x, &k));
        let center = [1.02, 0.2, 0.3, 2.0];
        let c = DVector::from_row_slice(&center);
        let mut prev: Option<IntervalMatrix> = None;
        for scale in [0.1, 0.05, 0.01, 0.001] {
            let bx: Vec<Interval> = center.iter().map(|&x| Interval::centered(x, scale)).collect();
            let m = mixed_jacobian(&g, &bx, &c).unwrap();
            if let Some(outer) = &prev {
                for i in 0..4 {
                    for j in 0..4 {
                        assert!(m.get(i, j).is_subset_of(&outer.get(i, j)), "({i},{j})");
                    }
                }
            }
            prev = Some(m);
        }
        let pt = mixed_jacobian(&g, &point_box(&center), &c).unwrap();
        assert!(pt.entries().iter().all(|e| e.width() < 1e-12));
    }
}
