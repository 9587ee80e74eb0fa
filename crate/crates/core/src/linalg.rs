//! Matrix norms, logarithmic norms and small dense helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Reciprocal condition number below which a shape matrix counts as singular.
pub const RCOND_MIN: f64 = 1e-12;

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max_sym(s: &DMatrix<f64>) -> f64 {
    s.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min_sym(s: &DMatrix<f64>) -> f64 {
    s.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// ℓ2 logarithmic norm: `λ_max((A + Aᵀ)/2)`.
pub fn lognorm2(a: &DMatrix<f64>) -> f64 {
    assert!(a.is_square(), "log-norm needs a square matrix");
    let sym = (a + a.transpose()) * 0.5;
    lambda_max_sym(&sym)
}

/// Induced 2-norm (largest singular value) of any rectangular matrix.
pub fn specnorm2(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Largest modulus among the eigenvalues.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    assert!(a.is_square(), "spectral radius needs a square matrix");
    if a.amax() == 0.0 {
        return 0.0;
    }
    match a.clone().try_schur(f64::EPSILON, 10_000) {
        Some(s) => s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        // Gelfand's formula as a fallback: ρ = lim ‖Aᵏ‖^{1/k}.
        None => {
            let mut m = a / a.norm();
            let mut log_scale = a.norm().ln();
            let mut k = 1.0;
            for _ in 0..12 {
                m = &m * &m;
                k *= 2.0;
                let nm = m.norm();
                if nm == 0.0 {
                    return 0.0;
                }
                log_scale = 2.0 * log_scale + nm.ln();
                m /= nm;
            }
            (log_scale / k).exp()
        }
    }
}

/// `σ_min / σ_max`, zero for a zero matrix.
pub fn rcond(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 || !max.is_finite() {
        0.0
    } else {
        min / max
    }
}

/// Inverse of a shape matrix, refusing ill-conditioned input.
pub fn checked_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rc = rcond(a);
    if !(rc >= RCOND_MIN) {
        return Err(Error::SingularShape { rcond: rc });
    }
    a.clone()
        .try_inverse()
        .ok_or(Error::SingularShape { rcond: rc })
}

/// Principal square root of a symmetric positive semidefinite matrix.
pub fn sym_sqrt(p: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = p.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Orthonormal basis of the orthogonal complement of a nonzero vector,
/// as the columns of an `n × (n-1)` matrix.
pub fn orthogonal_complement(a: &DVector<f64>) -> DMatrix<f64> {
    let n = a.len();
    let unit = a / a.norm();
    // Householder reflector mapping `unit` to ±e_k; its other columns span a⊥.
    let k = unit.iamax();
    let mut v = unit.clone();
    let sign = if unit[k] >= 0.0 { 1.0 } else { -1.0 };
    v[k] += sign;
    let h = DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / v.norm_squared());
    let cols: Vec<DVector<f64>> = (0..n).filter(|&j| j != k).map(|j| h.column(j).into_owned()).collect();
    DMatrix::from_columns(&cols)
}

/// Characteristic polynomial coefficients (monic, highest degree first) of
/// the given roots.
pub fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i] += ci;
            next[i + 1] -= r * ci;
        }
        c = next;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lognorm_examples() {
        assert_abs_diff_eq!(lognorm2(&DMatrix::zeros(3, 3)), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lognorm2(&-DMatrix::identity(3, 3)), -1.0, epsilon = 1e-14);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(lognorm2(&a), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn specnorm_examples() {
        assert_abs_diff_eq!(specnorm2(&DMatrix::identity(3, 3)), 1.0, epsilon = 1e-14);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -4.0]));
        assert_abs_diff_eq!(specnorm2(&d), 4.0, epsilon = 1e-14);
    }

    fn power_iteration_norm(a: &DMatrix<f64>) -> f64 {
        let ata = a.transpose() * a;
        let mut v = DVector::from_element(a.ncols(), 1.0);
        let mut lambda = 0.0;
        for _ in 0..5000 {
            let w = &ata * &v;
            lambda = w.norm();
            v = w / lambda;
        }
        lambda.sqrt()
    }

    #[test]
    fn specnorm_matches_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let a = DMatrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0));
            assert_abs_diff_eq!(specnorm2(&a), power_iteration_norm(&a), epsilon = 1e-10);
        }
    }

    #[test]
    fn lognorm_is_subadditive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-3.0..3.0));
            let b = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-3.0..3.0));
            assert!(lognorm2(&(&a + &b)) <= lognorm2(&a) + lognorm2(&b) + 1e-12);
        }
    }

    #[test]
    fn spectral_radius_examples() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, -0.5]));
        assert_abs_diff_eq!(spectral_radius(&d), 0.5, epsilon = 1e-14);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(spectral_radius(&rot), 1.0, epsilon = 1e-14);
        assert_eq!(spectral_radius(&DMatrix::zeros(3, 3)), 0.0);
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(spectral_radius(&nil) < 1e-6);
    }

    #[test]
    fn spectral_radius_below_power_norm_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let a = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
            let rho = spectral_radius(&a);
            // ρ(A) ≤ ‖A^k‖^(1/k) for every k, and the bound tightens with k.
            let mut p = a.clone();
            for _ in 0..30 {
                p = &p * &a;
            }
            let bound = power_iteration_norm(&p).powf(1.0 / 31.0);
            assert!(rho <= power_iteration_norm(&a) + 1e-12);
            assert!(rho <= bound + 1e-9);
            assert!(bound <= rho * 1.2 + 1e-9);
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let s = sym_sqrt(&m);
        assert!((&s * &s - &m).norm() < 1e-12);
    }

    #[test]
    fn complement_is_orthonormal() {
        let a = DVector::from_vec(vec![-2.0, 1.0, 0.0, 0.0]);
        let b = orthogonal_complement(&a);
        assert_eq!(b.shape(), (4, 3));
        assert!((a.transpose() * &b).norm() < 1e-14);
        assert!((b.transpose() * &b - DMatrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn inverse_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(checked_inverse(&m), Err(Error::SingularShape { .. })));
    }

    #[test]
    fn poly_coefficients() {
        assert_eq!(poly_from_roots(&[1.0, 2.0]), vec![1.0, -3.0, 2.0]);
    }
}
