//! Closed real intervals, interval matrices and corner enumeration.
//!
//! Every primitive operation widens its result outward by four ulps, so a
//! computed interval always contains the exact real-arithmetic result.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const OUTWARD_ULPS: usize = 4;

/// Default cap on the number of corner matrices: covers every entry of a
/// 4x4 interval matrix being non-singleton.
pub const DEFAULT_CORNER_CAP: usize = 1 << 16;

#[inline]
fn down(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mut y = x;
    for _ in 0..OUTWARD_ULPS {
        y = y.next_down();
    }
    y
}

#[inline]
fn up(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mut y = x;
    for _ in 0..OUTWARD_ULPS {
        y = y.next_up();
    }
    y
}

/// Closed interval `[lo, hi]` with `lo <= hi`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

impl Interval {
    pub const ENTIRE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    /// Build an interval, rejecting `lo > hi` and NaN bounds.
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub const fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    /// Interval `c ± r` with the bounds rounded outward. `r` must be non-negative.
    pub fn centered(c: f64, r: f64) -> Self {
        debug_assert!(r >= 0.0);
        Self {
            lo: down(c - r),
            hi: up(c + r),
        }
    }

    /// Smallest interval containing both values, in either order.
    pub fn spanning(a: f64, b: f64) -> Self {
        Self {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn mid(&self) -> f64 {
        0.5 * self.lo + 0.5 * self.hi
    }

    /// Radius rounded up so that `mid ± rad` covers the interval.
    #[inline]
    pub fn rad(&self) -> f64 {
        let m = self.mid();
        up((self.hi - m).max(m - self.lo))
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn is_singleton(&self) -> bool {
        self.lo == self.hi
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    #[inline]
    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Largest absolute value in the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Tight enclosure of `{x² : x ∈ self}`.
    pub fn sqr(self) -> Interval {
        let (a, b) = (self.lo * self.lo, self.hi * self.hi);
        if self.lo >= 0.0 {
            Interval { lo: down(a), hi: up(b) }
        } else if self.hi <= 0.0 {
            Interval { lo: down(b), hi: up(a) }
        } else {
            Interval {
                lo: 0.0,
                hi: up(a.max(b)),
            }
        }
    }

    /// Square root, with the negative part of the domain clipped.
    pub fn sqrt(self) -> Interval {
        let lo = if self.lo <= 0.0 { 0.0 } else { down(self.lo.sqrt()).max(0.0) };
        let hi = if self.hi <= 0.0 { 0.0 } else { up(self.hi.sqrt()) };
        Interval { lo, hi }
    }

    /// `1/x`; the entire real line when the interval contains zero.
    pub fn recip(self) -> Interval {
        if self.contains_zero() {
            return Interval::ENTIRE;
        }
        Interval {
            lo: down(1.0 / self.hi),
            hi: up(1.0 / self.lo),
        }
    }

    pub fn scale(self, k: f64) -> Interval {
        self * Interval::point(k)
    }
}

impl From<f64> for Interval {
    fn from(x: f64) -> Self {
        Interval::point(x)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval {
            lo: down(self.lo + rhs.lo),
            hi: up(self.hi + rhs.hi),
        }
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval {
            lo: down(self.lo - rhs.hi),
            hi: up(self.hi - rhs.lo),
        }
    }
}

#[inline]
fn product(a: f64, b: f64) -> f64 {
    // 0 * inf is taken as 0: an unbounded factor cannot rescue a zero one.
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let p = [
            product(self.lo, rhs.lo),
            product(self.lo, rhs.hi),
            product(self.hi, rhs.lo),
            product(self.hi, rhs.hi),
        ];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out = Interval { lo: down(lo), hi: up(hi) };
        // Underflow to zero from nonzero factors: widen to the smallest normal.
        if out.lo == 0.0 && !(self.lo == 0.0 || self.hi == 0.0 || rhs.lo == 0.0 || rhs.hi == 0.0)
        {
            out.lo = -f64::MIN_POSITIVE;
        }
        if out.hi == 0.0 && !(self.lo == 0.0 || self.hi == 0.0 || rhs.lo == 0.0 || rhs.hi == 0.0)
        {
            out.hi = f64::MIN_POSITIVE;
        }
        out
    }
}

impl Div for Interval {
    type Output = Interval;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Interval) -> Interval {
        self * rhs.recip()
    }
}

macro_rules! scalar_ops {
    ($($tr:ident $f:ident),*) => {$(
        impl $tr<f64> for Interval {
            type Output = Interval;
            fn $f(self, rhs: f64) -> Interval {
                $tr::$f(self, Interval::point(rhs))
            }
        }
        impl $tr<Interval> for f64 {
            type Output = Interval;
            fn $f(self, rhs: Interval) -> Interval {
                $tr::$f(Interval::point(self), rhs)
            }
        }
    )*};
}
scalar_ops!(Add add, Sub sub, Mul mul, Div div);

/// Interval hull of a vector of points.
pub fn point_box(x: &[f64]) -> Vec<Interval> {
    x.iter().map(|&v| Interval::point(v)).collect()
}

/// Dense row-major matrix of intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Interval>,
}

impl IntervalMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Interval) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| Interval::point(0.0))
    }

    pub fn from_point(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| Interval::point(m[(i, j)]))
    }

    /// Assemble from columns of equal length.
    pub fn from_columns(columns: &[Vec<Interval>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: columns.iter().map(Vec::len).find(|&l| l != rows).unwrap_or(0),
            });
        }
        Ok(Self::from_fn(rows, cols, |i, j| columns[j][i]))
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Interval {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Interval) {
        self.data[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[Interval] {
        &self.data
    }

    pub fn center(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).mid())
    }

    pub fn radius(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).rad())
    }

    pub fn contains_matrix(&self, m: &DMatrix<f64>) -> bool {
        m.nrows() == self.rows
            && m.ncols() == self.cols
            && (0..self.rows).all(|i| (0..self.cols).all(|j| self.get(i, j).contains(m[(i, j)])))
    }

    pub fn non_singleton_count(&self) -> usize {
        self.data.iter().filter(|e| !e.is_singleton()).count()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(Interval::is_finite)
    }

    /// Interval matrix product `self * rhs`.
    pub fn mul_matrix(&self, rhs: &IntervalMatrix) -> Result<IntervalMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: rhs.rows,
            });
        }
        Ok(IntervalMatrix::from_fn(self.rows, rhs.cols, |i, j| {
            (0..self.cols).fold(Interval::point(0.0), |acc, k| acc + self.get(i, k) * rhs.get(k, j))
        }))
    }

    /// Product with a real matrix on the right.
    pub fn mul_real(&self, rhs: &DMatrix<f64>) -> Result<IntervalMatrix> {
        self.mul_matrix(&IntervalMatrix::from_point(rhs))
    }
}

/// Interval matrix-vector product enclosing `{Mv : M ∈ [M], v ∈ [v]}`.
pub fn matvec(m: &IntervalMatrix, v: &[Interval]) -> Result<Vec<Interval>> {
    if m.ncols() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: m.ncols(),
            found: v.len(),
        });
    }
    Ok((0..m.nrows())
        .map(|i| {
            v.iter()
                .enumerate()
                .fold(Interval::point(0.0), |acc, (j, &vj)| acc + m.get(i, j) * vj)
        })
        .collect())
}

/// Real matrix times interval vector.
pub fn real_matvec(m: &DMatrix<f64>, v: &[Interval]) -> Result<Vec<Interval>> {
    matvec(&IntervalMatrix::from_point(m), v)
}

/// Vertex matrices whose convex hull contains the interval matrix.
///
/// Singleton entries are copied into every corner; each non-singleton entry
/// contributes a factor of two. Fails with [`Error::CornerExplosion`] when
/// `2^k` exceeds `cap`.
pub fn corners(m: &IntervalMatrix, cap: usize) -> Result<Vec<DMatrix<f64>>> {
    let free: Vec<usize> = (0..m.data.len()).filter(|&k| !m.data[k].is_singleton()).collect();
    let k = free.len();
    if k >= usize::BITS as usize - 1 || (1usize << k) > cap {
        return Err(Error::CornerExplosion { free: k, cap });
    }
    let base = DMatrix::from_fn(m.rows, m.cols, |i, j| m.get(i, j).lo());
    let mut out = Vec::with_capacity(1 << k);
    for mask in 0..(1usize << k) {
        let mut c = base.clone();
        for (bit, &idx) in free.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                let (i, j) = (idx / m.cols, idx % m.cols);
                c[(i, j)] = m.data[idx].hi();
            }
        }
        out.push(c);
    }
    Ok(out)
}
