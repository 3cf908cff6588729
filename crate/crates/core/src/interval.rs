//! Outward-rounded interval arithmetic over scalars, vectors and matrices.
//!
//! Every operation returns an interval that encloses the exact real result
//! for all points of the operand intervals. Soundness comes from one-ulp
//! outward nudging of each floating-point result; the nudge is skipped only
//! when an error-free transformation (TwoSum for addition, FMA residual for
//! multiplication and square root) proves the result exact, so degenerate
//! arithmetic such as `[1,1] + [2,2]` stays degenerate. Division and the
//! trigonometric table always nudge.
//!
//! Only what the existence certification needs is provided. In particular the
//! trigonometric functions cover exact multiples of pi/24 (the rotation
//! angles pi/3, pi/6, pi/4, pi/2, 7pi/8 used by the orbit constructions all
//! reduce to this grid); there is no general argument reduction.

use serde::Serialize;
use thiserror::Error;

/// Errors from interval construction or arithmetic.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntervalError {
    /// Endpoints violate `lo <= hi` or are not finite.
    #[error("invalid interval endpoints [{lo}, {hi}]")]
    InvalidEndpoints { lo: f64, hi: f64 },
    /// Division by an interval containing zero.
    #[error("division by interval containing zero: [{lo}, {hi}]")]
    DivisionByZero { lo: f64, hi: f64 },
    /// Square root of an interval with a negative part.
    #[error("sqrt of interval with negative part: [{lo}, {hi}]")]
    SqrtOfNegative { lo: f64, hi: f64 },
    /// An operation produced a non-finite endpoint (overflow).
    #[error("non-finite endpoint produced by interval operation")]
    NonFinite,
    /// Vector or matrix dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[inline]
fn next_down(x: f64) -> f64 {
    f64::next_down(x)
}

#[inline]
fn next_up(x: f64) -> f64 {
    f64::next_up(x)
}

/// TwoSum: returns `(s, e)` with `a + b = s + e` exactly.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bv = s - a;
    let e = (a - (s - bv)) + (b - bv);
    (s, e)
}

/// Lower directed rounding of a result `s` whose exact error is `e`
/// (`true = s + e`, `|e| < ulp(s)`).
#[inline]
fn dir_down(s: f64, e: f64) -> f64 {
    if e < 0.0 {
        next_down(s)
    } else {
        s
    }
}

#[inline]
fn dir_up(s: f64, e: f64) -> f64 {
    if e > 0.0 {
        next_up(s)
    } else {
        s
    }
}

// Below this magnitude the FMA residual of a product may underflow and lose
// its sign, so the exactness test is not trusted.
const PRODUCT_EXACTNESS_FLOOR: f64 = 1e-280;

#[inline]
fn mul_down(a: f64, b: f64) -> f64 {
    let p = a * b;
    if p.abs() < PRODUCT_EXACTNESS_FLOOR && p != 0.0 {
        return next_down(p);
    }
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    dir_down(p, a.mul_add(b, -p))
}

#[inline]
fn mul_up(a: f64, b: f64) -> f64 {
    let p = a * b;
    if p.abs() < PRODUCT_EXACTNESS_FLOOR && p != 0.0 {
        return next_up(p);
    }
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    dir_up(p, a.mul_add(b, -p))
}

/// A closed interval `[lo, hi]` with finite endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };
    pub const ONE: Interval = Interval { lo: 1.0, hi: 1.0 };

    /// Builds `[lo, hi]`, rejecting non-finite or inverted endpoints.
    pub fn new(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(IntervalError::InvalidEndpoints { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    /// Degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Result<Self, IntervalError> {
        Self::new(x, x)
    }

    /// `[center - radius, center + radius]` with outward rounding.
    pub fn centered(center: f64, radius: f64) -> Result<Self, IntervalError> {
        if radius < 0.0 {
            return Err(IntervalError::InvalidEndpoints {
                lo: center - radius,
                hi: center + radius,
            });
        }
        let (lo, elo) = two_sum(center, -radius);
        let (hi, ehi) = two_sum(center, radius);
        Self::new(dir_down(lo, elo), dir_up(hi, ehi))
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Largest absolute value over the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// `|x|` as an interval (exact on endpoints).
    pub fn abs(&self) -> Interval {
        if self.lo >= 0.0 {
            *self
        } else if self.hi <= 0.0 {
            Interval {
                lo: -self.hi,
                hi: -self.lo,
            }
        } else {
            Interval {
                lo: 0.0,
                hi: self.mag(),
            }
        }
    }

    pub fn neg(&self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    pub fn add(&self, o: &Interval) -> Interval {
        let (slo, elo) = two_sum(self.lo, o.lo);
        let (shi, ehi) = two_sum(self.hi, o.hi);
        Interval {
            lo: dir_down(slo, elo),
            hi: dir_up(shi, ehi),
        }
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        let candidates = [
            (self.lo, o.lo),
            (self.lo, o.hi),
            (self.hi, o.lo),
            (self.hi, o.hi),
        ];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (a, b) in candidates {
            lo = lo.min(mul_down(a, b));
            hi = hi.max(mul_up(a, b));
        }
        Interval { lo, hi }
    }

    /// Interval division; fails when `o` contains zero.
    pub fn div(&self, o: &Interval) -> Result<Interval, IntervalError> {
        if o.contains(0.0) {
            return Err(IntervalError::DivisionByZero { lo: o.lo, hi: o.hi });
        }
        let candidates = [
            (self.lo, o.lo),
            (self.lo, o.hi),
            (self.hi, o.lo),
            (self.hi, o.hi),
        ];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (a, b) in candidates {
            lo = lo.min(div_down(a, b));
            hi = hi.max(div_up(a, b));
        }
        let out = Interval { lo, hi };
        out.ensure_finite()
    }

    pub fn recip(&self) -> Result<Interval, IntervalError> {
        Interval::ONE.div(self)
    }

    /// Square root; fails when the interval has a negative part.
    pub fn sqrt(&self) -> Result<Interval, IntervalError> {
        if self.lo < 0.0 {
            return Err(IntervalError::SqrtOfNegative {
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(Interval {
            lo: sqrt_down(self.lo),
            hi: sqrt_up(self.hi),
        })
    }

    /// Integer power via binary exponentiation; `n < 0` divides.
    pub fn powi(&self, n: i32) -> Result<Interval, IntervalError> {
        if n < 0 {
            return self.powi(-n)?.recip();
        }
        if n % 2 == 0 && self.contains(0.0) && n != 0 {
            // Even powers of sign-changing intervals hit zero.
            let m = self.abs();
            let hi = m.powi_unsigned(n as u32).hi;
            return Interval::new(0.0, hi);
        }
        Ok(self.powi_unsigned(n as u32))
    }

    fn powi_unsigned(&self, mut n: u32) -> Interval {
        let mut base = *self;
        let mut acc = Interval::ONE;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            n >>= 1;
        }
        acc
    }

    pub fn scale(&self, c: f64) -> Interval {
        self.mul(&Interval { lo: c, hi: c })
    }

    /// Smallest interval containing both operands.
    pub fn hull(&self, o: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(o.lo),
            hi: self.hi.max(o.hi),
        }
    }

    /// Intersection of two enclosures of the same quantity; errors when
    /// they are disjoint (which would prove one of them wrong).
    pub fn intersect(&self, o: &Interval) -> Result<Interval, IntervalError> {
        Interval::new(self.lo.max(o.lo), self.hi.min(o.hi))
    }

    fn ensure_finite(self) -> Result<Interval, IntervalError> {
        if self.lo.is_finite() && self.hi.is_finite() {
            Ok(self)
        } else {
            Err(IntervalError::NonFinite)
        }
    }

    /// cos(m * pi/24) as a rigorous enclosure, any integer `m`.
    pub fn cos_pi_over_24(m: i64) -> Interval {
        let m = m.rem_euclid(48);
        match m {
            0..=12 => quadrant_cos(m),
            13..=24 => quadrant_cos(24 - m).neg(),
            25..=36 => quadrant_cos(m - 24).neg(),
            _ => quadrant_cos(48 - m),
        }
    }

    /// sin(m * pi/24) as a rigorous enclosure, any integer `m`.
    pub fn sin_pi_over_24(m: i64) -> Interval {
        Interval::cos_pi_over_24(12 - m)
    }
}

// Directed division through the FMA residual: q = fl(a/b) and
// e = fl(q*b - a) give sign(true - q) = -sign(e/b) when no underflow hides
// the residual.
fn div_down(a: f64, b: f64) -> f64 {
    let q = a / b;
    if a != 0.0 && a.abs() < PRODUCT_EXACTNESS_FLOOR {
        return next_down(q);
    }
    let e = q.mul_add(b, -a);
    if e == 0.0 {
        q
    } else if (e > 0.0) == (b > 0.0) {
        next_down(q)
    } else {
        q
    }
}

fn div_up(a: f64, b: f64) -> f64 {
    let q = a / b;
    if a != 0.0 && a.abs() < PRODUCT_EXACTNESS_FLOOR {
        return next_up(q);
    }
    let e = q.mul_add(b, -a);
    if e == 0.0 {
        q
    } else if (e > 0.0) == (b > 0.0) {
        q
    } else {
        next_up(q)
    }
}

fn sqrt_down(x: f64) -> f64 {
    let s = x.sqrt();
    if s == 0.0 {
        return 0.0;
    }
    let e = s.mul_add(s, -x);
    // s^2 > x means s overshoots the exact root.
    if e > 0.0 {
        next_down(s)
    } else {
        s
    }
}

fn sqrt_up(x: f64) -> f64 {
    let s = x.sqrt();
    if s == 0.0 {
        return 0.0;
    }
    let e = s.mul_add(s, -x);
    if e < 0.0 {
        next_up(s)
    } else {
        s
    }
}

/// cos(m pi/24) for m in 0..=12, built from exact surd identities.
fn quadrant_cos(m: i64) -> Interval {
    let two = Interval { lo: 2.0, hi: 2.0 };
    let half = |c: Interval| -> Interval {
        // cos(t/2) = sqrt((1 + cos t)/2) on the first quadrant.
        Interval::ONE
            .add(&c)
            .div(&two)
            .and_then(|v| v.sqrt())
            .expect("half-angle operand stays in [0, 2]")
    };
    let sqrt_int = |k: f64| {
        Interval::point(k)
            .and_then(|v| v.sqrt())
            .expect("sqrt of small positive integer")
    };
    match m {
        0 => Interval::ONE,
        1 => half(quadrant_cos(2)),
        2 => half(quadrant_cos(4)),
        3 => half(quadrant_cos(6)),
        4 => sqrt_int(3.0).div(&two).expect("divide by two"),
        5 => half(quadrant_cos(10)),
        6 => sqrt_int(2.0).div(&two).expect("divide by two"),
        7 => half(quadrant_cos(14)),
        8 => Interval { lo: 0.5, hi: 0.5 },
        // cos(9 pi/24) = cos(3 pi/8) = sqrt((1 - sqrt(2)/2)/2)
        9 => half(quadrant_cos(18)),
        // cos(10 pi/24) = sin(pi/12) = sqrt((1 - cos(pi/6))/2)
        10 => Interval::ONE
            .sub(&quadrant_cos(4))
            .div(&two)
            .and_then(|v| v.sqrt())
            .expect("sin(pi/12) operand in [0, 2]"),
        11 => half(quadrant_cos(22)),
        12 => Interval::ZERO,
        // Obtuse helper angles used by the half-angle calls above.
        14 => quadrant_cos(10).neg(),
        18 => quadrant_cos(6).neg(),
        22 => quadrant_cos(2).neg(),
        _ => unreachable!("quadrant_cos called with m={m}"),
    }
}

/// A fixed-length vector of intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalVector(pub Vec<Interval>);

impl IntervalVector {
    pub fn from_points(v: &[f64]) -> Result<Self, IntervalError> {
        Ok(Self(
            v.iter()
                .map(|&x| Interval::point(x))
                .collect::<Result<_, _>>()?,
        ))
    }

    /// Box `[center_i - r, center_i + r]` per coordinate.
    pub fn centered_box(center: &[f64], radius: f64) -> Result<Self, IntervalError> {
        Ok(Self(
            center
                .iter()
                .map(|&c| Interval::centered(c, radius))
                .collect::<Result<_, _>>()?,
        ))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn add(&self, o: &IntervalVector) -> Result<IntervalVector, IntervalError> {
        if self.len() != o.len() {
            return Err(IntervalError::DimensionMismatch(format!(
                "vector add {} vs {}",
                self.len(),
                o.len()
            )));
        }
        Ok(IntervalVector(
            self.0.iter().zip(&o.0).map(|(a, b)| a.add(b)).collect(),
        ))
    }

    pub fn sub(&self, o: &IntervalVector) -> Result<IntervalVector, IntervalError> {
        if self.len() != o.len() {
            return Err(IntervalError::DimensionMismatch(format!(
                "vector sub {} vs {}",
                self.len(),
                o.len()
            )));
        }
        Ok(IntervalVector(
            self.0.iter().zip(&o.0).map(|(a, b)| a.sub(b)).collect(),
        ))
    }

    pub fn dot(&self, o: &IntervalVector) -> Result<Interval, IntervalError> {
        if self.len() != o.len() {
            return Err(IntervalError::DimensionMismatch(format!(
                "dot {} vs {}",
                self.len(),
                o.len()
            )));
        }
        let mut acc = Interval::ZERO;
        for (a, b) in self.0.iter().zip(&o.0) {
            acc = acc.add(&a.mul(b));
        }
        Ok(acc)
    }
}

/// Enclosure of the 1-norm over all pointwise selections.
pub fn norm_1_vec(v: &IntervalVector) -> Interval {
    let mut acc = Interval::ZERO;
    for x in &v.0 {
        acc = acc.add(&x.abs());
    }
    acc
}

/// Enclosure of the infinity-norm over all pointwise selections.
pub fn norm_inf_vec(v: &IntervalVector) -> Interval {
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for x in &v.0 {
        let a = x.abs();
        lo = lo.max(a.lo);
        hi = hi.max(a.hi);
    }
    Interval { lo, hi }
}

/// A row-major rectangular matrix of intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Interval>,
}

impl IntervalMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Interval::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            *m.get_mut(i, i) = Interval::ONE;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Interval>>) -> Result<Self, IntervalError> {
        let r = rows.len();
        let c = rows.first().map(|row| row.len()).unwrap_or(0);
        if rows.iter().any(|row| row.len() != c) {
            return Err(IntervalError::DimensionMismatch(
                "ragged rows in matrix".into(),
            ));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_points(m: &nalgebra::DMatrix<f64>) -> Result<Self, IntervalError> {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                *out.get_mut(i, j) = Interval::point(m[(i, j)])?;
            }
        }
        Ok(out)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Interval {
        &self.data[i * self.cols + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut Interval {
        &mut self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> IntervalVector {
        IntervalVector(self.data[i * self.cols..(i + 1) * self.cols].to_vec())
    }

    pub fn transpose(&self) -> IntervalMatrix {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.get_mut(j, i) = *self.get(i, j);
            }
        }
        out
    }

    pub fn add(&self, o: &IntervalMatrix) -> Result<IntervalMatrix, IntervalError> {
        if self.rows != o.rows || self.cols != o.cols {
            return Err(IntervalError::DimensionMismatch("matrix add".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&o.data) {
            *a = a.add(b);
        }
        Ok(out)
    }

    pub fn sub(&self, o: &IntervalMatrix) -> Result<IntervalMatrix, IntervalError> {
        if self.rows != o.rows || self.cols != o.cols {
            return Err(IntervalError::DimensionMismatch("matrix sub".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&o.data) {
            *a = a.sub(b);
        }
        Ok(out)
    }

    pub fn scale(&self, c: &Interval) -> IntervalMatrix {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a = a.mul(c);
        }
        out
    }

    pub fn matvec(&self, v: &IntervalVector) -> Result<IntervalVector, IntervalError> {
        if self.cols != v.len() {
            return Err(IntervalError::DimensionMismatch(format!(
                "matvec {}x{} times {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let mut acc = Interval::ZERO;
            for j in 0..self.cols {
                acc = acc.add(&self.get(i, j).mul(&v.0[j]));
            }
            out.push(acc);
        }
        Ok(IntervalVector(out))
    }

    pub fn matmul(&self, o: &IntervalMatrix) -> Result<IntervalMatrix, IntervalError> {
        if self.cols != o.rows {
            return Err(IntervalError::DimensionMismatch(format!(
                "matmul {}x{} times {}x{}",
                self.rows, self.cols, o.rows, o.cols
            )));
        }
        let mut out = IntervalMatrix::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = *self.get(i, k);
                for j in 0..o.cols {
                    let t = aik.mul(o.get(k, j));
                    *out.get_mut(i, j) = out.get(i, j).add(&t);
                }
            }
        }
        Ok(out)
    }

    /// Rigorous enclosure of the inverse by Gauss-Jordan elimination with
    /// partial pivoting on the midpoints. Fails if a pivot interval
    /// contains zero.
    pub fn inverse(&self) -> Result<IntervalMatrix, IntervalError> {
        if self.rows != self.cols {
            return Err(IntervalError::DimensionMismatch("inverse".into()));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = IntervalMatrix::identity(n);
        for col in 0..n {
            let mut pivot_row = col;
            let mut best = 0.0f64;
            for r in col..n {
                let mag = a.get(r, col).midpoint().abs();
                if mag > best {
                    best = mag;
                    pivot_row = r;
                }
            }
            if pivot_row != col {
                for j in 0..n {
                    let t = *a.get(col, j);
                    *a.get_mut(col, j) = *a.get(pivot_row, j);
                    *a.get_mut(pivot_row, j) = t;
                    let t = *inv.get(col, j);
                    *inv.get_mut(col, j) = *inv.get(pivot_row, j);
                    *inv.get_mut(pivot_row, j) = t;
                }
            }
            let pivot = *a.get(col, col);
            for j in 0..n {
                *a.get_mut(col, j) = a.get(col, j).div(&pivot)?;
                *inv.get_mut(col, j) = inv.get(col, j).div(&pivot)?;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = *a.get(r, col);
                for j in 0..n {
                    let ta = factor.mul(a.get(col, j));
                    *a.get_mut(r, j) = a.get(r, j).sub(&ta);
                    let ti = factor.mul(inv.get(col, j));
                    *inv.get_mut(r, j) = inv.get(r, j).sub(&ti);
                }
            }
        }
        Ok(inv)
    }

    /// Rigorous inverse enclosure through a floating-point preconditioner:
    /// with `C ~ mid(self)^{-1}` and `E = I - C self`, the inverse lies in
    /// `(I + E + B) C` where `B` bounds the Neumann tail `E^2 (I-E)^{-1}`
    /// entrywise by `||E||_inf^2 / (1 - ||E||_inf)`. Much tighter than
    /// interval elimination away from singularity; fails if `||E||_inf`
    /// does not certify contraction.
    pub fn inverse_preconditioned(&self) -> Result<IntervalMatrix, IntervalError> {
        if self.rows != self.cols {
            return Err(IntervalError::DimensionMismatch("inverse".into()));
        }
        let n = self.rows;
        let mid = nalgebra::DMatrix::from_fn(n, n, |i, j| self.get(i, j).midpoint());
        let c = mid
            .try_inverse()
            .ok_or(IntervalError::NonFinite)?;
        let c_iv = IntervalMatrix::from_points(&c)?;
        let e = IntervalMatrix::identity(n).sub(&c_iv.matmul(self)?)?;
        let mut e_norm = Interval::ZERO;
        for i in 0..n {
            let r = norm_1_vec(&e.row(i));
            if r.hi() > e_norm.hi() {
                e_norm = r;
            }
        }
        if e_norm.hi() >= 0.5 {
            return Err(IntervalError::NonFinite);
        }
        let tail = e_norm
            .mul(&e_norm)
            .div(&Interval::ONE.sub(&e_norm))?
            .hi();
        let mut series = IntervalMatrix::identity(n).add(&e)?;
        let bound = Interval::new(-tail, tail)?;
        for i in 0..n {
            for j in 0..n {
                *series.get_mut(i, j) = series.get(i, j).add(&bound);
            }
        }
        series.matmul(&c_iv)
    }

    /// tr(self * o) without forming the product.
    pub fn trace_of_product(&self, o: &IntervalMatrix) -> Result<Interval, IntervalError> {
        if self.cols != o.rows || self.rows != o.cols {
            return Err(IntervalError::DimensionMismatch("trace of product".into()));
        }
        let mut acc = Interval::ZERO;
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc = acc.add(&self.get(i, j).mul(o.get(j, i)));
            }
        }
        Ok(acc)
    }

    pub fn trace(&self) -> Interval {
        let mut acc = Interval::ZERO;
        for i in 0..self.rows.min(self.cols) {
            acc = acc.add(self.get(i, i));
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_sum_stays_degenerate() {
        let a = Interval::point(1.0).unwrap();
        let b = Interval::point(2.0).unwrap();
        assert_eq!(a.add(&b), Interval::point(3.0).unwrap());
    }

    #[test]
    fn mul_endpoint_products() {
        let a = Interval::new(-1.0, 2.0).unwrap();
        let b = Interval::new(3.0, 4.0).unwrap();
        assert_eq!(a.mul(&b), Interval::new(-4.0, 8.0).unwrap());
    }

    #[test]
    fn sqrt_of_exact_squares() {
        let x = Interval::new(4.0, 9.0).unwrap();
        assert_eq!(x.sqrt().unwrap(), Interval::new(2.0, 3.0).unwrap());
    }

    #[test]
    fn sqrt_rejects_negative() {
        let x = Interval::new(-1.0, 4.0).unwrap();
        assert!(matches!(
            x.sqrt(),
            Err(IntervalError::SqrtOfNegative { .. })
        ));
    }

    #[test]
    fn div_rejects_zero_straddle() {
        let a = Interval::point(1.0).unwrap();
        let b = Interval::new(-1.0, 2.0).unwrap();
        assert!(matches!(a.div(&b), Err(IntervalError::DivisionByZero { .. })));
        let exact = Interval::new(-0.5, -0.25);
        assert!(Interval::new(-1.0, -0.5)
            .unwrap()
            .div(&Interval::point(2.0).unwrap())
            .unwrap()
            .contains_interval(&exact.unwrap()));
    }

    #[test]
    fn norms_match_hand_values() {
        let v = IntervalVector(vec![
            Interval::point(1.0).unwrap(),
            Interval::point(-2.0).unwrap(),
        ]);
        assert_eq!(norm_inf_vec(&v), Interval::point(2.0).unwrap());

        let w = IntervalVector(vec![
            Interval::new(-1.0, 1.0).unwrap(),
            Interval::new(0.0, 2.0).unwrap(),
        ]);
        assert_eq!(norm_1_vec(&w), Interval::new(0.0, 3.0).unwrap());
    }

    #[test]
    fn norm_inf_of_point_vector_is_exact() {
        let v = IntervalVector::from_points(&[0.25, -3.5, 1.0]).unwrap();
        assert_eq!(norm_inf_vec(&v), Interval::point(3.5).unwrap());
    }

    #[test]
    fn trig_table_values() {
        // cos(pi/3) and cos(pi/2) are exact table entries.
        assert_eq!(Interval::cos_pi_over_24(8), Interval::new(0.5, 0.5).unwrap());
        assert_eq!(Interval::cos_pi_over_24(12), Interval::ZERO);
        // cos(pi/4) encloses sqrt(2)/2.
        let c = Interval::cos_pi_over_24(6);
        assert!(c.contains(std::f64::consts::FRAC_1_SQRT_2));
        assert!(c.width() < 1e-15);
        // cos(7 pi/8) = -sqrt(2 + sqrt(2))/2.
        let c = Interval::cos_pi_over_24(21);
        let expect = -(2.0 + 2.0f64.sqrt()).sqrt() / 2.0;
        assert!(c.contains(expect), "{c:?} vs {expect}");
        assert!(c.width() < 1e-15);
        // sin(pi/6) = 1/2 via the sine reduction.
        assert!(Interval::sin_pi_over_24(4).contains(0.5));
        // Periodicity of the reduction, and agreement with the standard
        // library up to the inexactness of its pi.
        for m in -60..60 {
            let a = Interval::cos_pi_over_24(m);
            let b = Interval::cos_pi_over_24(m + 48);
            assert_eq!(a, b);
            assert!(a.width() < 1e-15);
            let std_cos = (m as f64 * std::f64::consts::PI / 24.0).cos();
            assert!(
                a.lo() - 1e-14 <= std_cos && std_cos <= a.hi() + 1e-14,
                "m={m}: {a:?} vs {std_cos}"
            );
        }
    }

    #[test]
    fn matvec_encloses_point_product() {
        let m = IntervalMatrix::from_rows(vec![
            vec![Interval::point(1.0).unwrap(), Interval::new(0.0, 1.0).unwrap()],
            vec![Interval::point(-2.0).unwrap(), Interval::point(0.5).unwrap()],
        ])
        .unwrap();
        let v = IntervalVector::from_points(&[2.0, 4.0]).unwrap();
        let out = m.matvec(&v).unwrap();
        // Row 0: 2 + [0,1]*4 = [2,6]; row 1: -4 + 2 = -2.
        assert!(out.0[0].contains(2.0) && out.0[0].contains(6.0));
        assert!(out.0[1].contains(-2.0));
    }

    #[test]
    fn powi_even_power_through_zero() {
        let x = Interval::new(-2.0, 1.0).unwrap();
        let sq = x.powi(2).unwrap();
        assert!(sq.lo() == 0.0 && sq.contains(4.0));
        let inv = Interval::new(2.0, 4.0).unwrap().powi(-1).unwrap();
        assert!(inv.contains(0.25) && inv.contains(0.5));
    }
}
