//! The general divergence-orbit framework.
//!
//! Iterates, function values, gradients and Hessians are generated from
//! periodic normalized data through an orthogonal matrix `Q` (with
//! `Q^p = I`) and a diagonal contraction `D(lambda)` whose exponents split
//! the coordinates into three blocks (exponent 0, 1 and `d_n`):
//!
//! ```text
//! x_k = Q^k D^k xbar_k          f_k = offset + lambda^{k d_n} fbar_k
//! g_k = lambda^{k d_n} Q^k D^{-k} gbar_k
//! h_k = lambda^{k d_n} Q^k D^{-k} hbar_k D^{-k} Q^{-k}
//! ```
//!
//! The module materializes these closed forms, converts between normalized
//! steps and normalized iterates (the reconstruction is singular in the
//! exponent-0 block, where only a closure condition plus the convention
//! `xbar_{a,0} = 0` pins the answer), and exposes the limit search lines
//! obtained by projecting with `D(0)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors from schema construction and evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error("invalid dimensions: {0}")]
    InvalidDimension(String),
    #[error("lambda must lie in (0, 1), got {0}")]
    InvalidLambda(f64),
    #[error("Q is not orthogonal (defect {defect:.3e})")]
    NotOrthogonal { defect: f64 },
    #[error("Q^p differs from the identity (defect {defect:.3e})")]
    NotPeriodic { defect: f64 },
    #[error("Q does not commute with D(lambda) (defect {defect:.3e})")]
    NotCommuting { defect: f64 },
    #[error("normalized Hessian at index {k} is not symmetric (defect {defect:.3e})")]
    AsymmetricHessian { k: usize, defect: f64 },
    #[error("diagonal exponents must be non-decreasing over blocks 0/1/d_n: {0}")]
    BadExponents(String),
    #[error("materialization horizon exceeded: k = {k}, horizon = {horizon}")]
    HorizonExceeded { k: usize, horizon: usize },
    #[error("step closure violated in the exponent-0 block (residual {residual:.3e})")]
    ClosureViolation { residual: f64 },
    #[error("limit line at index {k} has zero direction")]
    ZeroDirection { k: usize },
}

/// Sizes of the three diagonal blocks of `D(lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blocks {
    pub a: usize,
    pub b: usize,
    pub c: usize,
}

/// Closed-form data of one iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterializedPoint {
    pub x: DVector<f64>,
    pub f: f64,
    pub g: DVector<f64>,
    pub h: DMatrix<f64>,
}

/// A limit search line: base point plus direction, both living in the
/// exponent-0 coordinate block (all other coordinates are zero).
#[derive(Debug, Clone, PartialEq)]
pub struct LimitLine {
    pub point: DVector<f64>,
    pub direction: DVector<f64>,
}

const STRUCT_TOL: f64 = 1e-10;

/// Periodic normalized orbit data together with `Q`, `D(lambda)` and the
/// objective offset.
#[derive(Debug, Clone)]
pub struct OrbitSchema {
    dim: usize,
    period: usize,
    lambda: f64,
    d_exponents: Vec<u32>,
    d_n: u32,
    blocks: Blocks,
    q: DMatrix<f64>,
    q_powers: Vec<DMatrix<f64>>,
    x_bar: Vec<DVector<f64>>,
    f_bar: Vec<f64>,
    g_bar: Vec<DVector<f64>>,
    h_bar: Vec<DMatrix<f64>>,
    f_offset: f64,
    horizon: usize,
}

impl OrbitSchema {
    /// Validates all structural invariants and builds the schema.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        q: DMatrix<f64>,
        lambda: f64,
        d_exponents: Vec<u32>,
        x_bar: Vec<DVector<f64>>,
        f_bar: Vec<f64>,
        g_bar: Vec<DVector<f64>>,
        h_bar: Vec<DMatrix<f64>>,
        f_offset: f64,
    ) -> Result<Self, SchemaError> {
        let dim = d_exponents.len();
        if q.nrows() != dim || q.ncols() != dim {
            return Err(SchemaError::InvalidDimension(format!(
                "Q is {}x{}, exponents have length {dim}",
                q.nrows(),
                q.ncols()
            )));
        }
        if !(0.0..1.0).contains(&lambda) || lambda <= 0.0 {
            return Err(SchemaError::InvalidLambda(lambda));
        }
        let period = x_bar.len();
        if period == 0
            || f_bar.len() != period
            || g_bar.len() != period
            || h_bar.len() != period
        {
            return Err(SchemaError::InvalidDimension(format!(
                "period lists disagree: x {} f {} g {} h {}",
                x_bar.len(),
                f_bar.len(),
                g_bar.len(),
                h_bar.len()
            )));
        }
        for (k, v) in x_bar.iter().enumerate() {
            if v.len() != dim || g_bar[k].len() != dim {
                return Err(SchemaError::InvalidDimension(format!(
                    "vector length at index {k}"
                )));
            }
            if h_bar[k].nrows() != dim || h_bar[k].ncols() != dim {
                return Err(SchemaError::InvalidDimension(format!(
                    "Hessian shape at index {k}"
                )));
            }
            let sym_defect = (&h_bar[k] - h_bar[k].transpose()).abs().max();
            if sym_defect > STRUCT_TOL {
                return Err(SchemaError::AsymmetricHessian {
                    k,
                    defect: sym_defect,
                });
            }
        }

        let (blocks, d_n) = derive_blocks(&d_exponents)?;

        let orth_defect = (q.transpose() * &q - DMatrix::identity(dim, dim))
            .abs()
            .max();
        if orth_defect > STRUCT_TOL {
            return Err(SchemaError::NotOrthogonal {
                defect: orth_defect,
            });
        }

        let d_mat = DMatrix::from_diagonal(&DVector::from_iterator(
            dim,
            d_exponents.iter().map(|&e| lambda.powi(e as i32)),
        ));
        let commute_defect = (&q * &d_mat - &d_mat * &q).abs().max();
        if commute_defect > STRUCT_TOL {
            return Err(SchemaError::NotCommuting {
                defect: commute_defect,
            });
        }

        let mut q_powers = Vec::with_capacity(period + 1);
        q_powers.push(DMatrix::identity(dim, dim));
        for k in 1..=period {
            q_powers.push(&q_powers[k - 1] * &q);
        }
        let periodicity_defect = (&q_powers[period] - DMatrix::identity(dim, dim))
            .abs()
            .max();
        if periodicity_defect > STRUCT_TOL {
            return Err(SchemaError::NotPeriodic {
                defect: periodicity_defect,
            });
        }
        q_powers.pop();

        let horizon = if d_n == 0 {
            usize::MAX
        } else {
            (300.0 * std::f64::consts::LN_10 / (d_n as f64 * -lambda.ln())) as usize
        };

        Ok(Self {
            dim,
            period,
            lambda,
            d_exponents,
            d_n,
            blocks,
            q,
            q_powers,
            x_bar,
            f_bar,
            g_bar,
            h_bar,
            f_offset,
            horizon,
        })
    }

    /// Builds the schema from normalized steps instead of iterates.
    #[allow(clippy::too_many_arguments)]
    pub fn from_steps(
        q: DMatrix<f64>,
        lambda: f64,
        d_exponents: Vec<u32>,
        steps: &[DVector<f64>],
        f_bar: Vec<f64>,
        g_bar: Vec<DVector<f64>>,
        h_bar: Vec<DMatrix<f64>>,
        f_offset: f64,
        closure_tol: f64,
    ) -> Result<Self, SchemaError> {
        let x_bar = steps_to_iterates(&q, lambda, &d_exponents, steps, closure_tol)?;
        Self::new(q, lambda, d_exponents, x_bar, f_bar, g_bar, h_bar, f_offset)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn d_n(&self) -> u32 {
        self.d_n
    }

    pub fn blocks(&self) -> Blocks {
        self.blocks
    }

    pub fn d_exponents(&self) -> &[u32] {
        &self.d_exponents
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// `Q^k` for any `k >= 0`, using `Q^p = I`.
    pub fn q_pow(&self, k: usize) -> &DMatrix<f64> {
        &self.q_powers[k % self.period]
    }

    pub fn x_bar(&self, k: usize) -> &DVector<f64> {
        &self.x_bar[k % self.period]
    }

    pub fn f_bar(&self, k: usize) -> f64 {
        self.f_bar[k % self.period]
    }

    pub fn g_bar(&self, k: usize) -> &DVector<f64> {
        &self.g_bar[k % self.period]
    }

    pub fn h_bar(&self, k: usize) -> &DMatrix<f64> {
        &self.h_bar[k % self.period]
    }

    pub fn f_offset(&self) -> f64 {
        self.f_offset
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Entries of `D(lambda)^k`; `k` may be negative.
    pub fn d_pow(&self, k: i64) -> DVector<f64> {
        DVector::from_iterator(
            self.dim,
            self.d_exponents
                .iter()
                .map(|&e| self.lambda.powi((k * e as i64) as i32)),
        )
    }

    /// `lambda^e` for signed exponents.
    pub fn lambda_pow(&self, e: i64) -> f64 {
        self.lambda.powi(e as i32)
    }

    /// Closed-form evaluation of `(x_k, f_k, g_k, h_k)`.
    pub fn materialize(&self, k: usize) -> Result<MaterializedPoint, SchemaError> {
        if k > self.horizon {
            return Err(SchemaError::HorizonExceeded {
                k,
                horizon: self.horizon,
            });
        }
        let ki = k as i64;
        let qk = self.q_pow(k);
        let dk = self.d_pow(ki);
        let dk_inv = self.d_pow(-ki);
        let scale = self.lambda.powi((ki * self.d_n as i64) as i32);

        let x = qk * self.x_bar(k).component_mul(&dk);
        let f = self.f_offset + scale * self.f_bar(k);
        let g = scale * (qk * self.g_bar(k).component_mul(&dk_inv));

        let hb = self.h_bar(k);
        let mut hm = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let v = hb[(i, j)];
                if v != 0.0 {
                    // lambda^{k d_n} * lambda^{-k d_i} * lambda^{-k d_j}
                    let e = ki
                        * (self.d_n as i64
                            - self.d_exponents[i] as i64
                            - self.d_exponents[j] as i64);
                    hm[(i, j)] = v * self.lambda.powi(e as i32);
                }
            }
        }
        let h = qk * hm * qk.transpose();
        Ok(MaterializedPoint { x, f, g, h })
    }

    /// Normalized step `sbar_k = Q D(lambda) xbar_{k+1} - xbar_k`.
    pub fn normalized_step(&self, k: usize) -> DVector<f64> {
        let d1 = self.d_pow(1);
        &self.q * self.x_bar(k + 1).component_mul(&d1) - self.x_bar(k)
    }

    /// All `p` normalized steps.
    pub fn normalized_steps(&self) -> Vec<DVector<f64>> {
        (0..self.period).map(|k| self.normalized_step(k)).collect()
    }

    /// Projection with `D(0)`: keeps the exponent-0 block, zeroes the rest.
    pub fn project_d0(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        for i in 0..self.dim {
            if self.d_exponents[i] != 0 {
                out[i] = 0.0;
            }
        }
        out
    }

    /// Projection with `D'(0)`: keeps the exponent-1 block, zeroes the rest.
    pub fn project_dprime0(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        for i in 0..self.dim {
            if self.d_exponents[i] != 1 {
                out[i] = 0.0;
            }
        }
        out
    }

    /// The limit search line `L_k = { D(0) Q^k (xbar_k + alpha sbar_k) }`.
    pub fn limit_line(&self, k: usize) -> Result<LimitLine, SchemaError> {
        let qk = self.q_pow(k);
        let point = self.project_d0(&(qk * self.x_bar(k)));
        let direction = self.project_d0(&(qk * self.normalized_step(k)));
        if direction.amax() < 1e-14 {
            return Err(SchemaError::ZeroDirection { k });
        }
        Ok(LimitLine { point, direction })
    }

    /// The limit vertex that the subsequence `x_{k + p m}` converges to.
    pub fn limit_vertex(&self, k: usize) -> DVector<f64> {
        self.project_d0(&(self.q_pow(k) * self.x_bar(k)))
    }
}

fn derive_blocks(d_exponents: &[u32]) -> Result<(Blocks, u32), SchemaError> {
    let n = d_exponents.len();
    if n == 0 {
        return Err(SchemaError::BadExponents("empty exponent vector".into()));
    }
    if d_exponents.windows(2).any(|w| w[0] > w[1]) {
        return Err(SchemaError::BadExponents(format!(
            "not non-decreasing: {d_exponents:?}"
        )));
    }
    let d_n = *d_exponents.last().unwrap();
    let a = d_exponents.iter().filter(|&&e| e == 0).count();
    let b = d_exponents.iter().filter(|&&e| e == 1).count();
    let c = if d_n > 1 {
        d_exponents.iter().filter(|&&e| e == d_n).count()
    } else {
        0
    };
    if a + b + c != n {
        return Err(SchemaError::BadExponents(format!(
            "exponents must take values in {{0, 1, d_n}}: {d_exponents:?}"
        )));
    }
    Ok((Blocks { a, b, c }, d_n))
}

/// Reconstructs normalized iterates from normalized steps (the inverse of
/// [`OrbitSchema::normalized_step`]).
///
/// The exponent-0 block is translation invariant, so it is pinned by
/// `xbar_{a,0} = 0`; this requires the closure condition
/// `sum_j Q_a^j sbar_{a,j} = 0`, checked against `closure_tol` (the residual
/// travels with the error on violation). All other blocks are recovered by
/// the geometric sums.
pub fn steps_to_iterates(
    q: &DMatrix<f64>,
    lambda: f64,
    d_exponents: &[u32],
    steps: &[DVector<f64>],
    closure_tol: f64,
) -> Result<Vec<DVector<f64>>, SchemaError> {
    let n = d_exponents.len();
    let p = steps.len();
    if p == 0 {
        return Err(SchemaError::InvalidDimension("no steps given".into()));
    }
    if steps.iter().any(|s| s.len() != n) {
        return Err(SchemaError::InvalidDimension(
            "step length disagrees with exponents".into(),
        ));
    }
    derive_blocks(d_exponents)?;

    let mut q_powers = Vec::with_capacity(p);
    q_powers.push(DMatrix::identity(n, n));
    for k in 1..p {
        q_powers.push(&q_powers[k - 1] * q);
    }

    // Closure of the exponent-0 block at k = 0. The projection of Q^j acts
    // as Q_a^j because Q is block diagonal.
    let mut closure = DVector::zeros(n);
    for (j, s) in steps.iter().enumerate() {
        closure += &q_powers[j] * s;
    }
    let mut residual = 0.0f64;
    for i in 0..n {
        if d_exponents[i] == 0 {
            residual = residual.max(closure[i].abs());
        }
    }
    if residual > closure_tol {
        return Err(SchemaError::ClosureViolation { residual });
    }

    let mut x_bar = vec![DVector::zeros(n); p];

    // Exponent-0 block: xbar_{a,0} = 0, then prefix sums rotated back.
    let mut prefix = DVector::zeros(n);
    for k in 1..p {
        prefix += &q_powers[k - 1] * &steps[k - 1];
        let rotated = q_powers[k].transpose() * &prefix;
        for i in 0..n {
            if d_exponents[i] == 0 {
                x_bar[k][i] = rotated[i];
            }
        }
    }

    // Contracting blocks: geometric sums with denominator lambda^{p d} - 1.
    let exps: Vec<i64> = {
        let mut e: Vec<i64> = d_exponents
            .iter()
            .filter(|&&d| d > 0)
            .map(|&d| d as i64)
            .collect();
        e.dedup();
        e
    };
    for &d in &exps {
        let denom = lambda.powi((p as i64 * d) as i32) - 1.0;
        for k in 0..p {
            let mut acc = DVector::zeros(n);
            for j in 0..p {
                let w = lambda.powi((j as i64 * d) as i32);
                let term = &q_powers[j] * &steps[(k + j) % p];
                acc += w * term;
            }
            for i in 0..n {
                if d_exponents[i] as i64 == d {
                    x_bar[k][i] = acc[i] / denom;
                }
            }
        }
    }

    Ok(x_bar)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_schema() -> OrbitSchema {
        // Dimension 4, blocks (2, 1, 1), d_n = 3, period 4: the exponent-0
        // block rotates by a quarter turn.
        let mut q = DMatrix::identity(4, 4);
        q[(0, 0)] = 0.0;
        q[(0, 1)] = -1.0;
        q[(1, 0)] = 1.0;
        q[(1, 1)] = 0.0;
        let lambda = 0.5;
        let steps: Vec<DVector<f64>> = (0..4)
            .map(|_| DVector::from_vec(vec![1.0, 1.0, 0.5, 0.25]))
            .collect();
        let f_bar = vec![1.0; 4];
        let g_bar: Vec<DVector<f64>> = (0..4)
            .map(|_| DVector::from_vec(vec![-1.0, -1.0, -1.0, -1.0]))
            .collect();
        let mut h = DMatrix::zeros(4, 4);
        h[(0, 0)] = 1.0;
        h[(1, 1)] = 1.0;
        h[(2, 2)] = 1.0;
        let h_bar = vec![h; 4];
        OrbitSchema::from_steps(
            q,
            lambda,
            vec![0, 0, 1, 3],
            &steps,
            f_bar,
            g_bar,
            h_bar,
            0.0,
            1e-10,
        )
        .unwrap()
    }

    #[test]
    fn materialize_at_zero_returns_bars() {
        let s = toy_schema();
        let m = s.materialize(0).unwrap();
        assert_eq!(m.x, s.x_bar(0).clone());
        assert_eq!(m.f, s.f_bar(0));
        assert_eq!(m.g, s.g_bar(0).clone());
        assert_eq!(m.h, s.h_bar(0).clone());
    }

    #[test]
    fn materialize_at_period_scales_by_d_blocks() {
        let s = toy_schema();
        let p = s.period();
        let m = s.materialize(p).unwrap();
        let x0 = s.x_bar(0);
        let lp = s.lambda().powi(p as i32);
        let lpd = s.lambda().powi((p as u32 * s.d_n()) as i32);
        // Q^p = I: exponent-0 block unchanged, others contracted.
        assert!((m.x[0] - x0[0]).abs() < 1e-12);
        assert!((m.x[1] - x0[1]).abs() < 1e-12);
        assert!((m.x[2] - lp * x0[2]).abs() < 1e-12);
        assert!((m.x[3] - lpd * x0[3]).abs() < 1e-12);
    }

    #[test]
    fn steps_round_trip_through_iterates() {
        let s = toy_schema();
        for k in 0..s.period() {
            let step = s.normalized_step(k);
            let expect = DVector::from_vec(vec![1.0, 1.0, 0.5, 0.25]);
            assert!((step - expect).amax() < 1e-12, "step {k}");
        }
        // Reconstruct from the recovered steps and compare.
        let rebuilt = steps_to_iterates(
            s.q(),
            s.lambda(),
            s.d_exponents(),
            &s.normalized_steps(),
            1e-10,
        )
        .unwrap();
        for k in 0..s.period() {
            assert!((&rebuilt[k] - s.x_bar(k)).amax() < 1e-10, "iterate {k}");
        }
    }

    #[test]
    fn materialized_consistency_over_three_periods() {
        let s = toy_schema();
        for k in 0..3 * s.period() {
            let a = s.materialize(k).unwrap();
            let b = s.materialize(k + 1).unwrap();
            let dk = s.d_pow(k as i64);
            let closed = s.q_pow(k) * s.normalized_step(k).component_mul(&dk);
            assert!(
                ((b.x - a.x) - closed).amax() < 1e-10,
                "step consistency at {k}"
            );
        }
    }

    #[test]
    fn constant_orbit_has_zero_steps() {
        // Q = I, all exponents zero: D = I, constant xbar gives zero steps.
        let n = 3;
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let schema = OrbitSchema::new(
            DMatrix::identity(n, n),
            0.5,
            vec![0, 0, 0],
            vec![x.clone(), x.clone()],
            vec![1.0; 2],
            vec![DVector::zeros(n); 2],
            vec![DMatrix::zeros(n, n); 2],
            0.0,
        )
        .unwrap();
        for k in 0..2 {
            assert_eq!(schema.normalized_step(k).amax(), 0.0);
        }
    }

    #[test]
    fn zero_steps_give_zero_iterates() {
        let n = 3;
        let steps = vec![DVector::zeros(n); 5];
        let x = steps_to_iterates(
            &DMatrix::identity(n, n),
            0.7,
            &[0, 1, 3],
            &steps,
            1e-12,
        )
        .unwrap();
        for v in x {
            assert_eq!(v.amax(), 0.0);
        }
    }

    #[test]
    fn closure_violation_is_reported() {
        let n = 2;
        let steps = vec![DVector::from_vec(vec![1.0, 0.0]); 3];
        let err = steps_to_iterates(
            &DMatrix::identity(n, n),
            0.5,
            &[0, 3],
            &steps,
            1e-10,
        );
        match err {
            Err(SchemaError::ClosureViolation { residual }) => {
                assert!((residual - 3.0).abs() < 1e-12)
            }
            other => panic!("expected closure violation, got {other:?}"),
        }
    }

    #[test]
    fn horizon_guard_fires() {
        let s = toy_schema();
        let h = s.horizon();
        assert!(s.materialize(h).is_ok());
        assert!(matches!(
            s.materialize(h + 1),
            Err(SchemaError::HorizonExceeded { .. })
        ));
    }

    #[test]
    fn bad_structure_is_rejected() {
        let n = 2;
        // Non-orthogonal Q.
        let q = DMatrix::from_row_slice(n, n, &[1.0, 1.0, 0.0, 1.0]);
        let r = OrbitSchema::new(
            q,
            0.5,
            vec![0, 3],
            vec![DVector::zeros(n)],
            vec![1.0],
            vec![DVector::zeros(n)],
            vec![DMatrix::zeros(n, n)],
            0.0,
        );
        assert!(matches!(r, Err(SchemaError::NotOrthogonal { .. })));
        // Exponents out of order.
        let r = OrbitSchema::new(
            DMatrix::identity(n, n),
            0.5,
            vec![3, 0],
            vec![DVector::zeros(n)],
            vec![1.0],
            vec![DVector::zeros(n)],
            vec![DMatrix::zeros(n, n)],
            0.0,
        );
        assert!(matches!(r, Err(SchemaError::BadExponents(_))));
    }
}
