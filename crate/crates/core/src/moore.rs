//! Moore-style interval existence test for roots of nonlinear systems.
//!
//! Given a point `center`, a radius `r` and a preconditioner `A`, the test
//! evaluates rigorous enclosures of the system and of its Jacobian over the
//! box around `center` and computes
//!
//! ```text
//! a = sup_{i, x in D} || A^t grad f_i(x) - e_i ||_1
//! b = sup_i || A^t e_i ||_1 * || f(center) ||_inf
//! ```
//!
//! If `a < 1` and `b < r (1 - a)`, the preconditioned residual iteration
//! `x <- x - A f(x)` contracts inside the box, so a root `x*` exists with
//! `||x* - center||_inf <= b / (1 - a)`.
//!
//! Two deliberate conservatisms: the domain of the underlying lemma is the
//! 1-norm ball of radius `r`, and the enclosures here are taken over the
//! circumscribing coordinate box, which only enlarges `a`; and `a` is the
//! plain Jacobian-defect supremum, without the `||f(center)||_inf` factor,
//! which is the bound the contraction argument actually consumes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::interval::{
    norm_1_vec, norm_inf_vec, Interval, IntervalError, IntervalMatrix, IntervalVector,
};

/// Result of the existence test around `center`.
///
/// When `certified` is true, a root of the system lies within
/// `solution_radius` of `center` in the infinity norm. Failure to certify is
/// not an error: the offending bound is reported in `a_bound`/`b_bound` and
/// `failure` names the condition that broke.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MooreCertificate {
    pub center: Vec<f64>,
    pub radius: f64,
    pub a_bound: f64,
    pub b_bound: f64,
    pub solution_radius: f64,
    pub certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Runs the existence test.
///
/// `f_enclosure` must return, for any sub-box of the domain, an enclosure of
/// the system values over that box; `grad_enclosures` an interval matrix
/// whose row `i` encloses the gradient of component `i` over the box. Both
/// are trusted to be rigorous; everything downstream is outward rounded.
pub fn moore_certify(
    f_enclosure: impl Fn(&IntervalVector) -> Result<IntervalVector, IntervalError>,
    grad_enclosures: impl Fn(&IntervalVector) -> Result<IntervalMatrix, IntervalError>,
    center: &[f64],
    radius: f64,
    preconditioner: &DMatrix<f64>,
) -> Result<MooreCertificate, IntervalError> {
    let n = center.len();
    if n == 0 || radius <= 0.0 || !radius.is_finite() {
        return Err(IntervalError::InvalidEndpoints {
            lo: radius,
            hi: radius,
        });
    }
    if preconditioner.nrows() != n || preconditioner.ncols() != n {
        return Err(IntervalError::DimensionMismatch(format!(
            "preconditioner {}x{} for a system of dimension {}",
            preconditioner.nrows(),
            preconditioner.ncols(),
            n
        )));
    }

    let a_mat = IntervalMatrix::from_points(preconditioner)?;
    let box_d = IntervalVector::centered_box(center, radius)?;
    let center_iv = IntervalVector::from_points(center)?;

    let f_center = f_enclosure(&center_iv)?;
    if f_center.len() != n {
        return Err(IntervalError::DimensionMismatch(format!(
            "system returned {} components for dimension {}",
            f_center.len(),
            n
        )));
    }
    let f_center_norm = norm_inf_vec(&f_center).hi();

    let jac = grad_enclosures(&box_d)?;
    if jac.nrows() != n || jac.ncols() != n {
        return Err(IntervalError::DimensionMismatch(format!(
            "Jacobian enclosure {}x{} for dimension {}",
            jac.nrows(),
            jac.ncols(),
            n
        )));
    }

    // Row i of (J * A) is (A^t grad f_i)^t; subtract e_i^t and take 1-norms.
    let ja = jac.matmul(&a_mat)?;
    let defect = ja.sub(&IntervalMatrix::identity(n))?;
    let mut a_bound = 0.0f64;
    for i in 0..n {
        a_bound = a_bound.max(norm_1_vec(&defect.row(i)).hi());
    }

    // ||A^t e_i||_1 is the 1-norm of row i of A.
    let mut max_row_norm = Interval::ZERO;
    for i in 0..n {
        let r = norm_1_vec(&a_mat.row(i));
        if r.hi() > max_row_norm.hi() {
            max_row_norm = r;
        }
    }
    let b_bound = max_row_norm
        .mul(&Interval::new(f_center_norm, f_center_norm)?)
        .hi();

    let mut cert = MooreCertificate {
        center: center.to_vec(),
        radius,
        a_bound,
        b_bound,
        solution_radius: f64::INFINITY,
        certified: false,
        failure: None,
    };

    if a_bound >= 1.0 {
        cert.failure = Some(format!("contraction bound a = {a_bound} fails a < 1"));
        return Ok(cert);
    }
    // b / (1 - a) with upward rounding.
    let one_minus_a = Interval::ONE.sub(&Interval::new(a_bound, a_bound)?);
    let sol_radius = Interval::new(b_bound, b_bound)?.div(&one_minus_a)?.hi();
    cert.solution_radius = sol_radius;
    if b_bound >= radius * (1.0 - a_bound) {
        cert.failure = Some(format!(
            "residual bound b = {b_bound} fails b < r(1-a) = {}",
            radius * (1.0 - a_bound)
        ));
        return Ok(cert);
    }
    cert.certified = true;
    Ok(cert)
}

pub mod suite {
    //! Polynomial test systems for checking the existence test against a
    //! floating-point root-finding oracle: systems with a planted root must
    //! certify a radius that really contains one, and rootless systems must
    //! never certify.

    use nalgebra::{DMatrix, DVector};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::moore_certify;
    use super::MooreCertificate;
    use crate::interval::{Interval, IntervalError, IntervalMatrix, IntervalVector};

    /// `f_i(x) = sum_j c_ij (x_j - r_j) + d_i (x_i - r_i)^2 (+ shift_i)`;
    /// with zero shift the system has the planted root `r`.
    pub struct PolySystem {
        pub name: String,
        pub dim: usize,
        pub linear: DMatrix<f64>,
        pub root: DVector<f64>,
        pub quad: DVector<f64>,
        pub shift: DVector<f64>,
        /// Whether the system is known to have no real root.
        pub rootless: bool,
    }

    impl PolySystem {
        pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
            let d = x - &self.root;
            let mut out = &self.linear * &d + &self.shift;
            for i in 0..self.dim {
                out[i] += self.quad[i] * d[i] * d[i];
            }
            out
        }

        pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
            let mut j = self.linear.clone();
            for i in 0..self.dim {
                j[(i, i)] += 2.0 * self.quad[i] * (x[i] - self.root[i]);
            }
            j
        }

        pub fn eval_iv(&self, x: &IntervalVector) -> Result<IntervalVector, IntervalError> {
            let mut out = Vec::with_capacity(self.dim);
            for i in 0..self.dim {
                let mut acc = Interval::point(self.shift[i])?;
                for j in 0..self.dim {
                    let dj = x.0[j].sub(&Interval::point(self.root[j])?);
                    acc = acc.add(&dj.scale(self.linear[(i, j)]));
                }
                let di = x.0[i].sub(&Interval::point(self.root[i])?);
                acc = acc.add(&di.mul(&di).scale(self.quad[i]));
                out.push(acc);
            }
            Ok(IntervalVector(out))
        }

        pub fn jacobian_iv(&self, x: &IntervalVector) -> Result<IntervalMatrix, IntervalError> {
            let mut m = IntervalMatrix::from_points(&self.linear)?;
            for i in 0..self.dim {
                let di = x.0[i].sub(&Interval::point(self.root[i])?);
                *m.get_mut(i, i) = m.get(i, i).add(&di.scale(2.0 * self.quad[i]));
            }
            Ok(m)
        }

        /// Plain Newton iteration from `x0`; the independent oracle used to
        /// confirm certified roots.
        pub fn newton_root(&self, x0: &DVector<f64>, iters: usize) -> Option<DVector<f64>> {
            let mut x = x0.clone();
            for _ in 0..iters {
                let f = self.eval(&x);
                if f.amax() < 1e-13 {
                    return Some(x);
                }
                let step = self.jacobian(&x).lu().solve(&f)?;
                x -= step;
            }
            if self.eval(&x).amax() < 1e-10 {
                Some(x)
            } else {
                None
            }
        }

        /// Runs the existence test centered a small offset away from the
        /// planted root, preconditioned by the inverse Jacobian there.
        pub fn certify(&self, radius: f64) -> Result<MooreCertificate, IntervalError> {
            let center: Vec<f64> = (0..self.dim)
                .map(|i| self.root[i] + 0.7e-2 * ((i % 3) as f64 - 1.0) + 0.5e-2)
                .collect();
            let center_v = DVector::from_row_slice(&center);
            let precond = self
                .jacobian(&center_v)
                .try_inverse()
                .unwrap_or_else(|| DMatrix::identity(self.dim, self.dim));
            moore_certify(
                |bx| self.eval_iv(bx),
                |bx| self.jacobian_iv(bx),
                &center,
                radius,
                &precond,
            )
        }

        pub fn center(&self) -> DVector<f64> {
            DVector::from_fn(self.dim, |i, _| {
                self.root[i] + 0.7e-2 * ((i % 3) as f64 - 1.0) + 0.5e-2
            })
        }
    }

    /// Deterministic suite: `count` systems with planted roots in
    /// dimensions cycling over 1..=9.
    pub fn rooted_systems(seed: u64, count: usize) -> Vec<PolySystem> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..count)
            .map(|t| {
                let dim = t % 9 + 1;
                let mut linear = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-0.4..0.4));
                for i in 0..dim {
                    // Diagonal dominance keeps the Jacobian comfortably
                    // invertible near the root.
                    linear[(i, i)] += if rng.random_range(0.0..1.0) < 0.5 {
                        -1.5
                    } else {
                        1.5
                    };
                }
                let root = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
                let quad = DVector::from_fn(dim, |_, _| rng.random_range(-0.5..0.5));
                PolySystem {
                    name: format!("rooted_{t}_dim{dim}"),
                    dim,
                    linear,
                    root,
                    quad,
                    shift: DVector::zeros(dim),
                    rootless: false,
                }
            })
            .collect()
    }

    /// Deterministic suite of systems with no real root: the first
    /// component is a strictly positive sum of squares.
    pub fn rootless_systems(seed: u64, count: usize) -> Vec<PolySystem> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x726f6f746c657373);
        (0..count)
            .map(|t| {
                let dim = t % 9 + 1;
                let mut linear = DMatrix::zeros(dim, dim);
                for i in 1..dim {
                    linear[(i, i)] = 1.5;
                    if i + 1 < dim {
                        linear[(i, i + 1)] = rng.random_range(-0.4..0.4);
                    }
                }
                let root = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
                let mut quad = DVector::zeros(dim);
                quad[0] = 1.0;
                let mut shift = DVector::zeros(dim);
                // f_0 = (x_0 - r_0)^2 + shift_0 with shift_0 > 0: no root.
                shift[0] = rng.random_range(0.25..2.0);
                PolySystem {
                    name: format!("rootless_{t}_dim{dim}"),
                    dim,
                    linear,
                    root,
                    quad,
                    shift,
                    rootless: true,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_precond(a: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, a)
    }

    #[test]
    fn linear_root_at_center() {
        // f(x) = x around 0 with A = 1: exact root at the center.
        let cert = moore_certify(
            |x| Ok(x.clone()),
            |_| Ok(IntervalMatrix::identity(1)),
            &[0.0],
            1.0,
            &scalar_precond(1.0),
        )
        .unwrap();
        assert!(cert.certified);
        assert_eq!(cert.a_bound, 0.0);
        assert_eq!(cert.b_bound, 0.0);
        assert_eq!(cert.solution_radius, 0.0);
    }

    #[test]
    fn sqrt_two_is_enclosed() {
        // f(x) = x^2 - 2 around 1.5 certifies a root within the reported
        // radius; sqrt(2) is about 0.0858 away from the center.
        let two = Interval::point(2.0).unwrap();
        let cert = moore_certify(
            |x| {
                Ok(IntervalVector(vec![x.0[0].mul(&x.0[0]).sub(&two)]))
            },
            |x| {
                IntervalMatrix::from_rows(vec![vec![x.0[0].scale(2.0)]])
            },
            &[1.5],
            0.2,
            &scalar_precond(1.0 / 3.0),
        )
        .unwrap();
        assert!(cert.certified, "{cert:?}");
        let dist = (2.0f64.sqrt() - 1.5).abs();
        assert!(cert.solution_radius >= dist);
        assert!(cert.solution_radius < 0.2);
        // The bounds are the hand-computed suprema.
        assert!((cert.a_bound - 2.0 / 15.0).abs() < 1e-12, "{}", cert.a_bound);
        assert!((cert.b_bound - 0.25 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rootless_system_never_certifies() {
        // f(x) = x^2 + 1 has no real root; a >= 1 for every preconditioner
        // because the box contains x = 0 where the scaled gradient vanishes.
        for a in [1.0, 0.3, -2.0, 1e-6] {
            let one = Interval::ONE;
            let cert = moore_certify(
                |x| Ok(IntervalVector(vec![x.0[0].mul(&x.0[0]).add(&one)])),
                |x| IntervalMatrix::from_rows(vec![vec![x.0[0].scale(2.0)]]),
                &[0.0],
                1.0,
                &scalar_precond(a),
            )
            .unwrap();
            assert!(!cert.certified, "falsely certified with A = {a}");
            assert!(cert.failure.is_some());
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = moore_certify(
            |x| Ok(x.clone()),
            |_| Ok(IntervalMatrix::identity(2)),
            &[0.0, 0.0],
            1.0,
            &DMatrix::identity(3, 3),
        );
        assert!(matches!(err, Err(IntervalError::DimensionMismatch(_))));
    }
}
