//! Solving for the free `rho` parameters and certifying their existence.
//!
//! The residual system equates the nine characteristic-polynomial
//! coefficients of `Psi(rho)` with those of the target spectrum; the eleven
//! free parameters make it underdetermined, so the floating-point stage runs
//! damped Gauss-Newton steps through the pseudo-inverse from many
//! deterministic starts. Certification then fixes `rho_8` and `rho_9` at
//! their solved values and applies the interval existence test to the
//! remaining square 9x9 system, with the inverse floating-point Jacobian as
//! preconditioner.
//!
//! The interval path re-implements the same algebra over [`Interval`]
//! scalars end to end (extension, products, power-sum traces, Newton's
//! identities, the target coefficients from surds), so the enclosures are
//! rigorous rather than sampled.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    assemble_example, bfgs_lambda, bfgs_u, char_coeffs, extend_rho, gamma0_from_eigvectors,
    psi_product, target_char_coeffs, BfgsError, BfgsExample, RhoSequence, BFGS_BLOCK, BFGS_DIM,
    BFGS_PERIOD,
};
use crate::interval::{Interval, IntervalError, IntervalMatrix, IntervalVector};
use crate::moore::{moore_certify, MooreCertificate};
use crate::report::all_passed;

/// Residual rows used by the square certification system.
///
/// Rows 0 and 8 (the constant and the `x^8` coefficient) hold identically
/// for every parameter vector, because the extension rule bakes both into
/// the sequence: the determinant route gives
/// `prod rho_k = (+1)^4 (-1)^5 u^18 = -u^18`, matching the target constant
/// term; and the trace of the 36-fold product only picks up the cyclic
/// quadruples `rho_k rho_{k+9} rho_{k+18} rho_{k+27}` (the shift part needs
/// exactly eight steps between wrap-around columns), every one of which the
/// reciprocal rule pins to `+- u^2`, summing to `-u^2` -- and the target
/// trace is `-u^4 (1 + sqrt(2 + sqrt 2)) = -u^2` by the choice of `u`. The
/// full system therefore has structural rank at most 7, and the remaining
/// seven equations form the certified square system.
const CERT_ROWS: [usize; 7] = [1, 2, 3, 4, 5, 6, 7];

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub seed: u64,
    pub starts: usize,
    pub certify: bool,
    /// How many distinct solved candidates to try against the geometric
    /// admissibility checks before giving up.
    pub max_candidates: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            starts: 200,
            certify: true,
            max_candidates: 8,
        }
    }
}

/// One converged multistart solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub free: [f64; 11],
    pub residual_inf: f64,
}

/// Residual of the characteristic-coefficient system at the free values.
pub fn char_residual(free: &[f64; 11], u: f64) -> [f64; 9] {
    let rho = extend_rho(free, u);
    let psi = psi_product(&rho);
    let c = char_coeffs(&psi);
    let t = target_char_coeffs(u);
    let mut r = [0.0; 9];
    for i in 0..9 {
        r[i] = c[i] - t[i];
    }
    r
}

fn residual_inf(free: &[f64; 11], u: f64) -> f64 {
    char_residual(free, u)
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Dependent-slot weights `d rho_s / d free_m` for the extension rule.
fn slot_weights(rho: &[f64], m: usize) -> Vec<(usize, f64)> {
    match m {
        0..=7 => vec![(m, 1.0), (27 + m, -rho[27 + m] / rho[m])],
        8 => vec![(8, 1.0), (35, -rho[35] / rho[8])],
        9 => {
            let mut v: Vec<(usize, f64)> = (9..=17).map(|s| (s, 1.0)).collect();
            v.extend((27..=35).map(|s| (s, -rho[s] / rho[9])));
            v
        }
        10 => {
            let mut v: Vec<(usize, f64)> = (18..=26).map(|s| (s, 1.0)).collect();
            v.extend((27..=35).map(|s| (s, -rho[s] / rho[18])));
            v
        }
        _ => unreachable!("free parameter index {m}"),
    }
}

/// Analytic 9x11 Jacobian of the residual, via
/// `d tr(Psi^j) = j tr(Psi^{j-1} dPsi)` and the derivative recursion of
/// Newton's identities.
pub fn char_jacobian(free: &[f64; 11], u: f64) -> DMatrix<f64> {
    let n = BFGS_DIM;
    let rho = extend_rho(free, u);
    let phis: Vec<DMatrix<f64>> = rho.iter().map(|&r| super::phi_matrix(r)).collect();

    // prefix[s] = Phi_0 ... Phi_{s-1}, suffix[s] = Phi_{s+1} ... Phi_35.
    let mut prefix = Vec::with_capacity(BFGS_BLOCK);
    prefix.push(DMatrix::identity(n, n));
    for s in 1..BFGS_BLOCK {
        prefix.push(&prefix[s - 1] * &phis[s - 1]);
    }
    let mut suffix = vec![DMatrix::identity(n, n); BFGS_BLOCK];
    for s in (0..BFGS_BLOCK - 1).rev() {
        suffix[s] = &phis[s + 1] * &suffix[s + 1];
    }
    let psi = &prefix[BFGS_BLOCK - 1] * &phis[BFGS_BLOCK - 1];

    let mut pows = Vec::with_capacity(n);
    pows.push(DMatrix::identity(n, n));
    for j in 1..n {
        let next = &pows[j - 1] * &psi;
        pows.push(next);
    }
    let mut traces = [0.0f64; 10];
    for j in 1..=n {
        traces[j] = if j < n {
            pows[j].trace()
        } else {
            (&pows[n - 1] * &psi).trace()
        };
    }
    let mut e = [0.0f64; 10];
    e[0] = 1.0;
    for k in 1..=n {
        let mut acc = 0.0;
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += sign * e[k - i] * traces[i];
        }
        e[k] = acc / k as f64;
    }

    let mut jac = DMatrix::zeros(n, 11);
    for m in 0..11 {
        // dPsi = sum over dependent slots of w * prefix (dPhi) suffix, where
        // dPhi has the single column rho (e_2 - e_1) differentiated.
        let mut dpsi = DMatrix::<f64>::zeros(n, n);
        for (s, w) in slot_weights(&rho, m) {
            let v = (-prefix[s].column(0) + prefix[s].column(1)) * w;
            let r = suffix[s].row(n - 1);
            for i in 0..n {
                for j in 0..n {
                    dpsi[(i, j)] += v[i] * r[j];
                }
            }
        }
        let mut dt = [0.0f64; 10];
        for j in 1..=n {
            let mut tr = 0.0;
            for a in 0..n {
                for b in 0..n {
                    tr += pows[j - 1][(a, b)] * dpsi[(b, a)];
                }
            }
            dt[j] = j as f64 * tr;
        }
        let mut de = [0.0f64; 10];
        for k in 1..=n {
            let mut acc = 0.0;
            for i in 1..=k {
                let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
                acc += sign * (de[k - i] * traces[i] + e[k - i] * dt[i]);
            }
            de[k] = acc / k as f64;
        }
        for i in 0..n {
            let k = n - i;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            jac[(i, m)] = sign * de[k];
        }
    }
    jac
}

/// Damped Gauss-Newton refinement through the pseudo-inverse. Returns the
/// final max-norm residual.
fn refine(free: &mut [f64; 11], u: f64, max_iter: usize) -> f64 {
    let mut current = residual_inf(free, u);
    for _ in 0..max_iter {
        if !current.is_finite() || current < 1e-14 {
            break;
        }
        let r = char_residual(free, u);
        let jac = char_jacobian(free, u);
        let svd = jac.svd(true, true);
        let Ok(delta) = svd.solve(&DVector::from_row_slice(&r), 1e-13) else {
            break;
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let mut trial = *free;
            for i in 0..11 {
                trial[i] -= t * delta[i];
            }
            let trial_res = residual_inf(&trial, u);
            if trial_res.is_finite() && trial_res < current {
                *free = trial;
                current = trial_res;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    current
}

fn starting_points(cfg: &SolveConfig) -> Vec<[f64; 11]> {
    let mut seeds = Vec::with_capacity(cfg.starts + 32);
    // Sign-pattern heuristics at the natural magnitude scale sqrt(u).
    let base = bfgs_u().sqrt();
    for pattern in 0..32u32 {
        let mut s = [0.0; 11];
        for (i, v) in s.iter_mut().enumerate() {
            let bit = (pattern >> (i % 5)) & 1;
            *v = if bit == 1 { -base } else { base };
        }
        seeds.push(s);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.starts {
        let mut s = [0.0; 11];
        for v in s.iter_mut() {
            *v = rng.random_range(-1.5..1.5);
        }
        seeds.push(s);
    }
    seeds
}

/// Multistart solve. Returns converged candidates sorted by residual then
/// lexicographically, deduplicated at distance `1e-6`, plus the best
/// residual seen anywhere (for diagnostics when nothing converges).
pub fn solve_rho(u: f64, cfg: &SolveConfig) -> (Vec<Candidate>, f64) {
    let seeds = starting_points(cfg);
    let refined: Vec<([f64; 11], f64)> = seeds
        .into_par_iter()
        .map(|mut s| {
            let res = refine(&mut s, u, 120);
            (s, res)
        })
        .collect();

    let mut best_seen = f64::INFINITY;
    let mut converged: Vec<Candidate> = Vec::new();
    for (free, res) in refined {
        best_seen = best_seen.min(res);
        if res.is_finite() && res < 1e-12 && free.iter().all(|v| v.is_finite()) {
            converged.push(Candidate {
                free,
                residual_inf: res,
            });
        }
    }
    converged.sort_by(|a, b| {
        a.residual_inf
            .partial_cmp(&b.residual_inf)
            .unwrap()
            .then_with(|| {
                a.free
                    .iter()
                    .zip(&b.free)
                    .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    let mut distinct: Vec<Candidate> = Vec::new();
    for c in converged {
        let dup = distinct.iter().any(|d| {
            c.free
                .iter()
                .zip(&d.free)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max)
                < 1e-6
        });
        if !dup {
            distinct.push(c);
        }
    }
    (distinct, best_seen)
}

// ---------------------------------------------------------------------------
// Interval replica of the residual algebra.
// ---------------------------------------------------------------------------

/// Rigorous enclosure of `u = sqrt(1 / (1 + sqrt(2 + sqrt 2)))`.
pub fn iv_u() -> Interval {
    let two = Interval::point(2.0).expect("finite");
    let inner = two.add(&two.sqrt().expect("sqrt 2")).sqrt().expect("sqrt");
    Interval::ONE
        .div(&Interval::ONE.add(&inner))
        .expect("denominator positive")
        .sqrt()
        .expect("positive")
}

fn iv_extend_rho(free: &[Interval; 11], u: &Interval) -> Result<Vec<Interval>, IntervalError> {
    let mut rho = vec![Interval::ZERO; BFGS_BLOCK];
    rho[..10].copy_from_slice(&free[..10]);
    for k in 10..18 {
        rho[k] = free[9];
    }
    for k in 18..27 {
        rho[k] = free[10];
    }
    let u2 = u.mul(u);
    for j in 0..9 {
        let denom = rho[j].mul(&rho[9]).mul(&rho[18]);
        let v = u2.div(&denom)?;
        rho[27 + j] = if j < 4 { v } else { v.neg() };
    }
    Ok(rho)
}

fn iv_phi(rho: &Interval) -> IntervalMatrix {
    let mut m = IntervalMatrix::zeros(BFGS_DIM, BFGS_DIM);
    for i in 0..BFGS_DIM - 1 {
        *m.get_mut(i + 1, i) = Interval::ONE;
    }
    *m.get_mut(0, BFGS_DIM - 1) = rho.neg();
    *m.get_mut(1, BFGS_DIM - 1) = *rho;
    m
}

/// Explicit inverse of `Phi(rho)`: columns `2..=9` shift down, and the
/// first column is `e_1 - (1/rho) e_9`.
fn iv_phi_inv(rho: &Interval) -> Result<IntervalMatrix, IntervalError> {
    let mut m = IntervalMatrix::zeros(BFGS_DIM, BFGS_DIM);
    for i in 0..BFGS_DIM - 1 {
        *m.get_mut(i, i + 1) = Interval::ONE;
    }
    *m.get_mut(0, 0) = Interval::ONE;
    *m.get_mut(BFGS_DIM - 1, 0) = Interval::ONE.div(rho)?.neg();
    Ok(m)
}


/// Balances a matrix by an exact power-of-two diagonal similarity (a few
/// Osborne sweeps on the midpoints). The characteristic polynomial is
/// invariant, the scalings are exact in floating point, and the smaller
/// intermediate magnitudes make the coefficient enclosures much tighter.
fn iv_balance(m: &IntervalMatrix) -> (IntervalMatrix, Vec<f64>) {
    let n = m.nrows();
    let mut scale = vec![1.0f64; n];
    let mut mid = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            mid[i * n + j] = m.get(i, j).midpoint().abs();
        }
    }
    for _ in 0..6 {
        for i in 0..n {
            let mut row = 0.0;
            let mut col = 0.0;
            for j in 0..n {
                if j != i {
                    row += mid[i * n + j];
                    col += mid[j * n + i];
                }
            }
            if row > 0.0 && col > 0.0 {
                // Row i scales by 1/f and column i by f; f = sqrt(row/col)
                // equalizes them.
                let f = 2f64.powi(((row / col).log2() / 2.0).round() as i32);
                scale[i] *= f;
                for j in 0..n {
                    mid[i * n + j] /= f;
                    mid[j * n + i] *= f;
                }
            }
        }
    }
    let mut out = m.clone();
    for i in 0..n {
        for j in 0..n {
            // T^{-1} M T with T = diag(scale): exact power-of-two products.
            *out.get_mut(i, j) = m.get(i, j).scale(scale[j] / scale[i]);
        }
    }
    (out, scale)
}

/// Newton's identities: elementary symmetric functions `e_0..e_kmax` from
/// power sums `t_1..t_kmax`.
fn iv_newton_e(traces: &[Interval], kmax: usize) -> Result<Vec<Interval>, IntervalError> {
    let mut e = vec![Interval::ZERO; kmax + 1];
    e[0] = Interval::ONE;
    for k in 1..=kmax {
        let mut acc = Interval::ZERO;
        for i in 1..=k {
            let term = e[k - i].mul(&traces[i]);
            acc = if i % 2 == 1 {
                acc.add(&term)
            } else {
                acc.sub(&term)
            };
        }
        e[k] = acc.div(&Interval::point(k as f64)?)?;
    }
    Ok(e)
}

/// The derivative recursion matching [`iv_newton_e`].
fn iv_newton_de(
    traces: &[Interval],
    e: &[Interval],
    dt: &[Interval],
    kmax: usize,
) -> Result<Vec<Interval>, IntervalError> {
    let mut de = vec![Interval::ZERO; kmax + 1];
    for k in 1..=kmax {
        let mut acc = Interval::ZERO;
        for i in 1..=k {
            let term = de[k - i]
                .mul(&traces[i])
                .add(&e[k - i].mul(&dt[i]));
            acc = if i % 2 == 1 {
                acc.add(&term)
            } else {
                acc.sub(&term)
            };
        }
        de[k] = acc.div(&Interval::point(k as f64)?)?;
    }
    Ok(de)
}

/// Shared enclosure state for the residual and its Jacobian at one
/// interval parameter vector.
///
/// Every characteristic coefficient is enclosed along two independent
/// routes and the enclosures intersected: the direct route runs Newton's
/// identities on power sums of the balanced `Psi`; the inverse route uses
/// `e_{9-m}(xi) = det(Psi) e_m(1/xi)` with power sums of the explicit
/// factor-inverse product, scaled by `u^4` so its spectrum sits in the
/// closed unit disk, in its own balancing frame. The direct route is tight
/// for the high-order coefficients and loosens through the long Newton
/// recursion; the inverse route is tight exactly where the direct one is
/// loose, so the intersection stays uniformly narrow. Both routes bound
/// the same exact value, which also makes the intersection sound.
struct IvSystem {
    rho: Vec<Interval>,
    prefix: Vec<IntervalMatrix>,
    suffix: Vec<IntervalMatrix>,
    /// Balancing frames of the direct and inverse product matrices.
    balance: Vec<f64>,
    inv_balance: Vec<f64>,
    det: Interval,
    u4_inv: Interval,
    /// Powers of the balanced `Psi` (up to 9 for the direct route).
    dir_pows: Vec<IntervalMatrix>,
    /// Powers of the balanced `u^4 Psi^{-1}` (up to 5).
    inv_pows: Vec<IntervalMatrix>,
    t_dir: Vec<Interval>,
    t_inv: Vec<Interval>,
    e_dir: Vec<Interval>,
    e_inv: Vec<Interval>,
}

/// Order up to which the inverse route carries elementary symmetric
/// functions (it serves coefficients `x^m` for `m <= E_ORDER`).
const E_ORDER: usize = 4;

fn iv_system(free: &[Interval; 11], u: &Interval) -> Result<IvSystem, IntervalError> {
    let n = BFGS_DIM;
    let rho = iv_extend_rho(free, u)?;
    let phis: Vec<IntervalMatrix> = rho.iter().map(iv_phi).collect();

    let mut prefix = Vec::with_capacity(BFGS_BLOCK);
    prefix.push(IntervalMatrix::identity(n));
    for s in 1..BFGS_BLOCK {
        prefix.push(prefix[s - 1].matmul(&phis[s - 1])?);
    }
    let mut suffix = vec![IntervalMatrix::identity(n); BFGS_BLOCK];
    for s in (0..BFGS_BLOCK - 1).rev() {
        suffix[s] = phis[s + 1].matmul(&suffix[s + 1])?;
    }
    let psi = prefix[BFGS_BLOCK - 1].matmul(&phis[BFGS_BLOCK - 1])?;
    let (psi_b, balance) = iv_balance(&psi);

    let u2 = u.mul(u);
    let u4 = u2.mul(&u2);
    let u4_inv = u4.recip()?;
    // lambda^4 Phi_k^{-1} factors keep the inverse product spectrum inside
    // the unit disk while every factor stays exactly representable.
    let mut inv_raw = IntervalMatrix::identity(n);
    for r in rho.iter().rev() {
        inv_raw = inv_raw.matmul(&iv_phi_inv(r)?)?;
    }
    let (inv_b, inv_balance) = iv_balance(&inv_raw.scale(&u4));

    let mut dir_pows = Vec::with_capacity(n + 1);
    dir_pows.push(IntervalMatrix::identity(n));
    for j in 1..=n {
        dir_pows.push(dir_pows[j - 1].matmul(&psi_b)?);
    }
    // One extra inverse power for the derivative traces.
    let mut inv_pows = Vec::with_capacity(E_ORDER + 2);
    inv_pows.push(IntervalMatrix::identity(n));
    for j in 1..=E_ORDER + 1 {
        inv_pows.push(inv_pows[j - 1].matmul(&inv_b)?);
    }

    let mut t_dir = vec![Interval::ZERO; n + 1];
    for (j, t) in t_dir.iter_mut().enumerate().skip(1) {
        *t = dir_pows[j].trace();
    }
    let mut t_inv = vec![Interval::ZERO; E_ORDER + 1];
    for (j, t) in t_inv.iter_mut().enumerate().skip(1) {
        *t = inv_pows[j].trace();
    }
    let e_dir = iv_newton_e(&t_dir, n)?;
    let e_inv = iv_newton_e(&t_inv, E_ORDER)?;

    let mut det = Interval::ONE;
    for r in &rho {
        det = det.mul(r);
    }

    Ok(IvSystem {
        rho,
        prefix,
        suffix,
        balance,
        inv_balance,
        det,
        u4_inv,
        dir_pows,
        inv_pows,
        t_dir,
        t_inv,
        e_dir,
        e_inv,
    })
}

impl IvSystem {
    /// `det(Psi) u^{-4m}`, the exact scalar bridging the scaled inverse
    /// side back to the coefficients.
    fn det_scaled(&self, m: usize) -> Interval {
        let mut acc = self.det;
        for _ in 0..m {
            acc = acc.mul(&self.u4_inv);
        }
        acc
    }

    /// Coefficient of `x^m` in `det(xI - Psi)` for `m = 0..=8`.
    fn coeff(&self, m: usize) -> Result<Interval, IntervalError> {
        let k = BFGS_DIM - m;
        let direct = self.e_dir[k];
        let value = if m <= E_ORDER {
            // e_k(xi) = det(Psi) u^{-4m} e_m(u^4/xi).
            direct.intersect(&self.det_scaled(m).mul(&self.e_inv[m]))?
        } else {
            direct
        };
        Ok(if k % 2 == 1 { value.neg() } else { value })
    }

    /// `dPsi/d free_m` in the frame of the given balancing similarity.
    fn dpsi(&self, m: usize, frame: &[f64]) -> Result<IntervalMatrix, IntervalError> {
        let n = BFGS_DIM;
        let mut dpsi = IntervalMatrix::zeros(n, n);
        for (s, w) in iv_slot_weights(&self.rho, m)? {
            let p = &self.prefix[s];
            let sfx = &self.suffix[s];
            for i in 0..n {
                let vi = p
                    .get(i, 1)
                    .sub(p.get(i, 0))
                    .mul(&w)
                    .scale(1.0 / frame[i]);
                for j in 0..n {
                    let add = vi.mul(sfx.get(n - 1, j)).scale(frame[j]);
                    *dpsi.get_mut(i, j) = dpsi.get(i, j).add(&add);
                }
            }
        }
        Ok(dpsi)
    }

    /// `d log det / d free_m = sum_s w_s / rho_s`.
    fn dlogdet(&self, m: usize) -> Result<Interval, IntervalError> {
        let mut acc = Interval::ZERO;
        for (s, w) in iv_slot_weights(&self.rho, m)? {
            acc = acc.add(&w.div(&self.rho[s])?);
        }
        Ok(acc)
    }

    /// Derivative of [`IvSystem::coeff`] with respect to free parameter
    /// `m`, again as the intersection of both routes.
    fn dcoeff_column(&self, m: usize) -> Result<[Interval; 9], IntervalError> {
        let n = BFGS_DIM;
        let dpsi = self.dpsi(m, &self.balance)?;
        let dpsi_inv_frame = self.dpsi(m, &self.inv_balance)?;
        // d tr(Psi^j) = j tr(Psi^{j-1} dPsi).
        let mut dt_dir = vec![Interval::ZERO; n + 1];
        for j in 1..=n {
            dt_dir[j] = self.dir_pows[j - 1]
                .trace_of_product(&dpsi)?
                .mul(&Interval::point(j as f64)?);
        }
        // With M = u^4 Psi^{-1}: d tr(M^j) = -(j/u^4) tr(M^{j+1} dPsi).
        let mut dt_inv = vec![Interval::ZERO; E_ORDER + 1];
        for j in 1..=E_ORDER {
            dt_inv[j] = self.inv_pows[j + 1]
                .trace_of_product(&dpsi_inv_frame)?
                .mul(&Interval::point(-(j as f64))?)
                .mul(&self.u4_inv);
        }
        let de_dir = iv_newton_de(&self.t_dir, &self.e_dir, &dt_dir, n)?;
        let de_inv = iv_newton_de(&self.t_inv, &self.e_inv, &dt_inv, E_ORDER)?;

        let mut out = [Interval::ZERO; 9];
        for (i, o) in out.iter_mut().enumerate() {
            let k = n - i;
            let direct = de_dir[k];
            let v = if i <= E_ORDER {
                let ds = self.det_scaled(i);
                let via_inverse = ds
                    .mul(&self.dlogdet(m)?)
                    .mul(&self.e_inv[i])
                    .add(&ds.mul(&de_inv[i]));
                direct.intersect(&via_inverse)?
            } else {
                direct
            };
            *o = if k % 2 == 1 { v.neg() } else { v };
        }
        Ok(out)
    }
}

/// Interval version of the target coefficients, from surd enclosures.
pub fn iv_target_coeffs(u: &Interval) -> Result<[Interval; 9], IntervalError> {
    let two = Interval::point(2.0)?;
    let cos_pi8 = two
        .add(&two.sqrt()?)
        .sqrt()?
        .div(&two)?;
    let u2 = u.mul(u);
    let u3 = u2.mul(u);
    let u4 = u2.mul(&u2);
    let mut poly = vec![u4, Interval::ONE];
    let lin = [u4.mul(&u4), two.mul(&cos_pi8).mul(&u4), Interval::ONE];
    poly = iv_poly_mul(&poly, &lin);
    poly = iv_poly_mul(&poly, &[u3.mul(&u3), Interval::ZERO, Interval::ONE]);
    poly = iv_poly_mul(
        &poly,
        &[
            Interval::ONE,
            Interval::ZERO,
            Interval::ZERO,
            Interval::ZERO,
            Interval::ONE,
        ],
    );
    let mut out = [Interval::ZERO; 9];
    out.copy_from_slice(&poly[..9]);
    Ok(out)
}

fn iv_poly_mul(a: &[Interval], b: &[Interval]) -> Vec<Interval> {
    let mut out = vec![Interval::ZERO; a.len() + b.len() - 1];
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i + j] = out[i + j].add(&ai.mul(bj));
        }
    }
    out
}

/// Enclosure of the residual system over an 11-vector of interval
/// parameters.
pub fn iv_residual(free: &[Interval; 11], u: &Interval) -> Result<IntervalVector, IntervalError> {
    let sys = iv_system(free, u)?;
    let t = iv_target_coeffs(u)?;
    let mut out = Vec::with_capacity(9);
    for i in 0..9 {
        out.push(sys.coeff(i)?.sub(&t[i]));
    }
    Ok(IntervalVector(out))
}

/// Interval slot weights `d rho_s / d free_m`, mirroring the
/// floating-point rule.
fn iv_slot_weights(
    rho: &[Interval],
    m: usize,
) -> Result<Vec<(usize, Interval)>, IntervalError> {
    Ok(match m {
        0..=7 => vec![
            (m, Interval::ONE),
            (27 + m, rho[27 + m].div(&rho[m])?.neg()),
        ],
        8 => vec![(8, Interval::ONE), (35, rho[35].div(&rho[8])?.neg())],
        9 => {
            let mut v: Vec<(usize, Interval)> = (9..=17).map(|s| (s, Interval::ONE)).collect();
            for s in 27..=35 {
                v.push((s, rho[s].div(&rho[9])?.neg()));
            }
            v
        }
        10 => {
            let mut v: Vec<(usize, Interval)> = (18..=26).map(|s| (s, Interval::ONE)).collect();
            for s in 27..=35 {
                v.push((s, rho[s].div(&rho[18])?.neg()));
            }
            v
        }
        _ => unreachable!("free parameter index {m}"),
    })
}

/// Enclosure of the certification submatrix of the Jacobian: residual rows
/// in `rows`, derivative columns for the free parameters in `cols`.
pub fn iv_jacobian_sub(
    free: &[Interval; 11],
    u: &Interval,
    rows: &[usize],
    cols: &[usize],
) -> Result<IntervalMatrix, IntervalError> {
    let sys = iv_system(free, u)?;
    let mut jac = IntervalMatrix::zeros(rows.len(), cols.len());
    for (col, &m) in cols.iter().enumerate() {
        let column = sys.dcoeff_column(m)?;
        for (ri, &r) in rows.iter().enumerate() {
            *jac.get_mut(ri, col) = column[r];
        }
    }
    Ok(jac)
}

/// Chooses the `count`-column subset maximizing the smallest singular value
/// of the square subsystem, by exhaustive search (there are only
/// `C(11, 7) = 330` subsets). Deterministic: ties resolve to the
/// lexicographically first subset.
fn pivot_columns(jac: &DMatrix<f64>, count: usize) -> Vec<usize> {
    let ncols = jac.ncols();
    let mut best: Vec<usize> = (0..count).collect();
    let mut best_smin = -1.0f64;
    let mut subset: Vec<usize> = (0..count).collect();
    loop {
        let mut sub = DMatrix::zeros(jac.nrows(), count);
        for (c, &m) in subset.iter().enumerate() {
            sub.set_column(c, &jac.column(m));
        }
        let smin = sub.svd(false, false).singular_values.min();
        if smin > best_smin {
            best_smin = smin;
            best = subset.clone();
        }
        // Next combination in lexicographic order.
        let mut i = count;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] != i + ncols - count {
                break;
            }
        }
        subset[i] += 1;
        for j in i + 1..count {
            subset[j] = subset[j - 1] + 1;
        }
    }
}

/// Runs the existence test around a solved point.
///
/// The two identically-satisfied rows are discharged analytically (see
/// [`CERT_ROWS`]); of the eleven parameters, seven are selected by column
/// pivoting on the floating-point Jacobian and the rest stay frozen, giving
/// a regular square system. The box radius shrinks until the enclosures
/// certify (or the last uncertified attempt is returned).
pub fn certify_candidate(free: &[f64; 11]) -> Result<MooreCertificate, BfgsError> {
    let u = bfgs_u();
    let u_iv = iv_u();
    let jac_full = char_jacobian(free, u);
    let mut jac_rows = DMatrix::zeros(CERT_ROWS.len(), 11);
    for (ri, &r) in CERT_ROWS.iter().enumerate() {
        jac_rows.set_row(ri, &jac_full.row(r));
    }
    let vars = pivot_columns(&jac_rows, CERT_ROWS.len());
    let center: Vec<f64> = vars.iter().map(|&i| free[i]).collect();
    let mut jac_sq = DMatrix::zeros(CERT_ROWS.len(), vars.len());
    for (col, &m) in vars.iter().enumerate() {
        jac_sq.set_column(col, &jac_rows.column(m));
    }
    let precond = jac_sq.try_inverse().ok_or_else(|| {
        BfgsError::Certification("square certification Jacobian is singular".into())
    })?;

    let assemble = |sub: &IntervalVector| -> Result<[Interval; 11], IntervalError> {
        let mut all = [Interval::ZERO; 11];
        for (i, v) in free.iter().enumerate() {
            all[i] = Interval::point(*v)?;
        }
        for (col, &m) in vars.iter().enumerate() {
            all[m] = sub.0[col];
        }
        Ok(all)
    };

    // The contraction defect a(r) scales linearly with the box radius while
    // b is radius-free, so b < r (1 - a(r)) holds on a bounded window of
    // radii; the ladder samples it densely from above.
    let mut last = None;
    for radius in [
        1e-6, 3e-7, 1e-7, 3e-8, 1e-8, 7e-9, 5e-9, 4e-9, 3e-9, 2e-9, 1e-9, 3e-10, 1e-10,
    ] {
        let cert = moore_certify(
            |bx| {
                let all = assemble(bx)?;
                let full = iv_residual(&all, &u_iv)?;
                Ok(IntervalVector(
                    CERT_ROWS.iter().map(|&r| full.0[r]).collect(),
                ))
            },
            |bx| {
                let all = assemble(bx)?;
                iv_jacobian_sub(&all, &u_iv, &CERT_ROWS, &vars)
            },
            &center,
            radius,
            &precond,
        )?;
        if cert.certified {
            return Ok(cert);
        }
        last = Some(cert);
    }
    Ok(last.expect("at least one radius attempted"))
}

/// JSON-serializable solution so verification can rerun without re-solving.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionArtifact {
    pub lambda: f64,
    pub u: f64,
    pub seed: u64,
    pub rho_free: Vec<f64>,
    pub rho_full: Vec<f64>,
    pub residual_inf: f64,
    pub gamma0: Vec<f64>,
    pub certificate: Option<MooreCertificate>,
}

impl SolutionArtifact {
    pub fn from_example(ex: &BfgsExample) -> Self {
        Self {
            lambda: ex.lambda,
            u: ex.u,
            seed: ex.seed,
            rho_free: ex.rho.free.to_vec(),
            rho_full: ex.rho.full.clone(),
            residual_inf: ex.char_residual,
            gamma0: ex.gamma0.iter().copied().collect(),
            certificate: ex.certificate.clone(),
        }
    }
}

/// Rebuilds the example from a stored artifact (no solving); downstream
/// verification still checks the spectrum, so a tampered artifact fails
/// loudly rather than silently.
pub fn build_from_artifact(artifact: &SolutionArtifact) -> Result<BfgsExample, BfgsError> {
    if artifact.rho_free.len() != 11 || artifact.gamma0.len() != 81 {
        return Err(BfgsError::Certification(
            "artifact has wrong parameter shapes".into(),
        ));
    }
    let mut free = [0.0; 11];
    free.copy_from_slice(&artifact.rho_free);
    let u = bfgs_u();
    let rho = RhoSequence::from_free(free, u);
    let gamma0 = DMatrix::from_column_slice(9, 9, &artifact.gamma0);
    let residual = residual_inf(&free, u);
    assemble_example(
        rho,
        gamma0,
        residual,
        artifact.certificate.clone(),
        artifact.seed,
    )
}

/// Full pipeline: solve, select an admissible candidate, certify.
///
/// Candidates are tried in deterministic order; the first whose full
/// condition stack passes is taken. If none passes every check, the one
/// with the fewest failures is returned so the verification report can show
/// exactly what failed.
pub fn build_bfgs(cfg: &SolveConfig) -> Result<BfgsExample, BfgsError> {
    let lambda = bfgs_lambda();
    let u = bfgs_u();
    let (candidates, best_seen) = solve_rho(u, cfg);
    if candidates.is_empty() {
        return Err(BfgsError::SolveFailed {
            best_residual: best_seen,
        });
    }

    let check_cfg = crate::checks::CheckConfig::default();
    let mut best: Option<(usize, BfgsExample)> = None;
    let mut tried = 0usize;
    let mut detail = String::new();
    for cand in candidates.iter().take(cfg.max_candidates) {
        tried += 1;
        let rho = RhoSequence::from_free(cand.free, u);
        if rho.full.iter().any(|v| v.abs() < 1e-3) {
            detail.push_str("candidate with near-zero rho skipped; ");
            continue;
        }
        let psi = psi_product(&rho.full);
        let gamma0 = match gamma0_from_eigvectors(&psi, u) {
            Ok(g) => g,
            Err(e) => {
                detail.push_str(&format!("gamma0 failed: {e}; "));
                continue;
            }
        };
        let example = match assemble_example(
            rho,
            gamma0,
            cand.residual_inf,
            None,
            cfg.seed,
        ) {
            Ok(ex) => ex,
            Err(e) => {
                detail.push_str(&format!("assembly failed: {e}; "));
                continue;
            }
        };
        // Quick admissibility: the two-sided decrease inequality needs
        // sigma_bar_k > 1 - lambda^4 everywhere.
        let sigma_floor = 1.0 - lambda.powi(4);
        if example.sigma_bar[..BFGS_PERIOD]
            .iter()
            .any(|&s| s <= sigma_floor)
        {
            detail.push_str("sigma_bar too small for the decrease inequality; ");
            continue;
        }
        let reports = example.verify_conditions(&check_cfg);
        let failures = reports.iter().filter(|r| !r.passed()).count();
        if failures == 0 {
            best = Some((0, example));
            break;
        }
        detail.push_str(&format!("candidate failed {failures} checks; "));
        match &best {
            Some((f, _)) if *f <= failures => {}
            _ => best = Some((failures, example)),
        }
    }

    let Some((_, mut example)) = best else {
        return Err(BfgsError::NoAdmissibleCandidate {
            detail: format!("tried {tried}: {detail}"),
        });
    };

    if cfg.certify {
        let cert = certify_candidate(&example.rho.free)?;
        example.certificate = Some(cert);
    }
    Ok(example)
}

/// Convenience wrapper asserting the example passes its whole stack; used
/// by tests.
pub fn build_verified(cfg: &SolveConfig) -> Result<BfgsExample, BfgsError> {
    let ex = build_bfgs(cfg)?;
    let reports = ex.verify_conditions(&crate::checks::CheckConfig::default());
    if !all_passed(&reports) {
        let failed: Vec<&str> = reports
            .iter()
            .filter(|r| !r.passed())
            .map(|r| r.check_id.as_str())
            .collect();
        return Err(BfgsError::NoAdmissibleCandidate {
            detail: format!("verification failures: {failed:?}"),
        });
    }
    Ok(ex)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bfgs::bfgs_u;

    fn probe_point() -> [f64; 11] {
        [0.9, -0.8, 0.7, -0.6, 0.5, -0.9, 1.1, -1.2, 0.8, 1.05, -0.95]
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let u = bfgs_u();
        let free = probe_point();
        let jac = char_jacobian(&free, u);
        let h = 1e-6;
        for m in 0..11 {
            let mut fp = free;
            let mut fm = free;
            fp[m] += h;
            fm[m] -= h;
            let rp = char_residual(&fp, u);
            let rm = char_residual(&fm, u);
            for i in 0..9 {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                assert!(
                    (jac[(i, m)] - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                    "entry ({i},{m}): {} vs {}",
                    jac[(i, m)],
                    fd
                );
            }
        }
    }

    #[test]
    fn interval_algebra_encloses_float_algebra() {
        let u = bfgs_u();
        let u_iv = iv_u();
        assert!(u_iv.contains(u) || (u_iv.midpoint() - u).abs() < 1e-15);
        let free = probe_point();
        let mut free_iv = [Interval::ZERO; 11];
        for (i, v) in free.iter().enumerate() {
            free_iv[i] = Interval::point(*v).unwrap();
        }
        let r = char_residual(&free, u);
        let r_iv = iv_residual(&free_iv, &u_iv).unwrap();
        for i in 0..9 {
            assert!(
                r_iv.0[i].lo() - 1e-11 <= r[i] && r[i] <= r_iv.0[i].hi() + 1e-11,
                "residual {i}: {} not within {:?}",
                r[i],
                r_iv.0[i]
            );
            assert!((r_iv.0[i].midpoint() - r[i]).abs() < 1e-9);
        }
        let jac = char_jacobian(&free, u);
        let jac_iv = iv_jacobian_sub(&free_iv, &u_iv, &CERT_ROWS, &[0, 3, 9, 10]).unwrap();
        for (ri, &row) in CERT_ROWS.iter().enumerate() {
            for (ci, &col) in [0usize, 3, 9, 10].iter().enumerate() {
                let v = jac[(row, col)];
                let e = jac_iv.get(ri, ci);
                assert!(
                    e.lo() - 1e-8 <= v && v <= e.hi() + 1e-8,
                    "jacobian ({row},{col}): {v} not near {e:?}"
                );
            }
        }
        let t = target_char_coeffs(u);
        let t_iv = iv_target_coeffs(&u_iv).unwrap();
        for i in 0..9 {
            assert!(t_iv[i].lo() - 1e-14 <= t[i] && t[i] <= t_iv[i].hi() + 1e-14);
        }
    }

    #[test]
    fn pivot_columns_selects_distinct_sorted() {
        let m = DMatrix::from_fn(7, 11, |i, j| ((i * 11 + j) as f64 * 0.37).sin());
        let cols = pivot_columns(&m, 7);
        assert_eq!(cols.len(), 7);
        assert!(cols.windows(2).all(|w| w[0] < w[1]));
        assert!(cols.iter().all(|&c| c < 11));
    }

    #[test]
    fn structural_rows_vanish_for_any_parameters() {
        // The determinant and trace rows hold identically under the
        // extension rule; that is what licenses dropping them from the
        // certified square system.
        let u = bfgs_u();
        for free in [
            probe_point(),
            [1.2, 0.8, -0.9, 0.55, -0.45, 1.35, -1.25, 0.65, -0.75, 0.85, 1.15],
        ] {
            let r = char_residual(&free, u);
            assert!(r[0].abs() < 1e-10, "det row: {}", r[0]);
            assert!(r[8].abs() < 1e-12, "trace row: {}", r[8]);
        }
    }
}
