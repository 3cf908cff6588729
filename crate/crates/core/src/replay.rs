//! Generic line-search optimizer drivers and replay instrumentation.
//!
//! [`drive`] runs one of four engines (steepest descent, Newton with
//! steepest-descent fallback, BFGS, Gauss-Newton) against an [`Oracle`],
//! recording per-step data and two verification residuals:
//!
//! * the defining relation `M_k M_k^t s_k = -alpha_k g_k` of the direction,
//! * the deviation of the produced iterate from a closed-form orbit when the
//!   oracle knows one.
//!
//! Orbit oracles answer only at (or within a relative tolerance of) the orbit
//! points, so a drifting replay fails loudly instead of being silently
//! re-anchored. The convergence sanity checker runs every engine over a
//! benign problem suite and verifies the hypotheses and conclusion of the
//! bounded-`M_k` convergence theorem step by step.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::report::{CheckStatus, ConditionReport, Witness};
use crate::schema::{OrbitSchema, SchemaError};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("query off the orbit at index {k}: relative error {relative_error:.3e} > {tol:.3e}")]
    OffOrbit {
        k: usize,
        relative_error: f64,
        tol: f64,
    },
    #[error("singular {what} at step {k}")]
    Singular { what: String, k: usize },
    #[error("direction at step {k} is not a descent direction (slope {slope:.3e})")]
    NonDescent { k: usize, slope: f64 },
    #[error("oracle does not support {0}")]
    Unsupported(&'static str),
    #[error("prescribed step schedule exhausted at step {k}")]
    ScheduleExhausted { k: usize },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Linear state change applied when a rescaled replay crosses a frame
/// boundary: `x <- x_diag . x`, `g <- g_scale * (g_diag . g)`, and the
/// matching congruence on the Hessian approximation.
#[derive(Debug, Clone)]
pub struct FrameShift {
    pub x_diag: DVector<f64>,
    pub g_diag: DVector<f64>,
    pub g_scale: f64,
}

/// Everything an engine may ask about the objective. Implementations that
/// track a closed-form orbit also expose the expected next iterate, so the
/// driver can measure drift, and an optional frame shift for rescaled runs.
pub trait Oracle {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>, k: usize) -> Result<f64, ReplayError>;
    fn gradient(&self, x: &DVector<f64>, k: usize) -> Result<DVector<f64>, ReplayError>;
    fn hessian(&self, _x: &DVector<f64>, _k: usize) -> Result<DMatrix<f64>, ReplayError> {
        Err(ReplayError::Unsupported("hessian"))
    }
    /// Transposed residual Jacobian `G = J_r^t` for least-squares oracles.
    fn jacobian_t(&self, _x: &DVector<f64>, _k: usize) -> Result<DMatrix<f64>, ReplayError> {
        Err(ReplayError::Unsupported("jacobian"))
    }
    fn closed_form_next(&self, _k: usize) -> Option<DVector<f64>> {
        None
    }
    fn frame_shift(&self, _k: usize) -> Option<FrameShift> {
        None
    }
}

/// Optimizer engines in the `d_k = -(M_k M_k^t)^{-1} g_k` family.
#[derive(Debug, Clone)]
pub enum Method {
    SteepestDescent,
    /// Newton direction when the Hessian is safely positive definite,
    /// steepest descent otherwise.
    NewtonFallback,
    Bfgs {
        b0: Option<DMatrix<f64>>,
        /// Use the exact-line-search form of the update (the rank-two update
        /// written in terms of `g_k` alone); the standard form otherwise.
        exact_ls_update: bool,
    },
    GaussNewton,
    /// Steepest descent with `M_k = growth^k I`: deliberately violates the
    /// bounded-`M_k` hypothesis for the sanity checker's negative control.
    ScaledSteepest { growth: f64 },
}

impl Method {
    pub fn id(&self) -> &'static str {
        match self {
            Method::SteepestDescent => "steepest_descent",
            Method::NewtonFallback => "newton_fallback",
            Method::Bfgs { .. } => "bfgs",
            Method::GaussNewton => "gauss_newton",
            Method::ScaledSteepest { .. } => "scaled_steepest",
        }
    }
}

/// Step-size selection policy.
#[derive(Debug, Clone)]
pub enum StepPolicy {
    /// Backtracking enforcing the sufficient-decrease condition with
    /// parameter `sigma`, never shrinking below `floor`.
    Backtracking {
        sigma: f64,
        alpha0: f64,
        shrink: f64,
        floor: f64,
        max_halvings: usize,
    },
    /// One secant step on the directional derivative: exact on quadratics.
    ExactSecant,
    Unit,
    /// Fixed schedule `alpha_k`, one entry per step.
    Prescribed(Vec<f64>),
}

impl StepPolicy {
    pub fn backtracking(floor: f64) -> Self {
        StepPolicy::Backtracking {
            sigma: 1e-4,
            alpha0: 1.0,
            shrink: 0.5,
            floor,
            max_halvings: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub k: usize,
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub alpha: f64,
    pub step_residual: f64,
}

/// Record of one driven run.
#[derive(Debug, Clone, Serialize)]
pub struct ReplayTrace {
    pub method: String,
    pub rows: Vec<TraceRow>,
    pub max_step_residual: f64,
    /// Largest relative residual of `M_k M_k^t s_k + alpha_k g_k` over the run.
    pub max_mmtsk_residual: f64,
    /// Steps violating the sufficient-decrease check at sigma = 1e-4.
    pub first_wolfe_violations: usize,
    pub final_grad_norm: f64,
    /// First step index at which the gradient dropped below the stop
    /// tolerance, when one was given.
    pub converged_at: Option<usize>,
    pub passed: bool,
}

/// Writes a trace as CSV with columns `k, x[0..n-1], f, grad_norm, alpha,
/// step_residual`.
pub fn write_trace_csv<W: std::io::Write>(
    trace: &ReplayTrace,
    dim: usize,
    mut w: W,
) -> std::io::Result<()> {
    write!(w, "k")?;
    for i in 0..dim {
        write!(w, ",x{i}")?;
    }
    writeln!(w, ",f,grad_norm,alpha,step_residual")?;
    for row in &trace.rows {
        write!(w, "{}", row.k)?;
        for v in &row.x {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(
            w,
            ",{:.16e},{:.16e},{:.16e},{:.16e}",
            row.f, row.grad_norm, row.alpha, row.step_residual
        )?;
    }
    Ok(())
}

fn solve_spd(
    m: &DMatrix<f64>,
    rhs: &DVector<f64>,
    what: &str,
    k: usize,
) -> Result<DVector<f64>, ReplayError> {
    m.clone()
        .cholesky()
        .map(|c| c.solve(rhs))
        .or_else(|| m.clone().lu().solve(rhs))
        .ok_or_else(|| ReplayError::Singular {
            what: what.to_string(),
            k,
        })
}

struct EngineState {
    b: Option<DMatrix<f64>>,
}

#[allow(clippy::too_many_arguments)]
fn direction(
    method: &Method,
    state: &EngineState,
    oracle: &dyn Oracle,
    x: &DVector<f64>,
    g: &DVector<f64>,
    k: usize,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>), ReplayError> {
    match method {
        Method::SteepestDescent => Ok((-g, None)),
        Method::ScaledSteepest { growth } => {
            let scale = growth.powi(k as i32).powi(2);
            Ok((-g / scale, Some(DMatrix::from_diagonal(
                &DVector::from_element(g.len(), scale),
            ))))
        }
        Method::NewtonFallback => {
            let h = oracle.hessian(x, k)?;
            match h.clone().cholesky() {
                Some(chol) => {
                    let d = chol.solve(&(-g));
                    Ok((d, Some(h)))
                }
                // Not positive definite: take the steepest descent direction.
                None => Ok((-g, None)),
            }
        }
        Method::Bfgs { .. } => {
            let b = state.b.as_ref().expect("BFGS state initialized");
            let d = solve_spd(b, &(-g), "BFGS matrix", k)?;
            Ok((d, Some(b.clone())))
        }
        Method::GaussNewton => {
            let gmat = oracle.jacobian_t(x, k)?;
            let m = &gmat * gmat.transpose();
            let d = m
                .clone()
                .lu()
                .solve(&(-g))
                .ok_or_else(|| ReplayError::Singular {
                    what: "Gauss-Newton normal matrix".into(),
                    k,
                })?;
            Ok((d, Some(m)))
        }
    }
}

fn select_alpha(
    policy: &StepPolicy,
    oracle: &dyn Oracle,
    x: &DVector<f64>,
    f0: f64,
    g: &DVector<f64>,
    d: &DVector<f64>,
    k: usize,
) -> Result<f64, ReplayError> {
    match policy {
        StepPolicy::Unit => Ok(1.0),
        StepPolicy::Prescribed(v) => v
            .get(k)
            .copied()
            .ok_or(ReplayError::ScheduleExhausted { k }),
        StepPolicy::ExactSecant => {
            let slope0 = g.dot(d);
            let g1 = oracle.gradient(&(x + d), k)?;
            let slope1 = g1.dot(d);
            let denom = slope1 - slope0;
            if denom <= 0.0 {
                Ok(1.0)
            } else {
                Ok(-slope0 / denom)
            }
        }
        StepPolicy::Backtracking {
            sigma,
            alpha0,
            shrink,
            floor,
            max_halvings,
        } => {
            let slope = g.dot(d);
            let mut alpha = *alpha0;
            for _ in 0..*max_halvings {
                let trial = x + alpha * d;
                let f_trial = oracle.value(&trial, k)?;
                if f_trial <= f0 + sigma * alpha * slope {
                    return Ok(alpha);
                }
                let smaller = alpha * shrink;
                if smaller < *floor {
                    break;
                }
                alpha = smaller;
            }
            // The floor is a hypothesis of the convergence theorem, so the
            // step never shrinks past it; violations show up in the
            // sufficient-decrease counter.
            Ok(alpha.max(*floor))
        }
    }
}

/// Runs `method` for `steps` iterations from `x0` and records the trace.
///
/// When `stop_gtol` is given, the run stops early once the gradient norm
/// falls below it. Orbit oracles make every produced iterate pass through
/// their on-orbit validation.
pub fn drive(
    method: &Method,
    oracle: &dyn Oracle,
    x0: DVector<f64>,
    steps: usize,
    policy: &StepPolicy,
    stop_gtol: Option<f64>,
) -> Result<ReplayTrace, ReplayError> {
    let mut x = x0;
    let mut f = oracle.value(&x, 0)?;
    let mut g = oracle.gradient(&x, 0)?;
    let mut state = EngineState {
        b: match method {
            Method::Bfgs { b0, .. } => Some(
                b0.clone()
                    .unwrap_or_else(|| DMatrix::identity(x.len(), x.len())),
            ),
            _ => None,
        },
    };

    let mut rows = Vec::with_capacity(steps.min(1 << 20));
    let mut max_step_residual = 0.0f64;
    let mut max_mmtsk = 0.0f64;
    let mut wolfe_violations = 0usize;
    let mut converged_at = None;

    for k in 0..steps {
        if stop_gtol.map_or(false, |t| g.norm() < t) {
            converged_at = Some(k);
            break;
        }
        if let Some(shift) = oracle.frame_shift(k) {
            x.component_mul_assign(&shift.x_diag);
            g.component_mul_assign(&shift.g_diag);
            g *= shift.g_scale;
            // The objective transforms by the same scale as the gradient,
            // keeping f, g and B mutually consistent in the new frame.
            f *= shift.g_scale;
            if let Some(b) = state.b.as_mut() {
                let n = b.nrows();
                for i in 0..n {
                    for j in 0..n {
                        b[(i, j)] *= shift.g_scale * shift.g_diag[i] * shift.g_diag[j];
                    }
                }
            }
        }

        let (d, m_mat) = direction(method, &state, oracle, &x, &g, k)?;
        let slope = g.dot(&d);
        if slope >= 0.0 {
            return Err(ReplayError::NonDescent { k, slope });
        }
        let alpha = select_alpha(policy, oracle, &x, f, &g, &d, k)?;
        let s = alpha * &d;
        let x_next = &x + &s;

        // Defining relation of the direction: M_k M_k^t s_k = -alpha_k g_k.
        let mmtsk = match &m_mat {
            Some(m) => (m * &s + alpha * &g).norm() / (alpha * g.norm()).max(1e-300),
            None => (&s + alpha * &g).norm() / (alpha * g.norm()).max(1e-300),
        };
        max_mmtsk = max_mmtsk.max(mmtsk);

        let step_residual = match oracle.closed_form_next(k) {
            Some(expected) => (&x_next - expected).norm() / s.norm().max(1e-300),
            None => 0.0,
        };
        max_step_residual = max_step_residual.max(step_residual);

        let f_next = oracle.value(&x_next, k + 1)?;
        let g_next = oracle.gradient(&x_next, k + 1)?;

        // Sufficient decrease at the reference sigma.
        let wolfe_slack = 1e-12 * (1.0 + f.abs());
        if f_next > f + 1e-4 * alpha * slope + wolfe_slack {
            wolfe_violations += 1;
        }

        if let Method::Bfgs {
            exact_ls_update, ..
        } = method
        {
            let b = state.b.as_mut().expect("BFGS state");
            let y = &g_next - &g;
            if *exact_ls_update {
                let sg = s.dot(&g);
                *b += (alpha / sg) * (&g * g.transpose()) - (1.0 / sg) * (&y * y.transpose());
            } else {
                let ys = y.dot(&s);
                if ys > 1e-12 * y.norm() * s.norm() {
                    let bs = &*b * &s;
                    let sbs = s.dot(&bs);
                    *b += (&y * y.transpose()) / ys - (&bs * bs.transpose()) / sbs;
                }
            }
        }

        rows.push(TraceRow {
            k,
            x: x.iter().copied().collect(),
            f,
            grad_norm: g.norm(),
            alpha,
            step_residual,
        });

        x = x_next;
        f = f_next;
        g = g_next;
    }

    if converged_at.is_none() && stop_gtol.map_or(false, |t| g.norm() < t) {
        converged_at = Some(rows.len());
    }

    let passed = rows.iter().all(|r| r.f.is_finite() && r.grad_norm.is_finite());
    Ok(ReplayTrace {
        method: method.id().to_string(),
        rows,
        max_step_residual,
        max_mmtsk_residual: max_mmtsk,
        first_wolfe_violations: wolfe_violations,
        final_grad_norm: g.norm(),
        converged_at,
        passed,
    })
}

/// An objective given by closures, with optional Hessian and residual form.
pub struct ObjectiveOracle {
    pub name: String,
    dim: usize,
    value: Box<dyn Fn(&DVector<f64>) -> f64 + Sync + Send>,
    gradient: Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Sync + Send>,
    hessian: Option<Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Sync + Send>>,
    jacobian_t: Option<Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Sync + Send>>,
}

impl ObjectiveOracle {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        value: impl Fn(&DVector<f64>) -> f64 + Sync + Send + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Sync + Send + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            value: Box::new(value),
            gradient: Box::new(gradient),
            hessian: None,
            jacobian_t: None,
        }
    }

    pub fn with_hessian(
        mut self,
        hessian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Sync + Send + 'static,
    ) -> Self {
        self.hessian = Some(Box::new(hessian));
        self
    }

    pub fn with_jacobian_t(
        mut self,
        jacobian_t: impl Fn(&DVector<f64>) -> DMatrix<f64> + Sync + Send + 'static,
    ) -> Self {
        self.jacobian_t = Some(Box::new(jacobian_t));
        self
    }

    /// Central finite-difference consistency of the gradient at `points`.
    pub fn gradient_consistency(&self, points: &[DVector<f64>]) -> ConditionReport {
        let h = 1e-6;
        let mut worst = 0.0f64;
        for p in points {
            let g = (self.gradient)(p);
            for i in 0..self.dim {
                let mut hi = p.clone();
                let mut lo = p.clone();
                hi[i] += h;
                lo[i] -= h;
                let fd = ((self.value)(&hi) - (self.value)(&lo)) / (2.0 * h);
                let rel = (fd - g[i]).abs() / g[i].abs().max(1.0);
                worst = worst.max(rel);
            }
        }
        ConditionReport::residual("oracle.gradient_fd", (0, points.len()), worst, 1e-5, None)
    }
}

impl Oracle for ObjectiveOracle {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &DVector<f64>, _k: usize) -> Result<f64, ReplayError> {
        Ok((self.value)(x))
    }
    fn gradient(&self, x: &DVector<f64>, _k: usize) -> Result<DVector<f64>, ReplayError> {
        Ok((self.gradient)(x))
    }
    fn hessian(&self, x: &DVector<f64>, _k: usize) -> Result<DMatrix<f64>, ReplayError> {
        match &self.hessian {
            Some(h) => Ok(h(x)),
            None => Err(ReplayError::Unsupported("hessian")),
        }
    }
    fn jacobian_t(&self, x: &DVector<f64>, _k: usize) -> Result<DMatrix<f64>, ReplayError> {
        match &self.jacobian_t {
            Some(j) => Ok(j(x)),
            None => Err(ReplayError::Unsupported("jacobian")),
        }
    }
}

/// Oracle backed by a closed-form orbit: values and gradients exist only at
/// the orbit points. A query whose point drifts beyond `tol` (relative) from
/// the expected iterate is an error.
pub struct OrbitOracle<'a> {
    schema: &'a OrbitSchema,
    pub tol: f64,
}

impl<'a> OrbitOracle<'a> {
    pub fn new(schema: &'a OrbitSchema) -> Self {
        Self { schema, tol: 1e-8 }
    }

    pub fn with_tol(schema: &'a OrbitSchema, tol: f64) -> Self {
        Self { schema, tol }
    }

    fn validate(&self, x: &DVector<f64>, k: usize) -> Result<(), ReplayError> {
        let expected = self.schema.materialize(k)?.x;
        let rel = (x - &expected).norm() / expected.norm().max(1.0);
        if rel > self.tol {
            return Err(ReplayError::OffOrbit {
                k,
                relative_error: rel,
                tol: self.tol,
            });
        }
        Ok(())
    }

    /// Nearest orbit index within tolerance, scanning `0..k_max`.
    pub fn lookup(&self, x: &DVector<f64>, k_max: usize) -> Option<usize> {
        let mut best = None;
        let mut best_rel = self.tol;
        for k in 0..k_max {
            let Ok(m) = self.schema.materialize(k) else {
                break;
            };
            let rel = (x - &m.x).norm() / m.x.norm().max(1.0);
            if rel <= best_rel {
                best_rel = rel;
                best = Some(k);
            }
        }
        best
    }
}

impl Oracle for OrbitOracle<'_> {
    fn dim(&self) -> usize {
        self.schema.dim()
    }
    fn value(&self, x: &DVector<f64>, k: usize) -> Result<f64, ReplayError> {
        self.validate(x, k)?;
        Ok(self.schema.materialize(k)?.f)
    }
    fn gradient(&self, x: &DVector<f64>, k: usize) -> Result<DVector<f64>, ReplayError> {
        self.validate(x, k)?;
        Ok(self.schema.materialize(k)?.g)
    }
    fn closed_form_next(&self, k: usize) -> Option<DVector<f64>> {
        self.schema.materialize(k + 1).ok().map(|m| m.x)
    }
}

/// Evaluates the first Wolfe, Goldstein and second Wolfe conditions for the
/// step `alpha * d` from `x`.
#[allow(clippy::too_many_arguments)]
pub fn wolfe_goldstein_probe(
    oracle: &dyn Oracle,
    x: &DVector<f64>,
    d: &DVector<f64>,
    alpha: f64,
    sigma: f64,
    c: f64,
    beta: f64,
    k: usize,
) -> Result<Vec<ConditionReport>, ReplayError> {
    let g0 = oracle.gradient(x, k)?;
    let slope = g0.dot(d);
    if slope >= 0.0 {
        return Err(ReplayError::NonDescent { k, slope });
    }
    let f0 = oracle.value(x, k)?;
    let s = alpha * d;
    let x1 = x + &s;
    let f1 = oracle.value(&x1, k + 1)?;
    let g1 = oracle.gradient(&x1, k + 1)?;
    let sg = s.dot(&g0);
    let slack = 1e-12 * (1.0 + f0.abs());

    let first = ConditionReport::le(
        "eq.first_wolfe",
        (k, k),
        f1,
        f0 + sigma * sg,
        slack,
        Some(Witness::K(k)),
    );
    let df = f1 - f0;
    let gold_pass = (1.0 - c) * sg <= df + slack && df <= c * sg + slack;
    let goldstein = ConditionReport {
        check_id: "eq.goldstein".into(),
        k_range: (k, k),
        lhs: df,
        rhs: c * sg,
        tolerance: slack,
        status: if gold_pass {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        witness: None,
    };
    let second = ConditionReport::le(
        "eq.pre_exact",
        (k, k),
        beta * sg,
        g1.dot(&s),
        slack,
        Some(Witness::K(k)),
    );
    Ok(vec![first, goldstein, second])
}

/// One problem of the benign convergence suite.
pub struct SuiteProblem {
    pub oracle: ObjectiveOracle,
    pub x0: DVector<f64>,
}

fn quadratic_problem(name: &str, l: DMatrix<f64>, target: DVector<f64>, x0: DVector<f64>) -> SuiteProblem {
    // f(x) = 1/2 |L (x - t)|^2 with residuals r = L (x - t).
    let a = l.transpose() * &l;
    let dim = target.len();
    let l_res = l.clone();
    let a_g = a.clone();
    let t_g = target.clone();
    let a_h = a.clone();
    let oracle = ObjectiveOracle::new(
        name,
        dim,
        move |x: &DVector<f64>| 0.5 * (&l * (x - &target)).norm_squared(),
        move |x: &DVector<f64>| &a_g * (x - &t_g),
    )
    .with_hessian(move |_| a_h.clone())
    .with_jacobian_t(move |_| l_res.transpose());
    SuiteProblem { oracle, x0 }
}

fn rosenbrock_problem(name: &str, b: f64, shift: f64, x0: DVector<f64>) -> SuiteProblem {
    // f(x, y) = (shift - x)^2 + b (y - x^2)^2 as half a sum of squares.
    let value = move |v: &DVector<f64>| {
        let (x, y) = (v[0], v[1]);
        (shift - x).powi(2) + b * (y - x * x).powi(2)
    };
    let gradient = move |v: &DVector<f64>| {
        let (x, y) = (v[0], v[1]);
        DVector::from_vec(vec![
            -2.0 * (shift - x) - 4.0 * b * x * (y - x * x),
            2.0 * b * (y - x * x),
        ])
    };
    let hessian = move |v: &DVector<f64>| {
        let (x, y) = (v[0], v[1]);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                2.0 + 8.0 * b * x * x - 4.0 * b * (y - x * x),
                -4.0 * b * x,
                -4.0 * b * x,
                2.0 * b,
            ],
        )
    };
    // Residuals: r1 = sqrt(2) (shift - x), r2 = sqrt(2 b) (y - x^2).
    let jac = move |v: &DVector<f64>| {
        let x = v[0];
        let s2 = 2.0f64.sqrt();
        let sb = (2.0 * b).sqrt();
        DMatrix::from_row_slice(2, 2, &[-s2, -2.0 * sb * x, 0.0, sb])
    };
    let oracle = ObjectiveOracle::new(name, 2, value, gradient)
        .with_hessian(hessian)
        .with_jacobian_t(jac);
    SuiteProblem { oracle, x0 }
}

/// Ten benign problems with bounded level sets: convex quadratics of
/// increasing dimension and conditioning, two valley-shaped least-squares
/// surfaces and two linear data fits. Every problem carries value, gradient,
/// Hessian and residual Jacobian, so all four engines run on all ten.
pub fn benign_suite() -> Vec<SuiteProblem> {
    let mut suite = Vec::new();

    suite.push(quadratic_problem(
        "quad2_identity",
        DMatrix::identity(2, 2),
        DVector::from_vec(vec![1.0, -2.0]),
        DVector::from_vec(vec![4.0, 3.0]),
    ));
    suite.push(quadratic_problem(
        "quad3_diag",
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0])),
        DVector::from_vec(vec![0.5, -0.5, 1.0]),
        DVector::from_vec(vec![-1.0, 2.0, 5.0]),
    ));
    suite.push(quadratic_problem(
        "quad5_cond50",
        // Singular values 50^{i/8}: the Hessian condition number is 50.
        DMatrix::from_diagonal(&DVector::from_fn(5, |i, _| 50f64.powf(i as f64 / 8.0))),
        DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0, 1.0]),
        DVector::from_vec(vec![3.0, -2.0, 0.0, 4.0, -1.0]),
    ));
    {
        let n = 7;
        let mut l = DMatrix::identity(n, n);
        for i in 1..n {
            l[(i, i - 1)] = 0.5;
        }
        suite.push(quadratic_problem(
            "quad7_coupled",
            l,
            DVector::from_fn(n, |i, _| (i as f64 - 3.0) / 2.0),
            DVector::from_element(n, 2.0),
        ));
    }
    suite.push(quadratic_problem(
        "quad9_mild",
        DMatrix::from_diagonal(&DVector::from_fn(9, |i, _| (1.0 + i as f64).sqrt())),
        DVector::from_fn(9, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 }),
        DVector::from_element(9, 0.5),
    ));
    suite.push(quadratic_problem(
        "quad4_shifted",
        DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 0.5, 1.0])),
        DVector::from_vec(vec![-3.0, 2.0, 7.0, 0.0]),
        DVector::zeros(4),
    ));
    suite.push(rosenbrock_problem(
        "valley_b5",
        5.0,
        1.0,
        DVector::from_vec(vec![-1.2, 1.0]),
    ));
    suite.push(rosenbrock_problem(
        "valley_b3_shifted",
        3.0,
        1.5,
        DVector::from_vec(vec![0.0, 0.0]),
    ));
    {
        // Overdetermined linear least squares, 8 residuals in 4 unknowns.
        let m = 8;
        let n = 4;
        let a = DMatrix::from_fn(m, n, |i, j| ((i * n + j) % 7) as f64 / 3.0 - 1.0 + if i == j { 2.0 } else { 0.0 });
        let x_star = DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0]);
        let mut b = &a * &x_star;
        for i in 0..m {
            b[i] += 0.1 * ((i as f64) - 3.5) / 3.5;
        }
        let a_v = a.clone();
        let b_v = b.clone();
        let a_g = a.clone();
        let b_g = b.clone();
        let a_h = a.clone();
        let a_j = a.clone();
        let oracle = ObjectiveOracle::new(
            "linear_ls_8x4",
            n,
            move |x: &DVector<f64>| 0.5 * (&a_v * x - &b_v).norm_squared(),
            move |x: &DVector<f64>| a_g.transpose() * (&a_g * x - &b_g),
        )
        .with_hessian(move |_| a_h.transpose() * &a_h)
        .with_jacobian_t(move |_| a_j.transpose());
        suite.push(SuiteProblem {
            oracle,
            x0: DVector::zeros(n),
        });
    }
    {
        // Quadratic polynomial fit through five samples.
        let ts: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let a = DMatrix::from_fn(5, 3, |i, j| ts[i].powi(j as i32));
        let coeffs = DVector::from_vec(vec![0.3, -1.1, 0.8]);
        let mut y = &a * &coeffs;
        y[2] += 0.05;
        let a_v = a.clone();
        let y_v = y.clone();
        let a_g = a.clone();
        let y_g = y.clone();
        let a_h = a.clone();
        let a_j = a.clone();
        let oracle = ObjectiveOracle::new(
            "poly_fit_5x3",
            3,
            move |x: &DVector<f64>| 0.5 * (&a_v * x - &y_v).norm_squared(),
            move |x: &DVector<f64>| a_g.transpose() * (&a_g * x - &y_g),
        )
        .with_hessian(move |_| a_h.transpose() * &a_h)
        .with_jacobian_t(move |_| a_j.transpose());
        suite.push(SuiteProblem {
            oracle,
            x0: DVector::from_vec(vec![5.0, 5.0, 5.0]),
        });
    }

    suite
}

/// Per-run result of the convergence sanity check.
#[derive(Debug, Clone, Serialize)]
pub struct Theorem1Run {
    pub problem: String,
    pub method: String,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub max_mmtsk_residual: f64,
    pub first_wolfe_violations: usize,
    pub converged: bool,
}

/// Runs every method over the suite with the given step floor and verifies
/// that all runs reach `gtol` within `cap` iterations, that the defining
/// relation of the direction holds step by step, and that sufficient
/// decrease is never violated.
pub fn theorem1_check(
    problems: &[SuiteProblem],
    methods: &[Method],
    floor: f64,
    cap: usize,
    gtol: f64,
) -> (Vec<ConditionReport>, Vec<Theorem1Run>) {
    let policy = StepPolicy::backtracking(floor);
    let mut runs = Vec::new();
    let mut worst_grad = 0.0f64;
    let mut worst_grad_witness = None;
    let mut worst_mmtsk = 0.0f64;
    let mut total_wolfe = 0usize;
    let mut all_converged = true;

    for (pi, problem) in problems.iter().enumerate() {
        for method in methods {
            let trace = drive(
                method,
                &problem.oracle,
                problem.x0.clone(),
                cap,
                &policy,
                Some(gtol),
            );
            match trace {
                Ok(t) => {
                    let converged = t.converged_at.is_some();
                    if !converged {
                        all_converged = false;
                    }
                    if t.final_grad_norm > worst_grad {
                        worst_grad = t.final_grad_norm;
                        worst_grad_witness = Some(Witness::Km(pi, 0));
                    }
                    worst_mmtsk = worst_mmtsk.max(t.max_mmtsk_residual);
                    total_wolfe += t.first_wolfe_violations;
                    runs.push(Theorem1Run {
                        problem: problem.oracle.name.clone(),
                        method: method.id().to_string(),
                        iterations: t.rows.len(),
                        final_grad_norm: t.final_grad_norm,
                        max_mmtsk_residual: t.max_mmtsk_residual,
                        first_wolfe_violations: t.first_wolfe_violations,
                        converged,
                    });
                }
                Err(e) => {
                    all_converged = false;
                    runs.push(Theorem1Run {
                        problem: problem.oracle.name.clone(),
                        method: method.id().to_string(),
                        iterations: 0,
                        final_grad_norm: f64::MAX,
                        max_mmtsk_residual: f64::MAX,
                        first_wolfe_violations: 0,
                        converged: false,
                    });
                    let _ = e;
                }
            }
        }
    }

    let reports = vec![
        ConditionReport {
            check_id: "thm1.gradient_to_zero".into(),
            k_range: (0, cap),
            lhs: worst_grad,
            rhs: gtol,
            tolerance: 0.0,
            status: if all_converged {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            witness: worst_grad_witness,
        },
        ConditionReport::residual("eq.mmtsk", (0, cap), worst_mmtsk, 1e-8, None),
        ConditionReport::residual(
            "eq.first_wolfe.per_step",
            (0, cap),
            total_wolfe as f64,
            0.5,
            None,
        ),
    ];
    (reports, runs)
}

/// Negative control for the sanity checker: steepest descent with
/// `M_k = growth^k I` violates the bounded-`M_k` hypothesis, and the run
/// must stall. The report passes when the stall is observed.
pub fn theorem1_unbounded_demo(cap: usize, gtol: f64) -> ConditionReport {
    // Anisotropic quadratic so a plain gradient step cannot land on the
    // minimizer; the geometric growth of M_k then freezes the iterates at a
    // positive gradient norm.
    let problem = quadratic_problem(
        "quad2_unbounded_mk",
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])),
        DVector::zeros(2),
        DVector::from_vec(vec![10.0, -7.0]),
    );
    let trace = drive(
        &Method::ScaledSteepest { growth: 1.5 },
        &problem.oracle,
        problem.x0.clone(),
        cap,
        &StepPolicy::backtracking(1e-3),
        Some(gtol),
    );
    let stalled = match &trace {
        Ok(t) => t.converged_at.is_none(),
        Err(_) => true,
    };
    ConditionReport {
        check_id: "thm1.unbounded_mk_expected_stall".into(),
        k_range: (0, cap),
        lhs: trace.map(|t| t.final_grad_norm).unwrap_or(f64::MAX),
        rhs: gtol,
        tolerance: 0.0,
        status: if stalled {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        witness: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steepest_descent_one_exact_step_on_sphere() {
        // f = 1/2 |x|^2: exact line search reaches the minimizer in one step.
        let oracle = ObjectiveOracle::new(
            "sphere",
            3,
            |x: &DVector<f64>| 0.5 * x.norm_squared(),
            |x: &DVector<f64>| x.clone(),
        );
        let trace = drive(
            &Method::SteepestDescent,
            &oracle,
            DVector::from_vec(vec![1.0, -2.0, 0.5]),
            5,
            &StepPolicy::ExactSecant,
            Some(1e-12),
        )
        .unwrap();
        assert_eq!(trace.converged_at, Some(1));
        assert!((trace.rows[0].alpha - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bfgs_two_steps_on_2d_quadratic() {
        let l = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.3, 1.0]);
        let p = quadratic_problem("q2", l, DVector::zeros(2), DVector::from_vec(vec![1.0, 1.0]));
        let trace = drive(
            &Method::Bfgs {
                b0: None,
                exact_ls_update: false,
            },
            &p.oracle,
            p.x0.clone(),
            10,
            &StepPolicy::ExactSecant,
            Some(1e-10),
        )
        .unwrap();
        assert!(
            trace.converged_at.map_or(false, |k| k <= 2),
            "converged_at = {:?}, final grad {}",
            trace.converged_at,
            trace.final_grad_norm
        );
    }

    #[test]
    fn suite_oracle_gradients_are_consistent() {
        for p in benign_suite() {
            let probes = vec![p.x0.clone(), DVector::from_element(p.oracle.dim, 0.7)];
            let rep = p.oracle.gradient_consistency(&probes);
            assert!(rep.passed(), "{}: {rep:?}", p.oracle.name);
        }
    }

    #[test]
    fn theorem1_suite_converges_with_floor() {
        let suite = benign_suite();
        let methods = [
            Method::SteepestDescent,
            Method::NewtonFallback,
            Method::Bfgs {
                b0: None,
                exact_ls_update: false,
            },
            Method::GaussNewton,
        ];
        let (reports, runs) = theorem1_check(&suite, &methods, 1e-3, 10_000, 1e-6);
        for r in &reports {
            assert!(r.passed(), "{r:?}\nruns: {runs:#?}");
        }
        assert_eq!(runs.len(), 40);
    }

    #[test]
    fn unbounded_mk_stalls_as_expected() {
        let rep = theorem1_unbounded_demo(2000, 1e-6);
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn probe_on_quadratic_exact_step() {
        let oracle = ObjectiveOracle::new(
            "sphere2",
            2,
            |x: &DVector<f64>| 0.5 * x.norm_squared(),
            |x: &DVector<f64>| x.clone(),
        );
        let x = DVector::from_vec(vec![2.0, 0.0]);
        let d = DVector::from_vec(vec![-2.0, 0.0]);
        // Exact step: new gradient orthogonal to the step, second Wolfe
        // holds for any beta < 1.
        let reports =
            wolfe_goldstein_probe(&oracle, &x, &d, 1.0, 0.25, 0.25, 0.9, 0).unwrap();
        for r in &reports {
            assert!(r.passed(), "{r:?}");
        }
        // Non-descent directions are rejected.
        let err = wolfe_goldstein_probe(&oracle, &x, &x.clone(), 1.0, 0.25, 0.25, 0.9, 0);
        assert!(matches!(err, Err(ReplayError::NonDescent { .. })));
    }
}
