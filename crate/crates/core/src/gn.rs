//! The Gauss-Newton divergence example in dimension 7.
//!
//! The orbit has period 12 and constant normalized step `1_7`. The rotation
//! blocks are `R_{pi/3}`, `R_{pi/6}` (exponent 0), `R_{pi/2}` (exponent 1)
//! and `(-1)` (exponent 3), with contraction `lambda = (1/(1+sqrt 3))^{1/3}`
//! chosen so that `lambda^3 (1 + sqrt 3) = 1`, which is exactly the
//! exact-line-search identity. The objective values on the orbit are
//! `f_k = 7 (kappa + lambda^{3k}) / 2`: the schema carries the
//! `lambda`-scaled part `fbar = 7/2` plus the constant offset
//! `7 kappa / 2`, and the gradients are `gbar = -1_7 / 2`.
//!
//! The method itself enters through the residuals `r_j = sqrt(kappa + phi_j)`
//! whose Jacobian transpose is `G_k = -(lambda^{3k} / (2 sqrt(kappa +
//! lambda^{3k}))) Q^k D^{-k}`, and through the step sizes
//! `alpha_k = lambda^{3k} / (2 (kappa + lambda^{3k}))`, which shrink to zero:
//! the one escape hatch the bounded-`M_k` convergence theorem leaves open.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::checks::{
    check_convexity, check_dn, check_hessian_sparsity, check_line_separation,
    check_linesearch_conditions, divergence_witness, CheckConfig,
};
use crate::replay::{drive, Method, Oracle, OrbitOracle, ReplayError, ReplayTrace, StepPolicy};
use crate::report::{CheckStatus, ConditionReport, Witness};
use crate::schema::{OrbitSchema, SchemaError};

pub const GN_DIM: usize = 7;
pub const GN_PERIOD: usize = 12;

#[derive(Debug, Error)]
pub enum GnError {
    #[error("kappa must be >= 1 so the residuals stay >= 1 on the orbit, got {0}")]
    InvalidKappa(f64),
    #[error("Gauss-Newton normal matrix singular at step {k}")]
    SingularNormalMatrix { k: usize },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

/// Configuration of the example; `kappa` shifts the residuals and must keep
/// `kappa + phi_j >= 1` on the orbit, which `kappa >= 1` guarantees since
/// `phi_j(x_k) = lambda^{3k} > 0`.
#[derive(Debug, Clone, Copy)]
pub struct GnConfig {
    pub kappa: f64,
    pub periods_to_verify: usize,
}

impl Default for GnConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            periods_to_verify: 5,
        }
    }
}

/// The constructed example: the objective-level orbit schema plus the
/// residual-level data needed to replay the actual update rule.
#[derive(Debug, Clone)]
pub struct GnExample {
    pub config: GnConfig,
    pub lambda: f64,
    pub schema: OrbitSchema,
}

/// 2x2 counterclockwise rotation from exact cosine/sine values.
fn rotation(c: f64, s: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// The block-diagonal orthogonal matrix of the example, from exact surds.
pub fn gn_q() -> DMatrix<f64> {
    let r3 = 3f64.sqrt();
    let mut q = DMatrix::zeros(GN_DIM, GN_DIM);
    q.view_mut((0, 0), (2, 2)).copy_from(&rotation(0.5, r3 / 2.0));
    q.view_mut((2, 2), (2, 2)).copy_from(&rotation(r3 / 2.0, 0.5));
    q.view_mut((4, 4), (2, 2)).copy_from(&rotation(0.0, 1.0));
    q[(6, 6)] = -1.0;
    q
}

pub fn gn_lambda() -> f64 {
    (1.0 / (1.0 + 3f64.sqrt())).cbrt()
}

/// Builds and validates the example.
pub fn build_gn(config: GnConfig) -> Result<GnExample, GnError> {
    if !(config.kappa >= 1.0) {
        return Err(GnError::InvalidKappa(config.kappa));
    }
    let lambda = gn_lambda();
    let steps: Vec<DVector<f64>> = (0..GN_PERIOD)
        .map(|_| DVector::from_element(GN_DIM, 1.0))
        .collect();
    let f_bar = vec![3.5; GN_PERIOD];
    let g_bar: Vec<DVector<f64>> = (0..GN_PERIOD)
        .map(|_| DVector::from_element(GN_DIM, -0.5))
        .collect();
    let mut h = DMatrix::zeros(GN_DIM, GN_DIM);
    for i in 0..6 {
        h[(i, i)] = 3.5;
    }
    let h_bar = vec![h; GN_PERIOD];
    let schema = OrbitSchema::from_steps(
        gn_q(),
        lambda,
        vec![0, 0, 0, 0, 1, 1, 3],
        &steps,
        f_bar,
        g_bar,
        h_bar,
        3.5 * config.kappa,
        1e-10,
    )?;
    Ok(GnExample {
        config,
        lambda,
        schema,
    })
}

impl GnExample {
    /// Step size `alpha_k = lambda^{3k} / (2 (kappa + lambda^{3k}))`.
    pub fn alpha(&self, k: usize) -> f64 {
        let l3k = self.lambda.powi(3 * k as i32);
        l3k / (2.0 * (self.config.kappa + l3k))
    }

    /// Residual values on the orbit: `r_j(x_k) = sqrt(kappa + lambda^{3k})`.
    pub fn residuals(&self, k: usize) -> DVector<f64> {
        let l3k = self.lambda.powi(3 * k as i32);
        DVector::from_element(GN_DIM, (self.config.kappa + l3k).sqrt())
    }

    /// Transposed residual Jacobian
    /// `G_k = -(lambda^{3k} / (2 sqrt(kappa + lambda^{3k}))) Q^k D^{-k}`.
    pub fn jacobian(&self, k: usize) -> Result<DMatrix<f64>, GnError> {
        if k > self.schema.horizon() {
            return Err(GnError::Schema(SchemaError::HorizonExceeded {
                k,
                horizon: self.schema.horizon(),
            }));
        }
        let l3k = self.lambda.powi(3 * k as i32);
        let coeff = -l3k / (2.0 * (self.config.kappa + l3k).sqrt());
        let dk_inv = self.schema.d_pow(-(k as i64));
        let mut m = self.schema.q_pow(k).clone();
        // Q^k D^{-k}, then the scalar factor.
        for j in 0..GN_DIM {
            let s = coeff * dk_inv[j];
            for i in 0..GN_DIM {
                m[(i, j)] *= s;
            }
        }
        Ok(m)
    }

    /// Replays the defining update
    /// `x_{k+1} = x_k - alpha_k (G_k G_k^t)^{-1} g_k` from the materialized
    /// data and compares every step against the closed form `Q^k D^k 1_7`.
    pub fn verify_replay(
        &self,
        periods: usize,
    ) -> Result<(ReplayTrace, Vec<ConditionReport>), GnError> {
        let steps = periods * GN_PERIOD;
        let oracle = GnOrbitOracle {
            example: self,
            inner: OrbitOracle::new(&self.schema),
        };
        let alphas: Vec<f64> = (0..steps).map(|k| self.alpha(k)).collect();
        let x0 = self.schema.materialize(0)?.x;
        let trace = drive(
            &Method::GaussNewton,
            &oracle,
            x0,
            steps,
            &StepPolicy::Prescribed(alphas),
            None,
        )?;

        // Closed-form inverse of the normal matrix:
        // (G_k G_k^t)^{-1} = 4 lambda^{-6k} (kappa + lambda^{3k}) D^{2k}.
        let mut inv_defect = 0.0f64;
        for k in 0..steps.min(self.schema.horizon() / 2) {
            let g = self.jacobian(k)?;
            let normal = &g * g.transpose();
            let l3k = self.lambda.powi(3 * k as i32);
            let scale = 4.0 * self.lambda.powi(-6 * k as i32) * (self.config.kappa + l3k);
            let inv = DMatrix::from_diagonal(&(scale * self.schema.d_pow(2 * k as i64)));
            inv_defect = inv_defect
                .max((normal * inv - DMatrix::identity(GN_DIM, GN_DIM)).abs().max());
        }

        let mut alpha_increase = f64::NEG_INFINITY;
        for k in 1..steps {
            alpha_increase = alpha_increase.max(self.alpha(k) - self.alpha(k - 1));
        }
        let min_grad = trace
            .rows
            .iter()
            .map(|r| r.grad_norm)
            .fold(f64::INFINITY, f64::min);

        let reports = vec![
            ConditionReport::residual(
                "eq.def_gauss_newton.replay",
                (0, steps - 1),
                trace.max_step_residual,
                1e-10,
                None,
            ),
            ConditionReport::residual(
                "eq.def_gauss_newton.normal_inverse",
                (0, steps - 1),
                inv_defect,
                1e-10,
                None,
            ),
            ConditionReport {
                check_id: "gn.alpha_decreasing_to_zero".into(),
                k_range: (0, steps - 1),
                lhs: alpha_increase,
                rhs: 0.0,
                tolerance: 0.0,
                status: if alpha_increase < 0.0 && self.alpha(steps - 1) < self.alpha(0) {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
                witness: None,
            },
            ConditionReport {
                check_id: "gn.grad_norm_floor".into(),
                k_range: (0, steps - 1),
                lhs: min_grad,
                rhs: 0.5,
                tolerance: 1e-12,
                status: if min_grad >= 0.5 - 1e-12 {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
                witness: None,
            },
        ];
        Ok((trace, reports))
    }

    /// Verifies the whole condition stack: the closed-form identities of the
    /// construction, the per-residual convexity cases, the line-search
    /// constants and the geometric hypotheses.
    pub fn verify_conditions(&self, cfg: &CheckConfig) -> Vec<ConditionReport> {
        let mut reports = Vec::new();
        let p = GN_PERIOD;
        let lambda = self.lambda;
        let l3 = lambda.powi(3);
        let q = self.schema.q();

        // sum_{j=0}^{11} Qa^j = 0 (the full Q sum vanishes blockwise).
        let mut qa_sum = DMatrix::<f64>::zeros(4, 4);
        for j in 0..p {
            qa_sum += self.schema.q_pow(j).view((0, 0), (4, 4));
        }
        reports.push(ConditionReport::residual(
            "eq.q_gauss_newton.sum_qa",
            (0, p - 1),
            qa_sum.abs().max(),
            1e-12,
            None,
        ));

        // 1_4^t Qa 1_4 = 1 + sqrt 3.
        let ones4 = DVector::from_element(4, 1.0);
        let qa = q.view((0, 0), (4, 4));
        let quad_form = (qa * &ones4).dot(&ones4);
        reports.push(ConditionReport::residual(
            "eq.q_gauss_newton.ones_form",
            (0, 0),
            (quad_form - (1.0 + 3f64.sqrt())).abs(),
            1e-12,
            None,
        ));

        // Closed forms of the contracted iterate blocks.
        let r_quarter = rotation(0.0, 1.0);
        let xb_closed = (lambda * r_quarter - DMatrix::identity(2, 2))
            .lu()
            .solve(&DVector::from_element(2, 1.0))
            .expect("2x2 system is regular");
        let xb = self.schema.x_bar(0).rows(4, 2).into_owned();
        reports.push(ConditionReport::residual(
            "eq.xk_gauss_newton.b_block",
            (0, p - 1),
            (xb - xb_closed).amax(),
            1e-12,
            None,
        ));
        let xc_closed = -1.0 / (1.0 + l3);
        let mut xc_defect = 0.0f64;
        for k in 0..p {
            xc_defect = xc_defect.max((self.schema.x_bar(k)[6] - xc_closed).abs());
        }
        reports.push(ConditionReport::residual(
            "eq.xk_gauss_newton.c_block",
            (0, p - 1),
            xc_defect,
            1e-12,
            None,
        ));

        // s_k^t g_k = -7 lambda^{3k} / 2 on materialized data.
        let mut skgk_defect = 0.0f64;
        for k in 0..p {
            let a = self.schema.materialize(k).expect("within horizon");
            let b = self.schema.materialize(k + 1).expect("within horizon");
            let skgk = (b.x - &a.x).dot(&a.g);
            skgk_defect = skgk_defect.max((skgk + 3.5 * lambda.powi(3 * k as i32)).abs());
        }
        reports.push(ConditionReport::residual(
            "eq.skgk",
            (0, p - 1),
            skgk_defect,
            1e-12,
            None,
        ));

        // Materialized exact-line-search residual |s_k^t g_{k+1}|.
        let mut exact_defect = 0.0f64;
        for k in 0..p {
            let a = self.schema.materialize(k).expect("within horizon");
            let b = self.schema.materialize(k + 1).expect("within horizon");
            exact_defect = exact_defect.max((b.x - &a.x).dot(&b.g).abs());
        }
        reports.push(ConditionReport::residual(
            "eq.exact_line_searches.materialized",
            (0, p - 1),
            exact_defect,
            1e-13,
            None,
        ));

        // Objective decrease identity f_{k+1} - f_k = (1 - lambda^3) s_k^t g_k.
        let mut decrease_defect = 0.0f64;
        let mut max_df = f64::NEG_INFINITY;
        for k in 0..p {
            let a = self.schema.materialize(k).expect("within horizon");
            let b = self.schema.materialize(k + 1).expect("within horizon");
            let skgk = (&b.x - &a.x).dot(&a.g);
            let df = b.f - a.f;
            max_df = max_df.max(df);
            decrease_defect = decrease_defect.max((df - (1.0 - l3) * skgk).abs());
        }
        reports.push(ConditionReport::residual(
            "eq.gn_f_decrease.identity",
            (0, p - 1),
            decrease_defect,
            1e-12,
            None,
        ));
        reports.push(ConditionReport {
            check_id: "eq.gn_f_decrease.strict".into(),
            k_range: (0, p - 1),
            lhs: max_df,
            rhs: 0.0,
            tolerance: 0.0,
            status: if max_df < 0.0 {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            witness: None,
        });

        // Per-residual convexity cases: -1 < lambda^3 - 1 < rhs_j with
        // rhs_j = -lambda^3 (1_7^t Q^t D^{-1} e_j), split by block.
        let d_inv = self.schema.d_pow(-1);
        let ones7 = DVector::from_element(GN_DIM, 1.0);
        let qt_ones = q.transpose() * &ones7;
        let mid = l3 - 1.0;
        let mut case_margin = [f64::INFINITY; 3];
        let mut case_witness = [None; 3];
        for j in 0..GN_DIM {
            let rhs = -l3 * qt_ones[j] * d_inv[j];
            let margin = rhs - mid;
            let case = match j {
                0..=3 => 0,
                4 | 5 => 1,
                _ => 2,
            };
            if margin < case_margin[case] {
                case_margin[case] = margin;
                case_witness[case] = Some(Witness::Km(0, j as i64));
            }
        }
        let lower_ok = mid > -1.0;
        for (idx, name) in ["eq.gn_convex.case_a", "eq.gn_convex.case_b", "eq.gn_convex.case_c"]
            .iter()
            .enumerate()
        {
            reports.push(ConditionReport {
                check_id: (*name).into(),
                k_range: (0, p - 1),
                lhs: case_margin[idx],
                rhs: 0.0,
                tolerance: 0.0,
                status: if case_margin[idx] > 0.0 && lower_ok {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
                witness: case_witness[idx],
            });
        }

        // Line-search constants: sigma_0 = 1 - lambda^3, Goldstein c = lambda^3.
        let ls = check_linesearch_conditions(&self.schema, cfg);
        reports.push(ConditionReport::residual(
            "gn.sigma0_value",
            (0, p - 1),
            (ls.sigma0 - (1.0 - l3)).abs(),
            1e-12,
            None,
        ));
        reports.push(ConditionReport::residual(
            "gn.goldstein_c_value",
            (0, p - 1),
            (ls.goldstein_c_max - l3).abs(),
            1e-12,
            None,
        ));
        reports.extend(ls.reports);

        // Geometric and interpolation hypotheses on the schema.
        reports.push(check_dn(&self.schema));
        reports.push(check_hessian_sparsity(&self.schema, cfg));
        reports.extend(check_convexity(&self.schema, cfg));
        reports.extend(check_line_separation(&self.schema, cfg));
        reports.extend(
            divergence_witness(&self.schema, self.config.periods_to_verify)
                .expect("witness range within horizon"),
        );

        reports
    }

    /// Pathology bookkeeping: this example diverges through vanishing step
    /// sizes while the Jacobians stay bounded.
    pub fn pathology_reports(&self, periods: usize) -> Vec<ConditionReport> {
        let steps = periods * GN_PERIOD;
        let kappa = self.config.kappa;
        // ||G_k||_2 = lambda^{3k} lambda^{-3k} / (2 sqrt(kappa + lambda^{3k}))
        // since Q^k D^{-k} has spectral norm lambda^{-3k}; the bound is
        // 1 / (2 sqrt kappa).
        let mut max_gk_norm = 0.0f64;
        for k in 0..steps {
            let l3k = self.lambda.powi(3 * k as i32);
            max_gk_norm = max_gk_norm.max(l3k * self.lambda.powi(-3 * (k as i32))
                / (2.0 * (kappa + l3k).sqrt()));
        }
        let bound = 1.0 / (2.0 * kappa.sqrt()) + 1e-12;
        vec![
            ConditionReport::le(
                "thm1.pathology.mk_bounded",
                (0, steps - 1),
                max_gk_norm,
                bound,
                0.0,
                None,
            ),
            ConditionReport::residual(
                "thm1.pathology.alpha_to_zero",
                (0, steps - 1),
                self.alpha(steps - 1) / self.alpha(0),
                self.lambda.powi(3),
                None,
            ),
        ]
    }
}

/// Orbit oracle for the example, extending the schema-backed oracle with the
/// closed-form residual Jacobian so the Gauss-Newton engine can run on it.
pub struct GnOrbitOracle<'a> {
    example: &'a GnExample,
    inner: OrbitOracle<'a>,
}

impl<'a> GnOrbitOracle<'a> {
    pub fn new(example: &'a GnExample) -> Self {
        Self {
            example,
            inner: OrbitOracle::new(&example.schema),
        }
    }
}

impl Oracle for GnOrbitOracle<'_> {
    fn dim(&self) -> usize {
        GN_DIM
    }
    fn value(&self, x: &DVector<f64>, k: usize) -> Result<f64, ReplayError> {
        self.inner.value(x, k)
    }
    fn gradient(&self, x: &DVector<f64>, k: usize) -> Result<DVector<f64>, ReplayError> {
        self.inner.gradient(x, k)
    }
    fn jacobian_t(&self, x: &DVector<f64>, k: usize) -> Result<DMatrix<f64>, ReplayError> {
        // Validate the query point through the inner oracle first.
        self.inner.gradient(x, k)?;
        self.example.jacobian(k).map_err(|_| ReplayError::Singular {
            what: "Jacobian beyond horizon".into(),
            k,
        })
    }
    fn closed_form_next(&self, k: usize) -> Option<DVector<f64>> {
        self.inner.closed_form_next(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checks::whitney_ratios;

    fn example() -> GnExample {
        build_gn(GnConfig::default()).unwrap()
    }

    #[test]
    fn kappa_below_one_is_rejected() {
        assert!(matches!(
            build_gn(GnConfig {
                kappa: 0.5,
                periods_to_verify: 1
            }),
            Err(GnError::InvalidKappa(_))
        ));
    }

    #[test]
    fn lambda_satisfies_the_defining_identity() {
        let l = gn_lambda();
        assert!((l.powi(3) * (1.0 + 3f64.sqrt()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn alpha_schedule() {
        let ex = example();
        assert!((ex.alpha(0) - 0.25).abs() < 1e-15);
        for k in 0..200 {
            assert!(ex.alpha(k + 1) < ex.alpha(k));
            assert!(ex.alpha(k) < 0.5);
        }
        assert!(ex.alpha(200) < 1e-30);
    }

    #[test]
    fn jacobian_at_zero_is_scaled_identity() {
        let ex = example();
        let g0 = ex.jacobian(0).unwrap();
        let expect = -1.0 / (2.0 * 2f64.sqrt());
        let defect = (&g0 - DMatrix::from_diagonal(&DVector::from_element(7, expect)))
            .abs()
            .max();
        assert!(defect < 1e-15, "{g0}");
        // r_j(x_0) = sqrt(kappa + 1).
        assert!((ex.residuals(0)[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn first_step_is_all_ones() {
        let ex = example();
        // d_0 = 2 (kappa + 1) 1_7 = 4 * 1_7 and alpha_0 d_0 = 1_7.
        let g = ex.schema.materialize(0).unwrap().g;
        let gmat = ex.jacobian(0).unwrap();
        let normal = &gmat * gmat.transpose();
        let d = normal.lu().solve(&(-g)).unwrap();
        assert!((&d - DVector::from_element(7, 4.0)).amax() < 1e-12);
        let step = ex.alpha(0) * d;
        assert!((step - DVector::from_element(7, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn replay_five_periods_matches_closed_form() {
        let ex = example();
        let (trace, reports) = ex.verify_replay(5).unwrap();
        assert_eq!(trace.rows.len(), 60);
        for r in &reports {
            assert!(r.passed(), "{r:?}");
        }
        assert!(trace.max_step_residual < 1e-10);
    }

    #[test]
    fn all_conditions_pass() {
        let ex = example();
        let reports = ex.verify_conditions(&CheckConfig::default());
        for r in &reports {
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn condition_reports_cover_the_registry() {
        let ex = example();
        let reports = ex.verify_conditions(&CheckConfig::default());
        for id in [
            "eq.q_gauss_newton.sum_qa",
            "eq.gn_convex.case_a",
            "eq.gn_convex.case_b",
            "eq.gn_convex.case_c",
            "eq.exact_line_searches",
            "eq.horzLI.separated",
            "eq.hkk",
        ] {
            assert!(
                reports.iter().any(|r| r.check_id == id),
                "missing {id}"
            );
        }
    }

    #[test]
    fn whitney_ratios_are_finite_and_stable() {
        let ex = example();
        let now = whitney_ratios(&ex.schema, 12, 48).unwrap();
        let base = whitney_ratios(&ex.schema, 12, 36).unwrap();
        assert!(now.is_finite() && base.is_finite());
        assert!(now.m_f <= 2.0 * base.m_f);
        assert!(now.m_g <= 2.0 * base.m_g);
        assert!(now.m_h <= 2.0 * base.m_h);
    }

    #[test]
    fn pathology_is_vanishing_alpha_with_bounded_mk() {
        let ex = example();
        for r in ex.pathology_reports(5) {
            assert!(r.passed(), "{r:?}");
        }
    }
}
