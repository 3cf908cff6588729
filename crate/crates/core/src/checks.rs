//! Condition checks over an [`OrbitSchema`]: the interpolation-theorem
//! hypotheses, convexity along search lines, the Goldstein/Wolfe/exact-search
//! reductions, limit-line separation, Whitney consistency ratios and the
//! divergence witness.
//!
//! Every check is a pure function returning [`ConditionReport`]s; failures
//! are statuses, never panics. Checks over the period index are independent
//! and the separation sweep runs in parallel (max/min reductions only, so
//! results stay deterministic).

use nalgebra::DVector;
use rayon::prelude::*;

use crate::report::{CheckStatus, ConditionReport, WhitneyReport, Witness};
use crate::schema::{OrbitSchema, SchemaError};

/// Tolerances shared by the schema checks.
///
/// Equalities are compared at `eq_tol`, residuals that the closed forms make
/// exactly zero at `zero_tol`, and the limit-line separation sweep uses
/// `sep_tol` for non-consecutive lines and `intersect_tol` for consecutive
/// ones (which meet at the polygon vertices by construction).
#[derive(Debug, Clone, Copy)]
pub struct CheckConfig {
    pub eq_tol: f64,
    pub zero_tol: f64,
    pub sep_tol: f64,
    pub intersect_tol: f64,
    pub indep_tol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            eq_tol: 1e-10,
            zero_tol: 1e-12,
            sep_tol: 1e-6,
            intersect_tol: 1e-10,
            indep_tol: 1e-8,
        }
    }
}

impl CheckConfig {
    /// Scales the comparison tolerances by `factor` (the separation floor is
    /// a geometric property and stays put).
    pub fn scaled(mut self, factor: f64) -> Self {
        self.eq_tol *= factor;
        self.zero_tol *= factor;
        self.intersect_tol *= factor;
        self
    }
}

/// sin of the angle between two vectors; zero when either vanishes.
fn independence_measure(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    let dot = u.dot(v);
    let cross_sq = (nu * nv).powi(2) - dot * dot;
    cross_sq.max(0.0).sqrt() / (nu * nv)
}

/// The interpolation theorem needs `d_n > 2`.
pub fn check_dn(schema: &OrbitSchema) -> ConditionReport {
    ConditionReport::gt("thm3.dn", (0, 0), schema.d_n() as f64, 2.0, None)
}

/// Normalized Hessian sparsity: `(hbar_k)_{ij} = 0` whenever
/// `d_i + d_j > d_n`.
pub fn check_hessian_sparsity(schema: &OrbitSchema, cfg: &CheckConfig) -> ConditionReport {
    let n = schema.dim();
    let d = schema.d_exponents();
    let dn = schema.d_n();
    let mut worst = 0.0f64;
    let mut witness = None;
    for k in 0..schema.period() {
        let h = schema.h_bar(k);
        for i in 0..n {
            for j in 0..n {
                if d[i] + d[j] > dn {
                    let v = h[(i, j)].abs();
                    if v > worst {
                        worst = v;
                        witness = Some(Witness::Km(k, (i * n + j) as i64));
                    }
                }
            }
        }
    }
    ConditionReport::residual(
        "eq.hkk",
        (0, schema.period() - 1),
        worst,
        cfg.zero_tol,
        witness,
    )
}

/// Convexity along the search lines: the two-sided normalized decrease
/// inequality and the positivity of the normalized curvatures.
pub fn check_convexity(schema: &OrbitSchema, cfg: &CheckConfig) -> Vec<ConditionReport> {
    let p = schema.period();
    let dn = schema.d_n() as i64;
    let lam_dn = schema.lambda_pow(dn);
    let d_inv = schema.d_pow(-1);
    let q = schema.q();

    let mut worst_gap = f64::NEG_INFINITY;
    let mut gap_witness = None;
    let mut min_curv = f64::INFINITY;
    let mut curv_witness = None;

    for k in 0..p {
        let s = schema.normalized_step(k);
        let g = schema.g_bar(k);
        let lhs = s.dot(g);
        let mid = lam_dn * schema.f_bar(k + 1) - schema.f_bar(k);
        let rhs = lam_dn * s.dot(&(q * schema.g_bar(k + 1)).component_mul(&d_inv));
        let gap = (lhs - mid).max(mid - rhs);
        if gap > worst_gap {
            worst_gap = gap;
            gap_witness = Some(Witness::K(k));
        }

        let c1 = s.dot(&(schema.h_bar(k) * &s));
        // sbar^t (Q D^{-1}) hbar_{k+1} (Q D^{-1})^t sbar
        let m_s = q.transpose() * &s;
        let m_s = m_s.component_mul(&d_inv);
        let c2 = m_s.dot(&(schema.h_bar(k + 1) * &m_s));
        let c = c1.min(c2);
        if c < min_curv {
            min_curv = c;
            curv_witness = Some(Witness::K(k));
        }
    }

    vec![
        // Strict inequalities: the worst gap must be negative.
        {
            let pass = worst_gap < 0.0;
            ConditionReport {
                check_id: "eq.convexA".into(),
                k_range: (0, p - 1),
                lhs: worst_gap,
                rhs: 0.0,
                tolerance: 0.0,
                status: if pass {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
                witness: if pass { None } else { gap_witness },
            }
        },
        ConditionReport::gt("eq.convexB", (0, p - 1), min_curv, cfg.eq_tol, curv_witness),
    ]
}

/// Summary of the line-search condition reductions.
#[derive(Debug, Clone)]
pub struct LinesearchSummary {
    /// Largest admissible sufficient-decrease parameter.
    pub sigma0: f64,
    /// Upper end of the admissible Goldstein interval `(0, c_max]`.
    pub goldstein_c_max: f64,
    /// Largest exact-line-search residual over the period.
    pub exact_search_residual: f64,
    pub reports: Vec<ConditionReport>,
}

/// First Wolfe, Goldstein and exact-line-search conditions in normalized
/// form. Passing means: `sigma0 > 0`, the Goldstein interval is nonempty
/// inside `(0, 1/2)`, and the exact-search residual vanishes.
pub fn check_linesearch_conditions(
    schema: &OrbitSchema,
    cfg: &CheckConfig,
) -> LinesearchSummary {
    let p = schema.period();
    let dn = schema.d_n() as i64;
    let lam_dn = schema.lambda_pow(dn);
    let d_inv = schema.d_pow(-1);
    let q = schema.q();

    let mut sigma0 = f64::INFINITY;
    let mut c_max = f64::INFINITY;
    let mut exact = 0.0f64;
    let mut exact_witness = None;
    let mut ratio_witness = None;

    for k in 0..p {
        let s = schema.normalized_step(k);
        let w = s.dot(schema.g_bar(k));
        let t = lam_dn * schema.f_bar(k + 1) - schema.f_bar(k);
        // Both sides negative on a valid orbit; r = t/w is the decrease
        // ratio. A non-descent step sinks the ratio to a finite sentinel so
        // the failure still serializes cleanly.
        let r = if w < 0.0 { t / w } else { -f64::MAX };
        if r < sigma0 {
            sigma0 = r;
        }
        let c_k = r.min(1.0 - r);
        if c_k < c_max {
            c_max = c_k;
            ratio_witness = Some(Witness::K(k));
        }

        let res = s
            .dot(&(q * schema.g_bar(k + 1)).component_mul(&d_inv))
            .abs();
        if res > exact {
            exact = res;
            exact_witness = Some(Witness::K(k));
        }
    }

    let reports = vec![
        ConditionReport::gt("eq.first_wolfe.sigma0", (0, p - 1), sigma0, 0.0, ratio_witness),
        ConditionReport::gt("eq.goldstein.c_max", (0, p - 1), c_max, 0.0, ratio_witness),
        ConditionReport::residual(
            "eq.exact_line_searches",
            (0, p - 1),
            exact,
            cfg.zero_tol,
            exact_witness,
        ),
    ];
    LinesearchSummary {
        sigma0,
        goldstein_c_max: c_max,
        exact_search_residual: exact,
        reports,
    }
}

fn a_block(schema: &OrbitSchema, v: &DVector<f64>) -> DVector<f64> {
    v.rows(0, schema.blocks().a).into_owned()
}

/// Least-squares residual of `alpha u - beta v = w` in the two unknowns.
fn two_var_residual(u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let mut a = nalgebra::DMatrix::zeros(u.len(), 2);
    a.column_mut(0).copy_from(u);
    a.column_mut(1).copy_from(&(-v));
    let svd = a.clone().svd(true, true);
    match svd.solve(w, 1e-14) {
        Ok(sol) => (a * sol - w).norm(),
        Err(_) => w.norm(),
    }
}

/// Limit-line geometry: consecutive-direction independence, vertical
/// independence, and the Lemma-4 separation sweep over all line pairs.
///
/// Consecutive lines (`m = 1` and `m = p-1`) share a vertex, so their
/// intersection residual must vanish; all other pairs must keep a residual
/// above `sep_tol`.
pub fn check_line_separation(schema: &OrbitSchema, cfg: &CheckConfig) -> Vec<ConditionReport> {
    let p = schema.period();
    let steps: Vec<DVector<f64>> = schema.normalized_steps();
    let q = schema.q();

    // Consecutive-direction independence: D(0) sbar_k vs D(0) Q sbar_{k+1}.
    let mut min_indep = f64::INFINITY;
    let mut indep_witness = None;
    for k in 0..p {
        let u = a_block(schema, &steps[k]);
        let v = a_block(schema, &(q * &steps[(k + 1) % p]));
        let m = independence_measure(&u, &v);
        if m < min_indep {
            min_indep = m;
            indep_witness = Some(Witness::K(k));
        }
    }

    // Vertical independence: D'(0) xbar_k vs D'(0) sbar_k.
    let mut min_vert = f64::INFINITY;
    let mut vert_witness = None;
    for k in 0..p {
        let u = schema.project_dprime0(schema.x_bar(k));
        let v = schema.project_dprime0(&steps[k]);
        let m = independence_measure(&u, &v);
        if m < min_vert {
            min_vert = m;
            vert_witness = Some(Witness::K(k));
        }
    }

    // Lemma-4 sweep. For each k and offset m, the projected lines intersect
    // iff alpha sbar_{a,k} = sum_{j<m} Qa^j sbar_{a,k+j} + beta Qa^m sbar_{a,k+m}
    // has a solution; the least-squares residual witnesses nonexistence.
    let a_steps: Vec<DVector<f64>> = steps.iter().map(|s| a_block(schema, s)).collect();
    let qa_pow_steps: Vec<Vec<DVector<f64>>> = (0..p)
        .map(|j| {
            let qj = schema.q_pow(j);
            (0..p)
                .map(|i| a_block(schema, &(qj * &steps[i])))
                .collect()
        })
        .collect();

    let per_k: Vec<(f64, f64, usize, i64)> = (0..p)
        .into_par_iter()
        .map(|k| {
            let u = &a_steps[k];
            let mut w = DVector::zeros(u.len());
            let mut min_sep = f64::INFINITY;
            let mut min_sep_m = 0i64;
            let mut max_consec = 0.0f64;
            for m in 1..p {
                // w = sum_{j=0}^{m-1} Qa^j sbar_{a,k+j}
                w += &qa_pow_steps[m - 1][(k + m - 1) % p];
                let v = &qa_pow_steps[m][(k + m) % p];
                let residual = two_var_residual(u, v, &w);
                if m == 1 || m == p - 1 {
                    max_consec = max_consec.max(residual);
                } else if residual < min_sep {
                    min_sep = residual;
                    min_sep_m = m as i64;
                }
            }
            (min_sep, max_consec, k, min_sep_m)
        })
        .collect();

    let mut min_sep = f64::MAX;
    let mut sep_witness = None;
    let mut max_consec = 0.0f64;
    for (ms, mc, k, m) in per_k {
        if ms < min_sep {
            min_sep = ms;
            sep_witness = Some(Witness::Km(k, m));
        }
        max_consec = max_consec.max(mc);
    }

    vec![
        ConditionReport::gt(
            "eq.distinctLines",
            (0, p - 1),
            min_indep,
            cfg.indep_tol,
            indep_witness,
        ),
        ConditionReport::gt(
            "eq.vertLI",
            (0, p - 1),
            min_vert,
            cfg.indep_tol,
            vert_witness,
        ),
        ConditionReport::gt("eq.horzLI.separated", (0, p - 1), min_sep, cfg.sep_tol, sep_witness),
        ConditionReport::residual(
            "eq.horzLI.consecutive",
            (0, p - 1),
            max_consec,
            cfg.intersect_tol,
            None,
        ),
    ]
}

/// Suprema of the three Whitney consistency ratios over all ordered pairs of
/// materialized orbit points with indices in `[k_lo, k_hi]`.
pub fn whitney_ratios(
    schema: &OrbitSchema,
    k_lo: usize,
    k_hi: usize,
) -> Result<WhitneyReport, SchemaError> {
    let pts: Vec<_> = (k_lo..=k_hi)
        .map(|k| schema.materialize(k))
        .collect::<Result<_, _>>()?;
    let mut m_h = 0.0f64;
    let mut m_g = 0.0f64;
    let mut m_f = 0.0f64;
    let mut pair_count = 0usize;
    for x in &pts {
        for y in &pts {
            let d = (&y.x - &x.x).norm();
            if d < 1e-14 {
                continue;
            }
            pair_count += 1;
            let dh = (&y.h - &x.h).norm() / d;
            let step = &y.x - &x.x;
            let dg = (&y.g - &x.g - &x.h * &step).norm() / (d * d);
            let df = (y.f - x.f - x.g.dot(&step) - 0.5 * step.dot(&(&x.h * &step))).abs()
                / (d * d * d);
            m_h = m_h.max(dh);
            m_g = m_g.max(dg);
            m_f = m_f.max(df);
        }
    }
    Ok(WhitneyReport {
        m_h,
        m_g,
        m_f,
        pair_count,
    })
}

/// Numerical witness of the divergence pathology over `periods` periods:
/// the gradient norm stays above a positive floor, the objective decreases
/// strictly to its positive limit, and the `D(0)` projections of the
/// iterates contract onto the `p` limit vertices at rate `lambda^p`.
pub fn divergence_witness(
    schema: &OrbitSchema,
    periods: usize,
) -> Result<Vec<ConditionReport>, SchemaError> {
    let p = schema.period();
    let total = (periods * p).min(schema.horizon());
    if total < p {
        return Err(SchemaError::HorizonExceeded {
            k: p,
            horizon: schema.horizon(),
        });
    }

    // Gradient floor: the exponent-d_n block of g_k equals gbar's, unscaled.
    let mut floor = f64::INFINITY;
    for k in 0..p {
        let g = schema.g_bar(k);
        let mut c_norm_sq = 0.0;
        for i in 0..schema.dim() {
            if schema.d_exponents()[i] == schema.d_n() && schema.d_n() > 0 {
                c_norm_sq += g[i] * g[i];
            }
        }
        floor = floor.min(c_norm_sq.sqrt());
    }

    let mut min_grad = f64::INFINITY;
    let mut max_df = f64::NEG_INFINITY;
    let mut min_f = f64::INFINITY;
    let mut first_f = 0.0;
    let mut last_f = 0.0;
    let mut prev_f = None;
    for k in 0..total {
        let m = schema.materialize(k)?;
        min_grad = min_grad.min(m.g.norm());
        min_f = min_f.min(m.f);
        if k == 0 {
            first_f = m.f;
        }
        last_f = m.f;
        if let Some(pf) = prev_f {
            max_df = max_df.max(m.f - pf);
        }
        prev_f = Some(m.f);
    }

    let grad_report = {
        let pass = floor > 0.0 && min_grad >= floor - 1e-12;
        ConditionReport {
            check_id: "witness.gradient_floor".into(),
            k_range: (0, total - 1),
            lhs: min_grad,
            rhs: floor,
            tolerance: 1e-12,
            status: if pass {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            witness: None,
        }
    };

    let mono_report = {
        // Decreasing to the positive limit f_offset; once the contracted
        // part falls below the floating-point resolution of the offset the
        // differences flatten to exact zero, so equality is allowed while a
        // net decrease is still required.
        let pass = max_df <= 0.0
            && last_f < first_f
            && min_f > schema.f_offset() - 1e-12
            && schema.f_offset() >= 0.0;
        ConditionReport {
            check_id: "witness.f_monotone_bounded".into(),
            k_range: (0, total - 1),
            lhs: max_df,
            rhs: 0.0,
            tolerance: 0.0,
            status: if pass {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            witness: None,
        }
    };

    // Vertex contraction of the D(0) projection: distances to the limit
    // vertex shrink by at least lambda^p per period.
    let lam_p = schema.lambda_pow(p as i64);
    let mut worst_ratio = 0.0f64;
    let mut ratio_witness = None;
    let periods_avail = total / p;
    for k0 in 0..p {
        let vertex = schema.limit_vertex(k0);
        let mut prev: Option<f64> = None;
        for m in 0..periods_avail {
            let x = schema.materialize(k0 + m * p)?.x;
            let dist = (x - &vertex).norm();
            if let Some(pd) = prev {
                if pd > 1e-290 {
                    let ratio = dist / pd;
                    if ratio > worst_ratio {
                        worst_ratio = ratio;
                        ratio_witness = Some(Witness::Km(k0, m as i64));
                    }
                }
            }
            prev = Some(dist);
        }
    }
    let vertex_report = ConditionReport::le(
        "witness.vertex_contraction",
        (0, p - 1),
        worst_ratio,
        lam_p,
        1e-6 * lam_p,
        ratio_witness,
    );

    Ok(vec![grad_report, mono_report, vertex_report])
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    /// Planar square orbit: a 2-dimensional exponent-0 block carrying four
    /// lines through the sides of a square (opposite sides parallel), a
    /// rotating exponent-1 block of dimension 2 and a flipping exponent-3
    /// coordinate.
    fn square_schema() -> OrbitSchema {
        let n = 5;
        let mut q = DMatrix::identity(n, n);
        // Quarter turns in the first two blocks; flip in the last.
        for base in [0, 2] {
            q[(base, base)] = 0.0;
            q[(base, base + 1)] = -1.0;
            q[(base + 1, base)] = 1.0;
            q[(base + 1, base + 1)] = 0.0;
        }
        q[(4, 4)] = -1.0;
        let steps: Vec<DVector<f64>> = (0..4)
            .map(|_| DVector::from_vec(vec![1.0, 0.3, 1.0, 0.3, 1.0]))
            .collect();
        let g_bar: Vec<DVector<f64>> = (0..4)
            .map(|_| DVector::from_element(n, -1.0))
            .collect();
        let mut h = DMatrix::identity(n, n);
        h[(4, 4)] = 0.0;
        OrbitSchema::from_steps(
            q,
            0.5,
            vec![0, 0, 1, 1, 3],
            &steps,
            vec![1.0; 4],
            g_bar,
            vec![h; 4],
            1.0,
            1e-10,
        )
        .unwrap()
    }

    #[test]
    fn square_orbit_separates_opposite_sides() {
        let s = square_schema();
        let reports = check_line_separation(&s, &CheckConfig::default());
        for r in &reports {
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn duplicated_iterates_fail_direction_independence() {
        // All steps zero: directions vanish, independence fails.
        let n = 4;
        let mut q = DMatrix::identity(n, n);
        q[(0, 0)] = 0.0;
        q[(0, 1)] = -1.0;
        q[(1, 0)] = 1.0;
        q[(1, 1)] = 0.0;
        let steps = vec![DVector::zeros(n); 4];
        let s = OrbitSchema::from_steps(
            q,
            0.5,
            vec![0, 0, 1, 3],
            &steps,
            vec![1.0; 4],
            vec![DVector::zeros(n); 4],
            vec![DMatrix::zeros(n, n); 4],
            0.0,
            1e-10,
        )
        .unwrap();
        let reports = check_line_separation(&s, &CheckConfig::default());
        let distinct = reports
            .iter()
            .find(|r| r.check_id == "eq.distinctLines")
            .unwrap();
        assert!(!distinct.passed());
    }

    #[test]
    fn hessian_sparsity_flags_dense_blocks() {
        let s = square_schema();
        assert!(check_hessian_sparsity(&s, &CheckConfig::default()).passed());

        // A dense symmetric hbar violates the exponent cap.
        let n = 4;
        let dense = DMatrix::from_fn(n, n, |i, j| 1.0 + (i + j) as f64);
        let sym = (&dense + dense.transpose()) * 0.5;
        let bad = OrbitSchema::new(
            DMatrix::identity(n, n),
            0.5,
            vec![0, 0, 1, 3],
            vec![DVector::zeros(n); 2],
            vec![1.0; 2],
            vec![DVector::zeros(n); 2],
            vec![sym; 2],
            0.0,
        )
        .unwrap();
        assert!(!check_hessian_sparsity(&bad, &CheckConfig::default()).passed());

        // Zero hbar trivially passes.
        let zero = OrbitSchema::new(
            DMatrix::identity(n, n),
            0.5,
            vec![0, 0, 1, 3],
            vec![DVector::zeros(n); 2],
            vec![1.0; 2],
            vec![DVector::zeros(n); 2],
            vec![DMatrix::zeros(n, n); 2],
            0.0,
        )
        .unwrap();
        assert!(check_hessian_sparsity(&zero, &CheckConfig::default()).passed());
    }

    #[test]
    fn ascent_step_fails_convexity() {
        let mut s = square_schema();
        // Flip gradients to make sbar^t gbar positive.
        let flipped: Vec<DVector<f64>> =
            (0..4).map(|k| -s.g_bar(k).clone()).collect();
        s = OrbitSchema::new(
            s.q().clone(),
            s.lambda(),
            s.d_exponents().to_vec(),
            (0..4).map(|k| s.x_bar(k).clone()).collect(),
            (0..4).map(|k| s.f_bar(k)).collect(),
            flipped,
            (0..4).map(|k| s.h_bar(k).clone()).collect(),
            s.f_offset(),
        )
        .unwrap();
        let reports = check_convexity(&s, &CheckConfig::default());
        assert!(!reports[0].passed());
    }

    #[test]
    fn raised_f_fails_first_wolfe() {
        let s = square_schema();
        // Raise fbar_{k+1} so the normalized decrease becomes positive.
        let bumped = OrbitSchema::new(
            s.q().clone(),
            s.lambda(),
            s.d_exponents().to_vec(),
            (0..4).map(|k| s.x_bar(k).clone()).collect(),
            vec![100.0, 1.0, 1.0, 1.0],
            (0..4).map(|k| s.g_bar(k).clone()).collect(),
            (0..4).map(|k| s.h_bar(k).clone()).collect(),
            s.f_offset(),
        )
        .unwrap();
        let summary = check_linesearch_conditions(&bumped, &CheckConfig::default());
        assert!(!summary.reports[0].passed());
    }

    #[test]
    fn quadratic_data_has_zero_whitney_ratios() {
        // Exact quadratic: f = 1/2 |x|^2, g = x, h = I. Taylor remainders
        // vanish, so all three suprema are zero.
        let n = 3;
        let schema = OrbitSchema::new(
            DMatrix::identity(n, n),
            0.5,
            vec![0, 0, 0],
            vec![
                DVector::from_vec(vec![1.0, 0.0, 0.0]),
                DVector::from_vec(vec![0.0, 2.0, 0.0]),
                DVector::from_vec(vec![0.0, 0.0, 3.0]),
            ],
            vec![0.5, 2.0, 4.5],
            vec![
                DVector::from_vec(vec![1.0, 0.0, 0.0]),
                DVector::from_vec(vec![0.0, 2.0, 0.0]),
                DVector::from_vec(vec![0.0, 0.0, 3.0]),
            ],
            vec![DMatrix::identity(n, n); 3],
            0.0,
        )
        .unwrap();
        let w = whitney_ratios(&schema, 0, 2).unwrap();
        assert_eq!(w.pair_count, 6);
        assert!(w.m_h < 1e-14 && w.m_g < 1e-14 && w.m_f < 1e-14);
    }

    #[test]
    fn contracting_gradient_fails_witness() {
        // All exponents positive in gbar's tail block and a zero c-block
        // gradient: the materialized gradient decays to zero.
        let s = square_schema();
        let dying: Vec<DVector<f64>> = (0..4)
            .map(|_| DVector::from_vec(vec![-1.0, -1.0, -1.0, -1.0, 0.0]))
            .collect();
        let conv = OrbitSchema::new(
            s.q().clone(),
            s.lambda(),
            s.d_exponents().to_vec(),
            (0..4).map(|k| s.x_bar(k).clone()).collect(),
            (0..4).map(|k| s.f_bar(k)).collect(),
            dying,
            (0..4).map(|k| s.h_bar(k).clone()).collect(),
            s.f_offset(),
        )
        .unwrap();
        let reports = divergence_witness(&conv, 3).unwrap();
        assert!(!reports[0].passed(), "{reports:?}");
    }

    #[test]
    fn square_orbit_witness_passes() {
        let s = square_schema();
        let reports = divergence_witness(&s, 4).unwrap();
        for r in &reports {
            assert!(r.passed(), "{r:?}");
        }
    }
}
