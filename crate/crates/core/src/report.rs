//! Verification reports shared by every check in the crate.

use serde::Serialize;

/// Outcome of a single verified condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
}

/// Index (or index pair) at which a condition first failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum Witness {
    K(usize),
    Km(usize, i64),
}

/// One verified inequality or equality over a range of iteration indices.
///
/// `status` is `Pass` exactly when the comparison named by `check_id` holds
/// for every index in `k_range` within `tolerance`; `lhs`/`rhs` carry the
/// extremal values (or a residual norm and its bound) that decided it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub check_id: String,
    pub k_range: (usize, usize),
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub status: CheckStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl ConditionReport {
    /// Report for a comparison that must hold with `lhs <= rhs + tolerance`.
    pub fn le(
        check_id: impl Into<String>,
        k_range: (usize, usize),
        lhs: f64,
        rhs: f64,
        tolerance: f64,
        witness: Option<Witness>,
    ) -> Self {
        let pass = lhs <= rhs + tolerance;
        Self {
            check_id: check_id.into(),
            k_range,
            lhs,
            rhs,
            tolerance,
            status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
            witness: if pass { None } else { witness },
        }
    }

    /// Report for a residual that must stay below `tolerance`.
    pub fn residual(
        check_id: impl Into<String>,
        k_range: (usize, usize),
        residual: f64,
        tolerance: f64,
        witness: Option<Witness>,
    ) -> Self {
        Self::le(check_id, k_range, residual, 0.0, tolerance, witness)
    }

    /// Report for a strict lower bound `lhs > rhs` (no tolerance slack).
    pub fn gt(
        check_id: impl Into<String>,
        k_range: (usize, usize),
        lhs: f64,
        rhs: f64,
        witness: Option<Witness>,
    ) -> Self {
        let pass = lhs > rhs;
        Self {
            check_id: check_id.into(),
            k_range,
            lhs,
            rhs,
            tolerance: 0.0,
            status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
            witness: if pass { None } else { witness },
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

/// Returns `true` when every report in the bundle passed.
pub fn all_passed(reports: &[ConditionReport]) -> bool {
    reports.iter().all(ConditionReport::passed)
}

/// Suprema of the three Whitney consistency ratios over sampled orbit pairs.
///
/// `m_h`, `m_g`, `m_f` bound, respectively, the Hessian difference, the
/// gradient Taylor remainder and the value Taylor remainder, each divided by
/// the matching power of the pair distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WhitneyReport {
    pub m_h: f64,
    pub m_g: f64,
    pub m_f: f64,
    pub pair_count: usize,
}

impl WhitneyReport {
    pub fn is_finite(&self) -> bool {
        self.m_h.is_finite() && self.m_g.is_finite() && self.m_f.is_finite()
    }
}
