//! Verdict records: one verified inequality or identity each.
//!
//! Comparison policy, applied uniformly so floating error can never
//! flip a verdict:
//!
//! - identities pass at 1e-9 residual relative to a stated scale;
//! - one-sided bounds whose two sides are both rational are compared
//!   exactly upstream and recorded here as already-decided;
//! - one-sided bounds with an irrational side are compared in doubles
//!   after nudging the bound against us by a relative 1e-12.
//!
//! Every verdict keeps two right-hand sides: `rhs_asserted` is the
//! bound the verdict gates on, `rhs_logged` carries a sharper variant
//! that is tabulated but never asserted. `vacuous` flags hypotheses
//! that no subsets of the given field can satisfy, so that small-field
//! runs are not misread as confirmations.

use serde::Serialize;

/// Relative tolerance for identity checks.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Relative nudge applied to asserted bounds before float comparison.
pub const BOUND_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub statement_id: String,
    pub field: String,
    pub inputs: serde_json::Value,
    pub lhs: f64,
    pub rhs_asserted: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhs_logged: Option<f64>,
    pub margin: f64,
    pub holds: bool,
    pub vacuous: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Verdict {
    /// lhs ≤ rhs, compared with the bound tightened by the slack.
    pub fn upper_bound(statement_id: &str, field: &str, lhs: f64, rhs: f64) -> Verdict {
        let adjusted = rhs * (1.0 - BOUND_SLACK);
        Verdict {
            statement_id: statement_id.to_string(),
            field: field.to_string(),
            inputs: serde_json::Value::Null,
            lhs,
            rhs_asserted: rhs,
            rhs_logged: None,
            margin: rhs - lhs,
            holds: lhs <= adjusted,
            vacuous: false,
            seed: None,
        }
    }

    /// lhs ≥ rhs, compared with the bound raised by the slack.
    pub fn lower_bound(statement_id: &str, field: &str, lhs: f64, rhs: f64) -> Verdict {
        let adjusted = rhs + rhs.abs() * BOUND_SLACK;
        Verdict {
            statement_id: statement_id.to_string(),
            field: field.to_string(),
            inputs: serde_json::Value::Null,
            lhs,
            rhs_asserted: rhs,
            rhs_logged: None,
            margin: lhs - rhs,
            holds: lhs >= adjusted,
            vacuous: false,
            seed: None,
        }
    }

    /// |lhs − rhs| ≤ IDENTITY_TOL · scale.
    pub fn identity(statement_id: &str, field: &str, lhs: f64, rhs: f64, scale: f64) -> Verdict {
        let residual = (lhs - rhs).abs();
        Verdict {
            statement_id: statement_id.to_string(),
            field: field.to_string(),
            inputs: serde_json::Value::Null,
            lhs,
            rhs_asserted: rhs,
            rhs_logged: None,
            margin: IDENTITY_TOL * scale - residual,
            holds: residual <= IDENTITY_TOL * scale,
            vacuous: false,
            seed: None,
        }
    }

    /// A bound already decided by exact rational or integer
    /// arithmetic; the floats are for the report only.
    pub fn decided(statement_id: &str, field: &str, lhs: f64, rhs: f64, holds: bool) -> Verdict {
        Verdict {
            statement_id: statement_id.to_string(),
            field: field.to_string(),
            inputs: serde_json::Value::Null,
            lhs,
            rhs_asserted: rhs,
            rhs_logged: None,
            margin: lhs - rhs,
            holds,
            vacuous: false,
            seed: None,
        }
    }

    pub fn with_inputs(mut self, inputs: serde_json::Value) -> Verdict {
        self.inputs = inputs;
        self
    }

    pub fn with_logged(mut self, rhs_logged: f64) -> Verdict {
        self.rhs_logged = Some(rhs_logged);
        self
    }

    pub fn with_vacuous(mut self, vacuous: bool) -> Verdict {
        self.vacuous = vacuous;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Verdict {
        self.seed = Some(seed);
        self
    }

    /// Whether the tabulated-only bound was genuinely exceeded. The
    /// comparison is lenient so attained equality does not register.
    pub fn logged_violated(&self) -> bool {
        self.rhs_logged
            .is_some_and(|r| self.lhs > r * (1.0 + BOUND_SLACK) + 1e-18)
    }
}

/// Formats a float with 17 significant digits, the lossless CSV form.
pub fn csv_f64(x: f64) -> String {
    format!("{x:.16e}")
}
