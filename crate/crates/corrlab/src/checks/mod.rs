//! One statistical checker per correlation inequality, each producing a
//! [`CheckReport`] with explicit slack in standard-error units.
//!
//! Verdicts are three-tier: an inequality passes when its slack is above
//! minus three standard errors, fails below minus five, and is inconclusive
//! between; proved inequalities can sit at slack zero (independence cases)
//! where a binary verdict would flap. Identity checks use the two-sided
//! analogue.

mod correlation;
mod khatri;
mod logconcavity;
mod orthant;
mod rotation_avg;
mod split_bound;
mod tensor_lift;
mod tilt;

pub use correlation::{
    ball_intersection_check, correlation_check, pow2_bound_check, small_sets_check,
};
pub use khatri::khatri_sidak_check;
pub use logconcavity::logconcavity_check;
pub use orthant::{kr_lattice_check, orthant_conditions_check, KrIndicator};
pub use rotation_avg::rotation_average_check;
pub use split_bound::{split_bound_check, volume_ratio_check};
pub use tensor_lift::tensor_lift_check;
pub use tilt::{gaussian_tilt_check, LogConcaveFn};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::measure::Estimate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl Verdict {
    /// Tiering for a lower-bound check (`slack >= 0` is the hypothesis).
    pub fn lower_bound(slack: f64, se: f64) -> Verdict {
        if slack >= -3.0 * se {
            Verdict::Pass
        } else if slack < -5.0 * se {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        }
    }

    /// Tiering for an identity check (`slack == 0` is the hypothesis).
    pub fn two_sided(slack: f64, se: f64) -> Verdict {
        if slack.abs() <= 3.0 * se {
            Verdict::Pass
        } else if slack.abs() > 5.0 * se {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }
}

/// Which verdict rule a report used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    LowerBound,
    TwoSided,
}

/// One inequality instance: left side, right side, slack in standard-error
/// units, and a pass/fail verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub slack: f64,
    pub slack_se: f64,
    pub verdict: Verdict,
    pub sided: Sidedness,
    pub inputs_digest: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl CheckReport {
    pub fn lower_bound(
        name: impl Into<String>,
        lhs: Estimate,
        rhs: Estimate,
        slack: f64,
        slack_se: f64,
        inputs_digest: String,
    ) -> CheckReport {
        CheckReport {
            name: name.into(),
            lhs,
            rhs,
            slack,
            slack_se,
            verdict: Verdict::lower_bound(slack, slack_se),
            sided: Sidedness::LowerBound,
            inputs_digest,
            details: serde_json::Value::Null,
        }
    }

    pub fn two_sided(
        name: impl Into<String>,
        lhs: Estimate,
        rhs: Estimate,
        slack: f64,
        slack_se: f64,
        inputs_digest: String,
    ) -> CheckReport {
        CheckReport {
            name: name.into(),
            lhs,
            rhs,
            slack,
            slack_se,
            verdict: Verdict::two_sided(slack, slack_se),
            sided: Sidedness::TwoSided,
            inputs_digest,
            details: serde_json::Value::Null,
        }
    }

    pub fn with_details(mut self, details: serde_json::Value) -> CheckReport {
        self.details = details;
        self
    }

    /// Slack scaled by its standard error (`inf` when the slack is exact).
    pub fn slack_in_se(&self) -> f64 {
        if self.slack_se > 0.0 {
            self.slack / self.slack_se
        } else if self.slack == 0.0 {
            0.0
        } else {
            self.slack.signum() * f64::INFINITY
        }
    }
}

/// SHA-256 digest of a serialized input record (bodies, parameters, stream
/// lineage); hex encoded.
pub fn inputs_digest(value: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(value).expect("digest input serializes");
    let hash = Sha256::digest(&bytes);
    hash.iter().fold(String::with_capacity(64), |mut s, b| {
        use std::fmt::Write;
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_tiers() {
        assert_eq!(Verdict::lower_bound(0.5, 0.1), Verdict::Pass);
        assert_eq!(Verdict::lower_bound(-0.31, 0.1), Verdict::Inconclusive);
        assert_eq!(Verdict::lower_bound(-0.51, 0.1), Verdict::Fail);
        // exact estimates: sign decides
        assert_eq!(Verdict::lower_bound(0.0, 0.0), Verdict::Pass);
        assert_eq!(Verdict::lower_bound(-1e-18, 0.0), Verdict::Fail);
        assert_eq!(Verdict::two_sided(0.2, 0.1), Verdict::Pass);
        assert_eq!(Verdict::two_sided(0.41, 0.1), Verdict::Inconclusive);
        assert_eq!(Verdict::two_sided(-0.6, 0.1), Verdict::Fail);
    }

    #[test]
    fn slack_antisymmetric_under_swapped_construction() {
        // Swapping which side is called lhs flips the slack's sign.
        let a = Estimate::mc(0.4, 0.01, 1000);
        let b = Estimate::mc(0.35, 0.01, 1000);
        let fwd = CheckReport::lower_bound("fwd", a, b, a.value - b.value, 0.01, String::new());
        let rev = CheckReport::lower_bound("rev", b, a, b.value - a.value, 0.01, String::new());
        assert_eq!(fwd.slack, -rev.slack);
    }

    #[test]
    fn digest_is_stable() {
        let v = serde_json::json!({"a": 1.5, "b": [1, 2]});
        assert_eq!(inputs_digest(&v), inputs_digest(&v));
        assert_eq!(inputs_digest(&v).len(), 64);
    }
}
