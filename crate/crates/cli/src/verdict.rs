use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    /// Not a failure, but something a reader must look at.
    Flagged,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Flagged => "FLAGGED",
        })
    }
}

/// One checked quantity against its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub status: Status,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Verdict {
    pub fn new(criterion: impl Into<String>, status: Status, detail: impl Into<String>) -> Self {
        Self {
            criterion: criterion.into(),
            status,
            value: None,
            threshold: None,
            detail: detail.into(),
        }
    }

    /// Passes when `value ≤ threshold` (NaN fails).
    pub fn at_most(criterion: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        let status = if value <= threshold { Status::Pass } else { Status::Fail };
        Self {
            value: finite(value),
            threshold: Some(threshold),
            ..Self::new(criterion, status, detail)
        }
    }

    /// Passes when `value ≥ threshold` (NaN fails).
    pub fn at_least(criterion: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        let status = if value >= threshold { Status::Pass } else { Status::Fail };
        Self {
            value: finite(value),
            threshold: Some(threshold),
            ..Self::new(criterion, status, detail)
        }
    }

    pub fn flag_unless(mut self, ok: bool) -> Self {
        if !ok && self.status == Status::Pass {
            self.status = Status::Flagged;
        }
        self
    }

    /// Downgrades a failure to a flag.
    pub fn soften(mut self) -> Self {
        if self.status == Status::Fail {
            self.status = Status::Flagged;
        }
        self
    }

    pub fn line(&self) -> String {
        let num = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4e}"));
        match self.threshold {
            Some(t) => format!(
                "{:<7} {}: {} (value {}, threshold {})",
                self.status.to_string(),
                self.criterion,
                self.detail,
                num(self.value),
                num(Some(t))
            ),
            None => format!("{:<7} {}: {}", self.status.to_string(), self.criterion, self.detail),
        }
    }
}

pub fn all_pass(verdicts: &[Verdict]) -> bool {
    verdicts.iter().all(|v| v.status == Status::Pass)
}

pub fn any_fail(verdicts: &[Verdict]) -> bool {
    verdicts.iter().any(|v| v.status == Status::Fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparisons_and_nan() {
        assert_eq!(Verdict::at_most("x", 1.0, 2.0, "").status, Status::Pass);
        assert_eq!(Verdict::at_most("x", 3.0, 2.0, "").status, Status::Fail);
        assert_eq!(Verdict::at_most("x", f64::NAN, 2.0, "").status, Status::Fail);
        assert_eq!(Verdict::at_least("x", f64::NAN, 2.0, "").status, Status::Fail);
        assert_eq!(Verdict::at_least("x", 3.0, 2.0, "").status, Status::Pass);
        assert_eq!(Verdict::at_most("x", 1.0, 2.0, "").flag_unless(false).status, Status::Flagged);
        assert_eq!(Verdict::at_most("x", 3.0, 2.0, "").flag_unless(false).status, Status::Fail);
        assert_eq!(Verdict::at_most("x", 3.0, 2.0, "").soften().status, Status::Flagged);
    }

    #[test]
    fn json_round_trip_keeps_nonfinite_as_null() {
        let v = Verdict::at_most("ratio", f64::INFINITY, 2.0, "d");
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.contains("\"value\":null"));
        assert_eq!(serde_json::from_str::<Verdict>(&s).unwrap(), v);
        assert!(v.line().starts_with("FAIL"));
    }
}
