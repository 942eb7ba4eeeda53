//! Structured pass/fail records shared by every check.
//!
//! A check produces one [`CheckEntry`] per grid point (or per synthetic
//! instance). Entries never abort a sweep: hypothesis failures become
//! `Skipped` entries with a reason label, and classification anomalies become
//! `NonConforming` entries.

use serde::Serialize;

/// Outcome of one check at one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "pass")]
    Pass,
    #[serde(rename = "fail")]
    Fail,
    #[serde(rename = "skipped-with-reason")]
    Skipped,
    #[serde(rename = "non-conforming")]
    NonConforming,
}

/// Slant angles per structure, when the point classification yields them.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ThetaTriple {
    #[serde(rename = "I")]
    pub i: Option<f64>,
    #[serde(rename = "J")]
    pub j: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
}

impl ThetaTriple {
    pub fn as_array(&self) -> [Option<f64>; 3] {
        [self.i, self.j, self.k]
    }
}

/// One check outcome at one grid point.
#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    /// Grid point index (or instance index for synthetic checks).
    pub point: usize,
    pub status: Status,
    /// Largest absolute residual observed for this entry.
    pub residual: f64,
    /// Tolerance the residual was compared against.
    pub tolerance: f64,
    /// Classification and diagnostic labels, kept sorted.
    pub labels: Vec<String>,
    pub theta: ThetaTriple,
}

impl CheckEntry {
    /// Entry whose status follows from comparing `residual` to `tolerance`.
    pub fn from_residual(point: usize, residual: f64, tolerance: f64) -> CheckEntry {
        CheckEntry {
            point,
            status: if residual.is_finite() && residual <= tolerance {
                Status::Pass
            } else {
                Status::Fail
            },
            residual,
            tolerance,
            labels: Vec::new(),
            theta: ThetaTriple::default(),
        }
    }

    pub fn skipped(point: usize, reason: impl Into<String>) -> CheckEntry {
        CheckEntry {
            point,
            status: Status::Skipped,
            residual: 0.0,
            tolerance: 0.0,
            labels: vec![format!("skip: {}", reason.into())],
            theta: ThetaTriple::default(),
        }
    }

    pub fn non_conforming(point: usize, reason: impl Into<String>) -> CheckEntry {
        CheckEntry {
            point,
            status: Status::NonConforming,
            residual: 0.0,
            tolerance: 0.0,
            labels: vec![format!("non-conforming: {}", reason.into())],
            theta: ThetaTriple::default(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> CheckEntry {
        self.labels.push(label.into());
        self
    }

    pub fn with_theta(mut self, theta: ThetaTriple) -> CheckEntry {
        self.theta = theta;
        self
    }

    /// Force failure state when a hard precondition broke mid-check.
    pub fn force_fail(mut self, reason: impl Into<String>) -> CheckEntry {
        self.status = Status::Fail;
        self.labels.push(format!("error: {}", reason.into()));
        self
    }

    pub fn finalize(mut self) -> CheckEntry {
        self.labels.sort();
        self.labels.dedup();
        self
    }
}

/// Track the largest of a set of named residuals.
#[derive(Debug, Clone, Default)]
pub struct ResidualMax {
    pub worst: f64,
    pub worst_name: String,
}

impl ResidualMax {
    pub fn update(&mut self, name: &str, value: f64) {
        let value = value.abs();
        if !value.is_finite() {
            self.worst = f64::INFINITY;
            self.worst_name = name.to_string();
        } else if value > self.worst {
            self.worst = value;
            self.worst_name = name.to_string();
        }
    }

    pub fn entry(&self, point: usize, tolerance: f64) -> CheckEntry {
        let mut e = CheckEntry::from_residual(point, self.worst, tolerance);
        if !self.worst_name.is_empty() {
            e.labels.push(format!("worst: {}", self.worst_name));
        }
        e
    }
}
