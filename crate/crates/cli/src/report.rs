//! Report assembly: entries tagged with chart and check names plus the
//! config hash and seed, ready for deterministic emission.

use serde::Serialize;
use sha2::{Digest, Sha256};

use slantlab_core::report::{CheckEntry, Status, ThetaTriple};

/// One row of the final report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportEntry {
    pub chart: String,
    pub check: String,
    pub point: usize,
    pub status: Status,
    pub residual: f64,
    pub tolerance: f64,
    pub labels: Vec<String>,
    pub theta: ThetaTriple,
}

impl ReportEntry {
    pub fn from_check(chart: &str, check: &str, entry: CheckEntry) -> ReportEntry {
        ReportEntry {
            chart: chart.to_string(),
            check: check.to_string(),
            point: entry.point,
            status: entry.status,
            residual: sanitize(entry.residual),
            tolerance: sanitize(entry.tolerance),
            labels: entry.labels,
            theta: entry.theta,
        }
    }
}

/// JSON numbers cannot carry infinities; clamp defensively.
fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::MAX
    } else {
        v.clamp(f64::MIN, f64::MAX)
    }
}

/// A full run's outcome.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    /// SHA-256 of the configuration source bytes.
    pub config_hash: String,
    pub seed: u64,
    pub entries: Vec<ReportEntry>,
}

impl Report {
    pub fn new(config_source: &[u8], seed: u64, entries: Vec<ReportEntry>) -> Report {
        let mut hasher = Sha256::new();
        hasher.update(config_source);
        let digest = hasher.finalize();
        let config_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Report {
            config_hash,
            seed,
            entries,
        }
    }

    pub fn counts(&self) -> StatusCounts {
        let mut counts = StatusCounts::default();
        for e in &self.entries {
            match e.status {
                Status::Pass => counts.pass += 1,
                Status::Fail => counts.fail += 1,
                Status::Skipped => counts.skipped += 1,
                Status::NonConforming => counts.non_conforming += 1,
            }
        }
        counts
    }

    /// Exit-code semantics: failures always fail; under `--strict`, skips
    /// and non-conforming entries fail too.
    pub fn failed(&self, strict: bool) -> bool {
        let counts = self.counts();
        counts.fail > 0 || (strict && (counts.skipped > 0 || counts.non_conforming > 0))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatusCounts {
    pub pass: usize,
    pub fail: usize,
    pub skipped: usize,
    pub non_conforming: usize,
}

impl std::fmt::Display for StatusCounts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} pass, {} fail, {} skipped, {} non-conforming",
            self.pass, self.fail, self.skipped, self.non_conforming
        )
    }
}
