//! Deterministic report emission. JSON floats are printed with exactly 17
//! significant digits so identical runs produce byte-identical files.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, Serializer};

use crate::report::Report;

struct SeventeenDigits;

impl Formatter for SeventeenDigits {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        // 1 leading + 16 fractional digits = 17 significant digits
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.7e}")
    }
}

/// Serialize the report as canonical JSON bytes.
pub fn to_json_bytes(report: &Report) -> Vec<u8> {
    let mut out = Vec::new();
    let mut serializer = Serializer::with_formatter(&mut out, SeventeenDigits);
    report
        .serialize(&mut serializer)
        .expect("report serialization cannot fail");
    out.push(b'\n');
    out
}

/// Human-readable table.
pub fn to_text(report: &Report) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "config {} seed {}\n",
        &report.config_hash[..16.min(report.config_hash.len())],
        report.seed
    ));
    for e in &report.entries {
        let status = match e.status {
            slantlab_core::report::Status::Pass => "pass",
            slantlab_core::report::Status::Fail => "FAIL",
            slantlab_core::report::Status::Skipped => "skip",
            slantlab_core::report::Status::NonConforming => "nonc",
        };
        let theta = |v: Option<f64>| match v {
            Some(t) => format!("{t:.6}"),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "{status} {chart} :: {check} @ {point} residual {res:.3e} (tol {tol:.1e}) theta I={ti} J={tj} K={tk}\n",
            chart = e.chart,
            check = e.check,
            point = e.point,
            res = e.residual,
            tol = e.tolerance,
            ti = theta(e.theta.i),
            tj = theta(e.theta.j),
            tk = theta(e.theta.k),
        ));
        for label in &e.labels {
            out.push_str(&format!("    - {label}\n"));
        }
    }
    let counts = report.counts();
    out.push_str(&format!("summary: {counts}\n"));
    out
}

/// One line per (chart, check) pair; used by the CLI for compact summaries.
pub fn to_summary(report: &Report) -> String {
    let mut out = String::new();
    let mut current: Option<(String, String)> = None;
    let mut pass = 0usize;
    let mut total = 0usize;
    let mut worst: f64 = 0.0;
    let flush = |out: &mut String,
                     key: &Option<(String, String)>,
                     pass: usize,
                     total: usize,
                     worst: f64| {
        if let Some((chart, check)) = key {
            out.push_str(&format!(
                "{chart} :: {check}: {pass}/{total} pass, worst residual {worst:.3e}\n"
            ));
        }
    };
    for e in &report.entries {
        let key = Some((e.chart.clone(), e.check.clone()));
        if key != current {
            flush(&mut out, &current, pass, total, worst);
            current = key;
            pass = 0;
            total = 0;
            worst = 0.0;
        }
        total += 1;
        if e.status == slantlab_core::report::Status::Pass {
            pass += 1;
        }
        worst = worst.max(e.residual);
    }
    flush(&mut out, &current, pass, total, worst);
    let counts = report.counts();
    out.push_str(&format!("summary: {counts}\n"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::ReportEntry;
    use slantlab_core::report::{CheckEntry, ThetaTriple};

    #[test]
    fn float_formatting_is_fixed_width() {
        let entry = CheckEntry::from_residual(0, 0.5, 1e-8).with_theta(ThetaTriple {
            i: Some(std::f64::consts::FRAC_PI_3),
            j: None,
            k: Some(0.0),
        });
        let report = Report::new(b"cfg", 1, vec![ReportEntry::from_check("c", "k", entry)]);
        let bytes = to_json_bytes(&report);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains("5.0000000000000000e-1"), "{text}");
        assert!(text.contains("1.0471975511965979e0"), "{text}");
        assert!(text.contains("\"config_hash\""));
    }

    #[test]
    fn identical_reports_identical_bytes() {
        let make = || {
            let entry = CheckEntry::from_residual(3, 1.23456789e-9, 1e-8);
            Report::new(b"same", 42, vec![ReportEntry::from_check("a", "b", entry)])
        };
        assert_eq!(to_json_bytes(&make()), to_json_bytes(&make()));
    }
}
