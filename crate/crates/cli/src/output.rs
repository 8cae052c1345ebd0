//! History CSV and summary JSON.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;

use resmooth_core::{ConvergenceRecord, SolveReport};

pub const CSV_HEADER: &str =
    "step,cfl,alpha,krylov,linear_reduction,residual_l2,ptc_residual_l2,cumulative_krylov,accepted";

/// C `%.12e`: twelve fraction digits and a signed exponent of at least two
/// digits.
pub fn sci(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

fn push_row(out: &mut String, rec: &ConvergenceRecord, krylov_offset: usize) {
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{}",
        rec.step,
        sci(rec.cfl),
        sci(rec.alpha),
        rec.krylov_count,
        sci(rec.linear_reduction),
        sci(rec.residual_l2),
        sci(rec.ptc_residual_l2),
        rec.cumulative_krylov + krylov_offset,
        u8::from(rec.accepted),
    );
}

/// One row per nonlinear step, rejected steps included.
pub fn history_csv(history: &[ConvergenceRecord], krylov_offset: usize) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for rec in history {
        push_row(&mut out, rec, krylov_offset);
    }
    out
}

/// One section per physical step, each opened by a `# step k` line.
/// `cumulative_krylov` keeps counting across the sections.
pub fn unsteady_csv(reports: &[SolveReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let mut offset = 0;
    for (k, report) in reports.iter().enumerate() {
        let _ = writeln!(out, "# step {}", k + 1);
        for rec in &report.history {
            push_row(&mut out, rec, offset);
        }
        offset += report.cumulative_krylov;
    }
    out
}

pub fn report_summary(report: &SolveReport) -> serde_json::Value {
    json!({
        "outcome": report.outcome,
        "newton_steps": report.newton_steps,
        "rejected_steps": report.rejected_steps(),
        "cumulative_krylov": report.cumulative_krylov,
        "initial_residual_l2": report.initial_residual_l2,
        "final_residual_l2": report.final_residual_l2,
        "final_cfl": report.final_cfl,
        "descent_violations": report.descent_violations(),
        "line_cells": report.lines.multi_cell_membership(),
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
