//! Command-line driver: configuration, experiment orchestration and
//! convergence-history output.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{Context, Result};
use serde_json::json;

use resmooth_core::problems::Problem;
use resmooth_core::{
    advance_unsteady, build_coupling_graph, extract_lines, solve_steady, NonlinearSystem, Outcome,
    SolveReport,
};

pub use config::{apply_overrides, parse_config, Mode, RunConfig};
use output::{history_csv, report_summary, unsteady_csv, write_file};

/// Environment variable that overrides `[output] dir`.
pub const OUTPUT_DIR_ENV: &str = "RESMOOTH_OUTPUT_DIR";

pub fn exit_code(outcome: Outcome) -> i32 {
    match outcome {
        Outcome::Converged => 0,
        Outcome::Stagnated => 2,
        Outcome::StepBudgetExhausted => 3,
    }
}

/// The worse of two outcomes, for runs made of several solves.
fn worst(a: Outcome, b: Outcome) -> Outcome {
    let rank = |o| match o {
        Outcome::Converged => 0,
        Outcome::StepBudgetExhausted => 1,
        Outcome::Stagnated => 2,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

pub fn output_dir(config: &RunConfig) -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(&config.output.dir))
}

/// Files written by a run, and the outcome that sets the exit status.
#[derive(Debug)]
pub struct RunResult {
    pub outcome: Outcome,
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        exit_code(self.outcome)
    }
}

/// Run the configuration in its `mode`, writing into `dir`.
pub fn run(config: &RunConfig, dir: &Path) -> Result<RunResult> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    match config.mode {
        Mode::Steady => run_steady(config, dir),
        Mode::Sweep => run_sweep(config, dir),
        Mode::Unsteady => run_unsteady(config, dir),
    }
}

fn file(dir: &Path, config: &RunConfig, suffix: &str) -> PathBuf {
    dir.join(format!("{}_{suffix}", config.output.prefix))
}

fn finish(config: &RunConfig, dir: &Path, mut summary: serde_json::Value) -> Result<PathBuf> {
    summary["config"] = serde_json::to_value(config)?;
    let path = file(dir, config, "summary.json");
    write_file(&path, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(path)
}

fn run_steady(config: &RunConfig, dir: &Path) -> Result<RunResult> {
    let problem = config.problem.build()?;
    let report = solve_steady(&problem, &config.ptc()?)?;
    let csv = file(dir, config, "history.csv");
    write_file(&csv, &history_csv(&report.history, 0))?;
    let mut summary = report_summary(&report);
    summary["mode"] = json!("steady");
    let json_path = finish(config, dir, summary.clone())?;
    Ok(RunResult {
        outcome: report.outcome,
        files: vec![csv, json_path],
        summary,
    })
}

fn run_sweep(config: &RunConfig, dir: &Path) -> Result<RunResult> {
    let problem = config.problem.build()?;
    let mut smoothed_cfg = config.solver.clone();
    smoothed_cfg.smoothing = Some(config.smoothing.schedule()?);
    let plain_cfg = config.solver.clone();

    let solve = |cfg| solve_steady(&problem, cfg);
    let (plain, smoothed) = thread::scope(|s| {
        let plain = s.spawn(|| solve(&plain_cfg));
        let smoothed = s.spawn(|| solve(&smoothed_cfg));
        (join(plain), join(smoothed))
    });
    let (plain, smoothed): (SolveReport, SolveReport) = (plain?, smoothed?);

    let plain_csv = file(dir, config, "unsmoothed_history.csv");
    let smoothed_csv = file(dir, config, "smoothed_history.csv");
    write_file(&plain_csv, &history_csv(&plain.history, 0))?;
    write_file(&smoothed_csv, &history_csv(&smoothed.history, 0))?;

    let ratio = |a: usize, b: usize| {
        if b == 0 {
            None
        } else {
            Some(a as f64 / b as f64)
        }
    };
    let summary = json!({
        "mode": "sweep",
        "unsmoothed": report_summary(&plain),
        "smoothed": report_summary(&smoothed),
        "comparison": {
            "newton_steps": [plain.newton_steps, smoothed.newton_steps],
            "cumulative_krylov": [plain.cumulative_krylov, smoothed.cumulative_krylov],
            "newton_step_ratio": ratio(smoothed.newton_steps, plain.newton_steps),
            "krylov_ratio": ratio(smoothed.cumulative_krylov, plain.cumulative_krylov),
        },
    });
    let json_path = finish(config, dir, summary.clone())?;
    Ok(RunResult {
        outcome: worst(plain.outcome, smoothed.outcome),
        files: vec![plain_csv, smoothed_csv, json_path],
        summary,
    })
}

fn join<T>(handle: thread::ScopedJoinHandle<'_, T>) -> T {
    handle
        .join()
        .unwrap_or_else(|panic| std::panic::resume_unwind(panic))
}

fn run_unsteady(config: &RunConfig, dir: &Path) -> Result<RunResult> {
    let problem = config.problem.build()?;
    let history = advance_unsteady(&problem, &config.unsteady_config()?)?;
    let csv = file(dir, config, "history.csv");
    write_file(&csv, &unsteady_csv(&history.reports))?;
    let outcome = history
        .reports
        .last()
        .map_or(Outcome::Converged, |r| r.outcome);
    let steps: Vec<_> = history
        .reports
        .iter()
        .enumerate()
        .map(|(k, r)| {
            json!({
                "step": k + 1,
                "outcome": r.outcome,
                "newton_steps": r.newton_steps,
                "krylov": r.cumulative_krylov,
                "rejected_steps": r.rejected_steps(),
                "final_residual_l2": r.final_residual_l2,
            })
        })
        .collect();
    let summary = json!({
        "mode": "unsteady",
        "outcome": outcome,
        "dt": history.dt,
        "completed_steps": history.completed_steps(),
        "aborted_at": history.aborted_at,
        "newton_steps": history.total_newton_steps(),
        "cumulative_krylov": history.total_krylov(),
        "functionals": history.functionals,
        "steps": steps,
    });
    let json_path = finish(config, dir, summary.clone())?;
    Ok(RunResult {
        outcome,
        files: vec![csv, json_path],
        summary,
    })
}

/// Dump the solver lines for the initial state. Returns the file written and
/// a one-paragraph description.
pub fn dump_lines(config: &RunConfig, dir: &Path) -> Result<(PathBuf, String)> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let problem: Problem = config.problem.build()?;
    let w = problem.initial_state();
    let (lines, source) = match problem.line_hint() {
        Some(lines) => (lines, "problem line hint"),
        None => {
            let graph = build_coupling_graph(&problem, &w)?;
            (
                extract_lines(&graph, config.solver.anisotropy_threshold)?,
                "extracted from coupling graph",
            )
        }
    };
    let path = file(dir, config, "lines.txt");
    write_file(&path, &lines.to_text())?;
    let multi = lines.multi_cell_lines().count();
    let longest = lines.lines().iter().map(Vec::len).max().unwrap_or(0);
    let text = format!(
        "{} cells, {} lines ({source}); {multi} multi-cell lines cover {} cells, longest {longest}",
        lines.n_cells(),
        lines.lines().len(),
        lines.multi_cell_membership(),
    );
    Ok((path, text))
}
