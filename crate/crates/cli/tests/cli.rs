use std::path::Path;
use std::process::{Command, Output};

use resmooth_cli::config::SmoothingSection;
use resmooth_cli::output::{sci, CSV_HEADER};
use resmooth_cli::{apply_overrides, parse_config, run, Mode, OUTPUT_DIR_ENV};
use resmooth_core::problems::{BratuParams, ProblemSpec};
use resmooth_core::{LineSet, PtcConfig};

const BRATU: &str = "[problem]\nname = \"bratu\"\n";

fn binary() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_resmooth"));
    cmd.env_remove(OUTPUT_DIR_ENV);
    cmd
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn invoke(dir: &Path, sub: &str, text: &str, extra: &[&str]) -> Output {
    let cfg = write_config(dir, text);
    binary()
        .arg(sub)
        .arg(&cfg)
        .args(extra)
        .env(OUTPUT_DIR_ENV, dir)
        .output()
        .unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .collect()
}

#[test]
fn problem_name_alone_takes_every_default() {
    let cfg = parse_config(BRATU).unwrap();
    assert_eq!(cfg.problem, ProblemSpec::Bratu(BratuParams::default()));
    assert_eq!(cfg.solver, PtcConfig::default());
    assert_eq!(cfg.mode, Mode::Steady);
    assert_eq!(cfg.smoothing, SmoothingSection::default());
    let s = &cfg.solver;
    assert_eq!(
        (
            s.cfl_init,
            s.cfl_growth,
            s.cfl_cut,
            s.linear_rel_tol,
            s.max_krylov
        ),
        (10.0, 1.5, 0.1, 1e-2, 100)
    );
    assert_eq!(cfg.smoothing.stage_coefficients, vec![0.15, 0.4, 1.0]);
    assert_eq!(cfg.smoothing.n_cycles, 5);
    assert!(cfg.ptc().unwrap().smoothing.is_none());
}

#[test]
fn aggressive_growth_factor_is_carried() {
    let cfg = parse_config(&format!("{BRATU}[solver]\nbeta_cfl1 = 3.0\n")).unwrap();
    assert_eq!(cfg.solver.cfl_growth, 3.0);
    let base = parse_config(BRATU).unwrap();
    let over = apply_overrides(&base, &["solver.beta_cfl1=3.0".into()]).unwrap();
    assert_eq!(over.solver.cfl_growth, 3.0);
    let over = apply_overrides(&base, &["smoothing.enabled=true".into(), "seed=9".into()]).unwrap();
    assert!(over.ptc().unwrap().smoothing.is_some());
    assert_eq!(over.seed, 9);
}

#[test]
fn switching_problem_by_override_drops_old_parameters() {
    let base = parse_config(&format!("{BRATU}lambda = 2.0\n")).unwrap();
    let cd = apply_overrides(&base, &["problem.name=convdiff".into()]).unwrap();
    assert_eq!(cd.problem.name(), "convdiff");
}

#[test]
fn unknown_keys_list_the_valid_ones() {
    let err = parse_config(&format!("{BRATU}[solver]\ncfl_int = 3\n")).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("cfl_int") && msg.contains("cfl_init"), "{msg}");
    assert!(msg.contains("max_krylov"), "{msg}");

    let err = parse_config(&format!("{BRATU}lamda = 1.0\n")).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("lambda") && msg.contains("n_cells"), "{msg}");

    let err = parse_config("[problem]\nname = \"bratu\"\n[extra]\n").unwrap_err();
    assert!(format!("{err:#}").contains("solver"));

    let err = parse_config("[problem]\nname = \"nozzle\"\n").unwrap_err();
    assert!(format!("{err:#}").contains("euler"));
}

#[test]
fn type_mismatches_report_their_line() {
    for (text, line) in [
        (format!("{BRATU}\n[solver]\ncfl_init = \"abc\"\n"), 5),
        (format!("{BRATU}n_cells = 64\nlambda = \"x\"\n"), 4),
        (format!("{BRATU}[smoothing]\nn_cycles = 2.5\n"), 4),
        (
            "[problem]\nname = \"convdiff\"\nforcing = { kind = \"zero\", boundary_value = \"a\" }\n"
                .to_string(),
            3,
        ),
    ] {
        let msg = format!("{:#}", parse_config(&text).unwrap_err());
        assert!(msg.contains(&format!("line {line}")), "{msg}");
    }
}

#[test]
fn out_of_range_values_are_rejected() {
    assert!(parse_config(&format!("{BRATU}[solver]\ncfl_growth = 0.5\n")).is_err());
    assert!(parse_config(&format!("{BRATU}lambda = -1.0\n")).is_err());
    assert!(parse_config(&format!("{BRATU}[smoothing]\nstage_coefficients = [0.5]\n")).is_err());
    assert!(parse_config(&format!("{BRATU}[solver]\nsmoothing = {{}}\n")).is_err());
}

#[test]
fn malformed_numbers_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = invoke(dir.path(), "solve", &format!("{BRATU}lambda = 1.o\n"), &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn sweep_on_bratu_writes_both_histories() {
    let dir = tempfile::tempdir().unwrap();
    let out = invoke(dir.path(), "sweep", BRATU, &[]);
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("run_summary.json"))).unwrap();
    for variant in ["unsmoothed", "smoothed"] {
        assert_eq!(summary[variant]["outcome"], "converged");
        let csv = read(dir.path().join(format!("run_{variant}_history.csv")));
        assert_eq!(csv.lines().next(), Some(CSV_HEADER));
        let rows = data_rows(&csv);
        assert_eq!(
            rows.len() as u64,
            summary[variant]["newton_steps"].as_u64().unwrap()
        );
        let last: u64 = rows
            .last()
            .unwrap()
            .split(',')
            .nth(7)
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(
            last,
            summary[variant]["cumulative_krylov"].as_u64().unwrap()
        );
    }
    assert!(summary["comparison"]["krylov_ratio"].is_number());
}

#[test]
fn rows_count_rejected_steps_and_stagnation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[problem]\nname = \"convdiff\"\nnx = 8\nny = 8\n\n[solver]\nmax_krylov = 1\nlinear_rel_tol = 1e-13\n";
    let out = invoke(dir.path(), "solve", text, &[]);
    assert_eq!(out.status.code(), Some(2));
    let summary: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("run_summary.json"))).unwrap();
    assert_eq!(summary["outcome"], "stagnated");
    let csv = read(dir.path().join("run_history.csv"));
    let rows = data_rows(&csv);
    assert_eq!(rows.len() as u64, summary["newton_steps"].as_u64().unwrap());
    assert!(rows.iter().all(|r| r.ends_with(",0")));
}

#[test]
fn step_budget_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = invoke(
        dir.path(),
        "solve",
        BRATU,
        &["--override", "solver.max_newton_steps=2"],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unsteady_sections_are_delimited_by_step() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{BRATU}[unsteady]\ndt = 0.05\nn_steps = 3\n");
    let out = invoke(dir.path(), "unsteady", &text, &[]);
    assert_eq!(out.status.code(), Some(0));
    let csv = read(dir.path().join("run_history.csv"));
    let markers: Vec<&str> = csv.lines().filter(|l| l.starts_with('#')).collect();
    assert_eq!(markers, ["# step 1", "# step 2", "# step 3"]);
    let summary: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("run_summary.json"))).unwrap();
    let last: u64 = data_rows(&csv)
        .last()
        .unwrap()
        .split(',')
        .nth(7)
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(last, summary["cumulative_krylov"].as_u64().unwrap());
    assert_eq!(summary["completed_steps"], 3);
}

#[test]
fn runs_are_bit_reproducible() {
    let cfg = parse_config(&format!(
        "mode = \"sweep\"\nseed = 4\n{BRATU}[smoothing]\nenabled = true\n"
    ))
    .unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&cfg, a.path()).unwrap();
    run(&cfg, b.path()).unwrap();
    for name in [
        "run_unsmoothed_history.csv",
        "run_smoothed_history.csv",
        "run_summary.json",
    ] {
        assert_eq!(
            read(a.path().join(name)),
            read(b.path().join(name)),
            "{name}"
        );
    }
}

#[test]
fn config_echo_round_trips() {
    let text = "seed = 17\n[problem]\nname = \"euler\"\nn_cells = 48\n[problem.area]\nthroat = 0.8\n\n[solver]\nbeta_cfl1 = 3.0\nabsolute_tolerance = 1e-9\n[smoothing]\nenabled = true\nn_cycles = 3\n[output]\nprefix = \"nozzle\"\n";
    let cfg = parse_config(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let result = run(&cfg, dir.path()).unwrap();
    assert_eq!(result.exit_code(), 0);
    let summary: serde_json::Value =
        serde_json::from_str(&read(dir.path().join("nozzle_summary.json"))).unwrap();
    let echo = toml::to_string(&summary["config"]).unwrap();
    assert_eq!(parse_config(&echo).unwrap(), cfg);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let home = tempfile::tempdir().unwrap();
    let target = tempfile::tempdir().unwrap();
    let cfg = write_config(
        home.path(),
        &format!("{BRATU}[output]\ndir = \"elsewhere\"\nprefix = \"b\"\n"),
    );
    let out = binary()
        .arg("solve")
        .arg(&cfg)
        .current_dir(home.path())
        .env(OUTPUT_DIR_ENV, target.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(target.path().join("b_history.csv").exists());
    assert!(!home.path().join("elsewhere").exists());
}

#[test]
fn lines_dump_is_a_partition() {
    let dir = tempfile::tempdir().unwrap();
    let out = invoke(dir.path(), "lines", "[problem]\nname = \"convdiff\"\n", &[]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("multi-cell lines"), "{stdout}");
    // 24 x 24 intervals leave 23 x 23 unknowns
    let lines = LineSet::from_text(23 * 23, &read(dir.path().join("run_lines.txt"))).unwrap();
    assert!(lines.multi_cell_lines().count() > 0);
}

#[test]
fn scientific_format_matches_printf() {
    assert_eq!(sci(10.0), "1.000000000000e+01");
    assert_eq!(sci(0.0), "0.000000000000e+00");
    assert_eq!(sci(-2.5e-7), "-2.500000000000e-07");
    assert_eq!(sci(1.5e-300), "1.500000000000e-300");
    assert_eq!(sci(f64::INFINITY), "inf");
}
