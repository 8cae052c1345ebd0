use nalgebra::{DMatrix, DVector};

use resmooth_core::linalg::LinearOperator;
use resmooth_core::problems::{
    make_bratu, ConvDiffParams, ConvDiffProblem, EulerParams, LinearSystem, Problem,
    Quasi1dEulerProblem,
};
use resmooth_core::ptc::{
    cfl_update, line_search, local_pseudo_timesteps, newton_step, ptc_operator,
};
use resmooth_core::smoother::SmootherContext;
use resmooth_core::timestepping::BdfSystem;
use resmooth_core::{
    advance_unsteady, advance_unsteady_from, build_coupling_graph, build_smoother, extract_lines,
    rk_smooth, solve_steady, solve_steady_from, BlockSparse, BlockVector, LineSet, NonlinearSystem,
    Outcome, PtcConfig, RkSchedule, UnsteadyConfig,
};

fn dense_of(blocks: &BlockSparse) -> DMatrix<f64> {
    let n = blocks.layout().len();
    let b = blocks.layout().block_size();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..blocks.layout().n_cells() {
        for r in 0..b {
            for c in 0..b {
                m[(i * b + r, i * b + c)] += blocks.diag(i).get(r, c);
            }
        }
    }
    for (i, j, blk) in blocks.off_blocks() {
        for r in 0..b {
            for c in 0..b {
                m[(i * b + r, j * b + c)] += blk.get(r, c);
            }
        }
    }
    m
}

fn smoother_at<S: NonlinearSystem>(
    sys: &S,
    w: &BlockVector,
    lines: &LineSet,
    schedule: RkSchedule,
) -> SmootherContext {
    build_smoother(sys, w, lines, &schedule).unwrap()
}

#[test]
fn pseudo_timesteps_scale_with_cfl() {
    let p = Quasi1dEulerProblem::new(EulerParams::default()).unwrap();
    let w = p.initial_state();
    let explicit = p.explicit_dt(&w).unwrap();
    assert_eq!(local_pseudo_timesteps(&p, &w, 1.0).unwrap(), explicit);
    let one = local_pseudo_timesteps(&p, &w, 3.0).unwrap();
    let two = local_pseudo_timesteps(&p, &w, 6.0).unwrap();
    for (a, b) in one.iter().zip(&two) {
        assert!((b - 2.0 * a).abs() <= 1e-15 * b);
    }
    assert!(local_pseudo_timesteps(&p, &w, 0.0).is_err());
}

#[test]
fn ptc_operator_limits() {
    let p = make_bratu(32, 1.0).unwrap();
    let w = BlockVector::from_fn(p.layout(), |i, _| 0.01 * i as f64);
    let v = BlockVector::from_fn(p.layout(), |i, _| (0.7 * i as f64).cos());
    let jv = p.jacobian_vector(&w, &v).unwrap();

    let big = vec![1e12; 32];
    let av = ptc_operator(&p, &w, &big).unwrap().apply(&v).unwrap();
    assert!(av.sub(&jv).norm() <= 1e-9 * jv.norm());

    let tiny = vec![1e-14; 32];
    let av = ptc_operator(&p, &w, &tiny).unwrap().apply(&v).unwrap();
    let mv = p.mass().apply(&v).unwrap().scaled(1e14);
    assert!(av.sub(&mv).norm() <= 1e-9 * mv.norm());

    let zero = BlockVector::zeros(p.layout());
    assert_eq!(
        ptc_operator(&p, &w, &big)
            .unwrap()
            .apply(&zero)
            .unwrap()
            .norm(),
        0.0
    );
}

#[test]
fn zero_cycle_smoothing_reproduces_plain_newton_step() {
    let p = ConvDiffProblem::new(ConvDiffParams::default()).unwrap();
    let w = p.initial_state();
    let lines = extract_lines(&build_coupling_graph(&p, &w).unwrap(), 4.0).unwrap();
    let dtau = local_pseudo_timesteps(&p, &w, 10.0).unwrap();
    let cfg = PtcConfig::default();
    let plain = newton_step(&p, &w, &dtau, &cfg, &lines, None).unwrap();
    let ctx = smoother_at(
        &p,
        &w,
        &lines,
        RkSchedule::new(vec![0.15, 0.4, 1.0], 0).unwrap(),
    );
    let zero = newton_step(&p, &w, &dtau, &cfg, &lines, Some(&ctx)).unwrap();
    assert_eq!(plain.delta_w, zero.delta_w);
    assert_eq!(plain.stats, zero.stats);
    assert_eq!(zero.source.unwrap().norm(), 0.0);
}

#[test]
fn tiny_pseudo_timestep_recovers_the_smoother_update() {
    let p = make_bratu(64, 1.0).unwrap();
    let w = p.initial_state();
    let lines = LineSet::singletons(64);
    let cfg = PtcConfig {
        linear_rel_tol: 1e-10,
        ..PtcConfig::default()
    };
    let dtau = local_pseudo_timesteps(&p, &w, 1e-10).unwrap();
    let ctx = smoother_at(&p, &w, &lines, RkSchedule::default());
    let step = newton_step(&p, &w, &dtau, &cfg, &lines, Some(&ctx)).unwrap();
    let smooth = rk_smooth(&p, &ctx, &w).unwrap().delta_w;
    assert!(step.stats.converged);
    assert!(step.delta_w.sub(&smooth).norm() <= 1e-6 * smooth.norm());
}

#[test]
fn huge_pseudo_timestep_recovers_pure_newton() {
    let p = make_bratu(64, 2.0).unwrap();
    let near = solve_steady(&p, &PtcConfig::default()).unwrap().final_state;
    let w = near.plus_scaled(
        1e-3,
        &BlockVector::from_fn(p.layout(), |i, _| (0.1 * i as f64).sin()),
    );
    let r = p.residual(&w).unwrap();
    // Bratu's first-order blocks are its exact Jacobian
    let j = dense_of(&p.first_order_blocks(&w).unwrap());
    let newton = j
        .lu()
        .solve(&-DVector::from_column_slice(r.values()))
        .unwrap();

    let cfg = PtcConfig {
        linear_rel_tol: 1e-12,
        ..PtcConfig::default()
    };
    let dtau = local_pseudo_timesteps(&p, &w, 1e12).unwrap();
    for smoothing in [false, true] {
        let lines = LineSet::singletons(64);
        let ctx = smoother_at(&p, &w, &lines, RkSchedule::default());
        let step = newton_step(&p, &w, &dtau, &cfg, &lines, smoothing.then_some(&ctx)).unwrap();
        let err =
            (DVector::from_column_slice(step.delta_w.values()) - &newton).norm() / newton.norm();
        assert!(err <= 1e-6, "smoothing {smoothing}: {err:e}");
    }
}

#[test]
fn line_search_takes_the_full_exact_step_on_linear_problems() {
    let sys = LinearSystem::random_chain(12, 2, 5).unwrap();
    let w = sys.initial_state();
    let r = sys.residual(&w).unwrap();
    let exact = dense_of(sys.matrix())
        .lu()
        .solve(&-DVector::from_column_slice(r.values()))
        .unwrap();
    let dw = BlockVector::from_values(sys.layout(), exact.as_slice().to_vec()).unwrap();
    // huge dtau leaves F(1) = ||R(w + dw)||
    let dtau = vec![1e30; 12];
    let ls = line_search(&sys, &w, &r, &dw, &dtau, None).unwrap();
    assert_eq!(ls.alpha, 1.0);
    assert!(ls.f_alpha <= 1e-12 * ls.f0);
    assert_eq!(ls.f_values.len(), 1);
}

#[test]
fn line_search_direction_is_a_descent_direction() {
    let p = ConvDiffProblem::new(ConvDiffParams::default()).unwrap();
    let w = p.initial_state();
    let lines = extract_lines(&build_coupling_graph(&p, &w).unwrap(), 4.0).unwrap();
    let dtau = local_pseudo_timesteps(&p, &w, 50.0).unwrap();
    let cfg = PtcConfig {
        linear_rel_tol: 1e-10,
        ..PtcConfig::default()
    };
    let ctx = smoother_at(&p, &w, &lines, RkSchedule::default());
    for smoother in [None, Some(&ctx)] {
        let step = newton_step(&p, &w, &dtau, &cfg, &lines, smoother).unwrap();
        assert!(step.stats.converged);
        let r = p.residual(&w).unwrap();
        let objective = |a: f64| {
            let trial = w.plus_scaled(a, &step.delta_w);
            let mut f = p.residual(&trial).unwrap();
            let md = p.mass().apply(&step.delta_w).unwrap();
            for (i, d) in dtau.iter().enumerate() {
                for (fv, m) in f.cell_mut(i).iter_mut().zip(md.cell(i)) {
                    *fv += a * m / d;
                }
            }
            if let Some(s) = &step.source {
                f.axpy(-1.0, s);
            }
            f.norm().powi(2)
        };
        let slope = (objective(1e-6) - objective(0.0)) / 1e-6;
        assert!(slope < 0.0, "one-sided derivative {slope}");
        let ls = line_search(&p, &w, &r, &step.delta_w, &dtau, step.source.as_ref()).unwrap();
        assert!(ls.alpha > 0.0 && ls.f_alpha < ls.f0);
        assert!((ls.f0 - objective(0.0).sqrt()).abs() <= 1e-12 * ls.f0);
    }
}

#[test]
fn inadmissible_trials_are_skipped_and_may_exhaust_the_candidates() {
    let p = Quasi1dEulerProblem::new(EulerParams::default()).unwrap();
    let w = p.initial_state();
    let r = p.residual(&w).unwrap();
    let dtau = local_pseudo_timesteps(&p, &w, 10.0).unwrap();
    // drives the density of cell 3 negative for alpha > 0.4 only
    let mut dw = BlockVector::zeros(p.layout());
    dw.cell_mut(3)[0] = -2.5 * w.cell(3)[0];
    let ls = line_search(&p, &w, &r, &dw, &dtau, None).unwrap();
    assert!(ls
        .f_values
        .iter()
        .filter(|(a, _)| *a > 0.4)
        .all(|(_, f)| f.is_infinite()));

    // every candidate inadmissible
    dw.cell_mut(3)[0] = -200.0 * w.cell(3)[0];
    let ls = line_search(&p, &w, &r, &dw, &dtau, None).unwrap();
    assert_eq!(ls.alpha, 0.0);
    assert!(ls.residual.is_none());
    assert_eq!(ls.f_values.len(), 7);
}

#[test]
fn controller_examples() {
    let cfg = PtcConfig::default();
    let grow = cfl_update(10.0, 1.0, true, &cfg);
    assert_eq!((grow.cfl, grow.accepted), (15.0, true));
    let cut = cfl_update(10.0, 0.05, true, &cfg);
    assert_eq!((cut.cfl, cut.accepted), (1.0, false));
    let keep = cfl_update(10.0, 0.5, true, &cfg);
    assert_eq!((keep.cfl, keep.accepted), (10.0, true));
    let failed = cfl_update(10.0, 1.0, false, &cfg);
    assert_eq!((failed.cfl, failed.accepted), (1.0, false));
    assert_eq!(cfl_update(0.9e12, 1.0, true, &cfg).cfl, 1e12);
}

#[test]
fn converged_start_takes_no_steps() {
    let sys = LinearSystem::diffusion_chain(10).unwrap();
    let exact = dense_of(sys.matrix())
        .lu()
        .solve(&DVector::from_column_slice(sys.rhs().values()))
        .unwrap();
    let w = BlockVector::from_values(sys.layout(), exact.as_slice().to_vec()).unwrap();
    let report = solve_steady_from(&sys, &w, &PtcConfig::default(), None).unwrap();
    assert_eq!(report.outcome, Outcome::Converged);
    assert_eq!(report.newton_steps, 0);
    assert!(report.history.is_empty());

    let zero_rhs =
        LinearSystem::new(sys.matrix().clone(), BlockVector::zeros(sys.layout())).unwrap();
    let report = solve_steady(&zero_rhs, &PtcConfig::default()).unwrap();
    assert_eq!(
        (report.outcome, report.newton_steps),
        (Outcome::Converged, 0)
    );
}

#[test]
fn bratu_default_solve() {
    let p = make_bratu(64, 1.0).unwrap();
    let report = solve_steady(&p, &PtcConfig::default()).unwrap();
    assert_eq!(report.outcome, Outcome::Converged);
    assert!(report.newton_steps <= 30);
    assert!(report.final_residual_l2 <= 1e-8 * report.initial_residual_l2);
    assert_eq!(report.history.len(), report.newton_steps);
    let last = report.history.last().unwrap();
    assert_eq!(last.residual_l2, report.final_residual_l2);
    assert_eq!(last.cumulative_krylov, report.cumulative_krylov);
}

#[test]
fn inadmissible_start_is_an_error() {
    let p = Quasi1dEulerProblem::new(EulerParams::default()).unwrap();
    let mut w = p.initial_state();
    w.cell_mut(0)[0] = -1.0;
    assert!(solve_steady_from(&p, &w, &PtcConfig::default(), None).is_err());
}

fn all_runs() -> Vec<(String, Problem, PtcConfig)> {
    let problems = [
        Problem::Bratu(make_bratu(64, 1.0).unwrap()),
        Problem::ConvDiff(ConvDiffProblem::new(ConvDiffParams::default()).unwrap()),
        Problem::Euler(Quasi1dEulerProblem::new(EulerParams::default()).unwrap()),
        Problem::Euler(
            Quasi1dEulerProblem::new(EulerParams {
                initial_mach: 0.1,
                ..EulerParams::transonic()
            })
            .unwrap(),
        ),
    ];
    let mut runs = Vec::new();
    for (k, p) in problems.into_iter().enumerate() {
        runs.push((
            format!("problem {k} plain"),
            p.clone(),
            PtcConfig::default(),
        ));
        runs.push((
            format!("problem {k} smoothed"),
            p,
            PtcConfig::default().smoothed(RkSchedule::default()),
        ));
    }
    runs
}

#[test]
fn bookkeeping_invariants_hold_on_every_run() {
    for (name, p, cfg) in all_runs() {
        let report = solve_steady(&p, &cfg).unwrap();
        assert_eq!(report.outcome, Outcome::Converged, "{name}");
        assert_eq!(report.descent_violations(), 0, "{name}");
        assert!(report.max_accepted_residual_ratio() <= 10.0, "{name}");
        let mut previous_total = 0;
        let mut held = report.initial_residual_l2;
        for rec in &report.history {
            if rec.krylov_count > 0 {
                assert!(
                    rec.cumulative_krylov > previous_total,
                    "{name} step {}",
                    rec.step
                );
            }
            assert_eq!(rec.cumulative_krylov, previous_total + rec.krylov_count);
            previous_total = rec.cumulative_krylov;
            if !rec.accepted {
                // the held state, hence its residual, is untouched
                assert_eq!(
                    rec.residual_l2.to_bits(),
                    held.to_bits(),
                    "{name} step {}",
                    rec.step
                );
                assert!(rec.alpha <= cfg.alpha_reject_threshold || !rec.linear_converged);
            }
            held = rec.residual_l2;
        }
    }
}

#[test]
fn rejections_leave_the_state_bit_identical() {
    // one Krylov vector never meets the tolerance, so every step is rejected
    let p = ConvDiffProblem::new(ConvDiffParams::default()).unwrap();
    let cfg = PtcConfig {
        max_krylov: 1,
        linear_rel_tol: 1e-13,
        ..PtcConfig::default()
    };
    let report = solve_steady(&p, &cfg).unwrap();
    assert_eq!(report.outcome, Outcome::Stagnated);
    assert!(report
        .history
        .iter()
        .all(|r| !r.accepted && r.krylov_count == 1));
    assert_eq!(report.final_state, p.initial_state());
    assert!(report.final_cfl < cfg.cfl_stagnation_floor);
}

#[test]
fn step_budget_is_reported() {
    let p = make_bratu(64, 1.0).unwrap();
    let cfg = PtcConfig {
        max_newton_steps: 3,
        ..PtcConfig::default()
    };
    let report = solve_steady(&p, &cfg).unwrap();
    assert_eq!(report.outcome, Outcome::StepBudgetExhausted);
    assert_eq!(report.newton_steps, 3);
}

#[test]
fn unsteady_steps_hold_a_steady_state() {
    let p = make_bratu(32, 1.0).unwrap();
    let steady = solve_steady(&p, &PtcConfig::default()).unwrap().final_state;
    let cfg = UnsteadyConfig {
        dt: 0.01,
        n_steps: 4,
        inner: PtcConfig {
            absolute_tolerance: Some(1e-6),
            ..PtcConfig::default()
        },
    };
    let history = advance_unsteady_from(&p, &steady, &cfg).unwrap();
    assert_eq!(history.completed_steps(), 4);
    assert_eq!(history.reports.len(), 4);
    assert_eq!(history.functionals.len(), 5);
    assert!(history
        .reports
        .iter()
        .all(|r| r.outcome == Outcome::Converged && r.newton_steps <= 1));
}

#[test]
fn unsteady_with_huge_dt_lands_on_the_steady_solution() {
    let p = make_bratu(32, 1.0).unwrap();
    let tight = PtcConfig {
        target_residual_reduction: 1e-12,
        ..PtcConfig::default()
    };
    let steady = solve_steady(&p, &tight).unwrap().final_state;
    let history = advance_unsteady(
        &p,
        &UnsteadyConfig {
            dt: 1e12,
            n_steps: 2,
            inner: tight,
        },
    )
    .unwrap();
    let last = history.states.last().unwrap();
    assert!(last.sub(&steady).norm() <= 1e-8 * steady.norm());
}

#[test]
fn unsteady_steps_are_reproducible_in_isolation() {
    let p = ConvDiffProblem::new(ConvDiffParams::default()).unwrap();
    let cfg = UnsteadyConfig {
        dt: 0.5,
        n_steps: 3,
        inner: PtcConfig::default().smoothed(RkSchedule::default()),
    };
    let history = advance_unsteady(&p, &cfg).unwrap();
    assert_eq!(history.completed_steps(), 3);
    for k in 1..=3 {
        let prev = history.states[k - 1].clone();
        let rerun = if k == 1 {
            let bdf = BdfSystem::bdf1(&p, cfg.dt, prev.clone()).unwrap();
            solve_steady_from(&bdf, &prev, &cfg.inner, None).unwrap()
        } else {
            let bdf =
                BdfSystem::bdf2(&p, cfg.dt, prev.clone(), history.states[k - 2].clone()).unwrap();
            solve_steady_from(&bdf, &prev, &cfg.inner, None).unwrap()
        };
        assert_eq!(rerun.history, history.reports[k - 1].history, "step {k}");
        assert_eq!(rerun.final_state, history.states[k]);
    }
}

#[test]
fn unsteady_run_stops_at_the_first_failed_step() {
    let p = ConvDiffProblem::new(ConvDiffParams::default()).unwrap();
    let cfg = UnsteadyConfig {
        dt: 1.0,
        n_steps: 3,
        inner: PtcConfig {
            max_krylov: 1,
            linear_rel_tol: 1e-13,
            ..PtcConfig::default()
        },
    };
    let history = advance_unsteady(&p, &cfg).unwrap();
    assert_eq!(history.aborted_at, Some(1));
    assert_eq!(history.completed_steps(), 0);
    assert_eq!(history.reports.len(), 1);
    assert_eq!(history.reports[0].outcome, Outcome::Stagnated);
    assert!(advance_unsteady(&p, &UnsteadyConfig { dt: -1.0, ..cfg }).is_err());
}
