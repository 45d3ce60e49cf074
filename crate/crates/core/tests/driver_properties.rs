//! Properties of the trust-region loop and of the stationarity diagnostics on
//! the damped-oscillator tracking instance.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slip_core::slip::{write_log_csv, zero_control};
use slip_core::{
    run, run_mesh_sequenced, sl_measure, verify_r_optimality, Control, InstanceConfig, ProblemInstance,
    RadiusStrategy, SlipConfig,
};

fn model(alpha: f64, finest: usize) -> ProblemInstance {
    InstanceConfig::default().with_alpha(alpha).with_finest_cells(finest).build().unwrap()
}

#[test]
fn sequenced_stage_starts_where_previous_ended() {
    let m = model(1e-4, 2048);
    let stages = run_mesh_sequenced(&m, &SlipConfig::default(), &[32, 64]).unwrap();
    assert_eq!(stages.len(), 2);
    assert!((stages[1].initial.objective - stages[0].objective()).abs() <= 1e-12);
    assert_eq!(stages[1].initial.tv, stages[0].control.total_variation());
    assert!(stages[1].objective() <= stages[0].objective());
}

#[test]
fn identical_runs_give_identical_logs() {
    let m = model(1e-3, 1024);
    let cfg = SlipConfig {
        n_cells: 64,
        radius_strategy: RadiusStrategy::Doubling,
        ..SlipConfig::default()
    };
    let a = run(&m, &cfg, &zero_control(&m, 64).unwrap()).unwrap();
    let b = run(&m, &cfg, &zero_control(&m, 64).unwrap()).unwrap();
    assert_eq!(a.control, b.control);
    let strip = |r: &slip_core::SlipResult| {
        let mut log = r.log.clone();
        log.iter_mut().for_each(|x| x.time_s = 0.0);
        let mut buf = Vec::new();
        write_log_csv(&log, &mut buf).unwrap();
        buf
    };
    assert_eq!(strip(&a), strip(&b));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn accepted_iterates_descend_and_stay_feasible(
        exponent in -5.0f64..0.0,
        n in prop::sample::select(vec![16usize, 32]),
        doubling in any::<bool>(),
        seed in any::<u64>(),
        random_start in any::<bool>(),
    ) {
        let alpha = 10f64.powf(exponent);
        let m = model(alpha, 512);
        let cfg = SlipConfig {
            n_cells: n,
            keep_iterates: true,
            radius_strategy: if doubling { RadiusStrategy::Doubling } else { RadiusStrategy::Reset },
            ..SlipConfig::default()
        };
        let v0 = if random_start {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Control::new(m.working_grid(n).unwrap(), (0..n).map(|_| rng.gen_range(-2..=2)).collect()).unwrap()
        } else {
            zero_control(&m, n).unwrap()
        };
        let res = run(&m, &cfg, &v0).unwrap();
        let summaries = res.accepted_iterates();
        prop_assert_eq!(summaries.len(), res.iterates.len());
        for (v, s) in res.iterates.iter().zip(&summaries) {
            prop_assert!(m.check(v).is_ok());
            prop_assert_eq!(v.total_variation(), s.tv);
        }
        for w in summaries.windows(2) {
            prop_assert!(w[1].objective < w[0].objective);
        }
        // total decrease is at least σ times the accepted predictions
        let pred_sum: f64 = res.log.iter().filter(|r| r.accepted).map(|r| r.pred).sum();
        let decrease = summaries[0].objective - summaries.last().unwrap().objective;
        prop_assert!(decrease >= cfg.sigma * pred_sum - 1e-15);
        // halvings per outer iteration are bounded by the grid
        let h = 2.0 / n as f64;
        let bound = (cfg.initial_radius.max(8.0) / h).log2().ceil() as usize + 1;
        prop_assert!(res.log.iter().all(|r| r.inner <= bound));
        for r in res.log.iter().filter(|r| r.accepted) {
            prop_assert!(r.pred > 0.0 && r.ared.unwrap() >= cfg.sigma * r.pred);
        }
    }
}

/// A switch whose window averages all share one strict sign admits an improving
/// neighbor. The descent move only exists for small enough cells, so the control
/// is refined onto the finest cells, where a one-unit move next to the switch
/// toward the other side keeps the variation unchanged.
fn check_implication(c: &Control, m: &ProblemInstance) -> Option<bool> {
    let report = sl_measure(c, m).unwrap();
    report.switches.iter().find(|s| s.strictly_violated())?;
    let fine = c.refine_to(m.finest_cells()).unwrap();
    Some(!verify_r_optimality(&fine, m, 1).unwrap().optimal_in_neighborhood)
}

#[test]
fn strict_window_violation_implies_improving_neighbor() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut tested = 0;
    for case in 0..60 {
        let n = [8usize, 12, 16][case % 3];
        let alpha = [1e-4, 1e-3, 1e-2][case % 3];
        let m = model(alpha, n * 16);
        let random = Control::new(m.working_grid(n).unwrap(), (0..n).map(|_| rng.gen_range(-2..=2)).collect()).unwrap();
        let cfg = SlipConfig {
            n_cells: n,
            initial_radius: 2.0 * 2.0 / n as f64,
            ..SlipConfig::default()
        };
        let solved = run(&m, &cfg, &random).unwrap().control;
        // shift one switch of the solution by a cell
        let mut values = solved.values().to_vec();
        if let Some(&b) = solved.switch_boundaries().first() {
            values[b] = values[b - 1];
        }
        let perturbed = Control::new(*solved.grid(), values).unwrap();
        for c in [&random, &solved, &perturbed] {
            if let Some(found) = check_implication(c, &m) {
                assert!(found, "no improving neighbor for {:?}", c.values());
                tested += 1;
            }
        }
    }
    assert!(tested >= 60);
}

#[test]
fn perturbed_solution_has_positive_gap() {
    let n = 12;
    let m = model(1e-4, 1536);
    let cfg = SlipConfig {
        n_cells: n,
        initial_radius: 2.0 * 2.0 / n as f64,
        ..SlipConfig::default()
    };
    let solved = run(&m, &cfg, &zero_control(&m, n).unwrap()).unwrap().control;
    assert!(verify_r_optimality(&solved, &m, 1).unwrap().optimal_in_neighborhood);
    // a two-level flip of one cell is undone within the same radius
    let mut values = solved.values().to_vec();
    values[5] = if values[5] <= 0 { values[5] + 2 } else { values[5] - 2 };
    let flipped = Control::new(*solved.grid(), values).unwrap();
    let res = verify_r_optimality(&flipped, &m, 2).unwrap();
    assert!(!res.optimal_in_neighborhood);
    let direct = m.total_objective(&flipped).unwrap() - m.total_objective(&res.best_neighbor).unwrap();
    assert!(res.gap > 0.0 && (res.gap - direct).abs() < 1e-14);
}
