//! Acceptance gate: every criterion runs at its stated tolerance and time limit
//! and reports one PASS/FAIL line. The test fails if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slip_cli::experiments::{run_experiment, ExperimentKind, ExperimentSpec, SolverSettings, Variant};
use slip_core::model::as_real;
use slip_core::slip::{write_log_csv, zero_control};
use slip_core::trip::{budget_units, solve_bruteforce, solve_dp};
use slip_core::{
    run, verify_r_optimality, Control, InstanceConfig, LevelSet, ProblemInstance, SlipConfig, SlipResult,
    TerminationReason, TripInstance, UniformGrid,
};

const REFERENCE_J_N32: f64 = 9.081e-3;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn reference_model() -> ProblemInstance {
    InstanceConfig::default().build().unwrap()
}

fn reference_run(model: &ProblemInstance, keep: bool) -> SlipResult {
    let cfg = SlipConfig {
        n_cells: 32,
        keep_iterates: keep,
        ..SlipConfig::default()
    };
    run(model, &cfg, &zero_control(model, 32).unwrap()).unwrap()
}

fn subproblem_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let alphas = [1e-4, 1e-2, 1.0];
    let mut minimizer_mismatch = 0;
    let mut worst = 0.0f64;
    let count = 1200;
    for _ in 0..count {
        let n = rng.gen_range(1..=8);
        let m = rng.gen_range(2..=3);
        let mut levels: Vec<i64> = Vec::new();
        while levels.len() < m {
            let l = rng.gen_range(-3..=3);
            if !levels.contains(&l) {
                levels.push(l);
            }
        }
        levels.sort_unstable();
        let center: Vec<i64> = (0..n).map(|_| levels[rng.gen_range(0..m)]).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let alpha = alphas[rng.gen_range(0..3)];
        let h = 2.0 / n as f64;
        let budget = rng.gen_range(0..=8u64);
        let radius = (budget as f64 + rng.gen_range(0.0..0.999)) * h;
        let inst = TripInstance::new(
            Control::new(UniformGrid::new(-1.0, 1.0, n).unwrap(), center).unwrap(),
            c,
            radius,
            alpha,
            LevelSet::new(levels).unwrap(),
        )
        .unwrap();
        assert!(inst.budget() <= 8);
        let dp = solve_dp(&inst).unwrap();
        let bf = solve_bruteforce(&inst).unwrap();
        worst = worst.max((dp.objective - bf.objective).abs());
        if dp.minimizer != bf.minimizer {
            minimizer_mismatch += 1;
        }
    }
    ensure(worst <= 1e-12, || format!("objective difference {worst:e}"))?;
    ensure(minimizer_mismatch == 0, || format!("{minimizer_mismatch} minimizers differ"))?;
    Ok(format!("{count} instances, max |Δobj| = {worst:e}, identical minimizers"))
}

fn analytic_objective() -> Check {
    let model = reference_model();
    let f0 = model
        .objective(&Control::constant(model.working_grid(32).unwrap(), 0))
        .unwrap();
    ensure((f0 - 0.08).abs() <= 1e-10, || format!("F(0) = {f0:.15}"))?;
    Ok(format!("F(0) = {f0:.15}"))
}

fn gradient_correctness() -> Check {
    let model = reference_model();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_fd = 0.0f64;
    let mut directions = 0;
    for &n in &[16usize, 32, 64, 128, 256] {
        for _ in 0..24 {
            let v: Vec<i64> = (0..n).map(|_| rng.gen_range(-2..=2)).collect();
            let v = Control::new(model.working_grid(n).unwrap(), v).unwrap();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eval = model.evaluate(&v).unwrap();
            let pairing: f64 = model
                .gradient_cells(&eval, n)
                .unwrap()
                .iter()
                .zip(&w)
                .map(|(a, b)| a * b)
                .sum();
            let eps = 1e-4;
            let base = as_real(&v);
            let shift = |s: f64| -> Vec<f64> { base.iter().zip(&w).map(|(x, d)| x + s * d).collect() };
            let fd = (model.evaluate_values(&shift(eps)).unwrap().objective
                - model.evaluate_values(&shift(-eps)).unwrap().objective)
                / (2.0 * eps);
            worst_fd = worst_fd.max((fd - pairing).abs() / pairing.abs());
            directions += 1;
        }
    }
    ensure(directions >= 100 && worst_fd <= 1e-5, || format!("fd relative error {worst_fd:e}"))?;

    let nodes = model.quadrature().all_nodes();
    let mut worst_adj = 0.0f64;
    for _ in 0..100 {
        let n = [32usize, 256, 2048][rng.gen_range(0..3)];
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (a, b) = (rng.gen_range(1.0..8.0), rng.gen_range(0.0..6.0));
        let w: Vec<f64> = nodes.iter().map(|&t| (a * t + b).cos()).collect();
        let lhs = model.inner(&model.apply_k(&v).unwrap(), &w);
        let rhs: f64 = v.iter().zip(model.adjoint_cells(&w, n).unwrap()).map(|(x, y)| x * y).sum();
        worst_adj = worst_adj.max((lhs - rhs).abs());
    }
    ensure(worst_adj <= 1e-8, || format!("adjoint mismatch {worst_adj:e}"))?;
    Ok(format!(
        "{directions} directions, max fd rel err {worst_fd:.2e}; max adjoint err {worst_adj:.2e}"
    ))
}

fn objective_reproduction() -> Check {
    let model = reference_model();
    let res = reference_run(&model, false);
    let j = res.objective();
    let rel = (j - REFERENCE_J_N32).abs() / REFERENCE_J_N32;
    ensure(j <= 1.1e-2 && rel <= 0.25, || format!("J = {j:.4e}, relative deviation {rel:.3}"))?;
    Ok(format!(
        "J = {j:.4e} (reference {REFERENCE_J_N32:.3e}, deviation {:.1}%), {:?}",
        100.0 * rel,
        res.termination
    ))
}

fn check_invariants(model: &ProblemInstance, res: &SlipResult) -> Result<(), String> {
    let alpha = model.alpha();
    ensure(res.iterates.len() == res.accepted_steps + 1, || "iterates missing".into())?;
    let mut last: Option<(f64, u64)> = None;
    for (i, v) in res.iterates.iter().enumerate() {
        model.check(v).map_err(|e| format!("iterate {i} infeasible: {e}"))?;
        let f = model.objective(v).unwrap();
        let j = f + alpha * v.total_variation() as f64;
        let logged = res.accepted_iterates()[i].objective;
        ensure((j - logged).abs() <= 1e-14, || format!("iterate {i}: J {j} vs logged {logged}"))?;
        // TV difference recovered from objective values alone must be an integer
        let tv_from_values = (j - f) / alpha;
        if let Some((jp, tvp)) = last {
            ensure(j < jp, || format!("iterate {i}: J {j} not below {jp}"))?;
            let diff = tv_from_values - tvp as f64;
            ensure((diff - diff.round()).abs() <= 1e-6 * (1.0 + tv_from_values.abs()), || {
                format!("iterate {i}: TV difference {diff} not integral")
            })?;
        }
        last = Some((j, v.total_variation()));
    }
    Ok(())
}

fn descent_and_integrality() -> Check {
    let model = reference_model();
    check_invariants(&model, &reference_run(&model, true))?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut runs = 1;
    let mut steps = 0;
    for &n in &[32usize, 64] {
        for _ in 0..5 {
            let alpha = 10f64.powf(rng.gen_range(-5.0..0.0));
            let m = model.with_alpha(alpha).unwrap();
            let cfg = SlipConfig {
                n_cells: n,
                keep_iterates: true,
                ..SlipConfig::default()
            };
            let res = run(&m, &cfg, &zero_control(&m, n).unwrap()).unwrap();
            check_invariants(&m, &res).map_err(|e| format!("N={n}, alpha={alpha:e}: {e}"))?;
            runs += 1;
            steps += res.accepted_steps;
        }
    }
    Ok(format!("{runs} runs, {steps} accepted steps checked"))
}

fn termination_certificate() -> Check {
    let n = 12;
    let model = InstanceConfig::default().with_finest_cells(1536).build().unwrap();
    let cfg = SolverSettings::default().config(Variant::R0, n, 2.0);
    let res = run(&model, &cfg, &zero_control(&model, n).unwrap()).unwrap();
    let h = 2.0 / n as f64;
    let r_units = match res.termination {
        TerminationReason::PredNonpositive => budget_units(res.final_radius, h),
        TerminationReason::RadiusBelowGrid => 1,
        TerminationReason::MaxIterations => return Err("hit the iteration limit".into()),
    };
    let check = verify_r_optimality(&res.control, &model, r_units).unwrap();
    ensure(check.optimal_in_neighborhood, || {
        format!("improving neighbor at r_units = {r_units}, gap {:e}", check.gap)
    })?;
    Ok(format!(
        "{:?}, r_units = {r_units}, {} neighbors, gap {:e}",
        res.termination, check.neighborhood_size, check.gap
    ))
}

fn stationarity_trend() -> Check {
    let model = reference_model();
    let cfg = SlipConfig {
        n_cells: 256,
        ..SlipConfig::default()
    };
    let res = run(&model, &cfg, &zero_control(&model, 256).unwrap()).unwrap();
    // accepted iterates; the zero start has no switches
    let seq: Vec<f64> = res.accepted_iterates()[1..].iter().map(|s| s.stationarity).collect();
    ensure(seq.len() >= 4, || format!("only {} accepted iterates", seq.len()))?;
    let early = seq[..3].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let last = *seq.last().unwrap();
    ensure(last < early, || format!("final {last:e} not below early max {early:e}"))?;
    let mut running = f64::INFINITY;
    let mut mins = Vec::new();
    for &s in &seq {
        running = running.min(s);
        mins.push(running);
    }
    ensure(mins.windows(2).all(|w| w[1] <= w[0]), || "running minimum increased".into())?;
    Ok(format!("{} iterates, early max {early:.3e}, final {last:.3e}", seq.len()))
}

fn sensitivity() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = ExperimentSpec::new(ExperimentKind::Sensitivity);
    spec.n_list = vec![12, 128];
    spec.alpha_list = vec![1e-5, 1.0];
    spec.samples = 5;
    spec.seed = 42;
    spec.r_list = vec![1, 2];
    let outcome = run_experiment(&spec, dir.path(), 4).unwrap();
    let mean = |alpha: f64| {
        let v: Vec<f64> = outcome
            .runs
            .iter()
            .filter(|r| r.summary.n == 128 && r.summary.alpha == alpha)
            .map(|r| r.summary.stationarity)
            .collect();
        assert_eq!(v.len(), 5);
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (small, large) = (mean(1e-5), mean(1.0));
    ensure(small > large, || format!("mean measure {small:e} at 1e-5 vs {large:e} at 1"))?;
    let gaps: Vec<f64> = outcome
        .runs
        .iter()
        .filter(|r| r.summary.n == 12 && r.summary.alpha == 1.0)
        .flat_map(|r| r.oracle.iter().map(|o| o.reported_gap))
        .collect();
    ensure(gaps.len() == 10, || format!("{} oracle rows", gaps.len()))?;
    ensure(gaps.iter().all(|&g| g == spec.relative_gap_floor), || format!("gaps {gaps:?}"))?;
    Ok(format!(
        "mean SL measure {small:.3e} (alpha 1e-5) > {large:.3e} (alpha 1); gaps at floor for r in {{1,2}}"
    ))
}

fn determinism() -> Check {
    let model = reference_model();
    let strip = |res: &SlipResult| -> String {
        let mut buf = Vec::new();
        write_log_csv(&res.log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let time_col = text.lines().next().unwrap().split(',').position(|c| c == "time_s").unwrap();
        text.lines()
            .map(|l| {
                l.split(',')
                    .enumerate()
                    .filter(|(i, _)| *i != time_col)
                    .map(|(_, c)| c)
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let a = strip(&reference_run(&model, false));
    let b = strip(&reference_run(&model, false));
    ensure(a == b, || "iteration logs differ".into())?;
    Ok(format!("{} log lines identical", a.lines().count()))
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, Duration, fn() -> Check)> = vec![
        ("1 subproblem exactness", Duration::from_secs(30), subproblem_exactness),
        ("2 analytic objective", Duration::from_secs(1), analytic_objective),
        ("3 gradient correctness", Duration::from_secs(30), gradient_correctness),
        ("4 objective reproduction N=32", Duration::from_secs(60), objective_reproduction),
        ("5 descent and integrality", Duration::from_secs(120), descent_and_integrality),
        ("6 termination certificate N=12", Duration::from_secs(300), termination_certificate),
        ("7 stationarity trend N=256", Duration::from_secs(600), stationarity_trend),
        ("8 sensitivity", Duration::from_secs(900), sensitivity),
        ("9 determinism", Duration::from_secs(120), determinism),
    ];
    println!();
    let mut failed = Vec::new();
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let verdict = match outcome {
            Ok(Ok(detail)) if elapsed <= limit => Ok(detail),
            Ok(Ok(detail)) => Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}")),
            Ok(Err(msg)) => Err(msg),
            Err(_) => Err("panicked".into()),
        };
        match verdict {
            Ok(detail) => println!("PASS  {name}  [{elapsed:.2?}]  {detail}"),
            Err(msg) => {
                println!("FAIL  {name}  [{elapsed:.2?}]  {msg}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
