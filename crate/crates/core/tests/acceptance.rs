// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use obpc::control::{
    cost_functional, obpc_step, optimize_horizon, predict_observer, run_many, run_obpc,
    run_standard_mpc, CostSpec, HorizonProblem, LoopScenario, MpcLoopState, OptimizerSettings,
    Scheme, SimulationResult,
};
use obpc::models::{check_a1_identity, fit_a2_envelope, gain_scaling};
use obpc::ode::rk4_integrate;
use obpc::stability::{
    build_delay_matrix, certify_practical_stability, eigenvalues, fit_rho_envelope, matrix_exp,
    solve_lyapunov, theorem31_bound_check, theorem31_constants, NormSeries,
};
use obpc::{
    ControlBox, ControlSequence, ExamplePlant, ExecMode, HistoryBuffer, LinearPlant,
    LuenbergerObserver, TimeGrid, DEFAULT_LAMBDA,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXAMPLES: [ExamplePlant; 2] = [ExamplePlant::One, ExamplePlant::Two];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let clock = Instant::now();
    let out = f();
    (out, clock.elapsed())
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn norms(r: &SimulationResult) -> Vec<f64> {
    (0..r.plant.len())
        .map(|i| euclid(r.plant.state(i)))
        .collect()
}

fn strict_maxima(series: &[f64]) -> usize {
    series
        .windows(3)
        .filter(|w| w[1] > w[0] && w[1] > w[2])
        .count()
}

fn max_state_gap(a: &SimulationResult, b: &SimulationResult, len: usize) -> f64 {
    (0..len)
        .map(|i| {
            let d: Vec<f64> = a
                .plant
                .state(i)
                .iter()
                .zip(b.plant.state(i))
                .map(|(p, q)| p - q)
                .collect();
            euclid(&d)
        })
        .fold(0.0, f64::max)
}

fn example(which: ExamplePlant, scheme: Scheme, x0: &[f64], span: f64) -> LoopScenario {
    LoopScenario::example(which, scheme, x0, span).expect("example scenario")
}

fn a_cl(which: ExamplePlant) -> DMatrix<f64> {
    LuenbergerObserver::example(which, DEFAULT_LAMBDA, 0.0)
        .unwrap()
        .error_matrix()
}

fn eigen_oracle() -> Outcome {
    let a = a_cl(ExamplePlant::One);
    let (eig, took) = timed(|| eigenvalues(&a).unwrap());
    let (tr, det) = (
        a[(0, 0)] + a[(1, 1)],
        a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)],
    );
    let disc = (tr * tr - 4.0 * det).sqrt();
    let oracle = [(tr - disc) / 2.0, (tr + disc) / 2.0];
    let err = eig
        .iter()
        .zip(oracle)
        .map(|(e, o)| (e.re - o).abs() + e.im.abs())
        .fold(0.0, f64::max);
    let target = eig
        .iter()
        .zip([-2.4, -0.8])
        .map(|(e, o)| (e.re - o).abs())
        .fold(0.0, f64::max);
    let pass = (tr + 3.2).abs() < 1e-12
        && (det - 1.92).abs() < 1e-12
        && err <= 1e-9
        && target <= 1e-9
        && took < Duration::from_millis(1);
    outcome(
        pass,
        format!(
            "eig = {:.12}, {:.12}; oracle err {err:.1e}; {took:?}",
            eig[0].re, eig[1].re
        ),
    )
}

fn lyapunov_certificate() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for which in EXAMPLES {
        let a = a_cl(which);
        let (sol, took) = timed(|| solve_lyapunov(&a));
        let Ok(sol) = sol else {
            return outcome(false, format!("{which:?}: {sol:?}"));
        };
        let residual = (&sol.p * &a + a.transpose() * &sol.p + DMatrix::identity(2, 2)).norm();
        let p = &sol.p;
        let pd = p[(0, 0)] > 0.0 && p[(0, 0)] * p[(1, 1)] - p[(0, 1)] * p[(1, 0)] > 0.0;
        pass &= residual <= 1e-10 && pd && took < Duration::from_millis(1);
        notes.push(format!("{which:?} residual {residual:.1e} {took:?}"));
    }
    outcome(pass, notes.join("; "))
}

fn singularity_finding() -> Outcome {
    let plant = LinearPlant::example(ExamplePlant::One);
    let lambda = gain_scaling(DEFAULT_LAMBDA, 2).unwrap();
    let k = DMatrix::from_column_slice(2, 1, &[1.0, 0.5]);
    let nt = 0.5;
    let d = build_delay_matrix(plant.a(), &lambda, &k, plant.c(), nt).unwrap();

    // rank-1 oracle: e^{M} = Id + M·(e^μ - 1)/μ with μ = tr M
    let m = &lambda * &k * plant.c() * nt;
    let mu = m.trace();
    let bracket = -(&m * ((mu.exp() - 1.0) / mu));
    let oracle_singular = bracket.column(1).amax() == 0.0;
    let exp_err = (matrix_exp(&m).unwrap() - (DMatrix::identity(2, 2) - &bracket)).amax();
    let pass = d.singular_inverse && oracle_singular && exp_err <= 1e-12;
    outcome(
        pass,
        format!("singular_inverse = {}, oracle bracket column 2 zero = {oracle_singular}, exp err {exp_err:.1e}", d.singular_inverse),
    )
}

fn a1_identity() -> Outcome {
    let grid = TimeGrid::new(0.1, 5, 20).unwrap();
    let n = grid.horizon_steps();
    let (worst, took) = timed(|| {
        let mut worst: f64 = 0.0;
        for which in EXAMPLES {
            let plant = LinearPlant::example(which);
            let ramp: Vec<f64> = (0..=n)
                .flat_map(|i| [11.0 - 0.1 * i as f64, 8.0 + 0.05 * i as f64])
                .collect();
            let history = HistoryBuffer::new(0.0, -(n as i64), grid.step(), 2, ramp).unwrap();
            let controls = [
                DVector::from_vec(vec![1.5, -2.0]),
                DVector::from_vec(vec![-4.0, 0.5]),
            ];
            for delay in [0.0, grid.horizon_span()] {
                let obs = LuenbergerObserver::example(which, DEFAULT_LAMBDA, delay).unwrap();
                let d = check_a1_identity(&plant, &obs, &grid, &history, &history, &controls, 10.0)
                    .unwrap();
                worst = worst.max(d);
            }
        }
        worst
    });
    outcome(
        worst <= 1e-9 && took < Duration::from_secs(1),
        format!("max deviation {worst:.2e}; {took:?}"),
    )
}

fn a2_envelope() -> Outcome {
    let a = a_cl(ExamplePlant::One);
    let grid = TimeGrid::new(0.1, 1, 20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA2);
    let mut series = Vec::new();
    while series.len() < 100 {
        let e: [f64; 2] = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        let r = euclid(&e);
        if r > 10.0 || r < 1e-3 {
            continue;
        }
        // error dynamics η' = (A - ΛKC)η integrated directly
        let path = rk4_integrate(
            |_, x, _, dx| {
                dx[0] = a[(0, 0)] * x[0] + a[(0, 1)] * x[1];
                dx[1] = a[(1, 0)] * x[0] + a[(1, 1)] * x[1];
            },
            &e,
            0.0,
            8.0,
            &grid,
            &ControlSequence::unforced(80),
        )
        .unwrap();
        let norms = (0..path.len()).map(|i| euclid(path.state(i))).collect();
        series.push(NormSeries::new(r, path.times().collect(), norms).unwrap());
    }
    match fit_a2_envelope(&series).unwrap().fit() {
        Some(fit) => outcome(
            fit.sigma >= 0.7,
            format!("c = {:.4}, sigma = {:.4}", fit.c, fit.sigma),
        ),
        None => outcome(false, "no envelope"),
    }
}

fn example_one(obpc: &SimulationResult, took: Duration) -> Outcome {
    let n = norms(obpc);
    let tail = obpc
        .plant
        .times()
        .zip(&n)
        .filter(|(t, _)| *t >= 10.0 - 1e-9)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    let mpc_scenario = example(ExamplePlant::One, Scheme::StandardMpc, &[11.0, 8.0], 10.0);
    let (mpc, mpc_took) = timed(|| run_standard_mpc(&mpc_scenario).unwrap());
    let first = &mpc.controls[0];
    let pass = tail <= 0.5
        && first.iter().all(|u| *u == 0.0)
        && took < Duration::from_secs(30)
        && mpc_took < Duration::from_secs(30);
    outcome(
        pass,
        format!("max |x| on [10, 15] = {tail:.2e}; MPC first control {first:?}; runs {took:.1?} / {mpc_took:.1?}"),
    )
}

fn example_two() -> Outcome {
    let run = |scheme| {
        let sc = example(ExamplePlant::Two, scheme, &[11.0, 8.0], 20.0);
        timed(|| obpc::control::run(&sc, scheme).unwrap())
    };
    let (obpc, t1) = run(Scheme::Obpc);
    let (mpc, t2) = run(Scheme::StandardMpc);
    let (a, b) = (strict_maxima(&norms(&obpc)), strict_maxima(&norms(&mpc)));
    let pass = a >= 2 && b < a && t1 < Duration::from_secs(30) && t2 < Duration::from_secs(30);
    outcome(
        pass,
        format!("strict maxima OBPC {a}, MPC {b}; runs {t1:.1?} / {t2:.1?}"),
    )
}

fn prediction_consistency() -> Outcome {
    let sc = example(ExamplePlant::One, Scheme::Obpc, &[11.0, 8.0], 10.0);
    let (plant, obs, problem) = (sc.plant.as_ref(), sc.observer.as_ref(), &sc.problem);
    let grid = &problem.grid;
    let mut state = MpcLoopState::constant(plant, grid, &sc.x0, &sc.xi0).unwrap();
    let mut worst: f64 = 0.0;
    let steps = grid.periods_in(sc.span).unwrap();
    for _ in 0..steps {
        let before = state.clone();
        let out = obpc_step(&mut state, plant, obs, problem, None).unwrap();
        let seq =
            ControlSequence::from_flat(state.previous().unwrap().to_vec(), problem.bounds.clone())
                .unwrap();
        let predicted = predict_observer(&before, &seq, obs, grid).unwrap();
        for i in 0..out.observer_segment.len() {
            let d: Vec<f64> = out
                .observer_segment
                .state(i)
                .iter()
                .zip(predicted.state(i))
                .map(|(a, b)| a - b)
                .collect();
            worst = worst.max(euclid(&d));
        }
    }
    outcome(
        worst <= 1e-12,
        format!("{steps} steps, max mismatch {worst:.1e}"),
    )
}

fn optimizer_oracle() -> Outcome {
    let plant = LinearPlant::new(
        DMatrix::from_element(1, 1, 0.3),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
    )
    .unwrap();
    let grid = TimeGrid::new(0.25, 1, 20).unwrap();
    let obs = LuenbergerObserver::new(
        plant.clone(),
        1.0,
        DMatrix::from_element(1, 1, 1.5),
        grid.horizon_span(),
    )
    .unwrap();
    let cost = CostSpec::new(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 0.1),
        DMatrix::from_element(1, 1, 1.0),
    )
    .unwrap();
    let settings = OptimizerSettings {
        tolerance: 1e-12,
        ..OptimizerSettings::default()
    };
    let problem = HorizonProblem::new(
        grid.clone(),
        cost,
        ControlBox::symmetric(1, 100.0).unwrap(),
        settings,
    )
    .unwrap();
    let n = grid.horizon_steps();
    let ph = HistoryBuffer::new(
        0.0,
        -(n as i64),
        grid.step(),
        1,
        (0..=n).map(|i| 2.0 + 0.1 * i as f64).collect(),
    )
    .unwrap();
    let oh = HistoryBuffer::constant(&[-1.0], 0.0, -(n as i64), grid.step(), n + 1).unwrap();
    let state = MpcLoopState::from_histories(&plant, &grid, oh, &ph).unwrap();
    let found = optimize_horizon(&state, &obs, &problem)
        .unwrap()
        .sequence
        .as_flat()[0];

    let (lo, hi, points) = (-25.0, 25.0, 1_000_000);
    let mut best = (f64::INFINITY, f64::NAN);
    for i in 0..points {
        let v = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let seq = ControlSequence::from_flat(vec![v], problem.bounds.clone()).unwrap();
        let path = predict_observer(&state, &seq, &obs, &grid).unwrap();
        let j = cost_functional(&path, &seq, &problem.cost, &grid).unwrap();
        if j < best.0 {
            best = (j, v);
        }
    }
    let interior = best.1 > lo + 1.0 && best.1 < hi - 1.0;
    let gap = (found - best.1).abs();
    outcome(
        gap <= 1e-4 && interior,
        format!("optimizer {found:.6}, grid {:.6}, gap {gap:.1e}", best.1),
    )
}

fn sweep() -> Outcome {
    let radius = 12.0;
    let lattice: Vec<[f64; 2]> = (0..5)
        .flat_map(|i| (0..5).map(move |j| [-8.4 + 4.2 * i as f64, -8.4 + 4.2 * j as f64]))
        .collect();
    assert!(lattice.iter().all(|p| euclid(p) <= radius));
    let scenarios: Vec<_> = lattice
        .iter()
        .map(|x0| example(ExamplePlant::One, Scheme::Obpc, x0, 10.0))
        .collect();
    let (results, took) = timed(|| run_many(&scenarios, Scheme::Obpc, ExecMode::best_available()));
    let results: Vec<_> = match results.into_iter().collect::<Result<_, _>>() {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let est = certify_practical_stability(&results, radius).unwrap();
    let (nu, alpha, delta1) = (15.0, 1.0, 1.0);
    let (_, bar_delta2) = theorem31_constants(nu, alpha, delta1, est.delta2).unwrap();
    let beta_bar = fit_rho_envelope(&results, bar_delta2).unwrap().fit();
    let check =
        beta_bar.map(|b| theorem31_bound_check(&results, nu, delta1, est.delta2, &b).unwrap());
    let bound_ok = check
        .as_ref()
        .is_some_and(|c| c.passed && c.bar_delta2 == bar_delta2);
    let pass = est.passed() && est.delta2 <= 0.5 && bound_ok && took < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "violations {}, delta2 {:.2e}, beta {:?}, beta_bar {:?}, bound slack {:?}; {took:.1?}",
            est.violations,
            est.delta2,
            est.beta(),
            beta_bar,
            check.map(|c| c.worst_slack)
        ),
    )
}

fn emulation(nominal: &SimulationResult) -> Outcome {
    let base = example(ExamplePlant::One, Scheme::Obpc, &[11.0, 8.0], 5.0);
    let h = base.problem.grid.step();
    let runs: Vec<_> = [1.0, 2.0, 4.0]
        .iter()
        .map(|f| {
            let mut s = base.clone();
            s.output_sample_period = Some(f * h);
            run_obpc(&s).unwrap()
        })
        .collect();
    let len = runs[0].plant.len();
    let exact = max_state_gap(&runs[0], nominal, len);
    let (d2, d4) = (
        max_state_gap(&runs[1], &runs[0], len),
        max_state_gap(&runs[2], &runs[0], len),
    );
    outcome(
        exact == 0.0 && d2 < d4,
        format!("T^=h vs nominal {exact:.1e}; deviation 2h {d2:.3e} < 4h {d4:.3e}"),
    )
}

fn integrator_order() -> Outcome {
    let err = |k: usize| {
        let grid = TimeGrid::new(1.0, 1, k).unwrap();
        let path = rk4_integrate(
            |_, x, _, dx| dx[0] = -x[0],
            &[1.0],
            0.0,
            1.0,
            &grid,
            &ControlSequence::unforced(1),
        )
        .unwrap();
        path.times()
            .enumerate()
            .map(|(i, t)| (path.state(i)[0] - (-t).exp()).abs())
            .fold(0.0, f64::max)
    };
    let ratios: Vec<f64> = [10, 20, 40].iter().map(|k| err(*k) / err(2 * k)).collect();
    outcome(
        ratios.iter().all(|r| *r >= 8.0),
        format!("error ratios {ratios:.2?}"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{tag} {id:>2} {name}: {}", o.detail);
    };

    report(1, "eigenvalue oracle", eigen_oracle());
    report(2, "lyapunov certificate", lyapunov_certificate());
    report(3, "singularity finding", singularity_finding());
    report(4, "matched-history identity", a1_identity());
    report(5, "non-retarded error envelope", a2_envelope());

    let ex1 = example(ExamplePlant::One, Scheme::Obpc, &[11.0, 8.0], 15.0);
    let (obpc1, took) = timed(|| run_obpc(&ex1).unwrap());
    report(6, "example 1 reproduction", example_one(&obpc1, took));
    report(7, "example 2 reproduction", example_two());
    report(8, "prediction consistency", prediction_consistency());
    report(9, "optimizer oracle", optimizer_oracle());
    report(10, "practical stability sweep", sweep());
    report(11, "output emulation", emulation(&obpc1));
    report(12, "integrator order", integrator_order());

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
