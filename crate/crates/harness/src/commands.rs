use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use obpc::control::{run, run_many, Scheme, SimulationResult};
use obpc::stability::{
    certify_practical_stability, fit_rho_envelope, stability_report, theorem31_bound_check,
    theorem31_constants,
};
use obpc::{ExamplePlant, ExecMode};

use crate::output::{flags, num, summary, write_plot_data, write_trajectory_csv, Flags};
use crate::scenario::{emit_scenario, load_scenario, Scenario};
use crate::sweep::{load_sweep, SweepSpec};
use crate::{Failure, Outcome};

fn prepare_dir(dir: &Path) -> Outcome<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn with_seed(mut s: Scenario, seed: Option<u64>) -> Scenario {
    if let Some(seed) = seed {
        s.seed = seed;
    }
    s
}

fn execute(s: &Scenario, dir: &Path) -> Outcome<(SimulationResult, Flags)> {
    prepare_dir(dir)?;
    fs::write(dir.join("scenario.toml"), emit_scenario(s))?;
    let lp = s.build_with(ExecMode::best_available())?;
    let clock = Instant::now();
    let r = run(&lp, s.scheme)?;
    let wall = clock.elapsed();
    write_trajectory_csv(&dir.join("trajectory.csv"), &r)?;
    fs::write(dir.join("summary.txt"), summary(s, &r, wall))?;
    let f = flags(&r);
    let (first, last) = (r.plant.norms()[0], *r.plant.norms().last().unwrap_or(&0.0));
    if last > first {
        eprintln!("warning: state norm grew from {first:.6e} to {last:.6e} over the run");
    }
    Ok((r, f))
}

pub fn cmd_simulate(scenario: &Path, out: &Path, seed: Option<u64>) -> Outcome<Flags> {
    let s = with_seed(load_scenario(scenario)?, seed);
    execute(&s, out).map(|(_, f)| f)
}

pub fn example_plant(example: u8) -> Outcome<ExamplePlant> {
    match example {
        1 => Ok(ExamplePlant::One),
        2 => Ok(ExamplePlant::Two),
        other => Err(Failure::config(format!("unknown example {other}"))),
    }
}

/// Span of the built-in reproduction runs.
pub fn reference_span(which: ExamplePlant) -> f64 {
    match which {
        ExamplePlant::One => 15.0,
        ExamplePlant::Two => 20.0,
    }
}

pub fn cmd_reproduce(
    example: u8,
    scheme: Scheme,
    out: &Path,
    seed: Option<u64>,
    span: Option<f64>,
) -> Outcome<Flags> {
    let which = example_plant(example)?;
    let mut s = with_seed(Scenario::example(which, scheme), seed);
    s.span = span.unwrap_or_else(|| reference_span(which));
    let s = Scenario::from_file(s.to_file())?;
    let (r, f) = execute(&s, out)?;
    write_plot_data(out, &r)?;
    Ok(f)
}

fn complex_list(v: &[nalgebra::Complex<f64>]) -> String {
    let items: Vec<String> = v
        .iter()
        .map(|c| {
            if c.im == 0.0 {
                num(c.re)
            } else {
                format!(
                    "{}{}{}i",
                    num(c.re),
                    if c.im < 0.0 { "-" } else { "+" },
                    num(c.im.abs())
                )
            }
        })
        .collect();
    format!("[{}]", items.join(", "))
}

fn matrix_text(m: &nalgebra::DMatrix<f64>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| {
            format!(
                "[{}]",
                r.iter().map(|v| num(*v)).collect::<Vec<_>>().join(", ")
            )
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

/// Stability data as `key = value` lines; inapplicable certificates are
/// reported in the text, not as errors.
pub fn stability_text(s: &Scenario) -> Outcome<String> {
    let obs = s.observer(0.0)?;
    let nt = s.period * s.horizon as f64;
    let mut out = String::new();
    let _ = writeln!(out, "lambda = {}", num(s.lambda));
    let _ = writeln!(out, "nt = {}", num(nt));
    let report = match stability_report(&obs, nt) {
        Ok(r) => r,
        Err(e @ obpc::Error::CertificateInapplicable(_)) => {
            let _ = writeln!(out, "certificate = inapplicable: {e}");
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    };
    let _ = writeln!(out, "a_cl = {}", matrix_text(&report.a_cl));
    let _ = writeln!(
        out,
        "a_cl_eigenvalues = {}",
        complex_list(&report.a_cl_eigenvalues)
    );
    let hurwitz = report.a_cl_eigenvalues.iter().all(|e| e.re < 0.0);
    let _ = writeln!(out, "a_cl_hurwitz = {hurwitz}");
    match &report.lyapunov {
        Ok(sol) => {
            let _ = writeln!(out, "lyapunov_p = {}", matrix_text(&sol.p));
            let _ = writeln!(out, "lyapunov_residual = {}", num(sol.residual));
        }
        Err(msg) => {
            let _ = writeln!(out, "lyapunov = inapplicable: {msg}");
        }
    }
    let _ = writeln!(out, "delay_matrix = {}", matrix_text(&report.delay.matrix));
    let _ = writeln!(
        out,
        "delay_matrix_eigenvalues = {}",
        complex_list(&report.delay.eigenvalues)
    );
    let _ = writeln!(out, "singular_inverse = {}", report.delay.singular_inverse);
    let sv: Vec<String> = report
        .delay
        .bracket_singular_values
        .iter()
        .map(|v| num(*v))
        .collect();
    let _ = writeln!(out, "bracket_singular_values = [{}]", sv.join(", "));
    match &report.weighted_eigenvalues {
        Some(w) => {
            let _ = writeln!(out, "weighted_delay_eigenvalues = {}", complex_list(w));
        }
        None => {
            let _ = writeln!(out, "weighted_delay_eigenvalues = unavailable");
        }
    }
    match report.alpha_coefficients {
        Some((a1, a2)) => {
            let _ = writeln!(out, "alpha1_coefficient = {}", num(a1));
            let _ = writeln!(out, "alpha2_coefficient = {}", num(a2));
        }
        None => {
            let _ = writeln!(out, "alpha_coefficients = unavailable");
        }
    }
    Ok(out)
}

pub fn cmd_stability(example: Option<u8>, scenario: Option<&Path>, out: &Path) -> Outcome<()> {
    let (label, s) = match (example, scenario) {
        (Some(e), None) => (
            format!("example = {e}\n"),
            Scenario::example(example_plant(e)?, Scheme::Obpc),
        ),
        (None, Some(p)) => (
            format!("scenario = {:?}\n", p.display().to_string()),
            load_scenario(p)?,
        ),
        _ => {
            return Err(Failure::config(
                "give exactly one of --example or --scenario",
            ))
        }
    };
    let text = label + &stability_text(&s)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        prepare_dir(parent)?;
    }
    fs::write(out, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub succeeded: usize,
    pub failed: usize,
    pub aggregate: String,
}

/// Per-run lines, the practical-stability estimate and the bound check.
/// Nothing timing-dependent goes in, so the text is identical across
/// execution modes.
pub fn sweep_aggregate(spec: &SweepSpec, results: &[obpc::Result<SimulationResult>]) -> String {
    let mut out = String::new();
    let ok: Vec<SimulationResult> = results
        .iter()
        .filter_map(|r| r.as_ref().ok().cloned())
        .collect();
    let _ = writeln!(out, "runs = {}", results.len());
    let _ = writeln!(out, "succeeded = {}", ok.len());
    let _ = writeln!(out, "failed = {}", results.len() - ok.len());
    let _ = writeln!(out, "radius = {}", num(spec.radius));
    for (i, ((x0, xi0), r)) in spec.initial.iter().zip(results).enumerate() {
        let status = match r {
            Ok(r) => format!(
                "ok final_norm_x={}",
                num(*r.plant.norms().last().unwrap_or(&0.0))
            ),
            Err(e) => format!("failed {e}"),
        };
        let _ = writeln!(out, "run.{i:03} = x0={x0:?} xi0={xi0:?} {status}");
    }
    if ok.is_empty() {
        let _ = writeln!(out, "certificate = unavailable: no successful runs");
        return out;
    }
    let est = match certify_practical_stability(&ok, spec.radius) {
        Ok(e) => e,
        Err(e) => {
            let _ = writeln!(out, "certificate = unavailable: {e}");
            return out;
        }
    };
    let _ = writeln!(out, "certificate.delta1 = {}", num(est.delta1));
    let _ = writeln!(out, "certificate.delta2 = {}", num(est.delta2));
    let _ = writeln!(out, "certificate.violations = {}", est.violations);
    match est.beta() {
        Some(b) => {
            let _ = writeln!(out, "certificate.beta_c = {}", num(b.c));
            let _ = writeln!(out, "certificate.beta_sigma = {}", num(b.sigma));
        }
        None => {
            let _ = writeln!(out, "certificate.beta = {:?}", est.envelope);
        }
    }
    let _ = writeln!(out, "certificate.passed = {}", est.passed());

    let _ = writeln!(out, "bound.nu = {}", num(spec.nu));
    let _ = writeln!(out, "bound.alpha = {}", num(spec.alpha));
    let _ = writeln!(out, "bound.delta1 = {}", num(spec.bound_delta1));
    let (bar_delta1, bar_delta2) =
        match theorem31_constants(spec.nu, spec.alpha, spec.bound_delta1, est.delta2) {
            Ok(c) => c,
            Err(e) => {
                let _ = writeln!(out, "bound = inapplicable: {e}");
                return out;
            }
        };
    let _ = writeln!(out, "bound.bar_delta1 = {}", num(bar_delta1));
    let _ = writeln!(out, "bound.bar_delta2 = {}", num(bar_delta2));
    let beta_bar = match fit_rho_envelope(&ok, bar_delta2).map(|e| (e.fit(), e)) {
        Ok((Some(b), _)) => b,
        Ok((None, e)) => {
            let _ = writeln!(out, "bound = inapplicable: no envelope ({e:?})");
            return out;
        }
        Err(e) => {
            let _ = writeln!(out, "bound = inapplicable: {e}");
            return out;
        }
    };
    let _ = writeln!(out, "bound.beta_bar_c = {}", num(beta_bar.c));
    let _ = writeln!(out, "bound.beta_bar_sigma = {}", num(beta_bar.sigma));
    match theorem31_bound_check(&ok, spec.nu, spec.bound_delta1, est.delta2, &beta_bar) {
        Ok(c) => {
            let _ = writeln!(out, "bound.violations = {}", c.violations);
            let _ = writeln!(out, "bound.worst_slack = {}", num(c.worst_slack));
            let _ = writeln!(out, "bound.passed = {}", c.passed);
        }
        Err(e) => {
            let _ = writeln!(out, "bound = inapplicable: {e}");
        }
    }
    out
}

pub fn run_sweep(spec: &SweepSpec, exec: ExecMode) -> Outcome<Vec<obpc::Result<SimulationResult>>> {
    let scenarios = spec
        .scenarios()
        .iter()
        .map(|s| s.build())
        .collect::<Outcome<Vec<_>>>()?;
    Ok(run_many(&scenarios, spec.base.scheme, exec))
}

pub fn cmd_sweep(
    path: &Path,
    out: &Path,
    seed: Option<u64>,
    exec: ExecMode,
) -> Outcome<SweepOutcome> {
    let mut spec = load_sweep(path)?;
    spec.base = with_seed(spec.base, seed);
    prepare_dir(out)?;
    fs::write(out.join("base.toml"), emit_scenario(&spec.base))?;
    let clock = Instant::now();
    let results = run_sweep(&spec, exec)?;
    eprintln!("{} runs in {:.1?}", results.len(), clock.elapsed());
    for (i, r) in results.iter().enumerate() {
        if let Ok(r) = r {
            write_trajectory_csv(&out.join(format!("run_{i:03}.csv")), r)?;
        }
    }
    let aggregate = sweep_aggregate(&spec, &results);
    fs::write(out.join("aggregate.txt"), &aggregate)?;
    let failed = results.iter().filter(|r| r.is_err()).count();
    let succeeded = results.len() - failed;
    if succeeded == 0 {
        let first = results
            .into_iter()
            .find_map(|r| r.err())
            .expect("at least one run");
        let mut f: Failure = first.into();
        f.message = format!("all {failed} runs failed; first: {}", f.message);
        return Err(f);
    }
    Ok(SweepOutcome {
        succeeded,
        failed,
        aggregate,
    })
}
