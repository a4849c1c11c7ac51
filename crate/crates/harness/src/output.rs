//! Trajectory CSV, gnuplot `.dat` files and run summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use obpc::control::SimulationResult;

use crate::scenario::Scenario;
use crate::Outcome;

/// `‖x‖` bound that counts as converged from [`SETTLE_TIME`] on.
pub const CONVERGED_NORM: f64 = 0.5;
pub const SETTLE_TIME: f64 = 10.0;
/// Window for counting local maxima of `‖x‖`.
pub const OSCILLATION_WINDOW: f64 = 20.0;

const EPS: f64 = 1e-9;

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| num(*x)).collect();
    format!("[{}]", items.join(", "))
}

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn csv_header(r: &SimulationResult) -> Vec<String> {
    let n = r.plant.state_dim();
    let m = r.controls.first().map_or(0, Vec::len);
    let p = r.outputs.state_dim();
    let mut h = vec!["t".to_string()];
    h.extend(indexed("x", n));
    h.extend(indexed("xi", n));
    h.extend(indexed("u", m));
    if p == 1 {
        h.push("y".into());
    } else {
        h.extend(indexed("y", p));
    }
    h.push("norm_x".into());
    h.push("norm_err".into());
    h
}

/// Control held on the sampling interval that starts at or before sample
/// `i`; the final sample repeats the last interval's value.
pub fn control_at(r: &SimulationResult, i: usize) -> Vec<f64> {
    if r.controls.is_empty() {
        return Vec::new();
    }
    let j = (i / r.grid.substeps()).min(r.controls.len() - 1);
    r.controls[j].clone()
}

pub fn write_trajectory_csv(path: &Path, r: &SimulationResult) -> Outcome<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(csv_header(r))?;
    let err = r.error_norms();
    for (i, t) in r.plant.times().enumerate() {
        let x = r.plant.state(i);
        let mut row = vec![num(t)];
        row.extend(x.iter().map(|v| num(*v)));
        row.extend(r.observer.state(i).iter().map(|v| num(*v)));
        row.extend(control_at(r, i).iter().map(|v| num(*v)));
        row.extend(r.outputs.state(i).iter().map(|v| num(*v)));
        row.push(num(euclid(x)));
        row.push(num(err[i]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn dat(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Outcome<()> {
    let mut s = format!("# {}\n", header.join(" "));
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| num(*v)).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

const GNUPLOT: &str = r#"# gnuplot plot.gp  (writes trajectories.png)
set terminal pngcairo size 1200,900
set output 'trajectories.png'
set multiplot layout 2,2
set xlabel 't'
set grid

set title 'plant state'
plot for [i=2:3] 'state.dat' using 1:i with lines title columnhead(i)

set title 'observer state'
plot for [i=2:3] 'observer.dat' using 1:i with lines title columnhead(i)

set title 'control'
plot for [i=2:3] 'control.dat' using 1:i with steps title columnhead(i)

set title 'norms'
set logscale y
plot 'norms.dat' using 1:2 with lines title 'norm_x', \
     'norms.dat' using 1:3 with lines title 'norm_err'
unset multiplot
"#;

/// `state.dat`, `observer.dat`, `control.dat`, `norms.dat` and `plot.gp`.
pub fn write_plot_data(dir: &Path, r: &SimulationResult) -> Outcome<()> {
    let n = r.plant.state_dim();
    let with_t = |names: Vec<String>| {
        let mut h = vec!["t".to_string()];
        h.extend(names);
        h
    };
    let times: Vec<f64> = r.plant.times().collect();
    let sample = |traj: &obpc::Trajectory, i: usize| {
        let mut row = vec![times[i]];
        row.extend_from_slice(traj.state(i));
        row
    };
    dat(
        &dir.join("state.dat"),
        &with_t(indexed("x", n)),
        (0..times.len()).map(|i| sample(&r.plant, i)),
    )?;
    dat(
        &dir.join("observer.dat"),
        &with_t(indexed("xi", n)),
        (0..times.len()).map(|i| sample(&r.observer, i)),
    )?;

    let m = r.controls.first().map_or(0, Vec::len);
    let period = r.grid.period();
    let mut steps: Vec<Vec<f64>> = r
        .controls
        .iter()
        .enumerate()
        .map(|(j, u)| {
            let mut row = vec![j as f64 * period];
            row.extend_from_slice(u);
            row
        })
        .collect();
    if let Some(last) = r.controls.last() {
        let mut row = vec![r.controls.len() as f64 * period];
        row.extend_from_slice(last);
        steps.push(row);
    }
    dat(
        &dir.join("control.dat"),
        &with_t(indexed("u", m)),
        steps.into_iter(),
    )?;

    let err = r.error_norms();
    let norms = r.plant.norms();
    dat(
        &dir.join("norms.dat"),
        &with_t(vec!["norm_x".into(), "norm_err".into()]),
        (0..times.len()).map(|i| vec![times[i], norms[i], err[i]]),
    )?;
    fs::write(dir.join("plot.gp"), GNUPLOT)?;
    Ok(())
}

/// Qualitative checks on a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct Flags {
    pub first_control_zero: bool,
    /// `None` when the run ends before [`SETTLE_TIME`].
    pub converged: Option<bool>,
    pub local_maxima: usize,
    pub oscillatory: bool,
}

pub fn strict_maxima(series: &[f64]) -> usize {
    series
        .windows(3)
        .filter(|w| w[1] > w[0] && w[1] > w[2])
        .count()
}

pub fn flags(r: &SimulationResult) -> Flags {
    let norms = r.plant.norms();
    let times: Vec<f64> = r.plant.times().collect();
    let converged = (r.plant.end_time() >= SETTLE_TIME - EPS).then(|| {
        times
            .iter()
            .zip(&norms)
            .filter(|(t, _)| **t >= SETTLE_TIME - EPS)
            .all(|(_, v)| *v <= CONVERGED_NORM)
    });
    let window: Vec<f64> = times
        .iter()
        .zip(&norms)
        .filter(|(t, _)| **t <= OSCILLATION_WINDOW + EPS)
        .map(|(_, v)| *v)
        .collect();
    let local_maxima = strict_maxima(&window);
    Flags {
        first_control_zero: r
            .controls
            .first()
            .is_some_and(|u| u.iter().all(|v| *v == 0.0)),
        converged,
        local_maxima,
        oscillatory: local_maxima >= 2,
    }
}

fn plant_name(s: &Scenario) -> String {
    toml::Value::try_from(s.plant)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn summary(s: &Scenario, r: &SimulationResult, wall: Duration) -> String {
    let f = flags(r);
    let norms = r.plant.norms();
    let err = r.error_norms();
    let mut out = String::new();
    let scheme = match r.scheme {
        obpc::control::Scheme::Obpc => "obpc",
        obpc::control::Scheme::StandardMpc => "standard_mpc",
    };
    let x0 = euclid(r.plant.state(0));
    let last = *norms.last().unwrap_or(&0.0);
    let _ = writeln!(out, "plant = {}", plant_name(s));
    let _ = writeln!(out, "scheme = {scheme}");
    let _ = writeln!(out, "seed = {}", s.seed);
    let _ = writeln!(out, "steps = {}", r.controls.len());
    let _ = writeln!(out, "final_time = {}", num(r.plant.end_time()));
    let _ = writeln!(out, "final_norm_x = {}", num(last));
    let _ = writeln!(out, "final_norm_err = {}", num(*err.last().unwrap_or(&0.0)));
    let _ = writeln!(
        out,
        "max_norm_x = {}",
        num(norms.iter().copied().fold(0.0, f64::max))
    );
    let _ = writeln!(
        out,
        "first_control = {}",
        list(r.controls.first().map_or(&[][..], |u| u))
    );
    let _ = writeln!(out, "first_control_zero = {}", f.first_control_zero);
    let converged = f
        .converged
        .map_or("undetermined".to_string(), |c| c.to_string());
    let _ = writeln!(out, "converged = {converged}");
    let _ = writeln!(out, "local_maxima = {}", f.local_maxima);
    let _ = writeln!(out, "oscillatory = {}", f.oscillatory);
    let _ = writeln!(out, "growth = {}", last > x0);
    if !r.prediction_mismatch.is_empty() {
        let worst = r.prediction_mismatch.iter().copied().fold(0.0, f64::max);
        let _ = writeln!(out, "prediction_mismatch_max = {}", num(worst));
    }
    let _ = writeln!(out, "wall_clock_s = {:.3}", wall.as_secs_f64());
    let _ = writeln!(out, "\n# step t cost evaluations wall_ms");
    for (j, c) in r.costs.iter().enumerate() {
        let _ = writeln!(
            out,
            "{j} {} {} {} {:.3}",
            num(j as f64 * r.grid.period()),
            num(*c),
            r.evaluations.get(j).copied().unwrap_or(0),
            r.wall_clock.get(j).map_or(0.0, |d| d.as_secs_f64() * 1e3),
        );
    }
    out
}
