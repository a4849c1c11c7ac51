//! Receding-horizon loops: OBPC with a retarded observer prediction, and the
//! standard scheme that forward-simulates a plant model from the estimate.
//!
//! All times live on the integer tick grid `t = tick·h` with origin 0. The
//! loop state keeps the observer path and the measured outputs over
//! `[t_j - NT, t_j]`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::control::cost::{horizon_cost, CostSpec};
use crate::control::emulation::subsample_and_interpolate_outputs;
use crate::control::kernel::{linear_observer_cost, linear_plant_cost, CostFn};
use crate::control::optimizer::{multistart, OptimizerSettings};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::models::{
    ExamplePlant, LinearPlant, LuenbergerObserver, ObserverModel, PlantModel, DEFAULT_LAMBDA,
};
use crate::ode::{
    norm, rk4_fixed, ControlBox, ControlSequence, HistoryBuffer, StageNode, StagePoint, TimeGrid,
    Trajectory,
};

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonProblem {
    pub grid: TimeGrid,
    pub cost: CostSpec,
    pub bounds: ControlBox,
    pub settings: OptimizerSettings,
}

impl HorizonProblem {
    pub fn new(
        grid: TimeGrid,
        cost: CostSpec,
        bounds: ControlBox,
        settings: OptimizerSettings,
    ) -> Result<Self> {
        if grid.substeps() % 2 != 0 {
            return Err(Error::invalid(
                "K",
                "Simpson quadrature needs an even substep count",
            ));
        }
        if cost.input_dim() != bounds.dim() {
            return Err(Error::invalid(
                "bounds",
                "box dimension differs from the control weight",
            ));
        }
        settings.validate()?;
        Ok(Self {
            grid,
            cost,
            bounds,
            settings,
        })
    }

    fn check_dims(&self, n: usize, m: usize) -> Result<()> {
        if self.cost.state_dim() != n || self.cost.input_dim() != m {
            return Err(Error::invalid(
                "cost",
                "weight dimensions do not match the model",
            ));
        }
        Ok(())
    }

    fn step_seed(&self, step: usize) -> u64 {
        self.settings
            .seed
            .wrapping_add((step as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

/// Closed-loop state of the OBPC scheme at a sampling instant `t_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcLoopState {
    tick: i64,
    step: usize,
    delay_ticks: i64,
    x: Vec<f64>,
    xi: Vec<f64>,
    xi_history: HistoryBuffer,
    y_history: HistoryBuffer,
    previous: Option<Vec<f64>>,
}

impl MpcLoopState {
    /// Seeds the buffers from plant and observer histories ending at the
    /// same tick; the output buffer is `h` applied to the plant history.
    pub fn from_histories(
        plant: &dyn PlantModel,
        grid: &TimeGrid,
        observer_history: HistoryBuffer,
        plant_history: &HistoryBuffer,
    ) -> Result<Self> {
        let n = plant.state_dim();
        if plant_history.dim() != n || observer_history.dim() != n {
            return Err(Error::invalid(
                "history",
                "history dimension differs from the plant",
            ));
        }
        if plant_history.last_tick() != observer_history.last_tick()
            || plant_history.step() != grid.step()
            || observer_history.step() != grid.step()
        {
            return Err(Error::Precondition(
                "plant and observer histories are not aligned on the grid".into(),
            ));
        }
        let delay_ticks = grid.horizon_steps() as i64;
        let needed = grid.horizon_steps() + 1;
        if plant_history.len() < needed || observer_history.len() < needed {
            return Err(Error::Precondition(format!(
                "histories must cover the last {needed} grid samples"
            )));
        }
        let p = plant.output_dim();
        let mut outputs = Vec::with_capacity(plant_history.len() * p);
        let mut y = vec![0.0; p];
        for i in 0..plant_history.len() {
            plant.output(plant_history.sample(i), &mut y);
            outputs.extend_from_slice(&y);
        }
        let mut y_history =
            HistoryBuffer::new(0.0, plant_history.first_tick(), grid.step(), p, outputs)?;
        let mut xi_history = observer_history;
        y_history.retain_last(needed);
        xi_history.retain_last(needed);
        Ok(Self {
            tick: plant_history.last_tick(),
            step: 0,
            delay_ticks,
            x: plant_history.last().to_vec(),
            xi: xi_history.last().to_vec(),
            xi_history,
            y_history,
            previous: None,
        })
    }

    /// Constant histories `x ≡ x0`, `ξ ≡ xi0` on `[-NT, 0]`.
    pub fn constant(
        plant: &dyn PlantModel,
        grid: &TimeGrid,
        x0: &[f64],
        xi0: &[f64],
    ) -> Result<Self> {
        let len = grid.horizon_steps() + 1;
        let first = -(grid.horizon_steps() as i64);
        let ph = HistoryBuffer::constant(x0, 0.0, first, grid.step(), len)?;
        let oh = HistoryBuffer::constant(xi0, 0.0, first, grid.step(), len)?;
        Self::from_histories(plant, grid, oh, &ph)
    }

    pub fn time(&self) -> f64 {
        self.xi_history.tick_time(self.tick)
    }

    pub fn tick(&self) -> i64 {
        self.tick
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn plant_state(&self) -> &[f64] {
        &self.x
    }

    pub fn observer_state(&self) -> &[f64] {
        &self.xi
    }

    pub fn observer_history(&self) -> &HistoryBuffer {
        &self.xi_history
    }

    pub fn output_history(&self) -> &HistoryBuffer {
        &self.y_history
    }

    /// Previous optimal sequence (flattened), used for warm starts.
    pub fn previous(&self) -> Option<&[f64]> {
        self.previous.as_deref()
    }
}

/// Delayed observer inputs `ξ(t - NT)`, `y(t - NT)` for every tick of an
/// integration window, read once from the buffers.
pub(super) struct DelayedInputs {
    pub(super) xi: Vec<f64>,
    pub(super) y: Vec<f64>,
    n: usize,
    p: usize,
    latest_output_tick: i64,
}

impl DelayedInputs {
    // `timed` goes through the time-based lookup (and its interpolation
    // counter) instead of direct tick indexing.
    pub(super) fn gather(state: &MpcLoopState, steps: usize, timed: bool) -> Result<Self> {
        let first = state.tick - state.delay_ticks;
        let last = first + steps as i64;
        if last > state.tick {
            return Err(Error::Precondition(
                "prediction would read outputs after the current sampling instant".into(),
            ));
        }
        let read = |buf: &HistoryBuffer, out: &mut Vec<f64>| -> Result<()> {
            for tick in first..=last {
                let short = |_| {
                    Error::Precondition(format!(
                        "buffer covers [{}, {}] but t = {} is needed",
                        buf.start_time(),
                        buf.end_time(),
                        buf.tick_time(tick)
                    ))
                };
                if timed {
                    out.extend_from_slice(
                        buf.lookup(buf.tick_time(tick)).map_err(short)?.as_slice(),
                    );
                } else {
                    out.extend_from_slice(buf.at_tick(tick).map_err(short)?);
                }
            }
            Ok(())
        };
        let mut xi = Vec::with_capacity((steps + 1) * state.xi_history.dim());
        let mut y = Vec::with_capacity((steps + 1) * state.y_history.dim());
        read(&state.xi_history, &mut xi)?;
        read(&state.y_history, &mut y)?;
        Ok(Self {
            xi,
            y,
            n: state.xi_history.dim(),
            p: state.y_history.dim(),
            latest_output_tick: last,
        })
    }
}

fn integrate_observer(
    obs: &dyn ObserverModel,
    xi0: &[f64],
    start: f64,
    grid: &TimeGrid,
    steps: usize,
    controls: &[f64],
    input_dim: usize,
    delayed: &DelayedInputs,
) -> Result<Trajectory> {
    let (n, p) = (delayed.n, delayed.p);
    let mut xi_mid = vec![0.0; n];
    let mut y_mid = vec![0.0; p];
    let rhs = |pt: StagePoint, xi: &[f64], u: &[f64], d: &mut [f64]| {
        let i = pt.step;
        match pt.node {
            StageNode::Start | StageNode::End => {
                let k = if pt.node == StageNode::Start {
                    i
                } else {
                    i + 1
                };
                obs.rhs(
                    xi,
                    &delayed.xi[k * n..(k + 1) * n],
                    &delayed.y[k * p..(k + 1) * p],
                    u,
                    d,
                );
            }
            StageNode::Mid => {
                for q in 0..n {
                    xi_mid[q] = 0.5 * (delayed.xi[i * n + q] + delayed.xi[(i + 1) * n + q]);
                }
                for q in 0..p {
                    y_mid[q] = 0.5 * (delayed.y[i * p + q] + delayed.y[(i + 1) * p + q]);
                }
                obs.rhs(xi, &xi_mid, &y_mid, u, d);
            }
        }
    };
    rk4_fixed(
        rhs,
        xi0,
        start,
        grid.step(),
        steps,
        controls,
        input_dim,
        grid.substeps(),
    )
}

fn check_observer(obs: &dyn ObserverModel, grid: &TimeGrid) -> Result<()> {
    let delay = obs.delay();
    if (delay - grid.horizon_span()).abs() > 1e-9 * grid.step() {
        return Err(Error::Precondition(format!(
            "retarded observer delay {delay} differs from the horizon length {}",
            grid.horizon_span()
        )));
    }
    Ok(())
}

/// Integrates `ξ̇ = g(ξ(t), ξ(t-NT), y(t-NT), v_j)` over the horizon from
/// the loop state using stored data only.
pub fn predict_observer(
    state: &MpcLoopState,
    seq: &ControlSequence,
    obs: &dyn ObserverModel,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    check_observer(obs, grid)?;
    if seq.len() != grid.horizon() || seq.input_dim() != obs.input_dim() {
        return Err(Error::invalid(
            "seq",
            "need one control per sampling interval",
        ));
    }
    let steps = grid.horizon_steps();
    let delayed = DelayedInputs::gather(state, steps, false)?;
    integrate_observer(
        obs,
        &state.xi,
        state.time(),
        grid,
        steps,
        seq.as_flat(),
        seq.input_dim(),
        &delayed,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedHorizon {
    pub sequence: ControlSequence,
    pub cost: f64,
    pub evaluations: usize,
    /// Prediction under `sequence`.
    pub prediction: Trajectory,
    /// Latest tick of the output buffer read while optimizing.
    pub latest_output_tick: i64,
}

fn minimize<P>(
    predict: P,
    fast: Option<CostFn<'_>>,
    problem: &HorizonProblem,
    previous: Option<&[f64]>,
    step: usize,
) -> Result<(Vec<f64>, f64, usize)>
where
    P: Fn(&[f64]) -> Result<Trajectory> + Sync,
{
    let generic = |flat: &[f64]| match predict(flat) {
        Ok(path) => horizon_cost(&path, flat, &problem.cost, &problem.grid),
        Err(_) => f64::INFINITY,
    };
    let cost = |flat: &[f64]| match &fast {
        Some(f) => f(flat),
        None => generic(flat),
    };
    let warm = match previous {
        Some(prev) if problem.settings.warm_start => {
            let m = problem.bounds.dim();
            let mut w = prev[m..].to_vec();
            w.extend_from_slice(&prev[prev.len() - m..]);
            problem.bounds.project(&mut w);
            Some(w)
        }
        _ => None,
    };
    let n = problem.grid.horizon();
    let lower = problem.bounds.lower().repeat(n);
    let upper = problem.bounds.upper().repeat(n);
    let best = match multistart(
        &cost,
        &lower,
        &upper,
        warm.as_deref(),
        &problem.settings,
        problem.step_seed(step),
    ) {
        Ok(best) => best,
        Err(Error::OptimizationFailure(msg)) => {
            // all costs infinite: surface a diverging prediction as such
            let mut probe = vec![0.0; lower.len()];
            problem.bounds.project(&mut probe);
            return Err(match predict(&probe) {
                Err(e @ Error::Divergence { .. }) => e,
                _ => Error::OptimizationFailure(msg),
            });
        }
        Err(e) => return Err(e),
    };
    Ok((best.x, best.value, best.evaluations))
}

/// Minimises `J_N` over `𝕌ᴺ` with the retarded-observer prediction.
pub fn optimize_horizon(
    state: &MpcLoopState,
    obs: &dyn ObserverModel,
    problem: &HorizonProblem,
) -> Result<OptimizedHorizon> {
    check_observer(obs, &problem.grid)?;
    problem.check_dims(obs.state_dim(), obs.input_dim())?;
    let grid = &problem.grid;
    let steps = grid.horizon_steps();
    let m = obs.input_dim();
    let delayed = DelayedInputs::gather(state, steps, false)?;
    let start = state.time();
    let predict =
        |flat: &[f64]| integrate_observer(obs, &state.xi, start, grid, steps, flat, m, &delayed);
    let fast = linear_observer_cost(obs, &problem.cost, grid, &state.xi, &delayed.xi, &delayed.y);
    let (flat, cost, evaluations) = minimize(predict, fast, problem, state.previous(), state.step)?;
    let prediction = predict(&flat)?;
    Ok(OptimizedHorizon {
        sequence: ControlSequence::from_flat(flat, problem.bounds.clone())?,
        cost,
        evaluations,
        prediction,
        latest_output_tick: delayed.latest_output_tick,
    })
}

/// Advances plant and retarded observer over one sampling period under `u`,
/// records the measured outputs (reconstructed from samples every `t_hat`
/// when given) and drops data older than `NT`.
pub fn advance_retarded(
    state: &mut MpcLoopState,
    plant: &dyn PlantModel,
    obs: &dyn ObserverModel,
    grid: &TimeGrid,
    u: &[f64],
    t_hat: Option<f64>,
) -> Result<(Trajectory, Trajectory)> {
    check_observer(obs, grid)?;
    if u.len() != plant.input_dim() {
        return Err(Error::invalid(
            "u",
            "control dimension differs from the plant",
        ));
    }
    let k = grid.substeps();
    let start = state.time();
    let x_seg = rk4_fixed(
        |_, x, u, dx| plant.rhs(x, u, dx),
        &state.x,
        start,
        grid.step(),
        k,
        u,
        u.len(),
        k,
    )?;
    let delayed = DelayedInputs::gather(state, k, true)?;
    let xi_seg = integrate_observer(obs, &state.xi, start, grid, k, u, u.len(), &delayed)?;

    let y_seg = outputs_of(plant, &x_seg);
    let y_seg = match t_hat {
        Some(t_hat) => subsample_and_interpolate_outputs(&y_seg, t_hat)?,
        None => y_seg,
    };
    state.y_history.append(&y_seg)?;
    state.xi_history.append(&xi_seg)?;
    let keep = state.delay_ticks as usize + 1;
    state.y_history.retain_last(keep);
    state.xi_history.retain_last(keep);
    state.tick += k as i64;
    state.x = x_seg.last_state().to_vec();
    state.xi = xi_seg.last_state().to_vec();
    Ok((x_seg, xi_seg))
}

/// `h(x)` along a plant path.
pub fn outputs_of(plant: &dyn PlantModel, x: &Trajectory) -> Trajectory {
    let p = plant.output_dim();
    let mut out = Trajectory::with_capacity(x.start_time(), x.step(), p, 0, x.len());
    let mut y = vec![0.0; p];
    for i in 0..x.len() {
        plant.output(x.state(i), &mut y);
        out.push_state(&y);
    }
    out
}

/// Co-integrates plant and non-retarded observer, the observer driven by
/// the current output, over one sampling period from `t`.
pub fn advance_stacked(
    plant: &dyn PlantModel,
    obs: &dyn ObserverModel,
    grid: &TimeGrid,
    t: f64,
    x: &[f64],
    xi: &[f64],
    u: &[f64],
) -> Result<(Trajectory, Trajectory)> {
    if obs.delay() != 0.0 {
        return Err(Error::ContractViolation(
            "stacked integration needs a non-retarded observer".into(),
        ));
    }
    let n = plant.state_dim();
    if x.len() != n || xi.len() != obs.state_dim() || u.len() != plant.input_dim() {
        return Err(Error::invalid("state", "dimension mismatch"));
    }
    let mut y = vec![0.0; plant.output_dim()];
    let rhs = |_: StagePoint, z: &[f64], u: &[f64], dz: &mut [f64]| {
        let (zx, zxi) = z.split_at(n);
        let (dx, dxi) = dz.split_at_mut(n);
        plant.rhs(zx, u, dx);
        plant.output(zx, &mut y);
        obs.rhs(zxi, zxi, &y, u, dxi);
    };
    let z0: Vec<f64> = x.iter().chain(xi).copied().collect();
    let k = grid.substeps();
    let z = rk4_fixed(rhs, &z0, t, grid.step(), k, u, u.len(), k)?;
    Ok(split(&z, n))
}

fn split(z: &Trajectory, n: usize) -> (Trajectory, Trajectory) {
    let total = z.state_dim();
    let mut a = Trajectory::with_capacity(z.start_time(), z.step(), n, z.input_dim(), z.len());
    let mut b =
        Trajectory::with_capacity(z.start_time(), z.step(), total - n, z.input_dim(), z.len());
    for i in 0..z.len() {
        let (p, q) = z.state(i).split_at(n);
        a.push_state(p);
        b.push_state(q);
    }
    for i in 0..z.steps() {
        a.push_control(z.control(i));
        b.push_control(z.control(i));
    }
    (a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub control: Vec<f64>,
    pub cost: f64,
    pub evaluations: usize,
    /// `max ‖ξ_realized - ξ_predicted‖` over the first sampling interval;
    /// `None` for the standard scheme.
    pub prediction_mismatch: Option<f64>,
    /// Latest output-buffer read relative to `t_j`, in ticks.
    pub output_read_offset: i64,
    pub wall_clock: Duration,
    pub plant_segment: Trajectory,
    pub observer_segment: Trajectory,
}

/// One OBPC sampling period: optimise, apply `û₀`, advance the observer with
/// stored data, store the new outputs and the shifted sequence.
pub fn obpc_step(
    state: &mut MpcLoopState,
    plant: &dyn PlantModel,
    obs: &dyn ObserverModel,
    problem: &HorizonProblem,
    t_hat: Option<f64>,
) -> Result<StepOutcome> {
    let clock = Instant::now();
    let tick = state.tick;
    let best = optimize_horizon(state, obs, problem)?;
    let u = best.sequence.value(0).to_vec();
    let (x_seg, xi_seg) = advance_retarded(state, plant, obs, &problem.grid, &u, t_hat)?;
    let mismatch = (0..xi_seg.len())
        .map(|i| {
            let d: Vec<f64> = xi_seg
                .state(i)
                .iter()
                .zip(best.prediction.state(i))
                .map(|(a, b)| a - b)
                .collect();
            norm(&d)
        })
        .fold(0.0, f64::max);
    state.previous = Some(best.sequence.as_flat().to_vec());
    state.step += 1;
    Ok(StepOutcome {
        control: u,
        cost: best.cost,
        evaluations: best.evaluations,
        prediction_mismatch: Some(mismatch),
        output_read_offset: best.latest_output_tick - tick,
        wall_clock: clock.elapsed(),
        plant_segment: x_seg,
        observer_segment: xi_seg,
    })
}

/// Closed-loop state of the standard scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardLoopState {
    t: f64,
    step: usize,
    x: Vec<f64>,
    xi: Vec<f64>,
    previous: Option<Vec<f64>>,
}

impl StandardLoopState {
    pub fn new(x0: &[f64], xi0: &[f64]) -> Self {
        Self {
            t: 0.0,
            step: 0,
            x: x0.to_vec(),
            xi: xi0.to_vec(),
            previous: None,
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn plant_state(&self) -> &[f64] {
        &self.x
    }

    pub fn observer_state(&self) -> &[f64] {
        &self.xi
    }
}

/// Forward simulation of the plant model from `ξ(t_j)` under a flattened
/// sequence.
pub fn predict_model(
    model: &dyn PlantModel,
    xi: &[f64],
    t: f64,
    flat: &[f64],
    grid: &TimeGrid,
) -> Result<Trajectory> {
    rk4_fixed(
        |_, x, u, dx| model.rhs(x, u, dx),
        xi,
        t,
        grid.step(),
        grid.horizon_steps(),
        flat,
        model.input_dim(),
        grid.substeps(),
    )
}

/// One standard-MPC sampling period: optimise against the plant model from
/// the current estimate, apply `û₀`, advance plant and observer together.
pub fn standard_mpc_step(
    state: &mut StandardLoopState,
    plant: &dyn PlantModel,
    model: &dyn PlantModel,
    obs: &dyn ObserverModel,
    problem: &HorizonProblem,
) -> Result<StepOutcome> {
    problem.check_dims(model.state_dim(), model.input_dim())?;
    let clock = Instant::now();
    let grid = &problem.grid;
    let t = state.t;
    let xi = state.xi.clone();
    let predict = |flat: &[f64]| predict_model(model, &xi, t, flat, grid);
    let fast = linear_plant_cost(model, &problem.cost, grid, &xi);
    let (flat, cost, evaluations) = minimize(
        predict,
        fast,
        problem,
        state.previous.as_deref(),
        state.step,
    )?;
    let m = model.input_dim();
    let u = flat[..m].to_vec();
    let (x_seg, xi_seg) = advance_stacked(plant, obs, grid, t, &state.x, &state.xi, &u)?;
    state.t = x_seg.end_time();
    state.x = x_seg.last_state().to_vec();
    state.xi = xi_seg.last_state().to_vec();
    state.previous = Some(flat);
    state.step += 1;
    Ok(StepOutcome {
        control: u,
        cost,
        evaluations,
        prediction_mismatch: None,
        output_read_offset: 0,
        wall_clock: clock.elapsed(),
        plant_segment: x_seg,
        observer_segment: xi_seg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Obpc,
    StandardMpc,
}

/// A closed-loop experiment: constant initial histories `x ≡ x0` and
/// `ξ ≡ xi0` on `[-NT, 0]`, run over `[0, span]`.
#[derive(Clone)]
pub struct LoopScenario {
    pub plant: Arc<dyn PlantModel>,
    pub observer: Arc<dyn ObserverModel>,
    pub problem: HorizonProblem,
    pub x0: Vec<f64>,
    pub xi0: Vec<f64>,
    pub span: f64,
    /// Output sampling period `T̂` for emulation; `None` stores every
    /// integration sample.
    pub output_sample_period: Option<f64>,
}

impl std::fmt::Debug for LoopScenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoopScenario")
            .field("problem", &self.problem)
            .field("x0", &self.x0)
            .field("xi0", &self.xi0)
            .field("span", &self.span)
            .field("output_sample_period", &self.output_sample_period)
            .finish_non_exhaustive()
    }
}

impl LoopScenario {
    /// One of the two reproduction setups: `T = 0.1`, `N = 5`, `K = 20`,
    /// standard cost, box `[-25, 25]²`, `λ = 1.2`, `ξ₀ = 0`. The observer is
    /// retarded by `NT` for OBPC and non-retarded for standard MPC.
    pub fn example(which: ExamplePlant, scheme: Scheme, x0: &[f64], span: f64) -> Result<Self> {
        let grid = TimeGrid::new(0.1, 5, 20)?;
        let delay = match scheme {
            Scheme::Obpc => grid.horizon_span(),
            Scheme::StandardMpc => 0.0,
        };
        let problem = HorizonProblem::new(
            grid,
            CostSpec::standard(2, 2),
            ControlBox::symmetric(2, 25.0)?,
            OptimizerSettings::default(),
        )?;
        Ok(Self {
            plant: Arc::new(LinearPlant::example(which)),
            observer: Arc::new(LuenbergerObserver::example(which, DEFAULT_LAMBDA, delay)?),
            problem,
            x0: x0.to_vec(),
            xi0: vec![0.0; 2],
            span,
            output_sample_period: None,
        })
    }

    fn validate(&self) -> Result<usize> {
        let n = self.plant.state_dim();
        if self.x0.len() != n || self.xi0.len() != self.observer.state_dim() {
            return Err(Error::invalid("x0", "initial value dimension mismatch"));
        }
        if self.observer.input_dim() != self.plant.input_dim()
            || self.observer.output_dim() != self.plant.output_dim()
        {
            return Err(Error::invalid(
                "observer",
                "observer and plant dimensions differ",
            ));
        }
        if let Some(t_hat) = self.output_sample_period {
            let grid = &self.problem.grid;
            if !(t_hat > 0.0 && t_hat <= grid.period() * (1.0 + 1e-12)) {
                return Err(Error::invalid("t_hat", "must lie in (0, T]"));
            }
            grid.steps_in(t_hat)?;
        }
        self.problem.grid.periods_in(self.span)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub scheme: Scheme,
    pub grid: TimeGrid,
    pub plant: Trajectory,
    pub observer: Trajectory,
    pub outputs: Trajectory,
    /// Applied control per sampling interval.
    pub controls: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
    pub wall_clock: Vec<Duration>,
    pub evaluations: Vec<usize>,
    /// Per-step prediction mismatch (OBPC only).
    pub prediction_mismatch: Vec<f64>,
    /// Latest output read relative to the current sampling instant over the
    /// whole run, in ticks (never positive).
    pub latest_output_read: i64,
    /// Off-grid history lookups during the run.
    pub interpolated_reads: usize,
}

impl SimulationResult {
    /// `‖x(t) - ξ(t)‖` per sample.
    pub fn error_norms(&self) -> Vec<f64> {
        (0..self.plant.len())
            .map(|i| {
                let d: Vec<f64> = self
                    .plant
                    .state(i)
                    .iter()
                    .zip(self.observer.state(i))
                    .map(|(a, b)| a - b)
                    .collect();
                norm(&d)
            })
            .collect()
    }
}

struct Recorder {
    plant: Trajectory,
    observer: Trajectory,
    controls: Vec<Vec<f64>>,
    costs: Vec<f64>,
    wall_clock: Vec<Duration>,
    evaluations: Vec<usize>,
    mismatch: Vec<f64>,
    latest: i64,
}

impl Recorder {
    fn new(x0: &[f64], xi0: &[f64], step: f64, m: usize) -> Self {
        let mut plant = Trajectory::with_capacity(0.0, step, x0.len(), m, 1);
        plant.push_state(x0);
        let mut observer = Trajectory::with_capacity(0.0, step, xi0.len(), m, 1);
        observer.push_state(xi0);
        Self {
            plant,
            observer,
            controls: Vec::new(),
            costs: Vec::new(),
            wall_clock: Vec::new(),
            evaluations: Vec::new(),
            mismatch: Vec::new(),
            latest: i64::MIN,
        }
    }

    fn record(&mut self, out: StepOutcome) -> Result<()> {
        self.plant.extend_with(&out.plant_segment)?;
        self.observer.extend_with(&out.observer_segment)?;
        self.controls.push(out.control);
        self.costs.push(out.cost);
        self.wall_clock.push(out.wall_clock);
        self.evaluations.push(out.evaluations);
        if let Some(d) = out.prediction_mismatch {
            self.mismatch.push(d);
        }
        self.latest = self.latest.max(out.output_read_offset);
        Ok(())
    }

    fn finish(
        self,
        scheme: Scheme,
        grid: &TimeGrid,
        plant: &dyn PlantModel,
        interpolated_reads: usize,
    ) -> SimulationResult {
        SimulationResult {
            scheme,
            grid: grid.clone(),
            outputs: outputs_of(plant, &self.plant),
            plant: self.plant,
            observer: self.observer,
            controls: self.controls,
            costs: self.costs,
            wall_clock: self.wall_clock,
            evaluations: self.evaluations,
            prediction_mismatch: self.mismatch,
            latest_output_read: if self.latest == i64::MIN {
                0
            } else {
                self.latest
            },
            interpolated_reads,
        }
    }
}

pub fn run_obpc(scenario: &LoopScenario) -> Result<SimulationResult> {
    let periods = scenario.validate()?;
    let plant = scenario.plant.as_ref();
    let obs = scenario.observer.as_ref();
    let problem = &scenario.problem;
    check_observer(obs, &problem.grid)?;
    let mut state = MpcLoopState::constant(plant, &problem.grid, &scenario.x0, &scenario.xi0)?;
    let mut rec = Recorder::new(
        &scenario.x0,
        &scenario.xi0,
        problem.grid.step(),
        plant.input_dim(),
    );
    for _ in 0..periods {
        let out = obpc_step(
            &mut state,
            plant,
            obs,
            problem,
            scenario.output_sample_period,
        )?;
        rec.record(out)?;
    }
    let reads = state.xi_history.interpolated_reads() + state.y_history.interpolated_reads();
    Ok(rec.finish(Scheme::Obpc, &problem.grid, plant, reads))
}

/// Standard MPC with the scenario plant doubling as the prediction model.
pub fn run_standard_mpc(scenario: &LoopScenario) -> Result<SimulationResult> {
    let periods = scenario.validate()?;
    let plant = scenario.plant.as_ref();
    let obs = scenario.observer.as_ref();
    if obs.delay() != 0.0 {
        return Err(Error::Precondition(
            "standard MPC needs a non-retarded observer".into(),
        ));
    }
    let problem = &scenario.problem;
    let mut state = StandardLoopState::new(&scenario.x0, &scenario.xi0);
    let mut rec = Recorder::new(
        &scenario.x0,
        &scenario.xi0,
        problem.grid.step(),
        plant.input_dim(),
    );
    for _ in 0..periods {
        let out = standard_mpc_step(&mut state, plant, plant, obs, problem)?;
        rec.record(out)?;
    }
    Ok(rec.finish(Scheme::StandardMpc, &problem.grid, plant, 0))
}

pub fn run(scenario: &LoopScenario, scheme: Scheme) -> Result<SimulationResult> {
    match scheme {
        Scheme::Obpc => run_obpc(scenario),
        Scheme::StandardMpc => run_standard_mpc(scenario),
    }
}

/// Independent closed-loop runs, results in input order.
pub fn run_many(
    scenarios: &[LoopScenario],
    scheme: Scheme,
    exec: ExecMode,
) -> Vec<Result<SimulationResult>> {
    exec.map(scenarios, |s| run(s, scheme))
}
