//! Fixed-step integration of sampled-data systems on a uniform grid.
//!
//! Every time in a closed-loop run is an integer number of integration steps
//! `h = T / K` away from the run origin, so a delayed read `t - N·T` lands on
//! a stored sample without interpolation.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Any state coordinate above this magnitude aborts integration.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Tolerance (in units of one grid step) for treating a time as a grid time.
pub(crate) const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    period: f64,
    horizon: usize,
    substeps: usize,
    step: f64,
}

impl TimeGrid {
    /// Sampling period `period`, horizon of `horizon` periods, `substeps`
    /// integration steps per period.
    pub fn new(period: f64, horizon: usize, substeps: usize) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::invalid(
                "T",
                format!("sampling period must be positive, got {period}"),
            ));
        }
        if horizon == 0 {
            return Err(Error::invalid("N", "horizon must be at least one period"));
        }
        if substeps == 0 {
            return Err(Error::invalid("K", "need at least one substep per period"));
        }
        Ok(Self {
            period,
            horizon,
            substeps,
            step: period / substeps as f64,
        })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Integration step `h`.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Delay / prediction length `N·T`.
    pub fn horizon_span(&self) -> f64 {
        self.period * self.horizon as f64
    }

    /// Integration steps in one horizon, `N·K`.
    pub fn horizon_steps(&self) -> usize {
        self.horizon * self.substeps
    }

    /// Number of integration steps spanning `span`; errors unless `span` is a
    /// non-negative integer multiple of the step.
    pub fn steps_in(&self, span: f64) -> Result<usize> {
        whole_multiple(span, self.step).ok_or_else(|| {
            Error::invalid(
                "span",
                format!("{span} is not a multiple of the step {}", self.step),
            )
        })
    }

    /// Number of sampling periods spanning `span`.
    pub fn periods_in(&self, span: f64) -> Result<usize> {
        whole_multiple(span, self.period).ok_or_else(|| {
            Error::invalid(
                "span",
                format!("{span} is not a multiple of the period {}", self.period),
            )
        })
    }
}

pub(crate) fn whole_multiple(span: f64, unit: f64) -> Option<usize> {
    if !(span.is_finite() && span >= 0.0) {
        return None;
    }
    let ratio = span / unit;
    let n = ratio.round();
    ((ratio - n).abs() <= GRID_TOL * n.max(1.0)).then_some(n as usize)
}

/// Per-coordinate box `Π [lo_i, hi_i]` of admissible control values.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ControlBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::invalid("bounds", "lower and upper differ in length"));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(
                    "bounds",
                    format!("bad interval [{lo}, {hi}]"),
                ));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn symmetric(dim: usize, bound: f64) -> Result<Self> {
        Self::new(vec![-bound; dim], vec![bound; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    /// Clamps a flattened sequence of control values (any number of blocks).
    pub fn project(&self, flat: &mut [f64]) {
        let m = self.dim();
        if m == 0 {
            return;
        }
        for (i, v) in flat.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i % m], self.upper[i % m]);
        }
    }
}

/// Zero-order-hold values `v_0 … v_{N-1}`, each inside the control box.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSequence {
    len: usize,
    values: Vec<f64>,
    bounds: ControlBox,
}

impl ControlSequence {
    pub fn new(values: &[DVector<f64>], bounds: ControlBox) -> Result<Self> {
        if values.iter().any(|v| v.len() != bounds.dim()) {
            return Err(Error::invalid(
                "controls",
                "control dimension differs from box",
            ));
        }
        let flat: Vec<f64> = values.iter().flat_map(|v| v.iter().copied()).collect();
        let mut seq = Self::from_flat(flat, bounds)?;
        seq.len = values.len();
        Ok(seq)
    }

    /// Values laid out block after block; the box dimension must be nonzero.
    pub fn from_flat(values: Vec<f64>, bounds: ControlBox) -> Result<Self> {
        let m = bounds.dim();
        if m == 0 {
            return Err(Error::invalid(
                "controls",
                "zero-dimensional box; use `unforced`",
            ));
        }
        if values.len() % m != 0 {
            return Err(Error::invalid(
                "controls",
                "length not a multiple of the box dimension",
            ));
        }
        if let Some(bad) = values.chunks(m).position(|v| !bounds.contains(v)) {
            return Err(Error::invalid(
                "controls",
                format!("value {bad} lies outside the box"),
            ));
        }
        Ok(Self {
            len: values.len() / m,
            values,
            bounds,
        })
    }

    /// A sequence of `len` zero vectors; errors if zero is not admissible.
    pub fn zeros(len: usize, bounds: ControlBox) -> Result<Self> {
        Self::from_flat(vec![0.0; len * bounds.dim()], bounds)
    }

    /// `len` intervals of a system without inputs.
    pub fn unforced(len: usize) -> Self {
        Self {
            len,
            values: Vec::new(),
            bounds: ControlBox {
                lower: Vec::new(),
                upper: Vec::new(),
            },
        }
    }

    pub fn input_dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn value(&self, j: usize) -> &[f64] {
        let m = self.input_dim();
        &self.values[j * m..(j + 1) * m]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> &ControlBox {
        &self.bounds
    }

    /// Receding-horizon warm start: drop `v_0`, repeat the last value.
    pub fn shifted(&self) -> Self {
        let m = self.input_dim();
        let mut values = self.values.clone();
        if self.len > 1 {
            values.drain(..m);
            values.extend_from_slice(&self.values[self.values.len() - m..]);
        }
        Self {
            len: self.len,
            values,
            bounds: self.bounds.clone(),
        }
    }
}

/// Value of the zero-order-hold signal at `t`, where `v_j` holds on
/// `[t0 + j·T, t0 + (j+1)·T)`.
pub fn zoh_value<'a>(
    seq: &'a ControlSequence,
    t: f64,
    grid: &TimeGrid,
    t0: f64,
) -> Result<&'a [f64]> {
    let rel = (t - t0) / grid.period();
    let j = (rel + GRID_TOL).floor();
    if !(rel >= -GRID_TOL) || j >= seq.len() as f64 {
        return Err(Error::OutOfRange {
            time: t,
            start: t0,
            end: t0 + seq.len() as f64 * grid.period(),
        });
    }
    Ok(seq.value(j as usize))
}

/// Where inside an RK4 step a right-hand side is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageNode {
    Start,
    Mid,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagePoint {
    pub t: f64,
    /// Index of the step within the current integration call.
    pub step: usize,
    pub node: StageNode,
}

/// Uniformly sampled state path with the control applied on each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    start: f64,
    step: f64,
    dim: usize,
    input_dim: usize,
    states: Vec<f64>,
    controls: Vec<f64>,
}

impl Trajectory {
    pub(crate) fn with_capacity(
        start: f64,
        step: f64,
        dim: usize,
        input_dim: usize,
        samples: usize,
    ) -> Self {
        Self {
            start,
            step,
            dim,
            input_dim,
            states: Vec::with_capacity(samples * dim),
            controls: Vec::with_capacity(samples.saturating_sub(1) * input_dim),
        }
    }

    /// Builds a trajectory from explicit samples; `controls` holds one entry
    /// per step (`states.len() - 1`) or is empty for an unforced path.
    pub fn from_samples(
        start: f64,
        step: f64,
        states: &[DVector<f64>],
        controls: &[DVector<f64>],
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid(
                "states",
                "trajectory needs at least one sample",
            ));
        }
        if !(step > 0.0) {
            return Err(Error::invalid("step", "step must be positive"));
        }
        let dim = states[0].len();
        if states.iter().any(|s| s.len() != dim) {
            return Err(Error::invalid("states", "inconsistent state dimension"));
        }
        let input_dim = controls.first().map_or(0, |c| c.len());
        if !controls.is_empty()
            && (controls.len() != states.len() - 1 || controls.iter().any(|c| c.len() != input_dim))
        {
            return Err(Error::invalid("controls", "need one control per step"));
        }
        let mut traj = Self::with_capacity(start, step, dim, input_dim, states.len());
        for s in states {
            traj.states.extend(s.iter());
        }
        for c in controls {
            traj.controls.extend(c.iter());
        }
        Ok(traj)
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of integration steps (`len() - 1`).
    pub fn steps(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn state_dim(&self) -> usize {
        self.dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn start_time(&self) -> f64 {
        self.start
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time(i))
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.steps())
    }

    /// Control applied on step `i`, i.e. on `[time(i), time(i+1))`.
    pub fn control(&self, i: usize) -> &[f64] {
        &self.controls[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn has_controls(&self) -> bool {
        !self.controls.is_empty()
    }

    /// Euclidean norm of every sample.
    pub fn norms(&self) -> Vec<f64> {
        (0..self.len()).map(|i| norm(self.state(i))).collect()
    }

    pub(crate) fn push_state(&mut self, x: &[f64]) {
        self.states.extend_from_slice(x);
    }

    pub(crate) fn push_control(&mut self, u: &[f64]) {
        self.controls.extend_from_slice(u);
    }

    /// Appends `segment`, whose first sample must equal this path's last.
    pub fn extend_with(&mut self, segment: &Trajectory) -> Result<()> {
        check_junction(
            self.dim,
            self.step,
            self.end_time(),
            self.last_state(),
            segment,
        )?;
        if segment.input_dim != self.input_dim {
            return Err(Error::Contiguity("input dimension differs".into()));
        }
        self.states.extend_from_slice(&segment.states[self.dim..]);
        self.controls.extend_from_slice(&segment.controls);
        Ok(())
    }

    /// Samples `from..=to` as a new trajectory.
    pub fn window(&self, from: usize, to: usize) -> Trajectory {
        let mut out = Self::with_capacity(
            self.time(from),
            self.step,
            self.dim,
            self.input_dim,
            to - from + 1,
        );
        out.states
            .extend_from_slice(&self.states[from * self.dim..(to + 1) * self.dim]);
        if self.has_controls() {
            out.controls
                .extend_from_slice(&self.controls[from * self.input_dim..to * self.input_dim]);
        }
        out
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_junction(
    dim: usize,
    step: f64,
    end_time: f64,
    last: &[f64],
    segment: &Trajectory,
) -> Result<()> {
    if segment.dim != dim {
        return Err(Error::Contiguity(format!(
            "state dimension {} != {dim}",
            segment.dim
        )));
    }
    if (segment.step - step).abs() > GRID_TOL * step {
        return Err(Error::Contiguity(format!(
            "step {} != {step}",
            segment.step
        )));
    }
    if (segment.start - end_time).abs() > GRID_TOL * step {
        return Err(Error::Contiguity(format!(
            "segment starts at {} but the buffer ends at {end_time}",
            segment.start
        )));
    }
    if segment.state(0) != last {
        return Err(Error::Consistency { time: end_time });
    }
    Ok(())
}

/// Classical fourth-order Runge-Kutta over `steps` steps of size `step`.
///
/// `controls` holds flattened control blocks of width `input_dim`; step `i`
/// uses block `i / hold`. The right-hand side writes the derivative into its
/// last argument.
pub(crate) fn rk4_fixed<F>(
    mut rhs: F,
    x0: &[f64],
    start: f64,
    step: f64,
    steps: usize,
    controls: &[f64],
    input_dim: usize,
    hold: usize,
) -> Result<Trajectory>
where
    F: FnMut(StagePoint, &[f64], &[f64], &mut [f64]),
{
    let n = x0.len();
    if steps > 0 && input_dim > 0 && controls.len() < ((steps - 1) / hold + 1) * input_dim {
        return Err(Error::invalid(
            "controls",
            "too few control values for the span",
        ));
    }
    check_state(x0, start)?;
    let mut traj = Trajectory::with_capacity(start, step, n, input_dim, steps + 1);
    traj.push_state(x0);

    let mut x = x0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut probe = vec![0.0; n];
    let half = 0.5 * step;
    let sixth = step / 6.0;

    for i in 0..steps {
        let t = start + i as f64 * step;
        let t_next = start + (i + 1) as f64 * step;
        let u = if input_dim == 0 {
            &[][..]
        } else {
            let j = i / hold;
            &controls[j * input_dim..(j + 1) * input_dim]
        };
        let at = |node, t| StagePoint { t, step: i, node };

        rhs(at(StageNode::Start, t), &x, u, &mut k1);
        for q in 0..n {
            probe[q] = x[q] + half * k1[q];
        }
        rhs(at(StageNode::Mid, t + half), &probe, u, &mut k2);
        for q in 0..n {
            probe[q] = x[q] + half * k2[q];
        }
        rhs(at(StageNode::Mid, t + half), &probe, u, &mut k3);
        for q in 0..n {
            probe[q] = x[q] + step * k3[q];
        }
        rhs(at(StageNode::End, t_next), &probe, u, &mut k4);
        for q in 0..n {
            x[q] += sixth * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
        }
        check_state(&x, t_next)?;
        traj.push_state(&x);
        traj.push_control(u);
    }
    Ok(traj)
}

fn check_state(x: &[f64], t: f64) -> Result<()> {
    if x.iter()
        .all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT)
    {
        Ok(())
    } else {
        Err(Error::Divergence { time: t })
    }
}

/// Integrates `rhs(point, x, u, dx)` from `t0` to `t1` with the grid's fixed
/// step, sampling `control` (which starts at `t0`) once per step at the
/// step's left endpoint. Identical inputs give bit-identical output.
pub fn rk4_integrate<F>(
    rhs: F,
    x0: &[f64],
    t0: f64,
    t1: f64,
    grid: &TimeGrid,
    control: &ControlSequence,
) -> Result<Trajectory>
where
    F: FnMut(StagePoint, &[f64], &[f64], &mut [f64]),
{
    let steps = grid.steps_in(t1 - t0)?;
    if steps > control.len().saturating_mul(grid.substeps()) {
        return Err(Error::OutOfRange {
            time: t1,
            start: t0,
            end: t0 + control.len() as f64 * grid.period(),
        });
    }
    rk4_fixed(
        rhs,
        x0,
        t0,
        grid.step(),
        steps,
        control.as_flat(),
        control.input_dim(),
        grid.substeps(),
    )
}

/// Uniformly sampled past of a vector signal.
///
/// Sample `i` sits at tick `first_tick + i`, i.e. at time
/// `origin + (first_tick + i)·step`.
#[derive(Debug)]
pub struct HistoryBuffer {
    origin: f64,
    first_tick: i64,
    step: f64,
    dim: usize,
    samples: Vec<f64>,
    interpolated: AtomicUsize,
}

impl Clone for HistoryBuffer {
    fn clone(&self) -> Self {
        Self {
            origin: self.origin,
            first_tick: self.first_tick,
            step: self.step,
            dim: self.dim,
            samples: self.samples.clone(),
            interpolated: AtomicUsize::new(self.interpolated_reads()),
        }
    }
}

impl PartialEq for HistoryBuffer {
    fn eq(&self, other: &Self) -> bool {
        self.origin == other.origin
            && self.first_tick == other.first_tick
            && self.step == other.step
            && self.dim == other.dim
            && self.samples == other.samples
    }
}

impl HistoryBuffer {
    pub fn new(
        origin: f64,
        first_tick: i64,
        step: f64,
        dim: usize,
        samples: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || samples.is_empty() || samples.len() % dim != 0 {
            return Err(Error::invalid("samples", "need at least one full sample"));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid("step", "step must be positive"));
        }
        Ok(Self {
            origin,
            first_tick,
            step,
            dim,
            samples,
            interpolated: AtomicUsize::new(0),
        })
    }

    /// `len` copies of `value` starting at tick `first_tick`.
    pub fn constant(
        value: &[f64],
        origin: f64,
        first_tick: i64,
        step: f64,
        len: usize,
    ) -> Result<Self> {
        let samples = value.repeat(len);
        Self::new(origin, first_tick, step, value.len(), samples)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn first_tick(&self) -> i64 {
        self.first_tick
    }

    pub fn last_tick(&self) -> i64 {
        self.first_tick + self.len() as i64 - 1
    }

    pub fn tick_time(&self, tick: i64) -> f64 {
        self.origin + tick as f64 * self.step
    }

    pub fn start_time(&self) -> f64 {
        self.tick_time(self.first_tick)
    }

    pub fn end_time(&self) -> f64 {
        self.tick_time(self.last_tick())
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.sample(self.len() - 1)
    }

    /// Stored sample at an absolute tick.
    pub fn at_tick(&self, tick: i64) -> Result<&[f64]> {
        let i = tick - self.first_tick;
        if i < 0 || i >= self.len() as i64 {
            return Err(Error::OutOfRange {
                time: self.tick_time(tick),
                start: self.start_time(),
                end: self.end_time(),
            });
        }
        Ok(self.sample(i as usize))
    }

    /// Value at `t`: the stored sample (bit-exact) when `t` is a grid time,
    /// linear interpolation between neighbours otherwise.
    pub fn lookup(&self, t: f64) -> Result<DVector<f64>> {
        let out_of_range = || Error::OutOfRange {
            time: t,
            start: self.start_time(),
            end: self.end_time(),
        };
        let pos = (t - self.origin) / self.step - self.first_tick as f64;
        let nearest = pos.round();
        if (pos - nearest).abs() <= GRID_TOL * nearest.abs().max(1.0) {
            if nearest < 0.0 || nearest > (self.len() - 1) as f64 {
                return Err(out_of_range());
            }
            return Ok(DVector::from_column_slice(self.sample(nearest as usize)));
        }
        let lower = pos.floor();
        if !(lower >= 0.0) || lower + 1.0 > (self.len() - 1) as f64 {
            return Err(out_of_range());
        }
        self.interpolated.fetch_add(1, Ordering::Relaxed);
        let i = lower as usize;
        let s = pos - lower;
        let (a, b) = (self.sample(i), self.sample(i + 1));
        Ok(DVector::from_iterator(
            self.dim,
            a.iter().zip(b).map(|(a, b)| a + s * (b - a)),
        ))
    }

    /// How many lookups so far took the interpolation path.
    pub fn interpolated_reads(&self) -> usize {
        self.interpolated.load(Ordering::Relaxed)
    }

    /// Appends `segment`, whose first sample must coincide with the last
    /// stored one in both time and value.
    pub fn append(&mut self, segment: &Trajectory) -> Result<()> {
        check_junction(self.dim, self.step, self.end_time(), self.last(), segment)?;
        self.samples.extend_from_slice(&segment.states[self.dim..]);
        Ok(())
    }

    /// Keeps only the newest `count` samples.
    pub fn retain_last(&mut self, count: usize) {
        let len = self.len();
        if count < len {
            let drop = len - count;
            self.samples.drain(..drop * self.dim);
            self.first_tick += drop as i64;
        }
    }

    /// Copy of the stored samples as a trajectory.
    pub fn to_trajectory(&self) -> Trajectory {
        Trajectory {
            start: self.start_time(),
            step: self.step,
            dim: self.dim,
            input_dim: 0,
            states: self.samples.clone(),
            controls: Vec::new(),
        }
    }
}
