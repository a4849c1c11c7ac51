//! Plant and observer right-hand sides.
//!
//! A plant is `ẋ = f(x, u), y = h(x)`. An observer is
//! `ξ̇ = g(ξ(t), ξ(t-θ), y(t-θ), u)`; non-retarded observers have `θ = 0` and
//! receive the current state and output in the delayed slots.

use nalgebra::{DMatrix, DVector};

use crate::control::loops::{advance_retarded, advance_stacked, MpcLoopState};
use crate::error::{Error, Result};
use crate::ode::{norm, HistoryBuffer, TimeGrid};
use crate::stability::envelope::{fit_envelope, EnvelopeOutcome, NormSeries};

/// `ẋ = f(x, u)`, `y = h(x)` with `f` locally Lipschitz and `h(0) = 0`.
pub trait PlantModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]);
    fn output(&self, x: &[f64], y: &mut [f64]);

    /// `(A, B)` when `f(x, u) = Ax + Bu`. Lets the optimizer use a
    /// fixed-size evaluation path.
    fn linear_parts(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        None
    }
}

/// `ξ̇ = g(ξ, ξ_delayed, y_delayed, u)` with delay `θ = delay()`.
///
/// Solutions are assumed unique for initial histories near the origin.
pub trait ObserverModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn delay(&self) -> f64;
    fn rhs(&self, xi: &[f64], xi_delayed: &[f64], y_delayed: &[f64], u: &[f64], dxi: &mut [f64]);

    /// Set when `g = Aξ + Bu - L(Cξ_delayed - y_delayed)`.
    fn linear_parts(&self) -> Option<LinearObserverParts<'_>> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearObserverParts<'a> {
    pub a: &'a DMatrix<f64>,
    pub b: &'a DMatrix<f64>,
    pub c: &'a DMatrix<f64>,
    pub injection: &'a DMatrix<f64>,
}

/// The two plants used in the reproduction experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExamplePlant {
    /// `A = [[-1, 1], [1, -1]]`
    One,
    /// `A = [[0, 1], [-1, 0]]`
    Two,
}

/// Default observer gain parameter `λ` for both examples.
pub const DEFAULT_LAMBDA: f64 = 1.2;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    dense: [Dense; 3],
}

// Row-major copy for the integration hot path.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    cols: usize,
    data: Vec<f64>,
}

impl Dense {
    pub(crate) fn new(m: &DMatrix<f64>) -> Self {
        Self {
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    // out = M·v
    #[inline]
    pub(crate) fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            let mut acc = 0.0;
            for (m, x) in row.iter().zip(v) {
                acc += m * x;
            }
            *o = acc;
        }
    }

    // out += M·v
    #[inline]
    fn apply_add(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            let mut acc = 0.0;
            for (m, x) in row.iter().zip(v) {
                acc += m * x;
            }
            *o += acc;
        }
    }
}

impl LinearPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::invalid(
                "A",
                "system matrix must be square and nonempty",
            ));
        }
        if b.nrows() != n {
            return Err(Error::invalid(
                "B",
                format!("expected {n} rows, got {}", b.nrows()),
            ));
        }
        if c.ncols() != n {
            return Err(Error::invalid(
                "C",
                format!("expected {n} columns, got {}", c.ncols()),
            ));
        }
        if a.iter()
            .chain(b.iter())
            .chain(c.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("A", "matrices must be finite"));
        }
        Ok(Self::assemble(a, b, c))
    }

    fn assemble(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Self {
        let dense = [Dense::new(&a), Dense::new(&b), Dense::new(&c)];
        Self { a, b, c, dense }
    }

    pub fn example(which: ExamplePlant) -> Self {
        let a = match which {
            ExamplePlant::One => DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]),
            ExamplePlant::Two => DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        };
        Self::assemble(
            a,
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
}

impl PlantModel for LinearPlant {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    fn rhs(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        self.dense[0].apply(x, dx);
        self.dense[1].apply_add(u, dx);
    }

    fn output(&self, x: &[f64], y: &mut [f64]) {
        self.dense[2].apply(x, y);
    }

    fn linear_parts(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        Some((&self.a, &self.b))
    }
}

/// `Λ(λ) = diag(λ, λ², …, λⁿ)`.
pub fn gain_scaling(lambda: f64, n: usize) -> Result<DMatrix<f64>> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(
            "lambda",
            format!("must be positive, got {lambda}"),
        ));
    }
    Ok(DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        (1..=n as i32).map(|i| lambda.powi(i)),
    )))
}

/// Luenberger observer `ξ̇ = Aξ + Bu - Λ(λ)K(Cξ(t-τ) - y(t-τ))` for a linear
/// plant; `τ = 0` gives the ordinary observer.
#[derive(Debug, Clone, PartialEq)]
pub struct LuenbergerObserver {
    plant: LinearPlant,
    lambda: f64,
    gain: DMatrix<f64>,
    injection: DMatrix<f64>,
    injection_dense: Dense,
    delay: f64,
}

impl LuenbergerObserver {
    pub fn new(plant: LinearPlant, lambda: f64, gain: DMatrix<f64>, delay: f64) -> Result<Self> {
        let n = plant.state_dim();
        let p = plant.output_dim();
        if gain.nrows() != n || gain.ncols() != p {
            return Err(Error::invalid(
                "gain",
                format!("expected {n}x{p}, got {}x{}", gain.nrows(), gain.ncols()),
            ));
        }
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(Error::invalid(
                "delay",
                format!("must be non-negative, got {delay}"),
            ));
        }
        let injection = gain_scaling(lambda, n)? * &gain;
        Ok(Self {
            plant,
            lambda,
            gain,
            injection_dense: Dense::new(&injection),
            injection,
            delay,
        })
    }

    /// Observer for one of the example plants with `K = (1, 0.5)ᵀ`.
    pub fn example(which: ExamplePlant, lambda: f64, delay: f64) -> Result<Self> {
        Self::new(
            LinearPlant::example(which),
            lambda,
            DMatrix::from_column_slice(2, 1, &[1.0, 0.5]),
            delay,
        )
    }

    pub fn plant(&self) -> &LinearPlant {
        &self.plant
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// `Λ(λ)·K`.
    pub fn injection(&self) -> &DMatrix<f64> {
        &self.injection
    }

    pub fn is_retarded(&self) -> bool {
        self.delay > 0.0
    }

    /// `A - Λ(λ)KC`, the error dynamics without delay.
    pub fn error_matrix(&self) -> DMatrix<f64> {
        self.plant.a() - &self.injection * self.plant.c()
    }
}

impl ObserverModel for LuenbergerObserver {
    fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.plant.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.plant.output_dim()
    }

    fn delay(&self) -> f64 {
        self.delay
    }

    fn linear_parts(&self) -> Option<LinearObserverParts<'_>> {
        Some(LinearObserverParts {
            a: self.plant.a(),
            b: self.plant.b(),
            c: self.plant.c(),
            injection: &self.injection,
        })
    }

    fn rhs(&self, xi: &[f64], xi_delayed: &[f64], y_delayed: &[f64], u: &[f64], dxi: &mut [f64]) {
        self.plant.rhs(xi, u, dxi);
        let c = &self.plant.dense[2];
        let l = &self.injection_dense;
        for (k, yk) in y_delayed.iter().enumerate() {
            let mut predicted = 0.0;
            for (m, v) in c.data[k * c.cols..(k + 1) * c.cols].iter().zip(xi_delayed) {
                predicted += m * v;
            }
            let innovation = predicted - yk;
            for (r, d) in dxi.iter_mut().enumerate() {
                *d -= l.data[r * l.cols + k] * innovation;
            }
        }
    }
}

fn check_len(name: &'static str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::invalid(
            name,
            format!("expected dimension {want}, got {got}"),
        ))
    }
}

pub fn plant_rhs(
    plant: &dyn PlantModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("x", x.len(), plant.state_dim())?;
    check_len("u", u.len(), plant.input_dim())?;
    let mut dx = DVector::zeros(x.len());
    plant.rhs(x.as_slice(), u.as_slice(), dx.as_mut_slice());
    Ok(dx)
}

pub fn plant_output(plant: &dyn PlantModel, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("x", x.len(), plant.state_dim())?;
    let mut y = DVector::zeros(plant.output_dim());
    plant.output(x.as_slice(), y.as_mut_slice());
    Ok(y)
}

/// Non-retarded observer right-hand side driven by the current output.
pub fn luenberger_rhs(
    obs: &LuenbergerObserver,
    xi: &DVector<f64>,
    y: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    if obs.is_retarded() {
        return Err(Error::ContractViolation(
            "retarded observer evaluated without delayed arguments".into(),
        ));
    }
    observer_rhs(obs, xi, xi, y, u)
}

/// Retarded observer right-hand side; the innovation uses `ξ(t-τ)`, `y(t-τ)`.
pub fn retarded_luenberger_rhs(
    obs: &LuenbergerObserver,
    xi: &DVector<f64>,
    xi_delayed: &DVector<f64>,
    y_delayed: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    if !obs.is_retarded() {
        return Err(Error::ContractViolation(
            "non-retarded observer evaluated with delayed arguments".into(),
        ));
    }
    observer_rhs(obs, xi, xi_delayed, y_delayed, u)
}

fn observer_rhs(
    obs: &dyn ObserverModel,
    xi: &DVector<f64>,
    xi_delayed: &DVector<f64>,
    y: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("xi", xi.len(), obs.state_dim())?;
    check_len("xi_delayed", xi_delayed.len(), obs.state_dim())?;
    check_len("y", y.len(), obs.output_dim())?;
    check_len("u", u.len(), obs.input_dim())?;
    let mut d = DVector::zeros(xi.len());
    obs.rhs(
        xi.as_slice(),
        xi_delayed.as_slice(),
        y.as_slice(),
        u.as_slice(),
        d.as_mut_slice(),
    );
    Ok(d)
}

/// Co-simulates plant and observer from identical histories under the same
/// controls (one per sampling interval, cycled if shorter than the span) and
/// returns `max_t ‖ξ(t) - x(t)‖`.
///
/// Both histories must cover `[-N·T, 0]` on the integration grid and agree
/// sample for sample.
pub fn check_a1_identity(
    plant: &dyn PlantModel,
    obs: &dyn ObserverModel,
    grid: &TimeGrid,
    plant_history: &HistoryBuffer,
    observer_history: &HistoryBuffer,
    controls: &[DVector<f64>],
    span: f64,
) -> Result<f64> {
    if plant_history != observer_history {
        return Err(Error::Precondition(
            "observer history differs from plant history".into(),
        ));
    }
    if controls.is_empty() {
        return Err(Error::invalid(
            "controls",
            "need at least one control value",
        ));
    }
    if controls.iter().any(|u| u.len() != plant.input_dim()) {
        return Err(Error::invalid("controls", "control dimension mismatch"));
    }
    let periods = grid.periods_in(span)?;
    let x0 = plant_history.last().to_vec();

    let mut worst: f64 = 0.0;
    if obs.delay() > 0.0 {
        let mut state =
            MpcLoopState::from_histories(plant, grid, observer_history.clone(), plant_history)?;
        for j in 0..periods {
            let u = controls[j % controls.len()].as_slice();
            let (x_seg, xi_seg) = advance_retarded(&mut state, plant, obs, grid, u, None)?;
            worst = worst.max(max_deviation(&x_seg, &xi_seg));
        }
    } else {
        let mut x = x0.clone();
        let mut xi = x0;
        let mut t = 0.0;
        for j in 0..periods {
            let u = controls[j % controls.len()].as_slice();
            let (x_seg, xi_seg) = advance_stacked(plant, obs, grid, t, &x, &xi, u)?;
            worst = worst.max(max_deviation(&x_seg, &xi_seg));
            x = x_seg.last_state().to_vec();
            xi = xi_seg.last_state().to_vec();
            t = x_seg.end_time();
        }
    }
    Ok(worst)
}

fn max_deviation(a: &crate::ode::Trajectory, b: &crate::ode::Trajectory) -> f64 {
    (0..a.len())
        .map(|i| {
            let d: Vec<f64> = a
                .state(i)
                .iter()
                .zip(b.state(i))
                .map(|(p, q)| p - q)
                .collect();
            norm(&d)
        })
        .fold(0.0, f64::max)
}

/// Fits `‖e(t)‖ ≤ c·‖e(0)‖·e^{-σt}` to estimation-error norm series.
///
/// Requires at least three series with distinct positive initial norms.
pub fn fit_a2_envelope(series: &[NormSeries]) -> Result<EnvelopeOutcome> {
    if series
        .iter()
        .all(|s| s.initial == 0.0 && s.norms.iter().all(|n| *n == 0.0))
    {
        return Ok(fit_envelope(series, 0.0));
    }
    if series.len() < 3 {
        return Err(Error::invalid(
            "series",
            "need at least three error trajectories",
        ));
    }
    let mut initial: Vec<f64> = series.iter().map(|s| s.initial).collect();
    if initial.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::invalid(
            "series",
            "initial error norms must be positive",
        ));
    }
    initial.sort_by(f64::total_cmp);
    if initial.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid(
            "series",
            "initial error norms must be distinct",
        ));
    }
    Ok(fit_envelope(series, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn example_one_plant_rhs() {
        let p = LinearPlant::example(ExamplePlant::One);
        assert_eq!(
            plant_rhs(&p, &v(&[1.0, 0.0]), &v(&[0.0, 0.0])).unwrap(),
            v(&[-1.0, 1.0])
        );
        assert_eq!(
            plant_rhs(&p, &v(&[0.0, 0.0]), &v(&[0.0, 0.0])).unwrap(),
            v(&[0.0, 0.0])
        );
    }

    #[test]
    fn example_two_plant_rhs() {
        let p = LinearPlant::example(ExamplePlant::Two);
        assert_eq!(
            plant_rhs(&p, &v(&[0.0, 1.0]), &v(&[0.0, 0.0])).unwrap(),
            v(&[1.0, 0.0])
        );
    }

    #[test]
    fn plant_rhs_rejects_bad_dimensions() {
        let p = LinearPlant::example(ExamplePlant::One);
        assert!(matches!(
            plant_rhs(&p, &v(&[1.0]), &v(&[0.0, 0.0])),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(plant_output(&p, &v(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn output_is_first_coordinate() {
        let p = LinearPlant::example(ExamplePlant::One);
        assert_eq!(plant_output(&p, &v(&[11.0, 8.0])).unwrap()[0], 11.0);
        assert_eq!(plant_output(&p, &v(&[0.0, 5.0])).unwrap()[0], 0.0);
    }

    #[test]
    fn registered_plants_have_zero_output_at_origin() {
        for which in [ExamplePlant::One, ExamplePlant::Two] {
            let p = LinearPlant::example(which);
            assert_eq!(plant_output(&p, &v(&[0.0, 0.0])).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn gain_scaling_powers() {
        let g = gain_scaling(1.2, 2).unwrap();
        assert_eq!(g[(0, 0)], 1.2);
        assert!((g[(1, 1)] - 1.44).abs() < 1e-15);
        assert_eq!(g[(0, 1)], 0.0);
        assert_eq!(gain_scaling(1.0, 4).unwrap(), DMatrix::identity(4, 4));
        assert_eq!(
            gain_scaling(2.0, 3).unwrap(),
            DMatrix::from_diagonal(&v(&[2.0, 4.0, 8.0]))
        );
        assert!(gain_scaling(0.0, 2).is_err());
        assert!(gain_scaling(-1.0, 2).is_err());
    }

    #[test]
    fn luenberger_examples() {
        let obs = LuenbergerObserver::example(ExamplePlant::One, 1.2, 0.0).unwrap();
        let z = v(&[0.0, 0.0]);
        let d = luenberger_rhs(&obs, &v(&[1.0, 0.0]), &v(&[1.0]), &z).unwrap();
        assert_eq!(d, v(&[-1.0, 1.0]));
        let d = luenberger_rhs(&obs, &v(&[1.0, 0.0]), &v(&[0.0]), &z).unwrap();
        assert!(
            (d[0] + 2.2).abs() < 1e-12 && (d[1] - 0.28).abs() < 1e-12,
            "{d}"
        );
        // ξ in ker A with Cξ = y
        let d = luenberger_rhs(&obs, &v(&[1.0, 1.0]), &v(&[1.0]), &z).unwrap();
        assert_eq!(d, z);
    }

    #[test]
    fn retarded_examples() {
        let obs = LuenbergerObserver::example(ExamplePlant::One, 1.2, 0.5).unwrap();
        let z = v(&[0.0, 0.0]);
        let d = retarded_luenberger_rhs(&obs, &z, &v(&[1.0, 0.0]), &v(&[1.0]), &z).unwrap();
        assert_eq!(d, z);
        let d = retarded_luenberger_rhs(&obs, &z, &v(&[1.0, 0.0]), &v(&[0.0]), &z).unwrap();
        assert!(
            (d[0] + 1.2).abs() < 1e-12 && (d[1] + 0.72).abs() < 1e-12,
            "{d}"
        );
        // innovation vanishes → plant dynamics at (ξ, u)
        let xi = v(&[3.0, -2.0]);
        let u = v(&[0.5, 1.5]);
        let d = retarded_luenberger_rhs(&obs, &xi, &v(&[4.0, 9.0]), &v(&[4.0]), &u).unwrap();
        assert_eq!(d, plant_rhs(obs.plant(), &xi, &u).unwrap());
    }

    #[test]
    fn observer_kind_contract() {
        let plain = LuenbergerObserver::example(ExamplePlant::One, 1.2, 0.0).unwrap();
        let retarded = LuenbergerObserver::example(ExamplePlant::One, 1.2, 0.5).unwrap();
        let z = v(&[0.0, 0.0]);
        assert!(matches!(
            luenberger_rhs(&retarded, &z, &v(&[0.0]), &z),
            Err(Error::ContractViolation(_))
        ));
        assert!(matches!(
            retarded_luenberger_rhs(&plain, &z, &z, &v(&[0.0]), &z),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn observer_rejects_bad_parameters() {
        assert!(LuenbergerObserver::example(ExamplePlant::One, 0.0, 0.0).is_err());
        assert!(LuenbergerObserver::example(ExamplePlant::One, 1.2, -0.1).is_err());
        let p = LinearPlant::example(ExamplePlant::One);
        assert!(LuenbergerObserver::new(p, 1.2, DMatrix::zeros(3, 1), 0.0).is_err());
    }

    #[test]
    fn error_matrix_example_one() {
        let obs = LuenbergerObserver::example(ExamplePlant::One, 1.2, 0.0).unwrap();
        let m = obs.error_matrix();
        let want = DMatrix::from_row_slice(2, 2, &[-2.2, 1.0, 0.28, -1.0]);
        assert!((m - want).amax() < 1e-12);
    }

    fn histories(grid: &TimeGrid, value: &[f64]) -> HistoryBuffer {
        let len = grid.horizon_steps() + 1;
        HistoryBuffer::constant(value, 0.0, -(grid.horizon_steps() as i64), grid.step(), len)
            .unwrap()
    }

    #[test]
    fn a1_identity_holds_for_matched_histories() {
        let grid = TimeGrid::new(0.1, 5, 20).unwrap();
        let controls = [v(&[0.0, 0.0])];
        for which in [ExamplePlant::One, ExamplePlant::Two] {
            let plant = LinearPlant::example(which);
            for delay in [0.0, grid.horizon_span()] {
                let obs = LuenbergerObserver::example(which, 1.2, delay).unwrap();
                let h = histories(&grid, &[11.0, 8.0]);
                let dev = check_a1_identity(&plant, &obs, &grid, &h, &h, &controls, 5.0).unwrap();
                assert!(dev <= 1e-9, "{which:?} delay {delay}: {dev}");
            }
        }
        let plant = LinearPlant::example(ExamplePlant::One);
        let obs = LuenbergerObserver::example(ExamplePlant::One, 1.2, 0.5).unwrap();
        let h = histories(&grid, &[0.0, 0.0]);
        let varied = [v(&[3.0, -1.0]), v(&[-2.0, 4.0]), v(&[0.5, 0.5])];
        let dev = check_a1_identity(&plant, &obs, &grid, &h, &h, &varied, 5.0).unwrap();
        assert!(dev <= 1e-9);
    }

    #[test]
    fn a1_identity_rejects_mismatched_histories() {
        let grid = TimeGrid::new(0.1, 5, 20).unwrap();
        let plant = LinearPlant::example(ExamplePlant::One);
        let obs = LuenbergerObserver::example(ExamplePlant::One, 1.2, 0.5).unwrap();
        let hx = histories(&grid, &[11.0, 8.0]);
        let hxi = histories(&grid, &[0.0, 0.0]);
        let err = check_a1_identity(&plant, &obs, &grid, &hx, &hxi, &[v(&[0.0, 0.0])], 1.0);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn a2_fit_preconditions() {
        let s = |r: f64| NormSeries::new(r, vec![0.0, 1.0], vec![r, r * 0.5]).unwrap();
        assert!(fit_a2_envelope(&[s(1.0), s(2.0)]).is_err());
        assert!(fit_a2_envelope(&[s(1.0), s(1.0), s(2.0)]).is_err());
        assert!(fit_a2_envelope(&[s(1.0), s(2.0), s(3.0)]).is_ok());
    }

    #[test]
    fn a2_fit_recovers_unit_exponential() {
        let series: Vec<NormSeries> = [1.0, 2.5, 7.0]
            .iter()
            .map(|&r| {
                let times: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
                let norms = times.iter().map(|t| r * (-t).exp()).collect();
                NormSeries::new(r, times, norms).unwrap()
            })
            .collect();
        let fit = fit_a2_envelope(&series).unwrap().fit().unwrap();
        assert!((fit.c - 1.0).abs() < 0.01, "{fit:?}");
        assert!((fit.sigma - 1.0).abs() < 0.01, "{fit:?}");
    }

    #[test]
    fn a2_fit_zero_data_is_degenerate_success() {
        let zero = NormSeries::new(0.0, vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let out = fit_a2_envelope(&[zero.clone(), zero]).unwrap();
        assert!(matches!(out, EnvelopeOutcome::ZeroData(fit) if fit.c == 1.0));
    }

    #[test]
    fn a2_fit_reports_non_decaying_error() {
        let series: Vec<NormSeries> = [1.0, 2.0, 3.0]
            .iter()
            .map(|&r| NormSeries::new(r, vec![0.0, 1.0, 2.0], vec![r, r, r]).unwrap())
            .collect();
        assert!(matches!(
            fit_a2_envelope(&series).unwrap(),
            EnvelopeOutcome::NonDecaying { .. }
        ));
    }
}
