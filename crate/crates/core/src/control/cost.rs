//! Quadratic cost `J_N = Σ_j ∫ l(ξ, v_j) dt + F(ξ(t_N))` with
//! `l(ξ, v) = ξᵀQξ + vᵀRv` and `F(ξ) = ξᵀP_f ξ`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ode::{ControlSequence, TimeGrid, Trajectory};
use crate::stability::linalg::symmetric_eigenvalues;

#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    terminal: DMatrix<f64>,
}

impl CostSpec {
    /// All three weights must be symmetric positive semidefinite.
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, terminal: DMatrix<f64>) -> Result<Self> {
        check_weight("Q", &q)?;
        check_weight("R", &r)?;
        check_weight("P_f", &terminal)?;
        if terminal.nrows() != q.nrows() {
            return Err(Error::invalid("P_f", "must match the dimension of Q"));
        }
        Ok(Self { q, r, terminal })
    }

    /// `Q = Id`, `R = 0.01·Id`, `P_f = Id`.
    pub fn standard(n: usize, m: usize) -> Self {
        Self {
            q: DMatrix::identity(n, n),
            r: DMatrix::identity(m, m) * 0.01,
            terminal: DMatrix::identity(n, n),
        }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn terminal(&self) -> &DMatrix<f64> {
        &self.terminal
    }

    pub fn state_dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn stage(&self, xi: &[f64], v: &[f64]) -> f64 {
        quadratic_form(&self.q, xi) + quadratic_form(&self.r, v)
    }

    pub fn terminal_cost(&self, xi: &[f64]) -> f64 {
        quadratic_form(&self.terminal, xi)
    }
}

fn check_weight(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid(name, "must be square"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(name, "must be finite"));
    }
    let scale = 1.0 + m.amax();
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::invalid(name, "must be symmetric"));
    }
    if m.nrows() > 0 {
        let eig = symmetric_eigenvalues(m)?;
        if eig.iter().any(|e| *e < -1e-12 * scale) {
            return Err(Error::invalid(name, "must be positive semidefinite"));
        }
    }
    Ok(())
}

fn quadratic_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (c, vc) in v.iter().enumerate() {
        let mut col = 0.0;
        for (r, vr) in v.iter().enumerate() {
            col += m[(r, c)] * vr;
        }
        acc += col * vc;
    }
    acc
}

/// `J_N` of a predicted path covering exactly one horizon, stage integrals
/// by composite Simpson on the integration grid (`K` must be even).
pub fn cost_functional(
    predicted: &Trajectory,
    seq: &ControlSequence,
    cost: &CostSpec,
    grid: &TimeGrid,
) -> Result<f64> {
    if grid.substeps() % 2 != 0 {
        return Err(Error::invalid(
            "K",
            "Simpson quadrature needs an even substep count",
        ));
    }
    if predicted.len() != grid.horizon_steps() + 1 {
        return Err(Error::invalid(
            "predicted",
            format!(
                "expected {} samples for one horizon, got {}",
                grid.horizon_steps() + 1,
                predicted.len()
            ),
        ));
    }
    if seq.len() != grid.horizon() {
        return Err(Error::invalid(
            "seq",
            "one control value per sampling interval required",
        ));
    }
    if predicted.state_dim() != cost.state_dim() || seq.input_dim() != cost.input_dim() {
        return Err(Error::invalid(
            "cost",
            "weight dimensions do not match the problem",
        ));
    }
    Ok(horizon_cost(predicted, seq.as_flat(), cost, grid))
}

pub(crate) fn horizon_cost(
    predicted: &Trajectory,
    controls: &[f64],
    cost: &CostSpec,
    grid: &TimeGrid,
) -> f64 {
    let k = grid.substeps();
    let m = cost.input_dim();
    let h = grid.step();
    let mut total = 0.0;
    for j in 0..grid.horizon() {
        let v = &controls[j * m..(j + 1) * m];
        let base = j * k;
        let mut sum =
            cost.stage(predicted.state(base), v) + cost.stage(predicted.state(base + k), v);
        for i in 1..k {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * cost.stage(predicted.state(base + i), v);
        }
        total += sum * h / 3.0;
    }
    total + cost.terminal_cost(predicted.last_state())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::ControlBox;
    use nalgebra::DVector;

    fn constant_path(grid: &TimeGrid, value: &[f64]) -> Trajectory {
        let states = vec![DVector::from_column_slice(value); grid.horizon_steps() + 1];
        Trajectory::from_samples(0.0, grid.step(), &states, &[]).unwrap()
    }

    fn zero_weights(n: usize, m: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::zeros(n, n),
            DMatrix::zeros(m, m),
            DMatrix::zeros(n, n),
        )
    }

    #[test]
    fn zero_path_zero_cost() {
        let grid = TimeGrid::new(0.1, 5, 20).unwrap();
        let seq = ControlSequence::zeros(5, ControlBox::symmetric(2, 25.0).unwrap()).unwrap();
        let j = cost_functional(
            &constant_path(&grid, &[0.0, 0.0]),
            &seq,
            &CostSpec::standard(2, 2),
            &grid,
        )
        .unwrap();
        assert_eq!(j, 0.0);
    }

    #[test]
    fn constant_state_integrates_exactly() {
        let grid = TimeGrid::new(0.1, 1, 20).unwrap();
        let seq = ControlSequence::zeros(1, ControlBox::symmetric(2, 1.0).unwrap()).unwrap();
        let (_, r, pf) = zero_weights(2, 2);
        let cost = CostSpec::new(DMatrix::identity(2, 2), r, pf).unwrap();
        let j = cost_functional(&constant_path(&grid, &[3.0, 4.0]), &seq, &cost, &grid).unwrap();
        assert!((j - 0.1 * 25.0).abs() < 1e-12, "{j}");
    }

    #[test]
    fn cost_is_linear_in_q() {
        let grid = TimeGrid::new(0.1, 5, 20).unwrap();
        let seq = ControlSequence::zeros(5, ControlBox::symmetric(2, 1.0).unwrap()).unwrap();
        let states: Vec<DVector<f64>> = (0..=grid.horizon_steps())
            .map(|i| DVector::from_column_slice(&[(i as f64 * 0.01).sin(), 1.0 - i as f64 * 0.002]))
            .collect();
        let path = Trajectory::from_samples(0.0, grid.step(), &states, &[]).unwrap();
        let (_, r, pf) = zero_weights(2, 2);
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let j1 = cost_functional(
            &path,
            &seq,
            &CostSpec::new(q.clone(), r.clone(), pf.clone()).unwrap(),
            &grid,
        )
        .unwrap();
        let j2 =
            cost_functional(&path, &seq, &CostSpec::new(q * 2.0, r, pf).unwrap(), &grid).unwrap();
        assert!((j2 - 2.0 * j1).abs() <= 1e-14 * j2.abs());
    }

    #[test]
    fn simpson_exact_for_cubic_stage_integrand() {
        // ξ(t) = t on [0, 1]: ∫ t² dt = 1/3
        let grid = TimeGrid::new(1.0, 1, 4).unwrap();
        let states: Vec<DVector<f64>> = (0..=4)
            .map(|i| DVector::from_element(1, i as f64 * 0.25))
            .collect();
        let path = Trajectory::from_samples(0.0, 0.25, &states, &[]).unwrap();
        let seq = ControlSequence::zeros(1, ControlBox::symmetric(1, 1.0).unwrap()).unwrap();
        let cost = CostSpec::new(
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let j = cost_functional(&path, &seq, &cost, &grid).unwrap();
        assert!((j - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_odd_substeps_and_span_mismatch() {
        let odd = TimeGrid::new(0.1, 5, 21).unwrap();
        let seq = ControlSequence::zeros(5, ControlBox::symmetric(2, 1.0).unwrap()).unwrap();
        let cost = CostSpec::standard(2, 2);
        assert!(cost_functional(&constant_path(&odd, &[0.0, 0.0]), &seq, &cost, &odd).is_err());
        let grid = TimeGrid::new(0.1, 5, 20).unwrap();
        let short = TimeGrid::new(0.1, 4, 20).unwrap();
        assert!(cost_functional(&constant_path(&short, &[0.0, 0.0]), &seq, &cost, &grid).is_err());
    }

    #[test]
    fn weight_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(CostSpec::new(asym, DMatrix::identity(2, 2), DMatrix::identity(2, 2)).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(
            CostSpec::new(DMatrix::identity(2, 2), indefinite, DMatrix::identity(2, 2)).is_err()
        );
    }
}
