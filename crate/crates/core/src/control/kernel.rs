// Fixed-size horizon cost for linear plants and observers. Mirrors the
// operation order of rk4_fixed + horizon_cost, so both paths agree bit for bit.

use nalgebra::DMatrix;

use super::cost::CostSpec;
use crate::models::{ObserverModel, PlantModel};
use crate::ode::{TimeGrid, DIVERGENCE_LIMIT};

pub(crate) type CostFn<'a> = Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>;

struct Kernel<const N: usize, const M: usize, const P: usize> {
    a: [[f64; N]; N],
    b: [[f64; M]; N],
    c: [[f64; N]; P],
    l: [[f64; P]; N],
    q: [[f64; N]; N],
    r: [[f64; M]; M],
    pf: [[f64; N]; N],
    h: f64,
    substeps: usize,
    horizon: usize,
}

fn fixed<const R: usize, const C: usize>(m: &DMatrix<f64>) -> [[f64; C]; R] {
    let mut out = [[0.0; C]; R];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

#[inline(always)]
fn quadratic<const D: usize>(m: &[[f64; D]; D], v: &[f64; D]) -> f64 {
    let mut acc = 0.0;
    for c in 0..D {
        let mut col = 0.0;
        for r in 0..D {
            col += m[r][c] * v[r];
        }
        acc += col * v[c];
    }
    acc
}

struct Delayed<'a, const N: usize, const P: usize> {
    xi: &'a [[f64; N]],
    y: &'a [[f64; P]],
}

impl<const N: usize, const M: usize, const P: usize> Kernel<N, M, P> {
    fn new(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        c: Option<&DMatrix<f64>>,
        l: Option<&DMatrix<f64>>,
        cost: &CostSpec,
        grid: &TimeGrid,
    ) -> Self {
        Self {
            a: fixed(a),
            b: fixed(b),
            c: c.map(fixed).unwrap_or([[0.0; N]; P]),
            l: l.map(fixed).unwrap_or([[0.0; P]; N]),
            q: fixed(cost.q()),
            r: fixed(cost.r()),
            pf: fixed(cost.terminal()),
            h: grid.step(),
            substeps: grid.substeps(),
            horizon: grid.horizon(),
        }
    }

    #[inline(always)]
    fn rhs(&self, x: &[f64; N], u: &[f64; M], delayed: Option<(&[f64; N], &[f64; P])>) -> [f64; N] {
        let mut d = [0.0; N];
        for (r, dr) in d.iter_mut().enumerate() {
            let mut acc = 0.0;
            for q in 0..N {
                acc += self.a[r][q] * x[q];
            }
            *dr = acc;
        }
        for (r, dr) in d.iter_mut().enumerate() {
            let mut acc = 0.0;
            for q in 0..M {
                acc += self.b[r][q] * u[q];
            }
            *dr += acc;
        }
        if let Some((xd, yd)) = delayed {
            for k in 0..P {
                let mut predicted = 0.0;
                for q in 0..N {
                    predicted += self.c[k][q] * xd[q];
                }
                let innovation = predicted - yd[k];
                for (r, dr) in d.iter_mut().enumerate() {
                    *dr -= self.l[r][k] * innovation;
                }
            }
        }
        d
    }

    fn stage(&self, x: &[f64; N], v: &[f64; M]) -> f64 {
        quadratic(&self.q, x) + quadratic(&self.r, v)
    }

    fn cost(&self, x0: &[f64], flat: &[f64], delayed: Option<&Delayed<N, P>>) -> f64 {
        let step = self.h;
        let half = 0.5 * step;
        let sixth = step / 6.0;
        let k = self.substeps;
        let mut x = [0.0; N];
        x.copy_from_slice(x0);
        let mut stages = vec![0.0; k + 1];
        let mut total = 0.0;
        let mut i = 0;
        for j in 0..self.horizon {
            let mut u = [0.0; M];
            u.copy_from_slice(&flat[j * M..(j + 1) * M]);
            stages[0] = self.stage(&x, &u);
            for s in 1..=k {
                let (start, mid, end) = match delayed {
                    Some(d) => {
                        let mut xm = [0.0; N];
                        for q in 0..N {
                            xm[q] = 0.5 * (d.xi[i][q] + d.xi[i + 1][q]);
                        }
                        let mut ym = [0.0; P];
                        for q in 0..P {
                            ym[q] = 0.5 * (d.y[i][q] + d.y[i + 1][q]);
                        }
                        (
                            Some((d.xi[i], d.y[i])),
                            Some((xm, ym)),
                            Some((d.xi[i + 1], d.y[i + 1])),
                        )
                    }
                    None => (None, None, None),
                };
                let k1 = self.rhs(&x, &u, pair(&start));
                let mut probe = [0.0; N];
                for q in 0..N {
                    probe[q] = x[q] + half * k1[q];
                }
                let k2 = self.rhs(&probe, &u, pair(&mid));
                for q in 0..N {
                    probe[q] = x[q] + half * k2[q];
                }
                let k3 = self.rhs(&probe, &u, pair(&mid));
                for q in 0..N {
                    probe[q] = x[q] + step * k3[q];
                }
                let k4 = self.rhs(&probe, &u, pair(&end));
                for q in 0..N {
                    x[q] += sixth * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
                }
                if !x
                    .iter()
                    .all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT)
                {
                    return f64::INFINITY;
                }
                stages[s] = self.stage(&x, &u);
                i += 1;
            }
            let mut sum = stages[0] + stages[k];
            for (s, value) in stages.iter().enumerate().take(k).skip(1) {
                let w = if s % 2 == 1 { 4.0 } else { 2.0 };
                sum += w * value;
            }
            total += sum * step / 3.0;
        }
        total + quadratic(&self.pf, &x)
    }
}

#[inline(always)]
fn pair<const N: usize, const P: usize>(
    v: &Option<([f64; N], [f64; P])>,
) -> Option<(&[f64; N], &[f64; P])> {
    v.as_ref().map(|(a, b)| (a, b))
}

fn chunk<const D: usize>(flat: &[f64]) -> Vec<[f64; D]> {
    flat.chunks_exact(D.max(1))
        .map(|c| {
            let mut a = [0.0; D];
            a.copy_from_slice(&c[..D]);
            a
        })
        .collect()
}

fn observer_cost<'a, const N: usize, const M: usize, const P: usize>(
    obs: &dyn ObserverModel,
    cost: &CostSpec,
    grid: &TimeGrid,
    xi0: &'a [f64],
    xi_delayed: &[f64],
    y_delayed: &[f64],
) -> Option<CostFn<'a>> {
    let parts = obs.linear_parts()?;
    let kernel = Kernel::<N, M, P>::new(
        parts.a,
        parts.b,
        Some(parts.c),
        Some(parts.injection),
        cost,
        grid,
    );
    let xi = chunk::<N>(xi_delayed);
    let y = chunk::<P>(y_delayed);
    Some(Box::new(move |flat: &[f64]| {
        kernel.cost(xi0, flat, Some(&Delayed { xi: &xi, y: &y }))
    }))
}

fn plant_cost<'a, const N: usize, const M: usize>(
    model: &dyn PlantModel,
    cost: &CostSpec,
    grid: &TimeGrid,
    x0: &'a [f64],
) -> Option<CostFn<'a>> {
    let (a, b) = model.linear_parts()?;
    let kernel = Kernel::<N, M, 0>::new(a, b, None, None, cost, grid);
    Some(Box::new(move |flat: &[f64]| kernel.cost(x0, flat, None)))
}

macro_rules! dispatch {
    ($key:expr, $call:ident, $args:tt; $(($n:literal, $m:literal $(, $p:literal)?)),*) => {
        match $key {
            $( ($n, $m $(, $p)?) => $call::<$n, $m $(, $p)?> $args, )*
            _ => None,
        }
    };
}

/// Fixed-size cost of the retarded-observer prediction, `None` when the
/// observer is not linear or its dimensions have no specialisation.
pub(crate) fn linear_observer_cost<'a>(
    obs: &dyn ObserverModel,
    cost: &CostSpec,
    grid: &TimeGrid,
    xi0: &'a [f64],
    xi_delayed: &[f64],
    y_delayed: &[f64],
) -> Option<CostFn<'a>> {
    let key = (obs.state_dim(), obs.input_dim(), obs.output_dim());
    dispatch!(key, observer_cost, (obs, cost, grid, xi0, xi_delayed, y_delayed);
        (1, 1, 1), (2, 1, 1), (2, 2, 1), (2, 2, 2), (3, 1, 1), (3, 3, 1), (3, 3, 3))
}

pub(crate) fn linear_plant_cost<'a>(
    model: &dyn PlantModel,
    cost: &CostSpec,
    grid: &TimeGrid,
    x0: &'a [f64],
) -> Option<CostFn<'a>> {
    let key = (model.state_dim(), model.input_dim());
    dispatch!(key, plant_cost, (model, cost, grid, x0);
        (1, 1), (2, 1), (2, 2), (3, 1), (3, 3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::cost::horizon_cost;
    use crate::control::loops::{
        advance_retarded, predict_model, predict_observer, DelayedInputs, MpcLoopState,
    };
    use crate::models::{ExamplePlant, LinearPlant, LuenbergerObserver, DEFAULT_LAMBDA};
    use crate::ode::{ControlBox, ControlSequence};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn controls(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-25.0..25.0)).collect()
    }

    #[test]
    fn observer_kernel_matches_integrated_cost() {
        let grid = TimeGrid::new(0.1, 5, 20).unwrap();
        let cost = CostSpec::standard(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for which in [ExamplePlant::One, ExamplePlant::Two] {
            let plant = LinearPlant::example(which);
            let obs =
                LuenbergerObserver::example(which, DEFAULT_LAMBDA, grid.horizon_span()).unwrap();
            let mut state =
                MpcLoopState::constant(&plant, &grid, &[11.0, 8.0], &[0.0, 0.0]).unwrap();
            for _ in 0..7 {
                let u = controls(&mut rng, 2);
                advance_retarded(&mut state, &plant, &obs, &grid, &u, None).unwrap();
            }
            let delayed = DelayedInputs::gather(&state, grid.horizon_steps(), false).unwrap();
            let xi = state.observer_state().to_vec();
            let fast =
                linear_observer_cost(&obs, &cost, &grid, &xi, &delayed.xi, &delayed.y).unwrap();
            let bounds = ControlBox::symmetric(2, 25.0).unwrap();
            for _ in 0..20 {
                let flat = controls(&mut rng, 10);
                let seq = ControlSequence::from_flat(flat.clone(), bounds.clone()).unwrap();
                let path = predict_observer(&state, &seq, &obs, &grid).unwrap();
                assert_eq!(fast(&flat), horizon_cost(&path, &flat, &cost, &grid));
            }
        }
    }

    #[test]
    fn plant_kernel_matches_integrated_cost() {
        let grid = TimeGrid::new(0.1, 5, 20).unwrap();
        let cost = CostSpec::standard(2, 2);
        let plant = LinearPlant::example(ExamplePlant::Two);
        let x0 = [3.0, -2.0];
        let fast = linear_plant_cost(&plant, &cost, &grid, &x0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let flat = controls(&mut rng, 10);
            let path = predict_model(&plant, &x0, 0.4, &flat, &grid).unwrap();
            assert_eq!(fast(&flat), horizon_cost(&path, &flat, &cost, &grid));
        }
    }

    #[test]
    fn unsupported_dimensions_fall_back() {
        let grid = TimeGrid::new(0.1, 2, 4).unwrap();
        let n = 5;
        let plant = LinearPlant::new(
            nalgebra::DMatrix::identity(n, n),
            nalgebra::DMatrix::identity(n, n),
            nalgebra::DMatrix::identity(1, n),
        )
        .unwrap();
        let x0 = vec![0.0; n];
        assert!(linear_plant_cost(&plant, &CostSpec::standard(n, n), &grid, &x0).is_none());
    }
}
