use nalgebra::DVector;
use obpc::ode::{rk4_integrate, zoh_value};
use obpc::{ControlBox, ControlSequence, Error, HistoryBuffer, TimeGrid, Trajectory};
use proptest::prelude::*;

fn decay_error(h_substeps: usize) -> f64 {
    let grid = TimeGrid::new(1.0, 1, h_substeps).unwrap();
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
}

#[test]
fn grid_examples() {
    let g = TimeGrid::new(0.1, 5, 20).unwrap();
    assert!((g.step() - 0.005).abs() < 1e-15);
    assert!((g.horizon_span() - 0.5).abs() < 1e-15);
    let unit = TimeGrid::new(1.0, 1, 1).unwrap();
    assert_eq!((unit.step(), unit.horizon_span()), (1.0, 1.0));
    assert!(matches!(
        TimeGrid::new(0.1, 5, 0),
        Err(Error::InvalidParameter { .. })
    ));
    assert!(TimeGrid::new(-0.1, 5, 20).is_err());
    assert!(TimeGrid::new(0.1, 0, 20).is_err());
}

#[test]
fn zoh_boundaries() {
    let grid = TimeGrid::new(0.1, 5, 20).unwrap();
    let flat: Vec<f64> = (0..5).map(f64::from).collect();
    let seq = ControlSequence::from_flat(flat, ControlBox::symmetric(1, 10.0).unwrap()).unwrap();
    let t0 = 2.0;
    assert_eq!(zoh_value(&seq, t0, &grid, t0).unwrap(), &[0.0]);
    assert_eq!(zoh_value(&seq, t0 + 0.1, &grid, t0).unwrap(), &[1.0]);
    assert_eq!(zoh_value(&seq, t0 + 0.45, &grid, t0).unwrap(), &[4.0]);
    assert!(matches!(
        zoh_value(&seq, t0 + 0.5, &grid, t0),
        Err(Error::OutOfRange { .. })
    ));
    assert!(zoh_value(&seq, t0 - 0.01, &grid, t0).is_err());
}

#[test]
fn exponential_decay_accuracy() {
    let grid = TimeGrid::new(0.1, 10, 20).unwrap();
    let path = rk4_integrate(
        |_, x, _, dx| dx[0] = -x[0],
        &[1.0],
        0.0,
        1.0,
        &grid,
        &ControlSequence::unforced(10),
    )
    .unwrap();
    assert!((path.last_state()[0] - (-1f64).exp()).abs() <= 1e-9);
}

#[test]
fn rotation_returns_after_full_turn() {
    let turns = 1000;
    let grid = TimeGrid::new(std::f64::consts::TAU / turns as f64, turns, 4).unwrap();
    let path = rk4_integrate(
        |_, x, _, dx| {
            dx[0] = x[1];
            dx[1] = -x[0];
        },
        &[1.0, 0.0],
        0.0,
        std::f64::consts::TAU,
        &grid,
        &ControlSequence::unforced(turns),
    )
    .unwrap();
    let end = path.last_state();
    assert!(
        (end[0] - 1.0).abs() <= 1e-6 && end[1].abs() <= 1e-6,
        "{end:?}"
    );
}

#[test]
fn zero_rhs_keeps_state() {
    let grid = TimeGrid::new(0.1, 3, 20).unwrap();
    let path = rk4_integrate(
        |_, _, _, dx| dx.fill(0.0),
        &[3.5, -2.0],
        0.0,
        0.3,
        &grid,
        &ControlSequence::unforced(3),
    )
    .unwrap();
    assert!((0..path.len()).all(|i| path.state(i) == [3.5, -2.0]));
}

#[test]
fn fourth_order_convergence() {
    for k in [5, 10, 20, 40] {
        let ratio = decay_error(k) / decay_error(2 * k);
        assert!(ratio >= 8.0, "K={k}: ratio {ratio}");
    }
}

#[test]
fn blow_up_reports_divergence_time() {
    let grid = TimeGrid::new(0.1, 100, 20).unwrap();
    let err = rk4_integrate(
        |_, x, _, dx| dx[0] = x[0] * x[0],
        &[1.0],
        0.0,
        5.0,
        &grid,
        &ControlSequence::unforced(100),
    )
    .unwrap_err();
    match err {
        Error::Divergence { time } => assert!(time > 0.9 && time < 1.1, "{time}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn off_grid_span_rejected() {
    let grid = TimeGrid::new(0.1, 5, 20).unwrap();
    let r = rk4_integrate(
        |_, _, _, dx| dx.fill(0.0),
        &[0.0],
        0.0,
        0.0123,
        &grid,
        &ControlSequence::unforced(5),
    );
    assert!(r.is_err());
}

fn ramp(len: usize) -> HistoryBuffer {
    let samples: Vec<f64> = (0..len).flat_map(|i| [i as f64, -(i as f64)]).collect();
    HistoryBuffer::new(0.0, -((len - 1) as i64), 0.005, 2, samples).unwrap()
}

#[test]
fn lookup_exact_and_interpolated() {
    let buf = ramp(101);
    let first = buf.lookup(buf.start_time()).unwrap();
    assert_eq!(first.as_slice(), buf.sample(0));
    assert_eq!(buf.interpolated_reads(), 0);
    let mid = buf.lookup(buf.start_time() + 0.0025).unwrap();
    assert_eq!(mid.as_slice(), &[0.5, -0.5]);
    assert_eq!(buf.interpolated_reads(), 1);
    assert!(matches!(
        buf.lookup(buf.start_time() - 0.005),
        Err(Error::OutOfRange { .. })
    ));
    assert!(buf.lookup(buf.end_time() + 0.001).is_err());
}

#[test]
fn append_checks_junction() {
    let mut buf = HistoryBuffer::constant(&[1.0], 0.0, -2, 0.005, 3).unwrap();
    let seg = |t0: f64, first: f64| {
        let states: Vec<_> = [first, 2.0, 3.0]
            .iter()
            .map(|v| DVector::from_element(1, *v))
            .collect();
        Trajectory::from_samples(t0, 0.005, &states, &[]).unwrap()
    };
    buf.append(&seg(0.0, 1.0)).unwrap();
    assert_eq!(buf.len(), 5);
    assert_eq!(buf.last(), &[3.0]);
    assert!(matches!(
        buf.append(&seg(0.015, 3.0)),
        Err(Error::Contiguity(_))
    ));
    assert!(matches!(
        buf.append(&seg(0.01, 2.5)),
        Err(Error::Consistency { .. })
    ));
    assert_eq!(buf.len(), 5);
}

proptest! {
    #[test]
    fn integration_is_deterministic(x0 in prop::array::uniform2(-50.0..50.0f64), u in -5.0..5.0f64) {
        let grid = TimeGrid::new(0.1, 4, 20).unwrap();
        let seq = ControlSequence::from_flat(vec![u; 4], ControlBox::symmetric(1, 5.0).unwrap()).unwrap();
        let rhs = |_: obpc::ode::StagePoint, x: &[f64], u: &[f64], dx: &mut [f64]| {
            dx[0] = x[1].sin() + u[0];
            dx[1] = -x[0] * 0.3;
        };
        let a = rk4_integrate(rhs, &x0, 0.0, 0.4, &grid, &seq).unwrap();
        let b = rk4_integrate(rhs, &x0, 0.0, 0.4, &grid, &seq).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn grid_reads_never_interpolate(len in 2usize..200, pick in 0usize..1000) {
        let buf = ramp(len);
        let i = pick % len;
        let t = buf.start_time() + i as f64 * buf.step();
        let v = buf.lookup(t).unwrap();
        prop_assert_eq!(v.as_slice(), buf.sample(i));
        prop_assert_eq!(buf.interpolated_reads(), 0);
    }

    #[test]
    fn interpolation_stays_between_neighbours(len in 2usize..100, pick in 0usize..1000, s in 0.01..0.99f64) {
        let buf = ramp(len);
        let i = pick % (len - 1);
        let t = buf.start_time() + (i as f64 + s) * buf.step();
        let v = buf.lookup(t).unwrap();
        prop_assert!(v[0] >= i as f64 && v[0] <= (i + 1) as f64);
    }
}
