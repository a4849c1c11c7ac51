//! Output storage at a coarser rate `T̂` with piecewise-linear reconstruction.

use crate::error::{Error, Result};
use crate::ode::{whole_multiple, Trajectory};

/// Keeps `y(t₀ + i·T̂)` (and the final sample) and rebuilds every grid
/// sample in between by linear interpolation.
pub fn subsample_and_interpolate_outputs(y: &Trajectory, t_hat: f64) -> Result<Trajectory> {
    let stride = match whole_multiple(t_hat, y.step()) {
        Some(s) if s >= 1 => s,
        _ => {
            return Err(Error::invalid(
                "t_hat",
                format!(
                    "{t_hat} is not a positive multiple of the step {}",
                    y.step()
                ),
            ))
        }
    };
    let mut out = Trajectory::with_capacity(y.start_time(), y.step(), y.state_dim(), 0, y.len());
    let last = y.len() - 1;
    let mut value = vec![0.0; y.state_dim()];
    let mut left = 0;
    while left < last {
        let right = (left + stride).min(last);
        let (a, b) = (y.state(left), y.state(right));
        out.push_state(a);
        let width = (right - left) as f64;
        for i in 1..right - left {
            let s = i as f64 / width;
            for (v, (a, b)) in value.iter_mut().zip(a.iter().zip(b)) {
                *v = a + s * (b - a);
            }
            out.push_state(&value);
        }
        left = right;
    }
    out.push_state(y.state(last));
    Ok(out)
}
