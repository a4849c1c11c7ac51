//! Exponential class-KL envelopes `β(r, t) = c·r·e^{-σt}` fitted to norm data.
//!
//! The decay rate is searched on a geometric grid `σ ∈ [2⁻⁶, 2⁴]` (64
//! points) and then refined by bisection. A rate is admissible when the
//! scale it needs stays below [`MAX_SCALE`] and, for every series, the
//! tightest envelope touches the data in the first half of the series'
//! above-floor window.

use crate::error::{Error, Result};

pub const SIGMA_MIN: f64 = 1.0 / 64.0;
pub const SIGMA_MAX: f64 = 16.0;
pub const SIGMA_GRID: usize = 64;
pub const MAX_SCALE: f64 = 1e6;

const BISECTION_STEPS: usize = 60;

/// `β(r, t) = c·r·e^{-σt}` with `c ≥ 1`, `σ > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlFit {
    pub c: f64,
    pub sigma: f64,
}

impl KlFit {
    pub fn eval(&self, r: f64, t: f64) -> f64 {
        self.c * r * (-self.sigma * t).exp()
    }
}

/// Norm samples of one trajectory, `norms[i] = ‖e(times[i])‖`, with
/// `initial` the norm the envelope is scaled by.
#[derive(Debug, Clone, PartialEq)]
pub struct NormSeries {
    pub initial: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
}

impl NormSeries {
    pub fn new(initial: f64, times: Vec<f64>, norms: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != norms.len() {
            return Err(Error::invalid(
                "series",
                "times and norms must be nonempty and equal length",
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("series", "times must increase strictly"));
        }
        if !(initial >= 0.0) || norms.iter().any(|n| !(*n >= 0.0)) {
            return Err(Error::invalid("series", "norms must be non-negative"));
        }
        Ok(Self {
            initial,
            times,
            norms,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvelopeOutcome {
    Fit(KlFit),
    /// No sample above the floor; any envelope works.
    ZeroData(KlFit),
    /// Series whose data rules out every admissible decay rate.
    NonDecaying {
        series: usize,
    },
    /// Series with zero initial norm but samples above the floor.
    Unbounded {
        series: usize,
    },
}

impl EnvelopeOutcome {
    pub fn fit(&self) -> Option<KlFit> {
        match self {
            EnvelopeOutcome::Fit(f) | EnvelopeOutcome::ZeroData(f) => Some(*f),
            _ => None,
        }
    }
}

struct Prepared {
    index: usize,
    tau: Vec<f64>,
    log_ratio: Vec<f64>,
    half_window: f64,
}

/// Sigma on the coarse grid, `k = 0 … SIGMA_GRID-1`.
pub fn sigma_grid(k: usize) -> f64 {
    SIGMA_MIN * (SIGMA_MAX / SIGMA_MIN).powf(k as f64 / (SIGMA_GRID - 1) as f64)
}

/// Fits an envelope dominating every sample whose norm exceeds `floor`.
pub fn fit_envelope(series: &[NormSeries], floor: f64) -> EnvelopeOutcome {
    let mut prepared = Vec::new();
    for (index, s) in series.iter().enumerate() {
        let t0 = s.times[0];
        let (tau, norms): (Vec<f64>, Vec<f64>) = s
            .times
            .iter()
            .zip(&s.norms)
            .filter(|(_, n)| **n > floor)
            .map(|(t, n)| (t - t0, *n))
            .unzip();
        if tau.is_empty() {
            continue;
        }
        if !(s.initial > 0.0) {
            return EnvelopeOutcome::Unbounded { series: index };
        }
        let log_ratio = norms.iter().map(|n| (n / s.initial).ln()).collect();
        let half_window = 0.5 * tau[tau.len() - 1];
        prepared.push(Prepared {
            index,
            tau,
            log_ratio,
            half_window,
        });
    }
    if prepared.is_empty() {
        return EnvelopeOutcome::ZeroData(KlFit {
            c: 1.0,
            sigma: SIGMA_MAX,
        });
    }

    let best = (0..SIGMA_GRID)
        .rev()
        .find(|&k| log_scale(&prepared, sigma_grid(k)).is_ok());
    let Some(k) = best else {
        let series = log_scale(&prepared, SIGMA_MIN).unwrap_err();
        return EnvelopeOutcome::NonDecaying { series };
    };
    let mut lo = sigma_grid(k);
    if k + 1 < SIGMA_GRID {
        let mut hi = sigma_grid(k + 1);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if log_scale(&prepared, mid).is_ok() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let log_c = log_scale(&prepared, lo).expect("lower bracket is admissible");
    EnvelopeOutcome::Fit(KlFit {
        c: log_c.exp().max(1.0),
        sigma: lo,
    })
}

// ln c(σ) if σ is admissible, else the index of the first offending series.
fn log_scale(prepared: &[Prepared], sigma: f64) -> std::result::Result<f64, usize> {
    let mut log_c = f64::NEG_INFINITY;
    for p in prepared {
        let mut best = f64::NEG_INFINITY;
        let mut at = 0.0;
        for (tau, lr) in p.tau.iter().zip(&p.log_ratio) {
            let v = lr + sigma * tau;
            if v > best {
                best = v;
                at = *tau;
            }
        }
        if at > p.half_window {
            return Err(p.index);
        }
        log_c = log_c.max(best);
    }
    if log_c > MAX_SCALE.ln() {
        return Err(prepared[0].index);
    }
    Ok(log_c)
}
