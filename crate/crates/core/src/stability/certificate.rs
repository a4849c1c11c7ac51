//! Practical-stability estimates from simulated closed loops and the
//! bound `‖x(t)‖ ≤ max{β̄(ρ(t₀), t), 4Δ₂}`.

use nalgebra::{Complex, DMatrix};

use crate::control::loops::SimulationResult;
use crate::error::{Error, Result};
use crate::models::{gain_scaling, LuenbergerObserver};
use crate::ode::norm;
use crate::stability::envelope::{fit_envelope, EnvelopeOutcome, KlFit, NormSeries};
use crate::stability::linalg::eigenvalues;
use crate::stability::lyapunov::{
    build_delay_matrix, solve_lyapunov, weight_matrix, DelayMatrix, LyapunovSolution,
};

pub const DELTA2_FLOOR: f64 = 1e-6;
/// Fraction of each record treated as its tail when estimating `Δ₂`.
pub const TAIL_FRACTION: f64 = 0.2;
const BOUND_RTOL: f64 = 1e-9;

/// `ρ = ‖x‖ + ‖ξ‖`.
pub fn mixed_rho(x: &[f64], xi: &[f64]) -> Result<f64> {
    if x.len() != xi.len() {
        return Err(Error::invalid("xi", "dimension differs from x"));
    }
    Ok(norm(x) + norm(xi))
}

/// `(Δ̄₁, Δ̄₂) = (ν - Δ₁, 4Δ₂)` for `ν ≥ (1+α)Δ₁`.
pub fn theorem31_constants(nu: f64, alpha: f64, delta1: f64, delta2: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("alpha", "must be positive"));
    }
    if !(delta1 >= 0.0 && delta2 >= 0.0) {
        return Err(Error::invalid("delta", "radii must be non-negative"));
    }
    if !(nu >= (1.0 + alpha) * delta1) {
        return Err(Error::invalid(
            "nu",
            format!(
                "need nu >= (1+alpha)*Delta1 = {}, got {nu}",
                (1.0 + alpha) * delta1
            ),
        ));
    }
    Ok((nu - delta1, 4.0 * delta2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PracticalStabilityEstimate {
    pub delta1: f64,
    pub delta2: f64,
    pub envelope: EnvelopeOutcome,
    /// Samples above `max{β(‖x₀‖, t), Δ₂}`.
    pub violations: usize,
}

impl PracticalStabilityEstimate {
    pub fn beta(&self) -> Option<KlFit> {
        self.envelope.fit()
    }

    pub fn passed(&self) -> bool {
        self.beta().is_some() && self.violations == 0
    }
}

fn tail_max(s: &NormSeries) -> f64 {
    let len = s.norms.len();
    let tail = ((len as f64 * TAIL_FRACTION).ceil() as usize).clamp(1, len);
    s.norms[len - tail..].iter().copied().fold(0.0, f64::max)
}

/// Estimate from raw norm series; `Δ₂` is the largest norm any series
/// reaches in the final [`TAIL_FRACTION`] of its record.
pub fn certify_norm_series(
    series: &[NormSeries],
    delta1: f64,
) -> Result<PracticalStabilityEstimate> {
    if series.is_empty() {
        return Err(Error::invalid("results", "need at least one trajectory"));
    }
    if let Some(s) = series.iter().find(|s| s.initial > delta1) {
        return Err(Error::Precondition(format!(
            "initial norm {} outside the ball of radius {delta1}",
            s.initial
        )));
    }
    let delta2 = series.iter().map(tail_max).fold(DELTA2_FLOOR, f64::max);
    let envelope = fit_envelope(series, delta2);
    let beta = envelope.fit();
    let violations = series
        .iter()
        .map(|s| {
            let t0 = s.times[0];
            s.times
                .iter()
                .zip(&s.norms)
                .filter(|(t, n)| {
                    let b = beta.map_or(0.0, |b| b.eval(s.initial, *t - t0));
                    **n > b.max(delta2) * (1.0 + BOUND_RTOL)
                })
                .count()
        })
        .sum();
    Ok(PracticalStabilityEstimate {
        delta1,
        delta2,
        envelope,
        violations,
    })
}

fn plant_series(r: &SimulationResult) -> Result<NormSeries> {
    let norms = r.plant.norms();
    NormSeries::new(norms[0], r.plant.times().collect(), norms)
}

/// Practical-stability estimate over closed-loop runs started in the
/// `Δ₁`-ball.
pub fn certify_practical_stability(
    results: &[SimulationResult],
    delta1: f64,
) -> Result<PracticalStabilityEstimate> {
    let series = results
        .iter()
        .map(plant_series)
        .collect::<Result<Vec<_>>>()?;
    certify_norm_series(&series, delta1)
}

/// `ρ(t) = ‖x(t)‖ + ‖ξ(t)‖` along a run.
pub fn rho_series(r: &SimulationResult) -> Result<NormSeries> {
    let rho = (0..r.plant.len())
        .map(|i| mixed_rho(r.plant.state(i), r.observer.state(i)))
        .collect::<Result<Vec<_>>>()?;
    NormSeries::new(rho[0], r.plant.times().collect(), rho)
}

/// Fits `β̄` on the mixed norm `ρ`, ignoring samples below `floor`.
pub fn fit_rho_envelope(results: &[SimulationResult], floor: f64) -> Result<EnvelopeOutcome> {
    let series = results.iter().map(rho_series).collect::<Result<Vec<_>>>()?;
    Ok(fit_envelope(&series, floor))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub passed: bool,
    /// `min (bound - ‖x(t)‖)` over samples with `x(t) ≠ 0`; `+∞` if none.
    pub worst_slack: f64,
    pub violations: usize,
    pub bar_delta1: f64,
    pub bar_delta2: f64,
}

/// Checks `‖x(t)‖ ≤ max{β̄(ρ(t₀), t), 4Δ₂}` at every sample.
///
/// Initial histories must satisfy `‖x₀ - ξ₀‖ ≤ ν` and `‖ξ₀‖ ≤ Δ₁`.
pub fn theorem31_bound_check(
    results: &[SimulationResult],
    nu: f64,
    delta1: f64,
    delta2: f64,
    beta_bar: &KlFit,
) -> Result<BoundCheck> {
    if !(nu >= delta1 && delta1 >= 0.0 && delta2 >= 0.0) {
        return Err(Error::invalid(
            "nu",
            "need nu >= Delta1 >= 0 and Delta2 >= 0",
        ));
    }
    let bar_delta2 = 4.0 * delta2;
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for r in results {
        let x0 = r.plant.state(0);
        let xi0 = r.observer.state(0);
        let gap: Vec<f64> = x0.iter().zip(xi0).map(|(a, b)| a - b).collect();
        if norm(&gap) > nu {
            return Err(Error::invalid("nu", "initial estimation error exceeds nu"));
        }
        if norm(xi0) > delta1 {
            return Err(Error::invalid(
                "delta1",
                "initial observer value outside the ball",
            ));
        }
        let rho0 = mixed_rho(x0, xi0)?;
        let t0 = r.plant.start_time();
        for (i, t) in r.plant.times().enumerate() {
            let nx = norm(r.plant.state(i));
            if nx == 0.0 {
                continue;
            }
            let bound = beta_bar.eval(rho0, t - t0).max(bar_delta2);
            worst = worst.min(bound - nx);
            if nx > bound * (1.0 + BOUND_RTOL) {
                violations += 1;
            }
        }
    }
    Ok(BoundCheck {
        passed: violations == 0,
        worst_slack: worst,
        violations,
        bar_delta1: nu - delta1,
        bar_delta2,
    })
}

/// Lyapunov data for a Luenberger observer and its retarded counterpart
/// with delay `nt`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub lambda: f64,
    pub a_cl: DMatrix<f64>,
    pub a_cl_eigenvalues: Vec<Complex<f64>>,
    /// `Err` text when `A_cl` is not Hurwitz.
    pub lyapunov: std::result::Result<LyapunovSolution, String>,
    pub delay: DelayMatrix,
    /// Eigenvalues of `W·𝒜`, `W = Λ⁻¹PΛ⁻¹`, when `P` exists.
    pub weighted_eigenvalues: Option<Vec<Complex<f64>>>,
    /// Coefficients `(a₁, a₂)` with `α_k(r) = a_k·r²`, when `P` exists.
    pub alpha_coefficients: Option<(f64, f64)>,
}

pub fn stability_report(obs: &LuenbergerObserver, nt: f64) -> Result<StabilityReport> {
    let plant = obs.plant();
    let n = plant.a().nrows();
    let a_cl = obs.error_matrix();
    let a_cl_eigenvalues = eigenvalues(&a_cl)?;
    let lambda_mat = gain_scaling(obs.lambda(), n)?;
    let delay = build_delay_matrix(plant.a(), &lambda_mat, obs.gain(), plant.c(), nt)?;
    let lyapunov = match solve_lyapunov(&a_cl) {
        Ok(s) => Ok(s),
        Err(e @ Error::CertificateInapplicable(_)) => Err(e.to_string()),
        Err(e) => return Err(e),
    };
    let (weighted_eigenvalues, alpha_coefficients) = match &lyapunov {
        Ok(sol) => {
            let w = weight_matrix(&sol.p, obs.lambda())?;
            let we = eigenvalues(&(w * &delay.matrix))?;
            let (a1, a2) = crate::stability::lyapunov::alpha_bounds(&sol.p, obs.lambda(), n, 1.0)?;
            (Some(we), Some((a1, a2)))
        }
        Err(_) => (None, None),
    };
    Ok(StabilityReport {
        lambda: obs.lambda(),
        a_cl,
        a_cl_eigenvalues,
        lyapunov,
        delay,
        weighted_eigenvalues,
        alpha_coefficients,
    })
}
