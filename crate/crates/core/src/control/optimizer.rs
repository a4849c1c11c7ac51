//! Box-constrained Nelder-Mead with multistart.
//!
//! Every trial point (reflection, expansion, contraction, shrink) is clamped
//! to the box before evaluation. Non-finite objective values count as `+∞`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::ExecMode;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    /// Random starts drawn uniformly in the box, on top of the warm start
    /// and the zero sequence.
    pub restarts: usize,
    pub max_iterations: usize,
    /// Convergence threshold on simplex diameter and value spread.
    pub tolerance: f64,
    pub warm_start: bool,
    pub seed: u64,
    /// How the independent starts are evaluated.
    pub exec: ExecMode,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            restarts: 3,
            max_iterations: 4000,
            tolerance: 1e-9,
            warm_start: true,
            seed: 0,
            exec: ExecMode::Sequential,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be positive"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::invalid("tolerance", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

// Simplex re-initialisations from the incumbent after convergence.
const REINITS: usize = 3;

/// Minimises `f` over `lower ≤ x ≤ upper` starting from `start`.
pub fn nelder_mead_box<F>(
    f: &F,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    max_iterations: usize,
    tolerance: f64,
) -> Minimum
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let n = start.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let project = |x: &mut [f64]| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };

    let mut best: Vec<f64> = start.to_vec();
    project(&mut best);
    let mut best_value = eval(&best);
    let mut evaluations = 1;
    if n == 0 {
        return Minimum {
            x: best,
            value: best_value,
            evaluations,
        };
    }

    let (alpha, gamma, rho, sigma) = if n >= 2 {
        let nf = n as f64;
        (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut budget = max_iterations;
    let mut scale = 0.1;
    for round in 0..=REINITS {
        if budget == 0 {
            break;
        }
        // initial simplex around the incumbent
        let mut vertices: Vec<Vec<f64>> = vec![best.clone()];
        let mut values: Vec<f64> = vec![best_value];
        for i in 0..n {
            let width = upper[i] - lower[i];
            let step = scale * width;
            let mut v = best.clone();
            v[i] = if best[i] + step <= upper[i] {
                best[i] + step
            } else {
                best[i] - step
            };
            project(&mut v);
            values.push(eval(&v));
            vertices.push(v);
            evaluations += 1;
        }

        let mut order: Vec<usize> = (0..=n).collect();
        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut second = vec![0.0; n];
        while budget > 0 {
            budget -= 1;
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
            let (ib, iw, isw) = (order[0], order[n], order[n - 1]);

            let spread = values[iw] - values[ib];
            let diameter = vertices
                .iter()
                .flat_map(|v| v.iter().zip(&vertices[ib]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            let x_scale = 1.0 + vertices[ib].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if spread <= tolerance * (1.0 + values[ib].abs()) && diameter <= tolerance * x_scale {
                break;
            }

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for &k in &order[..n] {
                for (c, v) in centroid.iter_mut().zip(&vertices[k]) {
                    *c += v;
                }
            }
            centroid.iter_mut().for_each(|c| *c /= n as f64);

            let worst = vertices[iw].clone();
            for i in 0..n {
                trial[i] = centroid[i] + alpha * (centroid[i] - worst[i]);
            }
            project(&mut trial);
            let fr = eval(&trial);
            evaluations += 1;

            if fr < values[ib] {
                for i in 0..n {
                    second[i] = centroid[i] + gamma * (trial[i] - centroid[i]);
                }
                project(&mut second);
                let fe = eval(&second);
                evaluations += 1;
                if fe < fr {
                    vertices[iw].copy_from_slice(&second);
                    values[iw] = fe;
                } else {
                    vertices[iw].copy_from_slice(&trial);
                    values[iw] = fr;
                }
                continue;
            }
            if fr < values[isw] {
                vertices[iw].copy_from_slice(&trial);
                values[iw] = fr;
                continue;
            }
            let (toward, reference) = if fr < values[iw] {
                (&trial, fr)
            } else {
                (&worst, values[iw])
            };
            for i in 0..n {
                second[i] = centroid[i] + rho * (toward[i] - centroid[i]);
            }
            project(&mut second);
            let fc = eval(&second);
            evaluations += 1;
            if fc < reference || (fr < values[iw] && fc <= reference) {
                vertices[iw].copy_from_slice(&second);
                values[iw] = fc;
                continue;
            }
            // shrink toward the best vertex
            let anchor = vertices[ib].clone();
            for k in 0..=n {
                if k == ib {
                    continue;
                }
                for i in 0..n {
                    vertices[k][i] = anchor[i] + sigma * (vertices[k][i] - anchor[i]);
                }
                project(&mut vertices[k]);
                values[k] = eval(&vertices[k]);
                evaluations += 1;
            }
        }

        let ib = (0..=n)
            .min_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)))
            .expect("simplex is nonempty");
        let improved = values[ib] < best_value
            && best_value - values[ib] > tolerance * (1.0 + best_value.abs());
        if values[ib] < best_value {
            best_value = values[ib];
            best.copy_from_slice(&vertices[ib]);
        }
        if !improved && round > 0 {
            break;
        }
        scale *= 0.1;
    }

    Minimum {
        x: best,
        value: best_value,
        evaluations,
    }
}

/// Runs Nelder-Mead from the warm start (if any), the projected zero
/// vector and `settings.restarts` uniform draws, returning the best result.
/// Ties keep the earlier start, so the result does not depend on
/// `settings.exec`.
pub fn multistart<F>(
    f: &F,
    lower: &[f64],
    upper: &[f64],
    warm: Option<&[f64]>,
    settings: &OptimizerSettings,
    seed: u64,
) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    settings.validate()?;
    let n = lower.len();
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(settings.restarts + 2);
    if let Some(w) = warm {
        starts.push(w.to_vec());
    }
    starts.push(vec![0.0; n]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..settings.restarts {
        starts.push(
            (0..n)
                .map(|i| {
                    if upper[i] > lower[i] {
                        rng.random_range(lower[i]..=upper[i])
                    } else {
                        lower[i]
                    }
                })
                .collect(),
        );
    }

    let results = settings.exec.map(&starts, |s| {
        nelder_mead_box(
            f,
            s,
            lower,
            upper,
            settings.max_iterations,
            settings.tolerance,
        )
    });
    let evaluations = results.iter().map(|r| r.evaluations).sum();
    let mut best: Option<Minimum> = None;
    for r in results {
        if !r.value.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| r.value < b.value) {
            best = Some(r);
        }
    }
    let mut best = best.ok_or_else(|| {
        Error::OptimizationFailure("every start produced a non-finite cost".into())
    })?;
    best.evaluations = evaluations;
    Ok(best)
}
