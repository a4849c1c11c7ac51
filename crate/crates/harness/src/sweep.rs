//! Sweep specifications: a base scenario run from many initial values.
//!
//! ```toml
//! radius = 12.0
//!
//! [initial]
//! lattice = { count = 5, spacing = 4.2 }   # or: points = [[1.0, 2.0], ...]
//!
//! [bound]
//! nu = 15.0
//! alpha = 1.0
//! delta1 = 1.0
//!
//! [base]
//! plant = "example1"
//! scheme = "obpc"
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::scenario::{Rows, Scenario, ScenarioFile};
use crate::{Failure, Outcome};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub radius: Option<f64>,
    pub base: Option<ScenarioFile>,
    pub initial: Option<InitialFile>,
    pub bound: Option<BoundFile>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialFile {
    pub points: Option<Rows>,
    pub lattice: Option<LatticeFile>,
    /// Observer initial values paired with `points`.
    pub xi0: Option<Rows>,
}

/// `count` values per axis, `spacing` apart and centred on the origin;
/// points outside the ball are dropped.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeFile {
    pub count: i64,
    pub spacing: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundFile {
    pub nu: Option<f64>,
    pub alpha: Option<f64>,
    pub delta1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: Scenario,
    /// Radius of the ball holding every `x0`.
    pub radius: f64,
    /// `(x0, xi0)` pairs.
    pub initial: Vec<(Vec<f64>, Vec<f64>)>,
    pub nu: f64,
    pub alpha: f64,
    /// Radius of the ball holding every `xi0` for the bound check.
    pub bound_delta1: f64,
}

fn bad(key: &str, reason: impl std::fmt::Display) -> Failure {
    Failure::config(format!("invalid `{key}`: {reason}"))
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn lattice(n: usize, count: usize, spacing: f64) -> Vec<Vec<f64>> {
    let offset = spacing * (count as f64 - 1.0) / 2.0;
    let axis: Vec<f64> = (0..count).map(|i| i as f64 * spacing - offset).collect();
    let mut points = vec![Vec::new()];
    for _ in 0..n {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |a| {
                    let mut q = p.clone();
                    q.push(*a);
                    q
                })
            })
            .collect();
    }
    points
}

impl SweepSpec {
    pub fn from_file(f: SweepFile) -> Outcome<Self> {
        let base = Scenario::from_file(f.base.ok_or_else(|| bad("base", "required"))?)
            .map_err(|e| Failure::config(format!("base: {}", e.message)))?;
        let n = base.x0.len();
        let radius = f.radius.unwrap_or(12.0);
        if !(radius.is_finite() && radius > 0.0) {
            return Err(bad("radius", format!("must be positive, got {radius}")));
        }
        let init = f.initial.unwrap_or_default();
        let points = match (init.points, init.lattice) {
            (Some(_), Some(_)) => return Err(bad("initial", "give either points or lattice")),
            (Some(p), None) => {
                for x in &p {
                    if x.len() != n {
                        return Err(bad(
                            "initial.points",
                            format!("expected {n} entries per point"),
                        ));
                    }
                    if euclid(x) > radius * (1.0 + 1e-12) {
                        return Err(bad(
                            "initial.points",
                            format!("{x:?} lies outside the radius-{radius} ball"),
                        ));
                    }
                }
                p
            }
            (None, Some(l)) => {
                if l.count < 1 || !(l.spacing.is_finite() && l.spacing >= 0.0) {
                    return Err(bad("initial.lattice", "need count >= 1 and spacing >= 0"));
                }
                lattice(n, l.count as usize, l.spacing)
                    .into_iter()
                    .filter(|x| euclid(x) <= radius * (1.0 + 1e-12))
                    .collect()
            }
            (None, None) => Vec::new(),
        };
        if points.is_empty() {
            return Err(bad("initial", "grid of initial conditions is empty"));
        }
        let xis = match init.xi0 {
            Some(xi) if xi.len() != points.len() => {
                return Err(bad("initial.xi0", "needs one entry per point"));
            }
            Some(xi) => xi,
            None => vec![base.xi0.clone(); points.len()],
        };
        let b = f.bound.unwrap_or_default();
        let (nu, alpha, bound_delta1) = (
            b.nu.unwrap_or(15.0),
            b.alpha.unwrap_or(1.0),
            b.delta1.unwrap_or(1.0),
        );
        let initial: Vec<_> = points.into_iter().zip(xis).collect();
        for (x, xi) in &initial {
            if xi.len() != n {
                return Err(bad(
                    "initial.xi0",
                    format!("expected {n} entries per point"),
                ));
            }
            let gap: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a - b).collect();
            if euclid(&gap) > nu {
                return Err(bad(
                    "bound.nu",
                    format!("initial error at {x:?} exceeds nu = {nu}"),
                ));
            }
            if euclid(xi) > bound_delta1 {
                return Err(bad(
                    "bound.delta1",
                    format!("observer value {xi:?} outside the radius-{bound_delta1} ball"),
                ));
            }
        }
        Ok(Self {
            base,
            radius,
            initial,
            nu,
            alpha,
            bound_delta1,
        })
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        self.initial
            .iter()
            .map(|(x, xi)| Scenario {
                x0: x.clone(),
                xi0: xi.clone(),
                ..self.base.clone()
            })
            .collect()
    }
}

pub fn parse_sweep(text: &str) -> Outcome<SweepSpec> {
    let file: SweepFile =
        toml::from_str(text).map_err(|e| Failure::config(format!("parse error: {e}")))?;
    SweepSpec::from_file(file)
}

pub fn load_sweep(path: &Path) -> Outcome<SweepSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    parse_sweep(&text).map_err(|f| Failure::config(format!("{}: {}", path.display(), f.message)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "[base]\nplant = \"example1\"\nscheme = \"obpc\"\n";

    #[test]
    fn reference_lattice_fits_the_ball() {
        let s = parse_sweep(&format!(
            "radius = 12.0\n[initial]\nlattice = {{ count = 5, spacing = 4.2 }}\n{BASE}"
        ))
        .unwrap();
        assert_eq!(s.initial.len(), 25);
        assert_eq!(s.initial[0].0, vec![-8.4, -8.4]);
        assert_eq!((s.nu, s.alpha, s.bound_delta1), (15.0, 1.0, 1.0));
        assert_eq!(s.scenarios()[24].x0, vec![8.4, 8.4]);
    }

    #[test]
    fn lattice_drops_corners() {
        let s = parse_sweep(&format!(
            "radius = 1.0\n[initial]\nlattice = {{ count = 3, spacing = 1.0 }}\n{BASE}"
        ))
        .unwrap();
        assert_eq!(s.initial.len(), 5);
    }

    #[test]
    fn guards() {
        for (extra, key) in [
            ("[initial]\npoints = []\n", "initial"),
            ("", "initial"),
            ("[initial]\npoints = [[20.0, 0.0]]\n", "initial.points"),
            (
                "[initial]\npoints = [[1.0, 0.0]]\nxi0 = [[5.0, 0.0]]\n",
                "bound.delta1",
            ),
            (
                "radius = -1.0\n[initial]\npoints = [[0.0, 0.0]]\n",
                "radius",
            ),
        ] {
            let e = parse_sweep(&format!("{extra}{BASE}")).unwrap_err();
            assert_eq!(e.code(), 2);
            assert!(
                e.message.contains(&format!("`{key}`")),
                "{key}: {}",
                e.message
            );
        }
    }
}
