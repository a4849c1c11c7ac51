//! Scenario files.
//!
//! A scenario is TOML with top-level keys `plant`, `scheme`, `x0`, `xi0`,
//! `span`, `t_hat` and the tables `[grid]`, `[cost]`, `[observer]`,
//! `[control_box]`, `[custom]`, `[optimizer]`. Only `plant` and `scheme` are
//! required; everything else falls back to the reference setup.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use obpc::control::{CostSpec, HorizonProblem, LoopScenario, OptimizerSettings, Scheme};
use obpc::{ControlBox, ExamplePlant, ExecMode, LinearPlant, LuenbergerObserver, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::{Failure, Outcome};

pub type Rows = Vec<Vec<f64>>;

pub const DEFAULT_X0: [f64; 2] = [11.0, 8.0];
pub const DEFAULT_SPAN: f64 = 10.0;
pub const DEFAULT_BOUND: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantId {
    Example1,
    Example2,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Obpc,
    #[serde(alias = "mpc")]
    StandardMpc,
}

impl From<SchemeId> for Scheme {
    fn from(s: SchemeId) -> Self {
        match s {
            SchemeId::Obpc => Scheme::Obpc,
            SchemeId::StandardMpc => Scheme::StandardMpc,
        }
    }
}

impl From<Scheme> for SchemeId {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Obpc => SchemeId::Obpc,
            Scheme::StandardMpc => SchemeId::StandardMpc,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub plant: Option<PlantId>,
    pub scheme: Option<SchemeId>,
    pub x0: Option<Vec<f64>>,
    pub xi0: Option<Vec<f64>>,
    pub span: Option<f64>,
    pub t_hat: Option<f64>,
    pub grid: Option<GridFile>,
    pub cost: Option<CostFile>,
    pub observer: Option<ObserverFile>,
    pub control_box: Option<BoxFile>,
    pub custom: Option<CustomFile>,
    pub optimizer: Option<OptimizerFile>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    #[serde(rename = "T")]
    pub period: Option<f64>,
    #[serde(rename = "N")]
    pub horizon: Option<i64>,
    #[serde(rename = "K")]
    pub substeps: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostFile {
    #[serde(rename = "Q")]
    pub q: Option<Rows>,
    #[serde(rename = "R")]
    pub r: Option<Rows>,
    #[serde(rename = "P_f")]
    pub p_f: Option<Rows>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverFile {
    pub lambda: Option<f64>,
    /// `n x p`, one inner array per row.
    pub gain: Option<Rows>,
    pub retarded: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxFile {
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomFile {
    #[serde(rename = "A")]
    pub a: Option<Rows>,
    #[serde(rename = "B")]
    pub b: Option<Rows>,
    #[serde(rename = "C")]
    pub c: Option<Rows>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerFile {
    pub restarts: Option<i64>,
    pub max_iterations: Option<i64>,
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
    pub warm_start: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomPlant {
    pub a: Rows,
    pub b: Rows,
    pub c: Rows,
}

/// A validated scenario with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub plant: PlantId,
    pub custom: Option<CustomPlant>,
    pub scheme: Scheme,
    pub period: f64,
    pub horizon: usize,
    pub substeps: usize,
    pub q: Rows,
    pub r: Rows,
    pub p_f: Rows,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub lambda: f64,
    pub gain: Rows,
    pub retarded: bool,
    pub x0: Vec<f64>,
    pub xi0: Vec<f64>,
    pub span: f64,
    pub t_hat: Option<f64>,
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub warm_start: bool,
}

fn bad(key: &str, reason: impl std::fmt::Display) -> Failure {
    Failure::config(format!("invalid `{key}`: {reason}"))
}

// core parameter names -> scenario keys
fn key_of(name: &str) -> String {
    match name {
        "T" | "N" | "K" => format!("grid.{name}"),
        "Q" | "R" | "P_f" => format!("cost.{name}"),
        "A" | "B" | "C" => format!("custom.{name}"),
        "bounds" => "control_box".into(),
        "gain" | "lambda" | "delay" => format!("observer.{name}"),
        "max_iterations" | "tolerance" => format!("optimizer.{name}"),
        other => other.into(),
    }
}

fn keyed(e: obpc::Error) -> Failure {
    match e {
        obpc::Error::InvalidParameter { name, reason } => bad(&key_of(name), reason),
        other => Failure::config(other.to_string()),
    }
}

pub fn matrix(rows: &Rows, key: &str) -> Outcome<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(bad(key, "expected a nonempty rectangular array of rows"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(bad(key, "entries must be finite"));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        cols,
        rows.iter().flatten().copied(),
    ))
}

fn rows_of(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn identity(n: usize, scale: f64) -> Rows {
    rows_of(&(DMatrix::identity(n, n) * scale))
}

fn count(v: Option<i64>, default: usize, min: i64, key: &str) -> Outcome<usize> {
    match v {
        None => Ok(default),
        Some(v) if v >= min => Ok(v as usize),
        Some(v) => Err(bad(key, format!("must be at least {min}, got {v}"))),
    }
}

fn dims(key: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Outcome<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(bad(
            key,
            format!("expected {rows}x{cols}, got {}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

impl Scenario {
    pub fn from_file(f: ScenarioFile) -> Outcome<Self> {
        let plant = f
            .plant
            .ok_or_else(|| bad("plant", "required (example1, example2 or custom)"))?;
        let scheme: Scheme = f
            .scheme
            .ok_or_else(|| bad("scheme", "required (obpc or standard_mpc)"))?
            .into();

        let custom = match (plant, f.custom) {
            (PlantId::Custom, Some(c)) => Some(CustomPlant {
                a: c.a.ok_or_else(|| bad("custom.A", "required"))?,
                b: c.b.ok_or_else(|| bad("custom.B", "required"))?,
                c: c.c.ok_or_else(|| bad("custom.C", "required"))?,
            }),
            (PlantId::Custom, None) => {
                return Err(bad("custom", "plant = \"custom\" needs a [custom] table"))
            }
            (_, Some(_)) => return Err(bad("custom", "only allowed with plant = \"custom\"")),
            (_, None) => None,
        };
        let base = linear_plant(plant, custom.as_ref())?;
        let (n, m, p) = (base.a().nrows(), base.b().ncols(), base.c().nrows());

        let g = f.grid.unwrap_or_default();
        let period = g.period.unwrap_or(0.1);
        if !(period.is_finite() && period > 0.0) {
            return Err(bad(
                "grid.T",
                format!("sampling period must be positive, got {period}"),
            ));
        }
        let horizon = count(g.horizon, 5, 1, "grid.N")?;
        let substeps = count(g.substeps, 20, 2, "grid.K")?;
        if substeps % 2 != 0 {
            return Err(bad("grid.K", "substep count must be even"));
        }

        let c = f.cost.unwrap_or_default();
        let o = f.observer.unwrap_or_default();
        let bx = f.control_box.unwrap_or_default();
        let opt = f.optimizer.unwrap_or_default();
        let gain = match (o.gain, custom.is_some()) {
            (Some(k), _) => k,
            (None, false) => vec![vec![1.0], vec![0.5]],
            (None, true) => return Err(bad("observer.gain", "required for custom plants")),
        };
        let retarded = o.retarded.unwrap_or(scheme == Scheme::Obpc);
        if scheme == Scheme::StandardMpc && retarded {
            return Err(bad(
                "observer.retarded",
                "standard MPC uses a non-retarded observer",
            ));
        }
        if scheme == Scheme::Obpc && !retarded {
            return Err(bad(
                "observer.retarded",
                "OBPC predicts with a retarded observer",
            ));
        }

        let s = Scenario {
            plant,
            custom,
            scheme,
            period,
            horizon,
            substeps,
            q: c.q.unwrap_or_else(|| identity(n, 1.0)),
            r: c.r.unwrap_or_else(|| identity(m, 0.01)),
            p_f: c.p_f.unwrap_or_else(|| identity(n, 1.0)),
            lower: bx.lower.unwrap_or_else(|| vec![-DEFAULT_BOUND; m]),
            upper: bx.upper.unwrap_or_else(|| vec![DEFAULT_BOUND; m]),
            lambda: o.lambda.unwrap_or(obpc::DEFAULT_LAMBDA),
            gain,
            retarded,
            x0: f.x0.unwrap_or_else(|| DEFAULT_X0.to_vec()),
            xi0: f.xi0.unwrap_or_else(|| vec![0.0; n]),
            span: f.span.unwrap_or(DEFAULT_SPAN),
            t_hat: f.t_hat,
            restarts: count(opt.restarts, 3, 0, "optimizer.restarts")?,
            max_iterations: count(opt.max_iterations, 4000, 1, "optimizer.max_iterations")?,
            tolerance: opt.tolerance.unwrap_or(1e-9),
            seed: opt.seed.unwrap_or(0),
            warm_start: opt.warm_start.unwrap_or(true),
        };

        for (key, v) in [("x0", &s.x0), ("xi0", &s.xi0)] {
            if v.len() != n {
                return Err(bad(key, format!("expected {n} entries, got {}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(bad(key, "entries must be finite"));
            }
        }
        for (key, v) in [
            ("control_box.lower", &s.lower),
            ("control_box.upper", &s.upper),
        ] {
            if v.len() != m {
                return Err(bad(key, format!("expected {m} entries, got {}", v.len())));
            }
        }
        dims("cost.Q", &matrix(&s.q, "cost.Q")?, n, n)?;
        dims("cost.R", &matrix(&s.r, "cost.R")?, m, m)?;
        dims("cost.P_f", &matrix(&s.p_f, "cost.P_f")?, n, n)?;
        dims("observer.gain", &matrix(&s.gain, "observer.gain")?, n, p)?;
        if !(s.lambda.is_finite() && s.lambda > 0.0) {
            return Err(bad(
                "observer.lambda",
                format!("must be positive, got {}", s.lambda),
            ));
        }
        let grid = s.grid()?;
        if !(s.span.is_finite() && s.span > 0.0) {
            return Err(bad("span", format!("must be positive, got {}", s.span)));
        }
        grid.periods_in(s.span)
            .map_err(|e| bad("span", format!("must be a multiple of T ({e})")))?;
        if let Some(t_hat) = s.t_hat {
            if !(t_hat > 0.0 && t_hat <= period * (1.0 + 1e-12)) {
                return Err(bad("t_hat", format!("must lie in (0, T], got {t_hat}")));
            }
            grid.steps_in(t_hat)
                .map_err(|e| bad("t_hat", format!("must be a multiple of the step ({e})")))?;
        }
        s.build()?;
        Ok(s)
    }

    /// The reproduction setup for an example plant.
    pub fn example(which: ExamplePlant, scheme: Scheme) -> Self {
        let plant = match which {
            ExamplePlant::One => PlantId::Example1,
            ExamplePlant::Two => PlantId::Example2,
        };
        let file = ScenarioFile {
            plant: Some(plant),
            scheme: Some(scheme.into()),
            ..Default::default()
        };
        Self::from_file(file).expect("built-in scenario is valid")
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            plant: Some(self.plant),
            scheme: Some(self.scheme.into()),
            x0: Some(self.x0.clone()),
            xi0: Some(self.xi0.clone()),
            span: Some(self.span),
            t_hat: self.t_hat,
            grid: Some(GridFile {
                period: Some(self.period),
                horizon: Some(self.horizon as i64),
                substeps: Some(self.substeps as i64),
            }),
            cost: Some(CostFile {
                q: Some(self.q.clone()),
                r: Some(self.r.clone()),
                p_f: Some(self.p_f.clone()),
            }),
            observer: Some(ObserverFile {
                lambda: Some(self.lambda),
                gain: Some(self.gain.clone()),
                retarded: Some(self.retarded),
            }),
            control_box: Some(BoxFile {
                lower: Some(self.lower.clone()),
                upper: Some(self.upper.clone()),
            }),
            custom: self.custom.as_ref().map(|c| CustomFile {
                a: Some(c.a.clone()),
                b: Some(c.b.clone()),
                c: Some(c.c.clone()),
            }),
            optimizer: Some(OptimizerFile {
                restarts: Some(self.restarts as i64),
                max_iterations: Some(self.max_iterations as i64),
                tolerance: Some(self.tolerance),
                seed: Some(self.seed),
                warm_start: Some(self.warm_start),
            }),
        }
    }

    pub fn grid(&self) -> Outcome<TimeGrid> {
        TimeGrid::new(self.period, self.horizon, self.substeps).map_err(keyed)
    }

    pub fn linear_plant(&self) -> Outcome<LinearPlant> {
        linear_plant(self.plant, self.custom.as_ref())
    }

    pub fn observer(&self, delay: f64) -> Outcome<LuenbergerObserver> {
        let gain = matrix(&self.gain, "observer.gain")?;
        LuenbergerObserver::new(self.linear_plant()?, self.lambda, gain, delay).map_err(keyed)
    }

    pub fn delay(&self) -> f64 {
        if self.retarded {
            self.period * self.horizon as f64
        } else {
            0.0
        }
    }

    pub fn build(&self) -> Outcome<LoopScenario> {
        self.build_with(ExecMode::Sequential)
    }

    /// The closed-loop experiment; `exec` drives the optimizer restarts.
    pub fn build_with(&self, exec: ExecMode) -> Outcome<LoopScenario> {
        let cost = CostSpec::new(
            matrix(&self.q, "cost.Q")?,
            matrix(&self.r, "cost.R")?,
            matrix(&self.p_f, "cost.P_f")?,
        )
        .map_err(keyed)?;
        let bounds = ControlBox::new(self.lower.clone(), self.upper.clone()).map_err(keyed)?;
        let settings = OptimizerSettings {
            restarts: self.restarts,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            warm_start: self.warm_start,
            seed: self.seed,
            exec,
        };
        let problem = HorizonProblem::new(self.grid()?, cost, bounds, settings).map_err(keyed)?;
        Ok(LoopScenario {
            plant: Arc::new(self.linear_plant()?),
            observer: Arc::new(self.observer(self.delay())?),
            problem,
            x0: self.x0.clone(),
            xi0: self.xi0.clone(),
            span: self.span,
            output_sample_period: self.t_hat,
        })
    }
}

fn linear_plant(plant: PlantId, custom: Option<&CustomPlant>) -> Outcome<LinearPlant> {
    match (plant, custom) {
        (PlantId::Example1, _) => Ok(LinearPlant::example(ExamplePlant::One)),
        (PlantId::Example2, _) => Ok(LinearPlant::example(ExamplePlant::Two)),
        (PlantId::Custom, Some(c)) => LinearPlant::new(
            matrix(&c.a, "custom.A")?,
            matrix(&c.b, "custom.B")?,
            matrix(&c.c, "custom.C")?,
        )
        .map_err(keyed),
        (PlantId::Custom, None) => Err(bad("custom", "missing matrices")),
    }
}

pub fn parse_scenario(text: &str) -> Outcome<Scenario> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| Failure::config(format!("parse error: {e}")))?;
    Scenario::from_file(file)
}

pub fn load_scenario(path: &Path) -> Outcome<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|f| Failure::config(format!("{}: {}", path.display(), f.message)))
}

pub fn emit_scenario(s: &Scenario) -> String {
    toml::to_string(&s.to_file()).expect("scenario serializes")
}
