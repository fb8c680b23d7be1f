//! Run configuration: the JSON schema and its validation into solver inputs.

use serde::Deserialize;
use vectorhost::dynamics::{stability_bound, StepperConfig};
use vectorhost::grid::{BoundarySpec, CoefficientFields, CoefficientSet, Mesh1D, ScalarField};
use vectorhost::{Boundary, Coefficients, Mesh, State};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Eigen,
    Steady,
    Simulate,
    Threshold,
    Envelope,
    Sweep,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Eigen => "eigen",
            Kind::Steady => "steady",
            Kind::Simulate => "simulate",
            Kind::Threshold => "threshold",
            Kind::Envelope => "envelope",
            Kind::Sweep => "sweep",
        }
    }
}

/// Nodal data given either as one constant or as one value per node.
#[derive(Debug, Clone, Deserialize)]
pub enum FieldSpec {
    #[serde(rename = "const")]
    Const(f64),
    #[serde(rename = "nodes")]
    Nodes(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BcSpec {
    Neumann,
    Dirichlet,
    Robin { b_left: f64, b_right: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub d1: FieldSpec,
    pub d2: FieldSpec,
    pub rho: FieldSpec,
    pub sigma1: FieldSpec,
    pub sigma2: FieldSpec,
    pub beta: FieldSpec,
    pub mu: FieldSpec,
    pub h_u: FieldSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub h_i: FieldSpec,
    pub v_u: FieldSpec,
    pub v_i: FieldSpec,
}

#[derive(Debug, Clone, Copy, Deserialize)]
enum AutoKeyword {
    #[serde(rename = "auto")]
    Auto,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum DtSpec {
    Fixed(f64),
    Auto(AutoKeyword),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepperSection {
    dt: DtSpec,
    t_end: f64,
    steady_tol: Option<f64>,
    snapshot_interval: Option<f64>,
    stop_at_steady: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    kind: Kind,
    eps: Option<f64>,
    seed: Option<u64>,
    count: Option<usize>,
    /// Sup distance counted as having reached the attractor.
    tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    domain: Domain,
    bc: BcSpec,
    coefficients: Option<CoefficientSpec>,
    initial: Option<InitialSpec>,
    stepper: Option<StepperSection>,
    experiment: ExperimentSection,
}

/// Time stepping settings; `dt = None` means the stability bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperSpec {
    pub dt: Option<f64>,
    pub t_end: f64,
    pub steady_tol: f64,
    pub snapshot_interval: Option<f64>,
    pub stop_at_steady: bool,
}

impl StepperSpec {
    /// Concrete stepper for a run from `initial`.
    pub fn resolve(&self, coeffs: &Coefficients, initial: &State) -> StepperConfig<f64> {
        let dt = self
            .dt
            .unwrap_or_else(|| stability_bound(coeffs, initial, None));
        let mut cfg = StepperConfig::new(dt, self.t_end);
        cfg.steady_tol = self.steady_tol;
        cfg.stop_at_steady = self.stop_at_steady;
        cfg.snapshot_interval = Some(self.snapshot_interval.unwrap_or(self.t_end / 100.0));
        cfg
    }
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub kind: Kind,
    pub mesh: Mesh,
    pub bc: Boundary,
    pub coeffs: Option<Coefficients>,
    pub initial: Option<State>,
    pub stepper: Option<StepperSpec>,
    /// Stepper with `"auto"` replaced by the stability bound, when both
    /// coefficients and initial data are given.
    pub resolved: Option<StepperConfig<f64>>,
    pub eps: f64,
    pub seed: u64,
    pub count: usize,
    pub tol: f64,
}

fn config_error(path: impl Into<String>, message: impl ToString) -> CliError {
    CliError::Config {
        path: path.into(),
        message: message.to_string(),
    }
}

fn field(mesh: Mesh, spec: &FieldSpec, path: &str) -> Result<ScalarField<f64>, CliError> {
    match spec {
        FieldSpec::Const(c) => ScalarField::constant(mesh, *c),
        FieldSpec::Nodes(v) => ScalarField::from_values(mesh, v.clone()),
    }
    .map_err(|e| config_error(path, e))
}

fn coefficients(mesh: Mesh, c: &CoefficientSpec) -> Result<Coefficients, CliError> {
    let f = |spec, name: &str| field(mesh, spec, &format!("coefficients.{name}"));
    CoefficientSet::new(CoefficientFields {
        d1: f(&c.d1, "d1")?,
        d2: f(&c.d2, "d2")?,
        rho: f(&c.rho, "rho")?,
        sigma1: f(&c.sigma1, "sigma1")?,
        sigma2: f(&c.sigma2, "sigma2")?,
        beta: f(&c.beta, "beta")?,
        mu: f(&c.mu, "mu")?,
        h_u: f(&c.h_u, "h_u")?,
    })
    .map_err(|e| config_error("coefficients", e))
}

fn initial_state(mesh: Mesh, s: &InitialSpec) -> Result<State, CliError> {
    let f = |spec, name: &str| {
        let path = format!("initial.{name}");
        let v = field(mesh, spec, &path)?;
        match v.values().iter().position(|x| *x < 0.0) {
            Some(j) => Err(config_error(
                path,
                format!("{name} is negative at node {j}"),
            )),
            None => Ok(v),
        }
    };
    State::new(0.0, f(&s.h_i, "h_i")?, f(&s.v_u, "v_u")?, f(&s.v_i, "v_i")?)
        .map_err(|e| config_error("initial", e))
}

fn require<'a, T>(value: &'a Option<T>, path: &str, kind: Kind) -> Result<&'a T, CliError> {
    value.as_ref().ok_or_else(|| {
        config_error(
            path,
            format!("required for experiment kind \"{}\"", kind.name()),
        )
    })
}

fn positive(value: f64, path: &str) -> Result<f64, CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(config_error(
            path,
            format!("must be positive and finite, got {value}"),
        ))
    }
}

/// Parses and validates a JSON configuration. Schema errors carry the JSON
/// path of the offending value.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_error(path, e.into_inner())
    })?;
    let kind = file.experiment.kind;
    let d = &file.domain;
    let mesh = Mesh1D::new(d.a, d.b, d.n).map_err(|e| config_error("domain", e))?;
    let bc = match file.bc {
        BcSpec::Neumann => BoundarySpec::Neumann,
        BcSpec::Dirichlet => BoundarySpec::Dirichlet,
        BcSpec::Robin { b_left, b_right } => {
            BoundarySpec::robin(b_left, b_right).map_err(|e| config_error("bc", e))?
        }
    };
    let coeffs = file
        .coefficients
        .as_ref()
        .map(|c| coefficients(mesh, c))
        .transpose()?;
    let initial = file
        .initial
        .as_ref()
        .map(|s| initial_state(mesh, s))
        .transpose()?;
    let stepper = file
        .stepper
        .as_ref()
        .map(|s| -> Result<StepperSpec, CliError> {
            Ok(StepperSpec {
                dt: match s.dt {
                    DtSpec::Fixed(dt) => Some(positive(dt, "stepper.dt")?),
                    DtSpec::Auto(AutoKeyword::Auto) => None,
                },
                t_end: positive(s.t_end, "stepper.t_end")?,
                steady_tol: positive(s.steady_tol.unwrap_or(1e-9), "stepper.steady_tol")?,
                snapshot_interval: s
                    .snapshot_interval
                    .map(|i| positive(i, "stepper.snapshot_interval"))
                    .transpose()?,
                stop_at_steady: s.stop_at_steady.unwrap_or(true),
            })
        })
        .transpose()?;
    let ex = &file.experiment;
    let needs_run = matches!(kind, Kind::Simulate | Kind::Threshold | Kind::Envelope);
    if kind != Kind::Sweep {
        require(&coeffs, "coefficients", kind)?;
    }
    if needs_run {
        require(&initial, "initial", kind)?;
    }
    if needs_run || kind == Kind::Sweep {
        require(&stepper, "stepper", kind)?;
    }
    if kind == Kind::Envelope {
        require(&ex.eps, "experiment.eps", kind)?;
        if !bc.is_dirichlet() {
            return Err(config_error(
                "bc",
                "the envelope experiment needs dirichlet conditions",
            ));
        }
    }
    if kind == Kind::Sweep {
        require(&ex.count, "experiment.count", kind)?;
    }
    let eps = ex.eps.unwrap_or(0.0);
    if !eps.is_finite() {
        return Err(config_error("experiment.eps", "must be finite"));
    }
    let resolved = match (&stepper, &coeffs, &initial) {
        (Some(s), Some(c), Some(i)) => Some(s.resolve(c, i)),
        _ => None,
    };
    Ok(RunConfig {
        kind,
        mesh,
        bc,
        coeffs,
        initial,
        stepper,
        resolved,
        eps,
        seed: ex.seed.unwrap_or(0),
        count: ex.count.unwrap_or(0),
        tol: positive(ex.tol.unwrap_or(1e-4), "experiment.tol")?,
    })
}
