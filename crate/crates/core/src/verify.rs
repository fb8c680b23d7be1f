//! Numerical checks of the threshold dynamics and the envelope estimate,
//! plus a seeded generator of smooth random coefficients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{integrate_with, Reaction, State, StepperConfig};
use crate::eigen::{principal_eigen_scalar, principal_eigen_system};
use crate::error::{Error, Result};
use crate::grid::{BoundarySpec, CoefficientFields, CoefficientSet, Mesh1D, ScalarField};
use crate::scalar::Real;
use crate::steady::{
    check_admissible, perturbation_weight, solve_endemic_with, solve_logistic_given, Direction,
    Endemic, EndemicEquilibrium, EndemicOptions, LogisticSteady, PerturbedEndemic,
};

/// Eigenvalues within this band of zero are treated as near threshold.
pub const SLOW_BAND: f64 = 1e-3;
/// Envelope half-width tried first by the threshold experiment on Dirichlet
/// runs; halved until admissible.
pub const ENVELOPE_EPS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attractor {
    /// Positive host infection `(H_i*, V_B - V_i*, V_i*)`.
    Endemic,
    /// `(0, V_B, 0)`.
    DiseaseFree,
    /// `(0, 0, 0)`.
    Extinct,
}

impl Attractor {
    pub fn name(self) -> &'static str {
        match self {
            Attractor::Endemic => "Endemic",
            Attractor::DiseaseFree => "DiseaseFree",
            Attractor::Extinct => "Extinct",
        }
    }
}

/// Eigenvalue-based prediction of the long-time limit.
#[derive(Debug, Clone)]
pub struct Prediction<T> {
    pub lambda_beta: T,
    /// Present when the logistic steady state exists.
    pub lambda_system: Option<T>,
    pub attractor: Attractor,
    /// The predicted limit state (time field is zero).
    pub state: State<T>,
    pub logistic: LogisticSteady<T>,
    pub endemic: Option<EndemicEquilibrium<T>>,
}

impl<T: Real> Prediction<T> {
    /// Some eigenvalue deciding the outcome lies within [`SLOW_BAND`] of zero.
    pub fn near_threshold(&self) -> bool {
        let band = T::lit(SLOW_BAND);
        self.lambda_beta.abs() <= band || self.lambda_system.is_some_and(|l| l.abs() <= band)
    }
}

/// Computes `lambda_beta`, `V_B`, the system eigenvalue and, if endemic,
/// the equilibrium, and classifies the attractor by their signs.
pub fn predict<T: Real>(coeffs: &CoefficientSet<T>, bc: BoundarySpec<T>) -> Result<Prediction<T>> {
    let eig = principal_eigen_scalar(coeffs.d2(), coeffs.beta(), bc)?;
    let lambda_beta = eig.lambda;
    let logistic = solve_logistic_given(coeffs, bc, eig)?;
    let mesh = *coeffs.mesh();
    let zero = ScalarField::zeros(mesh);
    let Some(v_b) = logistic.v_b.clone() else {
        return Ok(Prediction {
            lambda_beta,
            lambda_system: None,
            attractor: Attractor::Extinct,
            state: State::zeros(mesh),
            logistic,
            endemic: None,
        });
    };
    let found = solve_endemic_with(coeffs, bc, &logistic, T::zero(), &EndemicOptions::default())?;
    let (lambda_system, attractor, state, endemic) = match found {
        Endemic::Present(eq) => (
            eq.lambda_system,
            Attractor::Endemic,
            State {
                t: T::zero(),
                h_i: eq.h_i.clone(),
                v_u: eq.v_u.clone(),
                v_i: eq.v_i.clone(),
            },
            Some(*eq),
        ),
        Endemic::Absent { lambda_system, .. } => (
            lambda_system,
            Attractor::DiseaseFree,
            State {
                t: T::zero(),
                h_i: zero.clone(),
                v_u: v_b,
                v_i: zero,
            },
            None,
        ),
    };
    Ok(Prediction {
        lambda_beta,
        lambda_system: Some(lambda_system),
        attractor,
        state,
        logistic,
        endemic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint<T> {
    pub t: T,
    pub distance: T,
    pub sup_h_i: T,
    pub sup_v_u: T,
    pub sup_v_i: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// The run came within tolerance of the predicted attractor.
    Pass,
    /// The run ended away from the predicted attractor.
    Fail,
    /// Near threshold: slow convergence is expected, no verdict.
    SlowRegime,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::SlowRegime => "slow_regime",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ThresholdReport<T> {
    pub prediction: Prediction<T>,
    /// Snapshots of the sup distance to the predicted attractor.
    pub trajectory: Vec<TrajectoryPoint<T>>,
    pub final_state: State<T>,
    pub final_sup_distance: T,
    /// First step time at which the distance fell below the tolerance.
    pub time_to_tolerance: Option<T>,
    pub attractor_tol: T,
    pub steady: bool,
    /// Whether `V_u + V_i` entered `V_B -/+ eps_used phi` and stayed there;
    /// `None` unless the run is Dirichlet with a positive `V_B`.
    pub envelope_ok: Option<bool>,
    pub eps_used: T,
    pub outcome: Outcome,
}

fn point<T: Real>(s: &State<T>, target: &State<T>) -> Result<TrajectoryPoint<T>> {
    Ok(TrajectoryPoint {
        t: s.t,
        distance: s.sup_distance(target)?,
        sup_h_i: s.h_i.sup_norm(),
        sup_v_u: s.v_u.sup_norm(),
        sup_v_i: s.v_i.sup_norm(),
    })
}

/// Predicts the attractor, integrates from `initial`, and measures the
/// approach to the prediction.
pub fn run_threshold_experiment<T: Real>(
    coeffs: &CoefficientSet<T>,
    bc: BoundarySpec<T>,
    initial: &State<T>,
    cfg: &StepperConfig<T>,
    attractor_tol: T,
) -> Result<ThresholdReport<T>> {
    let prediction = predict(coeffs, bc)?;
    let target = &prediction.state;
    let envelope = match (bc.is_dirichlet(), prediction.logistic.v_b.as_ref()) {
        (true, Some(v_b)) => {
            let mut eps = T::lit(ENVELOPE_EPS);
            while check_admissible(coeffs, bc, &prediction.logistic, eps).is_err()
                && eps > T::tol(1e-12)
            {
                eps *= T::lit(0.5);
            }
            let phi = perturbation_weight(bc, &prediction.logistic);
            Some((eps, v_b.clone(), phi))
        }
        _ => None,
    };
    let mesh = *coeffs.mesh();
    let mut entered = false;
    let mut left_after = false;
    let mut time_to_tolerance = None;
    let mut all = Vec::new();
    let traj = integrate_with(initial, coeffs, bc, Reaction::Model, cfg, |s| {
        let p = point(s, target)?;
        if time_to_tolerance.is_none() && p.distance < attractor_tol {
            time_to_tolerance = Some(s.t);
        }
        all.push(p);
        if let Some((eps, v_b, phi)) = &envelope {
            let v = s.total_vectors();
            let inside = mesh
                .interior()
                .all(|j| (v[j] - v_b[j]).abs() < *eps * phi[j]);
            if inside {
                entered = true;
            } else if entered {
                left_after = true;
            }
        }
        Ok(true)
    })?;
    let snapshot_times: Vec<T> = traj.snapshots.iter().map(|s| s.t).collect();
    let trajectory = if cfg.snapshot_interval.is_some() {
        all.into_iter()
            .filter(|p| snapshot_times.contains(&p.t))
            .collect()
    } else {
        all
    };
    let final_sup_distance = traj.final_state.sup_distance(target)?;
    let outcome = if final_sup_distance < attractor_tol {
        Outcome::Pass
    } else if prediction.near_threshold() {
        Outcome::SlowRegime
    } else {
        Outcome::Fail
    };
    Ok(ThresholdReport {
        prediction,
        trajectory,
        final_state: traj.final_state,
        final_sup_distance,
        time_to_tolerance,
        attractor_tol,
        steady: traj.steady,
        envelope_ok: envelope.as_ref().map(|_| entered && !left_after),
        eps_used: envelope.as_ref().map_or(T::zero(), |e| e.0),
        outcome,
    })
}

#[derive(Debug, Clone)]
pub struct EnvelopeReport<T> {
    pub eps: T,
    pub lambda_beta: T,
    /// First time both strict inequalities held at every interior node.
    pub t_eps: Option<T>,
    /// The inequalities held at every step from `t_eps` to the end.
    pub held_until_end: bool,
    /// First time after `t_eps` at which an inequality failed.
    pub first_failure: Option<T>,
    pub t_end: T,
    pub steps: usize,
}

impl<T> EnvelopeReport<T> {
    pub fn passed(&self) -> bool {
        self.t_eps.is_some() && self.held_until_end
    }
}

/// Integrates a Dirichlet run to `t_end` and checks that the total vector
/// density enters and stays inside `V_B -/+ eps phi`.
pub fn check_envelope_dirichlet<T: Real>(
    coeffs: &CoefficientSet<T>,
    initial: &State<T>,
    eps: T,
    cfg: &StepperConfig<T>,
) -> Result<EnvelopeReport<T>> {
    let bc = BoundarySpec::Dirichlet;
    let eig = principal_eigen_scalar(coeffs.d2(), coeffs.beta(), bc)?;
    let logistic = solve_logistic_given(coeffs, bc, eig)?;
    let v_b = logistic.require()?.clone();
    check_admissible(coeffs, bc, &logistic, eps)?;
    let phi = perturbation_weight(bc, &logistic);
    let mesh = *coeffs.mesh();
    let inside = |s: &State<T>| {
        let v = s.total_vectors();
        mesh.interior().all(|j| {
            let w = eps.abs() * phi[j];
            v_b[j] - w < v[j] && v[j] < v_b[j] + w
        })
    };
    let mut t_eps = None;
    let mut first_failure = None;
    let run_cfg = StepperConfig {
        stop_at_steady: false,
        ..*cfg
    };
    let traj = integrate_with(initial, coeffs, bc, Reaction::Model, &run_cfg, |s| {
        let ok = inside(s);
        match (t_eps, ok) {
            (None, true) => t_eps = Some(s.t),
            (Some(_), false) if first_failure.is_none() => first_failure = Some(s.t),
            _ => {}
        }
        Ok(true)
    })?;
    Ok(EnvelopeReport {
        eps,
        lambda_beta: logistic.lambda_beta,
        held_until_end: t_eps.is_some() && first_failure.is_none(),
        t_eps,
        first_failure,
        t_end: traj.final_state.t,
        steps: traj.steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConverseStatus {
    /// No endemic state and the iteration from above collapsed to zero.
    Confirmed,
    /// An endemic state was found, or the iteration from above stalled at
    /// a positive limit.
    Refuted,
    /// The system eigenvalue is not positive enough to test.
    NotApplicable,
    /// The sweep cap was reached before collapse.
    Inconclusive,
}

impl ConverseStatus {
    pub fn name(self) -> &'static str {
        match self {
            ConverseStatus::Confirmed => "confirmed",
            ConverseStatus::Refuted => "refuted",
            ConverseStatus::NotApplicable => "not_applicable",
            ConverseStatus::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConverseReport<T> {
    pub status: ConverseStatus,
    pub lambda_beta: T,
    pub lambda_system: Option<T>,
    pub endemic_absent: bool,
    /// Sup norm of the last iterate from above.
    pub final_sup: Option<T>,
    pub sweeps: usize,
}

/// Threshold on the system eigenvalue above which the converse is tested.
pub const CONVERSE_MARGIN: f64 = 1e-8;
/// Sup norm below which the iteration from above counts as collapsed.
pub const COLLAPSE_TOL: f64 = 1e-6;

/// When the system eigenvalue is positive, checks that no endemic state is
/// found and that monotone iteration from the upper pair decays to zero.
pub fn check_no_endemic_when_stable<T: Real>(
    coeffs: &CoefficientSet<T>,
    bc: BoundarySpec<T>,
    max_sweeps: usize,
) -> Result<ConverseReport<T>> {
    let eig = principal_eigen_scalar(coeffs.d2(), coeffs.beta(), bc)?;
    let lambda_beta = eig.lambda;
    let logistic = solve_logistic_given(coeffs, bc, eig)?;
    let mut report = ConverseReport {
        status: ConverseStatus::NotApplicable,
        lambda_beta,
        lambda_system: None,
        endemic_absent: false,
        final_sup: None,
        sweeps: 0,
    };
    let Some(v_b) = logistic.v_b.as_ref() else {
        return Ok(report);
    };
    let weight = perturbation_weight(bc, &logistic);
    let lambda = principal_eigen_system(coeffs, v_b, bc, T::zero(), &weight)?.lambda;
    report.lambda_system = Some(lambda);
    if lambda < T::lit(CONVERSE_MARGIN) {
        return Ok(report);
    }
    let found = solve_endemic_with(coeffs, bc, &logistic, T::zero(), &EndemicOptions::default())?;
    report.endemic_absent = found.present().is_none();
    if !report.endemic_absent {
        report.status = ConverseStatus::Refuted;
        return Ok(report);
    }
    let problem = PerturbedEndemic::new(coeffs, v_b, bc, T::zero(), &weight)?;
    let mut sweeps = problem.sweeps(&problem.upper_pair(), Direction::Down)?;
    let collapse = T::lit(COLLAPSE_TOL);
    report.status = ConverseStatus::Inconclusive;
    while sweeps.sweeps_done() < max_sweeps {
        let change = sweeps.advance()?;
        let size = sweeps.current().sup_norm();
        if size < collapse {
            report.status = ConverseStatus::Confirmed;
            break;
        }
        if change <= T::epsilon() * size {
            report.status = ConverseStatus::Refuted;
            break;
        }
    }
    report.final_sup = Some(sweeps.current().sup_norm());
    report.sweeps = sweeps.sweeps_done();
    Ok(report)
}

/// Seeded generator of coefficient fields
/// `c0 (1 + a sin(k pi (x - left) / (right - left)))` with `c0`
/// log-uniform in `[0.2, 5]`, `a` uniform in `[0, 0.5]`, `k` in `{1, 2, 3}`.
#[derive(Debug, Clone)]
pub struct ScenarioGenerator {
    rng: ChaCha8Rng,
}

impl ScenarioGenerator {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn field<T: Real>(&mut self, mesh: Mesh1D<T>) -> ScalarField<T> {
        let c0 = (self.rng.gen_range(0.2f64.ln()..=5.0f64.ln())).exp();
        let amp = self.rng.gen_range(0.0..=0.5);
        let k = self.rng.gen_range(1..=3) as f64;
        let (a, b) = (mesh.left().as_f64(), mesh.right().as_f64());
        let values = mesh
            .nodes()
            .map(|x| {
                let s = (k * std::f64::consts::PI * (x.as_f64() - a) / (b - a)).sin();
                T::lit(c0 * (1.0 + amp * s))
            })
            .collect();
        ScalarField::from_raw(mesh, values)
    }

    pub fn coefficients<T: Real>(&mut self, mesh: Mesh1D<T>) -> Result<CoefficientSet<T>> {
        CoefficientSet::new(CoefficientFields {
            d1: self.field(mesh),
            d2: self.field(mesh),
            rho: self.field(mesh),
            sigma1: self.field(mesh),
            sigma2: self.field(mesh),
            beta: self.field(mesh),
            mu: self.field(mesh),
            h_u: self.field(mesh),
        })
    }

    /// Positive initial state; boundary values are zeroed for Dirichlet.
    pub fn initial_state<T: Real>(&mut self, mesh: Mesh1D<T>, bc: BoundarySpec<T>) -> State<T> {
        let s = State {
            t: T::zero(),
            h_i: self.field(mesh),
            v_u: self.field(mesh),
            v_i: self.field(mesh),
        };
        if bc.is_dirichlet() {
            s.with_boundary_zeroed()
        } else {
            s
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..=hi)
    }
}

/// Sup distance between two states that must share a mesh.
pub fn state_distance<T: Real>(a: &State<T>, b: &State<T>) -> Result<T> {
    a.sup_distance(b).map_err(|_| Error::MeshMismatch)
}
