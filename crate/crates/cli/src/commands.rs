//! One function per experiment kind. Each writes its artifacts into the
//! output directory and returns the verdict of its checks.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use vectorhost::dynamics::{integrate, StepperConfig};
use vectorhost::eigen::principal_eigen_system;
use vectorhost::grid::ScalarField;
use vectorhost::steady::{
    check_admissible, perturbation_weight, solve_endemic_with, solve_logistic, Endemic,
    EndemicOptions,
};
use vectorhost::verify::{
    check_envelope_dirichlet, check_no_endemic_when_stable, run_threshold_experiment,
    ConverseStatus, Outcome, ScenarioGenerator,
};
use vectorhost::{Boundary, Coefficients, Mesh, State, ThresholdReport};

use crate::config::{Kind, RunConfig, StepperSpec};
use crate::output::{create_dir, num, opt, write_json, Num, Table};
use crate::{CliError, Verdict, WORKERS_ENV};

/// Sweep cap for the check that no endemic state exists when stable.
const CONVERSE_SWEEPS: usize = 20_000;
/// Range of the log-uniform `h_u` scale drawn for sweep scenarios.
const SWEEP_SCALE: (f64, f64) = (0.05, 20.0);

/// Wall-clock time per phase, kept out of report.json so that the report
/// stays byte-identical between runs.
#[derive(Default)]
struct Timings(BTreeMap<String, f64>);

impl Timings {
    fn time<R>(&mut self, phase: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let r = f();
        self.0.insert(phase.into(), start.elapsed().as_secs_f64());
        r
    }
}

#[derive(Serialize)]
struct RunInfo {
    kind: &'static str,
    bc: &'static str,
    a: Num,
    b: Num,
    n: usize,
}

impl RunInfo {
    fn new(kind: Kind, mesh: &Mesh, bc: Boundary) -> Self {
        Self {
            kind: kind.name(),
            bc: bc.name(),
            a: num(mesh.left()),
            b: num(mesh.right()),
            n: mesh.len(),
        }
    }
}

fn coeffs(c: &RunConfig) -> &Coefficients {
    c.coeffs
        .as_ref()
        .expect("validated config has coefficients")
}

fn initial(c: &RunConfig) -> &State {
    c.initial
        .as_ref()
        .expect("validated config has initial data")
}

fn stepper(c: &RunConfig) -> StepperConfig<f64> {
    c.resolved.expect("validated config has a stepper")
}

fn nodes(mesh: &Mesh) -> Vec<f64> {
    mesh.nodes().collect()
}

fn values(f: &ScalarField<f64>) -> Vec<f64> {
    f.values().to_vec()
}

/// Runs the configured experiment and writes its artifacts to `out`.
pub fn run(config: &RunConfig, out: &Path) -> Result<Verdict, CliError> {
    create_dir(out)?;
    let start = Instant::now();
    let mut timings = Timings::default();
    let verdict = match config.kind {
        Kind::Eigen => eigen(config, out, &mut timings),
        Kind::Steady => steady(config, out, &mut timings),
        Kind::Simulate => simulate(config, out, &mut timings),
        Kind::Threshold => threshold(config, out, &mut timings),
        Kind::Envelope => envelope(config, out, &mut timings),
        Kind::Sweep => sweep(config, out, &mut timings),
    }?;
    timings
        .0
        .insert("total".into(), start.elapsed().as_secs_f64());
    write_json(&out.join("timings.json"), &timings.0)?;
    Ok(verdict)
}

#[derive(Serialize)]
struct EigenReport {
    run: RunInfo,
    eps: Num,
    lambda_beta: Num,
    logistic_steady: bool,
    logistic_residual: Option<Num>,
    lambda_system: Option<Num>,
    system_iterations: Option<usize>,
    system_residual: Option<Num>,
    eigenfunctions_positive: bool,
    verdict: &'static str,
}

fn interior_positive(mesh: &Mesh, f: &ScalarField<f64>) -> bool {
    mesh.interior().all(|j| f[j] > 0.0)
}

fn eigen(c: &RunConfig, out: &Path, t: &mut Timings) -> Result<Verdict, CliError> {
    let coeffs = coeffs(c);
    let logistic = t.time("logistic", || solve_logistic(coeffs, c.bc))?;
    let mut table = Table::default()
        .column("x", nodes(&c.mesh))
        .column("phi_beta", values(&logistic.phi));
    let mut positive = interior_positive(&c.mesh, &logistic.phi);
    let system = match &logistic.v_b {
        Some(v_b) => {
            check_admissible(coeffs, c.bc, &logistic, c.eps)?;
            let w = perturbation_weight(c.bc, &logistic);
            let e = t.time("system_eigen", || {
                principal_eigen_system(coeffs, v_b, c.bc, c.eps, &w)
            })?;
            positive &= interior_positive(&c.mesh, &e.phi1) && interior_positive(&c.mesh, &e.phi2);
            table = table
                .column("V_B", values(v_b))
                .column("phi_host", values(&e.phi1))
                .column("phi_vector", values(&e.phi2));
            Some(e)
        }
        None => None,
    };
    let verdict = Verdict::Pass.and(positive);
    write_json(
        &out.join("report.json"),
        &EigenReport {
            run: RunInfo::new(c.kind, &c.mesh, c.bc),
            eps: num(c.eps),
            lambda_beta: num(logistic.lambda_beta),
            logistic_steady: logistic.v_b.is_some(),
            logistic_residual: logistic.v_b.as_ref().map(|_| num(logistic.residual)),
            lambda_system: system.as_ref().map(|e| num(e.lambda)),
            system_iterations: system.as_ref().map(|e| e.iterations),
            system_residual: system.as_ref().map(|e| num(e.residual)),
            eigenfunctions_positive: positive,
            verdict: verdict.name(),
        },
    )?;
    table.write(&out.join("profiles.csv"))?;
    Ok(verdict)
}

#[derive(Serialize)]
struct ConverseJson {
    status: &'static str,
    final_sup: Option<Num>,
    sweeps: usize,
}

#[derive(Serialize)]
struct SteadyReport {
    run: RunInfo,
    eps: Num,
    lambda_beta: Num,
    logistic_steady: bool,
    lambda_system: Option<Num>,
    endemic: bool,
    decoupled: bool,
    iterations_upper: Option<usize>,
    iterations_lower: Option<usize>,
    newton_steps: Option<usize>,
    residual: Option<Num>,
    limit_gap: Option<Num>,
    delta: Option<Num>,
    sup_h_i: Option<Num>,
    sup_v_i: Option<Num>,
    below_envelope: Option<bool>,
    no_endemic_when_stable: Option<ConverseJson>,
    verdict: &'static str,
}

fn steady(c: &RunConfig, out: &Path, t: &mut Timings) -> Result<Verdict, CliError> {
    let coeffs = coeffs(c);
    let logistic = t.time("logistic", || solve_logistic(coeffs, c.bc))?;
    let mut report = SteadyReport {
        run: RunInfo::new(c.kind, &c.mesh, c.bc),
        eps: num(c.eps),
        lambda_beta: num(logistic.lambda_beta),
        logistic_steady: logistic.v_b.is_some(),
        lambda_system: None,
        endemic: false,
        decoupled: false,
        iterations_upper: None,
        iterations_lower: None,
        newton_steps: None,
        residual: None,
        limit_gap: None,
        delta: None,
        sup_h_i: None,
        sup_v_i: None,
        below_envelope: None,
        no_endemic_when_stable: None,
        verdict: Verdict::Pass.name(),
    };
    let mut table = Table::default().column("x", nodes(&c.mesh));
    let mut verdict = Verdict::Pass;
    if let Some(v_b) = &logistic.v_b {
        table = table.column("V_B", values(v_b));
        let found = t.time("endemic", || {
            solve_endemic_with(coeffs, c.bc, &logistic, c.eps, &EndemicOptions::default())
        })?;
        match found {
            Endemic::Present(eq) => {
                let below = c
                    .mesh
                    .interior()
                    .all(|j| eq.v_i[j] < v_b[j] + c.eps * eq.weight[j]);
                verdict = verdict.and(below && eq.lambda_system < 0.0);
                report.lambda_system = Some(num(eq.lambda_system));
                report.endemic = true;
                report.iterations_upper = Some(eq.iterations_upper);
                report.iterations_lower = Some(eq.iterations_lower);
                report.newton_steps = Some(eq.newton_steps);
                report.residual = Some(num(eq.residual));
                report.limit_gap = Some(num(eq.limit_gap));
                report.delta = Some(num(eq.delta));
                report.sup_h_i = Some(num(eq.h_i.sup_norm()));
                report.sup_v_i = Some(num(eq.v_i.sup_norm()));
                report.below_envelope = Some(below);
                table = table
                    .column("H_i_star", values(&eq.h_i))
                    .column("V_u_star", values(&eq.v_u))
                    .column("V_i_star", values(&eq.v_i));
            }
            Endemic::Absent {
                lambda_system,
                decoupled,
            } => {
                report.lambda_system = Some(num(lambda_system));
                report.decoupled = decoupled;
                verdict = verdict.and(lambda_system >= 0.0);
            }
        }
        if c.eps == 0.0 {
            let converse = t.time("no_endemic_when_stable", || {
                check_no_endemic_when_stable(coeffs, c.bc, CONVERSE_SWEEPS)
            })?;
            if converse.status != ConverseStatus::NotApplicable {
                verdict = verdict.and(converse.status != ConverseStatus::Refuted);
                report.no_endemic_when_stable = Some(ConverseJson {
                    status: converse.status.name(),
                    final_sup: opt(converse.final_sup),
                    sweeps: converse.sweeps,
                });
            }
        }
    }
    report.verdict = verdict.name();
    write_json(&out.join("report.json"), &report)?;
    table.write(&out.join("profiles.csv"))?;
    Ok(verdict)
}

#[derive(Serialize)]
struct StepperJson {
    dt: Num,
    t_end: Num,
    steady_tol: Num,
    snapshot_interval: Option<Num>,
    stop_at_steady: bool,
}

impl From<&StepperConfig<f64>> for StepperJson {
    fn from(s: &StepperConfig<f64>) -> Self {
        Self {
            dt: num(s.dt),
            t_end: num(s.t_end),
            steady_tol: num(s.steady_tol),
            snapshot_interval: opt(s.snapshot_interval),
            stop_at_steady: s.stop_at_steady,
        }
    }
}

#[derive(Serialize)]
struct SimulateReport {
    run: RunInfo,
    stepper: StepperJson,
    t_final: Num,
    steps: usize,
    steady: bool,
    sup_h_i: Num,
    sup_v_u: Num,
    sup_v_i: Num,
    verdict: &'static str,
}

fn state_columns(table: Table, s: &State) -> Table {
    table
        .column("H_i", values(&s.h_i))
        .column("V_u", values(&s.v_u))
        .column("V_i", values(&s.v_i))
}

fn simulate(c: &RunConfig, out: &Path, t: &mut Timings) -> Result<Verdict, CliError> {
    let cfg = stepper(c);
    let traj = t.time("integrate", || integrate(initial(c), coeffs(c), c.bc, &cfg))?;
    let s = &traj.final_state;
    write_json(
        &out.join("report.json"),
        &SimulateReport {
            run: RunInfo::new(c.kind, &c.mesh, c.bc),
            stepper: (&cfg).into(),
            t_final: num(s.t),
            steps: traj.steps,
            steady: traj.steady,
            sup_h_i: num(s.h_i.sup_norm()),
            sup_v_u: num(s.v_u.sup_norm()),
            sup_v_i: num(s.v_i.sup_norm()),
            verdict: Verdict::Pass.name(),
        },
    )?;
    state_columns(Table::default().column("x", nodes(&c.mesh)), s)
        .write(&out.join("profiles.csv"))?;
    let snaps = &traj.snapshots;
    Table::default()
        .column("t", snaps.iter().map(|s| s.t))
        .column("sup_Hi", snaps.iter().map(|s| s.h_i.sup_norm()))
        .column("sup_Vu", snaps.iter().map(|s| s.v_u.sup_norm()))
        .column("sup_Vi", snaps.iter().map(|s| s.v_i.sup_norm()))
        .write(&out.join("trajectory.csv"))?;
    Ok(Verdict::Pass)
}

#[derive(Serialize)]
struct ThresholdJson {
    stepper: StepperJson,
    lambda_beta: Num,
    lambda_system: Option<Num>,
    predicted: &'static str,
    near_threshold: bool,
    final_sup_distance: Num,
    time_to_tolerance: Option<Num>,
    attractor_tol: Num,
    t_final: Num,
    steady: bool,
    envelope_ok: Option<bool>,
    eps_used: Num,
    outcome: &'static str,
}

fn threshold_json(r: &ThresholdReport, cfg: &StepperConfig<f64>) -> ThresholdJson {
    ThresholdJson {
        stepper: cfg.into(),
        lambda_beta: num(r.prediction.lambda_beta),
        lambda_system: opt(r.prediction.lambda_system),
        predicted: r.prediction.attractor.name(),
        near_threshold: r.prediction.near_threshold(),
        final_sup_distance: num(r.final_sup_distance),
        time_to_tolerance: opt(r.time_to_tolerance),
        attractor_tol: num(r.attractor_tol),
        t_final: num(r.final_state.t),
        steady: r.steady,
        envelope_ok: r.envelope_ok,
        eps_used: num(r.eps_used),
        outcome: r.outcome.name(),
    }
}

fn threshold_verdict(r: &ThresholdReport) -> Verdict {
    Verdict::Pass.and(r.outcome != Outcome::Fail && r.envelope_ok != Some(false))
}

fn write_threshold_tables(dir: &Path, mesh: &Mesh, r: &ThresholdReport) -> Result<(), CliError> {
    let mut profiles = state_columns(Table::default().column("x", nodes(mesh)), &r.final_state);
    if let Some(v_b) = &r.prediction.logistic.v_b {
        profiles = profiles.column("V_B", values(v_b));
    }
    if let Some(eq) = &r.prediction.endemic {
        profiles = profiles
            .column("H_i_star", values(&eq.h_i))
            .column("V_i_star", values(&eq.v_i));
    }
    profiles.write(&dir.join("profiles.csv"))?;
    let p = &r.trajectory;
    Table::default()
        .column("t", p.iter().map(|p| p.t))
        .column("sup_dist_attractor", p.iter().map(|p| p.distance))
        .column("sup_Hi", p.iter().map(|p| p.sup_h_i))
        .column("sup_Vu", p.iter().map(|p| p.sup_v_u))
        .column("sup_Vi", p.iter().map(|p| p.sup_v_i))
        .write(&dir.join("trajectory.csv"))
}

#[derive(Serialize)]
struct ThresholdFile {
    run: RunInfo,
    #[serde(flatten)]
    result: ThresholdJson,
    verdict: &'static str,
}

fn threshold(c: &RunConfig, out: &Path, t: &mut Timings) -> Result<Verdict, CliError> {
    let cfg = stepper(c);
    let r = t.time("experiment", || {
        run_threshold_experiment(coeffs(c), c.bc, initial(c), &cfg, c.tol)
    })?;
    let verdict = threshold_verdict(&r);
    write_json(
        &out.join("report.json"),
        &ThresholdFile {
            run: RunInfo::new(c.kind, &c.mesh, c.bc),
            result: threshold_json(&r, &cfg),
            verdict: verdict.name(),
        },
    )?;
    write_threshold_tables(out, &c.mesh, &r)?;
    Ok(verdict)
}

#[derive(Serialize)]
struct EnvelopeFile {
    run: RunInfo,
    stepper: StepperJson,
    eps: Num,
    lambda_beta: Num,
    t_eps: Option<Num>,
    held_until_end: bool,
    first_failure: Option<Num>,
    t_end: Num,
    steps: usize,
    verdict: &'static str,
}

fn envelope(c: &RunConfig, out: &Path, t: &mut Timings) -> Result<Verdict, CliError> {
    let cfg = stepper(c);
    let coeffs = coeffs(c);
    let r = t.time("experiment", || {
        check_envelope_dirichlet(coeffs, initial(c), c.eps, &cfg)
    })?;
    let verdict = Verdict::Pass.and(r.passed());
    write_json(
        &out.join("report.json"),
        &EnvelopeFile {
            run: RunInfo::new(c.kind, &c.mesh, c.bc),
            stepper: (&cfg).into(),
            eps: num(r.eps),
            lambda_beta: num(r.lambda_beta),
            t_eps: opt(r.t_eps),
            held_until_end: r.held_until_end,
            first_failure: opt(r.first_failure),
            t_end: num(r.t_end),
            steps: r.steps,
            verdict: verdict.name(),
        },
    )?;
    let logistic = solve_logistic(coeffs, c.bc)?;
    let v_b = logistic.require()?;
    let phi = perturbation_weight(c.bc, &logistic);
    let band = |sign: f64| {
        v_b.zip_map(&phi, |v, p| v + sign * c.eps.abs() * p)
            .map(|f| values(&f))
    };
    Table::default()
        .column("x", nodes(&c.mesh))
        .column("V_B", values(v_b))
        .column("phi", values(&phi))
        .column("lower", band(-1.0)?)
        .column("upper", band(1.0)?)
        .write(&out.join("profiles.csv"))?;
    Ok(verdict)
}

#[derive(Serialize)]
struct ScenarioFile {
    run: RunInfo,
    index: usize,
    seed: u64,
    h_u_scale: Num,
    #[serde(flatten)]
    result: ThresholdJson,
    verdict: &'static str,
}

#[derive(Serialize)]
struct ScenarioLine {
    index: usize,
    seed: u64,
    h_u_scale: Num,
    predicted: Option<&'static str>,
    lambda_beta: Option<Num>,
    lambda_system: Option<Num>,
    final_sup_distance: Option<Num>,
    outcome: Option<&'static str>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SweepFile {
    run: RunInfo,
    seed: u64,
    count: usize,
    passed: usize,
    failed: usize,
    slow_regime: usize,
    errors: usize,
    scenarios: Vec<ScenarioLine>,
    verdict: &'static str,
}

fn workers() -> Result<usize, CliError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config {
                path: WORKERS_ENV.into(),
                message: format!("expected a positive integer, got {v:?}"),
            }),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs one seeded random scenario and writes its artifacts to `dir`.
fn scenario(
    c: &RunConfig,
    spec: &StepperSpec,
    index: usize,
    dir: &Path,
) -> (ScenarioLine, Option<Verdict>) {
    let seed = c.seed.wrapping_add(index as u64);
    let mut gen = ScenarioGenerator::new(seed);
    let scale = gen.uniform(SWEEP_SCALE.0.ln(), SWEEP_SCALE.1.ln()).exp();
    let mut line = ScenarioLine {
        index,
        seed,
        h_u_scale: num(scale),
        predicted: None,
        lambda_beta: None,
        lambda_system: None,
        final_sup_distance: None,
        outcome: None,
        error: None,
    };
    let result = (|| -> Result<Verdict, CliError> {
        let coeffs = gen.coefficients(c.mesh)?.with_h_u_scaled(scale)?;
        let s0 = gen.initial_state(c.mesh, c.bc);
        let cfg = spec.resolve(&coeffs, &s0);
        let r = run_threshold_experiment(&coeffs, c.bc, &s0, &cfg, c.tol)?;
        let verdict = threshold_verdict(&r);
        create_dir(dir)?;
        write_json(
            &dir.join("report.json"),
            &ScenarioFile {
                run: RunInfo::new(Kind::Threshold, &c.mesh, c.bc),
                index,
                seed,
                h_u_scale: num(scale),
                result: threshold_json(&r, &cfg),
                verdict: verdict.name(),
            },
        )?;
        write_threshold_tables(dir, &c.mesh, &r)?;
        line.predicted = Some(r.prediction.attractor.name());
        line.lambda_beta = Some(num(r.prediction.lambda_beta));
        line.lambda_system = opt(r.prediction.lambda_system);
        line.final_sup_distance = Some(num(r.final_sup_distance));
        line.outcome = Some(r.outcome.name());
        Ok(verdict)
    })();
    match result {
        Ok(v) => (line, Some(v)),
        Err(e) => {
            line.error = Some(e.to_string());
            (line, None)
        }
    }
}

fn sweep(c: &RunConfig, out: &Path, t: &mut Timings) -> Result<Verdict, CliError> {
    let spec = c.stepper.expect("validated sweep has a stepper");
    let n_workers = workers()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(n_workers)
        .build()
        .map_err(|e| CliError::Config {
            path: WORKERS_ENV.into(),
            message: e.to_string(),
        })?;
    let results: Vec<(ScenarioLine, Option<Verdict>, f64)> = t.time("scenarios", || {
        pool.install(|| {
            (0..c.count)
                .into_par_iter()
                .map(|k| {
                    let start = Instant::now();
                    let dir = out.join(format!("scenario_{k:03}"));
                    let (line, v) = scenario(c, &spec, k, &dir);
                    (line, v, start.elapsed().as_secs_f64())
                })
                .collect()
        })
    });
    t.0.insert("workers".into(), n_workers as f64);
    for (line, _, secs) in &results {
        t.0.insert(format!("scenario_{:03}", line.index), *secs);
    }
    let count_outcome = |o: Outcome| {
        results
            .iter()
            .filter(|(l, _, _)| l.outcome == Some(o.name()))
            .count()
    };
    let errors = results.iter().filter(|(_, v, _)| v.is_none()).count();
    let all_pass = results
        .iter()
        .all(|(_, v, _)| *v != Some(Verdict::CheckFailed));
    let verdict = Verdict::Pass.and(all_pass);
    let summary = SweepFile {
        run: RunInfo::new(c.kind, &c.mesh, c.bc),
        seed: c.seed,
        count: c.count,
        passed: count_outcome(Outcome::Pass),
        failed: count_outcome(Outcome::Fail),
        slow_regime: count_outcome(Outcome::SlowRegime),
        errors,
        verdict: if errors > 0 { "error" } else { verdict.name() },
        scenarios: results.into_iter().map(|(l, _, _)| l).collect(),
    };
    write_json(&out.join("report.json"), &summary)?;
    if errors > 0 {
        return Err(CliError::Scenarios {
            failed: errors,
            count: c.count,
        });
    }
    Ok(verdict)
}
