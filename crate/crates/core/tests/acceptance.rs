//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs sequentially so the wall-clock limits are meaningful.

mod common;

use common::*;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};
use vectorhost::dynamics::{
    compare_trajectories, integrate, integrate_scalar_logistic, monotone_flow, stability_bound,
    State, StepperConfig,
};
use vectorhost::eigen::{principal_eigen_scalar, principal_eigen_system};
use vectorhost::grid::{BoundarySpec, CoefficientSet, Mesh1D, ScalarField, UniformCoefficients};
use vectorhost::steady::{
    perturbation_weight, solve_endemic, solve_endemic_with, solve_logistic, Direction, Endemic,
    EndemicOptions, Pair, PerturbedEndemic,
};
use vectorhost::verify::{
    check_envelope_dirichlet, run_threshold_experiment, Attractor, ScenarioGenerator,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, Duration) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed())
}

fn constants(m: Mesh1D<f64>, beta: f64, h_u: f64) -> CoefficientSet<f64> {
    CoefficientSet::uniform(
        m,
        UniformCoefficients {
            beta,
            ..UniformCoefficients::unit(h_u)
        },
    )
    .unwrap()
}

fn constant_state(m: Mesh1D<f64>, h: f64, u: f64, i: f64) -> State<f64> {
    let c = |v| ScalarField::constant(m, v).unwrap();
    State::new(0.0, c(h), c(u), c(i)).unwrap()
}

fn scalar_eigen() -> Check {
    let mut worst_n: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for beta0 in [0.5, 1.0, 2.0] {
        let m = mesh(0.0, 1.0, 101);
        let b = ScalarField::constant(m, beta0).unwrap();
        let (e, dt) = timed(|| {
            principal_eigen_scalar(&ScalarField::ones(m), &b, BoundarySpec::Neumann).unwrap()
        });
        slowest = slowest.max(dt);
        worst_n = worst_n.max((e.lambda + beta0).abs());
    }
    ensure(worst_n <= 1e-10, || format!("Neumann error {worst_n:e}"))?;
    let mut errs = Vec::new();
    for beta0 in [0.5, 1.0, 2.0] {
        for (n, tol) in [(401, 1e-3), (801, 2.5e-4)] {
            let m = mesh(0.0, PI, n);
            let b = ScalarField::constant(m, beta0).unwrap();
            let (e, dt) = timed(|| {
                principal_eigen_scalar(&ScalarField::ones(m), &b, BoundarySpec::Dirichlet).unwrap()
            });
            slowest = slowest.max(dt);
            let err = (e.lambda - (1.0 - beta0)).abs();
            ensure(err <= tol, || {
                format!("Dirichlet beta {beta0} n {n}: error {err:e} > {tol:e}")
            })?;
            errs.push(err);
        }
    }
    ensure(slowest < Duration::from_secs(1), || {
        format!("slowest solve {slowest:?}")
    })?;
    Ok(format!(
        "Neumann max error {worst_n:.1e}; Dirichlet max error {:.1e}; slowest {slowest:.1?}",
        errs.iter().cloned().fold(0.0, f64::max)
    ))
}

fn system_eigen() -> Check {
    let m = mesh(0.0, 1.0, 101);
    let c = constants(m, 1.0, 2.0);
    let ones = ScalarField::ones(m);
    let e = principal_eigen_system(&c, &ones, BoundarySpec::Neumann, 0.0, &ones)
        .map_err(|e| e.to_string())?;
    let want = 1.0 - 2f64.sqrt();
    ensure((e.lambda - want).abs() <= 1e-8, || {
        format!("lambda {} vs {want}", e.lambda)
    })?;
    for phi in [&e.phi1, &e.phi2] {
        let variation = (phi.max() - phi.min()) / phi.max();
        ensure(variation <= 1e-8, || {
            format!("eigenfunction relative variation {variation:e}")
        })?;
    }
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut seed = 0;
    while checked < 20 {
        seed += 1;
        let m = mesh(0.0, 2.0, 101);
        let c = random_coeffs(1000 + seed, m);
        let bc = if seed % 2 == 0 {
            BoundarySpec::Neumann
        } else {
            BoundarySpec::Robin {
                left: 0.5,
                right: 1.5,
            }
        };
        let logistic = solve_logistic(&c, bc).map_err(|e| e.to_string())?;
        let Some(v_b) = logistic.v_b.as_ref() else {
            continue;
        };
        let w = perturbation_weight(bc, &logistic);
        let got = principal_eigen_system(&c, v_b, bc, 0.0, &w).map_err(|e| e.to_string())?;
        let (a, _) = dense_block(&c, v_b, bc, 0.0, &w);
        let (want, _) = dense_principal(&a);
        let err = (got.lambda - want).abs() / (1.0 + want.abs());
        ensure(err <= 1e-8, || {
            format!("seed {seed}: {} vs dense {want}", got.lambda)
        })?;
        worst = worst.max(err);
        checked += 1;
    }
    Ok(format!(
        "lambda {:.9}; dense agreement over {checked} scenarios, worst {worst:.1e}",
        e.lambda
    ))
}

fn closed_form_endemic() -> Check {
    let m = mesh(0.0, 1.0, 101);
    let c = constants(m, 1.0, 2.0);
    let bc = BoundarySpec::Neumann;
    let found = solve_endemic(&c, bc, 0.0).map_err(|e| e.to_string())?;
    let eq = found.present().ok_or("no endemic state")?;
    let mut err: f64 = 0.0;
    for j in 0..m.len() {
        err = err
            .max((eq.h_i[j] - 1.0).abs())
            .max((eq.v_i[j] - 0.5).abs())
            .max((eq.v_u[j] - 0.5).abs());
    }
    ensure(err <= 1e-8, || format!("closed-form error {err:e}"))?;
    ensure(eq.limit_gap <= 2e-8, || {
        format!("limit gap {:e}", eq.limit_gap)
    })?;
    let logistic = solve_logistic(&c, bc).unwrap();
    let v_b = logistic.v_b.clone().unwrap();
    let w = perturbation_weight(bc, &logistic);
    let eig = principal_eigen_system(&c, &v_b, bc, 0.0, &w).unwrap();
    let p = PerturbedEndemic::new(&c, &v_b, bc, 0.0, &w).unwrap();
    let upper = p.upper_pair();
    let (lower, _) = p.lower_pair(&eig, &upper).unwrap();
    let mut violations = 0;
    let mut sweeps_total = 0;
    for (start, dir) in [(upper, Direction::Down), (lower, Direction::Up)] {
        let mut prev = start.clone();
        let mut s = p.sweeps(&start, dir).map_err(|e| e.to_string())?;
        loop {
            let change = match s.advance() {
                Ok(c) => c,
                Err(_) => {
                    violations += 1;
                    break;
                }
            };
            let next = s.current();
            let ordered = match dir {
                Direction::Down => {
                    next.h_i.le_within(&prev.h_i, 0.0) && next.v_i.le_within(&prev.v_i, 0.0)
                }
                Direction::Up => {
                    prev.h_i.le_within(&next.h_i, 0.0) && prev.v_i.le_within(&next.v_i, 0.0)
                }
            };
            // Exact ties at round-off level are allowed; reversals are not.
            if !ordered {
                let back = match dir {
                    Direction::Down => next.sup_distance(&prev).unwrap(),
                    Direction::Up => prev.sup_distance(&next).unwrap(),
                };
                if back > 1e-12 {
                    violations += 1;
                }
            }
            prev = next;
            if change < 1e-10 || s.sweeps_done() >= 20_000 {
                break;
            }
        }
        sweeps_total += s.sweeps_done();
    }
    ensure(violations == 0, || {
        format!("{violations} monotonicity violations")
    })?;
    Ok(format!(
        "max error {err:.1e}; limit gap {:.1e}; {sweeps_total} checked sweeps, 0 violations",
        eq.limit_gap
    ))
}

fn existence_iff_sign() -> Check {
    let start = Instant::now();
    let mut summary = Vec::new();
    for (k, bc) in all_bcs().into_iter().enumerate() {
        let m = mesh(0.0, 4.0, 101);
        let mut gen = ScenarioGenerator::new(4000 + k as u64);
        let (mut qualified, mut endemic, mut drawn) = (0, 0, 0);
        while qualified < 50 {
            drawn += 1;
            ensure(drawn <= 2000, || {
                format!("{}: only {qualified} qualifying scenarios", bc.name())
            })?;
            let base = gen.coefficients(m).map_err(|e| e.to_string())?;
            let scale = (gen.uniform(0.05f64.ln(), 20f64.ln())).exp();
            let c = base.with_h_u_scaled(scale).unwrap();
            let logistic = solve_logistic(&c, bc).map_err(|e| e.to_string())?;
            let Some(v_b) = logistic.v_b.clone() else {
                continue;
            };
            let w = perturbation_weight(bc, &logistic);
            let lambda = principal_eigen_system(&c, &v_b, bc, 0.0, &w)
                .map_err(|e| e.to_string())?
                .lambda;
            if lambda.abs() <= 1e-3 {
                continue;
            }
            qualified += 1;
            let found = solve_endemic_with(&c, bc, &logistic, 0.0, &EndemicOptions::default())
                .map_err(|e| format!("{} draw {drawn}: {e}", bc.name()))?;
            match found {
                Endemic::Present(eq) => {
                    ensure(lambda < 0.0, || {
                        format!("{} draw {drawn}: endemic with lambda {lambda}", bc.name())
                    })?;
                    ensure(m.interior().all(|j| eq.v_i[j] < v_b[j]), || {
                        format!("{} draw {drawn}: V_i >= V_B", bc.name())
                    })?;
                    endemic += 1;
                }
                Endemic::Absent { .. } => ensure(lambda > 0.0, || {
                    format!("{} draw {drawn}: absent with lambda {lambda}", bc.name())
                })?,
            }
        }
        summary.push(format!("{} {endemic}/{qualified} endemic", bc.name()));
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(120), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!("{}; {elapsed:.1?}", summary.join(", ")))
}

struct Canonical {
    name: &'static str,
    coeffs: CoefficientSet<f64>,
    bc: BoundarySpec<f64>,
    attractor: Attractor,
    target: State<f64>,
}

fn canonical() -> Vec<Canonical> {
    let unit_mesh = mesh(0.0, 1.0, 201);
    let pi_mesh = mesh(0.0, PI, 201);
    vec![
        Canonical {
            name: "endemic",
            coeffs: constants(unit_mesh, 1.0, 2.0),
            bc: BoundarySpec::Neumann,
            attractor: Attractor::Endemic,
            target: constant_state(unit_mesh, 1.0, 0.5, 0.5),
        },
        Canonical {
            name: "disease-free",
            coeffs: constants(unit_mesh, 1.0, 0.5),
            bc: BoundarySpec::Neumann,
            attractor: Attractor::DiseaseFree,
            target: constant_state(unit_mesh, 0.0, 1.0, 0.0),
        },
        Canonical {
            name: "extinct",
            coeffs: constants(pi_mesh, 0.5, 2.0),
            bc: BoundarySpec::Dirichlet,
            attractor: Attractor::Extinct,
            target: State::zeros(pi_mesh),
        },
    ]
}

fn initial(m: Mesh1D<f64>) -> State<f64> {
    constant_state(m, 0.1, 0.8, 0.2)
}

fn auto_config(c: &CoefficientSet<f64>, s0: &State<f64>) -> StepperConfig<f64> {
    let mut cfg = StepperConfig::new(stability_bound(c, s0, None), 200.0);
    cfg.stop_at_steady = false;
    cfg.snapshot_interval = Some(1.0);
    cfg
}

fn threshold_dynamics() -> Check {
    let mut parts = Vec::new();
    for case in canonical() {
        let s0 = initial(*case.coeffs.mesh());
        let cfg = auto_config(&case.coeffs, &s0);
        let (report, elapsed) =
            timed(|| run_threshold_experiment(&case.coeffs, case.bc, &s0, &cfg, 1e-4));
        let report = report.map_err(|e| format!("{}: {e}", case.name))?;
        ensure(report.prediction.attractor == case.attractor, || {
            format!(
                "{}: predicted {}",
                case.name,
                report.prediction.attractor.name()
            )
        })?;
        let d = report.final_state.sup_distance(&case.target).unwrap();
        ensure(d < 1e-4, || format!("{}: final distance {d:e}", case.name))?;
        ensure(elapsed < Duration::from_secs(30), || {
            format!("{}: took {elapsed:?}", case.name)
        })?;
        parts.push(format!("{} {d:.1e} in {elapsed:.1?}", case.name));
    }
    Ok(parts.join(", "))
}

fn vector_reduction() -> Check {
    let mut worst: f64 = 0.0;
    let mut snapshots = 0;
    for case in canonical() {
        let s0 = initial(*case.coeffs.mesh());
        let cfg = auto_config(&case.coeffs, &s0);
        let full = integrate(&s0, &case.coeffs, case.bc, &cfg).map_err(|e| e.to_string())?;
        let total = s0.total_vectors();
        let total = if case.bc.is_dirichlet() {
            total.with_boundary_zeroed()
        } else {
            total
        };
        let scalar = integrate_scalar_logistic(&total, &case.coeffs, case.bc, &cfg)
            .map_err(|e| e.to_string())?;
        ensure(full.snapshots.len() == scalar.snapshots.len(), || {
            format!("{}: snapshot counts differ", case.name)
        })?;
        for (s, (_, v)) in full.snapshots.iter().zip(&scalar.snapshots) {
            worst = worst.max(s.total_vectors().sup_distance(v).unwrap());
            snapshots += 1;
        }
    }
    ensure(worst <= 1e-8, || format!("max distance {worst:e}"))?;
    Ok(format!(
        "max distance {worst:.1e} over {snapshots} snapshots"
    ))
}

fn envelope() -> Check {
    let m = mesh(0.0, PI, 201);
    let c = constants(m, 2.0, 2.0);
    let sine = ScalarField::from_fn(m, |x| x.sin())
        .unwrap()
        .with_boundary_zeroed();
    let s0 = State::new(0.0, sine.scale(0.1), sine.scale(0.08), sine.scale(0.02)).unwrap();
    let cfg = StepperConfig::new(stability_bound(&c, &s0, None), 200.0);
    let report = check_envelope_dirichlet(&c, &s0, 0.05, &cfg).map_err(|e| e.to_string())?;
    ensure(report.passed(), || format!("{report:?}"))?;
    Ok(format!(
        "T_eps {:.3}, held to t = {:.1} over {} steps",
        report.t_eps.unwrap(),
        report.t_end,
        report.steps
    ))
}

fn monotone_flows() -> Check {
    let mut parts = Vec::new();
    let cases = [
        (
            "constants",
            constants(mesh(0.0, 1.0, 101), 1.0, 2.0),
            BoundarySpec::Neumann,
        ),
        (
            "variable",
            random_coeffs(8, mesh(0.0, 2.0, 101))
                .with_h_u_scaled(3.0)
                .unwrap(),
            BoundarySpec::Neumann,
        ),
    ];
    for (name, c, bc) in cases {
        let m = *c.mesh();
        let eps = 0.01;
        let eq = solve_endemic(&c, bc, eps).map_err(|e| e.to_string())?;
        let eq = eq
            .present()
            .ok_or_else(|| format!("{name}: no endemic state"))?
            .clone();
        let p =
            PerturbedEndemic::new(&c, &eq.v_b, bc, eps, &eq.weight).map_err(|e| e.to_string())?;
        let eig =
            principal_eigen_system(&c, &eq.v_b, bc, eps, &eq.weight).map_err(|e| e.to_string())?;
        let (lower, delta) = p
            .lower_pair(&eig, &p.upper_pair())
            .map_err(|e| e.to_string())?;
        let starts = [
            (
                Pair {
                    h_i: eq.h_i.scale(3.0),
                    v_i: eq.v_i.scale(3.0),
                },
                Direction::Down,
            ),
            (lower, Direction::Up),
        ];
        for (start, dir) in starts {
            let s0 = State::new(
                0.0,
                start.h_i.clone(),
                ScalarField::zeros(m),
                start.v_i.clone(),
            )
            .unwrap();
            let dt = stability_bound(&c, &s0, Some(&p.envelope()));
            let report = monotone_flow(&p, &c, bc, &start, dir, &StepperConfig::new(dt, 400.0))
                .map_err(|e| e.to_string())?;
            ensure(report.max_violation <= 1e-12, || {
                format!(
                    "{name} {}: violation {:e}",
                    dir.name(),
                    report.max_violation
                )
            })?;
            let gap = report.final_pair.sup_distance(&eq.pair()).unwrap();
            ensure(gap < 1e-5, || {
                format!("{name} {}: ends {gap:e} from equilibrium", dir.name())
            })?;
        }
        parts.push(format!("{name} (delta {delta:.2e}) ok"));
    }
    Ok(parts.join(", "))
}

fn comparison_principle() -> Check {
    let m = mesh(0.0, 2.0, 101);
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..20u64 {
        let mut gen = ScenarioGenerator::new(9000 + seed);
        let bc = all_bcs()[seed as usize % 3];
        let c = gen.coefficients(m).map_err(|e| e.to_string())?;
        let upper = gen.initial_state(m, bc);
        let total = upper.total_vectors();
        let shrink = |gen: &mut ScenarioGenerator, f: &ScalarField<f64>| {
            let r: Vec<f64> = f
                .values()
                .iter()
                .map(|x| x * gen.uniform(0.1, 0.9))
                .collect();
            ScalarField::from_values(m, r).unwrap()
        };
        let h = shrink(&mut gen, &upper.h_i);
        let vi = shrink(&mut gen, &upper.v_i);
        let vu = total.zip_map(&vi, |a, b| a - b).unwrap();
        let lower = State::new(0.0, h, vu, vi).unwrap();
        let dt = stability_bound(&c, &upper, None).min(stability_bound(&c, &lower, None));
        let report = compare_trajectories(&lower, &upper, &c, bc, &StepperConfig::new(dt, 50.0))
            .map_err(|e| e.to_string())?;
        ensure(report.ordered, || {
            format!(
                "seed {seed}: ordering lost at t = {:?}",
                report.first_violation
            )
        })?;
        worst = worst.max(report.max_violation);
    }
    Ok(format!(
        "20 pairs ordered to t = 50; max lower - upper {worst:.1e}"
    ))
}

fn refinement() -> Check {
    let smooth = |m: Mesh1D<f64>, c0: f64, a: f64, k: f64| {
        ScalarField::from_fn(m, |x| c0 * (1.0 + a * (k * PI * x / 2.0).sin())).unwrap()
    };
    let build = |n: usize| {
        let m = mesh(0.0, 2.0, n);
        CoefficientSet::new(vectorhost::grid::CoefficientFields {
            d1: smooth(m, 0.8, 0.3, 1.0),
            d2: smooth(m, 1.2, 0.4, 2.0),
            rho: smooth(m, 1.0, 0.2, 3.0),
            sigma1: smooth(m, 1.0, 0.3, 1.0),
            sigma2: smooth(m, 1.5, 0.2, 2.0),
            beta: smooth(m, 2.0, 0.5, 1.0),
            mu: smooth(m, 1.0, 0.3, 3.0),
            h_u: smooth(m, 2.0, 0.4, 2.0),
        })
        .unwrap()
    };
    let bc = BoundarySpec::Neumann;
    let solve = |n: usize| -> Result<(f64, Pair<f64>), String> {
        let c = build(n);
        let logistic = solve_logistic(&c, bc).map_err(|e| e.to_string())?;
        let v_b = logistic.v_b.clone().ok_or("no V_B")?;
        let w = perturbation_weight(bc, &logistic);
        let lambda = principal_eigen_system(&c, &v_b, bc, 0.0, &w)
            .map_err(|e| e.to_string())?
            .lambda;
        let eq = solve_endemic(&c, bc, 0.0).map_err(|e| e.to_string())?;
        let eq = eq.present().ok_or("no endemic state")?;
        Ok((lambda, eq.pair()))
    };
    let (l1, p1) = solve(201)?;
    let (l2, p2) = solve(401)?;
    let (lr, pr) = solve(3201)?;
    let nodal = |p: &Pair<f64>, stride: usize| {
        (0..p.h_i.len())
            .map(|j| {
                (p.h_i[j] - pr.h_i[j * stride])
                    .abs()
                    .max((p.v_i[j] - pr.v_i[j * stride]).abs())
            })
            .fold(0.0, f64::max)
    };
    let lambda_ratio = (l1 - lr).abs() / (l2 - lr).abs();
    let eq_ratio = nodal(&p1, 16) / nodal(&p2, 8);
    let sup_ratio = {
        let e = |p: &Pair<f64>| {
            (p.h_i.max() - pr.h_i.max())
                .abs()
                .max((p.v_i.max() - pr.v_i.max()).abs())
        };
        e(&p1) / e(&p2)
    };
    for (what, r) in [
        ("lambda", lambda_ratio),
        ("equilibrium", eq_ratio),
        ("sup values", sup_ratio),
    ] {
        ensure((3.0..=5.0).contains(&r), || format!("{what} ratio {r:.3}"))?;
    }
    Ok(format!(
        "ratios: lambda {lambda_ratio:.3}, equilibrium nodal {eq_ratio:.3}, sup values {sup_ratio:.3}"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("scalar eigenvalue oracle", scalar_eigen),
        ("system eigenvalue oracle", system_eigen),
        ("closed-form endemic equilibrium", closed_form_endemic),
        ("existence iff negative eigenvalue", existence_iff_sign),
        ("threshold dynamics", threshold_dynamics),
        ("vector total reduction", vector_reduction),
        ("Dirichlet envelope", envelope),
        ("monotone auxiliary flows", monotone_flows),
        ("comparison principle", comparison_principle),
        ("discretization convergence", refinement),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let (result, elapsed) = timed(|| catch_unwind(AssertUnwindSafe(run)));
        let result = result.unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!(
                "criterion {:>2} {name}: PASS ({detail}) [{elapsed:.2?}]",
                k + 1
            ),
            Err(detail) => {
                failed += 1;
                println!(
                    "criterion {:>2} {name}: FAIL ({detail}) [{elapsed:.2?}]",
                    k + 1
                );
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
