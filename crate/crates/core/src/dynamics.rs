//! IMEX time stepping: implicit diffusion, explicit reaction.
//!
//! Each step solves `(1/dt - L) u_new = u/dt + f(u)` per component with a
//! factorization computed once per run.

use crate::error::{Error, Result};
use crate::grid::{BoundarySpec, CoefficientSet, ScalarField};
use crate::operators::{EllipticOperator, ShiftedSolve};
use crate::scalar::Real;
use crate::steady::{Direction, Pair, PerturbedEndemic};

/// Densities of infected hosts, uninfected vectors and infected vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct State<T> {
    pub t: T,
    pub h_i: ScalarField<T>,
    pub v_u: ScalarField<T>,
    pub v_i: ScalarField<T>,
}

impl<T: Real> State<T> {
    pub fn new(
        t: T,
        h_i: ScalarField<T>,
        v_u: ScalarField<T>,
        v_i: ScalarField<T>,
    ) -> Result<Self> {
        h_i.check_same_mesh(&v_u)?;
        h_i.check_same_mesh(&v_i)?;
        let s = Self { t, h_i, v_u, v_i };
        for (name, f) in s.components() {
            if let Some((node, v)) = f.values().iter().enumerate().find(|(_, v)| **v < T::zero()) {
                return Err(Error::Validation(format!(
                    "{name} is negative ({v}) at node {node}"
                )));
            }
        }
        Ok(s)
    }

    pub fn zeros(mesh: crate::grid::Mesh1D<T>) -> Self {
        let z = ScalarField::zeros(mesh);
        Self {
            t: T::zero(),
            h_i: z.clone(),
            v_u: z.clone(),
            v_i: z,
        }
    }

    /// Total vector density `V_u + V_i`.
    pub fn total_vectors(&self) -> ScalarField<T> {
        self.v_u.zip_unchecked(&self.v_i, |a, b| a + b)
    }

    pub fn components(&self) -> [(&'static str, &ScalarField<T>); 3] {
        [("H_i", &self.h_i), ("V_u", &self.v_u), ("V_i", &self.v_i)]
    }

    /// Sup distance over all three components.
    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        Ok(self
            .h_i
            .sup_distance(&other.h_i)?
            .max(self.v_u.sup_distance(&other.v_u)?)
            .max(self.v_i.sup_distance(&other.v_i)?))
    }

    /// Copy with every boundary value set to zero.
    pub fn with_boundary_zeroed(&self) -> Self {
        Self {
            t: self.t,
            h_i: self.h_i.with_boundary_zeroed(),
            v_u: self.v_u.with_boundary_zeroed(),
            v_i: self.v_i.with_boundary_zeroed(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig<T> {
    pub dt: T,
    pub t_end: T,
    pub steady_tol: T,
    /// Steps between the two states compared by the steady test.
    pub steady_window: usize,
    /// Stop as soon as the steady test passes.
    pub stop_at_steady: bool,
    /// Record a snapshot each time this much time has elapsed.
    pub snapshot_interval: Option<T>,
}

impl<T: Real> StepperConfig<T> {
    pub fn new(dt: T, t_end: T) -> Self {
        Self {
            dt,
            t_end,
            steady_tol: T::tol(1e-9),
            steady_window: 50,
            stop_at_steady: true,
            snapshot_interval: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::Validation(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !self.t_end.is_finite() {
            return Err(Error::Validation("t_end must be finite".into()));
        }
        if let Some(s) = self.snapshot_interval {
            if !(s > T::zero()) {
                return Err(Error::Validation(
                    "snapshot interval must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Reaction terms of the vector components.
#[derive(Debug, Clone)]
pub enum Reaction<T> {
    /// The full host-vector model.
    Model,
    /// Positive-part flow `sigma2 (U - V_i)^+ H_i - m V_i` for the infected
    /// vectors; the uninfected vectors stay at zero.
    Perturbed {
        envelope: ScalarField<T>,
        loss: ScalarField<T>,
    },
}

/// Crude Lipschitz bound on the reaction,
/// `dt <= 0.5 / max(rho + 2 sigma2 V + beta + 2 mu V + sigma1 h_u + sigma2 H)`,
/// with `V` and `H` bounding the vector and host densities along the run.
pub fn stability_bound<T: Real>(
    coeffs: &CoefficientSet<T>,
    state0: &State<T>,
    envelope: Option<&ScalarField<T>>,
) -> T {
    let v_hat = state0
        .total_vectors()
        .max()
        .max(coeffs.carrying_capacity().max())
        .max(envelope.map_or(T::zero(), |u| u.max()));
    let infect = coeffs.host_infection();
    let h_hat = state0
        .h_i
        .max()
        .max(infect.max() * v_hat / coeffs.rho().min());
    let two = T::lit(2.0);
    let rate = (0..coeffs.mesh().len())
        .map(|j| {
            coeffs.rho()[j]
                + two * coeffs.sigma2()[j] * v_hat
                + coeffs.beta()[j]
                + two * coeffs.mu()[j] * v_hat
                + infect[j]
                + coeffs.sigma2()[j] * h_hat
        })
        .fold(T::zero(), T::max);
    T::lit(0.5) / rate
}

/// Same bound for the scalar logistic flow alone.
pub fn stability_bound_logistic<T: Real>(coeffs: &CoefficientSet<T>, v0: &ScalarField<T>) -> T {
    let v_hat = v0.max().max(coeffs.carrying_capacity().max());
    let rate = (0..coeffs.mesh().len())
        .map(|j| coeffs.beta()[j] + T::lit(2.0) * coeffs.mu()[j] * v_hat)
        .fold(T::zero(), T::max);
    T::lit(0.5) / rate
}

fn check_bound<T: Real>(dt: T, bound: T) -> Result<()> {
    if dt > bound * (T::one() + T::lit(1e-12)) {
        return Err(Error::StepTooLarge {
            dt: dt.as_f64(),
            bound: bound.as_f64(),
        });
    }
    Ok(())
}

/// Zeroes round-off negatives and rejects anything worse.
fn clamp<T: Real>(field: &mut [T], component: &'static str, t: T) -> Result<()> {
    let floor = -T::tol(1e-14);
    for (node, v) in field.iter_mut().enumerate() {
        if !v.is_finite() || *v < floor {
            return Err(Error::BlowUp {
                component,
                node,
                value: v.as_f64(),
                t: t.as_f64(),
            });
        }
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    Ok(())
}

/// One-step IMEX integrator with pre-factored diffusion solves.
#[derive(Debug, Clone)]
pub struct Stepper<T> {
    coeffs: CoefficientSet<T>,
    dt: T,
    host: ShiftedSolve<T>,
    vector: ShiftedSolve<T>,
    infect: ScalarField<T>,
    reaction: Reaction<T>,
}

impl<T: Real> Stepper<T> {
    /// Does not check the stability bound; see [`stability_bound`].
    pub fn new(
        coeffs: &CoefficientSet<T>,
        bc: BoundarySpec<T>,
        dt: T,
        reaction: Reaction<T>,
    ) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::Validation(format!("dt must be positive, got {dt}")));
        }
        let mesh = *coeffs.mesh();
        let inv_dt = ScalarField::constant(mesh, dt.recip())?;
        let l1 = EllipticOperator::assemble(coeffs.d1(), bc)?;
        let l2 = EllipticOperator::assemble(coeffs.d2(), bc)?;
        if let Reaction::Perturbed { envelope, loss } = &reaction {
            envelope.check_same_mesh(coeffs.d1())?;
            loss.check_same_mesh(coeffs.d1())?;
        }
        Ok(Self {
            coeffs: coeffs.clone(),
            dt,
            host: ShiftedSolve::new(&l1, &inv_dt)?,
            vector: ShiftedSolve::new(&l2, &inv_dt)?,
            infect: coeffs.host_infection(),
            reaction,
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn step(&self, s: &State<T>) -> Result<State<T>> {
        s.h_i.check_same_mesh(self.coeffs.d1())?;
        let c = &self.coeffs;
        let mesh = *c.mesh();
        let inv = self.dt.recip();
        let n = mesh.len();
        let (h, vu, vi) = (s.h_i.values(), s.v_u.values(), s.v_i.values());
        let rho = c.rho().values();
        let s2 = c.sigma2().values();
        let beta = c.beta().values();
        let mu = c.mu().values();
        let infect = self.infect.values();
        let rh: Vec<T> = (0..n)
            .map(|j| h[j] * inv - rho[j] * h[j] + infect[j] * vi[j])
            .collect();
        let (ru, ri): (Vec<T>, Vec<T>) = match &self.reaction {
            Reaction::Model => (0..n)
                .map(|j| {
                    let v = vu[j] + vi[j];
                    let bite = s2[j] * vu[j] * h[j];
                    (
                        vu[j] * inv - bite + beta[j] * v - mu[j] * v * vu[j],
                        vi[j] * inv + bite - mu[j] * v * vi[j],
                    )
                })
                .unzip(),
            Reaction::Perturbed { envelope, loss } => (0..n)
                .map(|j| {
                    let gap = (envelope[j] - vi[j]).max(T::zero());
                    (
                        T::zero(),
                        vi[j] * inv + s2[j] * gap * h[j] - loss[j] * vi[j],
                    )
                })
                .unzip(),
        };
        let t = s.t + self.dt;
        let mut out = [
            self.host
                .solve(&ScalarField::from_raw(mesh, rh))?
                .into_values(),
            self.vector
                .solve(&ScalarField::from_raw(mesh, ru))?
                .into_values(),
            self.vector
                .solve(&ScalarField::from_raw(mesh, ri))?
                .into_values(),
        ];
        for (f, name) in out.iter_mut().zip(["H_i", "V_u", "V_i"]) {
            clamp(f, name, t)?;
        }
        let [h_i, v_u, v_i] = out;
        Ok(State {
            t,
            h_i: ScalarField::from_raw(mesh, h_i),
            v_u: ScalarField::from_raw(mesh, v_u),
            v_i: ScalarField::from_raw(mesh, v_i),
        })
    }
}

/// One IMEX step of the full model, checked against the stability bound
/// computed from `state`.
pub fn step<T: Real>(
    state: &State<T>,
    coeffs: &CoefficientSet<T>,
    bc: BoundarySpec<T>,
    dt: T,
) -> Result<State<T>> {
    check_bound(dt, stability_bound(coeffs, state, None))?;
    Stepper::new(coeffs, bc, dt, Reaction::Model)?.step(state)
}

#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    /// Initial state, states at the requested interval, and the final state.
    pub snapshots: Vec<State<T>>,
    pub final_state: State<T>,
    pub steady: bool,
    pub steps: usize,
}

/// Uniform step grid from `t0` to `t_end` with step at most `dt`.
fn step_plan<T: Real>(t0: T, cfg: &StepperConfig<T>) -> (usize, T) {
    let span = cfg.t_end - t0;
    if span <= T::zero() {
        return (0, cfg.dt);
    }
    let steps = (span / cfg.dt - T::lit(1e-9)).ceil().max(T::one());
    (steps.to_usize().unwrap_or(usize::MAX), span / steps)
}

/// Generic stepping loop shared by all flows. `observe` sees every state
/// (including the initial one) and may stop the run by returning `false`.
fn run<T: Real, S: Clone>(
    x0: S,
    t0: T,
    cfg: &StepperConfig<T>,
    mut advance: impl FnMut(&S, T) -> Result<S>,
    distance: impl Fn(&S, &S) -> Result<T>,
    mut observe: impl FnMut(&S, T, usize) -> Result<bool>,
) -> Result<(S, T, usize, bool)> {
    cfg.validate()?;
    let (steps, dt) = step_plan(t0, cfg);
    let mut x = x0;
    let mut anchor = x.clone();
    let mut steady = false;
    let mut t = t0;
    if !observe(&x, t, 0)? {
        return Ok((x, t, 0, false));
    }
    for k in 1..=steps {
        t = t0 + dt * T::from_usize(k).unwrap();
        x = advance(&x, t)?;
        if cfg.steady_window > 0 && k % cfg.steady_window == 0 {
            steady = distance(&x, &anchor)? < cfg.steady_tol;
            anchor = x.clone();
        }
        let go_on = observe(&x, t, k)?;
        if !go_on || (steady && cfg.stop_at_steady) {
            return Ok((x, t, k, steady));
        }
    }
    Ok((x, t, steps, steady))
}

/// Decides when snapshots are taken.
struct Snapshots<T> {
    interval: Option<T>,
    next: T,
}

impl<T: Real> Snapshots<T> {
    fn new(t0: T, interval: Option<T>) -> Self {
        Self {
            interval,
            next: t0 + interval.unwrap_or(T::infinity()),
        }
    }

    fn due(&mut self, t: T) -> bool {
        match self.interval {
            Some(i) if t >= self.next - i * T::lit(1e-9) => {
                while self.next <= t + i * T::lit(1e-9) {
                    self.next += i;
                }
                true
            }
            _ => false,
        }
    }
}

/// Integrates the full model with the stability bound checked against
/// the initial state.
pub fn integrate<T: Real>(
    state0: &State<T>,
    coeffs: &CoefficientSet<T>,
    bc: BoundarySpec<T>,
    cfg: &StepperConfig<T>,
) -> Result<Trajectory<T>> {
    integrate_with(state0, coeffs, bc, Reaction::Model, cfg, |_| Ok(true))
}

/// As [`integrate`] with a chosen reaction and an observer called on every
/// state; the observer can end the run early by returning `false`.
pub fn integrate_with<T: Real>(
    state0: &State<T>,
    coeffs: &CoefficientSet<T>,
    bc: BoundarySpec<T>,
    reaction: Reaction<T>,
    cfg: &StepperConfig<T>,
    mut observer: impl FnMut(&State<T>) -> Result<bool>,
) -> Result<Trajectory<T>> {
    let envelope = match &reaction {
        Reaction::Perturbed { envelope, .. } => Some(envelope.clone()),
        Reaction::Model => None,
    };
    check_bound(cfg.dt, stability_bound(coeffs, state0, envelope.as_ref()))?;
    let (_, dt) = step_plan(state0.t, cfg);
    let stepper = Stepper::new(coeffs, bc, dt, reaction)?;
    let mut x0 = state0.clone();
    if bc.is_dirichlet() {
        x0 = x0.with_boundary_zeroed();
    }
    let mut snaps = Snapshots::new(state0.t, cfg.snapshot_interval);
    let mut snapshots = vec![x0.clone()];
    let (mut last, t, steps, steady) = run(
        x0.clone(),
        x0.t,
        cfg,
        |s, t| {
            let mut next = stepper.step(s)?;
            next.t = t;
            Ok(next)
        },
        |a, b| a.sup_distance(b),
        |s, t, k| {
            if k > 0 && snaps.due(t) {
                snapshots.push(s.clone());
            }
            observer(s)
        },
    )?;
    last.t = t;
    if steps > 0 && snapshots.last().map(|s| s.t) != Some(t) {
        snapshots.push(last.clone());
    }
    Ok(Trajectory {
        snapshots,
        final_state: last,
        steady,
        steps,
    })
}

#[derive(Debug, Clone)]
pub struct ScalarTrajectory<T> {
    pub snapshots: Vec<(T, ScalarField<T>)>,
    pub final_t: T,
    pub final_field: ScalarField<T>,
    pub steady: bool,
    pub steps: usize,
}

/// Integrates `V_t = (d2 V')' + beta V - mu V^2` with the same scheme and
/// step grid as [`integrate`].
pub fn integrate_scalar_logistic<T: Real>(
    v0: &ScalarField<T>,
    coeffs: &CoefficientSet<T>,
    bc: BoundarySpec<T>,
    cfg: &StepperConfig<T>,
) -> Result<ScalarTrajectory<T>> {
    v0.check_same_mesh(coeffs.d2())?;
    check_bound(cfg.dt, stability_bound_logistic(coeffs, v0))?;
    let (_, dt) = step_plan(T::zero(), cfg);
    let mesh = *coeffs.mesh();
    let l2 = EllipticOperator::assemble(coeffs.d2(), bc)?;
    let solver = ShiftedSolve::new(&l2, &ScalarField::constant(mesh, dt.recip())?)?;
    let inv = dt.recip();
    let beta = coeffs.beta().values();
    let mu = coeffs.mu().values();
    let x0 = if bc.is_dirichlet() {
        v0.with_boundary_zeroed()
    } else {
        v0.clone()
    };
    let mut snaps = Snapshots::new(T::zero(), cfg.snapshot_interval);
    let mut snapshots = vec![(T::zero(), x0.clone())];
    let (last, t, steps, steady) = run(
        x0,
        T::zero(),
        cfg,
        |v: &ScalarField<T>, t| {
            let x = v.values();
            let rhs: Vec<T> = (0..x.len())
                .map(|j| x[j] * inv + beta[j] * x[j] - mu[j] * x[j] * x[j])
                .collect();
            let mut out = solver
                .solve(&ScalarField::from_raw(mesh, rhs))?
                .into_values();
            clamp(&mut out, "V", t)?;
            Ok(ScalarField::from_raw(mesh, out))
        },
        |a, b| a.sup_distance(b),
        |v, t, k| {
            if k > 0 && snaps.due(t) {
                snapshots.push((t, v.clone()));
            }
            Ok(true)
        },
    )?;
    if steps > 0 && snapshots.last().map(|s| s.0) != Some(t) {
        snapshots.push((t, last.clone()));
    }
    Ok(ScalarTrajectory {
        snapshots,
        final_t: t,
        final_field: last,
        steady,
        steps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport<T> {
    pub ordered: bool,
    /// First time the ordering failed by more than the tolerance.
    pub first_violation: Option<T>,
    /// Largest observed `lower - upper` over both components.
    pub max_violation: T,
    pub steps: usize,
}

/// Integrates `lower` and `upper` in lockstep with the same step and
/// reports whether `H_i` and `V_i` of `lower` stay below those of `upper`.
pub fn compare_trajectories<T: Real>(
    lower: &State<T>,
    upper: &State<T>,
    coeffs: &CoefficientSet<T>,
    bc: BoundarySpec<T>,
    cfg: &StepperConfig<T>,
) -> Result<ComparisonReport<T>> {
    let bound = stability_bound(coeffs, lower, None).min(stability_bound(coeffs, upper, None));
    check_bound(cfg.dt, bound)?;
    let (_, dt) = step_plan(lower.t, cfg);
    let stepper = Stepper::new(coeffs, bc, dt, Reaction::Model)?;
    let tol = T::tol(1e-10);
    let excess = |a: &State<T>, b: &State<T>| {
        let over = |x: &ScalarField<T>, y: &ScalarField<T>| {
            x.values()
                .iter()
                .zip(y.values())
                .map(|(p, q)| *p - *q)
                .fold(T::neg_infinity(), T::max)
        };
        over(&a.h_i, &b.h_i).max(over(&a.v_i, &b.v_i))
    };
    let mut first_violation = None;
    let mut max_violation = T::neg_infinity();
    let cfg = StepperConfig {
        stop_at_steady: false,
        steady_window: 0,
        ..*cfg
    };
    let (_, _, steps, _) = run(
        (lower.clone(), upper.clone()),
        lower.t,
        &cfg,
        |(a, b), t| {
            let (mut a, mut b) = (stepper.step(a)?, stepper.step(b)?);
            a.t = t;
            b.t = t;
            Ok((a, b))
        },
        |_, _| Ok(T::infinity()),
        |(a, b), t, _| {
            let e = excess(a, b);
            max_violation = max_violation.max(e);
            if e > tol && first_violation.is_none() {
                first_violation = Some(t);
            }
            Ok(true)
        },
    )?;
    Ok(ComparisonReport {
        ordered: first_violation.is_none(),
        first_violation,
        max_violation,
        steps,
    })
}

#[derive(Debug, Clone)]
pub struct MonotoneFlowReport<T> {
    pub direction: Direction,
    pub steps: usize,
    /// Largest step against the expected direction over both components.
    pub max_violation: T,
    pub final_pair: Pair<T>,
    pub steady: bool,
}

/// Runs the positive-part flow of `problem` from `start`, tracking whether
/// `H_i` and `V_i` move only in `direction` at every node and step.
pub fn monotone_flow<T: Real>(
    problem: &PerturbedEndemic<T>,
    coeffs: &CoefficientSet<T>,
    bc: BoundarySpec<T>,
    start: &Pair<T>,
    direction: Direction,
    cfg: &StepperConfig<T>,
) -> Result<MonotoneFlowReport<T>> {
    let mesh = *coeffs.mesh();
    let state0 = State {
        t: T::zero(),
        h_i: start.h_i.clone(),
        v_u: ScalarField::zeros(mesh),
        v_i: start.v_i.clone(),
    };
    let reaction = Reaction::Perturbed {
        envelope: problem.envelope(),
        loss: problem.loss(),
    };
    let against = |new: &ScalarField<T>, old: &ScalarField<T>| {
        new.values()
            .iter()
            .zip(old.values())
            .map(|(n, o)| match direction {
                Direction::Down => *n - *o,
                Direction::Up => *o - *n,
            })
            .fold(T::zero(), T::max)
    };
    let mut prev = state0.clone();
    let mut max_violation = T::zero();
    let traj = integrate_with(&state0, coeffs, bc, reaction, cfg, |s| {
        max_violation = max_violation
            .max(against(&s.h_i, &prev.h_i))
            .max(against(&s.v_i, &prev.v_i));
        prev = s.clone();
        Ok(true)
    })?;
    Ok(MonotoneFlowReport {
        direction,
        steps: traj.steps,
        max_violation,
        final_pair: Pair {
            h_i: traj.final_state.h_i,
            v_i: traj.final_state.v_i,
        },
        steady: traj.steady,
    })
}
