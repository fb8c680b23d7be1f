use crate::eigen::{
    check_perturbed_positive, principal_eigen_system_with, EigenOptions, SystemEigenpair,
};
use crate::error::{Error, Result};
use crate::grid::{BoundarySpec, CoefficientSet, ScalarField};
use crate::operators::{BlockTridiagonal2, EllipticOperator, ShiftedSolve, TridiagonalLu};
use crate::scalar::{sup, sup_diff, Real};

use super::logistic::{solve_logistic, LogisticSteady};

/// Which way a monotone sequence moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Non-decreasing, started from a lower solution.
    Up,
    /// Non-increasing, started from an upper solution.
    Down,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

/// Infected host and infected vector profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair<T> {
    pub h_i: ScalarField<T>,
    pub v_i: ScalarField<T>,
}

impl<T: Real> Pair<T> {
    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        Ok(self
            .h_i
            .sup_distance(&other.h_i)?
            .max(self.v_i.sup_distance(&other.v_i)?))
    }

    pub fn sup_norm(&self) -> T {
        self.h_i.sup_norm().max(self.v_i.sup_norm())
    }
}

/// Perturbation weight: the Dirichlet eigenfunction of the logistic
/// linearization, or the constant one otherwise.
pub fn perturbation_weight<T: Real>(
    bc: BoundarySpec<T>,
    logistic: &LogisticSteady<T>,
) -> ScalarField<T> {
    if bc.is_dirichlet() {
        logistic.phi.clone()
    } else {
        ScalarField::ones(*logistic.phi.mesh())
    }
}

/// Checks that `eps` keeps both perturbed problems well posed.
pub fn check_admissible<T: Real>(
    coeffs: &CoefficientSet<T>,
    bc: BoundarySpec<T>,
    logistic: &LogisticSteady<T>,
    eps: T,
) -> Result<()> {
    if eps == T::zero() {
        return Ok(());
    }
    let v_b = logistic.require()?;
    let weight = perturbation_weight(bc, logistic);
    let op = EllipticOperator::assemble(coeffs.d2(), bc)?;
    check_perturbed_positive(&op, v_b, eps, &weight)?;
    let beta = coeffs.beta();
    let mu = coeffs.mu();
    for j in op.unknowns() {
        let ok = if bc.is_dirichlet() {
            let p = eps * weight[j];
            let lin = (logistic.lambda_beta + beta[j]) * p;
            let quad = p * p * mu[j];
            let base = beta[j] * v_b[j];
            quad < base + lin && quad < base - lin
        } else {
            eps * eps * mu[j] < beta[j] * v_b[j]
        };
        if !ok {
            return Err(Error::Inadmissible {
                eps: eps.as_f64(),
                inequality: if bc.is_dirichlet() {
                    "(eps*phi)^2*mu < beta*V_B +/- eps*phi*(lambda_beta + beta)"
                } else {
                    "eps^2*mu < beta*V_B"
                },
                x: op.mesh().node(j).as_f64(),
            });
        }
    }
    Ok(())
}

/// `H_bar` solving `-(d1 H')' + rho H = sigma1 h_u (V_B + eps w)`.
pub fn upper_solution_h<T: Real>(
    coeffs: &CoefficientSet<T>,
    v_b: &ScalarField<T>,
    bc: BoundarySpec<T>,
    eps: T,
    weight: &ScalarField<T>,
) -> Result<ScalarField<T>> {
    Ok(PerturbedEndemic::new(coeffs, v_b, bc, eps, weight)?
        .upper_pair()
        .h_i)
}

/// The perturbed steady problem
/// `-(d1 H')' = -rho H + sigma1 h_u V`,
/// `-(d2 V')' = sigma2 (U - V)^+ H - m V`
/// with envelope `U = V_B + eps w` and loss `m = mu (V_B - eps w)`,
/// stored on the unknown nodes of the boundary condition.
#[derive(Debug, Clone)]
pub struct PerturbedEndemic<T> {
    l1: EllipticOperator<T>,
    l2: EllipticOperator<T>,
    eps: T,
    v_b: ScalarField<T>,
    weight: ScalarField<T>,
    rho: Vec<T>,
    infect: Vec<T>,
    sigma2: Vec<T>,
    envelope: Vec<T>,
    loss: Vec<T>,
    /// `mu (V_B + |eps| w)`, an upper bound on the loss for either sign.
    loss_bound: Vec<T>,
    upper_h: Vec<T>,
    norm: T,
}

impl<T: Real> PerturbedEndemic<T> {
    pub fn new(
        coeffs: &CoefficientSet<T>,
        v_b: &ScalarField<T>,
        bc: BoundarySpec<T>,
        eps: T,
        weight: &ScalarField<T>,
    ) -> Result<Self> {
        coeffs.d1().check_same_mesh(v_b)?;
        coeffs.d1().check_same_mesh(weight)?;
        let l1 = EllipticOperator::assemble(coeffs.d1(), bc)?;
        let l2 = EllipticOperator::assemble(coeffs.d2(), bc)?;
        check_perturbed_positive(&l1, v_b, eps, weight)?;
        let vb = l1.restrict(v_b);
        let w = l1.restrict(weight);
        let mu = l1.restrict(coeffs.mu());
        let m = vb.len();
        let envelope: Vec<T> = (0..m).map(|i| vb[i] + eps * w[i]).collect();
        let loss = (0..m).map(|i| mu[i] * (vb[i] - eps * w[i])).collect();
        let loss_bound = (0..m).map(|i| mu[i] * (vb[i] + eps.abs() * w[i])).collect();
        let rho = l1.restrict(coeffs.rho());
        let infect = l1.restrict(&coeffs.host_infection());
        let mut upper_h: Vec<T> = (0..m).map(|i| infect[i] * envelope[i]).collect();
        let solver = ShiftedSolve::new(&l1, coeffs.rho())?;
        solver.solve_unknowns(&mut upper_h);
        let norm = l1.norm_inf().max(l2.norm_inf());
        Ok(Self {
            sigma2: l1.restrict(coeffs.sigma2()),
            l1,
            l2,
            eps,
            v_b: v_b.clone(),
            weight: weight.clone(),
            rho,
            infect,
            envelope,
            loss,
            loss_bound,
            upper_h,
            norm,
        })
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn v_b(&self) -> &ScalarField<T> {
        &self.v_b
    }

    pub fn weight(&self) -> &ScalarField<T> {
        &self.weight
    }

    /// `U = V_B + eps w`.
    pub fn envelope(&self) -> ScalarField<T> {
        self.l1.extend(&self.envelope)
    }

    /// `m = mu (V_B - eps w)`.
    pub fn loss(&self) -> ScalarField<T> {
        self.l1.extend(&self.loss)
    }

    /// Upper pair `(H_bar, U)`, where `H_bar` solves
    /// `-(d1 H')' + rho H = sigma1 h_u U`.
    pub fn upper_pair(&self) -> Pair<T> {
        Pair {
            h_i: self.l1.extend(&self.upper_h),
            v_i: self.l1.extend(&self.envelope),
        }
    }

    fn residual_into(&self, h: &[T], v: &[T], r1: &mut [T], r2: &mut [T]) {
        self.l1.stencil().apply(h, r1);
        self.l2.stencil().apply(v, r2);
        for i in 0..h.len() {
            r1[i] += self.rho[i] * h[i] - self.infect[i] * v[i];
            r2[i] += self.loss[i] * v[i]
                - self.sigma2[i] * (self.envelope[i] - v[i]).max(T::zero()) * h[i];
        }
    }

    /// `-L u - f(u)` for both components; nonnegative for an upper
    /// solution, nonpositive for a lower one. Zero at Dirichlet boundaries.
    pub fn residual(&self, pair: &Pair<T>) -> Result<Pair<T>> {
        pair.h_i.check_same_mesh(&self.v_b)?;
        pair.v_i.check_same_mesh(&self.v_b)?;
        let h = self.l1.restrict(&pair.h_i);
        let v = self.l1.restrict(&pair.v_i);
        let mut r1 = vec![T::zero(); h.len()];
        let mut r2 = vec![T::zero(); h.len()];
        self.residual_into(&h, &v, &mut r1, &mut r2);
        Ok(Pair {
            h_i: self.l1.extend(&r1),
            v_i: self.l1.extend(&r2),
        })
    }

    /// Sup of the residual over both components.
    pub fn residual_norm(&self, pair: &Pair<T>) -> Result<T> {
        Ok(self.residual(pair)?.sup_norm())
    }

    fn scale(&self, h: &[T], v: &[T]) -> T {
        T::lit(64.0) * T::epsilon() * self.norm * (T::one() + sup(h).max(sup(v)))
    }

    /// Sweep constant making the sweep map order preserving on pairs with
    /// `H <= h_bound`.
    fn sweep_constant(&self, h_bound: &[T]) -> T {
        (0..self.rho.len())
            .map(|i| {
                let sufficient = self.rho[i].max(self.sigma2[i] * h_bound[i] + self.loss_bound[i]);
                let classical = self.sigma2[i] * self.envelope[i].max(T::zero())
                    + self.loss_bound[i]
                    + self.rho[i];
                sufficient.max(classical)
            })
            .fold(T::zero(), T::max)
    }

    /// Monotone sweeps from `start`, which must be an upper solution for
    /// [`Direction::Down`] and a lower solution for [`Direction::Up`].
    pub fn sweeps(&self, start: &Pair<T>, direction: Direction) -> Result<Sweeps<'_, T>> {
        let h = self.l1.restrict(&start.h_i);
        let v = self.l1.restrict(&start.v_i);
        let m = h.len();
        start.h_i.check_same_mesh(&self.v_b)?;
        start.v_i.check_same_mesh(&self.v_b)?;
        if h.iter().chain(&v).any(|x| *x < T::zero()) {
            return Err(Error::InvalidStart {
                kind: direction.name(),
                detail: "start has a negative entry".into(),
            });
        }
        let mut r1 = vec![T::zero(); m];
        let mut r2 = vec![T::zero(); m];
        self.residual_into(&h, &v, &mut r1, &mut r2);
        let violation = r1
            .iter()
            .chain(&r2)
            .map(|r| match direction {
                Direction::Down => -*r,
                Direction::Up => *r,
            })
            .fold(T::zero(), T::max);
        let allowed = (T::tol(1e-9) * (T::one() + sup(&h).max(sup(&v)))).max(self.scale(&h, &v));
        if violation > allowed {
            let detail = match direction {
                Direction::Down => "start is not an upper solution",
                Direction::Up => "start is not a lower solution",
            };
            return Err(Error::InvalidStart {
                kind: direction.name(),
                detail: format!("{detail} (violation {violation})"),
            });
        }
        let h_bound: Vec<T> = (0..m).map(|i| h[i].max(self.upper_h[i])).collect();
        let k = self.sweep_constant(&h_bound);
        let (lu1, lu2) = self.factor_sweep(k)?;
        let slack = self.scale(&h, &v) + violation / k;
        Ok(Sweeps {
            problem: self,
            direction,
            h,
            v,
            k,
            lu1,
            lu2,
            doubled: false,
            count: 0,
            last_change: T::infinity(),
            slack,
            failed: false,
        })
    }

    fn factor_sweep(&self, k: T) -> Result<(TridiagonalLu<T>, TridiagonalLu<T>)> {
        Ok((
            self.l1
                .stencil()
                .with_diagonal_shift(|i| self.rho[i])
                .factor()?,
            self.l2.stencil().with_diagonal_shift(|_| k).factor()?,
        ))
    }

    fn jacobian(&self, h: &[T], v: &[T]) -> BlockTridiagonal2<T> {
        let m = h.len();
        let active = |i: usize| v[i] < self.envelope[i];
        BlockTridiagonal2 {
            first: self.l1.stencil().with_diagonal_shift(|i| self.rho[i]),
            second: self.l2.stencil().with_diagonal_shift(|i| {
                self.loss[i]
                    + if active(i) {
                        self.sigma2[i] * h[i]
                    } else {
                        T::zero()
                    }
            }),
            couple_12: self.infect.iter().map(|x| -*x).collect(),
            couple_21: (0..m)
                .map(|i| -self.sigma2[i] * (self.envelope[i] - v[i]).max(T::zero()))
                .collect(),
        }
    }

    /// Damped Newton iteration on the steady problem.
    /// Returns the refined pair, the number of steps, and the final residual.
    pub fn newton(
        &self,
        start: &Pair<T>,
        max_steps: usize,
        accept: T,
    ) -> Result<(Pair<T>, usize, T)> {
        self.newton_within(start, None, max_steps, accept)
    }

    /// Newton iteration whose line search rejects steps leaving the order
    /// interval `[lower, upper]`, widened by `slack`.
    pub fn newton_bracketed(
        &self,
        start: &Pair<T>,
        lower: &Pair<T>,
        upper: &Pair<T>,
        slack: T,
        max_steps: usize,
        accept: T,
    ) -> Result<(Pair<T>, usize, T)> {
        let lo: Vec<T> = self
            .l1
            .restrict(&lower.h_i)
            .into_iter()
            .chain(self.l1.restrict(&lower.v_i))
            .map(|x| x - slack)
            .collect();
        let hi: Vec<T> = self
            .l1
            .restrict(&upper.h_i)
            .into_iter()
            .chain(self.l1.restrict(&upper.v_i))
            .map(|x| x + slack)
            .collect();
        self.newton_within(start, Some((&lo, &hi)), max_steps, accept)
    }

    fn newton_within(
        &self,
        start: &Pair<T>,
        bounds: Option<(&[T], &[T])>,
        max_steps: usize,
        accept: T,
    ) -> Result<(Pair<T>, usize, T)> {
        let mut h = self.l1.restrict(&start.h_i);
        let mut v = self.l1.restrict(&start.v_i);
        let m = h.len();
        let mut r1 = vec![T::zero(); m];
        let mut r2 = vec![T::zero(); m];
        let mut t1 = vec![T::zero(); m];
        let mut t2 = vec![T::zero(); m];
        self.residual_into(&h, &v, &mut r1, &mut r2);
        let mut fnorm = sup(&r1).max(sup(&r2));
        let mut steps = 0;
        let fail = |steps, fnorm: T| Error::NonConvergence {
            what: "endemic Newton iteration",
            iterations: steps,
            residual: fnorm.as_f64(),
        };
        // Iterate down to round-off; a failed line search marks the floor.
        while fnorm > T::epsilon() * self.norm * (T::one() + sup(&h).max(sup(&v))) {
            if steps == max_steps {
                break;
            }
            let lu = self.jacobian(&h, &v).factor()?;
            let mut delta: Vec<T> = r1.iter().chain(&r2).map(|x| -*x).collect();
            lu.solve_in_place(&mut delta);
            let (dh, dv) = delta.split_at(m);
            let mut alpha = T::one();
            let mut accepted = None;
            for _ in 0..30 {
                let th: Vec<T> = (0..m).map(|i| h[i] + alpha * dh[i]).collect();
                let tv: Vec<T> = (0..m).map(|i| v[i] + alpha * dv[i]).collect();
                if let Some((lo, hi)) = bounds {
                    let inside = |x: &[T], off: usize| {
                        (0..m).all(|i| x[i] >= lo[off + i] && x[i] <= hi[off + i])
                    };
                    if !inside(&th, 0) || !inside(&tv, m) {
                        alpha *= T::lit(0.5);
                        continue;
                    }
                }
                self.residual_into(&th, &tv, &mut t1, &mut t2);
                let tn = sup(&t1).max(sup(&t2));
                if tn < (T::one() - T::lit(1e-4) * alpha) * fnorm {
                    accepted = Some((th, tv, tn));
                    break;
                }
                alpha *= T::lit(0.5);
            }
            match accepted {
                Some((th, tv, tn)) => {
                    h = th;
                    v = tv;
                    std::mem::swap(&mut r1, &mut t1);
                    std::mem::swap(&mut r2, &mut t2);
                    fnorm = tn;
                    steps += 1;
                }
                None => break,
            }
        }
        if fnorm > accept {
            return Err(fail(steps, fnorm));
        }
        Ok((
            Pair {
                h_i: self.l1.extend(&h),
                v_i: self.l1.extend(&v),
            },
            steps,
            fnorm,
        ))
    }

    /// Lower pair `delta (phi1, phi2)` from the principal eigenpair of the
    /// linearization. `delta` starts at the largest value keeping the pair
    /// below `upper` and is halved until the pair is a lower solution.
    pub fn lower_pair(&self, eig: &SystemEigenpair<T>, upper: &Pair<T>) -> Result<(Pair<T>, T)> {
        if eig.lambda >= T::zero() {
            return Err(Error::NoLowerSolution);
        }
        let p1 = self.l1.restrict(&eig.phi1);
        let p2 = self.l1.restrict(&eig.phi2);
        let uh = self.l1.restrict(&upper.h_i);
        let uv = self.l1.restrict(&upper.v_i);
        let m = p1.len();
        let mut r1 = vec![T::zero(); m];
        let mut r2 = vec![T::zero(); m];
        let mut delta = T::infinity();
        for i in 0..m {
            if p1[i] > T::zero() {
                delta = delta.min(uh[i] / p1[i]);
            }
            if p2[i] > T::zero() {
                delta = delta.min(uv[i] / p2[i]);
            }
        }
        if !delta.is_finite() || delta <= T::zero() {
            return Err(Error::NoLowerSolution);
        }
        for _ in 0..80 {
            let h: Vec<T> = p1.iter().map(|x| delta * *x).collect();
            let v: Vec<T> = p2.iter().map(|x| delta * *x).collect();
            self.residual_into(&h, &v, &mut r1, &mut r2);
            let tol = delta * (eig.residual + T::lit(64.0) * T::epsilon() * self.norm);
            if (0..m).all(|i| h[i] <= uh[i] && v[i] <= uv[i])
                && r1.iter().chain(&r2).all(|r| *r <= tol)
            {
                return Ok((
                    Pair {
                        h_i: self.l1.extend(&h),
                        v_i: self.l1.extend(&v),
                    },
                    delta,
                ));
            }
            delta *= T::lit(0.5);
        }
        Err(Error::NoLowerSolution)
    }
}

/// Iterator over monotone sweeps `(-L + K) u_new = f(u_old) + K u_old`.
///
/// The host equation is linear in `H_i`, so its shift is the recovery rate
/// itself and each sweep solves it exactly for the current `V_i`.
///
/// Each item is the pair after one sweep. A sweep that breaks monotonicity
/// is retried once with `K` doubled; a second failure is yielded as an
/// error and ends the iteration.
pub struct Sweeps<'a, T> {
    problem: &'a PerturbedEndemic<T>,
    direction: Direction,
    h: Vec<T>,
    v: Vec<T>,
    k: T,
    lu1: TridiagonalLu<T>,
    lu2: TridiagonalLu<T>,
    doubled: bool,
    count: usize,
    last_change: T,
    slack: T,
    failed: bool,
}

impl<T: Real> Sweeps<'_, T> {
    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn sweeps_done(&self) -> usize {
        self.count
    }

    pub fn sweep_constant(&self) -> T {
        self.k
    }

    /// Sup change made by the latest sweep.
    pub fn last_change(&self) -> T {
        self.last_change
    }

    pub fn current(&self) -> Pair<T> {
        Pair {
            h_i: self.problem.l1.extend(&self.h),
            v_i: self.problem.l1.extend(&self.v),
        }
    }

    fn compute(&self) -> (Vec<T>, Vec<T>) {
        let p = self.problem;
        let k = self.k;
        let mut nh: Vec<T> = (0..self.h.len()).map(|i| p.infect[i] * self.v[i]).collect();
        let mut nv: Vec<T> = (0..self.h.len())
            .map(|i| {
                (k - p.loss[i]) * self.v[i]
                    + p.sigma2[i] * (p.envelope[i] - self.v[i]).max(T::zero()) * self.h[i]
            })
            .collect();
        self.lu1.solve_in_place(&mut nh);
        self.lu2.solve_in_place(&mut nv);
        (nh, nv)
    }

    /// Largest step against the expected direction and where it happened.
    fn excess(&self, nh: &[T], nv: &[T]) -> (T, &'static str) {
        let against = |new: &[T], old: &[T]| {
            new.iter()
                .zip(old)
                .map(|(n, o)| match self.direction {
                    Direction::Down => *n - *o,
                    Direction::Up => *o - *n,
                })
                .fold(T::zero(), T::max)
        };
        let eh = against(nh, &self.h);
        let ev = against(nv, &self.v);
        if eh >= ev {
            (eh, "H_i")
        } else {
            (ev, "V_i")
        }
    }

    /// Moves the iterate along its own ray to `theta * current`, with
    /// `theta >= 1` going up and `theta <= 1` going down, taking the
    /// furthest `theta` found by bisection for which the scaled pair is
    /// still a lower (upper) solution on the near side of `bound`.
    /// Returns the `theta` applied.
    pub fn stretch(&mut self, bound: &Pair<T>) -> Result<T> {
        let p = self.problem;
        bound.h_i.check_same_mesh(&p.v_b)?;
        bound.v_i.check_same_mesh(&p.v_b)?;
        let bh = p.l1.restrict(&bound.h_i);
        let bv = p.l1.restrict(&bound.v_i);
        let m = self.h.len();
        let mut r1 = vec![T::zero(); m];
        let mut r2 = vec![T::zero(); m];
        let up = self.direction == Direction::Up;
        let (h0, v0) = (&self.h, &self.v);
        let mut valid = |theta: T| -> bool {
            let h: Vec<T> = h0.iter().map(|x| theta * *x).collect();
            let v: Vec<T> = v0.iter().map(|x| theta * *x).collect();
            let ordered = (0..m).all(|i| {
                if up {
                    h[i] <= bh[i] && v[i] <= bv[i]
                } else {
                    h[i] >= bh[i] && v[i] >= bv[i]
                }
            });
            if !ordered {
                return false;
            }
            p.residual_into(&h, &v, &mut r1, &mut r2);
            let tol = p.scale(&h, &v);
            r1.iter()
                .chain(&r2)
                .all(|r| if up { *r <= tol } else { -*r <= tol })
        };
        let (mut good, mut bad) = if up {
            let mut good = T::one();
            let mut bad = T::lit(2.0);
            while bad < T::lit(1e12) && valid(bad) {
                good = bad;
                bad *= T::lit(2.0);
            }
            (good, bad)
        } else {
            (T::one(), T::zero())
        };
        for _ in 0..60 {
            let mid = T::lit(0.5) * (good + bad);
            if valid(mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        if good != T::one() {
            self.h.iter_mut().for_each(|x| *x *= good);
            self.v.iter_mut().for_each(|x| *x *= good);
        }
        Ok(good)
    }

    /// Performs one sweep and returns its sup change.
    pub fn advance(&mut self) -> Result<T> {
        let (mut nh, mut nv) = self.compute();
        let (mut excess, mut component) = self.excess(&nh, &nv);
        if excess > self.slack {
            if self.doubled {
                return Err(self.violation(excess, component));
            }
            self.doubled = true;
            self.k *= T::lit(2.0);
            let (lu1, lu2) = self.problem.factor_sweep(self.k)?;
            self.lu1 = lu1;
            self.lu2 = lu2;
            (nh, nv) = self.compute();
            (excess, component) = self.excess(&nh, &nv);
            if excess > self.slack {
                return Err(self.violation(excess, component));
            }
        }
        let change = sup_diff(&nh, &self.h).max(sup_diff(&nv, &self.v));
        self.h = nh;
        self.v = nv;
        self.count += 1;
        self.last_change = change;
        Ok(change)
    }

    fn violation(&self, excess: T, component: &'static str) -> Error {
        Error::MonotonicityViolation {
            direction: self.direction.name(),
            sweep: self.count + 1,
            component,
            excess: excess.as_f64(),
        }
    }
}

impl<T: Real> Iterator for Sweeps<'_, T> {
    type Item = Result<Pair<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.advance() {
            Ok(_) => Some(Ok(self.current())),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MonotoneLimit<T> {
    pub pair: Pair<T>,
    pub sweeps: usize,
    pub last_change: T,
    pub converged: bool,
}

/// Runs sweeps until the sup change drops below `tol` or `max_sweeps` is hit.
pub fn monotone_iterate<T: Real>(
    problem: &PerturbedEndemic<T>,
    start: &Pair<T>,
    direction: Direction,
    max_sweeps: usize,
    tol: T,
) -> Result<MonotoneLimit<T>> {
    let mut sweeps = problem.sweeps(start, direction)?;
    let mut converged = false;
    while sweeps.sweeps_done() < max_sweeps {
        if sweeps.advance()? < tol {
            converged = true;
            break;
        }
    }
    Ok(MonotoneLimit {
        pair: sweeps.current(),
        sweeps: sweeps.sweeps_done(),
        last_change: sweeps.last_change(),
        converged,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EndemicOptions<T> {
    pub max_sweeps: usize,
    pub sweep_tol: T,
    /// Allowed sup distance between the limits from above and below.
    pub agreement_tol: T,
    pub residual_tol: T,
    pub max_newton: usize,
    pub eigen: EigenOptions<T>,
}

impl<T: Real> Default for EndemicOptions<T> {
    fn default() -> Self {
        Self {
            max_sweeps: 5000,
            sweep_tol: T::tol(1e-10),
            agreement_tol: T::tol(2e-8),
            residual_tol: T::tol(1e-8),
            max_newton: 50,
            eigen: EigenOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EndemicEquilibrium<T> {
    pub h_i: ScalarField<T>,
    pub v_i: ScalarField<T>,
    /// `V_B - V_i`.
    pub v_u: ScalarField<T>,
    pub v_b: ScalarField<T>,
    pub weight: ScalarField<T>,
    pub lambda_system: T,
    pub eps: T,
    pub iterations_upper: usize,
    pub iterations_lower: usize,
    pub newton_steps: usize,
    pub residual: T,
    /// Sup distance between the refined limits from above and below.
    pub limit_gap: T,
    /// Scale of the eigenfunction lower pair.
    pub delta: T,
}

impl<T: Real> EndemicEquilibrium<T> {
    pub fn pair(&self) -> Pair<T> {
        Pair {
            h_i: self.h_i.clone(),
            v_i: self.v_i.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Endemic<T> {
    Present(Box<EndemicEquilibrium<T>>),
    Absent {
        lambda_system: T,
        /// `h_u` vanishes identically, so no host infection can occur.
        decoupled: bool,
    },
}

impl<T> Endemic<T> {
    pub fn present(&self) -> Option<&EndemicEquilibrium<T>> {
        match self {
            Endemic::Present(e) => Some(e),
            Endemic::Absent { .. } => None,
        }
    }
}

pub fn solve_endemic<T: Real>(
    coeffs: &CoefficientSet<T>,
    bc: BoundarySpec<T>,
    eps: T,
) -> Result<Endemic<T>> {
    let logistic = solve_logistic(coeffs, bc)?;
    solve_endemic_with(coeffs, bc, &logistic, eps, &EndemicOptions::default())
}

/// Positive steady state of the perturbed problem, or its absence.
///
/// Iterates monotonically from the upper pair and from the eigenfunction
/// lower pair in lockstep, refines both limits by Newton, and requires the
/// two refined limits to agree.
pub fn solve_endemic_with<T: Real>(
    coeffs: &CoefficientSet<T>,
    bc: BoundarySpec<T>,
    logistic: &LogisticSteady<T>,
    eps: T,
    opts: &EndemicOptions<T>,
) -> Result<Endemic<T>> {
    let v_b = logistic.require()?;
    check_admissible(coeffs, bc, logistic, eps)?;
    let weight = perturbation_weight(bc, logistic);
    let eig = principal_eigen_system_with(coeffs, v_b, bc, eps, &weight, &opts.eigen)?;
    if coeffs.is_decoupled() || eig.lambda >= T::zero() {
        return Ok(Endemic::Absent {
            lambda_system: eig.lambda,
            decoupled: coeffs.is_decoupled(),
        });
    }
    let problem = PerturbedEndemic::new(coeffs, v_b, bc, eps, &weight)?;
    let upper = problem.upper_pair();
    let (lower, delta) = problem.lower_pair(&eig, &upper)?;
    let mut down = problem.sweeps(&upper, Direction::Down)?;
    let mut up = problem.sweeps(&lower, Direction::Up)?;
    let mut down_done = false;
    let mut up_done = false;
    let mut next_polish = 64;
    let polished = loop {
        while !(down_done && up_done)
            && down.sweeps_done().max(up.sweeps_done()) < opts.max_sweeps.min(next_polish)
        {
            if !down_done {
                down_done = down.advance()? < opts.sweep_tol;
            }
            if !up_done {
                up_done = up.advance()? < opts.sweep_tol;
            }
        }
        let last =
            (down_done && up_done) || down.sweeps_done().max(up.sweeps_done()) >= opts.max_sweeps;
        if !last {
            up_done &= up.stretch(&down.current())? == T::one();
            down_done &= down.stretch(&up.current())? == T::one();
        }
        let done = down.sweeps_done().max(up.sweeps_done());
        match polish(&problem, done, &down.current(), &up.current(), opts) {
            Ok(found) => break found,
            Err(e) if last => return Err(e),
            Err(_) => next_polish *= 2,
        }
    };
    let (refined_above, steps_above, res_above) = polished.0;
    let (refined_below, steps_below, res_below) = polished.1;
    let gap = refined_above.sup_distance(&refined_below)?;
    if gap > opts.agreement_tol {
        return Err(Error::UniquenessViolation {
            distance: gap.as_f64(),
            tolerance: opts.agreement_tol.as_f64(),
        });
    }
    let mesh = *v_b.mesh();
    let Pair { h_i, v_i } = refined_above;
    let env = problem.envelope();
    for j in problem.l1.unknowns() {
        if !mesh.interior().contains(&j) {
            continue;
        }
        if h_i[j] <= T::zero() || v_i[j] <= T::zero() || v_i[j] >= env[j] {
            return Err(Error::Validation(format!(
                "refined equilibrium leaves 0 < V_i < U or H_i > 0 at node {j}"
            )));
        }
    }
    Ok(Endemic::Present(Box::new(EndemicEquilibrium {
        v_u: v_b.zip_unchecked(&v_i, |b, i| b - i),
        h_i,
        v_i,
        v_b: v_b.clone(),
        weight,
        lambda_system: eig.lambda,
        eps,
        iterations_upper: down.sweeps_done(),
        iterations_lower: up.sweeps_done(),
        newton_steps: steps_above.max(steps_below),
        residual: res_above.max(res_below),
        limit_gap: gap,
        delta,
    })))
}

type Polished<T> = (Pair<T>, usize, T);

/// Newton-polishes both iterates and checks the results stay inside the
/// bracket they span.
fn polish<T: Real>(
    problem: &PerturbedEndemic<T>,
    sweeps: usize,
    from_above: &Pair<T>,
    from_below: &Pair<T>,
    opts: &EndemicOptions<T>,
) -> Result<(Polished<T>, Polished<T>)> {
    let slack = opts.agreement_tol;
    let run = |start| {
        problem.newton_bracketed(
            start,
            from_below,
            from_above,
            slack,
            opts.max_newton,
            opts.residual_tol,
        )
    };
    let above = run(from_above)?;
    let below = run(from_below)?;
    let within = |p: &Pair<T>| {
        from_below.h_i.le_within(&p.h_i, slack)
            && from_below.v_i.le_within(&p.v_i, slack)
            && p.h_i.le_within(&from_above.h_i, slack)
            && p.v_i.le_within(&from_above.v_i, slack)
    };
    if !within(&above.0) || !within(&below.0) {
        return Err(Error::NonConvergence {
            what: "monotone iteration bracket",
            iterations: sweeps,
            residual: from_above.sup_distance(from_below)?.as_f64(),
        });
    }
    Ok((above, below))
}
