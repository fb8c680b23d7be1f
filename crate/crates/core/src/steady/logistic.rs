use crate::dynamics::{integrate_scalar_logistic, stability_bound_logistic, StepperConfig};
use crate::eigen::{principal_eigen_scalar, ScalarEigenpair};
use crate::error::{Error, Result};
use crate::grid::{BoundarySpec, CoefficientSet, ScalarField};
use crate::operators::EllipticOperator;
use crate::scalar::{sup, Real};

/// Positive steady state `V_B` of `-(d2 V')' = beta V - mu V^2`, present
/// exactly when the principal eigenvalue `lambda_beta` is negative.
#[derive(Debug, Clone)]
pub struct LogisticSteady<T> {
    pub v_b: Option<ScalarField<T>>,
    pub lambda_beta: T,
    /// Sup-normalized principal eigenfunction belonging to `lambda_beta`.
    pub phi: ScalarField<T>,
    pub newton_steps: usize,
    pub residual: T,
}

impl<T: Real> LogisticSteady<T> {
    pub fn require(&self) -> Result<&ScalarField<T>> {
        self.v_b.as_ref().ok_or(Error::NoLogisticSteady {
            lambda_beta: self.lambda_beta.as_f64(),
        })
    }
}

struct LogisticNewton<'a, T> {
    op: &'a EllipticOperator<T>,
    beta: Vec<T>,
    mu: Vec<T>,
}

struct NewtonOutcome<T> {
    v: Vec<T>,
    steps: usize,
    residual: T,
}

impl<T: Real> LogisticNewton<'_, T> {
    fn residual(&self, v: &[T], out: &mut [T]) {
        self.op.stencil().apply(v, out);
        for i in 0..v.len() {
            out[i] += (self.mu[i] * v[i] - self.beta[i]) * v[i];
        }
    }

    fn solve(&self, mut v: Vec<T>, accept: T) -> Result<NewtonOutcome<T>> {
        let m = v.len();
        let mut f = vec![T::zero(); m];
        let mut trial_f = vec![T::zero(); m];
        let norm = self.op.norm_inf();
        let mut steps = 0;
        self.residual(&v, &mut f);
        let mut fnorm = sup(&f);
        // Fine meshes put the round-off level of the residual above any fixed
        // tolerance, so both the stop and acceptance tests respect it.
        let floor = |v: &[T]| T::epsilon() * T::lit(16.0) * norm * sup(v);
        for _ in 0..100 {
            if fnorm <= T::tol(1e-12).max(floor(&v)) {
                break;
            }
            let jac = self
                .op
                .stencil()
                .with_diagonal_shift(|i| T::lit(2.0) * self.mu[i] * v[i] - self.beta[i]);
            let mut delta: Vec<T> = f.iter().map(|x| -*x).collect();
            jac.factor()?.solve_in_place(&mut delta);
            let mut alpha = T::one();
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<T> = v.iter().zip(&delta).map(|(x, d)| *x + alpha * *d).collect();
                if trial.iter().all(|x| *x > T::zero()) {
                    self.residual(&trial, &mut trial_f);
                    let tn = sup(&trial_f);
                    if tn < (T::one() - T::lit(1e-4) * alpha) * fnorm {
                        accepted = Some((trial, tn));
                        break;
                    }
                }
                alpha *= T::lit(0.5);
            }
            match accepted {
                Some((trial, tn)) => {
                    v = trial;
                    std::mem::swap(&mut f, &mut trial_f);
                    fnorm = tn;
                    steps += 1;
                }
                // Stalled at round-off.
                None if fnorm <= accept.max(floor(&v)) => break,
                None => {
                    return Err(Error::NonConvergence {
                        what: "logistic Newton iteration",
                        iterations: steps,
                        residual: fnorm.as_f64(),
                    })
                }
            }
        }
        if fnorm > accept.max(floor(&v)) {
            return Err(Error::NonConvergence {
                what: "logistic Newton iteration",
                iterations: steps,
                residual: fnorm.as_f64(),
            });
        }
        Ok(NewtonOutcome {
            v,
            steps,
            residual: fnorm,
        })
    }
}

/// Computes `lambda_beta` and, when it is negative, the positive logistic
/// steady state by damped Newton from the constant upper solution
/// `max(beta/mu)`. Newton failure falls back to parabolic relaxation.
pub fn solve_logistic<T: Real>(
    coeffs: &CoefficientSet<T>,
    bc: BoundarySpec<T>,
) -> Result<LogisticSteady<T>> {
    let eig = principal_eigen_scalar(coeffs.d2(), coeffs.beta(), bc)?;
    solve_logistic_given(coeffs, bc, eig)
}

pub(crate) fn solve_logistic_given<T: Real>(
    coeffs: &CoefficientSet<T>,
    bc: BoundarySpec<T>,
    eig: ScalarEigenpair<T>,
) -> Result<LogisticSteady<T>> {
    if eig.lambda >= T::zero() {
        return Ok(LogisticSteady {
            v_b: None,
            lambda_beta: eig.lambda,
            phi: eig.phi,
            newton_steps: 0,
            residual: T::zero(),
        });
    }
    let op = EllipticOperator::assemble(coeffs.d2(), bc)?;
    let newton = LogisticNewton {
        op: &op,
        beta: op.restrict(coeffs.beta()),
        mu: op.restrict(coeffs.mu()),
    };
    let accept = T::tol(1e-9);
    let top = coeffs.carrying_capacity().max();
    let outcome = match newton.solve(vec![top; op.num_unknowns()], accept) {
        Ok(o) => o,
        Err(first) => {
            let v0 = op.extend(&vec![top; op.num_unknowns()]);
            let dt = stability_bound_logistic(coeffs, &v0);
            let cfg = StepperConfig {
                steady_tol: T::tol(1e-12),
                ..StepperConfig::new(dt, T::lit(1e4))
            };
            let relaxed = integrate_scalar_logistic(&v0, coeffs, bc, &cfg)?;
            newton
                .solve(op.restrict(&relaxed.final_field), accept)
                .map_err(|_| first)?
        }
    };
    Ok(LogisticSteady {
        v_b: Some(op.extend(&outcome.v)),
        lambda_beta: eig.lambda,
        phi: eig.phi,
        newton_steps: outcome.steps,
        residual: outcome.residual,
    })
}
