//! Principal eigenpairs by shifted inverse power iteration.
//!
//! Both problems are shifted so that `A + sI` is a nonsingular M-matrix:
//! its inverse is entrywise positive, the iteration stays in the positive
//! cone, and it converges to the eigenvalue of smallest real part together
//! with its positive eigenvector.

use crate::error::{Error, Result};
use crate::grid::{BoundarySpec, CoefficientSet, ScalarField};
use crate::operators::{
    BlockTridiagonal2, BlockTridiagonalLu, EllipticOperator, ShiftedSolve, Tridiagonal,
    TridiagonalLu,
};
use crate::scalar::{dot, sup, Real};

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions<T> {
    pub max_iterations: usize,
    /// Bound on the change between consecutive eigenvalue estimates.
    pub lambda_tol: T,
    /// Bound on the sup-norm eigen-residual. Both bounds must hold to stop.
    pub residual_tol: T,
}

impl<T: Real> Default for EigenOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            lambda_tol: T::tol(1e-12),
            residual_tol: T::tol(1e-10),
        }
    }
}

/// Principal eigenpair of `-(d2 phi')' - beta phi = lambda phi`.
#[derive(Debug, Clone)]
pub struct ScalarEigenpair<T> {
    pub lambda: T,
    /// Positive at interior nodes, maximum value exactly one.
    pub phi: ScalarField<T>,
    pub iterations: usize,
    pub residual: T,
}

/// Principal eigenpair of the linearized host/vector block operator.
#[derive(Debug, Clone)]
pub struct SystemEigenpair<T> {
    pub lambda: T,
    pub phi1: ScalarField<T>,
    pub phi2: ScalarField<T>,
    pub iterations: usize,
    pub residual: T,
}

trait ShiftedProblem<T: Real> {
    fn dim(&self) -> usize;
    fn shift(&self) -> T;
    fn norm(&self) -> T;
    fn apply(&self, x: &[T], out: &mut [T]);
    fn solve_shifted(&self, x: &mut [T]);
    fn reshift(&mut self, shift: T) -> Result<()>;
}

struct PowerResult<T> {
    lambda: T,
    vector: Vec<T>,
    iterations: usize,
    residual: T,
}

fn inverse_power<T: Real>(
    p: &mut impl ShiftedProblem<T>,
    opts: &EigenOptions<T>,
    what: &'static str,
) -> Result<PowerResult<T>> {
    let m = p.dim();
    let eps8 = T::epsilon() * T::lit(8.0);
    // Residuals of a sup-normalized vector cannot drop below the round-off
    // of one stencil application.
    let residual_tol = opts.residual_tol.max(eps8 * p.norm());
    let mut w = vec![T::one(); m];
    let mut aw = vec![T::zero(); m];
    let mut prev = T::nan();
    let mut residual = T::infinity();
    for it in 1..=opts.max_iterations {
        p.solve_shifted(&mut w);
        let scale = sup(&w);
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(Error::Singular(format!(
                "{what}: shifted iterate collapsed"
            )));
        }
        w.iter_mut().for_each(|x| *x /= scale);
        p.apply(&w, &mut aw);
        let lambda = dot(&aw, &w) / dot(&w, &w);
        residual = aw
            .iter()
            .zip(&w)
            .fold(T::zero(), |r, (a, x)| r.max((*a - lambda * *x).abs()));
        let lambda_tol = opts.lambda_tol.max(eps8 * (lambda.abs() + p.norm()));
        if (lambda - prev).abs() < lambda_tol && residual < residual_tol {
            return Ok(PowerResult {
                lambda,
                vector: w,
                iterations: it,
                residual,
            });
        }
        prev = lambda;
        // min (Aw)_i / w_i bounds the principal eigenvalue from below, so
        // shifting just past it keeps the shifted matrix an M-matrix.
        if w.iter().all(|x| *x > T::zero()) {
            let floor = aw
                .iter()
                .zip(&w)
                .map(|(a, x)| *a / *x)
                .fold(T::infinity(), T::min);
            let pad = (lambda - floor).max(T::zero()) + T::tol(1e-6) * (T::one() + lambda.abs());
            let shift = pad - floor;
            if shift + lambda < T::lit(0.5) * (p.shift() + lambda) {
                p.reshift(shift)?;
            }
        }
    }
    Err(Error::NonConvergence {
        what,
        iterations: opts.max_iterations,
        residual: residual.as_f64(),
    })
}

struct ScalarProblem<T> {
    a: Tridiagonal<T>,
    lu: TridiagonalLu<T>,
    shift: T,
}

impl<T: Real> ShiftedProblem<T> for ScalarProblem<T> {
    fn dim(&self) -> usize {
        self.a.dim()
    }
    fn shift(&self) -> T {
        self.shift
    }
    fn norm(&self) -> T {
        self.a.norm_inf()
    }
    fn apply(&self, x: &[T], out: &mut [T]) {
        self.a.apply(x, out)
    }
    fn solve_shifted(&self, x: &mut [T]) {
        self.lu.solve_in_place(x)
    }
    fn reshift(&mut self, shift: T) -> Result<()> {
        self.lu = self.a.with_diagonal_shift(|_| shift).factor()?;
        self.shift = shift;
        Ok(())
    }
}

struct SystemProblem<T> {
    a: BlockTridiagonal2<T>,
    lu: BlockTridiagonalLu<T>,
    shift: T,
}

impl<T: Real> ShiftedProblem<T> for SystemProblem<T> {
    fn dim(&self) -> usize {
        2 * self.a.dim()
    }
    fn shift(&self) -> T {
        self.shift
    }
    fn norm(&self) -> T {
        self.a.norm_inf()
    }
    fn apply(&self, x: &[T], out: &mut [T]) {
        self.a.apply(x, out)
    }
    fn solve_shifted(&self, x: &mut [T]) {
        self.lu.solve_in_place(x)
    }
    fn reshift(&mut self, shift: T) -> Result<()> {
        self.lu = self.a.shifted(shift).factor()?;
        self.shift = shift;
        Ok(())
    }
}

pub fn principal_eigen_scalar<T: Real>(
    d2: &ScalarField<T>,
    beta: &ScalarField<T>,
    bc: BoundarySpec<T>,
) -> Result<ScalarEigenpair<T>> {
    principal_eigen_scalar_with(d2, beta, bc, &EigenOptions::default())
}

pub fn principal_eigen_scalar_with<T: Real>(
    d2: &ScalarField<T>,
    beta: &ScalarField<T>,
    bc: BoundarySpec<T>,
    opts: &EigenOptions<T>,
) -> Result<ScalarEigenpair<T>> {
    d2.check_same_mesh(beta)?;
    let op = EllipticOperator::assemble(d2, bc)?;
    let potential = op.restrict(beta);
    let shift = T::one() + sup(&potential);
    let a = op.stencil().with_diagonal_shift(|i| -potential[i]);
    let lu = a.with_diagonal_shift(|_| shift).factor()?;
    let mut problem = ScalarProblem { a, lu, shift };
    let r = inverse_power(&mut problem, opts, "scalar principal eigenvalue")?;
    Ok(ScalarEigenpair {
        lambda: r.lambda,
        phi: op.extend(&r.vector),
        iterations: r.iterations,
        residual: r.residual,
    })
}

/// `V_B + s*eps*weight > 0` at every unknown node for both signs `s`.
pub(crate) fn check_perturbed_positive<T: Real>(
    op: &EllipticOperator<T>,
    v_b: &ScalarField<T>,
    eps: T,
    weight: &ScalarField<T>,
) -> Result<()> {
    for j in op.unknowns() {
        if v_b[j] - eps.abs() * weight[j] <= T::zero() {
            return Err(Error::Inadmissible {
                eps: eps.as_f64(),
                inequality: "V_B - |eps| * weight > 0",
                x: op.mesh().node(j).as_f64(),
            });
        }
    }
    Ok(())
}

/// Block operator of the linearization at zero:
/// `[-L1 + rho, -sigma1 h_u; -sigma2 (V_B + eps w), -L2 + mu (V_B - eps w)]`.
pub(crate) fn linearized_block<T: Real>(
    l1: &EllipticOperator<T>,
    l2: &EllipticOperator<T>,
    coeffs: &CoefficientSet<T>,
    v_b: &ScalarField<T>,
    eps: T,
    weight: &ScalarField<T>,
) -> BlockTridiagonal2<T> {
    let rho = l1.restrict(coeffs.rho());
    let infect = l1.restrict(&coeffs.host_infection());
    let sigma2 = l1.restrict(coeffs.sigma2());
    let mu = l1.restrict(coeffs.mu());
    let vb = l1.restrict(v_b);
    let w = l1.restrict(weight);
    let m = rho.len();
    BlockTridiagonal2 {
        first: l1.stencil().with_diagonal_shift(|i| rho[i]),
        second: l2
            .stencil()
            .with_diagonal_shift(|i| mu[i] * (vb[i] - eps * w[i])),
        couple_12: infect.iter().map(|v| -*v).collect(),
        couple_21: (0..m).map(|i| -sigma2[i] * (vb[i] + eps * w[i])).collect(),
    }
}

pub fn principal_eigen_system<T: Real>(
    coeffs: &CoefficientSet<T>,
    v_b: &ScalarField<T>,
    bc: BoundarySpec<T>,
    eps: T,
    weight: &ScalarField<T>,
) -> Result<SystemEigenpair<T>> {
    principal_eigen_system_with(coeffs, v_b, bc, eps, weight, &EigenOptions::default())
}

pub fn principal_eigen_system_with<T: Real>(
    coeffs: &CoefficientSet<T>,
    v_b: &ScalarField<T>,
    bc: BoundarySpec<T>,
    eps: T,
    weight: &ScalarField<T>,
    opts: &EigenOptions<T>,
) -> Result<SystemEigenpair<T>> {
    coeffs.d1().check_same_mesh(v_b)?;
    coeffs.d1().check_same_mesh(weight)?;
    let l1 = EllipticOperator::assemble(coeffs.d1(), bc)?;
    let l2 = EllipticOperator::assemble(coeffs.d2(), bc)?;
    check_perturbed_positive(&l1, v_b, eps, weight)?;
    if coeffs.is_decoupled() {
        return decoupled_eigen(&l1, &l2, coeffs, v_b, eps, weight, opts);
    }
    let a = linearized_block(&l1, &l2, coeffs, v_b, eps, weight);
    let m = a.dim();
    let zeroth = (0..m)
        .map(|i| {
            let d1 = a.first.diag[i] - l1.stencil().diag[i];
            let d2 = a.second.diag[i] - l2.stencil().diag[i];
            d1.abs()
                .max(d2.abs())
                .max(a.couple_12[i].abs())
                .max(a.couple_21[i].abs())
        })
        .fold(T::zero(), T::max);
    let shift = T::one() + zeroth;
    let lu = a.shifted(shift).factor()?;
    let mut problem = SystemProblem { a, lu, shift };
    let r = inverse_power(&mut problem, opts, "system principal eigenvalue")?;
    let (p1, p2) = r.vector.split_at(m);
    Ok(SystemEigenpair {
        lambda: r.lambda,
        phi1: l1.extend(p1),
        phi2: l1.extend(p2),
        iterations: r.iterations,
        residual: r.residual,
    })
}

/// With `h_u = 0` the block operator is lower triangular; its principal
/// eigenvalue is the smaller of the two diagonal blocks' eigenvalues.
fn decoupled_eigen<T: Real>(
    l1: &EllipticOperator<T>,
    l2: &EllipticOperator<T>,
    coeffs: &CoefficientSet<T>,
    v_b: &ScalarField<T>,
    eps: T,
    weight: &ScalarField<T>,
    opts: &EigenOptions<T>,
) -> Result<SystemEigenpair<T>> {
    let host =
        principal_eigen_scalar_with(coeffs.d1(), &coeffs.rho().map(|r| -r), *l1.boundary(), opts)?;
    let loss = coeffs
        .mu()
        .zip_unchecked(&v_b.zip_unchecked(weight, |v, w| v - eps * w), |m, v| m * v);
    let vector = principal_eigen_scalar_with(coeffs.d2(), &loss.map(|x| -x), *l2.boundary(), opts)?;
    let mesh = *v_b.mesh();
    if vector.lambda <= host.lambda {
        return Ok(SystemEigenpair {
            lambda: vector.lambda,
            phi1: ScalarField::zeros(mesh),
            phi2: vector.phi,
            iterations: host.iterations + vector.iterations,
            residual: host.residual.max(vector.residual),
        });
    }
    // phi2 solves (-L2 + m - lambda) phi2 = sigma2 (V_B + eps w) phi1.
    let drive = coeffs
        .sigma2()
        .zip_unchecked(&v_b.zip_unchecked(weight, |v, w| v + eps * w), |s, u| s * u)
        .zip_unchecked(&host.phi, |a, p| a * p);
    let phi2 = ShiftedSolve::with_potential(l2, &loss.map(|x| x - host.lambda))?.solve(&drive)?;
    let scale = host.phi.sup_norm().max(phi2.sup_norm());
    Ok(SystemEigenpair {
        lambda: host.lambda,
        phi1: host.phi.scale(scale.recip()),
        phi2: phi2.scale(scale.recip()),
        iterations: host.iterations + vector.iterations,
        residual: host.residual.max(vector.residual),
    })
}
