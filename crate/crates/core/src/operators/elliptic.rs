use std::ops::Range;

use crate::error::{Error, Result};
use crate::grid::{BoundarySpec, Mesh1D, ScalarField};
use crate::operators::banded::{Tridiagonal, TridiagonalLu};
use crate::scalar::Real;

/// Finite-volume discretization of `L u = (d u')'` on a uniform mesh.
///
/// Face coefficients are arithmetic means of adjacent nodal values. The
/// stored stencil is that of `-L` restricted to the unknown nodes: every
/// node for Neumann and Robin, interior nodes only for Dirichlet.
#[derive(Debug, Clone)]
pub struct EllipticOperator<T> {
    mesh: Mesh1D<T>,
    d_face: Vec<T>,
    bc: BoundarySpec<T>,
    stencil: Tridiagonal<T>,
}

impl<T: Real> EllipticOperator<T> {
    pub fn assemble(d: &ScalarField<T>, bc: BoundarySpec<T>) -> Result<Self> {
        if let Some((node, v)) = d
            .values()
            .iter()
            .enumerate()
            .find(|(_, v)| **v <= T::zero())
        {
            return Err(Error::NonPositive {
                name: "diffusion coefficient",
                node,
                value: v.as_f64(),
            });
        }
        if let BoundarySpec::Robin { left, right } = bc {
            BoundarySpec::robin(left, right)?;
        }
        let mesh = *d.mesh();
        let n = mesh.len();
        let half = T::lit(0.5);
        let d_face: Vec<T> = d
            .values()
            .windows(2)
            .map(|w| half * (w[0] + w[1]))
            .collect();
        let h = mesh.spacing();
        let h2 = h * h;
        let two = T::lit(2.0);

        let stencil = match bc {
            BoundarySpec::Dirichlet => {
                let m = n - 2;
                let mut s = Tridiagonal::zeros(m);
                for i in 0..m {
                    let j = i + 1;
                    let (dl, dr) = (d_face[j - 1], d_face[j]);
                    s.lower[i] = -dl / h2;
                    s.diag[i] = (dl + dr) / h2;
                    s.upper[i] = -dr / h2;
                }
                s.lower[0] = T::zero();
                s.upper[m - 1] = T::zero();
                s
            }
            BoundarySpec::Neumann | BoundarySpec::Robin { .. } => {
                let (bl, br) = match bc {
                    BoundarySpec::Robin { left, right } => (left, right),
                    _ => (T::zero(), T::zero()),
                };
                let mut s = Tridiagonal::zeros(n);
                for j in 1..n - 1 {
                    let (dl, dr) = (d_face[j - 1], d_face[j]);
                    s.lower[j] = -dl / h2;
                    s.diag[j] = (dl + dr) / h2;
                    s.upper[j] = -dr / h2;
                }
                // Ghost node mirrored across the endpoint, face coefficient
                // reflected with it; Robin shifts the ghost value by -2 h b u.
                let d0 = d_face[0];
                s.diag[0] = two * d0 / h2 + two * d0 * bl / h;
                s.upper[0] = -two * d0 / h2;
                let dn = d_face[n - 2];
                s.lower[n - 1] = -two * dn / h2;
                s.diag[n - 1] = two * dn / h2 + two * dn * br / h;
                s
            }
        };
        Ok(Self {
            mesh,
            d_face,
            bc,
            stencil,
        })
    }

    pub fn mesh(&self) -> &Mesh1D<T> {
        &self.mesh
    }

    pub fn boundary(&self) -> &BoundarySpec<T> {
        &self.bc
    }

    pub fn face_coefficients(&self) -> &[T] {
        &self.d_face
    }

    /// Stencil of `-L` on the unknown nodes.
    pub fn stencil(&self) -> &Tridiagonal<T> {
        &self.stencil
    }

    /// Node indices carried as unknowns.
    pub fn unknowns(&self) -> Range<usize> {
        if self.bc.is_dirichlet() {
            1..self.mesh.len() - 1
        } else {
            0..self.mesh.len()
        }
    }

    pub fn num_unknowns(&self) -> usize {
        self.stencil.dim()
    }

    /// Values of `f` at the unknown nodes.
    pub fn restrict(&self, f: &ScalarField<T>) -> Vec<T> {
        f.values()[self.unknowns()].to_vec()
    }

    /// Field holding `x` at the unknown nodes and zero elsewhere.
    pub fn extend(&self, x: &[T]) -> ScalarField<T> {
        let mut values = vec![T::zero(); self.mesh.len()];
        values[self.unknowns()].copy_from_slice(x);
        ScalarField::from_raw(self.mesh, values)
    }

    /// `L u` at every node. Interior rows use the nodal values of `u`
    /// as given; Dirichlet boundary rows are reported as zero.
    pub fn apply(&self, u: &ScalarField<T>) -> Result<ScalarField<T>> {
        if *u.mesh() != self.mesh {
            return Err(Error::MeshMismatch);
        }
        let n = self.mesh.len();
        let h = self.mesh.spacing();
        let h2 = h * h;
        let v = u.values();
        let mut out = vec![T::zero(); n];
        for j in 1..n - 1 {
            out[j] =
                (self.d_face[j] * (v[j + 1] - v[j]) - self.d_face[j - 1] * (v[j] - v[j - 1])) / h2;
        }
        if !self.bc.is_dirichlet() {
            let s = &self.stencil;
            out[0] = -(s.diag[0] * v[0] + s.upper[0] * v[1]);
            out[n - 1] = -(s.lower[n - 1] * v[n - 2] + s.diag[n - 1] * v[n - 1]);
        }
        Ok(ScalarField::from_raw(self.mesh, out))
    }

    /// Quadrature weights (in units of `h`) that make the stencil symmetric:
    /// one at interior nodes, one half at Neumann/Robin endpoints.
    pub fn quadrature_weights(&self) -> Vec<T> {
        let mut w = vec![T::one(); self.num_unknowns()];
        if !self.bc.is_dirichlet() {
            let half = T::lit(0.5);
            w[0] = half;
            let last = w.len() - 1;
            w[last] = half;
        }
        w
    }

    /// Scale used to floor residual tolerances at round-off level.
    pub fn norm_inf(&self) -> T {
        self.stencil.norm_inf()
    }
}

/// Factorization of `-L + c` for a zeroth-order potential `c`.
#[derive(Debug, Clone)]
pub struct ShiftedSolve<T> {
    operator: EllipticOperator<T>,
    potential: ScalarField<T>,
    lu: TridiagonalLu<T>,
}

impl<T: Real> ShiftedSolve<T> {
    /// Requires `c >= 0`; a conservative boundary with `c` identically zero
    /// is rejected as singular.
    pub fn new(operator: &EllipticOperator<T>, c: &ScalarField<T>) -> Result<Self> {
        if let Some((node, v)) = c.values().iter().enumerate().find(|(_, v)| **v < T::zero()) {
            return Err(Error::Validation(format!(
                "potential must be nonnegative (node {node} has {v})"
            )));
        }
        let restricted = operator.restrict(c);
        if operator.boundary().is_conservative() && restricted.iter().all(|v| *v == T::zero()) {
            return Err(Error::Singular(
                "zero potential with a no-flux boundary: constants span the kernel".into(),
            ));
        }
        Self::with_potential(operator, c)
    }

    /// Like [`Self::new`] without the sign requirement on `c`; only
    /// a vanishing pivot is reported.
    pub fn with_potential(operator: &EllipticOperator<T>, c: &ScalarField<T>) -> Result<Self> {
        if *c.mesh() != *operator.mesh() {
            return Err(Error::MeshMismatch);
        }
        let restricted = operator.restrict(c);
        let lu = operator
            .stencil()
            .with_diagonal_shift(|i| restricted[i])
            .factor()?;
        Ok(Self {
            operator: operator.clone(),
            potential: c.clone(),
            lu,
        })
    }

    pub fn operator(&self) -> &EllipticOperator<T> {
        &self.operator
    }

    pub fn potential(&self) -> &ScalarField<T> {
        &self.potential
    }

    /// Solves `(-L + c) u = f`. For Dirichlet closures the boundary values
    /// of `f` are ignored and `u` vanishes at both endpoints.
    pub fn solve(&self, f: &ScalarField<T>) -> Result<ScalarField<T>> {
        if *f.mesh() != *self.operator.mesh() {
            return Err(Error::MeshMismatch);
        }
        let mut x = self.operator.restrict(f);
        self.lu.solve_in_place(&mut x);
        Ok(self.operator.extend(&x))
    }

    /// Solves in place on the unknown-node vector.
    pub fn solve_unknowns(&self, rhs: &mut [T]) {
        self.lu.solve_in_place(rhs);
    }
}

/// One-shot `(-L + c) u = f`.
pub fn solve<T: Real>(
    operator: &EllipticOperator<T>,
    c: &ScalarField<T>,
    f: &ScalarField<T>,
) -> Result<ScalarField<T>> {
    ShiftedSolve::new(operator, c)?.solve(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{dot, sup_diff};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit(mesh: Mesh1D<f64>) -> ScalarField<f64> {
        ScalarField::ones(mesh)
    }

    #[test]
    fn constants_in_neumann_kernel() {
        let m = Mesh1D::new(0.0, 1.0, 21).unwrap();
        let op = EllipticOperator::assemble(&unit(m), BoundarySpec::Neumann).unwrap();
        let lu = op.apply(&unit(m)).unwrap();
        assert!(lu.sup_norm() < 1e-12);
        let s = op.stencil();
        for i in 0..s.dim() {
            assert!((s.lower[i] + s.diag[i] + s.upper[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_on_quadratics() {
        let m = Mesh1D::new(0.0, 1.0, 11).unwrap();
        let u = ScalarField::from_fn(m, |x| x * x).unwrap();
        for bc in [
            BoundarySpec::Neumann,
            BoundarySpec::Dirichlet,
            BoundarySpec::Robin {
                left: 0.5,
                right: 2.0,
            },
        ] {
            let op = EllipticOperator::assemble(&unit(m), bc).unwrap();
            let lu = op.apply(&u).unwrap();
            for j in m.interior() {
                assert!((lu[j] - 2.0).abs() < 1e-10, "{bc:?} node {j}: {}", lu[j]);
            }
        }
    }

    #[test]
    fn sine_second_derivative_dirichlet() {
        let m = Mesh1D::new(0.0, PI, 201).unwrap();
        let op = EllipticOperator::assemble(&unit(m), BoundarySpec::Dirichlet).unwrap();
        let u = ScalarField::from_fn(m, f64::sin).unwrap();
        let lu = op.apply(&u).unwrap();
        let h = m.spacing();
        // Truncation error of the three-point stencil: h^2/12 sup|u''''|.
        let bound = h * h / 12.0 + 1e-12;
        let err = m
            .interior()
            .map(|j| (lu[j] + m.node(j).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err <= bound, "err {err} bound {bound}");
        assert!(err <= h * h / 6.0);
    }

    #[test]
    fn neumann_constant_solution() {
        let m = Mesh1D::new(0.0, 1.0, 31).unwrap();
        let op = EllipticOperator::assemble(&unit(m), BoundarySpec::Neumann).unwrap();
        let u = solve(&op, &unit(m), &ScalarField::constant(m, 3.0).unwrap()).unwrap();
        assert!(u.values().iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn neumann_zero_potential_is_singular() {
        let m = Mesh1D::new(0.0, 1.0, 31).unwrap();
        let op = EllipticOperator::assemble(&unit(m), BoundarySpec::Neumann).unwrap();
        let err = solve(&op, &ScalarField::zeros(m), &unit(m)).unwrap_err();
        assert!(matches!(err, Error::Singular(_)));
        let robin0 = EllipticOperator::assemble(
            &unit(m),
            BoundarySpec::Robin {
                left: 0.0,
                right: 0.0,
            },
        )
        .unwrap();
        assert!(matches!(
            ShiftedSolve::new(&robin0, &ScalarField::zeros(m)),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = Mesh1D::new(0.0, 1.0, 11).unwrap();
        let d = ScalarField::from_fn(m, |x| x - 0.5).unwrap();
        assert!(matches!(
            EllipticOperator::assemble(&d, BoundarySpec::Neumann),
            Err(Error::NonPositive { .. })
        ));
        let op = EllipticOperator::assemble(&unit(m), BoundarySpec::Dirichlet).unwrap();
        assert!(ShiftedSolve::new(&op, &ScalarField::constant(m, -1.0).unwrap()).is_err());
    }

    #[test]
    fn dirichlet_sine_solve_second_order() {
        let mut errs = Vec::new();
        for n in [101, 201, 401] {
            let m = Mesh1D::new(0.0, PI, n).unwrap();
            let op = EllipticOperator::assemble(&unit(m), BoundarySpec::Dirichlet).unwrap();
            let f = ScalarField::from_fn(m, f64::sin).unwrap();
            let u = solve(&op, &ScalarField::zeros(m), &f).unwrap();
            assert_eq!(u[0], 0.0);
            assert_eq!(u[n - 1], 0.0);
            errs.push(u.sup_distance(&f).unwrap());
        }
        assert!(errs[1] < 1e-4);
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn manufactured_variable_coefficient_neumann() {
        // u = cos(pi x), d = 1 + x/2, c = 1:  -(d u')' + u = f.
        let f_exact = |x: f64| {
            let d = 1.0 + 0.5 * x;
            let du = -PI * (PI * x).sin();
            let d2u = -PI * PI * (PI * x).cos();
            -(0.5 * du + d * d2u) + (PI * x).cos()
        };
        let mut errs = Vec::new();
        for n in [51, 101, 201] {
            let m = Mesh1D::new(0.0, 1.0, n).unwrap();
            let d = ScalarField::from_fn(m, |x| 1.0 + 0.5 * x).unwrap();
            let op = EllipticOperator::assemble(&d, BoundarySpec::Neumann).unwrap();
            let f = ScalarField::from_fn(m, f_exact).unwrap();
            let u = solve(&op, &unit(m), &f).unwrap();
            let exact = ScalarField::from_fn(m, |x| (PI * x).cos()).unwrap();
            errs.push(u.sup_distance(&exact).unwrap());
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.0..5.0).contains(&ratio), "ratio {ratio} errs {errs:?}");
        }
    }

    fn bc_strategy() -> impl Strategy<Value = BoundarySpec<f64>> {
        prop_oneof![
            Just(BoundarySpec::Neumann),
            Just(BoundarySpec::Dirichlet),
            (0.0f64..3.0, 0.0f64..3.0).prop_map(|(l, r)| BoundarySpec::Robin { left: l, right: r }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn weighted_symmetry(
            bc in bc_strategy(),
            dv in prop::collection::vec(0.2f64..3.0, 25),
            uv in prop::collection::vec(-1.0f64..1.0, 25),
            vv in prop::collection::vec(-1.0f64..1.0, 25),
        ) {
            let m = Mesh1D::new(0.0, 1.0, 25).unwrap();
            let d = ScalarField::from_values(m, dv).unwrap();
            let op = EllipticOperator::assemble(&d, bc).unwrap();
            let w = op.quadrature_weights();
            let u = op.restrict(&ScalarField::from_values(m, uv).unwrap());
            let v = op.restrict(&ScalarField::from_values(m, vv).unwrap());
            let mut lu = vec![0.0; u.len()];
            let mut lv = vec![0.0; v.len()];
            op.stencil().apply(&u, &mut lu);
            op.stencil().apply(&v, &mut lv);
            let wlu: Vec<f64> = lu.iter().zip(&w).map(|(a, b)| a * b).collect();
            let wlv: Vec<f64> = lv.iter().zip(&w).map(|(a, b)| a * b).collect();
            let lhs = dot(&wlu, &v);
            let rhs = dot(&u, &wlv);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()) * op.norm_inf());
        }

        #[test]
        fn shifted_solve_relative_residual(
            bc in bc_strategy(),
            dv in prop::collection::vec(0.2f64..3.0, 40),
            cv in prop::collection::vec(0.0f64..2.0, 40),
            fv in prop::collection::vec(-1.0f64..1.0, 40),
        ) {
            let m = Mesh1D::new(0.0, 1.0, 40).unwrap();
            let op = EllipticOperator::assemble(&ScalarField::from_values(m, dv).unwrap(), bc).unwrap();
            let mut c = cv;
            c[20] += 0.5;
            let c = ScalarField::from_values(m, c).unwrap();
            let f = ScalarField::from_values(m, fv).unwrap();
            let u = solve(&op, &c, &f).unwrap();
            let x = op.restrict(&u);
            let mut r = vec![0.0; x.len()];
            op.stencil().with_diagonal_shift(|i| op.restrict(&c)[i]).apply(&x, &mut r);
            let fr = op.restrict(&f);
            let scale = op.norm_inf() * crate::scalar::sup(&x) + crate::scalar::sup(&fr);
            prop_assert!(sup_diff(&r, &fr) <= 1e-12 * scale);
        }

        #[test]
        fn discrete_comparison(
            bc in bc_strategy(),
            dv in prop::collection::vec(0.2f64..3.0, 30),
            cv in prop::collection::vec(0.0f64..2.0, 30),
            fa in prop::collection::vec(-1.0f64..1.0, 30),
            gap in prop::collection::vec(0.0f64..1.0, 30),
        ) {
            let m = Mesh1D::new(0.0, 2.0, 30).unwrap();
            let op = EllipticOperator::assemble(&ScalarField::from_values(m, dv).unwrap(), bc).unwrap();
            let mut c = cv;
            c[0] += 0.1;
            let solver = ShiftedSolve::new(&op, &ScalarField::from_values(m, c).unwrap()).unwrap();
            let f = ScalarField::from_values(m, fa.clone()).unwrap();
            let g = ScalarField::from_values(m, fa.iter().zip(&gap).map(|(a, b)| a + b).collect()).unwrap();
            let u = solver.solve(&f).unwrap();
            let v = solver.solve(&g).unwrap();
            prop_assert!(u.le_within(&v, 1e-12));
        }
    }

    #[test]
    fn maximum_principle_positive_solution() {
        let m = Mesh1D::new(0.0, 1.0, 51).unwrap();
        let d = ScalarField::from_fn(m, |x| 0.5 + x).unwrap();
        let f =
            ScalarField::from_fn(m, |x| if (0.4..0.6).contains(&x) { 1.0 } else { 0.0 }).unwrap();
        for bc in [BoundarySpec::Neumann, BoundarySpec::Dirichlet] {
            let op = EllipticOperator::assemble(&d, bc).unwrap();
            let u = solve(&op, &ScalarField::constant(m, 0.3).unwrap(), &f).unwrap();
            assert!(m.interior().all(|j| u[j] > 0.0));
        }
        let op = EllipticOperator::assemble(&d, BoundarySpec::Dirichlet).unwrap();
        let u = solve(&op, &ScalarField::zeros(m), &f).unwrap();
        assert!(m.interior().all(|j| u[j] > 0.0));
    }
}
