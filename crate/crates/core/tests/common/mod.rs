//! Dense reference computations assembled directly from the finite-volume
//! formulas, independent of the banded code paths.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use vectorhost::grid::{BoundarySpec, CoefficientSet, Mesh1D, ScalarField, UniformCoefficients};
use vectorhost::verify::ScenarioGenerator;

/// Dense `-L` on the unknown nodes together with the unknown index range.
pub fn dense_minus_l(
    d: &ScalarField<f64>,
    bc: BoundarySpec<f64>,
) -> (DMatrix<f64>, std::ops::Range<usize>) {
    let mesh = d.mesh();
    let n = mesh.len();
    let h = mesh.spacing();
    let h2 = h * h;
    let face = |j: usize| 0.5 * (d[j] + d[j + 1]);
    let mut full = DMatrix::<f64>::zeros(n, n);
    for j in 1..n - 1 {
        let (w, e) = (face(j - 1), face(j));
        full[(j, j - 1)] = -w / h2;
        full[(j, j)] = (w + e) / h2;
        full[(j, j + 1)] = -e / h2;
    }
    let (bl, br) = match bc {
        BoundarySpec::Neumann => (0.0, 0.0),
        BoundarySpec::Robin { left, right } => (left, right),
        BoundarySpec::Dirichlet => (0.0, 0.0),
    };
    // Ghost nodes: u_{-1} = u_1 - 2 h b u_0 and u_{n} = u_{n-2} - 2 h b u_{n-1}.
    let f0 = face(0);
    full[(0, 0)] = 2.0 * f0 / h2 + 2.0 * bl * f0 / h;
    full[(0, 1)] = -2.0 * f0 / h2;
    let fl = face(n - 2);
    full[(n - 1, n - 1)] = 2.0 * fl / h2 + 2.0 * br * fl / h;
    full[(n - 1, n - 2)] = -2.0 * fl / h2;
    let range = if bc.is_dirichlet() { 1..n - 1 } else { 0..n };
    let m = range.len();
    let a = DMatrix::from_fn(m, m, |i, k| full[(range.start + i, range.start + k)]);
    (a, range)
}

/// Quadrature weights making the dense `-L` symmetric.
pub fn weights(n_unknowns: usize, bc: BoundarySpec<f64>) -> Vec<f64> {
    let mut w = vec![1.0; n_unknowns];
    if !bc.is_dirichlet() {
        w[0] = 0.5;
        w[n_unknowns - 1] = 0.5;
    }
    w
}

/// Smallest eigenvalue of `-L - beta` by symmetric eigendecomposition.
pub fn dense_scalar_eigenvalue(
    d: &ScalarField<f64>,
    beta: &ScalarField<f64>,
    bc: BoundarySpec<f64>,
) -> f64 {
    let (mut a, range) = dense_minus_l(d, bc);
    for (i, j) in range.clone().enumerate() {
        a[(i, i)] -= beta[j];
    }
    let w = weights(range.len(), bc);
    let m = range.len();
    let s = DMatrix::from_fn(m, m, |i, k| w[i].sqrt() * a[(i, k)] / w[k].sqrt());
    let s = (&s + s.transpose()) * 0.5;
    s.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Dense block matrix of the linearization at zero.
pub fn dense_block(
    coeffs: &CoefficientSet<f64>,
    v_b: &ScalarField<f64>,
    bc: BoundarySpec<f64>,
    eps: f64,
    weight: &ScalarField<f64>,
) -> (DMatrix<f64>, std::ops::Range<usize>) {
    let (a1, range) = dense_minus_l(coeffs.d1(), bc);
    let (a2, _) = dense_minus_l(coeffs.d2(), bc);
    let m = range.len();
    let mut big = DMatrix::<f64>::zeros(2 * m, 2 * m);
    big.view_mut((0, 0), (m, m)).copy_from(&a1);
    big.view_mut((m, m), (m, m)).copy_from(&a2);
    for (i, j) in range.clone().enumerate() {
        big[(i, i)] += coeffs.rho()[j];
        big[(i, m + i)] = -coeffs.sigma1()[j] * coeffs.h_u()[j];
        big[(m + i, i)] = -coeffs.sigma2()[j] * (v_b[j] + eps * weight[j]);
        big[(m + i, m + i)] += coeffs.mu()[j] * (v_b[j] - eps * weight[j]);
    }
    (big, range)
}

/// Among the real eigenvalues ordered by real part, the first whose
/// eigenvector has one sign; returns it with that eigenvector.
pub fn dense_principal(a: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let mut ev: Vec<_> = a.complex_eigenvalues().iter().cloned().collect();
    ev.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
    let n = a.nrows();
    for z in ev {
        if z.im.abs() > 1e-9 * (1.0 + z.re.abs()) {
            continue;
        }
        // Inverse iteration with a slightly perturbed shift.
        let shifted = a - DMatrix::identity(n, n) * (z.re - 1e-9 * (1.0 + z.re.abs()));
        let lu = shifted.lu();
        let mut x = DVector::from_element(n, 1.0);
        for _ in 0..3 {
            x = lu.solve(&x).expect("nonsingular shift");
            let s = x.amax();
            x /= s;
        }
        let pos = x.iter().all(|v| *v > 1e-12);
        let neg = x.iter().all(|v| *v < -1e-12);
        if pos || neg {
            if neg {
                x = -x;
            }
            let ax = a * &x;
            let lambda = ax.dot(&x) / x.dot(&x);
            return (lambda, x);
        }
    }
    panic!("no eigenvalue with a one-signed eigenvector")
}

pub fn unit(mesh: Mesh1D<f64>, h_u: f64) -> CoefficientSet<f64> {
    CoefficientSet::uniform(mesh, UniformCoefficients::unit(h_u)).unwrap()
}

pub fn mesh(a: f64, b: f64, n: usize) -> Mesh1D<f64> {
    Mesh1D::new(a, b, n).unwrap()
}

/// Random coefficients from the seeded generator.
pub fn random_coeffs(seed: u64, m: Mesh1D<f64>) -> CoefficientSet<f64> {
    ScenarioGenerator::new(seed).coefficients(m).unwrap()
}

pub fn all_bcs() -> [BoundarySpec<f64>; 3] {
    [
        BoundarySpec::Neumann,
        BoundarySpec::Dirichlet,
        BoundarySpec::Robin {
            left: 0.7,
            right: 1.9,
        },
    ]
}
