//! Uniform interval meshes, nodal fields and the model's coefficient bundle.

use std::ops::{Index, Range};

use crate::error::{Error, Result};
use crate::scalar::{sup, sup_diff, Real};

/// Uniform vertex-centered mesh on `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh1D<T> {
    a: T,
    b: T,
    n: usize,
    h: T,
}

impl<T: Real> Mesh1D<T> {
    pub fn new(a: T, b: T, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidMesh(format!(
                "need at least 3 nodes, got {n}"
            )));
        }
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidMesh(format!(
                "left endpoint {a} must be below right endpoint {b}"
            )));
        }
        let h = (b - a) / T::from_usize(n - 1).unwrap();
        Ok(Self { a, b, n, h })
    }

    pub fn left(&self) -> T {
        self.a
    }

    pub fn right(&self) -> T {
        self.b
    }

    /// Number of nodes, endpoints included.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> T {
        self.h
    }

    /// Coordinate of node `j`; the last node is pinned to `b` exactly.
    pub fn node(&self, j: usize) -> T {
        if j + 1 == self.n {
            self.b
        } else {
            self.a + T::from_usize(j).unwrap() * self.h
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.n).map(move |j| self.node(j))
    }

    /// Indices of the nodes strictly inside the interval.
    pub fn interior(&self) -> Range<usize> {
        1..self.n - 1
    }
}

/// Nodal values of a function on a [`Mesh1D`]. Every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    mesh: Mesh1D<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn from_values(mesh: Mesh1D<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::LengthMismatch {
                expected: mesh.len(),
                got: values.len(),
            });
        }
        if let Some((node, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                node,
                value: v.as_f64(),
            });
        }
        Ok(Self { mesh, values })
    }

    pub fn constant(mesh: Mesh1D<T>, c: T) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::NonFinite {
                node: 0,
                value: c.as_f64(),
            });
        }
        Ok(Self::filled(mesh, c))
    }

    pub fn from_fn(mesh: Mesh1D<T>, f: impl Fn(T) -> T) -> Result<Self> {
        let values = mesh.nodes().map(f).collect();
        Self::from_values(mesh, values)
    }

    pub fn zeros(mesh: Mesh1D<T>) -> Self {
        Self::filled(mesh, T::zero())
    }

    pub fn ones(mesh: Mesh1D<T>) -> Self {
        Self::filled(mesh, T::one())
    }

    fn filled(mesh: Mesh1D<T>, c: T) -> Self {
        Self {
            mesh,
            values: vec![c; mesh.len()],
        }
    }

    /// Builds a field from values produced by this crate's own arithmetic.
    pub(crate) fn from_raw(mesh: Mesh1D<T>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), mesh.len());
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Mesh1D<T> {
        &self.mesh
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    /// Nodewise `max(f, 0)`.
    pub fn positive_part(&self) -> Self {
        self.map(|v| v.max(T::zero()))
    }

    pub fn sup_norm(&self) -> T {
        sup(&self.values)
    }

    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        self.check_same_mesh(other)?;
        Ok(sup_diff(&self.values, &other.values))
    }

    pub fn check_same_mesh(&self, other: &Self) -> Result<()> {
        if self.mesh == other.mesh {
            Ok(())
        } else {
            Err(Error::MeshMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(self.mesh, self.values.iter().map(|v| f(*v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_mesh(other)?;
        Ok(self.zip_unchecked(other, f))
    }

    /// Nodewise combination of two fields known to share a mesh.
    pub(crate) fn zip_unchecked(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.mesh, other.mesh, "fields on different meshes");
        Self::from_raw(
            self.mesh,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| f(*x, *y))
                .collect(),
        )
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|v| k * v)
    }

    /// Copy of the field with both endpoint values set to zero.
    pub fn with_boundary_zeroed(&self) -> Self {
        let mut values = self.values.clone();
        values[0] = T::zero();
        let last = values.len() - 1;
        values[last] = T::zero();
        Self::from_raw(self.mesh, values)
    }

    /// True if `self <= other + tol` at every node.
    pub fn le_within(&self, other: &Self, tol: T) -> bool {
        self.values
            .iter()
            .zip(&other.values)
            .all(|(x, y)| *x <= *y + tol)
    }
}

impl<T> Index<usize> for ScalarField<T> {
    type Output = T;

    fn index(&self, j: usize) -> &T {
        &self.values[j]
    }
}

/// Closure of the divergence-form operator at both endpoints.
///
/// Robin closes with `d_nu u + b u = 0`, `b >= 0` sampled at each endpoint;
/// Neumann is the `b = 0` special case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundarySpec<T> {
    Neumann,
    Dirichlet,
    Robin { left: T, right: T },
}

impl<T: Real> BoundarySpec<T> {
    pub fn robin(left: T, right: T) -> Result<Self> {
        if !(left >= T::zero() && right >= T::zero()) || !left.is_finite() || !right.is_finite() {
            return Err(Error::Validation(format!(
                "Robin coefficients must be finite and nonnegative (got {left}, {right})"
            )));
        }
        Ok(Self::Robin { left, right })
    }

    pub fn is_dirichlet(&self) -> bool {
        matches!(self, Self::Dirichlet)
    }

    /// True when no boundary term removes mass, so constants lie in the kernel of `L`.
    pub fn is_conservative(&self) -> bool {
        match *self {
            Self::Neumann => true,
            Self::Dirichlet => false,
            Self::Robin { left, right } => left == T::zero() && right == T::zero(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Neumann => "neumann",
            Self::Dirichlet => "dirichlet",
            Self::Robin { .. } => "robin",
        }
    }
}

/// Named inputs for [`CoefficientSet::new`].
#[derive(Debug, Clone)]
pub struct CoefficientFields<T> {
    pub d1: ScalarField<T>,
    pub d2: ScalarField<T>,
    pub rho: ScalarField<T>,
    pub sigma1: ScalarField<T>,
    pub sigma2: ScalarField<T>,
    pub beta: ScalarField<T>,
    pub mu: ScalarField<T>,
    pub h_u: ScalarField<T>,
}

/// Constant values for every coefficient, see [`CoefficientSet::uniform`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformCoefficients<T> {
    pub d1: T,
    pub d2: T,
    pub rho: T,
    pub sigma1: T,
    pub sigma2: T,
    pub beta: T,
    pub mu: T,
    pub h_u: T,
}

impl<T: Real> UniformCoefficients<T> {
    /// All coefficients equal to one except `h_u`.
    pub fn unit(h_u: T) -> Self {
        let one = T::one();
        Self {
            d1: one,
            d2: one,
            rho: one,
            sigma1: one,
            sigma2: one,
            beta: one,
            mu: one,
            h_u,
        }
    }
}

/// Validated model coefficients: diffusion rates `d1`, `d2`, host recovery
/// `rho`, transmission rates `sigma1`, `sigma2`, vector birth `beta`,
/// vector crowding `mu`, and susceptible host density `h_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet<T> {
    d1: ScalarField<T>,
    d2: ScalarField<T>,
    rho: ScalarField<T>,
    sigma1: ScalarField<T>,
    sigma2: ScalarField<T>,
    beta: ScalarField<T>,
    mu: ScalarField<T>,
    h_u: ScalarField<T>,
}

fn require_positive<T: Real>(name: &'static str, f: &ScalarField<T>) -> Result<()> {
    match f
        .values()
        .iter()
        .enumerate()
        .find(|(_, v)| **v <= T::zero())
    {
        Some((node, v)) => Err(Error::NonPositive {
            name,
            node,
            value: v.as_f64(),
        }),
        None => Ok(()),
    }
}

impl<T: Real> CoefficientSet<T> {
    pub fn new(fields: CoefficientFields<T>) -> Result<Self> {
        let CoefficientFields {
            d1,
            d2,
            rho,
            sigma1,
            sigma2,
            beta,
            mu,
            h_u,
        } = fields;
        let mesh = *d1.mesh();
        for f in [&d2, &rho, &sigma1, &sigma2, &beta, &mu, &h_u] {
            if *f.mesh() != mesh {
                return Err(Error::MeshMismatch);
            }
        }
        require_positive("d1", &d1)?;
        require_positive("d2", &d2)?;
        require_positive("rho", &rho)?;
        require_positive("sigma1", &sigma1)?;
        require_positive("sigma2", &sigma2)?;
        require_positive("beta", &beta)?;
        require_positive("mu", &mu)?;
        if h_u.min() < T::zero() || h_u.max() <= T::zero() {
            return Err(Error::Validation(
                "h_u must be nonnegative and not identically zero".into(),
            ));
        }
        Ok(Self {
            d1,
            d2,
            rho,
            sigma1,
            sigma2,
            beta,
            mu,
            h_u,
        })
    }

    pub fn uniform(mesh: Mesh1D<T>, c: UniformCoefficients<T>) -> Result<Self> {
        let f = |v| ScalarField::constant(mesh, v);
        Self::new(CoefficientFields {
            d1: f(c.d1)?,
            d2: f(c.d2)?,
            rho: f(c.rho)?,
            sigma1: f(c.sigma1)?,
            sigma2: f(c.sigma2)?,
            beta: f(c.beta)?,
            mu: f(c.mu)?,
            h_u: f(c.h_u)?,
        })
    }

    /// Same coefficients with `h_u` multiplied by `k >= 0`.
    ///
    /// `k = 0` yields the degenerate decoupled system (see [`Self::is_decoupled`]),
    /// which [`Self::new`] would reject.
    pub fn with_h_u_scaled(&self, k: T) -> Result<Self> {
        if !(k >= T::zero()) || !k.is_finite() {
            return Err(Error::Validation(format!(
                "h_u scale must be finite and nonnegative, got {k}"
            )));
        }
        Ok(Self {
            h_u: self.h_u.scale(k),
            ..self.clone()
        })
    }

    pub fn mesh(&self) -> &Mesh1D<T> {
        self.d1.mesh()
    }

    /// `h_u` vanishes identically, so host infection decouples from the vectors.
    pub fn is_decoupled(&self) -> bool {
        self.h_u.max() <= T::zero()
    }

    pub fn d1(&self) -> &ScalarField<T> {
        &self.d1
    }
    pub fn d2(&self) -> &ScalarField<T> {
        &self.d2
    }
    pub fn rho(&self) -> &ScalarField<T> {
        &self.rho
    }
    pub fn sigma1(&self) -> &ScalarField<T> {
        &self.sigma1
    }
    pub fn sigma2(&self) -> &ScalarField<T> {
        &self.sigma2
    }
    pub fn beta(&self) -> &ScalarField<T> {
        &self.beta
    }
    pub fn mu(&self) -> &ScalarField<T> {
        &self.mu
    }
    pub fn h_u(&self) -> &ScalarField<T> {
        &self.h_u
    }

    /// Host infection source rate `sigma1 * h_u`.
    pub fn host_infection(&self) -> ScalarField<T> {
        self.sigma1.zip_unchecked(&self.h_u, |s, h| s * h)
    }

    /// Nodewise vector carrying capacity `beta / mu`.
    pub fn carrying_capacity(&self) -> ScalarField<T> {
        self.beta.zip_unchecked(&self.mu, |b, m| b / m)
    }
}
