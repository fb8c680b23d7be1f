//! Direct banded factorizations: scalar tridiagonal (Thomas) and the
//! 2x2 block-tridiagonal form of two coupled components on one mesh.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Tridiagonal matrix; row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1]`.
/// `lower[0]` and `upper[m-1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> Tridiagonal<T> {
    pub fn zeros(m: usize) -> Self {
        Self {
            lower: vec![T::zero(); m],
            diag: vec![T::zero(); m],
            upper: vec![T::zero(); m],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, x: &[T], out: &mut [T]) {
        let m = self.dim();
        for i in 0..m {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.lower[i] * x[i - 1];
            }
            if i + 1 < m {
                acc += self.upper[i] * x[i + 1];
            }
            out[i] = acc;
        }
    }

    /// Copy with `shift[i]` added to the diagonal.
    pub fn with_diagonal_shift(&self, shift: impl Fn(usize) -> T) -> Self {
        let mut out = self.clone();
        for (i, d) in out.diag.iter_mut().enumerate() {
            *d += shift(i);
        }
        out
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.dim())
            .map(|i| self.lower[i].abs() + self.diag[i].abs() + self.upper[i].abs())
            .fold(T::zero(), T::max)
    }

    pub fn factor(&self) -> Result<TridiagonalLu<T>> {
        let m = self.dim();
        let mut pivot = vec![T::zero(); m];
        let mut ratio = vec![T::zero(); m];
        for i in 0..m {
            let p = if i == 0 {
                self.diag[0]
            } else {
                self.diag[i] - self.lower[i] * ratio[i - 1]
            };
            if p == T::zero() || !p.is_finite() {
                return Err(Error::Singular(format!(
                    "zero pivot in tridiagonal row {i}"
                )));
            }
            pivot[i] = p;
            ratio[i] = if i + 1 < m {
                self.upper[i] / p
            } else {
                T::zero()
            };
        }
        Ok(TridiagonalLu {
            lower: self.lower.clone(),
            pivot,
            ratio,
        })
    }
}

/// Thomas-algorithm factors of a [`Tridiagonal`]. Immutable, so one
/// factorization can serve concurrent solves.
#[derive(Debug, Clone)]
pub struct TridiagonalLu<T> {
    lower: Vec<T>,
    pivot: Vec<T>,
    ratio: Vec<T>,
}

impl<T: Real> TridiagonalLu<T> {
    pub fn dim(&self) -> usize {
        self.pivot.len()
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [T]) {
        let m = self.dim();
        assert_eq!(rhs.len(), m, "right-hand side length");
        rhs[0] /= self.pivot[0];
        for i in 1..m {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / self.pivot[i];
        }
        for i in (0..m - 1).rev() {
            rhs[i] -= self.ratio[i] * rhs[i + 1];
        }
    }
}

type Mat2<T> = [[T; 2]; 2];

fn inv2<T: Real>(a: &Mat2<T>) -> Option<Mat2<T>> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det == T::zero() || !det.is_finite() {
        return None;
    }
    Some([
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ])
}

fn mul2<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> Mat2<T> {
    let mut c = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn mv2<T: Real>(a: &Mat2<T>, x: [T; 2]) -> [T; 2] {
    [
        a[0][0] * x[0] + a[0][1] * x[1],
        a[1][0] * x[0] + a[1][1] * x[1],
    ]
}

/// Two components coupled nodewise by a 2x2 block on the diagonal and
/// through per-component tridiagonal stencils off the diagonal.
///
/// The unknown vector is the concatenation `[u; v]` of the two components.
#[derive(Debug, Clone)]
pub struct BlockTridiagonal2<T> {
    /// Stencil of the first component; its diagonal is the (0,0) block entry.
    pub first: Tridiagonal<T>,
    /// Stencil of the second component; its diagonal is the (1,1) block entry.
    pub second: Tridiagonal<T>,
    /// The (0,1) block entry: coefficient of `v` in the first equation.
    pub couple_12: Vec<T>,
    /// The (1,0) block entry: coefficient of `u` in the second equation.
    pub couple_21: Vec<T>,
}

impl<T: Real> BlockTridiagonal2<T> {
    pub fn dim(&self) -> usize {
        self.first.dim()
    }

    /// `A + shift I`.
    pub fn shifted(&self, shift: T) -> Self {
        Self {
            first: self.first.with_diagonal_shift(|_| shift),
            second: self.second.with_diagonal_shift(|_| shift),
            couple_12: self.couple_12.clone(),
            couple_21: self.couple_21.clone(),
        }
    }

    /// `out = A [u; v]` for concatenated vectors of length `2m`.
    pub fn apply(&self, x: &[T], out: &mut [T]) {
        let m = self.dim();
        let (u, v) = x.split_at(m);
        let (ou, ov) = out.split_at_mut(m);
        self.first.apply(u, ou);
        self.second.apply(v, ov);
        for i in 0..m {
            ou[i] += self.couple_12[i] * v[i];
            ov[i] += self.couple_21[i] * u[i];
        }
    }

    pub fn norm_inf(&self) -> T {
        let m = self.dim();
        let a = &self.first;
        let b = &self.second;
        (0..m)
            .map(|i| {
                let r1 =
                    a.lower[i].abs() + a.diag[i].abs() + a.upper[i].abs() + self.couple_12[i].abs();
                let r2 =
                    b.lower[i].abs() + b.diag[i].abs() + b.upper[i].abs() + self.couple_21[i].abs();
                r1.max(r2)
            })
            .fold(T::zero(), T::max)
    }

    /// Block Thomas factorization.
    pub fn factor(&self) -> Result<BlockTridiagonalLu<T>> {
        let m = self.dim();
        let zero = T::zero();
        let mut inv_pivot = Vec::with_capacity(m);
        let mut ratio: Vec<Mat2<T>> = Vec::with_capacity(m);
        for i in 0..m {
            let mut d = [
                [self.first.diag[i], self.couple_12[i]],
                [self.couple_21[i], self.second.diag[i]],
            ];
            if i > 0 {
                // d -= diag(lower_i) * ratio_{i-1}
                let r = &ratio[i - 1];
                let l = [self.first.lower[i], self.second.lower[i]];
                for (row, li) in l.iter().enumerate() {
                    d[row][0] -= *li * r[row][0];
                    d[row][1] -= *li * r[row][1];
                }
            }
            let inv = inv2(&d)
                .ok_or_else(|| Error::Singular(format!("singular 2x2 pivot block at row {i}")))?;
            let r = if i + 1 < m {
                mul2(
                    &inv,
                    &[[self.first.upper[i], zero], [zero, self.second.upper[i]]],
                )
            } else {
                [[zero; 2]; 2]
            };
            inv_pivot.push(inv);
            ratio.push(r);
        }
        Ok(BlockTridiagonalLu {
            lower_first: self.first.lower.clone(),
            lower_second: self.second.lower.clone(),
            inv_pivot,
            ratio,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BlockTridiagonalLu<T> {
    lower_first: Vec<T>,
    lower_second: Vec<T>,
    inv_pivot: Vec<Mat2<T>>,
    ratio: Vec<Mat2<T>>,
}

impl<T: Real> BlockTridiagonalLu<T> {
    pub fn dim(&self) -> usize {
        self.inv_pivot.len()
    }

    /// Overwrites the concatenated right-hand side `[f; g]` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [T]) {
        let m = self.dim();
        assert_eq!(rhs.len(), 2 * m, "right-hand side length");
        let (u, v) = rhs.split_at_mut(m);
        for i in 0..m {
            let mut r = [u[i], v[i]];
            if i > 0 {
                r[0] -= self.lower_first[i] * u[i - 1];
                r[1] -= self.lower_second[i] * v[i - 1];
            }
            let g = mv2(&self.inv_pivot[i], r);
            u[i] = g[0];
            v[i] = g[1];
        }
        for i in (0..m - 1).rev() {
            let c = mv2(&self.ratio[i], [u[i + 1], v[i + 1]]);
            u[i] -= c[0];
            v[i] -= c[1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::sup_diff;

    fn random_diag_dominant(m: usize, seed: u64) -> Tridiagonal<f64> {
        let mut s = seed;
        let mut next = || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 33) as f64) / (1u64 << 31) as f64
        };
        let mut t = Tridiagonal::zeros(m);
        for i in 0..m {
            t.lower[i] = -next();
            t.upper[i] = -next();
            t.diag[i] = 2.5 + next();
        }
        t
    }

    #[test]
    fn thomas_reproduces_rhs() {
        let t = random_diag_dominant(50, 7);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut b = vec![0.0; 50];
        t.apply(&x, &mut b);
        let lu = t.factor().unwrap();
        lu.solve_in_place(&mut b);
        assert!(sup_diff(&b, &x) < 1e-13);
    }

    #[test]
    fn zero_pivot_is_singular() {
        let mut t = Tridiagonal::zeros(3);
        t.diag = vec![0.0, 1.0, 1.0];
        assert!(matches!(t.factor(), Err(Error::Singular(_))));
    }

    #[test]
    fn block_thomas_reproduces_rhs() {
        let m = 40;
        let a = BlockTridiagonal2 {
            first: random_diag_dominant(m, 1),
            second: random_diag_dominant(m, 2),
            couple_12: (0..m).map(|i| -0.3 - 0.01 * i as f64).collect(),
            couple_21: (0..m).map(|i| -0.5 + 0.005 * i as f64).collect(),
        };
        let x: Vec<f64> = (0..2 * m).map(|i| 1.0 + (i as f64 * 0.21).cos()).collect();
        let mut b = vec![0.0; 2 * m];
        a.apply(&x, &mut b);
        a.factor().unwrap().solve_in_place(&mut b);
        assert!(sup_diff(&b, &x) < 1e-13);
    }
}
