//! Divergence-form elliptic operators and the banded solves behind them.

mod banded;
mod elliptic;

pub use banded::{BlockTridiagonal2, BlockTridiagonalLu, Tridiagonal, TridiagonalLu};
pub use elliptic::{solve, EllipticOperator, ShiftedSolve};
