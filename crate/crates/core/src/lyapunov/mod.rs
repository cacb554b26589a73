//! Lyapunov equations `A P + P A^T = -F F^T`, dense and low-rank.
//!
//! `A` is either a dense matrix or the pencil operator `C^{-1} G` (or the
//! dual `C^{-1} G^T`), which is applied through sparse factorizations of `C`
//! and `G` and never formed.

mod dense;
mod eks;

use std::sync::Arc;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, MatRef};
use thiserror::Error;

use crate::sparse::{self, c64, SparseLu, SparseMat};

pub use dense::{relative_residual, solve_dense, solve_dense_with_cutoff, DenseSchur, DEFAULT_DENSE_CUTOFF};
pub use eks::{solve_eks, write_residual_csv, EksOptions, EksState, ExpandOutcome, LowRankFactor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error("matrix is not Hurwitz: eigenvalue {0} has nonnegative real part")]
    NotHurwitz(c64),
    #[error("order {n} exceeds the dense cutoff {cutoff}")]
    DenseCutoffExceeded { n: usize, cutoff: usize },
    #[error("real Schur decomposition did not converge")]
    SchurFailed,
    #[error("singular factorization while applying {0}")]
    Singular(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("projected matrix lost the Hurwitz property at iteration {iteration} (eigenvalue {eigenvalue})")]
    ProjectedNotHurwitz { iteration: usize, eigenvalue: c64 },
    #[error("Krylov basis exhausted at iteration {iteration} with residual {residual:e}")]
    BasisExhausted { iteration: usize, residual: f64 },
    #[error("projected solution is indefinite: eigenvalue {min:e} vs largest {max:e}")]
    Indefinite { min: f64, max: f64 },
    #[error("right-hand side is zero")]
    ZeroRhs,
    #[error("invalid option: {0}")]
    InvalidOption(String),
}

/// Sparse factorizations of a descriptor pencil `(C, G)`, shared by the
/// controllability and observability problems.
pub struct PencilFactors {
    c: SparseMat,
    g: SparseMat,
    gt: SparseMat,
    c_lu: SparseLu,
    g_lu: SparseLu,
}

impl PencilFactors {
    pub fn new(c: &SparseMat, g: &SparseMat) -> Result<Self, LyapunovError> {
        let n = c.nrows();
        if c.ncols() != n || g.nrows() != n || g.ncols() != n {
            return Err(LyapunovError::Dimension("C and G must be square of equal size".into()));
        }
        Ok(Self {
            c: c.clone(),
            g: g.clone(),
            gt: sparse::transpose(g),
            c_lu: SparseLu::new(c).map_err(|_| LyapunovError::Singular("C^-1"))?,
            g_lu: SparseLu::new(g).map_err(|_| LyapunovError::Singular("G^-1"))?,
        })
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn c(&self) -> &SparseMat {
        &self.c
    }

    pub fn g(&self) -> &SparseMat {
        &self.g
    }

    pub fn solve_c(&self, rhs: MatRef<'_, f64>) -> Result<Mat<f64>, LyapunovError> {
        self.c_lu.solve(rhs).map_err(|_| LyapunovError::Singular("C^-1"))
    }

    pub fn solve_c_transpose(&self, rhs: MatRef<'_, f64>) -> Result<Mat<f64>, LyapunovError> {
        self.c_lu
            .solve_transpose(rhs)
            .map_err(|_| LyapunovError::Singular("C^-T"))
    }
}

enum Operator {
    Dense { a: Mat<f64>, lu: PartialPivLu<f64> },
    Pencil { factors: Arc<PencilFactors>, transposed: bool },
}

/// `A P + P A^T = -F F^T` with `A` Hurwitz.
///
/// Pencil problems carry the inner product `<x, y> = x^T C y`, in which
/// `C^{-1} G` is dissipative for passive RLCk models; the low-rank solver
/// orthonormalizes its basis in that inner product.
pub struct LyapunovProblem {
    op: Operator,
    f: Mat<f64>,
}

impl LyapunovProblem {
    pub fn dense(a: Mat<f64>, f: Mat<f64>) -> Result<Self, LyapunovError> {
        if a.nrows() != a.ncols() || f.nrows() != a.nrows() {
            return Err(LyapunovError::Dimension(format!(
                "A is {}x{}, F is {}x{}",
                a.nrows(),
                a.ncols(),
                f.nrows(),
                f.ncols()
            )));
        }
        let lu = a.partial_piv_lu();
        Ok(Self {
            op: Operator::Dense { a, lu },
            f,
        })
    }

    /// `A = C^{-1} G`, `F = C^{-1} B`; with `transposed`, `A = C^{-1} G^T`.
    ///
    /// The transposed form is the dual problem: if `Y` solves it with
    /// `rhs = L^T`, then `C Y C` is the observability Gramian of `(C^{-1} G, L)`.
    pub fn pencil(factors: Arc<PencilFactors>, rhs: MatRef<'_, f64>, transposed: bool) -> Result<Self, LyapunovError> {
        if rhs.nrows() != factors.dim() {
            return Err(LyapunovError::Dimension(format!(
                "right-hand side has {} rows, pencil order is {}",
                rhs.nrows(),
                factors.dim()
            )));
        }
        let f = factors.solve_c(rhs)?;
        Ok(Self {
            op: Operator::Pencil { factors, transposed },
            f,
        })
    }

    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn rhs(&self) -> MatRef<'_, f64> {
        self.f.as_ref()
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.op, Operator::Dense { .. })
    }

    /// `A x`
    pub fn apply(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>, LyapunovError> {
        match &self.op {
            Operator::Dense { a, .. } => Ok(a * x),
            Operator::Pencil { factors, transposed } => {
                let gx = sparse::mul(if *transposed { &factors.gt } else { &factors.g }, x);
                factors.solve_c(gx.as_ref())
            }
        }
    }

    /// `A^{-1} x`
    pub fn apply_inverse(&self, x: MatRef<'_, f64>) -> Result<Mat<f64>, LyapunovError> {
        let out = match &self.op {
            Operator::Dense { lu, .. } => lu.solve(x),
            Operator::Pencil { factors, transposed } => {
                let cx = sparse::mul(&factors.c, x);
                let solved = if *transposed {
                    factors.g_lu.solve_transpose(cx.as_ref())
                } else {
                    factors.g_lu.solve(cx.as_ref())
                };
                solved.map_err(|_| LyapunovError::Singular("A^-1"))?
            }
        };
        if (0..out.ncols()).all(|j| out.col(j).iter().all(|v| v.is_finite())) {
            Ok(out)
        } else {
            Err(LyapunovError::Singular("A^-1"))
        }
    }

    /// Gram operator `M x` of the problem's inner product.
    pub fn metric(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        match &self.op {
            Operator::Dense { .. } => x.to_owned(),
            Operator::Pencil { factors, .. } => sparse::mul(&factors.c, x),
        }
    }

    /// `M A x`, computed without the round trip through `C^{-1}` for pencils.
    pub fn metric_image(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        match &self.op {
            Operator::Dense { a, .. } => a * x,
            Operator::Pencil { factors, transposed } => {
                sparse::mul(if *transposed { &factors.gt } else { &factors.g }, x)
            }
        }
    }

    /// Forms `A` explicitly.
    pub fn dense_matrix(&self) -> Result<Mat<f64>, LyapunovError> {
        match &self.op {
            Operator::Dense { a, .. } => Ok(a.clone()),
            Operator::Pencil { factors, transposed } => {
                let g = sparse::to_dense(if *transposed { &factors.gt } else { &factors.g });
                factors.solve_c(g.as_ref())
            }
        }
    }
}
