//! Small helpers around faer's sparse column-major matrices.

use std::collections::BTreeMap;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::matmul::sparse_dense_matmul;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Accum, Mat, MatRef, Par};

pub type SparseMat = SparseColMat<usize, f64>;
pub use faer::c64;

/// Accumulates entries in a fixed order so repeated stamps sum deterministically.
#[derive(Debug, Clone, Default)]
pub struct Accumulator {
    nrows: usize,
    ncols: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl Accumulator {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        assert!(row < self.nrows && col < self.ncols, "entry ({row}, {col}) out of bounds");
        *self.entries.entry((col, row)).or_insert(0.0) += value;
    }

    pub fn build(&self) -> SparseMat {
        let triplets: Vec<_> = self
            .entries
            .iter()
            .map(|(&(col, row), &val)| Triplet::new(row, col, val))
            .collect();
        SparseMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .expect("accumulator entries are unique and in bounds")
    }
}

pub fn from_triplets(nrows: usize, ncols: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> SparseMat {
    let mut acc = Accumulator::new(nrows, ncols);
    for (r, c, v) in entries {
        acc.add(r, c, v);
    }
    acc.build()
}

pub fn entries(a: &SparseMat) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    a.triplet_iter().map(|t| (t.row, t.col, *t.val))
}

pub fn from_dense(a: MatRef<'_, f64>) -> SparseMat {
    let mut acc = Accumulator::new(a.nrows(), a.ncols());
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if a[(i, j)] != 0.0 {
                acc.add(i, j, a[(i, j)]);
            }
        }
    }
    acc.build()
}

pub fn to_dense(a: &SparseMat) -> Mat<f64> {
    let mut out = Mat::zeros(a.nrows(), a.ncols());
    for (i, j, v) in entries(a) {
        out[(i, j)] += v;
    }
    out
}

pub fn transpose(a: &SparseMat) -> SparseMat {
    from_triplets(a.ncols(), a.nrows(), entries(a).map(|(i, j, v)| (j, i, v)))
}

pub fn identity(n: usize) -> SparseMat {
    from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)))
}

/// `A * X` for sparse `A` and dense `X`.
pub fn mul(a: &SparseMat, x: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(a.nrows(), x.ncols());
    sparse_dense_matmul(out.as_mut(), Accum::Replace, a.as_ref(), x, 1.0, Par::Seq);
    out
}

/// Exact structural and numerical symmetry check with a relative tolerance.
pub fn is_symmetric(a: &SparseMat, rel_tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let scale = entries(a).fold(0.0f64, |m, (_, _, v)| m.max(v.abs()));
    let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, j, v) in entries(a) {
        *map.entry((i, j)).or_insert(0.0) += v;
    }
    map.iter().all(|(&(i, j), &v)| {
        let w = map.get(&(j, i)).copied().unwrap_or(0.0);
        (v - w).abs() <= rel_tol * scale
    })
}

pub fn max_abs(a: &SparseMat) -> f64 {
    entries(a).fold(0.0, |m, (_, _, v)| m.max(v.abs()))
}

/// Sparse LU that reports singular or non-finite solves as errors.
pub struct SparseLu {
    lu: Lu<usize, f64>,
    n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularMatrix;

impl SparseLu {
    pub fn new(a: &SparseMat) -> Result<Self, SingularMatrix> {
        let lu = a.sp_lu().map_err(|_| SingularMatrix)?;
        let out = Self { lu, n: a.nrows() };
        // Cheap numerical-singularity probe: a solve against ones must stay finite.
        out.solve(Mat::<f64>::ones(out.n, 1).as_ref())?;
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Result<Mat<f64>, SingularMatrix> {
        finite(self.lu.solve(rhs))
    }

    pub fn solve_transpose(&self, rhs: MatRef<'_, f64>) -> Result<Mat<f64>, SingularMatrix> {
        finite(self.lu.solve_transpose(rhs))
    }
}

fn finite(x: Mat<f64>) -> Result<Mat<f64>, SingularMatrix> {
    let ok = (0..x.ncols()).all(|j| x.col(j).iter().all(|v| v.is_finite()));
    if ok {
        Ok(x)
    } else {
        Err(SingularMatrix)
    }
}

/// Complex sparse LU for frequency-domain solves.
pub fn complex_solve(
    nrows: usize,
    entries: &[(usize, usize, c64)],
    rhs: MatRef<'_, c64>,
) -> Result<Mat<c64>, SingularMatrix> {
    let mut map: BTreeMap<(usize, usize), c64> = BTreeMap::new();
    for &(i, j, v) in entries {
        *map.entry((j, i)).or_insert(c64::new(0.0, 0.0)) += v;
    }
    let triplets: Vec<_> = map
        .iter()
        .map(|(&(j, i), &v)| Triplet::new(i, j, v))
        .collect();
    let a = SparseColMat::<usize, c64>::try_new_from_triplets(nrows, nrows, &triplets)
        .map_err(|_| SingularMatrix)?;
    let lu = a.sp_lu().map_err(|_| SingularMatrix)?;
    let x = lu.solve(rhs);
    let ok = (0..x.ncols()).all(|j| x.col(j).iter().all(|v| v.re.is_finite() && v.im.is_finite()));
    if ok {
        Ok(x)
    } else {
        Err(SingularMatrix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulate_and_multiply() {
        let a = from_triplets(2, 2, [(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0), (1, 1, 4.0)]);
        let d = to_dense(&a);
        assert_eq!(d[(0, 0)], 3.0);
        assert_eq!(d[(1, 0)], -1.0);
        let x = Mat::from_fn(2, 1, |i, _| (i + 1) as f64);
        let y = mul(&a, x.as_ref());
        assert_eq!((y[(0, 0)], y[(1, 0)]), (3.0, 7.0));
        let t = to_dense(&transpose(&a));
        assert_eq!(t[(0, 1)], -1.0);
        assert!(!is_symmetric(&a, 0.0));
    }

    #[test]
    fn singular_lu_is_reported() {
        let a = from_triplets(2, 2, [(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(SparseLu::new(&a).is_err());
        let b = from_triplets(2, 2, [(0, 0, 2.0), (1, 1, 4.0)]);
        let lu = SparseLu::new(&b).unwrap();
        let x = lu.solve(Mat::<f64>::ones(2, 1).as_ref()).unwrap();
        assert_eq!(x[(1, 0)], 0.25);
    }
}
