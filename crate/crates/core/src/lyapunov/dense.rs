//! Bartels–Stewart solver on a real Schur form.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use nalgebra::DMatrix;

use super::{LyapunovError, LyapunovProblem};
use crate::sparse::c64;

pub const DEFAULT_DENSE_CUTOFF: usize = 5000;

/// Real Schur form `A = Q T Q^T` with `T` upper quasi-triangular.
#[derive(Debug, Clone)]
pub struct DenseSchur {
    q: Mat<f64>,
    t: Mat<f64>,
    /// Diagonal blocks as `(start, size)`, size 1 or 2.
    blocks: Vec<(usize, usize)>,
}

impl DenseSchur {
    pub fn new(a: MatRef<'_, f64>) -> Result<Self, LyapunovError> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(LyapunovError::Dimension("Schur form needs a square matrix".into()));
        }
        if n == 0 {
            return Ok(Self {
                q: Mat::zeros(0, 0),
                t: Mat::zeros(0, 0),
                blocks: Vec::new(),
            });
        }
        if (0..n).any(|j| a.col(j).iter().any(|v| !v.is_finite())) {
            return Err(LyapunovError::SchurFailed);
        }
        let m = DMatrix::from_fn(n, n, |i, j| a[(i, j)]);
        let schur = nalgebra::linalg::Schur::try_new(m, f64::EPSILON, 0).ok_or(LyapunovError::SchurFailed)?;
        let (qn, tn) = schur.unpack();
        let q = Mat::from_fn(n, n, |i, j| qn[(i, j)]);
        let t = Mat::from_fn(n, n, |i, j| if i > j + 1 { 0.0 } else { tn[(i, j)] });
        let mut blocks = Vec::new();
        let mut i = 0;
        while i < n {
            if i + 1 < n && t[(i + 1, i)] != 0.0 {
                blocks.push((i, 2));
                i += 2;
            } else {
                blocks.push((i, 1));
                i += 1;
            }
        }
        let mut out = Self { q, t, blocks };
        // A 2x2 block must not chain into the next one.
        for &(s, b) in &out.blocks {
            if b == 2 && s + 2 < n {
                out.t[(s + 2, s + 1)] = 0.0;
            }
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    pub fn q(&self) -> MatRef<'_, f64> {
        self.q.as_ref()
    }

    pub fn t(&self) -> MatRef<'_, f64> {
        self.t.as_ref()
    }

    pub fn eigenvalues(&self) -> Vec<c64> {
        let t = &self.t;
        let mut out = Vec::with_capacity(self.dim());
        for &(s, b) in &self.blocks {
            if b == 1 {
                out.push(c64::new(t[(s, s)], 0.0));
            } else {
                let (a, bb, c, d) = (t[(s, s)], t[(s, s + 1)], t[(s + 1, s)], t[(s + 1, s + 1)]);
                let half_tr = 0.5 * (a + d);
                let disc = 0.25 * (a - d) * (a - d) + bb * c;
                if disc >= 0.0 {
                    let r = disc.sqrt();
                    out.push(c64::new(half_tr + r, 0.0));
                    out.push(c64::new(half_tr - r, 0.0));
                } else {
                    let r = (-disc).sqrt();
                    out.push(c64::new(half_tr, r));
                    out.push(c64::new(half_tr, -r));
                }
            }
        }
        out
    }

    pub fn check_hurwitz(&self) -> Result<(), LyapunovError> {
        let t = &self.t;
        for &(s, b) in &self.blocks {
            let stable = if b == 1 {
                t[(s, s)] < 0.0
            } else {
                let tr = t[(s, s)] + t[(s + 1, s + 1)];
                let det = t[(s, s)] * t[(s + 1, s + 1)] - t[(s, s + 1)] * t[(s + 1, s)];
                tr < 0.0 && det > 0.0
            };
            if !stable {
                let ev = DenseSchur {
                    q: Mat::zeros(0, 0),
                    t: t.as_ref().submatrix(s, s, b, b).to_owned(),
                    blocks: vec![(0, b)],
                }
                .eigenvalues();
                let worst = ev.into_iter().max_by(|x, y| x.re.total_cmp(&y.re)).unwrap();
                return Err(LyapunovError::NotHurwitz(worst));
            }
        }
        Ok(())
    }

    /// Schur form of `A^T`, obtained by reversing the order of `T^T`.
    pub fn transposed(&self) -> DenseSchur {
        let n = self.dim();
        let q = Mat::from_fn(n, n, |i, j| self.q[(i, n - 1 - j)]);
        let t = Mat::from_fn(n, n, |i, k| self.t[(n - 1 - k, n - 1 - i)]);
        let blocks = self.blocks.iter().rev().map(|&(s, b)| (n - s - b, b)).collect();
        DenseSchur { q, t, blocks }
    }

    /// Solves `A P + P A^T = -F F^T`. Stability is the caller's responsibility.
    pub fn solve(&self, f: MatRef<'_, f64>) -> Mat<f64> {
        let n = self.dim();
        let qf = self.q.transpose() * f;
        let w = &qf * qf.transpose();
        let x = solve_quasi_triangular(self.t.as_ref(), &self.blocks, w.as_ref());
        let mut p = Mat::zeros(n, n);
        let qx = &self.q * &x;
        matmul(p.as_mut(), Accum::Replace, &qx, self.q.transpose(), 1.0, Par::Seq);
        symmetrize(&mut p);
        p
    }
}

pub(crate) fn symmetrize(p: &mut Mat<f64>) {
    let n = p.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// `T X + X T^T = -W` for symmetric `W`, column blocks from last to first.
fn solve_quasi_triangular(t: MatRef<'_, f64>, blocks: &[(usize, usize)], w: MatRef<'_, f64>) -> Mat<f64> {
    let n = t.nrows();
    let mut x = Mat::<f64>::zeros(n, n);
    for jb in (0..blocks.len()).rev() {
        let (j0, bj) = blocks[jb];
        let j1 = j0 + bj;
        let mut rhs = Mat::<f64>::from_fn(j1, bj, |i, c| -w[(i, j0 + c)]);
        if j1 < n {
            let tail = n - j1;
            matmul(
                rhs.as_mut(),
                Accum::Add,
                x.as_ref().submatrix(0, j1, j1, tail),
                t.submatrix(j0, j1, bj, tail).transpose(),
                -1.0,
                Par::Seq,
            );
            matmul(
                rhs.as_mut(),
                Accum::Add,
                t.submatrix(0, j1, j1, tail),
                x.as_ref().submatrix(j1, j0, tail, bj),
                -1.0,
                Par::Seq,
            );
        }
        let tjj = t.submatrix(j0, j0, bj, bj);
        for ib in (0..=jb).rev() {
            let (i0, bi) = blocks[ib];
            let tii = t.submatrix(i0, i0, bi, bi);
            let y = small_sylvester(tii, tjj, rhs.as_ref().submatrix(i0, 0, bi, bj));
            for c in 0..bj {
                for r in 0..bi {
                    x[(i0 + r, j0 + c)] = y[r + bi * c];
                }
                // rhs[0..i0, c] -= T[0..i0, i0..i0+bi] y[:, c]
                let col = rhs.col_as_slice_mut(c);
                for r in 0..bi {
                    let yv = y[r + bi * c];
                    if yv == 0.0 {
                        continue;
                    }
                    let tcol = t.col(i0 + r);
                    for (k, dst) in col[..i0].iter_mut().enumerate() {
                        *dst -= tcol[k] * yv;
                    }
                }
            }
        }
        for c in 0..bj {
            for i in 0..j0 {
                let v = x[(i, j0 + c)];
                x[(j0 + c, i)] = v;
            }
        }
    }
    symmetrize(&mut x);
    x
}

/// `A Y + Y B^T = R` for blocks of order at most 2, by Gaussian elimination
/// on the Kronecker form `(I ⊗ A + B ⊗ I) vec(Y) = vec(R)`. Returns `vec(Y)`.
fn small_sylvester(a: MatRef<'_, f64>, b: MatRef<'_, f64>, r: MatRef<'_, f64>) -> [f64; 4] {
    let (na, nb) = (a.nrows(), b.nrows());
    let dim = na * nb;
    let mut k = [[0.0f64; 5]; 4];
    for cb in 0..nb {
        for ca in 0..na {
            let row = ca + na * cb;
            for cb2 in 0..nb {
                for ca2 in 0..na {
                    let col = ca2 + na * cb2;
                    let mut v = 0.0;
                    if cb == cb2 {
                        v += a[(ca, ca2)];
                    }
                    if ca == ca2 {
                        v += b[(cb, cb2)];
                    }
                    k[row][col] = v;
                }
            }
            k[row][4] = r[(ca, cb)];
        }
    }
    for col in 0..dim {
        let piv = (col..dim)
            .max_by(|&i, &j| k[i][col].abs().total_cmp(&k[j][col].abs()))
            .unwrap();
        k.swap(col, piv);
        let d = k[col][col];
        for row in col + 1..dim {
            let factor = k[row][col] / d;
            if factor != 0.0 {
                for c in col..dim {
                    k[row][c] -= factor * k[col][c];
                }
                k[row][4] -= factor * k[col][4];
            }
        }
    }
    let mut y = [0.0f64; 4];
    for row in (0..dim).rev() {
        let mut s = k[row][4];
        for c in row + 1..dim {
            s -= k[row][c] * y[c];
        }
        y[row] = s / k[row][row];
    }
    y
}

pub fn solve_dense(problem: &LyapunovProblem) -> Result<Mat<f64>, LyapunovError> {
    solve_dense_with_cutoff(problem, DEFAULT_DENSE_CUTOFF)
}

pub fn solve_dense_with_cutoff(problem: &LyapunovProblem, cutoff: usize) -> Result<Mat<f64>, LyapunovError> {
    let n = problem.dim();
    if n > cutoff {
        return Err(LyapunovError::DenseCutoffExceeded { n, cutoff });
    }
    let a = problem.dense_matrix()?;
    let schur = DenseSchur::new(a.as_ref())?;
    schur.check_hurwitz()?;
    Ok(schur.solve(problem.rhs()))
}

/// `‖A P + P A^T + F F^T‖_F / ‖F F^T‖_F`
pub fn relative_residual(a: MatRef<'_, f64>, p: MatRef<'_, f64>, f: MatRef<'_, f64>) -> f64 {
    let fft = f * f.transpose();
    let ap = a * p;
    let r = &ap + ap.transpose() + &fft;
    r.norm_l2() / fft.norm_l2()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Mat<f64> {
        Mat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn scalar_balance() {
        let p = LyapunovProblem::dense(mat(&[&[-1.0]]), mat(&[&[2f64.sqrt()]])).unwrap();
        let x = solve_dense(&p).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_identity() {
        let a = -Mat::<f64>::identity(3, 3);
        let p = LyapunovProblem::dense(a, Mat::identity(3, 3)).unwrap();
        let x = solve_dense(&p).unwrap();
        assert!((x - Mat::<f64>::identity(3, 3) * faer::Scale(0.5)).norm_l2() < 1e-15);
    }

    #[test]
    fn unstable_rejected() {
        let a = mat(&[&[-1.0, 3.0], &[0.0, 0.5]]);
        let p = LyapunovProblem::dense(a, mat(&[&[1.0], &[1.0]])).unwrap();
        assert!(matches!(solve_dense(&p), Err(LyapunovError::NotHurwitz(ev)) if ev.re == 0.5));
        // complex pair on the imaginary axis
        let a = mat(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        let p = LyapunovProblem::dense(a, mat(&[&[1.0], &[1.0]])).unwrap();
        assert!(matches!(solve_dense(&p), Err(LyapunovError::NotHurwitz(_))));
    }

    #[test]
    fn cutoff() {
        let p = LyapunovProblem::dense(-Mat::<f64>::identity(4, 4), Mat::ones(4, 1)).unwrap();
        assert_eq!(
            solve_dense_with_cutoff(&p, 3).unwrap_err(),
            LyapunovError::DenseCutoffExceeded { n: 4, cutoff: 3 }
        );
    }

    #[test]
    fn complex_pairs_and_transpose() {
        let a = mat(&[
            &[-1.0, 4.0, 0.3, 0.0],
            &[-4.0, -1.0, 0.0, 0.2],
            &[0.1, 0.0, -2.0, 1.5],
            &[0.0, 0.5, -3.0, -0.5],
        ]);
        let f = mat(&[&[1.0, 0.0], &[0.5, 1.0], &[-0.3, 0.2], &[0.0, 1.0]]);
        let schur = DenseSchur::new(a.as_ref()).unwrap();
        schur.check_hurwitz().unwrap();
        let p = schur.solve(f.as_ref());
        assert!(relative_residual(a.as_ref(), p.as_ref(), f.as_ref()) < 1e-13);
        let tr = schur.transposed();
        let back = tr.q() * tr.t() * tr.q().transpose();
        assert!((back - a.transpose()).norm_l2() < 1e-12);
        let q = tr.solve(f.as_ref());
        assert!(relative_residual(a.transpose(), q.as_ref(), f.as_ref()) < 1e-13);
    }
}
