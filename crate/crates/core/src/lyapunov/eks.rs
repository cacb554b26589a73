//! Extended Krylov subspace solver producing `P ≈ Z Z^T`.

use std::io::{self, Write};
use std::ops::Range;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};

use super::dense::{symmetrize, DenseSchur};
use super::{LyapunovError, LyapunovProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EksOptions {
    pub maxiter: usize,
    pub tol: f64,
    pub deflation_tol: f64,
}

impl Default for EksOptions {
    fn default() -> Self {
        Self {
            maxiter: 100,
            tol: 1e-8,
            deflation_tol: 1e-10,
        }
    }
}

impl EksOptions {
    pub fn validate(&self) -> Result<(), LyapunovError> {
        if self.maxiter == 0 {
            return Err(LyapunovError::InvalidOption("maxiter must be positive".into()));
        }
        for (name, v) in [("tol", self.tol), ("deflation_tol", self.deflation_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LyapunovError::InvalidOption(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpandOutcome {
    /// Number of columns appended.
    Grew(usize),
    /// Every candidate column deflated; the basis is invariant.
    Exhausted,
}

/// Low-rank Gramian factor `P ≈ Z Z^T`.
#[derive(Debug, Clone)]
pub struct LowRankFactor {
    pub z: Mat<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub basis_size: usize,
    pub residual_history: Vec<f64>,
}

impl LowRankFactor {
    pub fn rank(&self) -> usize {
        self.z.ncols()
    }

    pub fn gramian(&self) -> Mat<f64> {
        &self.z * self.z.transpose()
    }
}

/// Basis `K` (orthonormal in the problem's inner product) with cached
/// images, the projected equation and its solution.
pub struct EksState {
    basis: Mat<f64>,
    metric_basis: Option<Mat<f64>>,
    image: Mat<f64>,
    metric_image: Option<Mat<f64>>,
    fwd: Range<usize>,
    inv: Range<usize>,
    iteration: usize,
    a_small: Mat<f64>,
    r_small: Mat<f64>,
    x_small: Option<Mat<f64>>,
    residual_history: Vec<f64>,
    metric_rhs: Mat<f64>,
    rhs_scale: f64,
    deflation_tol: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl EksState {
    /// `K = Orth([F, A^{-1} F])`, iteration counter 1.
    pub fn init(problem: &LyapunovProblem, deflation_tol: f64) -> Result<Self, LyapunovError> {
        let n = problem.dim();
        let f = problem.rhs();
        let metric_rhs = problem.metric(f);
        let gram = f.transpose() * &metric_rhs;
        let rhs_scale = gram.norm_l2();
        if !(rhs_scale > 0.0) {
            return Err(LyapunovError::ZeroRhs);
        }
        let euclid = problem.is_euclidean();
        let mut state = Self {
            basis: Mat::zeros(n, 0),
            metric_basis: (!euclid).then(|| Mat::zeros(n, 0)),
            image: Mat::zeros(n, 0),
            metric_image: (!euclid).then(|| Mat::zeros(n, 0)),
            fwd: 0..0,
            inv: 0..0,
            iteration: 1,
            a_small: Mat::zeros(0, 0),
            r_small: Mat::zeros(0, f.ncols()),
            x_small: None,
            residual_history: Vec::new(),
            metric_rhs,
            rhs_scale,
            deflation_tol,
        };
        let finv = problem.apply_inverse(f)?;
        let p = f.ncols();
        let mut cand = Mat::zeros(n, 2 * p);
        cand.as_mut().subcols_mut(0, p).copy_from(f);
        cand.as_mut().subcols_mut(p, p).copy_from(&finv);
        state.append(problem, cand, p)?;
        Ok(state)
    }

    pub fn basis(&self) -> MatRef<'_, f64> {
        self.basis.as_ref()
    }

    pub fn basis_size(&self) -> usize {
        self.basis.ncols()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn a_small(&self) -> MatRef<'_, f64> {
        self.a_small.as_ref()
    }

    pub fn r_small(&self) -> MatRef<'_, f64> {
        self.r_small.as_ref()
    }

    pub fn x_small(&self) -> Option<MatRef<'_, f64>> {
        self.x_small.as_ref().map(|x| x.as_ref())
    }

    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    /// Widths of the forward and inverse parts of the newest block.
    pub fn last_block(&self) -> (usize, usize) {
        (self.fwd.len(), self.inv.len())
    }

    fn metric_basis(&self) -> MatRef<'_, f64> {
        self.metric_basis.as_ref().unwrap_or(&self.basis).as_ref()
    }

    fn metric_image(&self) -> MatRef<'_, f64> {
        self.metric_image.as_ref().unwrap_or(&self.image).as_ref()
    }

    /// Orthonormalizes `cand` against the basis and internally, appends the
    /// surviving columns and returns how many survived. The first `split`
    /// candidate columns form the forward part of the new block.
    fn append(&mut self, problem: &LyapunovProblem, mut cand: Mat<f64>, split: usize) -> Result<usize, LyapunovError> {
        let n = problem.dim();
        let k = self.basis.ncols();
        let pre_metric = problem.metric(cand.as_ref());
        let pre: Vec<f64> = (0..cand.ncols())
            .map(|c| dot(cand.col_as_slice(c), pre_metric.col_as_slice(c)).max(0.0).sqrt())
            .collect();
        if k > 0 {
            for _ in 0..2 {
                let coeff = self.metric_basis().transpose() * &cand;
                matmul(cand.as_mut(), Accum::Add, &self.basis, &coeff, -1.0, Par::Seq);
            }
        }
        let mut kept: Vec<Vec<f64>> = Vec::new();
        let mut kept_metric: Vec<Vec<f64>> = Vec::new();
        let mut n_fwd = 0;
        for c in 0..cand.ncols() {
            let mut v = cand.col_as_slice(c).to_vec();
            if !v.iter().all(|x| x.is_finite()) {
                return Err(LyapunovError::Singular("basis expansion"));
            }
            for _ in 0..2 {
                for (q, mq) in kept.iter().zip(&kept_metric) {
                    let h = dot(mq, &v);
                    v.iter_mut().zip(q).for_each(|(x, y)| *x -= h * y);
                }
            }
            let vm = Mat::from_fn(n, 1, |i, _| v[i]);
            let mut mv = problem.metric(vm.as_ref()).col_as_slice(0).to_vec();
            let norm = dot(&v, &mv).max(0.0).sqrt();
            if !(norm > self.deflation_tol * pre[c]) || norm == 0.0 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            mv.iter_mut().for_each(|x| *x /= norm);
            kept.push(v);
            kept_metric.push(mv);
            if c < split {
                n_fwd += 1;
            }
        }
        let added = kept.len();
        if added == 0 {
            return Ok(0);
        }
        let block = Mat::from_fn(n, added, |i, j| kept[j][i]);
        let image = problem.apply(block.as_ref())?;
        let total = k + added;
        self.basis.resize_with(n, total, |i, j| block[(i, j - k)]);
        if let Some(mb) = self.metric_basis.as_mut() {
            mb.resize_with(n, total, |i, j| kept_metric[j - k][i]);
        }
        if let Some(mi) = self.metric_image.as_mut() {
            let new = problem.metric_image(block.as_ref());
            mi.resize_with(n, total, |i, j| new[(i, j - k)]);
        }
        self.image.resize_with(n, total, |i, j| image[(i, j - k)]);
        self.fwd = k..k + n_fwd;
        self.inv = k + n_fwd..total;
        Ok(added)
    }

    /// Appends `Orth([A K_fwd, A^{-1} K_inv])` for the newest block.
    pub fn expand(&mut self, problem: &LyapunovProblem) -> Result<ExpandOutcome, LyapunovError> {
        let n = problem.dim();
        let fwd = self.image.as_ref().subcols(self.fwd.start, self.fwd.len()).to_owned();
        let inv = if self.inv.is_empty() {
            Mat::zeros(n, 0)
        } else {
            problem.apply_inverse(self.basis.as_ref().subcols(self.inv.start, self.inv.len()))?
        };
        let split = fwd.ncols();
        let mut cand = Mat::zeros(n, split + inv.ncols());
        cand.as_mut().subcols_mut(0, split).copy_from(&fwd);
        cand.as_mut().subcols_mut(split, inv.ncols()).copy_from(&inv);
        let added = if cand.ncols() == 0 { 0 } else { self.append(problem, cand, split)? };
        if added == 0 {
            self.fwd = self.basis.ncols()..self.basis.ncols();
            self.inv = self.fwd.clone();
            return Ok(ExpandOutcome::Exhausted);
        }
        self.iteration += 1;
        self.x_small = None;
        Ok(ExpandOutcome::Grew(added))
    }

    /// Projects onto the current basis and solves the small equation.
    pub fn solve_projected(&mut self, problem: &LyapunovProblem) -> Result<(), LyapunovError> {
        self.a_small = self.basis.transpose() * self.metric_image();
        self.r_small = self.basis.transpose() * &self.metric_rhs;
        let schur = DenseSchur::new(self.a_small.as_ref())?;
        if let Err(LyapunovError::NotHurwitz(eigenvalue)) = schur.check_hurwitz() {
            return Err(LyapunovError::ProjectedNotHurwitz {
                iteration: self.iteration,
                eigenvalue,
            });
        }
        let _ = problem;
        self.x_small = Some(schur.solve(self.r_small.as_ref()));
        Ok(())
    }

    /// Relative residual of `P_j = K X K^T`, measured in the problem's inner
    /// product, from `‖E‖² + 2‖W X‖²` with `W = A K - K A_small`.
    pub fn residual_norm(&self, problem: &LyapunovProblem) -> f64 {
        let Some(x) = &self.x_small else { return 1.0 };
        let a = &self.a_small;
        let ax = a * x;
        let e = &ax + ax.transpose() + &self.r_small * self.r_small.transpose();
        let mut w = self.image.clone();
        matmul(w.as_mut(), Accum::Add, &self.basis, a, -1.0, Par::Seq);
        let y = &w * x;
        let wx2 = if problem.is_euclidean() {
            y.squared_norm_l2()
        } else {
            let my = problem.metric(y.as_ref());
            (0..y.ncols()).map(|c| dot(y.col_as_slice(c), my.col_as_slice(c))).sum()
        };
        (e.squared_norm_l2() + 2.0 * wx2.max(0.0)).sqrt() / self.rhs_scale
    }

    fn record_residual(&mut self, r: f64) {
        self.residual_history.push(r);
    }

    /// `Z = K U Σ^{1/2}` from the eigendecomposition of `X_small`.
    pub fn extract_factor(&self) -> Result<Mat<f64>, LyapunovError> {
        let x = self
            .x_small
            .as_ref()
            .ok_or_else(|| LyapunovError::InvalidOption("no projected solution available".into()))?;
        factor_from(self.basis.as_ref(), x, self.deflation_tol)
    }

    pub fn write_residual_csv(&self, out: impl Write) -> io::Result<()> {
        write_residual_csv(&self.residual_history, out)
    }
}

pub fn write_residual_csv(history: &[f64], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "iteration,residual")?;
    for (i, r) in history.iter().enumerate() {
        writeln!(out, "{},{:e}", i + 1, r)?;
    }
    Ok(())
}

fn factor_from(basis: MatRef<'_, f64>, x: &Mat<f64>, deflation_tol: f64) -> Result<Mat<f64>, LyapunovError> {
    let mut xs = x.clone();
    symmetrize(&mut xs);
    let eig = xs
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| LyapunovError::InvalidOption("eigendecomposition of X failed".into()))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let k = s.nrows();
    let max = (0..k).map(|i| s[i]).fold(0.0f64, f64::max);
    let min = (0..k).map(|i| s[i]).fold(f64::INFINITY, f64::min);
    if max > 0.0 && min < -deflation_tol * max {
        return Err(LyapunovError::Indefinite { min, max });
    }
    // eigenvalues ascend; keep the significant ones, largest first
    let keep: Vec<usize> = (0..k).rev().filter(|&i| s[i] > deflation_tol * max && s[i] > 0.0).collect();
    let us = Mat::from_fn(k, keep.len(), |i, j| u[(i, keep[j])] * s[keep[j]].sqrt());
    Ok(basis * us)
}

pub fn solve_eks(problem: &LyapunovProblem, opts: &EksOptions) -> Result<LowRankFactor, LyapunovError> {
    opts.validate()?;
    let n = problem.dim();
    let mut state = match EksState::init(problem, opts.deflation_tol) {
        Ok(s) => s,
        Err(LyapunovError::ZeroRhs) => {
            return Ok(LowRankFactor {
                z: Mat::zeros(n, 0),
                residual: 0.0,
                iterations: 0,
                converged: true,
                basis_size: 0,
                residual_history: Vec::new(),
            })
        }
        Err(e) => return Err(e),
    };
    let mut best: Option<(f64, usize, Mat<f64>, usize)> = None;
    let mut converged = false;
    loop {
        state.solve_projected(problem)?;
        let res = state.residual_norm(problem);
        state.record_residual(res);
        if best.as_ref().is_none_or(|b| res < b.0) {
            best = Some((res, state.basis_size(), state.x_small.clone().unwrap(), state.iteration));
        }
        if res <= opts.tol {
            converged = true;
            break;
        }
        if state.iteration >= opts.maxiter || state.basis_size() >= n {
            break;
        }
        if state.expand(problem)? == ExpandOutcome::Exhausted {
            return Err(LyapunovError::BasisExhausted {
                iteration: state.iteration,
                residual: res,
            });
        }
    }
    let (residual, k, x, iterations) = best.unwrap();
    let z = factor_from(state.basis.as_ref().subcols(0, k), &x, opts.deflation_tol)?;
    Ok(LowRankFactor {
        z,
        residual,
        iterations,
        converged,
        basis_size: state.basis_size(),
        residual_history: state.residual_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::solve_dense;

    fn diag_problem(n: usize, f: Mat<f64>) -> LyapunovProblem {
        let a = Mat::from_fn(n, n, |i, j| if i == j { -((i + 1) as f64) } else { 0.0 });
        LyapunovProblem::dense(a, f).unwrap()
    }

    #[test]
    fn scalar_factor() {
        let p = LyapunovProblem::dense(Mat::from_fn(1, 1, |_, _| -1.0), Mat::from_fn(1, 1, |_, _| 2f64.sqrt())).unwrap();
        let z = solve_eks(&p, &EksOptions::default()).unwrap();
        assert!(z.converged);
        assert!((z.gramian()[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_projection_gives_basis() {
        let basis = Mat::from_fn(3, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let z = factor_from(basis.as_ref(), &Mat::identity(2, 2), 1e-10).unwrap();
        let zz = &z * z.transpose();
        let kk = &basis * basis.transpose();
        assert!((zz - kk).norm_l2() < 1e-15);
    }

    #[test]
    fn eigenvector_rhs_deflates() {
        let mut f = Mat::zeros(10, 1);
        f[(0, 0)] = 1.0;
        let p = diag_problem(10, f);
        let mut st = EksState::init(&p, 1e-10).unwrap();
        assert_eq!(st.basis_size(), 1);
        assert_eq!(st.expand(&p).unwrap(), ExpandOutcome::Exhausted);
        assert_eq!(st.basis_size(), 1);
        let z = solve_eks(&p, &EksOptions::default()).unwrap();
        assert!(z.converged);
        assert_eq!(z.iterations, 1);
        assert!((z.gramian()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn negative_identity_closed_form() {
        let n = 6;
        let f = Mat::from_fn(n, 2, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let p = LyapunovProblem::dense(-Mat::<f64>::identity(n, n), f.clone()).unwrap();
        let z = solve_eks(&p, &EksOptions::default()).unwrap();
        let want = &f * f.transpose() * faer::Scale(0.5);
        assert!((z.gramian() - &want).norm_l2() <= 1e-12 * want.norm_l2());
    }

    #[test]
    fn zero_state_residual_is_one() {
        let p = diag_problem(5, Mat::ones(5, 1));
        let st = EksState::init(&p, 1e-10).unwrap();
        assert_eq!(st.residual_norm(&p), 1.0);
    }

    #[test]
    fn diagonal_matches_dense() {
        let p = diag_problem(10, Mat::from_fn(10, 1, |i, _| 1.0 / (i + 1) as f64));
        let z = solve_eks(&p, &EksOptions::default()).unwrap();
        let dense = solve_dense(&p).unwrap();
        assert!(z.converged);
        assert!((z.gramian() - &dense).norm_l2() <= 1e-7 * dense.norm_l2());
    }

    #[test]
    fn residual_csv() {
        let mut buf = Vec::new();
        write_residual_csv(&[1.0, 0.5], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,residual\n1,1e0\n2,5e-1\n");
    }

    #[test]
    fn options_validated() {
        let bad = EksOptions { tol: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = EksOptions { maxiter: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
