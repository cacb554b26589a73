#![allow(dead_code)]

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rlck_mor::analysis::Descriptor;
use rlck_mor::mna::StateSpaceModel;
use rlck_mor::sparse::{self, c64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_ish(rng: &mut ChaCha8Rng) -> f64 {
    // sum of uniforms, mean 0, variance 1
    (0..4).map(|_| rng.gen::<f64>()).sum::<f64>() * 3f64.sqrt() - 2.0 * 3f64.sqrt()
}

pub fn random_mat(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Mat<f64> {
    Mat::from_fn(n, k, |_, _| gaussian_ish(rng))
}

/// `S - (R R^T / n + δ I)` with `S` skew: the symmetric part is negative
/// definite, so every eigenvalue lies in the open left half plane.
pub fn random_hurwitz(rng: &mut ChaCha8Rng, n: usize) -> Mat<f64> {
    let r = random_mat(rng, n, n);
    let w = random_mat(rng, n, n);
    let rrt = &r * r.transpose() * (1.0 / n as f64);
    let delta = 0.05 + rng.gen::<f64>();
    Mat::from_fn(n, n, |i, j| {
        let skew = 0.5 * (w[(i, j)] - w[(j, i)]);
        skew - rrt[(i, j)] - if i == j { delta } else { 0.0 }
    })
}

/// Solves `A P + P A^T = -F F^T` through the `n² × n²` Kronecker system
/// `(I ⊗ A + A ⊗ I) vec(P) = -vec(F F^T)`.
pub fn kron_lyapunov(a: MatRef<'_, f64>, f: MatRef<'_, f64>) -> Mat<f64> {
    let n = a.nrows();
    let mut k = Mat::<f64>::zeros(n * n, n * n);
    for j in 0..n {
        for i in 0..n {
            let row = i + j * n;
            for m in 0..n {
                // (I ⊗ A): P[m, j] contributes A[i, m]
                k[(row, m + j * n)] += a[(i, m)];
                // (A ⊗ I): P[i, m] contributes A[j, m]
                k[(row, i + m * n)] += a[(j, m)];
            }
        }
    }
    let fft = f * f.transpose();
    let rhs = Mat::from_fn(n * n, 1, |r, _| -fft[(r % n, r / n)]);
    let x = k.partial_piv_lu().solve(&rhs);
    Mat::from_fn(n, n, |i, j| x[(i + j * n, 0)])
}

pub fn rel_fro(a: MatRef<'_, f64>, reference: MatRef<'_, f64>) -> f64 {
    (a - reference).norm_l2() / reference.norm_l2()
}

/// Descriptor model with diagonal `C` and a random sparse `G` whose
/// symmetric part is negative definite.
pub fn random_sparse_model(rng: &mut ChaCha8Rng, n: usize, p: usize, degree: usize) -> StateSpaceModel {
    let mut g = sparse::Accumulator::new(n, n);
    for i in 0..n {
        g.add(i, i, -(0.1 + rng.gen::<f64>()));
        for _ in 0..degree {
            let j = rng.gen_range(0..n);
            if j == i {
                continue;
            }
            // graph Laplacian edge keeps the symmetric part negative semidefinite
            let w = rng.gen::<f64>();
            g.add(i, i, -w);
            g.add(j, j, -w);
            g.add(i, j, w);
            g.add(j, i, w);
            let s = 2.0 * gaussian_ish(rng);
            g.add(i, j, s);
            g.add(j, i, -s);
        }
    }
    let c = sparse::from_triplets(n, n, (0..n).map(|i| (i, i, 0.5 + 1.5 * rng.gen::<f64>())).collect::<Vec<_>>());
    let b = sparse::from_dense(random_mat(rng, n, p).as_ref());
    let l = sparse::from_dense(random_mat(rng, p, n).as_ref());
    StateSpaceModel::new(c, g.build(), b, l)
}

/// Small dense model with diagonal `C` and `q` outputs.
pub fn random_dense_model(rng: &mut ChaCha8Rng, n: usize, p: usize, q: usize) -> StateSpaceModel {
    let a = random_hurwitz(rng, n);
    let cdiag: Vec<f64> = (0..n).map(|_| 0.5 + rng.gen::<f64>()).collect();
    // G = C A keeps C^{-1} G = A Hurwitz
    let g = Mat::from_fn(n, n, |i, j| cdiag[i] * a[(i, j)]);
    let c = sparse::from_triplets(n, n, (0..n).map(|i| (i, i, cdiag[i])).collect::<Vec<_>>());
    StateSpaceModel::new(
        c,
        sparse::from_dense(g.as_ref()),
        sparse::from_dense(random_mat(rng, n, p).as_ref()),
        sparse::from_dense(random_mat(rng, q, n).as_ref()),
    )
}

pub fn log_space(start: f64, stop: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| start * (stop / start).powf(k as f64 / (n - 1) as f64))
        .collect()
}

pub fn spectral_norm(a: MatRef<'_, c64>) -> f64 {
    a.singular_values().unwrap().into_iter().fold(0.0, f64::max)
}

/// `max_ω ‖H(jω) - H̃(jω)‖₂` over the given angular frequencies.
pub fn hinf_error<A: Descriptor + ?Sized, B: Descriptor + ?Sized>(a: &A, b: &B, omegas: &[f64]) -> f64 {
    omegas
        .iter()
        .map(|&w| {
            let s = c64::new(0.0, w);
            let d = a.transfer_function(s).unwrap() - b.transfer_function(s).unwrap();
            spectral_norm(d.as_ref())
        })
        .fold(0.0, f64::max)
}

/// Largest entry-wise relative difference of two complex matrices.
pub fn max_rel(a: MatRef<'_, c64>, reference: MatRef<'_, c64>) -> f64 {
    let scale = (0..reference.ncols())
        .flat_map(|j| reference.col(j).iter().map(|v| v.norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - reference[(i, j)]).norm() / scale);
        }
    }
    worst
}
