//! Square-root balanced truncation.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use faer::{Mat, MatRef, Side};
use thiserror::Error;

use crate::lyapunov::{
    relative_residual, solve_eks, DenseSchur, EksOptions, LowRankFactor, LyapunovError, LyapunovProblem,
    PencilFactors, DEFAULT_DENSE_CUTOFF,
};
use crate::mna::StateSpaceModel;
use crate::mtx::write_dense_mtx;
use crate::sparse::{self, SparseLu};

/// Hankel values below this fraction of `σ₁` make the balancing transform unreliable.
pub const MIN_SIGMA_RATIO: f64 = 1e-14;
pub const BIORTHOGONALITY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum BtError {
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error("Z_Q^T Z_P is zero: the model is unreachable or unobservable from its ports")]
    EmptySpectrum,
    #[error("sigma_{r} = {sigma_r:e} is below {MIN_SIGMA_RATIO:e} * sigma_1 = {sigma_1:e}; choose an order of at most {suggested}")]
    IllConditioned {
        r: usize,
        sigma_r: f64,
        sigma_1: f64,
        suggested: usize,
    },
    #[error("balancing transform is not biorthogonal: max |T Tinv - I| = {0:e}")]
    Biorthogonality(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("C is singular")]
    SingularC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionMode {
    Dense,
    LowRank,
    Auto,
}

impl fmt::Display for ReductionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReductionMode::Dense => "dense",
            ReductionMode::LowRank => "lowrank",
            ReductionMode::Auto => "auto",
        })
    }
}

impl std::str::FromStr for ReductionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dense" => Ok(Self::Dense),
            "lowrank" => Ok(Self::LowRank),
            "auto" => Ok(Self::Auto),
            _ => Err(format!("unknown mode `{s}` (expected dense, lowrank or auto)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderRule {
    Order(usize),
    /// Truncate while `2 Σ_{i>r} σ_i ≤ ε`.
    Epsilon(f64),
}

impl fmt::Display for OrderRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderRule::Order(r) => write!(f, "rom_order={r}"),
            OrderRule::Epsilon(e) => write!(f, "epsilon={e:e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionConfig {
    pub mode: ReductionMode,
    pub order_rule: OrderRule,
    pub dense_cutoff: usize,
    pub eks: EksOptions,
}

impl ReductionConfig {
    pub fn new(order_rule: OrderRule) -> Self {
        Self {
            mode: ReductionMode::Auto,
            order_rule,
            dense_cutoff: DEFAULT_DENSE_CUTOFF,
            eks: EksOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BtError> {
        match self.order_rule {
            OrderRule::Order(0) => return Err(BtError::Config("rom_order must be at least 1".into())),
            OrderRule::Epsilon(e) if !(e > 0.0) => {
                return Err(BtError::Config(format!("epsilon must be positive, got {e}")))
            }
            _ => {}
        }
        self.eks.validate()?;
        Ok(())
    }

    /// Dense or low-rank, with `Auto` resolved against the model order.
    pub fn resolve_mode(&self, n: usize) -> ReductionMode {
        match self.mode {
            ReductionMode::Auto if n > self.dense_cutoff => ReductionMode::LowRank,
            ReductionMode::Auto => ReductionMode::Dense,
            m => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HankelSpectrum {
    pub sigma: Vec<f64>,
}

impl HankelSpectrum {
    pub fn count(&self) -> usize {
        self.sigma.len()
    }

    /// `Σ_{i>r} σ_i`, summed from the smallest value up.
    pub fn tail(&self, r: usize) -> f64 {
        self.sigma.iter().skip(r).rev().fold(0.0, |acc, s| acc + s)
    }
}

#[derive(Debug, Clone)]
pub struct BalancingTransform {
    /// `r × N`
    pub t: Mat<f64>,
    /// `N × r`
    pub tinv: Mat<f64>,
}

#[derive(Debug, Clone)]
pub struct GramianFactors {
    pub p: LowRankFactor,
    pub q: LowRankFactor,
    /// `Dense` or `LowRank`, never `Auto`.
    pub mode: ReductionMode,
}

#[derive(Debug, Clone, Default)]
pub struct RomProvenance {
    pub original_order: usize,
    pub rom_order: usize,
    pub mode: String,
    pub order_rule: String,
    pub eks_iterations: (usize, usize),
    pub residuals: (f64, f64),
    pub converged: bool,
    pub wall_time_s: f64,
    pub peak_basis: (usize, usize),
    pub peak_mem_estimate: u64,
    pub biorthogonality: f64,
    pub regularized_nodes: usize,
}

impl RomProvenance {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "original_order={}", self.original_order);
        let _ = writeln!(s, "rom_order={}", self.rom_order);
        let _ = writeln!(s, "mode={}", self.mode);
        let _ = writeln!(s, "order_rule={}", self.order_rule);
        let _ = writeln!(s, "eks_iterations={},{}", self.eks_iterations.0, self.eks_iterations.1);
        let _ = writeln!(s, "residuals={:e},{:e}", self.residuals.0, self.residuals.1);
        let _ = writeln!(s, "converged={}", self.converged);
        let _ = writeln!(s, "wall_time_s={:.6}", self.wall_time_s);
        let _ = writeln!(s, "peak_basis={},{}", self.peak_basis.0, self.peak_basis.1);
        let _ = writeln!(s, "peak_mem_estimate={}", self.peak_mem_estimate);
        let _ = writeln!(s, "biorthogonality={:e}", self.biorthogonality);
        let _ = writeln!(s, "regularized_nodes={}", self.regularized_nodes);
        s
    }
}

/// Reduced descriptor system `Ct x' = Gt x + Bt u`, `y = Lt x`.
#[derive(Debug, Clone)]
pub struct Rom {
    pub gt: Mat<f64>,
    pub ct: Mat<f64>,
    pub bt: Mat<f64>,
    pub lt: Mat<f64>,
    pub spectrum: HankelSpectrum,
    pub transform: BalancingTransform,
    pub provenance: RomProvenance,
}

impl Rom {
    pub fn order(&self) -> usize {
        self.gt.nrows()
    }

    pub fn reduction_pct(&self) -> f64 {
        let n = self.provenance.original_order as f64;
        (1.0 - self.order() as f64 / n) * 100.0
    }

    /// Writes `Gt.mtx`, `Ct.mtx`, `Bt.mtx`, `Lt.mtx` and `provenance.txt`.
    pub fn export(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        write_dense_mtx(&dir.join("Gt.mtx"), self.gt.as_ref())?;
        write_dense_mtx(&dir.join("Ct.mtx"), self.ct.as_ref())?;
        write_dense_mtx(&dir.join("Bt.mtx"), self.bt.as_ref())?;
        write_dense_mtx(&dir.join("Lt.mtx"), self.lt.as_ref())?;
        fs::write(dir.join("provenance.txt"), self.provenance.to_text())
    }
}

/// Square-root factor `Z = U Σ^{1/2}` of a symmetric PSD matrix; negative
/// round-off eigenvalues are clamped to zero and zero columns dropped.
pub fn psd_factor(p: MatRef<'_, f64>) -> Result<Mat<f64>, BtError> {
    let eig = p
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| BtError::Config("Gramian eigendecomposition failed".into()))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let keep: Vec<usize> = (0..s.nrows()).rev().filter(|&i| s[i] > 0.0).collect();
    Ok(Mat::from_fn(p.nrows(), keep.len(), |i, j| u[(i, keep[j])] * s[keep[j]].sqrt()))
}

pub fn gramian_factors(model: &StateSpaceModel, cfg: &ReductionConfig) -> Result<GramianFactors, BtError> {
    cfg.validate()?;
    let n = model.order();
    if model.inputs() == 0 || model.outputs() == 0 {
        return Err(BtError::Config("model has no ports".into()));
    }
    let factors = Arc::new(PencilFactors::new(&model.c, &model.g)?);
    let b = sparse::to_dense(&model.b);
    let lt = sparse::to_dense(&sparse::transpose(&model.l));
    let mode = cfg.resolve_mode(n);
    match mode {
        ReductionMode::Dense => {
            if n > cfg.dense_cutoff {
                return Err(LyapunovError::DenseCutoffExceeded {
                    n,
                    cutoff: cfg.dense_cutoff,
                }
                .into());
            }
            let a = factors.solve_c(sparse::to_dense(&model.g).as_ref())?;
            let fb = factors.solve_c(b.as_ref())?;
            let schur = DenseSchur::new(a.as_ref())?;
            schur.check_hurwitz()?;
            let dual = schur.transposed();
            let (p, q) = std::thread::scope(|s| {
                let job = s.spawn(|| schur.solve(fb.as_ref()));
                let q = dual.solve(lt.as_ref());
                (job.join().expect("Gramian job panicked"), q)
            });
            let rp = relative_residual(a.as_ref(), p.as_ref(), fb.as_ref());
            let rq = relative_residual(a.transpose(), q.as_ref(), lt.as_ref());
            let wrap = |g: &Mat<f64>, residual: f64| -> Result<LowRankFactor, BtError> {
                Ok(LowRankFactor {
                    z: psd_factor(g.as_ref())?,
                    residual,
                    iterations: 0,
                    converged: true,
                    basis_size: n,
                    residual_history: Vec::new(),
                })
            };
            Ok(GramianFactors {
                p: wrap(&p, rp)?,
                q: wrap(&q, rq)?,
                mode,
            })
        }
        _ => {
            let pp = LyapunovProblem::pencil(factors.clone(), b.as_ref(), false)?;
            let pq = LyapunovProblem::pencil(factors.clone(), lt.as_ref(), true)?;
            let (p, y) = std::thread::scope(|s| {
                let job = s.spawn(|| solve_eks(&pp, &cfg.eks));
                let y = solve_eks(&pq, &cfg.eks);
                (job.join().expect("Gramian job panicked"), y)
            });
            let p = p?;
            let mut q = y?;
            // Observability Gramian Q = C Y C from the dual solution.
            q.z = sparse::mul(factors.c(), q.z.as_ref());
            Ok(GramianFactors { p, q, mode })
        }
    }
}

/// Thin SVD of `Z_Q^T Z_P = U Σ V^T`, singular values descending.
pub fn balance_svd(zp: MatRef<'_, f64>, zq: MatRef<'_, f64>) -> Result<(Mat<f64>, HankelSpectrum, Mat<f64>), BtError> {
    if zp.nrows() != zq.nrows() {
        return Err(BtError::Config(format!(
            "factor row counts differ: {} vs {}",
            zp.nrows(),
            zq.nrows()
        )));
    }
    if zp.ncols() == 0 || zq.ncols() == 0 {
        return Err(BtError::EmptySpectrum);
    }
    let m = zq.transpose() * zp;
    if m.norm_max() == 0.0 {
        return Err(BtError::EmptySpectrum);
    }
    let svd = m.thin_svd().map_err(|_| BtError::Config("SVD did not converge".into()))?;
    let s = svd.S().column_vector();
    let mut order: Vec<usize> = (0..s.nrows()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let u = Mat::from_fn(m.nrows(), order.len(), |i, j| svd.U()[(i, order[j])]);
    let v = Mat::from_fn(m.ncols(), order.len(), |i, j| svd.V()[(i, order[j])]);
    let sigma = order.iter().map(|&i| s[i].max(0.0)).collect();
    Ok((u, HankelSpectrum { sigma }, v))
}

pub fn select_order(spectrum: &HankelSpectrum, rule: OrderRule) -> usize {
    let count = spectrum.count();
    match rule {
        OrderRule::Order(r) => r.min(count),
        OrderRule::Epsilon(eps) => {
            let sigma = &spectrum.sigma;
            // suffix[i] = Σ_{k≥i} σ_k, accumulated from the small end
            let mut suffix = vec![0.0; count + 1];
            for i in (0..count).rev() {
                suffix[i] = suffix[i + 1] + sigma[i];
            }
            let mut r = (1..=count).find(|&r| 2.0 * suffix[r] <= eps).unwrap_or(count);
            while r < count && (sigma[r - 1] - sigma[r]).abs() <= 1e-12 * sigma[r - 1] {
                r += 1;
            }
            r
        }
    }
}

/// Petrov–Galerkin projection of `C^{-1} G`, `C^{-1} B`, `L` onto the
/// leading `r` balanced states.
pub fn build_rom(
    model: &StateSpaceModel,
    zp: MatRef<'_, f64>,
    zq: MatRef<'_, f64>,
    u: MatRef<'_, f64>,
    spectrum: &HankelSpectrum,
    v: MatRef<'_, f64>,
    r: usize,
) -> Result<Rom, BtError> {
    let count = spectrum.count();
    if r == 0 || r > count {
        return Err(BtError::Config(format!("order {r} outside 1..={count}")));
    }
    let sigma = &spectrum.sigma;
    let floor = MIN_SIGMA_RATIO * sigma[0];
    if !(sigma[r - 1] > floor) {
        return Err(BtError::IllConditioned {
            r,
            sigma_r: sigma[r - 1],
            sigma_1: sigma[0],
            suggested: sigma.iter().take_while(|&&s| s > floor).count(),
        });
    }
    let n = model.order();
    let scale: Vec<f64> = sigma[..r].iter().map(|s| 1.0 / s.sqrt()).collect();
    let ur = Mat::from_fn(u.nrows(), r, |i, j| u[(i, j)] * scale[j]);
    let vr = Mat::from_fn(v.nrows(), r, |i, j| v[(i, j)] * scale[j]);
    let tinv = zp * &vr;
    let tt = zq * &ur; // T^T
    let t = tt.transpose().to_owned();

    let c_lu = SparseLu::new(&model.c).map_err(|_| BtError::SingularC)?;
    // W = T C^{-1}, held transposed
    let wt = c_lu.solve_transpose(tt.as_ref()).map_err(|_| BtError::SingularC)?;
    let g_tinv = sparse::mul(&model.g, tinv.as_ref());
    let gt = wt.transpose() * &g_tinv;
    let bt = wt.transpose() * sparse::to_dense(&model.b);
    let lt = sparse::mul(&model.l, tinv.as_ref());
    let ct = &t * &tinv;

    let dev = (0..r)
        .flat_map(|i| (0..r).map(move |j| (i, j)))
        .map(|(i, j)| (ct[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0f64, f64::max);
    if dev > BIORTHOGONALITY_TOL {
        return Err(BtError::Biorthogonality(dev));
    }
    Ok(Rom {
        gt,
        ct,
        bt,
        lt,
        spectrum: spectrum.clone(),
        transform: BalancingTransform { t, tinv },
        provenance: RomProvenance {
            original_order: n,
            rom_order: r,
            biorthogonality: dev,
            regularized_nodes: model.meta.regularized.len(),
            ..Default::default()
        },
    })
}

fn mem_estimate(n: usize, factors: &GramianFactors) -> u64 {
    let words = match factors.mode {
        // A, Schur Q and T, both Gramians and their eigenvectors
        ReductionMode::Dense => 7 * n * n,
        // basis, metric basis, image and metric image per solve, plus the projected solves
        _ => {
            let k = factors.p.basis_size.max(factors.q.basis_size);
            2 * 4 * n * k + 4 * k * k
        }
    };
    (words * std::mem::size_of::<f64>()) as u64
}

pub fn reduce(model: &StateSpaceModel, cfg: &ReductionConfig) -> Result<Rom, BtError> {
    let start = Instant::now();
    let factors = gramian_factors(model, cfg)?;
    let (u, spectrum, v) = balance_svd(factors.p.z.as_ref(), factors.q.z.as_ref())?;
    let r = select_order(&spectrum, cfg.order_rule);
    let mut rom = build_rom(
        model,
        factors.p.z.as_ref(),
        factors.q.z.as_ref(),
        u.as_ref(),
        &spectrum,
        v.as_ref(),
        r,
    )?;
    let pv = &mut rom.provenance;
    pv.mode = factors.mode.to_string();
    pv.order_rule = cfg.order_rule.to_string();
    pv.eks_iterations = (factors.p.iterations, factors.q.iterations);
    pv.residuals = (factors.p.residual, factors.q.residual);
    pv.converged = factors.p.converged && factors.q.converged;
    pv.peak_basis = (factors.p.basis_size, factors.q.basis_size);
    pv.peak_mem_estimate = mem_estimate(model.order(), &factors);
    pv.wall_time_s = start.elapsed().as_secs_f64();
    Ok(rom)
}
