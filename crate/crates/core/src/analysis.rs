//! DC, S-parameter and transient analysis of descriptor models, and the
//! error metrics used to compare a reduced model against its original.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef};
use rayon::prelude::*;
use thiserror::Error;

use crate::bt::Rom;
use crate::mna::{extract_mna, StateSpaceModel};
use crate::sparse::{self, c64, SparseLu};

/// Denominator floor of the relative error.
pub const RELATIVE_FLOOR: f64 = 1e-12;
pub const PASSIVITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("sC - G is singular at s = {0}")]
    SingularShift(c64),
    #[error("G is singular; nodes with no resistive or inductive path to ground: {}", .0.join(", "))]
    FloatingNodes(Vec<String>),
    #[error("G is singular")]
    SingularG,
    #[error("terminated system is singular at {0} Hz")]
    SingularTermination(f64),
    #[error("C/dt - G is singular for dt = {0:e}")]
    SingularStep(f64),
    #[error("invalid sweep: {0}")]
    Sweep(String),
    #[error("invalid transient setup: {0}")]
    Transient(String),
    #[error("S-parameters need as many outputs as inputs, got {outputs}x{inputs}")]
    NotSquare { outputs: usize, inputs: usize },
    #[error("cannot compare: {0}")]
    GridMismatch(String),
}

/// A linear descriptor system `C x' = G x + B u`, `y = L x`.
pub trait Descriptor: Sync {
    fn order(&self) -> usize;
    fn inputs(&self) -> usize;
    fn outputs(&self) -> usize;
    /// `H(s) = L (sC - G)^{-1} B`
    fn transfer_function(&self, s: c64) -> Result<Mat<c64>, AnalysisError>;
    /// `L (sC - G + B L / z0)^{-1} B`, the port voltages with every port
    /// terminated in `z0` and driven by unit currents.
    fn terminated_response(&self, s: c64, z0: f64) -> Result<Mat<c64>, AnalysisError>;
    /// `H(0) = -L G^{-1} B`
    fn dc_solve(&self) -> Result<Mat<f64>, AnalysisError>;
    /// Backward Euler from `x = 0`; `input` holds one column per time step.
    fn transient(&self, input: MatRef<'_, f64>, dt: f64) -> Result<Mat<f64>, AnalysisError>;
}

fn to_complex(a: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

fn all_finite(a: MatRef<'_, c64>) -> bool {
    (0..a.ncols()).all(|j| a.col(j).iter().all(|v| v.re.is_finite() && v.im.is_finite()))
}

fn sparse_mul_complex(a: &sparse::SparseMat, x: MatRef<'_, c64>) -> Mat<c64> {
    let mut out = Mat::<c64>::zeros(a.nrows(), x.ncols());
    for (i, j, v) in sparse::entries(a) {
        for k in 0..x.ncols() {
            out[(i, k)] += x[(j, k)] * v;
        }
    }
    out
}

/// `C` without the regularization added during assembly.
fn physical_c(model: &StateSpaceModel) -> std::borrow::Cow<'_, sparse::SparseMat> {
    let meta = &model.meta;
    if meta.regularized.is_empty() {
        return std::borrow::Cow::Borrowed(&model.c);
    }
    let mut acc = sparse::Accumulator::new(model.order(), model.order());
    for (i, j, v) in sparse::entries(&model.c) {
        acc.add(i, j, v);
    }
    for &i in &meta.regularized {
        acc.add(i, i, -meta.eps_reg);
    }
    std::borrow::Cow::Owned(sparse::from_triplets(
        model.order(),
        model.order(),
        sparse::entries(&acc.build()).filter(|e| e.2 != 0.0).collect::<Vec<_>>(),
    ))
}

fn shifted_solve(model: &StateSpaceModel, s: c64, extra: &[(usize, usize, c64)]) -> Result<Mat<c64>, AnalysisError> {
    let c = physical_c(model);
    let mut entries: Vec<(usize, usize, c64)> = sparse::entries(&c).map(|(i, j, v)| (i, j, s * v)).collect();
    entries.extend(sparse::entries(&model.g).map(|(i, j, v)| (i, j, c64::new(-v, 0.0))));
    entries.extend_from_slice(extra);
    let rhs = to_complex(sparse::to_dense(&model.b).as_ref());
    let x = sparse::complex_solve(model.order(), &entries, rhs.as_ref()).map_err(|_| AnalysisError::SingularShift(s))?;
    Ok(sparse_mul_complex(&model.l, x.as_ref()))
}

/// Analysis of an assembled model uses its physical `C`; the regularization
/// only serves the Gramian solvers.
impl Descriptor for StateSpaceModel {
    fn order(&self) -> usize {
        StateSpaceModel::order(self)
    }

    fn inputs(&self) -> usize {
        StateSpaceModel::inputs(self)
    }

    fn outputs(&self) -> usize {
        StateSpaceModel::outputs(self)
    }

    fn transfer_function(&self, s: c64) -> Result<Mat<c64>, AnalysisError> {
        shifted_solve(self, s, &[])
    }

    fn terminated_response(&self, s: c64, z0: f64) -> Result<Mat<c64>, AnalysisError> {
        let mut bl = Vec::new();
        for (i, k, b) in sparse::entries(&self.b) {
            for (kk, j, l) in sparse::entries(&self.l) {
                if kk == k {
                    bl.push((i, j, c64::new(b * l / z0, 0.0)));
                }
            }
        }
        shifted_solve(self, s, &bl)
    }

    fn dc_solve(&self) -> Result<Mat<f64>, AnalysisError> {
        let fail = || match floating_nodes(self) {
            Some(nodes) if !nodes.is_empty() => AnalysisError::FloatingNodes(nodes),
            _ => AnalysisError::SingularG,
        };
        let lu = SparseLu::new(&self.g).map_err(|_| fail())?;
        let x = lu.solve(sparse::to_dense(&self.b).as_ref()).map_err(|_| fail())?;
        Ok(-sparse::mul(&self.l, x.as_ref()))
    }

    fn transient(&self, input: MatRef<'_, f64>, dt: f64) -> Result<Mat<f64>, AnalysisError> {
        let mut acc = sparse::Accumulator::new(self.order(), self.order());
        for (i, j, v) in sparse::entries(&physical_c(self)) {
            acc.add(i, j, v / dt);
        }
        for (i, j, v) in sparse::entries(&self.g) {
            acc.add(i, j, -v);
        }
        let lu = SparseLu::new(&acc.build()).map_err(|_| AnalysisError::SingularStep(dt))?;
        let c = physical_c(self);
        let bu = sparse::mul(&self.b, input);
        march(
            self.order(),
            self.outputs(),
            bu.as_ref(),
            |x| sparse::mul(&c, x) * (1.0 / dt),
            |rhs| lu.solve(rhs).map_err(|_| AnalysisError::SingularStep(dt)),
            |x| sparse::mul(&self.l, x),
        )
    }
}

impl Descriptor for Rom {
    fn order(&self) -> usize {
        Rom::order(self)
    }

    fn inputs(&self) -> usize {
        self.bt.ncols()
    }

    fn outputs(&self) -> usize {
        self.lt.nrows()
    }

    fn transfer_function(&self, s: c64) -> Result<Mat<c64>, AnalysisError> {
        self.shifted(s, None)
    }

    fn terminated_response(&self, s: c64, z0: f64) -> Result<Mat<c64>, AnalysisError> {
        self.shifted(s, Some(&self.bt * &self.lt * (1.0 / z0)))
    }

    fn dc_solve(&self) -> Result<Mat<f64>, AnalysisError> {
        let x = self.gt.partial_piv_lu().solve(&self.bt);
        if !(0..x.ncols()).all(|j| x.col(j).iter().all(|v| v.is_finite())) {
            return Err(AnalysisError::SingularG);
        }
        Ok(-(&self.lt * x))
    }

    fn transient(&self, input: MatRef<'_, f64>, dt: f64) -> Result<Mat<f64>, AnalysisError> {
        let lu = (&self.ct * (1.0 / dt) - &self.gt).partial_piv_lu();
        let bu = &self.bt * input;
        march(
            self.order(),
            self.outputs(),
            bu.as_ref(),
            |x| &self.ct * x * (1.0 / dt),
            |rhs| {
                let x = lu.solve(rhs);
                if x.col(0).iter().all(|v| v.is_finite()) {
                    Ok(x)
                } else {
                    Err(AnalysisError::SingularStep(dt))
                }
            },
            |x| &self.lt * x,
        )
    }
}

impl Rom {
    fn shifted(&self, s: c64, extra: Option<Mat<f64>>) -> Result<Mat<c64>, AnalysisError> {
        let r = self.order();
        let k = Mat::from_fn(r, r, |i, j| {
            let e = extra.as_ref().map_or(0.0, |m| m[(i, j)]);
            s * self.ct[(i, j)] - c64::new(self.gt[(i, j)] - e, 0.0)
        });
        let x = k.partial_piv_lu().solve(to_complex(self.bt.as_ref()));
        if !all_finite(x.as_ref()) {
            return Err(AnalysisError::SingularShift(s));
        }
        Ok(to_complex(self.lt.as_ref()) * x)
    }
}

/// `(C/dt - G) x_{k+1} = (C/dt) x_k + B u_{k+1}`
fn march(
    n: usize,
    q: usize,
    bu: MatRef<'_, f64>,
    c_over_dt: impl Fn(MatRef<'_, f64>) -> Mat<f64>,
    solve: impl Fn(MatRef<'_, f64>) -> Result<Mat<f64>, AnalysisError>,
    output: impl Fn(MatRef<'_, f64>) -> Mat<f64>,
) -> Result<Mat<f64>, AnalysisError> {
    let steps = bu.ncols();
    let mut y = Mat::<f64>::zeros(q, steps);
    let mut x = Mat::<f64>::zeros(n, 1);
    for k in 1..steps {
        let rhs = c_over_dt(x.as_ref()) + bu.subcols(k, 1);
        x = solve(rhs.as_ref())?;
        let yk = output(x.as_ref());
        y.col_mut(k).copy_from(yk.col(0));
    }
    Ok(y)
}

/// Nodes of an MNA-derived model that no resistor or inductor connects to ground.
fn floating_nodes(model: &StateSpaceModel) -> Option<Vec<String>> {
    let mna = extract_mna(model)?;
    let n = mna.n;
    // union-find with index n as ground
    let mut parent: Vec<usize> = (0..=n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let union = |p: &mut Vec<usize>, a: usize, b: usize| {
        let (ra, rb) = (find(p, a), find(p, b));
        p[ra] = rb;
    };
    let mut row_sum = vec![0.0; n];
    let mut diag = vec![0.0; n];
    for (i, j, v) in sparse::entries(&mna.gn) {
        row_sum[i] += v;
        if i == j {
            diag[i] = v;
        } else if v != 0.0 {
            union(&mut parent, i, j);
        }
    }
    // a nonzero row sum is conductance to ground
    for i in 0..n {
        if row_sum[i].abs() > 1e-12 * diag[i].abs() {
            union(&mut parent, i, n);
        }
    }
    let mut ends: Vec<Vec<usize>> = vec![Vec::new(); mna.m];
    for (i, k, v) in sparse::entries(&mna.e) {
        if v != 0.0 {
            ends[k].push(i);
        }
    }
    for e in ends {
        match e.as_slice() {
            [a] => union(&mut parent, *a, n),
            [a, b] => union(&mut parent, *a, *b),
            _ => {}
        }
    }
    let ground = find(&mut parent, n);
    Some(
        (0..n)
            .filter(|&i| find(&mut parent, i) != ground)
            .map(|i| mna.node_names.get(i).cloned().unwrap_or_else(|| format!("#{i}")))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepScale {
    Linear,
    Log,
}

impl fmt::Display for SweepScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepScale::Linear => "linear",
            SweepScale::Log => "log",
        })
    }
}

impl std::str::FromStr for SweepScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" | "lin" => Ok(Self::Linear),
            "log" => Ok(Self::Log),
            _ => Err(format!("unknown sweep scale `{s}` (expected linear or log)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySweep {
    points: Vec<f64>,
    scale: SweepScale,
}

impl FrequencySweep {
    pub const DEFAULT_START_HZ: f64 = 0.1e9;
    pub const DEFAULT_STOP_HZ: f64 = 100e9;
    pub const DEFAULT_POINTS: usize = 201;

    pub fn new(points: Vec<f64>, scale: SweepScale) -> Result<Self, AnalysisError> {
        if points.is_empty() {
            return Err(AnalysisError::Sweep("no frequency points".into()));
        }
        if let Some(&f) = points.iter().find(|f| !(**f > 0.0) || !f.is_finite()) {
            return Err(AnalysisError::Sweep(format!("frequency {f} is not positive")));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AnalysisError::Sweep("frequencies must be strictly increasing".into()));
        }
        Ok(Self { points, scale })
    }

    pub fn build(start: f64, stop: f64, count: usize, scale: SweepScale) -> Result<Self, AnalysisError> {
        if count == 0 || (count > 1 && !(stop > start)) || !(start > 0.0) {
            return Err(AnalysisError::Sweep(format!("bad range {start}..{stop} with {count} points")));
        }
        let t = |k: usize| if count == 1 { 0.0 } else { k as f64 / (count - 1) as f64 };
        let points = (0..count)
            .map(|k| match scale {
                SweepScale::Linear => start + (stop - start) * t(k),
                SweepScale::Log => start * (stop / start).powf(t(k)),
            })
            .collect();
        Self::new(points, scale)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn scale(&self) -> SweepScale {
        self.scale
    }
}

impl Default for FrequencySweep {
    fn default() -> Self {
        Self::build(Self::DEFAULT_START_HZ, Self::DEFAULT_STOP_HZ, Self::DEFAULT_POINTS, SweepScale::Log)
            .expect("default sweep is valid")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SParameterSet {
    pub freqs: Vec<f64>,
    pub data: Vec<Mat<c64>>,
    pub z0: f64,
}

impl SParameterSet {
    pub fn ports(&self) -> usize {
        self.data.first().map_or(0, |s| s.nrows())
    }

    /// Largest singular value of `S` at each frequency.
    pub fn max_singular_values(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|s| {
                s.singular_values()
                    .map(|v| v.into_iter().fold(0.0, f64::max))
                    .unwrap_or(f64::NAN)
            })
            .collect()
    }

    /// Frequencies where `σ_max(S) > 1 + PASSIVITY_TOL`.
    pub fn passivity_violations(&self) -> Vec<f64> {
        self.max_singular_values()
            .into_iter()
            .zip(&self.freqs)
            .filter(|(s, _)| !(*s <= 1.0 + PASSIVITY_TOL))
            .map(|(_, &f)| f)
            .collect()
    }
}

/// `S = (Z - z0 I)(Z + z0 I)^{-1}`
pub fn z_to_s(z: MatRef<'_, c64>, z0: f64) -> Option<Mat<c64>> {
    let p = z.nrows();
    let shift = |sign: f64| Mat::from_fn(p, p, |i, j| z[(i, j)] + c64::new(if i == j { sign * z0 } else { 0.0 }, 0.0));
    let (num, den) = (shift(-1.0), shift(1.0));
    // S = num den^{-1}  <=>  den^T S^T = num^T
    let st = den.transpose().to_owned().partial_piv_lu().solve(num.transpose().to_owned());
    all_finite(st.as_ref()).then(|| st.transpose().to_owned())
}

pub fn sp_sweep<D: Descriptor + ?Sized>(model: &D, sweep: &FrequencySweep, z0: f64) -> Result<SParameterSet, AnalysisError> {
    if model.inputs() != model.outputs() {
        return Err(AnalysisError::NotSquare {
            outputs: model.outputs(),
            inputs: model.inputs(),
        });
    }
    if !(z0 > 0.0) {
        return Err(AnalysisError::Sweep(format!("reference impedance {z0} is not positive")));
    }
    let data = sweep
        .points()
        .par_iter()
        .map(|&f| {
            let w = model
                .terminated_response(c64::new(0.0, 2.0 * std::f64::consts::PI * f), z0)
                .map_err(|_| AnalysisError::SingularTermination(f))?;
            // S = (Z - z0)(Z + z0)^{-1} = (2/z0) W - I with W = Z (I + Z/z0)^{-1}
            let p = w.nrows();
            Ok(Mat::from_fn(p, p, |i, j| {
                w[(i, j)] * (2.0 / z0) - c64::new(if i == j { 1.0 } else { 0.0 }, 0.0)
            }))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SParameterSet {
        freqs: sweep.points().to_vec(),
        data,
        z0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    BackwardEuler,
}

#[derive(Debug, Clone)]
pub struct TransientResult {
    pub times: Vec<f64>,
    /// `q × times.len()`
    pub outputs: Mat<f64>,
    pub scheme: Scheme,
    pub dt: f64,
}

/// Number of steps covering `[0, horizon]`.
pub fn step_count(dt: f64, horizon: f64) -> Result<usize, AnalysisError> {
    if !(dt > 0.0) || !(horizon > 0.0) || !dt.is_finite() || !horizon.is_finite() {
        return Err(AnalysisError::Transient(format!("dt = {dt}, horizon = {horizon}")));
    }
    Ok((horizon / dt - 1e-9).ceil() as usize)
}

/// Unit step on every port, sampled on the grid of [`transient`].
pub fn step_input(ports: usize, dt: f64, horizon: f64) -> Result<Mat<f64>, AnalysisError> {
    let k = step_count(dt, horizon)?;
    Ok(Mat::from_fn(ports, k + 1, |_, j| if j == 0 { 0.0 } else { 1.0 }))
}

pub fn transient<D: Descriptor + ?Sized>(
    model: &D,
    input: MatRef<'_, f64>,
    dt: f64,
    horizon: f64,
) -> Result<TransientResult, AnalysisError> {
    let k = step_count(dt, horizon)?;
    if input.nrows() != model.inputs() {
        return Err(AnalysisError::Transient(format!(
            "waveform has {} rows, model has {} inputs",
            input.nrows(),
            model.inputs()
        )));
    }
    if input.ncols() < k + 1 {
        return Err(AnalysisError::Transient(format!(
            "waveform has {} samples, horizon needs {}",
            input.ncols(),
            k + 1
        )));
    }
    let outputs = model.transient(input.subcols(0, k + 1), dt)?;
    Ok(TransientResult {
        times: (0..=k).map(|i| i as f64 * dt).collect(),
        outputs,
        scheme: Scheme::BackwardEuler,
        dt,
    })
}

/// Relative error statistics in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mre: f64,
    pub max_re: f64,
}

fn stats(errors: impl Iterator<Item = f64>) -> Result<ErrorStats, AnalysisError> {
    let (mut sum, mut max, mut n) = (0.0, 0.0f64, 0usize);
    for e in errors {
        sum += e;
        max = max.max(e);
        n += 1;
    }
    if n == 0 {
        return Err(AnalysisError::GridMismatch("no samples".into()));
    }
    Ok(ErrorStats {
        mre: sum / n as f64 * 100.0,
        max_re: max * 100.0,
    })
}

pub fn compare_real(reference: &[f64], test: &[f64]) -> Result<ErrorStats, AnalysisError> {
    if reference.len() != test.len() {
        return Err(AnalysisError::GridMismatch(format!("{} vs {} samples", reference.len(), test.len())));
    }
    stats(reference.iter().zip(test).map(|(r, t)| (t - r).abs() / r.abs().max(RELATIVE_FLOOR)))
}

pub fn compare_complex(reference: &[c64], test: &[c64]) -> Result<ErrorStats, AnalysisError> {
    if reference.len() != test.len() {
        return Err(AnalysisError::GridMismatch(format!("{} vs {} samples", reference.len(), test.len())));
    }
    stats(reference.iter().zip(test).map(|(r, t)| (t - r).norm() / r.norm().max(RELATIVE_FLOOR)))
}

fn flatten<T: Copy>(a: MatRef<'_, T>) -> Vec<T> {
    (0..a.ncols()).flat_map(|j| (0..a.nrows()).map(move |i| a[(i, j)])).collect()
}

pub fn compare_dc(reference: MatRef<'_, f64>, test: MatRef<'_, f64>) -> Result<ErrorStats, AnalysisError> {
    if reference.shape() != test.shape() {
        return Err(AnalysisError::GridMismatch(format!("{:?} vs {:?}", reference.shape(), test.shape())));
    }
    compare_real(&flatten(reference), &flatten(test))
}

pub fn compare_sp(reference: &SParameterSet, test: &SParameterSet) -> Result<ErrorStats, AnalysisError> {
    if reference.freqs != test.freqs {
        return Err(AnalysisError::GridMismatch("frequency grids differ".into()));
    }
    if reference.ports() != test.ports() {
        return Err(AnalysisError::GridMismatch(format!("{} vs {} ports", reference.ports(), test.ports())));
    }
    let r: Vec<c64> = reference.data.iter().flat_map(|s| flatten(s.as_ref())).collect();
    let t: Vec<c64> = test.data.iter().flat_map(|s| flatten(s.as_ref())).collect();
    compare_complex(&r, &t)
}

pub fn compare_transient(reference: &TransientResult, test: &TransientResult) -> Result<ErrorStats, AnalysisError> {
    if reference.times != test.times {
        return Err(AnalysisError::GridMismatch("time grids differ".into()));
    }
    if reference.outputs.shape() != test.outputs.shape() {
        return Err(AnalysisError::GridMismatch("output counts differ".into()));
    }
    compare_real(&flatten(reference.outputs.as_ref()), &flatten(test.outputs.as_ref()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub model: String,
    pub rom_order: usize,
    pub reduction_pct: f64,
    pub dc: Option<ErrorStats>,
    pub sp: Option<ErrorStats>,
    pub transient: Option<ErrorStats>,
    pub reduction_time_s: f64,
    pub peak_mem_gb: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.5e}")).unwrap_or_default()
}

impl ErrorReport {
    pub const REPORT_HEADER: &'static str =
        "model,rom_order,reduction_pct,dc_mre,dc_max_re,sp_mre,sp_max_re,tran_mre,tran_max_re";
    pub const PERFORMANCE_HEADER: &'static str = "model,rom_order,reduction_time_s,memory_gb";

    /// Accuracy columns only; identical inputs give identical bytes.
    pub fn report_csv(&self) -> String {
        format!(
            "{}\n{},{},{:.5e},{},{},{},{},{},{}\n",
            Self::REPORT_HEADER,
            self.model,
            self.rom_order,
            self.reduction_pct,
            opt(self.dc.map(|s| s.mre)),
            opt(self.dc.map(|s| s.max_re)),
            opt(self.sp.map(|s| s.mre)),
            opt(self.sp.map(|s| s.max_re)),
            opt(self.transient.map(|s| s.mre)),
            opt(self.transient.map(|s| s.max_re)),
        )
    }

    /// Wall time and memory, which vary between runs.
    pub fn performance_csv(&self) -> String {
        format!(
            "{}\n{},{},{:.5e},{:.5e}\n",
            Self::PERFORMANCE_HEADER,
            self.model,
            self.rom_order,
            self.reduction_time_s,
            self.peak_mem_gb
        )
    }
}

fn fmt_c(v: c64) -> String {
    format!("{:.12e} {:.12e}", v.re, v.im)
}

/// Touchstone v1 with real/imaginary pairs.
pub fn write_touchstone(mut out: impl Write, sp: &SParameterSet, comment: &str) -> io::Result<()> {
    for line in comment.lines() {
        writeln!(out, "! {line}")?;
    }
    writeln!(out, "# HZ S RI R {}", sp.z0)?;
    let p = sp.ports();
    for (f, s) in sp.freqs.iter().zip(&sp.data) {
        match p {
            1 => writeln!(out, "{f:.12e} {}", fmt_c(s[(0, 0)]))?,
            // two-port order is S11 S21 S12 S22
            2 => writeln!(
                out,
                "{f:.12e} {} {} {} {}",
                fmt_c(s[(0, 0)]),
                fmt_c(s[(1, 0)]),
                fmt_c(s[(0, 1)]),
                fmt_c(s[(1, 1)])
            )?,
            _ => {
                for i in 0..p {
                    for (c, j) in (0..p).enumerate() {
                        let sep = if c % 4 == 0 { "" } else { " " };
                        if c == 0 && i == 0 {
                            write!(out, "{f:.12e} ")?;
                        } else if c % 4 == 0 {
                            write!(out, "{:>19}", "")?;
                        }
                        write!(out, "{sep}{}", fmt_c(s[(i, j)]))?;
                        if c % 4 == 3 || j == p - 1 {
                            writeln!(out)?;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn touchstone_path(dir: &Path, stem: &str, ports: usize) -> PathBuf {
    dir.join(format!("{stem}.s{ports}p"))
}

/// One `freq_hz,mag_db,phase_deg` file per S entry, named `<prefix>_S<i><j>.csv`.
pub fn write_plot_csvs(dir: &Path, prefix: &str, sp: &SParameterSet) -> io::Result<Vec<PathBuf>> {
    let p = sp.ports();
    let mut written = Vec::with_capacity(p * p);
    for i in 0..p {
        for j in 0..p {
            let path = dir.join(format!("{prefix}_S{}{}.csv", i + 1, j + 1));
            let mut text = String::from("freq_hz,mag_db,phase_deg\n");
            for (f, s) in sp.freqs.iter().zip(&sp.data) {
                let v = s[(i, j)];
                let db = 20.0 * v.norm().max(1e-300).log10();
                let deg = v.im.atan2(v.re).to_degrees();
                text.push_str(&format!("{f:.9e},{db:.9e},{deg:.9e}\n"));
            }
            fs::write(&path, text)?;
            written.push(path);
        }
    }
    Ok(written)
}
