//! Configuration-driven reduction and verification run.

use std::fmt::{self, Write as _};
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::analysis::{
    self, compare_dc, compare_sp, compare_transient, sp_sweep, step_input, touchstone_path, write_plot_csvs,
    write_touchstone, Descriptor, ErrorReport, FrequencySweep, SweepScale,
};
use crate::bt::{reduce, OrderRule, ReductionConfig, ReductionMode};
use crate::lyapunov::{EksOptions, DEFAULT_DENSE_CUTOFF};
use crate::mna::{assemble_mna, to_state_space, StateSpaceModel};
use crate::mtx::{load_matrices, MatrixPaths};
use crate::netlist::parse_netlist;

/// Largest original order for which SP and transient references are simulated.
pub const DEFAULT_REFERENCE_ORDER_CAP: usize = 200_000;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("missing required key: {0}")]
    Missing(String),
    #[error("conflicting keys: {0}")]
    Conflict(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelInput {
    Netlist(PathBuf),
    Matrices(MatrixPaths),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Analysis {
    Dc,
    Sp,
    Transient,
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Analysis::Dc => "dc",
            Analysis::Sp => "sp",
            Analysis::Transient => "transient",
        })
    }
}

impl std::str::FromStr for Analysis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dc" => Ok(Self::Dc),
            "sp" => Ok(Self::Sp),
            "transient" | "tran" => Ok(Self::Transient),
            _ => Err(format!("unknown analysis `{s}` (expected dc, sp or transient)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub points: usize,
    pub scale: SweepScale,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            start_hz: FrequencySweep::DEFAULT_START_HZ,
            stop_hz: FrequencySweep::DEFAULT_STOP_HZ,
            points: FrequencySweep::DEFAULT_POINTS,
            scale: SweepScale::Log,
        }
    }
}

impl SweepSpec {
    pub fn sweep(&self) -> Result<FrequencySweep, analysis::AnalysisError> {
        FrequencySweep::build(self.start_hz, self.stop_hz, self.points, self.scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientSpec {
    pub dt: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: ModelInput,
    pub reduction: ReductionConfig,
    pub sweep: SweepSpec,
    pub z0: f64,
    /// Sorted, without duplicates.
    pub analyses: Vec<Analysis>,
    pub transient: Option<TransientSpec>,
    pub outdir: PathBuf,
    pub reference_order_cap: usize,
}

const KEYS: &[&str] = &[
    "netlist",
    "matrix_g",
    "matrix_c",
    "matrix_b",
    "matrix_l",
    "mode",
    "epsilon",
    "rom_order",
    "dense_cutoff",
    "eks_tol",
    "eks_maxiter",
    "sweep_start_hz",
    "sweep_stop_hz",
    "sweep_points",
    "sweep_scale",
    "z0",
    "analyses",
    "transient_dt",
    "transient_horizon",
    "outdir",
];

fn parse_f64(s: &str) -> Result<f64, String> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        _ => s.parse::<f64>().map_err(|e| e.to_string()),
    }
}

struct Entries(Vec<(&'static str, usize, String)>);

impl Entries {
    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.0.iter().find(|(k, _, _)| *k == key).map(|(_, l, v)| (*l, v.as_str()))
    }

    fn typed<T>(&self, key: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some((line, v)) => parse(v).map(Some).map_err(|message| ConfigError::Value {
                line,
                key: key.to_string(),
                message,
            }),
        }
    }
}

impl RunConfig {
    /// Parses config text; relative paths resolve against `base`, and
    /// `outdir` defaults to `<base>/<stem>_out`.
    pub fn parse(text: &str, base: &Path, stem: &str) -> Result<Self, ConfigError> {
        let mut seen: Vec<(&'static str, usize, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (k, v) = t.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected key=value, found `{t}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            let key = *KEYS.iter().find(|&&known| known == k).ok_or_else(|| ConfigError::UnknownKey {
                line,
                key: k.to_string(),
            })?;
            if seen.iter().any(|(s, _, _)| *s == key) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            if v.is_empty() {
                return Err(ConfigError::Value {
                    line,
                    key: key.to_string(),
                    message: "empty value".into(),
                });
            }
            seen.push((key, line, v.to_string()));
        }
        let entries = Entries(seen);
        let get = |key: &str| entries.get(key);
        let typed = |key: &str, parse: &dyn Fn(&str) -> Result<f64, String>| entries.typed(key, parse);
        let path = |key: &str| get(key).map(|(_, v)| base.join(v));
        let usize_of = |s: &str| s.parse::<usize>().map_err(|e| e.to_string());

        let matrix_keys = ["matrix_g", "matrix_c", "matrix_b", "matrix_l"];
        let given: Vec<&str> = matrix_keys.iter().copied().filter(|k| get(k).is_some()).collect();
        let input = match (path("netlist"), given.len()) {
            (Some(_), n) if n > 0 => {
                return Err(ConfigError::Conflict("netlist and matrix_* are mutually exclusive".into()))
            }
            (Some(p), _) => ModelInput::Netlist(p),
            (None, 4) => ModelInput::Matrices(MatrixPaths {
                g: path("matrix_g").unwrap(),
                c: path("matrix_c").unwrap(),
                b: path("matrix_b").unwrap(),
                l: path("matrix_l").unwrap(),
            }),
            (None, 0) => return Err(ConfigError::Missing("netlist or matrix_g/matrix_c/matrix_b/matrix_l".into())),
            (None, _) => {
                let missing: Vec<&str> = matrix_keys.iter().copied().filter(|k| !given.contains(k)).collect();
                return Err(ConfigError::Missing(missing.join(", ")));
            }
        };

        let order_rule = match (
            entries.typed("rom_order", usize_of)?,
            typed("epsilon", &parse_f64)?,
        ) {
            (Some(_), Some(_)) => return Err(ConfigError::Conflict("rom_order and epsilon are mutually exclusive".into())),
            (Some(r), None) => OrderRule::Order(r),
            (None, Some(e)) => OrderRule::Epsilon(e),
            (None, None) => return Err(ConfigError::Missing("rom_order or epsilon".into())),
        };
        let defaults = EksOptions::default();
        let reduction = ReductionConfig {
            mode: entries.typed("mode", |s| s.parse::<ReductionMode>())?.unwrap_or(ReductionMode::Auto),
            order_rule,
            dense_cutoff: entries.typed("dense_cutoff", usize_of)?.unwrap_or(DEFAULT_DENSE_CUTOFF),
            eks: EksOptions {
                tol: typed("eks_tol", &parse_f64)?.unwrap_or(defaults.tol),
                maxiter: entries.typed("eks_maxiter", usize_of)?.unwrap_or(defaults.maxiter),
                ..defaults
            },
        };
        reduction.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let sd = SweepSpec::default();
        let sweep = SweepSpec {
            start_hz: typed("sweep_start_hz", &parse_f64)?.unwrap_or(sd.start_hz),
            stop_hz: typed("sweep_stop_hz", &parse_f64)?.unwrap_or(sd.stop_hz),
            points: entries.typed("sweep_points", usize_of)?.unwrap_or(sd.points),
            scale: entries.typed("sweep_scale", |s| s.parse::<SweepScale>())?.unwrap_or(sd.scale),
        };
        let z0 = typed("z0", &parse_f64)?.unwrap_or(50.0);
        let mut analyses: Vec<Analysis> = match get("analyses") {
            None => vec![Analysis::Dc, Analysis::Sp],
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim().parse::<Analysis>())
                .collect::<Result<_, _>>()
                .map_err(|message| ConfigError::Value {
                    line,
                    key: "analyses".into(),
                    message,
                })?,
        };
        analyses.sort();
        analyses.dedup();

        let transient = match (
            typed("transient_dt", &parse_f64)?,
            typed("transient_horizon", &parse_f64)?,
        ) {
            (Some(dt), Some(horizon)) => Some(TransientSpec { dt, horizon }),
            (None, None) => None,
            _ => return Err(ConfigError::Missing("transient_dt and transient_horizon must be given together".into())),
        };
        let outdir = path("outdir").unwrap_or_else(|| base.join(format!("{stem}_out")));
        let cfg = RunConfig {
            input,
            reduction,
            sweep,
            z0,
            analyses,
            transient,
            outdir,
            reference_order_cap: DEFAULT_REFERENCE_ORDER_CAP,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.analyses.is_empty() {
            return Err(ConfigError::Invalid("no analyses selected".into()));
        }
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return Err(ConfigError::Invalid(format!("z0 must be positive, got {}", self.z0)));
        }
        if self.analyses.contains(&Analysis::Sp) {
            self.sweep.sweep().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        match (self.analyses.contains(&Analysis::Transient), self.transient) {
            (true, None) => {
                return Err(ConfigError::Missing(
                    "transient_dt and transient_horizon (transient analysis selected)".into(),
                ))
            }
            (_, Some(t)) => {
                analysis::step_count(t.dt, t.horizon).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Effective configuration with every key spelled out; [`parse`](Self::parse)
    /// of the result reproduces `self`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let p = |p: &Path| p.display().to_string();
        match &self.input {
            ModelInput::Netlist(n) => {
                let _ = writeln!(s, "netlist={}", p(n));
            }
            ModelInput::Matrices(m) => {
                let _ = writeln!(s, "matrix_g={}", p(&m.g));
                let _ = writeln!(s, "matrix_c={}", p(&m.c));
                let _ = writeln!(s, "matrix_b={}", p(&m.b));
                let _ = writeln!(s, "matrix_l={}", p(&m.l));
            }
        }
        let r = &self.reduction;
        let _ = writeln!(s, "mode={}", r.mode);
        match r.order_rule {
            OrderRule::Order(n) => {
                let _ = writeln!(s, "rom_order={n}");
            }
            OrderRule::Epsilon(e) => {
                let _ = writeln!(s, "epsilon={e}");
            }
        }
        let _ = writeln!(s, "dense_cutoff={}", r.dense_cutoff);
        let _ = writeln!(s, "eks_tol={}", r.eks.tol);
        let _ = writeln!(s, "eks_maxiter={}", r.eks.maxiter);
        let _ = writeln!(s, "sweep_start_hz={}", self.sweep.start_hz);
        let _ = writeln!(s, "sweep_stop_hz={}", self.sweep.stop_hz);
        let _ = writeln!(s, "sweep_points={}", self.sweep.points);
        let _ = writeln!(s, "sweep_scale={}", self.sweep.scale);
        let _ = writeln!(s, "z0={}", self.z0);
        let names: Vec<String> = self.analyses.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(s, "analyses={}", names.join(","));
        if let Some(t) = self.transient {
            let _ = writeln!(s, "transient_dt={}", t.dt);
            let _ = writeln!(s, "transient_horizon={}", t.horizon);
        }
        let _ = writeln!(s, "outdir={}", p(&self.outdir));
        s
    }

    /// Name used in reports: the netlist or `matrix_g` file stem.
    pub fn model_name(&self) -> String {
        let path = match &self.input {
            ModelInput::Netlist(p) => p,
            ModelInput::Matrices(m) => &m.g,
        };
        path.file_stem()
            .map(|s| s.to_string_lossy().replace(',', "_"))
            .unwrap_or_else(|| "model".into())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    RunConfig::parse(&text, base, &stem)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Output,
    Ingest,
    Reduce,
    Export,
    AnalyzeOriginal,
    AnalyzeRom,
    Compare,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Output => "output",
            Stage::Ingest => "ingest",
            Stage::Reduce => "reduce",
            Stage::Export => "export",
            Stage::AnalyzeOriginal => "analyze-original",
            Stage::AnalyzeRom => "analyze-rom",
            Stage::Compare => "compare",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

fn fail<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub outdir: PathBuf,
    pub rom_files: Vec<PathBuf>,
    pub provenance: PathBuf,
    pub touchstone: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub transient: Option<PathBuf>,
    pub report: PathBuf,
    pub performance: PathBuf,
    pub log: PathBuf,
    pub summary: ErrorReport,
    pub passivity_violations: usize,
}

struct RunLog {
    file: File,
    echo: bool,
    start: Instant,
}

impl RunLog {
    fn line(&mut self, msg: &str) {
        let text = format!("[{:9.3}s] {msg}", self.start.elapsed().as_secs_f64());
        let _ = writeln!(self.file, "{text}");
        if self.echo {
            eprintln!("{text}");
        }
    }

    fn stage<T>(
        &mut self,
        stage: Stage,
        f: impl FnOnce() -> Result<T, PipelineError>,
    ) -> Result<T, PipelineError> {
        let t = Instant::now();
        let out = f();
        if out.is_ok() {
            self.line(&format!("{stage}: done in {:.3} s", t.elapsed().as_secs_f64()));
        }
        out
    }
}

/// Peak resident set size in GB, from `VmHWM`.
pub fn peak_rss_gb() -> Option<f64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let kb: f64 = status
        .lines()
        .find(|l| l.starts_with("VmHWM:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()?;
    Some(kb / (1024.0 * 1024.0))
}

fn ingest(input: &ModelInput) -> Result<StateSpaceModel, String> {
    match input {
        ModelInput::Netlist(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let net = parse_netlist(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            let mna = assemble_mna(&net).map_err(|e| e.to_string())?;
            Ok(to_state_space(&mna))
        }
        ModelInput::Matrices(paths) => load_matrices(paths).map_err(|e| e.to_string()),
    }
}

fn probe_writable(dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(".write_probe");
    fs::write(&probe, b"")?;
    fs::remove_file(&probe)
}

pub fn run(cfg: &RunConfig) -> Result<RunArtifacts, PipelineError> {
    run_logged(cfg, false)
}

/// [`run`], echoing log lines to stderr when `echo` is set.
pub fn run_logged(cfg: &RunConfig, echo: bool) -> Result<RunArtifacts, PipelineError> {
    cfg.validate().map_err(fail(Stage::Output))?;
    let out = cfg.outdir.clone();
    probe_writable(&out).map_err(|e| PipelineError {
        stage: Stage::Output,
        message: format!("{} is not writable: {e}", out.display()),
    })?;
    let log_path = out.join("run.log");
    let mut log = RunLog {
        file: File::create(&log_path).map_err(fail(Stage::Output))?,
        echo,
        start: Instant::now(),
    };
    for l in cfg.dump().lines() {
        log.line(&format!("config: {l}"));
    }
    let result = execute(cfg, &out, &mut log, log_path);
    if let Err(e) = &result {
        log.line(&format!("error: {e}"));
    }
    result
}

fn execute(cfg: &RunConfig, out: &Path, log: &mut RunLog, log_path: PathBuf) -> Result<RunArtifacts, PipelineError> {
    let model = log.stage(Stage::Ingest, || ingest(&cfg.input).map_err(fail(Stage::Ingest)))?;
    log.line(&format!(
        "model: order {}, {} inputs, {} outputs, {} regularized nodes",
        model.order(),
        model.inputs(),
        model.outputs(),
        model.meta.regularized.len()
    ));

    let rom = log.stage(Stage::Reduce, || reduce(&model, &cfg.reduction).map_err(fail(Stage::Reduce)))?;
    let pv = &rom.provenance;
    log.line(&format!(
        "reduction: mode {}, order {} -> {} ({:.2}% reduction), eks iterations {:?}, residuals {:?}, converged {}, {:.3} s",
        pv.mode,
        pv.original_order,
        pv.rom_order,
        rom.reduction_pct(),
        pv.eks_iterations,
        pv.residuals,
        pv.converged,
        pv.wall_time_s
    ));
    if !pv.converged {
        log.line("warning: Gramian solver stopped before reaching eks_tol");
    }

    log.stage(Stage::Export, || rom.export(out).map_err(fail(Stage::Export)))?;
    let rom_files = ["Gt.mtx", "Ct.mtx", "Bt.mtx", "Lt.mtx"].map(|f| out.join(f)).to_vec();

    let with_reference = model.order() <= cfg.reference_order_cap;
    if !with_reference {
        log.line(&format!(
            "warning: order {} exceeds the reference cap {}; SP and transient comparisons skipped",
            model.order(),
            cfg.reference_order_cap
        ));
    }
    let name = cfg.model_name();
    let mut summary = ErrorReport {
        model: name.clone(),
        rom_order: rom.order(),
        reduction_pct: rom.reduction_pct(),
        dc: None,
        sp: None,
        transient: None,
        reduction_time_s: pv.wall_time_s,
        peak_mem_gb: 0.0,
    };
    let mut touchstone = Vec::new();
    let mut plots = Vec::new();
    let mut transient_csv = None;
    let mut passivity_violations = 0;

    for analysis in &cfg.analyses {
        match analysis {
            Analysis::Dc => {
                let h = log.stage(Stage::AnalyzeOriginal, || model.dc_solve().map_err(fail(Stage::AnalyzeOriginal)))?;
                let hr = log.stage(Stage::AnalyzeRom, || {
                    rom.dc_solve().map_err(fail(Stage::AnalyzeRom))
                })?;
                let e = compare_dc(h.as_ref(), hr.as_ref()).map_err(fail(Stage::Compare))?;
                log.line(&format!("dc: MRE {:.5e} %, MAX_RE {:.5e} %", e.mre, e.max_re));
                summary.dc = Some(e);
            }
            Analysis::Sp => {
                let sweep = cfg.sweep.sweep().map_err(fail(Stage::AnalyzeRom))?;
                let srom = log.stage(Stage::AnalyzeRom, || sp_sweep(&rom, &sweep, cfg.z0).map_err(fail(Stage::AnalyzeRom)))?;
                let p = srom.ports();
                let path = touchstone_path(out, "rom", p);
                write_ts(&path, &srom, &format!("{name} reduced order {}", rom.order()))?;
                touchstone.push(path);
                plots.extend(write_plot_csvs(out, "rom", &srom).map_err(fail(Stage::Report))?);
                let bad = srom.passivity_violations();
                if !bad.is_empty() {
                    log.line(&format!(
                        "warning: ROM S-parameters exceed unit gain at {} of {} frequencies (first {:.6e} Hz)",
                        bad.len(),
                        srom.freqs.len(),
                        bad[0]
                    ));
                }
                passivity_violations = bad.len();
                if with_reference {
                    let sorig = log.stage(Stage::AnalyzeOriginal, || {
                        sp_sweep(&model, &sweep, cfg.z0).map_err(fail(Stage::AnalyzeOriginal))
                    })?;
                    let path = touchstone_path(out, "original", p);
                    write_ts(&path, &sorig, &format!("{name} original order {}", model.order()))?;
                    touchstone.push(path);
                    plots.extend(write_plot_csvs(out, "original", &sorig).map_err(fail(Stage::Report))?);
                    let e = compare_sp(&sorig, &srom).map_err(fail(Stage::Compare))?;
                    log.line(&format!("sp: MRE {:.5e} %, MAX_RE {:.5e} %", e.mre, e.max_re));
                    summary.sp = Some(e);
                }
            }
            Analysis::Transient => {
                let t = cfg.transient.expect("validated");
                let u = step_input(model.inputs(), t.dt, t.horizon).map_err(fail(Stage::AnalyzeRom))?;
                let trom = log.stage(Stage::AnalyzeRom, || {
                    analysis::transient(&rom, u.as_ref(), t.dt, t.horizon).map_err(fail(Stage::AnalyzeRom))
                })?;
                let torig = if with_reference {
                    Some(log.stage(Stage::AnalyzeOriginal, || {
                        analysis::transient(&model, u.as_ref(), t.dt, t.horizon).map_err(fail(Stage::AnalyzeOriginal))
                    })?)
                } else {
                    None
                };
                let path = out.join("transient.csv");
                fs::write(&path, transient_text(&trom, torig.as_ref())).map_err(fail(Stage::Report))?;
                transient_csv = Some(path);
                if let Some(torig) = &torig {
                    let e = compare_transient(torig, &trom).map_err(fail(Stage::Compare))?;
                    log.line(&format!("transient: MRE {:.5e} %, MAX_RE {:.5e} %", e.mre, e.max_re));
                    summary.transient = Some(e);
                }
            }
        }
    }

    summary.peak_mem_gb = peak_rss_gb().unwrap_or(pv.peak_mem_estimate as f64 / 1e9);
    let report = out.join("report.csv");
    let performance = out.join("performance.csv");
    fs::write(&report, summary.report_csv()).map_err(fail(Stage::Report))?;
    fs::write(&performance, summary.performance_csv()).map_err(fail(Stage::Report))?;
    log.line(&format!(
        "performance: reduction {:.3} s, peak memory {:.4} GB",
        summary.reduction_time_s, summary.peak_mem_gb
    ));
    Ok(RunArtifacts {
        provenance: out.join("provenance.txt"),
        outdir: out.to_path_buf(),
        rom_files,
        touchstone,
        plots,
        transient: transient_csv,
        report,
        performance,
        log: log_path,
        summary,
        passivity_violations,
    })
}

fn write_ts(path: &Path, sp: &analysis::SParameterSet, comment: &str) -> Result<(), PipelineError> {
    let file = File::create(path).map_err(fail(Stage::Report))?;
    let mut w = std::io::BufWriter::new(file);
    write_touchstone(&mut w, sp, comment).map_err(fail(Stage::Report))?;
    w.flush().map_err(fail(Stage::Report))
}

fn transient_text(rom: &analysis::TransientResult, orig: Option<&analysis::TransientResult>) -> String {
    let q = rom.outputs.nrows();
    let mut s = String::from("time_s");
    for i in 1..=q {
        if orig.is_some() {
            let _ = write!(s, ",y{i}_original");
        }
        let _ = write!(s, ",y{i}_rom");
    }
    s.push('\n');
    for (k, t) in rom.times.iter().enumerate() {
        let _ = write!(s, "{t:.9e}");
        for i in 0..q {
            if let Some(o) = orig {
                let _ = write!(s, ",{:.9e}", o.outputs[(i, k)]);
            }
            let _ = write!(s, ",{:.9e}", rom.outputs[(i, k)]);
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::parse(text, Path::new("/cfg"), "job")
    }

    #[test]
    fn minimal_defaults() {
        let c = parse("netlist=a.sp\nepsilon=1e-3\n").unwrap();
        assert_eq!(c.input, ModelInput::Netlist(PathBuf::from("/cfg/a.sp")));
        assert_eq!(c.reduction.mode, ReductionMode::Auto);
        assert_eq!(c.reduction.dense_cutoff, 5000);
        assert_eq!(c.reduction.eks.tol, 1e-8);
        assert_eq!(c.analyses, vec![Analysis::Dc, Analysis::Sp]);
        assert_eq!(c.outdir, PathBuf::from("/cfg/job_out"));
        assert_eq!(c.sweep, SweepSpec::default());
    }

    #[test]
    fn rejects() {
        let cases = [
            ("netlist=a\nepsilon=1\nrom_order=3\n", "conflict"),
            ("netlist=a\nepsilonn=1\n", "unknown"),
            ("netlist=a\nepsilon=1\nepsilon=2\n", "duplicate"),
            ("netlist=a\n", "missing"),
            ("netlist=a\nepsilon=1\nanalyses=transient\n", "missing"),
            ("matrix_g=g\nmatrix_c=c\nepsilon=1\n", "missing"),
            ("netlist=a\nepsilon=1 # note\n", "value"),
            ("netlist=a\nepsilon=1\nmode=fast\n", "value"),
            ("netlist=a\nrom_order=0\n", "invalid"),
        ];
        for (text, kind) in cases {
            let err = parse(text).unwrap_err();
            let ok = match kind {
                "conflict" => matches!(err, ConfigError::Conflict(_)),
                "unknown" => matches!(err, ConfigError::UnknownKey { line: 2, .. }),
                "duplicate" => matches!(err, ConfigError::DuplicateKey { line: 3, .. }),
                "missing" => matches!(err, ConfigError::Missing(_)),
                "value" => matches!(err, ConfigError::Value { .. }),
                _ => matches!(err, ConfigError::Invalid(_)),
            };
            assert!(ok, "{text:?} gave {err:?}");
        }
    }

    #[test]
    fn dump_round_trip() {
        let c = parse(
            "# full\nmatrix_g=g.mtx\nmatrix_c=c.mtx\nmatrix_b=b.mtx\nmatrix_l=l.mtx\nmode=lowrank\nepsilon=inf\n\
             eks_tol=1e-9\nanalyses=transient,dc\ntransient_dt=1e-12\ntransient_horizon=1e-9\nz0=75\n",
        )
        .unwrap();
        assert_eq!(c.reduction.order_rule, OrderRule::Epsilon(f64::INFINITY));
        let again = RunConfig::parse(&c.dump(), Path::new("/elsewhere"), "other").unwrap();
        assert_eq!(c, again);
    }
}
