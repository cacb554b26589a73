use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rlck_mor::mna::{assemble_mna, to_state_space};
use rlck_mor::mtx::{save_matrices, MatrixPaths};
use rlck_mor::pipeline::*;
use rlck_mor::synth::{RcLadder, RlckLine};

fn setup(dir: &Path, extra: &str) -> std::path::PathBuf {
    fs::write(dir.join("ladder.sp"), RcLadder::with_nodes(120).build().unwrap().to_text()).unwrap();
    let cfg = dir.join("job.cfg");
    fs::write(&cfg, format!("# ladder run\nnetlist=ladder.sp\n{extra}")).unwrap();
    cfg
}

#[test]
fn full_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config(&setup(dir.path(), "epsilon=1e-3\n")).unwrap();
    assert_eq!(cfg.outdir, dir.path().join("job_out"));
    let a = run(&cfg).unwrap();
    for f in a.rom_files.iter().chain([&a.provenance, &a.report, &a.performance, &a.log]) {
        assert!(f.is_file(), "{}", f.display());
    }
    assert_eq!(a.rom_files.len(), 4);
    let names: Vec<_> = a.touchstone.iter().map(|p| p.file_name().unwrap().to_str().unwrap()).collect();
    assert_eq!(names, ["rom.s2p", "original.s2p"]);
    assert_eq!(a.plots.len(), 8);
    assert!(a.summary.reduction_pct > 0.0);
    assert!(a.summary.dc.unwrap().mre < 1.0);
    assert!(a.summary.sp.unwrap().mre < 1.0);

    let report = fs::read_to_string(&a.report).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "model,rom_order,reduction_pct,dc_mre,dc_max_re,sp_mre,sp_max_re,tran_mre,tran_max_re"
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "ladder");
    assert!(row[3..7].iter().all(|f| !f.is_empty()));
    assert!(row[7..].iter().all(|f| f.is_empty()));

    let log = fs::read_to_string(&a.log).unwrap();
    for stage in ["ingest: done", "reduce: done", "export: done", "analyze-original: done", "analyze-rom: done"] {
        assert!(log.contains(stage), "{stage}");
    }
    assert!(log.contains("% reduction"));
}

#[test]
fn dc_only_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(&load_config(&setup(dir.path(), "rom_order=6\nanalyses=dc\n")).unwrap()).unwrap();
    assert!(a.touchstone.is_empty());
    assert!(!a.outdir.join("rom.s2p").exists());
    let report = fs::read_to_string(&a.report).unwrap();
    let row: Vec<&str> = report.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "6");
    assert!(!row[3].is_empty() && !row[4].is_empty());
    assert!(row[5..].iter().all(|f| f.is_empty()));
}

#[test]
fn transient_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "rom_order=20\nanalyses=transient\ntransient_dt=1e-12\ntransient_horizon=5e-11\n");
    let a = run(&load_config(&cfg).unwrap()).unwrap();
    let csv = fs::read_to_string(a.transient.unwrap()).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "time_s,y1_original,y1_rom,y2_original,y2_rom");
    assert_eq!(csv.lines().count(), 52);
    assert!(a.summary.transient.is_some());
}

#[test]
fn unwritable_outdir_fails_fast() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("blocker"), "").unwrap();
    let cfg = load_config(&setup(dir.path(), "epsilon=1e-3\noutdir=blocker/out\n")).unwrap();
    let t = Instant::now();
    let err = run(&cfg).unwrap_err();
    assert_eq!(err.stage, Stage::Output);
    assert!(t.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn rom_files_survive_a_later_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config(&setup(dir.path(), "rom_order=5\n")).unwrap();
    // a directory where the Touchstone file should go makes the SP stage fail
    fs::create_dir_all(cfg.outdir.join("rom.s2p")).unwrap();
    let err = run(&cfg).unwrap_err();
    assert_eq!(err.stage, Stage::Report);
    for f in ["Gt.mtx", "Ct.mtx", "Bt.mtx", "Lt.mtx", "provenance.txt"] {
        assert!(cfg.outdir.join(f).is_file(), "{f}");
    }
    assert!(fs::read_to_string(cfg.outdir.join("run.log")).unwrap().contains("error: report stage failed"));
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = load_config(&setup(dir.path(), "epsilon=1e-4\n")).unwrap();
    let first = fs::read(run(&cfg).unwrap().report).unwrap();
    let second = fs::read(run(&cfg).unwrap().report).unwrap();
    assert_eq!(first, second);
}

#[test]
fn matrix_input() {
    let dir = tempfile::tempdir().unwrap();
    let model = to_state_space(&assemble_mna(&RlckLine::with_segments(30).build().unwrap()).unwrap());
    let paths = MatrixPaths {
        g: dir.path().join("line_G.mtx"),
        c: dir.path().join("line_C.mtx"),
        b: dir.path().join("line_B.mtx"),
        l: dir.path().join("line_L.mtx"),
    };
    save_matrices(&model, &paths).unwrap();
    fs::write(
        dir.path().join("m.cfg"),
        "matrix_g=line_G.mtx\nmatrix_c=line_C.mtx\nmatrix_b=line_B.mtx\nmatrix_l=line_L.mtx\n\
         rom_order=30\nmode=lowrank\nsweep_points=21\noutdir=res\n",
    )
    .unwrap();
    let cfg = load_config(&dir.path().join("m.cfg")).unwrap();
    assert_eq!(cfg.model_name(), "line_G");
    let a = run(&cfg).unwrap();
    assert_eq!(a.outdir, dir.path().join("res"));
    assert!(a.summary.sp.unwrap().mre < 1e-3);
    let prov = fs::read_to_string(&a.provenance).unwrap();
    assert!(prov.contains("mode=lowrank"));
}

#[test]
fn cli_dry_run_and_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_rlck-mor");
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "epsilon=1e-3\n");
    let out = Command::new(exe).args(["reduce", cfg.to_str().unwrap(), "--dry-run"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("epsilon=0.001") && text.contains("mode=auto"));
    assert!(!dir.path().join("job_out").exists());

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "netlist=ladder.sp\nepsilon=1\nrom_order=2\n").unwrap();
    let out = Command::new(exe).args(["reduce", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("mutually exclusive"));

    let broken = dir.path().join("broken.cfg");
    fs::write(&broken, "netlist=missing.sp\nepsilon=1\n").unwrap();
    let out = Command::new(exe).args(["reduce", broken.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("ingest stage failed"));

    let out = Command::new(exe).args(["reduce", cfg.to_str().unwrap(), "--verbose"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("reduce: done"));
    assert!(dir.path().join("job_out/report.csv").is_file());
}
