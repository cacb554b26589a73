mod common;

use common::*;
use faer::Mat;
use rand::Rng;
use rlck_mor::analysis::*;
use rlck_mor::bt::{reduce, OrderRule, ReductionConfig, ReductionMode};
use rlck_mor::mna::{assemble_mna, to_state_space, StateSpaceModel};
use rlck_mor::netlist::parse_netlist;
use rlck_mor::sparse::{self, c64};
use rlck_mor::synth::{series_resistor, shunt_resistor, RcLadder, RlckLine};

fn model(text: &str) -> StateSpaceModel {
    to_state_space(&assemble_mna(&parse_netlist(text).unwrap()).unwrap())
}

fn scalar() -> StateSpaceModel {
    let one = |v: f64| sparse::from_triplets(1, 1, [(0, 0, v)]);
    StateSpaceModel::new(one(1.0), one(-1.0), one(1.0), one(1.0))
}

#[test]
fn resistor_impedance_is_flat() {
    let m = model("R1 a 0 50\nP1 a\n");
    for w in [0.0, 1e3, 1e11] {
        let h = m.transfer_function(c64::new(0.0, w)).unwrap()[(0, 0)];
        assert!((h - c64::new(50.0, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn rc_dc_blocks_capacitor() {
    let m = model("R1 a 0 1k\nC1 a 0 1p\nP1 a\n");
    assert!((m.dc_solve().unwrap()[(0, 0)] - 1000.0).abs() < 1e-9);
    // |Z| = R / sqrt(1 + (ωRC)²)
    let w = 1e9;
    let z = m.transfer_function(c64::new(0.0, w)).unwrap()[(0, 0)];
    assert!((z.norm() - 1000.0 / (1.0 + (w * 1e-9f64).powi(2)).sqrt()).abs() < 1e-9);
}

#[test]
fn divider_matches_nodal_analysis() {
    // current into top, voltage read at top and mid: R1 top-mid, R2 mid-ground, probe port at mid
    let m = model("R1 top mid 1k\nR2 mid 0 1k\nP1 top\nP2 mid\n");
    let h = m.dc_solve().unwrap();
    // hand nodal analysis: Z11 = 2k, Z21 = Z12 = Z22 = 1k
    let expect = [[2000.0, 1000.0], [1000.0, 1000.0]];
    for (i, row) in expect.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((h[(i, j)] - v).abs() < 1e-9, "({i}, {j})");
        }
    }
}

#[test]
fn inductor_is_dc_short() {
    let m = model("L1 a 0 1n\nC1 a 0 1p\nP1 a\n");
    assert!(m.dc_solve().unwrap()[(0, 0)].abs() < 1e-15);
}

#[test]
fn floating_node_is_diagnosed() {
    let m = model("R1 a 0 50\nC1 a b 1p\nR2 b c 10\nC2 c 0 1p\nP1 a\n");
    match m.dc_solve() {
        Err(AnalysisError::FloatingNodes(nodes)) => assert_eq!(nodes, vec!["b".to_string(), "c".to_string()]),
        other => panic!("expected floating nodes, got {other:?}"),
    }
}

#[test]
fn reciprocity() {
    let m = to_state_space(&assemble_mna(&RlckLine::with_segments(20).build().unwrap()).unwrap());
    let mut r = rng(2);
    for _ in 0..10 {
        let s = c64::new(r.gen::<f64>() * 1e9, r.gen::<f64>() * 1e11);
        let h = m.transfer_function(s).unwrap();
        assert!((h[(0, 1)] - h[(1, 0)]).norm() <= 1e-10 * h[(0, 1)].norm());
    }
    let sp = sp_sweep(&m, &FrequencySweep::default(), 50.0).unwrap();
    for s in &sp.data {
        assert!((s[(0, 1)] - s[(1, 0)]).norm() <= 1e-8);
    }
}

#[test]
fn terminated_response_matches_impedance_form() {
    let m = to_state_space(&assemble_mna(&RcLadder::with_nodes(15).build().unwrap()).unwrap());
    for f in [1e8, 3e9, 7e10] {
        let s = c64::new(0.0, 2.0 * std::f64::consts::PI * f);
        let z = m.transfer_function(s).unwrap();
        let via_z = z_to_s(z.as_ref(), 50.0).unwrap();
        let sp = sp_sweep(&m, &FrequencySweep::new(vec![f], SweepScale::Linear).unwrap(), 50.0).unwrap();
        assert!(max_rel(sp.data[0].as_ref(), via_z.as_ref()) < 1e-12);
    }
}

#[test]
fn analytic_s_parameters() {
    let sweep = FrequencySweep::default();
    let series = to_state_space(&assemble_mna(&series_resistor(50.0).unwrap()).unwrap());
    for s in &sp_sweep(&series, &sweep, 50.0).unwrap().data {
        assert!((s[(1, 0)] - c64::new(2.0 / 3.0, 0.0)).norm() <= 1e-9);
        assert!((s[(0, 0)] - c64::new(1.0 / 3.0, 0.0)).norm() <= 1e-9);
    }
    let matched = to_state_space(&assemble_mna(&shunt_resistor(50.0).unwrap()).unwrap());
    for s in &sp_sweep(&matched, &sweep, 50.0).unwrap().data {
        assert!(s[(0, 0)].norm() <= 1e-9);
    }
    let open = to_state_space(&assemble_mna(&shunt_resistor(1e12).unwrap()).unwrap());
    for s in &sp_sweep(&open, &sweep, 50.0).unwrap().data {
        assert!((s[(0, 0)] - c64::new(1.0, 0.0)).norm() <= 1e-6);
    }
}

#[test]
fn synthetic_originals_are_passive() {
    let sweep = FrequencySweep::default();
    for net in [RcLadder::with_nodes(60).build().unwrap(), RlckLine::with_segments(40).build().unwrap()] {
        let sp = sp_sweep(&to_state_space(&assemble_mna(&net).unwrap()), &sweep, 50.0).unwrap();
        assert!(sp.passivity_violations().is_empty());
        assert!(sp.max_singular_values().iter().all(|&s| s <= 1.0 + PASSIVITY_TOL));
    }
}

#[test]
fn low_frequency_matches_dc() {
    let m = to_state_space(&assemble_mna(&RcLadder::with_nodes(100).build().unwrap()).unwrap());
    let h0 = m.dc_solve().unwrap();
    let z = m.transfer_function(c64::new(0.0, 2.0 * std::f64::consts::PI)).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            assert!((z[(i, j)] - c64::new(h0[(i, j)], 0.0)).norm() <= 1e-3 * h0[(i, j)].abs());
        }
    }
}

#[test]
fn zero_input_gives_zero_output() {
    let m = to_state_space(&assemble_mna(&RlckLine::with_segments(10).build().unwrap()).unwrap());
    let u = Mat::<f64>::zeros(2, 101);
    let t = transient(&m, u.as_ref(), 1e-12, 1e-10).unwrap();
    assert_eq!(t.times.len(), 101);
    assert_eq!(t.scheme, Scheme::BackwardEuler);
    assert!(t.outputs.norm_max() == 0.0);
}

#[test]
fn backward_euler_first_order_convergence() {
    let m = scalar();
    let err = |dt: f64| {
        let u = step_input(1, dt, 1.0).unwrap();
        let t = transient(&m, u.as_ref(), dt, 1.0).unwrap();
        let last = t.times.len() - 1;
        assert!((t.times[last] - 1.0).abs() < 1e-9);
        (t.outputs[(0, last)] - (1.0 - (-1.0f64).exp())).abs()
    };
    let (e1, e2) = (err(1e-3), err(2e-3));
    assert!(e1 < 1e-3);
    let ratio = e2 / e1;
    assert!((1.7..=2.3).contains(&ratio), "{ratio}");
}

#[test]
fn transient_input_checks() {
    let m = scalar();
    let u = Mat::<f64>::zeros(1, 5);
    assert!(transient(&m, u.as_ref(), 0.1, 1.0).is_err());
    assert!(transient(&m, u.as_ref(), 0.0, 1.0).is_err());
    assert!(transient(&m, Mat::<f64>::zeros(2, 20).as_ref(), 0.1, 1.0).is_err());
}

#[test]
fn full_order_rom_reproduces_dc() {
    let m = to_state_space(&assemble_mna(&RcLadder::with_nodes(8).build().unwrap()).unwrap());
    let cfg = ReductionConfig {
        mode: ReductionMode::Dense,
        ..ReductionConfig::new(OrderRule::Order(8))
    };
    let rom = reduce(&m, &cfg).unwrap();
    let e = compare_dc(m.dc_solve().unwrap().as_ref(), rom.dc_solve().unwrap().as_ref()).unwrap();
    assert!(e.max_re <= 1e-6);
    let sweep = FrequencySweep::default();
    let e = compare_sp(&sp_sweep(&m, &sweep, 50.0).unwrap(), &sp_sweep(&rom, &sweep, 50.0).unwrap()).unwrap();
    assert!(e.mre <= 1e-6);
    let u = step_input(2, 1e-12, 2e-10).unwrap();
    let (a, b) = (transient(&m, u.as_ref(), 1e-12, 2e-10).unwrap(), transient(&rom, u.as_ref(), 1e-12, 2e-10).unwrap());
    assert!(compare_transient(&a, &b).unwrap().max_re <= 1e-6);
}

#[test]
fn compare_semantics() {
    let a = Mat::from_fn(2, 2, |i, j| (i + 2 * j + 1) as f64);
    assert_eq!(compare_dc(a.as_ref(), a.as_ref()).unwrap(), ErrorStats { mre: 0.0, max_re: 0.0 });
    let scaled = &a * 1.01;
    let e = compare_dc(a.as_ref(), scaled.as_ref()).unwrap();
    assert!((e.mre - 1.0).abs() < 1e-12 && (e.max_re - 1.0).abs() < 1e-12);
    assert!(compare_dc(a.as_ref(), Mat::<f64>::zeros(2, 3).as_ref()).is_err());
    // zero reference uses the floor
    let e = compare_real(&[0.0], &[1e-12]).unwrap();
    assert!((e.max_re - 100.0).abs() < 1e-9);
    assert!(e.mre <= e.max_re);
}

#[test]
fn report_columns() {
    let r = ErrorReport {
        model: "line".into(),
        rom_order: 12,
        reduction_pct: 97.0,
        dc: Some(ErrorStats { mre: 0.001, max_re: 0.002 }),
        sp: None,
        transient: None,
        reduction_time_s: 1.5,
        peak_mem_gb: 0.25,
    };
    assert_eq!(
        r.report_csv(),
        "model,rom_order,reduction_pct,dc_mre,dc_max_re,sp_mre,sp_max_re,tran_mre,tran_max_re\n\
         line,12,9.70000e1,1.00000e-3,2.00000e-3,,,,\n"
    );
    assert_eq!(
        r.performance_csv(),
        "model,rom_order,reduction_time_s,memory_gb\nline,12,1.50000e0,2.50000e-1\n"
    );
}

#[test]
fn touchstone_and_plot_files() {
    let m = to_state_space(&assemble_mna(&RcLadder::with_nodes(10).build().unwrap()).unwrap());
    let sweep = FrequencySweep::build(1e9, 1e10, 5, SweepScale::Linear).unwrap();
    let sp = sp_sweep(&m, &sweep, 50.0).unwrap();
    let mut buf = Vec::new();
    write_touchstone(&mut buf, &sp, "ladder").unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "! ladder");
    assert_eq!(lines[1], "# HZ S RI R 50");
    assert_eq!(lines.len(), 7);
    let fields: Vec<f64> = lines[2].split_whitespace().map(|w| w.parse().unwrap()).collect();
    assert_eq!(fields.len(), 9);
    assert_eq!(fields[0], 1e9);
    // S21 precedes S12 in two-port records
    assert!((fields[3] - sp.data[0][(1, 0)].re).abs() < 1e-12);
    let dir = tempfile::tempdir().unwrap();
    let files = write_plot_csvs(dir.path(), "orig", &sp).unwrap();
    assert_eq!(files.len(), 4);
    let csv = std::fs::read_to_string(dir.path().join("orig_S21.csv")).unwrap();
    assert!(csv.starts_with("freq_hz,mag_db,phase_deg\n"));
    assert_eq!(csv.lines().count(), 6);
    assert_eq!(touchstone_path(dir.path(), "rom", 2).file_name().unwrap(), "rom.s2p");
}

#[test]
fn sweep_is_frequency_ordered() {
    let m = to_state_space(&assemble_mna(&RcLadder::with_nodes(30).build().unwrap()).unwrap());
    let sweep = FrequencySweep::default();
    let sp = sp_sweep(&m, &sweep, 50.0).unwrap();
    assert_eq!(sp.freqs, sweep.points());
    for (k, f) in [0usize, 100, 200].iter().zip([sweep.points()[0], sweep.points()[100], sweep.points()[200]]) {
        let single = sp_sweep(&m, &FrequencySweep::new(vec![f], SweepScale::Linear).unwrap(), 50.0).unwrap();
        assert_eq!(single.data[0], sp.data[*k]);
    }
    assert!(matches!(
        sp_sweep(&m, &sweep, 0.0),
        Err(AnalysisError::Sweep(_))
    ));
}
