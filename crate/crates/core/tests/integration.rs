use std::fs;
use std::process::Command;

use cnfetlab::analysis::{dc_sweep, operating_point, Probe, SweepSpec};
use cnfetlab::bench::{
    self, build_multiplier, exp_freq_response, exp_noise, exp_noise_excluding, set_inputs, MultiplierConfig,
};
use cnfetlab::mna::NewtonConfig;

fn cnfetlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cnfetlab"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = cnfetlab().args(["model", "--chirality", "25,0"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.contains("D=1.981 nm") && text.contains("Vth=0.2201 V"), "{text}");

    let usage = cnfetlab().args(["tran", "x.cir"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(1));
    assert!(!usage.stderr.is_empty());

    let bad = dir.path().join("bad.cir");
    fs::write(&bad, "V1 a 0 1\nM1 a a 0 nosuchmodel\n").unwrap();
    let sim = cnfetlab().arg("op").arg(&bad).output().unwrap();
    assert_eq!(sim.status.code(), Some(2));
    let err = String::from_utf8_lossy(&sim.stderr);
    assert!(err.contains(":2:") && err.contains("nosuchmodel"), "{err}");

    let floating = dir.path().join("floating.cir");
    fs::write(&floating, "V1 a 0 1\nR1 a 0 1k\nC1 x y 1p\n").unwrap();
    assert_eq!(cnfetlab().arg("op").arg(&floating).output().unwrap().status.code(), Some(2));
}

#[test]
fn cli_writes_only_under_out() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("div.cir");
    fs::write(&net, "V1 in 0 1\nR1 in mid 1k\nR2 mid 0 1k\n").unwrap();
    let out = dir.path().join("out");
    let st = cnfetlab()
        .args(["dc"])
        .arg(&net)
        .args(["--sweep", "V1:0:1:0.5", "--probe", "mid"])
        .env("CNFETLAB_OUT", &out)
        .status()
        .unwrap();
    assert!(st.success());
    let csv = fs::read_to_string(out.join("dc.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t_or_f,v(mid)"));
    assert_eq!(csv.lines().nth(3), Some("1.00000000000e0,5.00000000000e-1"));
    let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 2);
}

#[test]
fn bench_summary_to_stdout() {
    let out = cnfetlab().args(["bench", "freq", "--ideal"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("| freq_response |") && text.contains("±400 mV"), "{text}");
}

#[test]
fn continuation_matches_cold_start() {
    let cfg = bench::calibrated(&MultiplierConfig::default()).unwrap();
    let n = build_multiplier(&cfg).unwrap();
    let newton = NewtonConfig::default();
    let outer = SweepSpec::new("V1", -0.4, 0.4, 0.1).link("V1N", -1.0);
    let inner = SweepSpec::new("V2", -0.4, 0.4, 0.2).link("V2N", -1.0);
    let probes = [Probe::node(bench::nodes::VO1), Probe::node(bench::nodes::VO2)];
    let swept = dc_sweep(&n, &outer, Some(&inner), &probes, &newton).unwrap();
    assert!(swept.failures.is_empty());
    let inner_values = swept.inner_values.clone().unwrap();
    for (j, v2) in inner_values.iter().enumerate() {
        for (i, v1) in swept.outer_values.iter().enumerate() {
            let mut cold = n.clone();
            set_inputs(&mut cold, *v1, *v2).unwrap();
            let op = operating_point(&cold, &newton).unwrap();
            for (k, p) in probes.iter().enumerate() {
                let a = swept.data[j][i][k];
                let b = op.voltage(&p.pos).unwrap();
                assert!((a - b).abs() <= 10.0 * newton.abs_tol_v, "({v1}, {v2}) {}: {a} vs {b}", p.pos);
            }
        }
    }
}

#[test]
fn low_frequency_ac_gain_matches_dc_slope() {
    let cfg = bench::calibrated(&MultiplierConfig::default()).unwrap();
    let newton = NewtonConfig::default();
    let vout = |v1: f64| {
        let mut n = build_multiplier(&cfg).unwrap();
        set_inputs(&mut n, v1, 0.2).unwrap();
        let op = operating_point(&n, &newton).unwrap();
        op.voltage(bench::nodes::VO2).unwrap() - op.voltage(bench::nodes::VO1).unwrap()
    };
    let h = 1e-4;
    let slope = (vout(h) - vout(-h)) / (2.0 * h);
    let ac = exp_freq_response(&cfg).unwrap().get("gain_lf").unwrap();
    assert!((ac / slope.abs() - 1.0).abs() < 1e-3, "ac {ac} vs dc {slope}");
}

#[test]
fn excluding_load_noise_lowers_output_noise() {
    let cfg = MultiplierConfig::default();
    let all = exp_noise(&cfg).unwrap().get("output_noise_lf").unwrap();
    let core_only = exp_noise_excluding(&cfg, &["M5", "M6"]).unwrap().get("output_noise_lf").unwrap();
    assert!(core_only < all, "{core_only} vs {all}");
    assert!(core_only > 0.0);
}

#[test]
fn doubling_gate_capacitance_halves_bandwidth() {
    let bw = |scale: f64| {
        let mut cfg = MultiplierConfig::default();
        cfg.model.c_eff *= scale;
        exp_freq_response(&cfg).unwrap().get("bandwidth_hz").unwrap()
    };
    let ratio = bw(1.0) / bw(2.0);
    assert!((ratio / 2.0 - 1.0).abs() < 0.25, "{ratio}");
}
