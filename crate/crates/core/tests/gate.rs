//! Short clocked runs on the coarse fork checking the device symmetries.

use swgate::analysis::theta_of;
use swgate::fields::DemagMode;
use swgate::runner::{antisymmetry_deviation, run_gate, run_single_arm, GateSetup, ScenarioConfig};
use swgate::transducers::{ClockParams, LogicBit};

fn short_config(demag: DemagMode) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.cell = [4.0, 4.0, cfg.cell[2]];
    cfg.demag = demag;
    cfg.clock = ClockParams {
        t_det: 0.3e-9,
        t_read: 0.6e-9,
        t_end: 0.6e-9,
        ..cfg.clock
    };
    cfg.output.snapshots.clear();
    cfg
}

#[test]
fn outer_inputs_are_mirror_images_with_local_demag() {
    let cfg = short_config(DemagMode::ThinFilmLocal);
    let setup = GateSetup::new(&cfg, cfg.fork).unwrap();
    let a = run_single_arm(&setup, 1).unwrap();
    let b = run_single_arm(&setup, 3).unwrap();
    assert_eq!(a.output.t, b.output.t);
    let th = |r: &swgate::dynamics::TraceRecord| -> Vec<f64> {
        r.m.iter().map(|&m| theta_of(m).unwrap_or(0.0)).collect()
    };
    let (t1, t3) = (th(&a.output), th(&b.output));
    let scale = t1.iter().cloned().fold(0.0, f64::max);
    assert!(scale > 0.1, "no signal reached the output: {scale}");
    let dev = t1.iter().zip(&t3).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(dev / scale <= 1e-6, "relative deviation {:e}", dev / scale);
    assert!((a.forward - b.forward).abs() <= 1e-6 * a.forward);
}

#[test]
fn complemented_inputs_give_negated_output() {
    // A π rotation about z maps the 010 run onto the 101 run exactly for a
    // single-layer mesh, dipolar field included; only FFT round-off and the
    // adaptive step sequence separate the two runs.
    let cfg = short_config(DemagMode::FullFft);
    let setup = GateSetup::new(&cfg, cfg.fork).unwrap();
    let (o, z) = (LogicBit::One, LogicBit::Zero);
    let a = run_gate(&setup, [z, o, z], cfg.clock.t_det).unwrap();
    let b = run_gate(&setup, [o, z, o], cfg.clock.t_det).unwrap();
    assert_eq!(a.output.t, b.output.t);
    let d = antisymmetry_deviation(&a.output, &b.output);
    assert!(d <= 1e-4, "max |mx(010) + mx(101)| = {d:e}");
    assert_ne!(a.result.detected, b.result.detected);
    assert!((a.result.margin - b.result.margin).abs() <= 1e-4);
}
