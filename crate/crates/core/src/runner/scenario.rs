//! Scenario orchestration: single-arm runs, calibration, truth table, spacing
//! sweep and the straight-bus characterization.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Map, Value};

use super::config::{Scenario, ScenarioConfig, MIN_SPACING_NM};
use super::output::{write_amplitude_csv, write_summary, write_trace_csv, RunEntry, RunSummary};
use super::ovf::write_snapshot_ovf;
use crate::analysis::{
    dispersion_frequency, estimate_wavelength, spectrum, theta_of, transmission_ratio, AmplitudeMap,
};
use crate::dynamics::{
    relax_initial_state, run_simulation, ProbeSpec, RunOptions, RunOutput, Snapshot, TraceRecord,
};
use crate::error::{Error, Result};
use crate::fields::{Model, VectorField};
use crate::geometry::{build_fork, build_straight_bus, ForkSpec, LabeledMesh, RegionLabel};
use crate::transducers::{
    bits_string, calibrate_t_det, detect_output, encode_logic, majority_reference, relative_spread,
    ClockParams, ClockPulse, ClockSchedule, GateResult, LogicBit,
};
use crate::vec3::Vec3;

/// Allowed window for the calibrated detection time, s.
pub const T_DET_RANGE: (f64, f64) = (0.5e-9, 1.1e-9);
/// Largest relative θ spread accepted at the calibrated detection time.
pub const MAX_THETA_SPREAD: f64 = 0.10;
pub const FORWARD_RANGE: (f64, f64) = (0.78, 1.0);
pub const BACK_RANGE: (f64, f64) = (0.74, 1.0);
/// Largest |mx(010) + mx(101)| along the two symmetric-input traces.
pub const ANTISYMMETRY_TOL: f64 = 0.05;
/// Straight-bus observation times, s.
pub const BUS_T_FORMED: f64 = 0.77e-9;
pub const BUS_T_DISPERSED: f64 = 1.3e-9;
pub const BUS_MIN_DECAY: f64 = 0.7;
pub const BUS_WAVELENGTH_NM: f64 = 210.0;
pub const BUS_WAVELENGTH_TOL: f64 = 0.30;
/// Arrival is the first sample above this fraction of the probe's peak amplitude.
pub const ARRIVAL_FRACTION: f64 = 0.1;

const ARM_PROBES: [&str; 3] = ["in1_arm", "in2_arm", "in3_arm"];

/// A fork device with its field model, shared by all runs on that geometry.
#[derive(Debug)]
pub struct GateSetup {
    pub cfg: ScenarioConfig,
    pub fork: ForkSpec,
    pub model: Model,
}

impl GateSetup {
    pub fn new(cfg: &ScenarioConfig, fork: ForkSpec) -> Result<Self> {
        let [dx, dy, dz] = cfg.cell;
        let mesh = fork.fitting_mesh(dx, dy, dz)?;
        let lm = build_fork(&fork, &mesh)?;
        let model = Model::new(lm, cfg.materials.clone(), Some(cfg.demag))?;
        Ok(Self {
            cfg: cfg.clone(),
            fork,
            model,
        })
    }

    pub fn mesh(&self) -> &LabeledMesh {
        &self.model.mesh
    }

    pub fn cells(&self, name: &str) -> Result<Vec<usize>> {
        match self.mesh().probe_cells(name) {
            Some(c) if !c.is_empty() => Ok(c),
            _ => Err(Error::InvalidParameter(format!("unknown or empty probe `{name}`"))),
        }
    }

    /// Bus +z; inputs in-plane with their logic value (unexcited inputs and
    /// the output start at logic 0).
    pub fn seed(&self, bits: [LogicBit; 3], excited: [bool; 3]) -> VectorField {
        let lm = self.mesh();
        let mut m = VectorField::zeros(lm.labels.len());
        for (idx, l) in lm.labels.iter().enumerate() {
            if !l.is_active() {
                continue;
            }
            m[idx] = match l.me_index() {
                Some(s) if s < 3 && excited[s] => encode_logic(bits[s]),
                Some(_) => encode_logic(LogicBit::Zero),
                None => [0.0, 0.0, 1.0],
            };
        }
        m
    }

    /// Output probe first, then arms and ME cells.
    pub fn probes(&self) -> Result<Vec<ProbeSpec>> {
        let period = self.cfg.output.sample_period;
        let mut names = vec![self.cfg.output_probe.clone()];
        for n in ARM_PROBES.iter().chain(&["output_arm"]) {
            names.push(n.to_string());
        }
        for l in RegionLabel::ME_CELLS {
            names.push(l.name().to_string());
        }
        let mut out: Vec<ProbeSpec> = Vec::new();
        for n in names {
            if out.iter().any(|p| p.name == n) {
                continue;
            }
            out.push(ProbeSpec {
                cells: self.cells(&n)?,
                name: n,
                period,
            });
        }
        Ok(out)
    }

    fn options(&self, amplitude: bool, t_end: f64) -> Result<RunOptions> {
        let mut a = self.cfg.output.amplitude;
        a.t1 = a.t1.min(t_end);
        Ok(RunOptions {
            probes: self.probes()?,
            snapshot_times: self.cfg.output.snapshots.clone(),
            amplitude: amplitude.then_some(a),
            energy_period: None,
        })
    }

    /// Relaxes the seeded state under the schedule's t = 0 strain and runs to `t_end`.
    pub fn simulate(
        &self,
        bits: [LogicBit; 3],
        excited: [bool; 3],
        schedule: &ClockSchedule,
        opts: &RunOptions,
    ) -> Result<RunOutput> {
        let seed = self.seed(bits, excited);
        let state = relax_initial_state(&self.model, seed, schedule.k_extra_at(0.0), &self.cfg.relax)?;
        run_simulation(&self.model, &self.cfg.solver, state, schedule, opts, schedule.t_end)
    }
}

fn trace<'a>(run: &'a RunOutput, name: &str) -> Result<&'a TraceRecord> {
    run.traces
        .iter()
        .find(|r| r.name == name)
        .ok_or_else(|| Error::Analysis(format!("no trace `{name}`")))
}

/// One input excited, the others and the output held idle.
#[derive(Debug, Clone)]
pub struct SingleArmRun {
    /// 1-based input number.
    pub input: usize,
    pub output: TraceRecord,
    pub amplitude: AmplitudeMap,
    /// Excited arm → output arm.
    pub forward: f64,
    /// Excited arm → the other two input arms together.
    pub back: f64,
    /// Per-arm back-propagation ratios, by probe name.
    pub back_each: Vec<(String, f64)>,
    pub max_theta: f64,
    pub run: RunOutput,
    pub wall_s: f64,
}

impl SingleArmRun {
    pub fn label(&self) -> String {
        format!("single_arm_in{}", self.input)
    }

    pub fn entry(&self) -> RunEntry {
        let mut metrics = Map::new();
        metrics.insert("input".into(), json!(self.input));
        metrics.insert("forward_transmission".into(), json!(self.forward));
        metrics.insert("back_propagation".into(), json!(self.back));
        for (n, r) in &self.back_each {
            metrics.insert(format!("back_to_{n}"), json!(r));
        }
        metrics.insert("max_theta_deg".into(), json!(self.max_theta));
        RunEntry {
            label: self.label(),
            metrics,
            steps: self.run.stats,
            wall_s: self.wall_s,
            ..Default::default()
        }
    }
}

pub fn run_single_arm(setup: &GateSetup, input: usize) -> Result<SingleArmRun> {
    if !(1..=3).contains(&input) {
        return Err(Error::InvalidParameter(format!("input {input} not in 1..=3")));
    }
    let start = Instant::now();
    let mut excited = [false; 3];
    excited[input - 1] = true;
    let schedule = ClockSchedule::gate_without_release(&setup.cfg.clock, excited)?;
    let opts = setup.options(true, schedule.t_end)?;
    let run = setup.simulate([LogicBit::Zero; 3], excited, &schedule, &opts)?;
    let amplitude = run
        .amplitude
        .clone()
        .ok_or_else(|| Error::Analysis("amplitude map missing".into()))?;
    let from = setup.cells(ARM_PROBES[input - 1])?;
    let forward = transmission_ratio(&amplitude, &from, &setup.cells("output_arm")?)?;
    let mut back_each = Vec::new();
    let mut others = Vec::new();
    for (k, name) in ARM_PROBES.iter().enumerate() {
        if k + 1 == input {
            continue;
        }
        let c = setup.cells(name)?;
        back_each.push((name.to_string(), transmission_ratio(&amplitude, &from, &c)?));
        others.extend(c);
    }
    let back = transmission_ratio(&amplitude, &from, &others)?;
    let output = trace(&run, &setup.cfg.output_probe)?.clone();
    let max_theta = output
        .m
        .iter()
        .filter_map(|&m| theta_of(m))
        .fold(0.0, f64::max);
    Ok(SingleArmRun {
        input,
        output,
        amplitude,
        forward,
        back,
        back_each,
        max_theta,
        run,
        wall_s: start.elapsed().as_secs_f64(),
    })
}

/// The three single-arm runs (in parallel) in input order.
pub fn run_single_arms(setup: &GateSetup) -> Vec<Result<SingleArmRun>> {
    (1..=3usize).into_par_iter().map(|i| run_single_arm(setup, i)).collect()
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub t_det: f64,
    /// θ of the three output traces at `t_det`, degrees.
    pub theta: [f64; 3],
    pub spread: f64,
    /// max |θ1 − θ3| over the run relative to the largest θ1.
    pub mirror_deviation: f64,
}

pub fn calibrate(setup: &GateSetup, arms: &[SingleArmRun; 3]) -> Result<Calibration> {
    let traces = [arms[0].output.clone(), arms[1].output.clone(), arms[2].output.clone()];
    let t_det = calibrate_t_det(&traces, &setup.cfg.calibration)?;
    let mut theta = [0.0; 3];
    for (k, r) in traces.iter().enumerate() {
        let m = r.sample_at(t_det).ok_or(Error::MissingSample(t_det))?;
        theta[k] = theta_of(m).unwrap_or(0.0);
    }
    let th1: Vec<f64> = traces[0].m.iter().map(|&m| theta_of(m).unwrap_or(0.0)).collect();
    let th3: Vec<f64> = traces[2].m.iter().map(|&m| theta_of(m).unwrap_or(0.0)).collect();
    let scale = th1.iter().cloned().fold(0.0, f64::max);
    let dev = th1.iter().zip(&th3).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Calibration {
        t_det,
        theta,
        spread: relative_spread(theta),
        mirror_deviation: if scale > 0.0 { dev / scale } else { 0.0 },
    })
}

/// One clocked gate evaluation.
#[derive(Debug, Clone)]
pub struct GateRun {
    pub bits: [LogicBit; 3],
    pub expected: LogicBit,
    pub result: GateResult,
    pub output: TraceRecord,
    pub run: RunOutput,
    pub wall_s: f64,
}

impl GateRun {
    pub fn label(&self) -> String {
        format!("gate_{}", bits_string(&self.bits))
    }

    pub fn correct(&self) -> bool {
        self.result.detected == self.expected
    }

    pub fn entry(&self) -> RunEntry {
        let mut metrics = Map::new();
        metrics.insert("m_read".into(), json!(self.result.m_read));
        RunEntry {
            label: self.label(),
            bits: Some(bits_string(&self.bits)),
            expected: Some(self.expected.as_u8()),
            detected: Some(self.result.detected.as_u8()),
            margin: Some(self.result.margin),
            weak: Some(self.result.weak),
            correct: Some(self.correct()),
            metrics,
            steps: self.run.stats,
            wall_s: self.wall_s,
        }
    }
}

pub fn run_gate(setup: &GateSetup, bits: [LogicBit; 3], t_det: f64) -> Result<GateRun> {
    let start = Instant::now();
    let clock = ClockParams {
        t_det,
        ..setup.cfg.clock
    };
    let schedule = ClockSchedule::gate(&clock, [true; 3])?;
    let opts = setup.options(false, schedule.t_end)?;
    let run = setup.simulate(bits, [true; 3], &schedule, &opts)?;
    let output = trace(&run, &setup.cfg.output_probe)?.clone();
    let result = detect_output(&output, schedule.t_read)?;
    Ok(GateRun {
        bits,
        expected: majority_reference(bits[0], bits[1], bits[2]),
        result,
        output,
        run,
        wall_s: start.elapsed().as_secs_f64(),
    })
}

/// All eight input words in binary order 000 … 111.
pub fn all_inputs() -> Vec<[LogicBit; 3]> {
    (0..8u8)
        .map(|w| {
            std::array::from_fn(|k| LogicBit::from_u8((w >> (2 - k)) & 1).expect("bit"))
        })
        .collect()
}

/// Largest |a(t) + b(t)| of the mx components of two traces on a common grid.
pub fn antisymmetry_deviation(a: &TraceRecord, b: &TraceRecord) -> f64 {
    a.m.iter()
        .zip(&b.m)
        .map(|(x, y)| (x[0] + y[0]).abs())
        .fold(0.0, f64::max)
}

/// Straight-bus wave-packet observables.
#[derive(Debug, Clone)]
pub struct BusReport {
    pub probe: TraceRecord,
    /// In-plane amplitude at the probe column, `(t, a)`.
    pub amplitude: Vec<(f64, f64)>,
    pub peak: f64,
    pub peak_time: f64,
    pub arrival_time: f64,
    pub decay: f64,
    /// `None` when the profile has too few zero crossings.
    pub wavelength_nm: Option<f64>,
    /// mx along the centre rows at the formation time.
    pub profile: Vec<(f64, f64)>,
    pub spectrum_peak_hz: Option<f64>,
    /// Exchange-only dispersion at k = 2π/λ, Hz.
    pub dispersion_hz: Option<f64>,
    pub run: RunOutput,
    pub mesh: LabeledMesh,
    pub wall_s: f64,
}

impl BusReport {
    pub fn entry(&self) -> RunEntry {
        let mut metrics = Map::new();
        metrics.insert("peak_amplitude".into(), json!(self.peak));
        metrics.insert("peak_time_s".into(), json!(self.peak_time));
        metrics.insert("arrival_time_s".into(), json!(self.arrival_time));
        metrics.insert("decay".into(), json!(self.decay));
        metrics.insert("wavelength_nm".into(), json!(self.wavelength_nm));
        metrics.insert("spectrum_peak_hz".into(), json!(self.spectrum_peak_hz));
        metrics.insert("dispersion_hz".into(), json!(self.dispersion_hz));
        RunEntry {
            label: "bus".into(),
            metrics,
            steps: self.run.stats,
            wall_s: self.wall_s,
            ..Default::default()
        }
    }
}

pub fn run_bus(cfg: &ScenarioConfig) -> Result<BusReport> {
    let start = Instant::now();
    let [dx, dy, dz] = cfg.cell;
    let mesh = cfg.bus.fitting_mesh(dx, dy, dz)?;
    let lm = build_straight_bus(&cfg.bus, &mesh)?;
    let model = Model::new(lm.clone(), cfg.materials.clone(), Some(cfg.demag))?;
    let t_end = cfg.clock.t_end;
    let mut pulses = [None; 4];
    pulses[0] = Some(ClockPulse {
        t_on: cfg.clock.t_excite,
        t_off: None,
        k_level: cfg.clock.k_level,
        rise_time: cfg.clock.rise_time,
    });
    let schedule = ClockSchedule {
        pulses,
        t_det: t_end,
        t_read: t_end,
        t_end,
    };
    schedule.validate()?;

    let mut seed = VectorField::zeros(lm.labels.len());
    for (idx, l) in lm.labels.iter().enumerate() {
        if l.is_active() {
            seed[idx] = if l.is_me_cell() {
                encode_logic(LogicBit::Zero)
            } else {
                [0.0, 0.0, 1.0]
            };
        }
    }
    let state = relax_initial_state(&model, seed, schedule.k_extra_at(0.0), &cfg.relax)?;
    let probe_cells = lm
        .probe_cells("probe")
        .ok_or_else(|| Error::Geometry("bus has no probe column".into()))?;
    let mut snaps = cfg.output.snapshots.clone();
    snaps.extend([BUS_T_FORMED, BUS_T_DISPERSED]);
    let opts = RunOptions {
        probes: vec![ProbeSpec {
            name: "probe".into(),
            cells: probe_cells,
            period: cfg.output.sample_period,
        }],
        snapshot_times: snaps,
        amplitude: None,
        energy_period: None,
    };
    let run = run_simulation(&model, &cfg.solver, state, &schedule, &opts, t_end)?;
    let probe = trace(&run, "probe")?.clone();

    let amplitude: Vec<(f64, f64)> = probe
        .t
        .iter()
        .zip(&probe.m)
        .map(|(&t, m)| (t, m[0].hypot(m[1])))
        .collect();
    let (peak_time, peak) = amplitude
        .iter()
        .copied()
        .fold((0.0, 0.0), |acc, s| if s.1 > acc.1 { s } else { acc });
    if peak <= 0.0 {
        return Err(Error::Analysis("no wave reached the bus probe".into()));
    }
    let arrival_time = amplitude
        .iter()
        .find(|s| s.1 >= ARRIVAL_FRACTION * peak)
        .map(|s| s.0)
        .unwrap_or(f64::INFINITY);
    let late = amplitude
        .iter()
        .filter(|s| s.0 >= BUS_T_DISPERSED - 1e-18)
        .map(|s| s.1)
        .fold(0.0, f64::max);
    let decay = 1.0 - late / peak;

    let snap_at = |t: f64| {
        run.snapshots
            .iter()
            .find(|s| (s.t - t).abs() < 1e-18)
            .ok_or(Error::MissingSample(t))
    };
    // Far field only; the transmitter's near-field tilt would dominate the
    // extremum.
    let x0 = cfg.bus.absorber_length + cfg.bus.me_cell_length + cfg.bus.probe_offset;
    let x1 = cfg.bus.length - cfg.bus.absorber_length;
    let profile = centerline_profile(&lm, &snap_at(BUS_T_FORMED)?.m, x0, x1);
    let (xs, vs): (Vec<f64>, Vec<f64>) = profile.iter().copied().unzip();
    let wavelength_nm = match estimate_wavelength(&xs, &vs) {
        Ok(l) => Some(l),
        Err(e) => {
            log::warn!("bus wavelength: {e}");
            None
        }
    };

    let spectrum_peak_hz = spectrum(&probe, (0.0, t_end))?.peak_frequency();
    let bus = cfg.materials.get(RegionLabel::Bus)?;
    let hk = crate::materials::hk_of(bus, cfg.materials.anisotropy);
    let dispersion_hz = wavelength_nm.map(|l| {
        let k = 2.0 * std::f64::consts::PI / (l * 1e-9);
        dispersion_frequency(k, hk, bus.a_ex, bus.ms, cfg.solver.gamma)
    });
    Ok(BusReport {
        probe,
        amplitude,
        peak,
        peak_time,
        arrival_time,
        decay,
        wavelength_nm,
        profile,
        spectrum_peak_hz,
        dispersion_hz,
        run,
        mesh: lm,
        wall_s: start.elapsed().as_secs_f64(),
    })
}

/// Column-averaged mx along the centre rows for x in `[x0, x1]` nm.
pub fn centerline_profile(lm: &LabeledMesh, m: &[Vec3], x0: f64, x1: f64) -> Vec<(f64, f64)> {
    let s = &lm.spec;
    let mut out = Vec::new();
    for i in 0..s.nx {
        let x = (i as f64 + 0.5) * s.dx;
        if x < x0 || x > x1 {
            continue;
        }
        let mut sum = 0.0;
        let mut n = 0;
        for k in 0..s.nz {
            for &j in &lm.centerline_rows {
                let idx = s.index(i, j, k);
                if lm.labels[idx].is_active() {
                    sum += m[idx][0];
                    n += 1;
                }
            }
        }
        if n > 0 {
            out.push((x, sum / n as f64));
        }
    }
    out
}

fn snapshot_name(t: f64) -> String {
    format!("m_{:.3}ns.ovf", t * 1e9)
}

fn write_run_files(
    cfg: &ScenarioConfig,
    label: &str,
    lm: &LabeledMesh,
    traces: &[TraceRecord],
    snapshots: &[Snapshot],
    amplitude: Option<&AmplitudeMap>,
) -> Result<PathBuf> {
    let dir = cfg.output.dir.join(label);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_trace_csv(traces, &dir.join("trace.csv"))?;
    if cfg.output.write_ovf {
        for s in snapshots {
            write_snapshot_ovf(&dir.join(snapshot_name(s.t)), &lm.spec, &s.m, s.t)?;
        }
    }
    if let Some(a) = amplitude {
        write_amplitude_csv(a, lm, &dir.join("amplitude.csv"))?;
    }
    Ok(dir)
}

fn write_single_arm(cfg: &ScenarioConfig, lm: &LabeledMesh, r: &SingleArmRun, prefix: &str) -> Result<()> {
    write_run_files(
        cfg,
        &format!("{prefix}{}", r.label()),
        lm,
        &r.run.traces,
        &r.run.snapshots,
        Some(&r.amplitude),
    )?;
    Ok(())
}

/// Moves finished results into the summary; returns the first error, if any.
fn collect<T>(results: Vec<Result<T>>, mut keep: impl FnMut(T) -> Result<()>) -> Result<()> {
    let mut first = None;
    for r in results {
        match r {
            Ok(v) => {
                if let Err(e) = keep(v) {
                    first.get_or_insert(e);
                }
            }
            Err(e) => {
                first.get_or_insert(e);
            }
        }
    }
    first.map_or(Ok(()), Err)
}

fn in_range(v: f64, r: (f64, f64)) -> bool {
    v >= r.0 && v <= r.1
}

fn transmission_checks(s: &mut RunSummary, r: &SingleArmRun) {
    s.check(
        "forward_transmission",
        in_range(r.forward, FORWARD_RANGE),
        format!("{:.4} in [{}, {}]", r.forward, FORWARD_RANGE.0, FORWARD_RANGE.1),
    );
    s.check(
        "back_propagation",
        in_range(r.back, BACK_RANGE),
        format!("{:.4} in [{}, {}]", r.back, BACK_RANGE.0, BACK_RANGE.1),
    );
    s.check(
        "back_below_forward",
        r.back < r.forward,
        format!("{:.4} < {:.4}", r.back, r.forward),
    );
}

/// Single-arm runs, calibration results and checks; returns the detection time.
fn calibration_stage(setup: &GateSetup, s: &mut RunSummary, prefix: &str) -> Result<f64> {
    let cfg = &setup.cfg;
    if !cfg.autocalibrate {
        return Ok(cfg.clock.t_det);
    }
    let mut arms = Vec::new();
    collect(run_single_arms(setup), |r| {
        write_single_arm(cfg, setup.mesh(), &r, prefix)?;
        let mut e = r.entry();
        e.label = format!("{prefix}{}", e.label);
        s.runs.push(e);
        arms.push(r);
        Ok(())
    })?;
    let arms: [SingleArmRun; 3] = arms
        .try_into()
        .map_err(|_| Error::Calibration("expected three single-arm runs".into()))?;
    let c = calibrate(setup, &arms)?;
    s.calibrated_t_det = Some(c.t_det);
    s.results.insert(
        "calibration".into(),
        json!({
            "t_det_s": c.t_det,
            "theta_deg": c.theta,
            "relative_spread": c.spread,
            "mirror_deviation": c.mirror_deviation,
            "forward_transmission": arms[0].forward,
            "back_propagation": arms[0].back,
        }),
    );
    s.check(
        "t_det_window",
        in_range(c.t_det, T_DET_RANGE),
        format!("{:.4} ns in [{}, {}] ns", c.t_det * 1e9, T_DET_RANGE.0 * 1e9, T_DET_RANGE.1 * 1e9),
    );
    s.check(
        "theta_agreement",
        c.spread < MAX_THETA_SPREAD,
        format!("relative spread {:.4} < {MAX_THETA_SPREAD}", c.spread),
    );
    Ok(c.t_det)
}

fn scenario_single_arm(cfg: &ScenarioConfig, input: u8, s: &mut RunSummary) -> Result<()> {
    let setup = GateSetup::new(cfg, cfg.fork)?;
    let r = run_single_arm(&setup, input as usize)?;
    write_single_arm(cfg, setup.mesh(), &r, "")?;
    s.runs.push(r.entry());
    s.results.insert(
        "transmission".into(),
        json!({
            "input": input,
            "forward": r.forward,
            "back_propagation": r.back,
            "back_each": r.back_each.iter().map(|(n, v)| json!({"arm": n, "ratio": v})).collect::<Vec<_>>(),
        }),
    );
    if input == 1 {
        transmission_checks(s, &r);
    }
    Ok(())
}

fn scenario_truth_table(cfg: &ScenarioConfig, s: &mut RunSummary) -> Result<()> {
    let setup = GateSetup::new(cfg, cfg.fork)?;
    let t_det = calibration_stage(&setup, s, "calibration_")?;
    let inputs = all_inputs();
    let results: Vec<Result<GateRun>> = inputs.par_iter().map(|&b| run_gate(&setup, b, t_det)).collect();
    let mut runs = Vec::new();
    collect(results, |r| {
        write_run_files(cfg, &r.label(), setup.mesh(), &r.run.traces, &r.run.snapshots, None)?;
        s.runs.push(r.entry());
        runs.push(r);
        Ok(())
    })?;
    let find = |w: &str| runs.iter().find(|r| bits_string(&r.bits) == w);
    let mut rows = Vec::new();
    for r in &runs {
        let w = bits_string(&r.bits);
        s.check(
            &format!("row_{w}"),
            r.correct(),
            format!(
                "detected {} expected {} margin {:.4}",
                r.result.detected.as_u8(),
                r.expected.as_u8(),
                r.result.margin
            ),
        );
        s.check(
            &format!("margin_{w}"),
            !r.result.weak,
            format!("|mx| = {:.4}", r.result.margin),
        );
        rows.push(json!({
            "bits": w,
            "expected": r.expected.as_u8(),
            "detected": r.result.detected.as_u8(),
            "margin": r.result.margin,
        }));
    }
    for w in ["000", "001", "010", "011"] {
        let c: String = w.chars().map(|ch| if ch == '0' { '1' } else { '0' }).collect();
        if let (Some(a), Some(b)) = (find(w), find(&c)) {
            s.check(
                &format!("complement_{w}_{c}"),
                a.result.detected != b.result.detected,
                format!("{} vs {}", a.result.detected.as_u8(), b.result.detected.as_u8()),
            );
        }
    }
    if let (Some(a), Some(b)) = (find("010"), find("101")) {
        let d = antisymmetry_deviation(&a.output, &b.output);
        s.check(
            "antisymmetry_010_101",
            d <= ANTISYMMETRY_TOL,
            format!("max |mx(010) + mx(101)| = {d:.4}"),
        );
    }
    s.results.insert("truth_table".into(), Value::Array(rows));
    Ok(())
}

fn scenario_majority(cfg: &ScenarioConfig, bits: [LogicBit; 3], s: &mut RunSummary) -> Result<()> {
    let setup = GateSetup::new(cfg, cfg.fork)?;
    let t_det = calibration_stage(&setup, s, "calibration_")?;
    let r = run_gate(&setup, bits, t_det)?;
    write_run_files(cfg, &r.label(), setup.mesh(), &r.run.traces, &r.run.snapshots, None)?;
    s.runs.push(r.entry());
    s.check(
        "majority",
        r.correct(),
        format!("detected {} expected {}", r.result.detected.as_u8(), r.expected.as_u8()),
    );
    s.check("margin", !r.result.weak, format!("|mx| = {:.4}", r.result.margin));
    Ok(())
}

fn scenario_spacing_sweep(cfg: &ScenarioConfig, spacings: &[f64], s: &mut RunSummary) -> Result<()> {
    let mut table = Vec::new();
    let mut out = Ok(());
    for &sp in spacings {
        let fork = ForkSpec {
            spacing: sp,
            ..cfg.fork
        };
        let setup = GateSetup::new(cfg, fork)?;
        let prefix = format!("S{sp}_");
        let mut max_theta = Vec::new();
        let res = collect(run_single_arms(&setup), |r| {
            write_single_arm(cfg, setup.mesh(), &r, &prefix)?;
            let mut e = r.entry();
            e.label = format!("{prefix}{}", e.label);
            e.metrics.insert("spacing_nm".into(), json!(sp));
            s.runs.push(e);
            max_theta.push(r.max_theta);
            Ok(())
        });
        table.push(json!({
            "spacing_nm": sp,
            "max_theta_deg": max_theta,
            "below_minimum": sp < MIN_SPACING_NM,
        }));
        if res.is_err() {
            out = res;
            break;
        }
    }
    s.results.insert("spacing_sweep".into(), Value::Array(table));
    out
}

fn scenario_bus(cfg: &ScenarioConfig, s: &mut RunSummary) -> Result<()> {
    let r = run_bus(cfg)?;
    write_run_files(cfg, "bus", &r.mesh, std::slice::from_ref(&r.probe), &r.run.snapshots, None)?;
    let path = cfg.output.dir.join("bus").join("profile.csv");
    let mut text = String::from("x_nm,mx\n");
    for (x, v) in &r.profile {
        text.push_str(&format!("{x},{v}\n"));
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    s.runs.push(r.entry());
    s.results.insert(
        "bus".into(),
        json!({
            "arrival_time_s": r.arrival_time,
            "peak_time_s": r.peak_time,
            "decay": r.decay,
            "wavelength_nm": r.wavelength_nm,
            "spectrum_peak_hz": r.spectrum_peak_hz,
            "dispersion_hz": r.dispersion_hz,
        }),
    );
    s.check(
        "packet_formed",
        r.arrival_time <= BUS_T_FORMED,
        format!("arrival {:.4} ns <= {} ns", r.arrival_time * 1e9, BUS_T_FORMED * 1e9),
    );
    s.check(
        "packet_dispersed",
        r.decay >= BUS_MIN_DECAY,
        format!("decay {:.4} >= {BUS_MIN_DECAY}", r.decay),
    );
    let (ok, detail) = match r.wavelength_nm {
        Some(l) => (
            (l / BUS_WAVELENGTH_NM - 1.0).abs() <= BUS_WAVELENGTH_TOL,
            format!("{l:.1} nm vs {BUS_WAVELENGTH_NM} nm"),
        ),
        None => (false, "no wavelength could be estimated".to_string()),
    };
    s.check("wavelength", ok, detail);
    Ok(())
}

/// Runs the configured scenario, writing per-run files and `summary.json`
/// under the output directory. On failure the partial summary is still
/// written before the error is returned.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunSummary> {
    let start = Instant::now();
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut s = RunSummary::new(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.output.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let res = pool.install(|| match &cfg.scenario {
        Scenario::BusCharacterization => scenario_bus(cfg, &mut s),
        Scenario::SingleArm { input } => scenario_single_arm(cfg, *input, &mut s),
        Scenario::TruthTable => scenario_truth_table(cfg, &mut s),
        Scenario::SpacingSweep { spacings } => scenario_spacing_sweep(cfg, spacings, &mut s),
        Scenario::Majority { bits } => scenario_majority(cfg, *bits, &mut s),
    });
    s.wall_s = start.elapsed().as_secs_f64();
    if let Err(e) = &res {
        s.error = Some(e.to_string());
    }
    s.finalize();
    write_summary(&s, &summary_path(dir))?;
    match res {
        Ok(()) => Ok(s),
        Err(e) => Err(Error::Scenario {
            scenario: cfg.scenario.name().to_string(),
            source: Box::new(e),
        }),
    }
}

pub fn summary_path(dir: &Path) -> PathBuf {
    dir.join("summary.json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_distinct_inputs() {
        let v = all_inputs();
        assert_eq!(v.len(), 8);
        assert_eq!(bits_string(&v[6]), "110");
        let mut s: Vec<String> = v.iter().map(|b| bits_string(b)).collect();
        s.dedup();
        assert_eq!(s.len(), 8);
    }

    #[test]
    fn antisymmetric_traces() {
        let mut a = TraceRecord::new("a");
        let mut b = TraceRecord::new("b");
        for k in 0..10 {
            let x = (k as f64 * 0.3).sin();
            a.push(k as f64, [x, 0.0, 0.0]);
            b.push(k as f64, [-x + 0.01, 0.0, 0.0]);
        }
        assert!((antisymmetry_deviation(&a, &b) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn collect_keeps_partial_results() {
        let mut kept = Vec::new();
        let r = collect(
            vec![Ok(1), Err(Error::Analysis("x".into())), Ok(3)],
            |v| {
                kept.push(v);
                Ok(())
            },
        );
        assert!(r.is_err());
        assert_eq!(kept, vec![1, 3]);
    }

    #[test]
    fn seed_encodes_inputs() {
        let mut cfg = ScenarioConfig::default();
        cfg.cell = [4.0, 4.0, 12.0];
        cfg.demag = crate::fields::DemagMode::ThinFilmLocal;
        let setup = GateSetup::new(&cfg, cfg.fork).unwrap();
        let m = setup.seed([LogicBit::One, LogicBit::Zero, LogicBit::One], [true, true, false]);
        let lm = setup.mesh();
        let c1 = lm.cells_with(RegionLabel::MECellIn1)[0];
        let c3 = lm.cells_with(RegionLabel::MECellIn3)[0];
        let b = lm.cells_with(RegionLabel::Bus)[0];
        assert_eq!(m[c1], encode_logic(LogicBit::One));
        assert_eq!(m[c3], encode_logic(LogicBit::Zero));
        assert_eq!(m[b], [0.0, 0.0, 1.0]);
        assert!(setup.probes().unwrap().len() >= 8);
    }
}
