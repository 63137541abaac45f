//! Key-value scenario configuration.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment
//! key.path = value      # trailing comments allowed
//! [section]             # optional: prefixes following keys with "section."
//! ```
//!
//! Lengths are in nm. Times accept a unit suffix (`s`, `ns`, `ps`, `fs`);
//! bare numbers are seconds. Lists are comma separated.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::AmplitudeWindow;
use crate::dynamics::{IntegratorConfig, Method, RelaxConfig};
use crate::error::{Error, Result};
use crate::fields::DemagMode;
use crate::geometry::{BusSpec, ForkSpec, RegionLabel};
use crate::materials::{ku_from_hk, preset, AnisotropyMode, MaterialMap};
use crate::transducers::{parse_bits, CalibrationParams, ClockParams, LogicBit};

/// Smallest arm spacing for which the input cells switch cleanly, nm.
pub const MIN_SPACING_NM: f64 = 56.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scenario {
    BusCharacterization,
    SingleArm { input: u8 },
    TruthTable,
    SpacingSweep { spacings: Vec<f64> },
    Majority { bits: [LogicBit; 3] },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::BusCharacterization => "bus_characterization",
            Scenario::SingleArm { .. } => "single_arm",
            Scenario::TruthTable => "truth_table",
            Scenario::SpacingSweep { .. } => "spacing_sweep",
            Scenario::Majority { .. } => "majority",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub snapshots: Vec<f64>,
    /// Probe sampling period, s.
    pub sample_period: f64,
    pub amplitude: AmplitudeWindow,
    /// Parallel simulations; 0 means one per available core.
    pub workers: usize,
    pub write_ovf: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshots: vec![0.0, 0.8e-9, 3.2e-9],
            sample_period: 1e-12,
            amplitude: AmplitudeWindow {
                t0: 0.0,
                t1: 3.0e-9,
                period: 5e-12,
            },
            workers: 0,
            write_ovf: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Cell edges (dx, dy, dz), nm.
    pub cell: [f64; 3],
    pub fork: ForkSpec,
    pub bus: BusSpec,
    pub materials: MaterialMap,
    pub solver: IntegratorConfig,
    pub relax: RelaxConfig,
    pub clock: ClockParams,
    pub autocalibrate: bool,
    pub calibration: CalibrationParams,
    pub demag: DemagMode,
    /// Probe used for output θ and detection.
    pub output_probe: String,
    pub output: OutputConfig,
    /// Non-fatal findings from validation.
    pub warnings: Vec<String>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let materials = MaterialMap::gate_default();
        let clock = ClockParams {
            k_level: materials.me_k_level(),
            ..Default::default()
        };
        Self {
            scenario: Scenario::TruthTable,
            cell: [2.0, 2.0, 12.0],
            fork: ForkSpec::default(),
            bus: BusSpec::default(),
            materials,
            solver: IntegratorConfig::default(),
            relax: RelaxConfig::default(),
            clock,
            autocalibrate: true,
            calibration: CalibrationParams::default(),
            demag: DemagMode::FullFft,
            output_probe: RegionLabel::MECellOut.name().to_string(),
            output: OutputConfig::default(),
            warnings: Vec::new(),
        }
    }
}

struct Entry {
    line: usize,
    value: String,
}

fn tokenize(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut map = BTreeMap::new();
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| Error::ConfigSyntax {
                line: line_no,
                msg: format!("unterminated section header `{line}`"),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::ConfigSyntax {
            line: line_no,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        let k = k.trim();
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(Error::ConfigSyntax {
                line: line_no,
                msg: format!("invalid key `{k}`"),
            });
        }
        let key = if section.is_empty() {
            k.to_string()
        } else {
            format!("{section}.{k}")
        };
        let value = v.trim().trim_matches('"').to_string();
        if map.insert(key.clone(), Entry { line: line_no, value }).is_some() {
            return Err(Error::ConfigSyntax {
                line: line_no,
                msg: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(map)
}

fn value_err(key: &str, msg: impl Into<String>) -> Error {
    Error::ConfigValue {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn num(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| value_err(key, format!("expected a number, got `{v}`")))
}

/// Seconds from `"0.8ns"`, `"20 ps"`, `"3.2e-9"` and similar.
pub fn parse_time(key: &str, v: &str) -> Result<f64> {
    let v = v.trim();
    for (suffix, scale) in [("fs", 1e-15), ("ps", 1e-12), ("ns", 1e-9), ("s", 1.0)] {
        if let Some(x) = v.strip_suffix(suffix) {
            return Ok(num(key, x.trim())? * scale);
        }
    }
    num(key, v)
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(value_err(key, format!("expected true/false, got `{v}`"))),
    }
}

fn list<T>(key: &str, v: &str, f: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| f(key, s))
        .collect()
}

fn regions_for(name: &str) -> Option<Vec<RegionLabel>> {
    match name {
        "me" => Some(RegionLabel::ME_CELLS.to_vec()),
        _ => RegionLabel::from_name(name)
            .filter(|l| l.is_active())
            .map(|l| vec![l]),
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    parse_config_with(text, &[])
}

/// Parses a configuration with `key=value` overrides applied on top.
pub fn parse_config_with(text: &str, overrides: &[(String, String)]) -> Result<ScenarioConfig> {
    let mut map = tokenize(text)?;
    for (k, v) in overrides {
        map.insert(
            k.trim().to_string(),
            Entry {
                line: 0,
                value: v.trim().to_string(),
            },
        );
    }
    let mut cfg = ScenarioConfig::default();
    let mut k_level_set = false;
    let mut mode_changed = false;

    // Anisotropy mode first: `hk` overrides depend on it.
    if let Some(e) = map.remove("materials.mode") {
        cfg.materials.anisotropy = match e.value.as_str() {
            "net_effective" => AnisotropyMode::NetEffective,
            "intrinsic" | "intrinsic_with_demag" => AnisotropyMode::IntrinsicWithDemag,
            other => return Err(value_err("materials.mode", format!("unknown mode `{other}`"))),
        };
        mode_changed = true;
    }
    if mode_changed && cfg.materials.anisotropy == AnisotropyMode::IntrinsicWithDemag {
        // Re-derive the bus constants for the new convention.
        for l in [RegionLabel::Bus, RegionLabel::OutputArm, RegionLabel::Absorber] {
            let mut p = *cfg.materials.get(l)?;
            p.ku = ku_from_hk(crate::materials::BUS_HK, p.ms, cfg.materials.anisotropy);
            cfg.materials.set(l, p);
        }
    }
    // Presets before field overrides.
    let preset_keys: Vec<String> = map
        .keys()
        .filter(|k| k.starts_with("materials.") && k.ends_with(".preset"))
        .cloned()
        .collect();
    for key in preset_keys {
        let e = map.remove(&key).expect("listed");
        let region = &key["materials.".len()..key.len() - ".preset".len()];
        let labels = regions_for(region).ok_or_else(|| value_err(&key, format!("unknown region `{region}`")))?;
        let mut p = preset(&e.value).ok_or_else(|| value_err(&key, format!("unknown preset `{}`", e.value)))?;
        if p.easy_axis == [0.0, 0.0, 1.0] {
            p.ku = ku_from_hk(p.anisotropy_field(), p.ms, cfg.materials.anisotropy);
        }
        for l in labels {
            cfg.materials.set(l, p);
        }
    }

    for (key, e) in &map {
        let v = e.value.as_str();
        let k = key.as_str();
        match k {
            "scenario" => {
                cfg.scenario = match v {
                    "bus_characterization" => Scenario::BusCharacterization,
                    "single_arm" => Scenario::SingleArm { input: 1 },
                    "truth_table" => Scenario::TruthTable,
                    "spacing_sweep" => Scenario::SpacingSweep {
                        spacings: vec![56.0, 64.0, 72.0, 80.0, 88.0, 96.0],
                    },
                    "majority" => Scenario::Majority {
                        bits: [LogicBit::One, LogicBit::One, LogicBit::Zero],
                    },
                    _ => return Err(value_err(k, format!("unknown scenario `{v}`"))),
                }
            }
            "scenario.input" | "scenario.spacings" | "scenario.bits" => {}
            "mesh.dx" => cfg.cell[0] = num(k, v)?,
            "mesh.dy" => cfg.cell[1] = num(k, v)?,
            "mesh.dz" => cfg.cell[2] = num(k, v)?,
            "geometry.arm_width" => cfg.fork.arm_width = num(k, v)?,
            "geometry.spacing" => cfg.fork.spacing = num(k, v)?,
            "geometry.me_cell_length" => cfg.fork.me_cell_length = num(k, v)?,
            "geometry.me_cell_width" => cfg.fork.me_cell_width = num(k, v)?,
            "geometry.output_arm_length" => cfg.fork.output_arm_length = num(k, v)?,
            "geometry.input_arm_length" => cfg.fork.input_arm_length = num(k, v)?,
            "geometry.bend_angle" => cfg.fork.bend_angle = num(k, v)?,
            "geometry.absorber_length" => cfg.fork.absorber_length = num(k, v)?,
            "bus.length" => cfg.bus.length = num(k, v)?,
            "bus.width" => cfg.bus.width = num(k, v)?,
            "bus.me_cell_length" => cfg.bus.me_cell_length = num(k, v)?,
            "bus.absorber_length" => cfg.bus.absorber_length = num(k, v)?,
            "bus.probe_offset" => cfg.bus.probe_offset = num(k, v)?,
            "materials.absorber_alpha_max" => cfg.materials.absorber_alpha_max = num(k, v)?,
            "me_stack.lambda_s" => cfg.materials.me_stack.lambda_s = num(k, v)?,
            "me_stack.youngs_modulus" => cfg.materials.me_stack.youngs_modulus = num(k, v)?,
            "me_stack.d31" => cfg.materials.me_stack.d31 = num(k, v)?,
            "me_stack.t_piezo" => cfg.materials.me_stack.t_piezo = num(k, v)?,
            "me_stack.v_op" => cfg.materials.me_stack.v_op = num(k, v)?,
            "solver.method" => {
                cfg.solver.method = match v {
                    "rk45" => Method::Rk45Adaptive,
                    "rk4" => Method::Rk4Fixed,
                    _ => return Err(value_err(k, format!("unknown method `{v}`"))),
                }
            }
            "solver.dt_init" => cfg.solver.dt_init = parse_time(k, v)?,
            "solver.dt_min" => cfg.solver.dt_min = parse_time(k, v)?,
            "solver.dt_max" => cfg.solver.dt_max = parse_time(k, v)?,
            "solver.tol" => cfg.solver.tol = num(k, v)?,
            "solver.gamma" => cfg.solver.gamma = num(k, v)?,
            "relax.alpha" => cfg.relax.alpha = num(k, v)?,
            "relax.torque_tol" => cfg.relax.torque_tol = num(k, v)?,
            "relax.max_steps" => cfg.relax.max_steps = num(k, v)? as usize,
            "relax.tol" => cfg.relax.integrator.tol = num(k, v)?,
            "clock.k_level" => {
                cfg.clock.k_level = num(k, v)?;
                k_level_set = true;
            }
            "clock.rise_time" => cfg.clock.rise_time = parse_time(k, v)?,
            "clock.t_excite" => cfg.clock.t_excite = parse_time(k, v)?,
            "clock.t_det" => cfg.clock.t_det = parse_time(k, v)?,
            "clock.t_read" => cfg.clock.t_read = parse_time(k, v)?,
            "clock.t_end" => cfg.clock.t_end = parse_time(k, v)?,
            "clock.autocalibrate" => cfg.autocalibrate = boolean(k, v)?,
            "clock.threshold_deg" => cfg.calibration.threshold_deg = num(k, v)?,
            "clock.span" => cfg.calibration.span = parse_time(k, v)?,
            "clock.t_max" => cfg.calibration.t_max = parse_time(k, v)?,
            "demag" => {
                cfg.demag = DemagMode::parse(v).ok_or_else(|| value_err(k, format!("expected fft or local, got `{v}`")))?
            }
            "probe.output" => cfg.output_probe = v.to_string(),
            "output.dir" => cfg.output.dir = PathBuf::from(v),
            "output.snapshots" => cfg.output.snapshots = list(k, v, parse_time)?,
            "output.sample_period" => cfg.output.sample_period = parse_time(k, v)?,
            "output.amplitude_t0" => cfg.output.amplitude.t0 = parse_time(k, v)?,
            "output.amplitude_t1" => cfg.output.amplitude.t1 = parse_time(k, v)?,
            "output.amplitude_period" => cfg.output.amplitude.period = parse_time(k, v)?,
            "output.workers" => cfg.output.workers = num(k, v)? as usize,
            "output.write_ovf" => cfg.output.write_ovf = boolean(k, v)?,
            _ if k.starts_with("materials.") => apply_material(&mut cfg, k, v)?,
            _ if e.line > 0 => return Err(value_err(k, format!("unknown key (line {})", e.line))),
            _ => return Err(value_err(k, "unknown key")),
        }
    }
    if !k_level_set {
        cfg.clock.k_level = cfg.materials.me_k_level();
    }
    // Scenario parameters once the scenario kind is known.
    match &mut cfg.scenario {
        Scenario::SingleArm { input } => {
            if let Some(e) = map.get("scenario.input") {
                let i = num("scenario.input", &e.value)?;
                if !(i == 1.0 || i == 2.0 || i == 3.0) {
                    return Err(value_err("scenario.input", "must be 1, 2 or 3"));
                }
                *input = i as u8;
            }
        }
        Scenario::SpacingSweep { spacings } => {
            if let Some(e) = map.get("scenario.spacings") {
                *spacings = list("scenario.spacings", &e.value, num)?;
            }
        }
        Scenario::Majority { bits } => {
            if let Some(e) = map.get("scenario.bits") {
                *bits = parse_bits(&e.value)
                    .ok_or_else(|| value_err("scenario.bits", format!("expected three bits, got `{}`", e.value)))?;
            }
        }
        _ => {}
    }
    for key in ["scenario.input", "scenario.spacings", "scenario.bits"] {
        if map.contains_key(key) {
            let used = matches!(
                (&cfg.scenario, key),
                (Scenario::SingleArm { .. }, "scenario.input")
                    | (Scenario::SpacingSweep { .. }, "scenario.spacings")
                    | (Scenario::Majority { .. }, "scenario.bits")
            );
            if !used {
                return Err(value_err(key, format!("not used by scenario `{}`", cfg.scenario.name())));
            }
        }
    }
    validate(&mut cfg)?;
    Ok(cfg)
}

fn apply_material(cfg: &mut ScenarioConfig, key: &str, v: &str) -> Result<()> {
    let rest = &key["materials.".len()..];
    let (region, field) = rest
        .rsplit_once('.')
        .ok_or_else(|| value_err(key, "unknown key"))?;
    let labels = regions_for(region).ok_or_else(|| value_err(key, format!("unknown region `{region}`")))?;
    for l in labels {
        let mut p = *cfg.materials.get(l).map_err(|e| value_err(key, e.to_string()))?;
        match field {
            "ms" => p.ms = num(key, v)?,
            "a_ex" => p.a_ex = num(key, v)?,
            "alpha" => p.alpha = num(key, v)?,
            "ku" => p.ku = num(key, v)?,
            "hk" => p.ku = ku_from_hk(num(key, v)?, p.ms, cfg.materials.anisotropy),
            "easy_axis" => {
                let a = list(key, v, num)?;
                if a.len() != 3 {
                    return Err(value_err(key, "easy axis needs three components"));
                }
                p.easy_axis = [a[0], a[1], a[2]];
            }
            _ => return Err(value_err(key, "unknown key")),
        }
        cfg.materials.set(l, p);
    }
    Ok(())
}

fn validate(cfg: &mut ScenarioConfig) -> Result<()> {
    let [dx, dy, dz] = cfg.cell;
    if !(dx > 0.0 && dy > 0.0 && dz > 0.0) {
        return Err(value_err("mesh", "cell edges must be > 0"));
    }
    cfg.materials
        .validate()
        .map_err(|e| value_err("materials", e.to_string()))?;
    cfg.solver
        .validate()
        .map_err(|e| value_err("solver", e.to_string()))?;
    cfg.relax
        .integrator
        .validate()
        .map_err(|e| value_err("relax", e.to_string()))?;
    let check_fork = |spec: &ForkSpec| -> Result<()> {
        let mesh = spec
            .fitting_mesh(dx, dy, dz)
            .map_err(|e| value_err("geometry", e.to_string()))?;
        spec.validate(&mesh).map_err(|e| value_err("geometry", e.to_string()))
    };
    match &cfg.scenario {
        Scenario::BusCharacterization => {
            let mesh = cfg
                .bus
                .fitting_mesh(dx, dy, dz)
                .map_err(|e| value_err("bus", e.to_string()))?;
            crate::geometry::build_straight_bus(&cfg.bus, &mesh).map_err(|e| value_err("bus", e.to_string()))?;
        }
        Scenario::SpacingSweep { spacings } => {
            if spacings.is_empty() {
                return Err(value_err("scenario.spacings", "empty list"));
            }
            for &s in spacings {
                check_fork(&ForkSpec { spacing: s, ..cfg.fork })?;
                if s < MIN_SPACING_NM {
                    cfg.warnings
                        .push(format!("spacing {s} nm is below the {MIN_SPACING_NM} nm minimum"));
                }
            }
        }
        _ => {
            check_fork(&cfg.fork)?;
            if cfg.fork.spacing < MIN_SPACING_NM {
                cfg.warnings.push(format!(
                    "spacing {} nm is below the {MIN_SPACING_NM} nm minimum",
                    cfg.fork.spacing
                ));
            }
        }
    }
    let c = &cfg.clock;
    if !(c.t_end > 0.0 && c.t_read <= c.t_end && c.t_det > 0.0 && c.t_det < c.t_read) {
        return Err(value_err(
            "clock",
            format!(
                "need 0 < t_det < t_read <= t_end, got {:e}, {:e}, {:e}",
                c.t_det, c.t_read, c.t_end
            ),
        ));
    }
    if !(c.rise_time >= 0.0 && c.k_level >= 0.0) {
        return Err(value_err("clock", "rise time and level must be >= 0"));
    }
    if !(cfg.output.sample_period >= cfg.solver.dt_min) {
        return Err(value_err("output.sample_period", "must be >= solver.dt_min"));
    }
    let a = &cfg.output.amplitude;
    if !(a.t1 > a.t0 && a.period > 0.0) {
        return Err(value_err("output.amplitude", "need amplitude_t1 > amplitude_t0 and period > 0"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_truth_table_defaults() {
        let cfg = parse_config("scenario = truth_table\n").unwrap();
        assert_eq!(cfg.scenario, Scenario::TruthTable);
        assert_eq!(cfg.fork.spacing, 88.0);
        assert_eq!(cfg.clock.t_det, 0.8e-9);
        assert_eq!(cfg.clock.t_end, 3.2e-9);
        assert!(cfg.autocalibrate);
        assert!((cfg.clock.k_level - 2.0e5).abs() < 1e-6);
        assert!(cfg.warnings.is_empty());
    }

    #[test]
    fn spacing_equal_to_width_rejected() {
        let err = parse_config("scenario = truth_table\ngeometry.spacing = 40\n").unwrap_err();
        assert!(matches!(err, Error::ConfigValue { ref key, .. } if key == "geometry"), "{err}");
    }

    #[test]
    fn unknown_key_named() {
        let err = parse_config("foo = 1\n").unwrap_err();
        assert!(matches!(err, Error::ConfigValue { ref key, .. } if key == "foo"));
    }

    #[test]
    fn syntax_error_has_line() {
        let err = parse_config("scenario = truth_table\n\nthis line is wrong\n").unwrap_err();
        assert!(matches!(err, Error::ConfigSyntax { line: 3, .. }), "{err}");
    }

    #[test]
    fn units_sections_and_overrides() {
        let text = "scenario = majority\nscenario.bits = 011\n[clock]\nt_det = 0.75ns\nrise_time = 15 ps\n";
        let cfg = parse_config_with(text, &[("demag".into(), "local".into())]).unwrap();
        assert_eq!(cfg.scenario, Scenario::Majority { bits: parse_bits("011").unwrap() });
        assert!((cfg.clock.t_det - 0.75e-9).abs() < 1e-21);
        assert!((cfg.clock.rise_time - 15e-12).abs() < 1e-24);
        assert_eq!(cfg.demag, DemagMode::ThinFilmLocal);
    }

    #[test]
    fn small_spacing_is_flagged() {
        let cfg = parse_config("scenario = spacing_sweep\nscenario.spacings = 48, 88\n").unwrap();
        assert_eq!(cfg.warnings.len(), 1);
    }

    #[test]
    fn material_overrides() {
        let cfg = parse_config("materials.output_arm.alpha = 0.02\nmaterials.me.ku = 5e4\n").unwrap();
        assert_eq!(cfg.materials.get(RegionLabel::OutputArm).unwrap().alpha, 0.02);
        assert_eq!(cfg.materials.get(RegionLabel::MECellIn3).unwrap().ku, 5e4);
        assert!(parse_config("materials.nowhere.alpha = 0.1\n").is_err());
    }

    #[test]
    fn misplaced_scenario_parameter() {
        assert!(parse_config("scenario = truth_table\nscenario.bits = 110\n").is_err());
    }

    #[test]
    fn duplicate_key() {
        assert!(matches!(
            parse_config("demag = fft\ndemag = local\n"),
            Err(Error::ConfigSyntax { line: 2, .. })
        ));
    }
}
