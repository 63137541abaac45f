//! Configuration, scenario orchestration and result files.

pub mod config;
pub mod ovf;
pub mod output;
pub mod scenario;

pub use config::{parse_config, parse_config_with, OutputConfig, Scenario, ScenarioConfig};
pub use output::{write_summary, write_trace_csv, Check, RunEntry, RunSummary};
pub use ovf::{read_ovf, write_snapshot_ovf, OvfData};
pub use scenario::{
    all_inputs, antisymmetry_deviation, calibrate, run_bus, run_gate, run_scenario, run_single_arm,
    run_single_arms, summary_path, BusReport, Calibration, GateRun, GateSetup, SingleArmRun,
};
