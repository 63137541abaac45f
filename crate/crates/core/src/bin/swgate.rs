use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use swgate::runner::{parse_config_with, run_scenario};

#[derive(Parser)]
#[command(name = "swgate", version, about = "Spin-wave majority gate simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the scenario described by a config file.
    Run {
        config: PathBuf,
        /// Override a config entry, e.g. `--set clock.t_det=0.9ns`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        outdir: Option<PathBuf>,
        /// `fft` or `local`.
        #[arg(long)]
        demag: Option<String>,
        /// Comma-separated snapshot times, e.g. `0,0.8ns,3.2ns`.
        #[arg(long)]
        snapshots: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let Cmd::Run {
        config,
        set,
        outdir,
        demag,
        snapshots,
    } = Cli::parse().cmd;

    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    let mut overrides = Vec::new();
    for s in &set {
        match s.split_once('=') {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => {
                eprintln!("error: --set expects KEY=VALUE, got `{s}`");
                return ExitCode::from(2);
            }
        }
    }
    if let Some(d) = outdir {
        overrides.push(("output.dir".into(), d.display().to_string()));
    }
    if let Some(d) = demag {
        overrides.push(("demag".into(), d));
    }
    if let Some(s) = snapshots {
        overrides.push(("output.snapshots".into(), s));
    }
    let cfg = match parse_config_with(&text, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for w in &cfg.warnings {
        log::warn!("{w}");
    }
    match run_scenario(&cfg) {
        Ok(summary) => {
            for c in &summary.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if summary.all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(2)
        }
    }
}
