use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chemoflux::config::OUT_ROOT_VAR;
use chemoflux::presets::{self, PresetKind};
use chemoflux::scenario::{exit_code, EXIT_CONFIG, EXIT_GATE, EXIT_NUMERICAL};
use chemoflux::sweep::{SweepParam, SweepSpec};
use chemoflux::{load_config, run_scenario, schema, sweep, write_outputs, HarnessError};
use chemoflux_core::steady::{find_steady, mass_at_zero_rate, SteadyOptions};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "chemoflux", version, about = "Boundary-coupled chemotaxis simulator and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemaKind {
    Config,
    Report,
    Sweep,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write timeseries.csv, snapshots.csv and report.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bisect the outcome threshold in a parameter, repeated on refined grids.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "M")]
        param: SweepParam,
        /// Bracket as `a,b`.
        #[arg(long, value_parser = parse_bracket)]
        bracket: (f64, f64),
        /// Number of refined levels after the base grid.
        #[arg(long, default_value_t = 1)]
        refine: usize,
        #[arg(long, default_value_t = 8)]
        iterations: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Find the increasing 1D steady state of a given mass for f = |c|^(m-1) c.
    Steady {
        #[arg(long)]
        m: f64,
        #[arg(long = "L", default_value_t = 1.0)]
        length: f64,
        #[arg(long)]
        mass: f64,
    },
    /// Run a named preset and evaluate its gates.
    Check {
        #[arg(long)]
        preset: String,
        /// Also write the run artifacts here (run presets only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the presets.
    ListPresets,
    /// Print a JSON schema.
    Schema {
        #[arg(value_enum)]
        kind: SchemaKind,
    },
}

fn parse_bracket(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `a,b`")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), HarnessError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn out_dir(out: Option<PathBuf>, name: &str) -> PathBuf {
    out.unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        root.join(name)
    })
}

fn write_json<T: serde::Serialize>(dir: &Path, file: &str, value: &T) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io { path: dir.to_path_buf(), source: e })?;
    let path = dir.join(file);
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(&path, text).map_err(|e| HarnessError::Io { path: path.clone(), source: e })?;
    Ok(path)
}

fn execute(command: Command) -> Result<u8, HarnessError> {
    match command {
        Command::Run { config, out } => {
            let config = load_config(&config)?;
            let result = run_scenario(&config)?;
            let dir = config.output_dir(out.as_deref());
            for path in write_outputs(&result, &dir)? {
                eprintln!("wrote {}", path.display());
            }
            let run = &result.report.run;
            println!("{}: {:?} at t = {:.6e} after {} steps ({})", config.name, run.outcome, run.t_final, run.steps, run.reason);
            Ok(exit_code(run.outcome))
        }
        Command::Sweep { config, param, bracket, refine, iterations, out } => {
            let config = load_config(&config)?;
            let spec = SweepSpec { param, bracket, refinements: refine, iterations };
            let report = sweep(&config, &spec)?;
            let dir = out_dir(out, &format!("{}_sweep", config.name));
            eprintln!("wrote {}", write_json(&dir, "sweep.json", &report)?.display());
            print_json(&report)?;
            let failed = report.levels.iter().flat_map(|l| &l.probes).any(|p| !p.outcome.is_physical());
            Ok(if failed { EXIT_NUMERICAL } else { 0 })
        }
        Command::Steady { m, length, mass } => {
            let search = find_steady(m, length, mass, &SteadyOptions::default())?;
            print_json(&serde_json::json!({
                "m": m,
                "length": length,
                "mass": mass,
                "zero_rate_mass": mass_at_zero_rate(m, length),
                "result": search,
            }))?;
            Ok(0)
        }
        Command::Check { preset, out } => {
            let preset = presets::find(&preset)?;
            let (report, result) = presets::check(&preset)?;
            if let (Some(result), Some(dir)) = (&result, out) {
                write_outputs(result, &dir)?;
            }
            for g in &report.gates {
                println!("[{}] {} / {}: {}", if g.passed { "PASS" } else { "FAIL" }, report.preset, g.label, g.detail);
            }
            println!("{} {} in {:.2} s", report.preset, if report.passed() { "passed" } else { "FAILED" }, report.elapsed_s);
            if result.as_ref().is_some_and(|r| !r.outcome_is_physical()) {
                return Ok(EXIT_NUMERICAL);
            }
            Ok(if report.passed() { 0 } else { EXIT_GATE })
        }
        Command::ListPresets => {
            for p in presets::presets() {
                let kind = match p.kind {
                    PresetKind::Run { .. } => "run",
                    PresetKind::Check(_) => "check",
                };
                println!("{:<24} {:<6} {}", p.name, kind, p.summary);
            }
            Ok(0)
        }
        Command::Schema { kind } => {
            let value = match kind {
                SchemaKind::Config => schema::config(),
                SchemaKind::Report => schema::report(),
                SchemaKind::Sweep => schema::sweep(),
            };
            print_json(&value)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
