use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use echodex::commands::{self, CertifyOptions};
use echodex::config::parse_override;
use echodex::presets::{self, Manifest};
use echodex::{Check, Preset};
use echodex_core::echo_index::{FibreGrid, IndexProtocol};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "echodex", version, about = "Echo index estimation for input-driven recurrent networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PresetArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Override a setting, e.g. `--set protocol.ic_count=50`.
    #[arg(long = "set", value_parser = parse_override)]
    overrides: Vec<(String, String)>,
    /// Start from a settings JSON file instead of the defaults.
    #[arg(long)]
    settings: Option<PathBuf>,
    /// Reduced variant of the preset where one exists.
    #[arg(long)]
    small: bool,
}

#[derive(Subcommand)]
#[command(rename_all = "snake_case")]
enum Command {
    /// Zero solution, forward orbits and pullback fibres of a scalar nonautonomous map.
    Kloeden(PresetArgs),
    /// Two-dimensional network under two switching inputs.
    #[command(name = "switching2d")]
    Switching2d(PresetArgs),
    /// Scalar network under uniform inputs of several amplitudes.
    ScalarSweep(PresetArgs),
    /// Fold of the autonomous scalar map.
    FoldBisect(PresetArgs),
    /// Index drop under large-input splicing.
    SpliceDemo(PresetArgs),
    /// Reservoir trained to hold a binary context.
    ContextTask(PresetArgs),
    /// Print the default settings of a preset.
    Settings {
        preset: Preset,
        #[arg(long)]
        small: bool,
    },
    /// Rerun a manifest and compare file hashes.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the echo index of a model under an input.
    Index {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Protocol JSON; defaults apply to missing fields.
        #[arg(long)]
        protocol: Option<PathBuf>,
        #[arg(long = "set", value_parser = parse_override)]
        overrides: Vec<(String, String)>,
    },
    /// Contraction certificates: global, or on a region for an input.
    Certify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mu: f64,
        /// `lo1,lo2,..hi1,hi2` or `lo1,lo2:hi1,hi2`
        #[arg(long, allow_hyphen_values = true)]
        region: Option<String>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 101)]
        grid: usize,
        /// Also report the large-input radius for this cone half-angle.
        #[arg(long)]
        large_input_epsilon: Option<f64>,
    },
    /// Generate an input sequence from a generator spec.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pullback fibre diameter at a time and depth.
    Fibre {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        time: i64,
        #[arg(long)]
        depth: usize,
        /// Starting set JSON; a grid or cloud over the whole state box by default.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct Failures<'a> {
    failed: Vec<&'a Check>,
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn report_checks(checks: &[Check]) -> Result<ExitCode> {
    for c in checks {
        eprintln!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    let failed: Vec<&Check> = checks.iter().filter(|c| !c.passed).collect();
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        print_json(&Failures { failed })?;
        Ok(ExitCode::from(1))
    }
}

fn run_preset(preset: Preset, a: PresetArgs) -> Result<ExitCode> {
    let base = match a.settings {
        Some(path) => read_json(&path)?,
        None => presets::default_settings(preset, a.small)?,
    };
    let resolved = presets::resolve_settings(preset, &base, &a.overrides)?;
    let manifest = presets::execute(preset, &resolved, a.seed, &a.out)?;
    report_checks(&manifest.checks)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Kloeden(a) => run_preset(Preset::Kloeden, a),
        Command::Switching2d(a) => run_preset(Preset::Switching2d, a),
        Command::ScalarSweep(a) => run_preset(Preset::ScalarSweep, a),
        Command::FoldBisect(a) => run_preset(Preset::FoldBisect, a),
        Command::SpliceDemo(a) => run_preset(Preset::SpliceDemo, a),
        Command::ContextTask(a) => run_preset(Preset::ContextTask, a),
        Command::Settings { preset, small } => {
            print_json(&presets::default_settings(preset, small)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { manifest, out } => {
            let m = Manifest::read(&manifest)?;
            let report = presets::replay(&m, &out)?;
            print_json(&report)?;
            Ok(if report.identical { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Index { model, input, protocol, overrides } => {
            let params = commands::load_params(&model)?;
            let input = commands::load_input(&input)?;
            let protocol: IndexProtocol = match protocol {
                Some(p) => read_json(&p)?,
                None => IndexProtocol::default(),
            };
            print_json(&commands::index(&params, &input, &protocol, &overrides)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify { model, mu, region, input, grid, large_input_epsilon } => {
            let params = commands::load_params(&model)?;
            let input = input.map(|p| commands::load_input(&p)).transpose()?;
            let region = region.map(|r| commands::parse_region(&r)).transpose()?;
            let doc = commands::certify(
                &params,
                &CertifyOptions { mu, region, input: input.as_ref(), grid, large_input_epsilon },
            )?;
            print_json(&doc)?;
            Ok(if doc["certified"] == true { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Generate { spec, out } => {
            let seq = commands::generate(&spec)?;
            match out {
                Some(path) => seq.write_csv(File::create(&path).with_context(|| format!("creating {}", path.display()))?)?,
                None => seq.write_csv(io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Fibre { model, input, time, depth, grid } => {
            let params = commands::load_params(&model)?;
            let input = commands::load_input(&input)?;
            let grid: Option<FibreGrid> = grid.map(|p| read_json(&p)).transpose()?;
            let f = commands::fibre(&params, &input, time, depth, grid)?;
            print_json(&serde_json::json!({
                "time": f.time,
                "depth": f.depth,
                "diameter": f.diameter(),
                "diameter_trace": f.diameter_trace,
            }))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    if let Ok(n) = std::env::var("ECHODEX_THREADS") {
        match n.parse::<usize>() {
            Ok(n) => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            Err(_) => {
                eprintln!("error: ECHODEX_THREADS must be a thread count, got {n:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
