// SPDX-License-Identifier: Apache-2.0

//! `qctl`: assemble, run and analyze qubit-controller programs.

mod experiment;
mod header;
mod run;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use qctl_core::ensemble::{deskew, orchestrate, skew_calibration, EnsembleOptions, Role, UnitConfig};
use qctl_core::isa::{assemble, disassemble, read_program, write_program};

use experiment::{cmd_experiment, Experiment, ExperimentArgs, ModeArg};
use header::{Header, OutDir};
use run::{cmd_run, load_program, write_trace, RunArgs, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Binary,
}

#[derive(Parser)]
#[command(name = "qctl", version, about = "Instruction-driven qubit controller simulator")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Configuration file (run config, experiment setup or ensemble file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assembly text to binary program image.
    Assemble { input: PathBuf, output: PathBuf },
    /// Binary program image to assembly text (stdout unless -o).
    Disasm {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Runs a program (image or text) and writes trace, events and statistics.
    Run {
        program: PathBuf,
        /// Qubit parameter file; attaches the qubit model to the readout.
        #[arg(long)]
        qubit: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        shots: u64,
    },
    /// Runs a qubit experiment and writes data and fit results.
    Experiment {
        #[arg(value_enum)]
        name: Experiment,
        #[arg(long)]
        shots: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Modulator gain imbalance for qmc_sweep.
        #[arg(long, default_value_t = 1.05)]
        gain: f64,
        /// Comma-separated phase skews in degrees for qmc_sweep.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5")]
        skews: Vec<f64>,
    },
    /// Runs a Conductor/Performer ensemble from an ensemble file (--config).
    Ensemble {
        /// Cancels the configured skews before merging.
        #[arg(long)]
        deskew: bool,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleUnitFile {
    unit_id: u32,
    role: Role,
    #[serde(default)]
    clock_skew_ps: i64,
    program: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleFile {
    #[serde(default)]
    run_config: Option<PathBuf>,
    #[serde(default = "default_start")]
    start_cycle: u64,
    units: Vec<EnsembleUnitFile>,
}

fn default_start() -> u64 {
    16
}

fn cmd_assemble(input: &Path, output: &Path, seed: u64) -> Result<()> {
    let mut header = Header::new("assemble", seed);
    let bytes = header.read_input(input)?;
    let text = std::str::from_utf8(&bytes).context("source is not UTF-8")?;
    let program = assemble(text).map_err(|e| anyhow::anyhow!("{}: {e}", input.display()))?;
    let mut image = Vec::new();
    write_program(&program, &mut image)?;
    std::fs::write(output, &image).with_context(|| format!("writing {}", output.display()))?;
    let meta = serde_json::json!({"header": header.json(), "file": output.display().to_string(), "sha256": header::sha256_hex(&image)});
    std::fs::write(format!("{}.meta.json", output.display()), serde_json::to_string_pretty(&meta)? + "\n")?;
    eprintln!("assembled {} instructions", program.instruction_count());
    Ok(())
}

fn cmd_disasm(input: &Path, output: Option<&Path>, seed: u64) -> Result<()> {
    let mut header = Header::new("disasm", seed);
    let bytes = header.read_input(input)?;
    let program = read_program(&bytes[..]).with_context(|| format!("reading {}", input.display()))?;
    let body = disassemble(&program);
    let text = header.csv_comment() + &body;
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_ensemble(config: Option<&Path>, seed: u64, out_dir: &Path, format: Format, apply_deskew: bool) -> Result<()> {
    let path = config.context("ensemble needs --config <ensemble.json>")?;
    let mut header = Header::new("ensemble", seed);
    let bytes = header.read_input(path)?;
    let file: EnsembleFile = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let run_cfg = file.run_config.as_ref().map(|p| base.join(p));
    let (rc, cfg) = RunConfig::load(run_cfg.as_deref(), &mut header)?;
    let units = file
        .units
        .iter()
        .map(|u| {
            Ok(UnitConfig {
                unit_id: u.unit_id,
                role: u.role,
                clock_skew_ps: u.clock_skew_ps,
                program: load_program(&base.join(&u.program), &mut header)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = EnsembleOptions {
        config: cfg.clone(),
        readout_levels: rc.readout_levels.clone(),
        start_cycle: file.start_cycle,
        ..Default::default()
    };
    let mut trace = orchestrate(&units, &opts)?;
    if apply_deskew {
        trace = deskew(&trace, &skew_calibration(&units));
    }
    let mut out = OutDir::create(out_dir)?;
    for u in &trace.units {
        write_trace(&mut out, &format!("unit_{}", u.unit_id), &header, &u.trace, &u.channels, &cfg.dsp, format)?;
    }
    out.write_json("timeline.json", &header, trace.timeline_json())?;
    let misalignment: BTreeMap<String, i64> = trace.misalignment_ps().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    match trace.merged() {
        Ok(m) => {
            let channels: Vec<u8> = trace.units.iter().flat_map(|u| u.channels.iter().copied()).collect();
            write_trace(&mut out, "merged", &header, &m, &channels, &cfg.dsp, format)?;
            eprintln!("ensemble: aligned; merged trace hash {}", header::hex(&m.hash()));
        }
        Err(e) => eprintln!("ensemble: no merged trace ({e})"),
    }
    eprintln!("ensemble: first-edge misalignment (ps) {misalignment:?}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Assemble { input, output } => cmd_assemble(input, output, cli.seed),
        Command::Disasm { input, output } => cmd_disasm(input, output.as_deref(), cli.seed),
        Command::Run { program, qubit, shots } => cmd_run(RunArgs {
            program,
            config: cli.config.as_deref(),
            qubit: qubit.as_deref(),
            shots: *shots,
            seed: cli.seed,
            out_dir: &cli.out_dir,
            format: cli.format,
        }),
        Command::Experiment {
            name,
            shots,
            mode,
            gain,
            skews,
        } => cmd_experiment(ExperimentArgs {
            name: *name,
            config: cli.config.as_deref(),
            seed: cli.seed,
            shots: *shots,
            mode: *mode,
            gain: *gain,
            skews_deg: skews.clone(),
            out_dir: &cli.out_dir,
            format: cli.format,
        }),
        Command::Ensemble { deskew } => cmd_ensemble(cli.config.as_deref(), cli.seed, &cli.out_dir, cli.format, *deskew),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
