// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;

use qctl_core::experiments::{
    allxy, calibrate, default_chevron_axes, hahn_echo, qmc_sweep, rabi_chevron, rabi_linecut, ramsey, ExperimentSetup, Mode, SweepResult,
};

use crate::header::{Header, OutDir};
use crate::Format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    RabiChevron,
    RabiLinecut,
    Ramsey,
    HahnEcho,
    Allxy,
    QmcSweep,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::RabiChevron => "rabi_chevron",
            Experiment::RabiLinecut => "rabi_linecut",
            Experiment::Ramsey => "ramsey",
            Experiment::HahnEcho => "hahn_echo",
            Experiment::Allxy => "allxy",
            Experiment::QmcSweep => "qmc_sweep",
        }
    }

    fn default_mode(self) -> Mode {
        match self {
            Experiment::Ramsey | Experiment::HahnEcho => Mode::MonteCarlo,
            _ => Mode::Ideal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ideal,
    MonteCarlo,
}

pub struct ExperimentArgs<'a> {
    pub name: Experiment,
    pub config: Option<&'a Path>,
    pub seed: u64,
    pub shots: Option<u64>,
    pub mode: Option<ModeArg>,
    pub gain: f64,
    pub skews_deg: Vec<f64>,
    pub out_dir: &'a Path,
    pub format: Format,
}

fn sweep_csv(r: &SweepResult) -> String {
    let mut s = format!("{},p1\n", r.x_label);
    for (x, y) in r.x.iter().zip(&r.y) {
        let _ = writeln!(s, "{x:e},{y}");
    }
    s
}

fn report_fit(r: &SweepResult) {
    match &r.fit {
        Ok(f) => eprintln!("{}: fit params {:?} +- {:?}", r.experiment, f.params, f.errors),
        Err(e) => eprintln!("{}: {e}", r.experiment),
    }
}

fn write_result(out: &mut OutDir, header: &Header, name: &str, csv: String, json: serde_json::Value, fit: Option<serde_json::Value>, format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            out.write_csv(&format!("{name}.csv"), header, &csv)?;
            if let Some(f) = fit {
                out.write_json(&format!("{name}_fit.json"), header, f)?;
            }
        }
        Format::Json => {
            out.write_json(&format!("{name}.json"), header, json)?;
        }
        Format::Binary => bail!("experiments write csv or json"),
    }
    Ok(())
}

pub fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let mut header = Header::new(&format!("experiment {}", a.name.name()), a.seed);
    let mut setup = match a.config {
        Some(p) => {
            let bytes = header.read_input(p)?;
            serde_json::from_slice::<ExperimentSetup>(&bytes).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ExperimentSetup::default(),
    };
    setup.qubit.validate()?;
    setup.seed = a.seed;
    if let Some(n) = a.shots {
        setup.shots = n;
    }
    let mode = match a.mode {
        Some(ModeArg::Ideal) => Mode::Ideal,
        Some(ModeArg::MonteCarlo) => Mode::MonteCarlo,
        None => a.name.default_mode(),
    };
    let mut out = OutDir::create(a.out_dir)?;
    let name = a.name.name();
    let meta = serde_json::json!({"format": "qctl-experiment", "version": 1, "experiment": name, "setup": setup});
    let with = |mut m: serde_json::Value, k: &str, v: serde_json::Value| {
        m[k] = v;
        m
    };
    match a.name {
        Experiment::QmcSweep => {
            let rows = qmc_sweep(a.gain, &a.skews_deg)?;
            let mut csv = String::from("gain,phase_skew_deg,tone_hz,image_dbc_uncorrected,image_dbc_corrected,suppression_db\n");
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    r.gain, r.phase_skew_deg, r.tone_hz, r.image_dbc_uncorrected, r.image_dbc_corrected, r.suppression_db
                );
                eprintln!("qmc_sweep: skew {} deg, suppression {:.1} dB", r.phase_skew_deg, r.suppression_db);
            }
            let json = serde_json::json!({"format": "qctl-experiment", "version": 1, "experiment": name, "rows": rows});
            write_result(&mut out, &header, name, csv, json, None, a.format)?;
        }
        Experiment::RabiChevron => {
            let (det, dur) = default_chevron_axes();
            let r = rabi_chevron(&setup, 0.5, &det, &dur, mode)?;
            let mut csv = String::from("detuning_hz,duration_s,p1\n");
            for (d, row) in r.detunings_hz.iter().zip(&r.p1) {
                for (t, p) in r.durations_s.iter().zip(row) {
                    let _ = writeln!(csv, "{d},{t:e},{p}");
                }
            }
            write_result(&mut out, &header, name, csv, with(meta, "result", serde_json::to_value(&r)?), None, a.format)?;
        }
        Experiment::RabiLinecut => {
            let durations: Vec<u32> = (0..=40).map(|k| 2 * k).collect();
            let r = rabi_linecut(&setup, 0.5, &durations, mode)?;
            report_fit(&r);
            let fit = with(meta.clone(), "fit", serde_json::to_value(&r.fit)?);
            write_result(&mut out, &header, name, sweep_csv(&r), with(meta, "result", serde_json::to_value(&r)?), Some(fit), a.format)?;
        }
        Experiment::Ramsey | Experiment::HahnEcho | Experiment::Allxy => {
            let cal = calibrate(&setup).map_err(|e| anyhow::anyhow!("calibration: {e}"))?;
            eprintln!("calibration: rabi rate {:.6} MHz per unit amplitude", cal.rabi_hz_per_unit_amplitude / 1e6);
            let meta = with(meta, "calibration", serde_json::to_value(cal)?);
            if a.name == Experiment::Allxy {
                let r = allxy(&setup, &cal, mode)?;
                let mut csv = String::from("pair,ideal,measured\n");
                for p in &r.points {
                    let _ = writeln!(csv, "{},{},{}", p.pair, p.ideal, p.measured);
                }
                write_result(&mut out, &header, name, csv, with(meta, "result", serde_json::to_value(&r)?), None, a.format)?;
            } else {
                let r = if a.name == Experiment::Ramsey {
                    let delays: Vec<u32> = (0..=60).map(|k| 10 * k).collect();
                    ramsey(&setup, &cal, &delays, mode)?
                } else {
                    let taus: Vec<u32> = (0..=30).map(|k| 1000 * k).collect();
                    hahn_echo(&setup, &cal, &taus, mode)?
                };
                report_fit(&r);
                let fit = with(meta.clone(), "fit", serde_json::json!({"model": r.fit_model, "result": r.fit}));
                write_result(&mut out, &header, name, sweep_csv(&r), with(meta, "result", serde_json::to_value(&r)?), Some(fit), a.format)?;
            }
        }
    }
    eprintln!("{name}: outputs in {}", a.out_dir.display());
    Ok(())
}
