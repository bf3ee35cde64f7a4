// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use qctl_core::exec::{
    run_until_halt, BinaryTraceWriter, ConstantStimulus, Controller, ControllerConfig, ExecutionTrace, NullSink, ReadoutSource, TraceSink,
    TriggerSource,
};
use qctl_core::isa::{assemble, read_program, Program, PROGRAM_MAGIC};
use qctl_core::measure::{MeasurementUnit, ReadoutParams};
use qctl_core::qubit::{QubitParams, QubitSession};
use qctl_core::rng::substream;
use qctl_core::synth::{dequantize, DspConfig, EnvelopeLibrary, PathKind, SAMPLE_RATE_HZ};

use crate::header::{Header, OutDir};
use crate::Format;

/// Run configuration file. Paths are relative to the file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dsp: Option<DspConfig>,
    pub readout_table: Vec<ReadoutParams>,
    /// Envelope library index file.
    pub envelopes: Option<PathBuf>,
    pub trigger: TriggerSource,
    /// Constant readout level per slot when no qubit is attached.
    pub readout_levels: Vec<f64>,
    pub qubit: Option<QubitParams>,
    pub capture_capacity: Option<usize>,
    /// Bit pairs for joint statistics.
    pub pairs: Vec<(u8, u8)>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, header: &mut Header) -> Result<(RunConfig, ControllerConfig)> {
        let Some(path) = path else {
            return Ok((RunConfig::default(), ControllerConfig::default()));
        };
        let bytes = header.read_input(path)?;
        let rc: RunConfig = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let envelopes = match &rc.envelopes {
            Some(p) => {
                let p = base.join(p);
                header.read_input(&p)?;
                EnvelopeLibrary::load(&p).with_context(|| format!("loading {}", p.display()))?
            }
            None => EnvelopeLibrary::default(),
        };
        if let Some(q) = &rc.qubit {
            q.validate()?;
        }
        let cfg = ControllerConfig {
            readout_table: rc.readout_table.clone(),
            envelopes,
            dsp: rc.dsp.clone().unwrap_or_default(),
            trigger: rc.trigger.clone(),
        };
        Ok((rc, cfg))
    }
}

/// Reads a program image or assembly source.
pub fn load_program(path: &Path, header: &mut Header) -> Result<Program> {
    let bytes = header.read_input(path)?;
    if bytes.starts_with(&PROGRAM_MAGIC) {
        return read_program(&bytes[..]).with_context(|| format!("reading {}", path.display()));
    }
    let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is neither a program image nor UTF-8 text", path.display()))?;
    assemble(text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

/// Channels the waveform dump includes: every channel with instructions.
fn dump_channels(program: &Program) -> Vec<u8> {
    program.channels().map(|(c, _)| c).collect()
}

pub fn waveform_csv(trace: &ExecutionTrace, channels: &[u8], dsp: &DspConfig) -> String {
    let mut s = String::from("time_ns");
    for &c in channels {
        match dsp.channel(c).path_kind {
            PathKind::Rf => {
                let _ = write!(s, ",ch{c}_i,ch{c}_q");
            }
            PathKind::Dc => {
                let _ = write!(s, ",ch{c}_dc");
            }
        }
    }
    s.push('\n');
    let ns_per_sample = 1e9 / SAMPLE_RATE_HZ;
    let mut n = 0u64;
    for f in &trace.frames {
        for k in 0..f.dac[0].len() {
            let _ = write!(s, "{}", n as f64 * ns_per_sample);
            for &c in channels {
                let (i, q) = f.dac[c as usize][k];
                match dsp.channel(c).path_kind {
                    PathKind::Rf => {
                        let _ = write!(s, ",{},{}", dequantize(i), dequantize(q));
                    }
                    PathKind::Dc => {
                        let _ = write!(s, ",{}", dequantize(i));
                    }
                }
            }
            s.push('\n');
            n += 1;
        }
    }
    s
}

pub fn waveform_json(trace: &ExecutionTrace, channels: &[u8], dsp: &DspConfig) -> serde_json::Value {
    let chans: Vec<_> = channels
        .iter()
        .map(|&c| {
            let samples = trace.channel_samples(c);
            let kind = dsp.channel(c).path_kind;
            let i: Vec<i16> = samples.iter().map(|s| s.0).collect();
            let q: Vec<i16> = samples.iter().map(|s| s.1).collect();
            serde_json::json!({"channel": c, "kind": kind, "i_codes": i, "q_codes": q})
        })
        .collect();
    serde_json::json!({"format": "qctl-waveform", "version": 1, "sample_rate_hz": SAMPLE_RATE_HZ, "full_scale_code": 32768, "channels": chans})
}

/// Writes one unit's or run's trace in the chosen format.
pub fn write_trace(out: &mut OutDir, stem: &str, header: &Header, trace: &ExecutionTrace, channels: &[u8], dsp: &DspConfig, format: Format) -> Result<()> {
    match format {
        Format::Csv => {
            out.write_csv(&format!("{stem}.csv"), header, &waveform_csv(trace, channels, dsp))?;
        }
        Format::Json => {
            out.write_json(&format!("{stem}.json"), header, waveform_json(trace, channels, dsp))?;
        }
        Format::Binary => {
            let mut w = BinaryTraceWriter::new(Vec::new(), &header.json())?;
            for f in &trace.frames {
                w.write_codes(f)?;
            }
            let bytes = w.finish()?;
            out.write(&format!("{stem}.qct"), &bytes)?;
        }
    }
    out.write_json(&format!("{stem}_events.json"), header, trace.events_json())?;
    Ok(())
}

pub struct RunArgs<'a> {
    pub program: &'a Path,
    pub config: Option<&'a Path>,
    pub qubit: Option<&'a Path>,
    pub shots: u64,
    pub seed: u64,
    pub out_dir: &'a Path,
    pub format: Format,
}

pub fn cmd_run(a: RunArgs) -> Result<()> {
    let mut header = Header::new("run", a.seed);
    let program = load_program(a.program, &mut header)?;
    let (rc, cfg) = RunConfig::load(a.config, &mut header)?;
    let qubit = match a.qubit {
        Some(p) => {
            let bytes = header.read_input(p)?;
            Some(QubitParams::from_json(std::str::from_utf8(&bytes)?)?)
        }
        None => rc.qubit.clone(),
    };
    if a.shots == 0 {
        bail!("--shots must be at least 1");
    }
    let loaded = Controller::load(&program, &cfg)?;
    let capacity = rc.capture_capacity.unwrap_or(1024);
    let mut mu = MeasurementUnit::new(cfg.readout_table.clone(), capacity).with_pairs(&rc.pairs);
    let mut out = OutDir::create(a.out_dir)?;
    let mut first = ExecutionTrace::default();
    let mut cycles = 0;
    for shot in 0..a.shots {
        let mut ctrl = loaded.clone();
        let mut constant = ConstantStimulus {
            levels: rc.readout_levels.clone(),
        };
        let mut session = qubit.as_ref().map(|q| QubitSession::new(q, substream(a.seed, 0, shot)));
        let source: &mut dyn ReadoutSource = match session.as_mut() {
            Some(s) => s,
            None => &mut constant,
        };
        let sink: &mut dyn TraceSink = if shot == 0 { &mut first } else { &mut NullSink };
        let s = run_until_halt(&mut ctrl, &mut mu, source, sink, None)?;
        cycles = s.cycles;
    }
    let channels = dump_channels(&program);
    write_trace(&mut out, "waveform", &header, &first, &channels, &cfg.dsp, a.format)?;
    out.write_json(
        "stats.json",
        &header,
        serde_json::json!({"format": "qctl-stats", "version": 1, "cycles_per_shot": cycles, "statistics": mu.stats.to_json()}),
    )?;
    if !mu.capture.is_empty() {
        let mut bytes = Vec::new();
        mu.capture.export(&mut bytes)?;
        out.write_binary_with_sidecar("capture.qrc", &header, &bytes)?;
    }
    eprintln!("run: {} shot(s), {} cycles per shot, outputs in {}", a.shots, cycles, a.out_dir.display());
    Ok(())
}
