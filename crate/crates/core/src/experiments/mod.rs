// SPDX-License-Identifier: Apache-2.0

//! Qubit experiments built on per-point program synthesis.
//!
//! Every sweep point is a fresh small program, run either once against the
//! noiseless qubit (`Mode::Ideal`, reporting the final `|1>` population) or
//! shot by shot with noise and readout (`Mode::MonteCarlo`, reporting the
//! fraction of shots that read 1).

pub mod fit;
mod programs;
mod runner;

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exec::{run_until_halt, ConstantStimulus, Controller, ControllerConfig, ExecutionTrace};
use crate::isa::{amplitude_word, ftw_from_hz, ftw_to_hz, Instruction, Program};
use crate::measure::{MeasurementUnit, Polarity, ReadoutParams};
use crate::qubit::QubitParams;
use crate::spectrum::{db, power_spectrum, Window};
use crate::synth::{dequantize, ChannelDspConfig, DspConfig, Iq, SsbModulator, SAMPLES_PER_CYCLE};

pub use fit::{FitFailure, FitResult};
pub use programs::{allxy_pairs, single_channel, Gate, PulseSet};
pub use runner::{PointResult, RunError, ShotRunner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ideal,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSetup {
    pub qubit: QubitParams,
    pub shots: u64,
    pub seed: u64,
    pub readout_window_cycles: u32,
    /// Length of every gate pulse.
    pub pulse_cycles: u32,
}

impl Default for ExperimentSetup {
    fn default() -> Self {
        ExperimentSetup {
            qubit: QubitParams::default(),
            shots: 1000,
            seed: 0,
            readout_window_cycles: 10,
            pulse_cycles: 20,
        }
    }
}

impl ExperimentSetup {
    /// Charge-sensing slot 0 into bit 0, threshold halfway between levels.
    pub fn readout(&self) -> ReadoutParams {
        let [l0, l1] = self.qubit.readout_levels;
        let mut p = ReadoutParams::charge_sensing(self.readout_window_cycles, 0.0, 0);
        p.threshold = (l0 + l1) / 2.0 * p.window_samples() as f64;
        p.polarity = if l1 >= l0 { Polarity::Above } else { Polarity::Below };
        p
    }

    pub fn runner(&self) -> ShotRunner {
        let cfg = ControllerConfig {
            readout_table: vec![self.readout()],
            ..Default::default()
        };
        ShotRunner::new(cfg, self.qubit.clone(), self.seed)
    }

    fn channel(&self) -> u8 {
        self.qubit.drive_channel
    }

    fn resonance_ftw(&self) -> u32 {
        ftw_from_hz(self.qubit.f_qubit_hz).expect("validated qubit frequency")
    }
}

/// Drive calibration found from a resonant Rabi line cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub ftw: u32,
    pub rabi_hz_per_unit_amplitude: f64,
}

impl Calibration {
    /// Amplitude word for a rotation of `angle` radians in `cycles`.
    pub fn amplitude_word(&self, angle: f64, cycles: u32) -> i16 {
        let t = cycles as f64 * SAMPLES_PER_CYCLE as f64 / crate::synth::SAMPLE_RATE_HZ;
        let a = angle / (TAU * self.rabi_hz_per_unit_amplitude * t);
        amplitude_word(a.clamp(-1.0, 1.0)).expect("clamped")
    }

    pub fn pulses(&self, setup: &ExperimentSetup) -> PulseSet {
        PulseSet {
            channel: setup.channel(),
            ftw: self.ftw,
            cycles: setup.pulse_cycles,
            pi_word: self.amplitude_word(PI, setup.pulse_cycles),
            half_pi_word: self.amplitude_word(PI / 2.0, setup.pulse_cycles),
        }
    }
}

/// A one-dimensional sweep with its fit.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub experiment: String,
    pub x_label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mode: Mode,
    pub shots: u64,
    pub fit_model: String,
    pub fit: Result<FitResult, FitFailure>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChevronResult {
    pub detunings_hz: Vec<f64>,
    pub durations_s: Vec<f64>,
    pub amplitude: f64,
    /// Row per detuning, column per duration.
    pub p1: Vec<Vec<f64>>,
    pub mode: Mode,
}

#[derive(Debug, Clone, Serialize)]
pub struct AllXyPoint {
    pub pair: String,
    pub ideal: f64,
    pub measured: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AllXyResult {
    pub points: Vec<AllXyPoint>,
    pub mode: Mode,
}

fn cycles_to_s(c: u64) -> f64 {
    c as f64 * SAMPLES_PER_CYCLE as f64 / crate::synth::SAMPLE_RATE_HZ
}

fn measure_point(setup: &ExperimentSetup, runner: &ShotRunner, seq: Vec<Instruction>, mode: Mode, point: u64) -> Result<f64, RunError> {
    match mode {
        Mode::Ideal => Ok(runner.ideal_state(&single_channel(setup.channel(), seq, None))?.p1()),
        Mode::MonteCarlo => {
            let p = single_channel(setup.channel(), seq, Some((0, setup.readout_window_cycles)));
            Ok(runner.monte_carlo(&p, point, setup.shots)?.p1(0))
        }
    }
}

fn sweep<F>(setup: &ExperimentSetup, mode: Mode, points: &[u32], build: F) -> Result<Vec<f64>, RunError>
where
    F: Fn(u32) -> Vec<Instruction> + Sync,
{
    let runner = setup.runner();
    points
        .par_iter()
        .enumerate()
        .map(|(k, &c)| measure_point(setup, &runner, build(c), mode, k as u64))
        .collect()
}

/// Resonant duration sweep at `amplitude`; fitted to `B + A sin^2(pi f t)`.
pub fn rabi_linecut(setup: &ExperimentSetup, amplitude: f64, durations_cycles: &[u32], mode: Mode) -> Result<SweepResult, RunError> {
    let ftw = setup.resonance_ftw();
    let word = amplitude_word(amplitude).expect("amplitude in range");
    let ps = PulseSet {
        channel: setup.channel(),
        ftw,
        cycles: 0,
        pi_word: 0,
        half_pi_word: 0,
    };
    let y = sweep(setup, mode, durations_cycles, |c| ps.rabi(ftw, word, c))?;
    let x: Vec<f64> = durations_cycles.iter().map(|&c| cycles_to_s(c as u64)).collect();
    let fit = fit::fit_rabi(&x, &y);
    Ok(SweepResult {
        experiment: "rabi_linecut".into(),
        x_label: "duration_s".into(),
        x,
        y,
        mode,
        shots: shots_for(setup, mode),
        fit_model: "B + A sin^2(pi f t); params [A, B, f]".into(),
        fit,
    })
}

fn shots_for(setup: &ExperimentSetup, mode: Mode) -> u64 {
    match mode {
        Mode::Ideal => 0,
        Mode::MonteCarlo => setup.shots,
    }
}

/// Finds the Rabi rate per unit amplitude from a noiseless resonant line
/// cut at half scale.
pub fn calibrate(setup: &ExperimentSetup) -> Result<Calibration, FitFailure> {
    let durations: Vec<u32> = (0..=40).map(|k| 2 * k).collect();
    let cut = rabi_linecut(setup, 0.5, &durations, Mode::Ideal).map_err(|e| FitFailure { reason: e.to_string() })?;
    let f = cut.fit?.params[2];
    Ok(Calibration {
        ftw: setup.resonance_ftw(),
        rabi_hz_per_unit_amplitude: f / (amplitude_word(0.5).unwrap() as f64 / 32768.0),
    })
}

/// Frequency by duration map: detunings `-10..=10 MHz` in 1 MHz steps and
/// durations `0, 4, .., 80` cycles unless given.
pub fn rabi_chevron(setup: &ExperimentSetup, amplitude: f64, detunings_hz: &[f64], durations_cycles: &[u32], mode: Mode) -> Result<ChevronResult, RunError> {
    let word = amplitude_word(amplitude).expect("amplitude in range");
    let ch = setup.channel();
    let runner = setup.runner();
    let ps = PulseSet {
        channel: ch,
        ftw: 0,
        cycles: 0,
        pi_word: 0,
        half_pi_word: 0,
    };
    let n = durations_cycles.len();
    let flat: Vec<f64> = (0..detunings_hz.len() * n)
        .into_par_iter()
        .map(|k| {
            let ftw = ftw_from_hz(setup.qubit.f_qubit_hz + detunings_hz[k / n]).expect("detuned frequency in band");
            measure_point(setup, &runner, ps.rabi(ftw, word, durations_cycles[k % n]), mode, k as u64)
        })
        .collect::<Result<_, _>>()?;
    Ok(ChevronResult {
        detunings_hz: detunings_hz.to_vec(),
        durations_s: durations_cycles.iter().map(|&c| cycles_to_s(c as u64)).collect(),
        amplitude: word as f64 / 32768.0,
        p1: flat.chunks(n).map(|r| r.to_vec()).collect(),
        mode,
    })
}

pub fn default_chevron_axes() -> (Vec<f64>, Vec<u32>) {
    ((-10..=10).map(|k| k as f64 * 1e6).collect(), (0..=20).map(|k| 4 * k).collect())
}

/// Generalized Rabi formula for a square pulse from `|0>`.
pub fn generalized_rabi(rabi_hz: f64, detuning_hz: f64, t: f64) -> f64 {
    let w2 = rabi_hz * rabi_hz + detuning_hz * detuning_hz;
    if w2 == 0.0 {
        return 0.0;
    }
    rabi_hz * rabi_hz / w2 * (PI * w2.sqrt() * t).sin().powi(2)
}

/// Free precession a pair of square `pi/2` pulses of length `t` adds to the
/// delay for small detuning.
pub fn ramsey_pulse_offset(pulse_s: f64) -> f64 {
    4.0 * pulse_s / PI
}

/// `x - tau - x` over `delays_cycles`; fitted to `B + A exp(-((tau + t0) / T)^2)`
/// with `t0` the pulse offset.
pub fn ramsey(setup: &ExperimentSetup, cal: &Calibration, delays_cycles: &[u32], mode: Mode) -> Result<SweepResult, RunError> {
    let ps = cal.pulses(setup);
    let y = sweep(setup, mode, delays_cycles, |c| ps.ramsey(c))?;
    let x: Vec<f64> = delays_cycles.iter().map(|&c| cycles_to_s(c as u64)).collect();
    let t0 = ramsey_pulse_offset(cycles_to_s(setup.pulse_cycles as u64));
    let shifted: Vec<f64> = x.iter().map(|v| v + t0).collect();
    let fit = fit::fit_decay(&fit::gaussian_decay, &shifted, &y);
    Ok(SweepResult {
        experiment: "ramsey".into(),
        x_label: "delay_s".into(),
        x,
        y,
        mode,
        shots: shots_for(setup, mode),
        fit_model: format!("B + A exp(-((tau + {t0:e}) / T)^2); params [A, B, T]"),
        fit,
    })
}

/// `x - tau - X - tau - x`; x axis is the total free time `2 tau`, fitted
/// to `B + A exp(-t / T)`.
pub fn hahn_echo(setup: &ExperimentSetup, cal: &Calibration, taus_cycles: &[u32], mode: Mode) -> Result<SweepResult, RunError> {
    let ps = cal.pulses(setup);
    let y = sweep(setup, mode, taus_cycles, |c| ps.echo(c))?;
    let x: Vec<f64> = taus_cycles.iter().map(|&c| cycles_to_s(2 * c as u64)).collect();
    let fit = fit::fit_decay(&fit::exponential_decay, &x, &y);
    Ok(SweepResult {
        experiment: "hahn_echo".into(),
        x_label: "free_time_s".into(),
        x,
        y,
        mode,
        shots: shots_for(setup, mode),
        fit_model: "B + A exp(-t / T); params [A, B, T]".into(),
        fit,
    })
}

pub fn allxy(setup: &ExperimentSetup, cal: &Calibration, mode: Mode) -> Result<AllXyResult, RunError> {
    let ps = cal.pulses(setup);
    let runner = setup.runner();
    let pairs = allxy_pairs();
    let measured: Vec<f64> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, (pair, _))| measure_point(setup, &runner, ps.allxy(*pair), mode, k as u64))
        .collect::<Result<_, _>>()?;
    Ok(AllXyResult {
        points: pairs
            .iter()
            .zip(measured)
            .map(|((pair, ideal), m)| AllXyPoint {
                pair: pair.iter().map(|g| g.symbol()).collect(),
                ideal: *ideal,
                measured: m,
            })
            .collect(),
        mode,
    })
}

/// Image rejection of the analog modulator with and without the computed
/// correction loaded into the channel's QMC stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QmcReport {
    pub gain: f64,
    pub phase_skew_deg: f64,
    pub tone_hz: f64,
    pub image_dbc_uncorrected: f64,
    pub image_dbc_corrected: f64,
    pub suppression_db: f64,
}

/// Tone bin for the QMC measurement record.
pub const QMC_RECORD_LEN: usize = 1 << 16;
const QMC_TONE_BIN: u32 = 3277;

/// Plays a coherent single tone through channel 0 and measures the image
/// after the analog modulator by FFT.
pub fn qmc_point(gain: f64, phase_skew_deg: f64) -> Result<QmcReport, RunError> {
    let modulator = SsbModulator::new(gain, phase_skew_deg.to_radians());
    let ftw = QMC_TONE_BIN * (1u32 << 16);
    let cycles = (QMC_RECORD_LEN / SAMPLES_PER_CYCLE + 1) as u32;
    let program = Program::from_instructions([Instruction::stf(0, ftw, 1), Instruction::sta(0, 16384, cycles).on()]).map_err(crate::exec::ConfigError::from)?;
    let tone_bin = QMC_TONE_BIN as usize;
    let image_bin = QMC_RECORD_LEN - tone_bin;
    let image = |qmc| -> Result<f64, RunError> {
        let mut dsp = DspConfig::default();
        dsp.set(
            0,
            ChannelDspConfig {
                qmc,
                ..Default::default()
            },
        );
        let cfg = ControllerConfig {
            dsp,
            ..Default::default()
        };
        let mut ctrl = Controller::load(&program, &cfg)?;
        let mut trace = ExecutionTrace::default();
        run_until_halt(&mut ctrl, &mut MeasurementUnit::new(vec![], 0), &mut ConstantStimulus::default(), &mut trace, None)?;
        let out: Vec<Iq> = trace.channel_samples(0)[SAMPLES_PER_CYCLE..SAMPLES_PER_CYCLE + QMC_RECORD_LEN]
            .iter()
            .map(|&(i, q)| modulator.apply(Iq::new(dequantize(i), dequantize(q))))
            .collect();
        let p = power_spectrum(&out, Window::Rectangular);
        Ok(db(p[image_bin] / p[tone_bin]))
    };
    let before = image(crate::synth::QmcParams::IDENTITY)?;
    let after = image(modulator.correction())?;
    Ok(QmcReport {
        gain,
        phase_skew_deg,
        tone_hz: ftw_to_hz(ftw),
        image_dbc_uncorrected: before,
        image_dbc_corrected: after,
        suppression_db: before - after,
    })
}

/// [`qmc_point`] over a list of phase skews at fixed gain.
pub fn qmc_sweep(gain: f64, phase_skews_deg: &[f64]) -> Result<Vec<QmcReport>, RunError> {
    phase_skews_deg.par_iter().map(|&s| qmc_point(gain, s)).collect()
}
