// SPDX-License-Identifier: Apache-2.0

//! Two-level spin qubit driven by the synthesized waveform.
//!
//! The state is a Bloch vector with `|0>` at `z = +1`. The frame rotates at
//! `f_qubit`. Drive sample `n` is demodulated against the frame to give the
//! drive vector `b_n = R * s_n * exp(-2 pi i f_qubit n / fs)` (R is the Rabi
//! rate per unit amplitude). Inside one sample the envelope is held while
//! the carrier keeps turning at its own frequency, detuned from the frame
//! by `D_n`. The exact per-sample propagator is
//!
//! ```text
//! U_n = Rz(2 pi D_n dt) * R(2 pi (Re b_n, Im b_n, d - D_n), dt)
//! ```
//!
//! with `d` the qubit detuning from `f_qubit`. Zero-drive samples reduce to
//! `Rz(2 pi d dt)`.

mod session;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::{Iq, SAMPLE_RATE_HZ};

pub use session::{dephase, Measurement, QubitSession, WhiteNoise};

const DT: f64 = 1.0 / SAMPLE_RATE_HZ;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitParams {
    /// Resonance in the controller's IF band.
    pub f_qubit_hz: f64,
    pub rabi_rate_per_unit_amplitude_hz: f64,
    /// Quasi-static dephasing time; `None` disables it.
    pub t2_star_s: Option<f64>,
    /// Echo decay time from white frequency noise; `None` disables it.
    pub t2_echo_s: Option<f64>,
    pub readout_visibility: f64,
    /// ADC level for reported outcomes 0 and 1.
    pub readout_levels: [f64; 2],
    #[serde(default)]
    pub adc_noise_rms: f64,
    #[serde(default)]
    pub drive_channel: u8,
    #[serde(default)]
    pub seed: u64,
}

impl Default for QubitParams {
    fn default() -> Self {
        QubitParams {
            f_qubit_hz: 62.5e6,
            rabi_rate_per_unit_amplitude_hz: 10e6,
            t2_star_s: Some(1.2e-6),
            t2_echo_s: Some(115e-6),
            readout_visibility: 0.3,
            readout_levels: [0.1, 0.4],
            adc_noise_rms: 0.0,
            drive_channel: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid qubit parameters: {0}")]
pub struct QubitParamsError(pub String);

impl QubitParams {
    /// Same qubit with every noise source off.
    pub fn noiseless(&self) -> Self {
        QubitParams {
            t2_star_s: None,
            t2_echo_s: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), QubitParamsError> {
        let err = |s: &str| Err(QubitParamsError(s.into()));
        if !(self.readout_visibility > 0.0 && self.readout_visibility <= 1.0) {
            return err("visibility must be in (0, 1]");
        }
        if let (Some(s), Some(e)) = (self.t2_star_s, self.t2_echo_s) {
            if e < s {
                return err("t2_echo must not be shorter than t2_star");
            }
        }
        if self.t2_star_s.is_some_and(|t| t <= 0.0) || self.t2_echo_s.is_some_and(|t| t <= 0.0) {
            return err("coherence times must be positive");
        }
        if !self.f_qubit_hz.is_finite() || self.f_qubit_hz.abs() >= SAMPLE_RATE_HZ / 2.0 {
            return err("f_qubit must lie inside the Nyquist band");
        }
        if self.drive_channel as usize >= crate::isa::NUM_CHANNELS {
            return err("drive channel out of range");
        }
        if self.adc_noise_rms < 0.0 {
            return err("adc noise must be non-negative");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, QubitParamsError> {
        let p: QubitParams = serde_json::from_str(text).map_err(|e| QubitParamsError(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    /// Carrier offset from the frame in Hz for a tuning word, wrapped to
    /// the band `[-fs/2, fs/2)`.
    pub fn frame_offset_hz(&self, ftw: u32) -> f64 {
        let cycles = ftw as f64 / 4294967296.0 - self.f_qubit_hz / SAMPLE_RATE_HZ;
        (cycles - cycles.round()) * SAMPLE_RATE_HZ
    }

    /// Drive vector in Hz for drive sample `s` at absolute sample `n`.
    pub fn drive_vector(&self, s: Iq, n: u64) -> Iq {
        let turns = (n as f64 * (self.f_qubit_hz / SAMPLE_RATE_HZ)).fract();
        s * Iq::from_polar(self.rabi_rate_per_unit_amplitude_hz, -TAU * turns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for BlochState {
    fn default() -> Self {
        BlochState::GROUND
    }
}

impl BlochState {
    pub const GROUND: BlochState = BlochState { x: 0.0, y: 0.0, z: 1.0 };
    pub const EXCITED: BlochState = BlochState { x: 0.0, y: 0.0, z: -1.0 };

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Population of `|1>`.
    pub fn p1(&self) -> f64 {
        (1.0 - self.z) / 2.0
    }

    /// Rotation by `|w|` radians about `w / |w|`.
    #[inline]
    pub fn rotate(self, w: [f64; 3]) -> Self {
        let angle = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        if angle == 0.0 {
            return self;
        }
        let n = [w[0] / angle, w[1] / angle, w[2] / angle];
        let (s, c) = angle.sin_cos();
        let dot = n[0] * self.x + n[1] * self.y + n[2] * self.z;
        let cross = [
            n[1] * self.z - n[2] * self.y,
            n[2] * self.x - n[0] * self.z,
            n[0] * self.y - n[1] * self.x,
        ];
        let k = dot * (1.0 - c);
        BlochState {
            x: self.x * c + cross[0] * s + n[0] * k,
            y: self.y * c + cross[1] * s + n[1] * k,
            z: self.z * c + cross[2] * s + n[2] * k,
        }
    }

    #[inline]
    pub fn rotate_z(self, angle: f64) -> Self {
        if angle == 0.0 {
            return self;
        }
        let (s, c) = angle.sin_cos();
        BlochState {
            x: self.x * c - self.y * s,
            y: self.x * s + self.y * c,
            z: self.z,
        }
    }
}

/// One drive sample: post-DSP output and the tuning word behind it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriveSample {
    pub iq: Iq,
    pub ftw: u32,
}

/// Propagates one sample at absolute index `n` with qubit detuning `d_hz`.
#[inline]
pub fn step_sample(r: BlochState, s: DriveSample, n: u64, p: &QubitParams, d_hz: f64) -> BlochState {
    if s.iq == Iq::new(0.0, 0.0) {
        return r.rotate_z(TAU * d_hz * DT);
    }
    let b = p.drive_vector(s.iq, n);
    let off = p.frame_offset_hz(s.ftw);
    r.rotate([TAU * b.re * DT, TAU * b.im * DT, TAU * (d_hz - off) * DT])
        .rotate_z(TAU * off * DT)
}

/// Noiseless evolution through a block that starts at absolute sample
/// `start_sample`, with a constant qubit detuning.
pub fn evolve(state: BlochState, start_sample: u64, drive: &[DriveSample], params: &QubitParams, detuning_hz: f64) -> BlochState {
    drive
        .iter()
        .enumerate()
        .fold(state, |r, (k, s)| step_sample(r, *s, start_sample + k as u64, params, detuning_hz))
}
