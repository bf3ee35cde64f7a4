// SPDX-License-Identifier: Apache-2.0

//! Measurement unit: readout discrimination, register writes, shot
//! statistics and raw capture.

mod capture;
mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::synth::{dequantize, quadrature, Iq, SAMPLES_PER_CYCLE};

pub use capture::{CaptureEntry, CaptureFileError, RawCapture, CAPTURE_MAGIC};
pub use stats::{ShotOutcome, ShotStatistics, StatsMergeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutMode {
    ChargeSensing,
    Reflectometry,
}

/// Which side of the threshold reads as 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    Above,
    Below,
}

/// One entry of the readout-parameter table, addressed by RDO slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutParams {
    pub mode: ReadoutMode,
    pub window_cycles: u32,
    /// In units of summed full-scale samples.
    pub threshold: f64,
    #[serde(default)]
    pub polarity: Polarity,
    pub target_bit: u8,
    #[serde(default)]
    pub readout_ftw: u32,
    #[serde(default)]
    pub rotation_phase_word: u16,
}

impl ReadoutParams {
    pub fn charge_sensing(window_cycles: u32, threshold: f64, target_bit: u8) -> Self {
        ReadoutParams {
            mode: ReadoutMode::ChargeSensing,
            window_cycles,
            threshold,
            polarity: Polarity::Above,
            target_bit,
            readout_ftw: 0,
            rotation_phase_word: 0,
        }
    }

    pub fn window_samples(&self) -> usize {
        self.window_cycles as usize * SAMPLES_PER_CYCLE
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.window_cycles == 0 {
            return Err("window_cycles must be at least 1".into());
        }
        if self.target_bit >= 32 {
            return Err(format!("target_bit {} out of range 0..31", self.target_bit));
        }
        if !self.threshold.is_finite() {
            return Err("threshold must be finite".into());
        }
        Ok(())
    }

    #[inline]
    pub fn decide(&self, metric: f64) -> bool {
        match self.polarity {
            Polarity::Above => metric > self.threshold,
            Polarity::Below => metric < self.threshold,
        }
    }
}

/// Readout-parameter table file: a JSON array indexed by slot.
pub fn parse_readout_table(text: &str) -> Result<Vec<ReadoutParams>, serde_json::Error> {
    serde_json::from_str(text)
}

/// RDO start notification from an execution core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MuTrigger {
    pub channel: u8,
    pub slot: u8,
    pub start_cycle: u64,
    pub window_cycles: u32,
}

impl MuTrigger {
    /// Cycle on which the register bit is written.
    pub fn last_cycle(&self) -> u64 {
        self.start_cycle + self.window_cycles as u64 - 1
    }

    pub fn start_sample(&self) -> u64 {
        self.start_cycle * SAMPLES_PER_CYCLE as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasureError {
    #[error("ADC block has {got} samples, window needs {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no readout table entry for slot {0}")]
    UnknownSlot(u8),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdoResult {
    pub bit: bool,
    /// Boxcar integral (charge sensing) or rotated I (reflectometry).
    pub metric: f64,
    /// Integrated baseband pair after rotation.
    pub iq: Iq,
}

/// Discriminates one readout window.
///
/// Reflectometry demodulates with an NCO at `readout_ftw` on the absolute
/// sample timebase, so the reference phase at sample `n` of the window is
/// `readout_ftw * (start_sample + n) mod 2^32`.
pub fn process_rdo(trigger: &MuTrigger, adc: &[i16], params: &ReadoutParams) -> Result<RdoResult, MeasureError> {
    let expected = params.window_samples();
    if adc.len() != expected {
        return Err(MeasureError::LengthMismatch {
            expected,
            got: adc.len(),
        });
    }
    let iq = match params.mode {
        ReadoutMode::ChargeSensing => Iq::new(adc.iter().map(|&s| dequantize(s)).sum(), 0.0),
        ReadoutMode::Reflectometry => {
            let start = trigger.start_sample();
            let mut z = Iq::new(0.0, 0.0);
            for (n, &s) in adc.iter().enumerate() {
                let phase = params.readout_ftw.wrapping_mul((start + n as u64) as u32);
                z += quadrature(phase).conj() * dequantize(s);
            }
            z * quadrature((params.rotation_phase_word as u32) << 16)
        }
    };
    Ok(RdoResult {
        bit: params.decide(iq.re),
        metric: iq.re,
        iq,
    })
}

/// The hardware-side unit: owns the table, statistics and capture ring.
#[derive(Debug, Clone)]
pub struct MeasurementUnit {
    table: Vec<ReadoutParams>,
    pub stats: ShotStatistics,
    pub capture: RawCapture,
    shot: u64,
    current: ShotOutcome,
}

impl MeasurementUnit {
    pub fn new(table: Vec<ReadoutParams>, capture_capacity: usize) -> Self {
        MeasurementUnit {
            table,
            stats: ShotStatistics::default(),
            capture: RawCapture::new(capture_capacity),
            shot: 0,
            current: ShotOutcome::default(),
        }
    }

    pub fn with_pairs(mut self, pairs: &[(u8, u8)]) -> Self {
        self.stats = ShotStatistics::with_pairs(pairs);
        self
    }

    pub fn table(&self) -> &[ReadoutParams] {
        &self.table
    }

    pub fn params(&self, slot: u8) -> Result<&ReadoutParams, MeasureError> {
        self.table.get(slot as usize).ok_or(MeasureError::UnknownSlot(slot))
    }

    pub fn shot_index(&self) -> u64 {
        self.shot
    }

    pub fn set_shot_index(&mut self, shot: u64) {
        self.shot = shot;
    }

    /// Discriminates, records the raw block and the outcome for this shot.
    pub fn handle(&mut self, trigger: &MuTrigger, adc: Vec<i16>) -> Result<(u8, bool), MeasureError> {
        let params = *self.params(trigger.slot)?;
        let r = process_rdo(trigger, &adc, &params)?;
        self.current.set(params.target_bit, r.bit);
        self.capture.push(CaptureEntry {
            shot: self.shot,
            channel: trigger.channel,
            slot: trigger.slot,
            start_cycle: trigger.start_cycle,
            samples: adc,
        });
        Ok((params.target_bit, r.bit))
    }

    /// Closes the current shot and folds it into the statistics.
    pub fn end_shot(&mut self) -> ShotOutcome {
        let out = std::mem::take(&mut self.current);
        self.stats.accumulate(&out);
        self.shot += 1;
        out
    }
}
