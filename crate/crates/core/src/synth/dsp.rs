// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Iq;
use crate::isa::NUM_CHANNELS;

pub const MAX_FIR_TAPS: usize = 64;
pub const MAX_SKEW_SAMPLES: u16 = 1023;

/// Quadrature modulation correction: `out = matrix * (i, q) + dc_offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QmcParams {
    pub matrix: [[f64; 2]; 2],
    pub dc_offset: [f64; 2],
}

impl Default for QmcParams {
    fn default() -> Self {
        QmcParams::IDENTITY
    }
}

impl QmcParams {
    pub const IDENTITY: QmcParams = QmcParams {
        matrix: [[1.0, 0.0], [0.0, 1.0]],
        dc_offset: [0.0, 0.0],
    };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// One sample, saturated to `[-1, 1]` on each rail.
    #[inline]
    pub fn apply(&self, x: Iq) -> Iq {
        let m = &self.matrix;
        let i = m[0][0] * x.re + m[0][1] * x.im + self.dc_offset[0];
        let q = m[1][0] * x.re + m[1][1] * x.im + self.dc_offset[1];
        Iq::new(i.clamp(-1.0, 1.0), q.clamp(-1.0, 1.0))
    }
}

/// Applies QMC to a block. Identity parameters return the block untouched.
pub fn apply_qmc(block: &[Iq], qmc: &QmcParams) -> Vec<Iq> {
    if qmc.is_identity() {
        return block.to_vec();
    }
    block.iter().map(|&x| qmc.apply(x)).collect()
}

/// Streaming FIR filter. The delay line persists across calls.
#[derive(Debug, Clone, PartialEq)]
pub struct Fir {
    taps: Vec<f64>,
    history: Vec<Iq>,
    head: usize,
    passthrough: bool,
}

impl Fir {
    pub fn new(taps: &[f64]) -> Result<Self, DspConfigError> {
        if taps.is_empty() || taps.len() > MAX_FIR_TAPS {
            return Err(DspConfigError::TapCount(taps.len()));
        }
        Ok(Fir {
            taps: taps.to_vec(),
            history: vec![Iq::new(0.0, 0.0); taps.len()],
            head: 0,
            passthrough: taps == [1.0],
        })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    #[inline]
    pub fn process(&mut self, x: Iq) -> Iq {
        if self.passthrough {
            return x;
        }
        let n = self.taps.len();
        self.head = if self.head == 0 { n - 1 } else { self.head - 1 };
        self.history[self.head] = x;
        // history[head + j] holds x[t - j].
        let mut acc = Iq::new(0.0, 0.0);
        let (newer, older) = self.history.split_at(self.head);
        for (h, s) in self.taps.iter().zip(older.iter().chain(newer.iter())) {
            acc += s * *h;
        }
        acc
    }

    pub fn process_block(&mut self, block: &[Iq]) -> Vec<Iq> {
        block.iter().map(|&x| self.process(x)).collect()
    }

    pub fn reset(&mut self) {
        self.history.fill(Iq::new(0.0, 0.0));
        self.head = 0;
    }
}

/// Integer-sample delay line, zero-filled at start.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewLine {
    buf: Vec<Iq>,
    pos: usize,
}

impl SkewLine {
    pub fn new(delay_samples: u16) -> Result<Self, DspConfigError> {
        if delay_samples > MAX_SKEW_SAMPLES {
            return Err(DspConfigError::Skew(delay_samples));
        }
        Ok(SkewLine {
            buf: vec![Iq::new(0.0, 0.0); delay_samples as usize],
            pos: 0,
        })
    }

    pub fn delay(&self) -> usize {
        self.buf.len()
    }

    #[inline]
    pub fn process(&mut self, x: Iq) -> Iq {
        if self.buf.is_empty() {
            return x;
        }
        let y = std::mem::replace(&mut self.buf[self.pos], x);
        self.pos = (self.pos + 1) % self.buf.len();
        y
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathKind {
    #[default]
    Rf,
    Dc,
}

#[derive(Debug, Error)]
pub enum DspConfigError {
    #[error("FIR must have 1..={MAX_FIR_TAPS} taps, got {0}")]
    TapCount(usize),
    #[error("skew delay {0} exceeds {MAX_SKEW_SAMPLES} samples")]
    Skew(u16),
    #[error("channel {0} out of range")]
    Channel(u8),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("dsp config: {0}")]
    Json(#[from] serde_json::Error),
}

fn unit_taps() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDspConfig {
    #[serde(default)]
    pub qmc: QmcParams,
    #[serde(default = "unit_taps")]
    pub fir_taps: Vec<f64>,
    #[serde(default)]
    pub skew_delay_samples: u16,
    #[serde(default)]
    pub path_kind: PathKind,
    /// DC path edge length in cycles.
    #[serde(default)]
    pub dc_ramp_cycles: u32,
}

impl Default for ChannelDspConfig {
    fn default() -> Self {
        ChannelDspConfig {
            qmc: QmcParams::IDENTITY,
            fir_taps: unit_taps(),
            skew_delay_samples: 0,
            path_kind: PathKind::Rf,
            dc_ramp_cycles: 0,
        }
    }
}

impl ChannelDspConfig {
    pub fn dc(ramp_cycles: u32) -> Self {
        ChannelDspConfig {
            path_kind: PathKind::Dc,
            dc_ramp_cycles: ramp_cycles,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), DspConfigError> {
        Fir::new(&self.fir_taps)?;
        SkewLine::new(self.skew_delay_samples)?;
        Ok(())
    }

    /// Raw DDS output through QMC, FIR and skew.
    pub fn is_passthrough(&self) -> bool {
        self.qmc.is_identity() && self.fir_taps == [1.0] && self.skew_delay_samples == 0
    }
}

/// Per-channel DSP settings; channels not listed use the default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DspConfig {
    #[serde(default)]
    pub channels: BTreeMap<u8, ChannelDspConfig>,
}

impl DspConfig {
    pub fn channel(&self, ch: u8) -> ChannelDspConfig {
        self.channels.get(&ch).cloned().unwrap_or_default()
    }

    pub fn set(&mut self, ch: u8, cfg: ChannelDspConfig) {
        self.channels.insert(ch, cfg);
    }

    pub fn validate(&self) -> Result<(), DspConfigError> {
        for (&ch, cfg) in &self.channels {
            if ch as usize >= NUM_CHANNELS {
                return Err(DspConfigError::Channel(ch));
            }
            cfg.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, DspConfigError> {
        let cfg: DspConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, DspConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
