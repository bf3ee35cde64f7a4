// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::ProgramError;
use crate::measure::ReadoutParams;
use crate::synth::{DspConfig, DspConfigError, EnvelopeLibrary};

/// External trigger line driving SYNC release.
///
/// `Edges` raises the line for exactly the listed cycles; adjacent cycles
/// merge into one high level and therefore one edge.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerSource {
    #[default]
    None,
    Edges(Vec<u64>),
    Periodic { period: u64, first: u64 },
}

impl TriggerSource {
    /// Line level at `cycle`.
    pub fn level(&self, cycle: u64) -> bool {
        match self {
            TriggerSource::None => false,
            TriggerSource::Edges(e) => e.binary_search(&cycle).is_ok(),
            TriggerSource::Periodic { period, first } => {
                cycle >= *first && (*period == 0 && cycle == *first || *period > 0 && (cycle - first).is_multiple_of(*period))
            }
        }
    }

    /// Whether a rising edge can still occur at or after `cycle`.
    pub fn has_edge_from(&self, cycle: u64) -> bool {
        match self {
            TriggerSource::None => false,
            TriggerSource::Edges(e) => e.last().is_some_and(|&l| l >= cycle),
            TriggerSource::Periodic { period, first } => *period > 1 || cycle <= *first,
        }
    }

    pub fn normalized(mut self) -> Self {
        if let TriggerSource::Edges(e) = &mut self {
            e.sort_unstable();
            e.dedup();
        }
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct ControllerConfig {
    pub readout_table: Vec<ReadoutParams>,
    pub envelopes: EnvelopeLibrary,
    pub dsp: DspConfig,
    pub trigger: TriggerSource,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("channel {channel} instruction {index}: readout slot {slot} is not in the readout table")]
    MissingReadoutSlot { channel: u8, index: usize, slot: u8 },
    #[error("channel {channel} instruction {index}: RDO window {duration} does not match slot {slot} window {window}")]
    WindowMismatch {
        channel: u8,
        index: usize,
        slot: u8,
        duration: u32,
        window: u32,
    },
    #[error("channel {channel} instruction {index}: envelope {id} is not loaded")]
    UnknownEnvelope { channel: u8, index: usize, id: u8 },
    #[error("channel {channel} instruction {index}: condition bit {bit} out of range")]
    ConditionBit { channel: u8, index: usize, bit: u8 },
    #[error("readout slot {slot}: {reason}")]
    ReadoutParams { slot: usize, reason: String },
    #[error(transparent)]
    Dsp(#[from] DspConfigError),
}
