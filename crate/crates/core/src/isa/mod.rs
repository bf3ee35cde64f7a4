// SPDX-License-Identifier: Apache-2.0

//! Instruction set of the controller.
//!
//! Seven opcodes in three groups: pulse synthesis (`STA`, `STF`, `STP`,
//! `STAP`), time control (`WAIT`, `SYNC`) and readout (`RDO`). Every
//! instruction targets one channel and occupies a whole number of 5 ns
//! cycles. Instructions are stored in a flat [`Instruction`] record; fields
//! an opcode does not use are zero once [`Instruction::canonicalize`] has
//! been applied, which is also the form produced by [`decode`].

mod asm;
mod binary;
mod encoding;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use asm::{assemble, disassemble, AsmError, AsmErrorKind};
pub use binary::{read_program, write_program, ProgramFileError, PROGRAM_MAGIC, PROGRAM_VERSION};
pub use encoding::{
    decode, duration_encodable, encode, DecodeError, LONG_DURATION_MAX, MID_DURATION_MAX, SHORT_DURATION_MAX,
};

/// Number of execution cores (and DAC channels) in one controller.
pub const NUM_CHANNELS: usize = 22;

/// Highest measurement-register bit addressable by an encoded condition.
pub const MAX_ENCODED_CONDITION_BIT: u8 = 15;

/// Opcode of an instruction. The discriminant is the 3-bit encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Opcode {
    /// Set amplitude.
    Sta = 0,
    /// Set frequency.
    Stf = 1,
    /// Set phase.
    Stp = 2,
    /// Set amplitude and phase.
    Stap = 3,
    /// Idle (gate off) or hold the current parameters (gate on).
    Wait = 4,
    /// Block until the external trigger line rises.
    Sync = 5,
    /// Trigger the measurement unit.
    Rdo = 6,
}

impl Opcode {
    pub const ALL: [Opcode; 7] = [
        Opcode::Sta,
        Opcode::Stf,
        Opcode::Stp,
        Opcode::Stap,
        Opcode::Wait,
        Opcode::Sync,
        Opcode::Rdo,
    ];

    pub fn from_bits(bits: u8) -> Option<Opcode> {
        Opcode::ALL.get(bits as usize).copied()
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Sta => "STA",
            Opcode::Stf => "STF",
            Opcode::Stp => "STP",
            Opcode::Stap => "STAP",
            Opcode::Wait => "WAIT",
            Opcode::Sync => "SYNC",
            Opcode::Rdo => "RDO",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Opcode::ALL
            .into_iter()
            .find(|op| op.mnemonic().eq_ignore_ascii_case(s))
    }

    /// Pulse-synthesis opcodes carry an envelope id and may emit a pulse.
    pub fn is_pulse(self) -> bool {
        matches!(self, Opcode::Sta | Opcode::Stf | Opcode::Stp | Opcode::Stap)
    }

    pub fn uses_amplitude(self) -> bool {
        matches!(self, Opcode::Sta | Opcode::Stap)
    }

    pub fn uses_phase(self) -> bool {
        matches!(self, Opcode::Stp | Opcode::Stap)
    }

    pub fn uses_ftw(self) -> bool {
        self == Opcode::Stf
    }

    /// Whether the active flag is meaningful (pulse opcodes and WAIT).
    pub fn uses_active(self) -> bool {
        self.is_pulse() || self == Opcode::Wait
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// Execution condition on one bit of the measurement register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Condition {
    pub enabled: bool,
    pub register_bit: u8,
    /// Level the bit must have for the instruction to execute.
    pub required_level: bool,
}

impl Condition {
    pub const ALWAYS: Condition = Condition {
        enabled: false,
        register_bit: 0,
        required_level: false,
    };

    pub fn on_bit(register_bit: u8, required_level: bool) -> Self {
        Condition {
            enabled: true,
            register_bit,
            required_level,
        }
    }

    pub fn canonicalize(self) -> Self {
        if self.enabled {
            self
        } else {
            Condition::ALWAYS
        }
    }

    /// Evaluates the condition against a register value.
    pub fn is_met(&self, register: u32) -> bool {
        if !self.enabled {
            return true;
        }
        let bit = (register >> (self.register_bit & 31)) & 1 == 1;
        bit == self.required_level
    }
}

/// One decoded instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub opcode: Opcode,
    pub channel: u8,
    /// Duration in 5 ns cycles; for `RDO` the measurement window.
    pub duration_cycles: u32,
    /// Signed fraction of full scale, `-32768` is -1.0.
    pub amplitude_word: i16,
    /// Frequency tuning word, `f = ftw * fs / 2^32`.
    pub ftw: u32,
    /// Phase offset, `phase = phase_word * 2pi / 2^16`.
    pub phase_word: u16,
    pub envelope_id: u8,
    /// Emit a pulse (true) or only latch the parameters (false).
    pub active: bool,
    pub condition: Condition,
    /// Readout-parameter table index (`RDO` only).
    pub readout_slot: u8,
}

impl Instruction {
    fn blank(opcode: Opcode, channel: u8, duration_cycles: u32) -> Self {
        Instruction {
            opcode,
            channel,
            duration_cycles,
            amplitude_word: 0,
            ftw: 0,
            phase_word: 0,
            envelope_id: 0,
            active: false,
            condition: Condition::ALWAYS,
            readout_slot: 0,
        }
    }

    pub fn sta(channel: u8, amplitude_word: i16, duration_cycles: u32) -> Self {
        Instruction {
            amplitude_word,
            ..Self::blank(Opcode::Sta, channel, duration_cycles)
        }
    }

    pub fn stf(channel: u8, ftw: u32, duration_cycles: u32) -> Self {
        Instruction {
            ftw,
            ..Self::blank(Opcode::Stf, channel, duration_cycles)
        }
    }

    pub fn stp(channel: u8, phase_word: u16, duration_cycles: u32) -> Self {
        Instruction {
            phase_word,
            ..Self::blank(Opcode::Stp, channel, duration_cycles)
        }
    }

    pub fn stap(channel: u8, amplitude_word: i16, phase_word: u16, duration_cycles: u32) -> Self {
        Instruction {
            amplitude_word,
            phase_word,
            ..Self::blank(Opcode::Stap, channel, duration_cycles)
        }
    }

    pub fn wait(channel: u8, duration_cycles: u32) -> Self {
        Self::blank(Opcode::Wait, channel, duration_cycles)
    }

    pub fn sync(channel: u8) -> Self {
        Self::blank(Opcode::Sync, channel, 1)
    }

    pub fn rdo(channel: u8, readout_slot: u8, window_cycles: u32) -> Self {
        Instruction {
            readout_slot,
            ..Self::blank(Opcode::Rdo, channel, window_cycles)
        }
    }

    pub fn on(mut self) -> Self {
        self.active = true;
        self
    }

    pub fn with_active(mut self, active: bool) -> Self {
        self.active = active;
        self
    }

    pub fn with_envelope(mut self, envelope_id: u8) -> Self {
        self.envelope_id = envelope_id;
        self
    }

    pub fn with_condition(mut self, condition: Condition) -> Self {
        self.condition = condition;
        self
    }

    /// Zeroes every field the opcode does not use.
    pub fn canonicalize(self) -> Self {
        let op = self.opcode;
        Instruction {
            opcode: op,
            channel: self.channel,
            duration_cycles: if op == Opcode::Sync { 1 } else { self.duration_cycles },
            amplitude_word: if op.uses_amplitude() { self.amplitude_word } else { 0 },
            ftw: if op.uses_ftw() { self.ftw } else { 0 },
            phase_word: if op.uses_phase() { self.phase_word } else { 0 },
            envelope_id: if op.is_pulse() { self.envelope_id } else { 0 },
            active: op.uses_active() && self.active,
            condition: self.condition.canonicalize(),
            readout_slot: if op == Opcode::Rdo { self.readout_slot } else { 0 },
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.canonicalize() == *self
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude_word as f64 / 32768.0
    }

    pub fn frequency_hz(&self) -> f64 {
        ftw_to_hz(self.ftw)
    }
}

/// Field value outside the range its encoding can hold.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("field `{field}` value {value} is outside {range}")]
pub struct FieldRangeError {
    pub field: &'static str,
    pub value: String,
    pub range: &'static str,
}

impl FieldRangeError {
    pub(crate) fn new(field: &'static str, value: impl fmt::Display, range: &'static str) -> Self {
        FieldRangeError {
            field,
            value: value.to_string(),
            range,
        }
    }
}

/// Converts a full-scale fraction to an amplitude word.
///
/// The conversion rounds to the nearest word; values that round outside
/// `[-32768, 32767]` are rejected rather than clipped.
pub fn amplitude_word(fraction: f64) -> Result<i16, FieldRangeError> {
    let scaled = (fraction * 32768.0).round_ties_even();
    if !scaled.is_finite() || !(-32768.0..=32767.0).contains(&scaled) {
        return Err(FieldRangeError::new(
            "amplitude",
            fraction,
            "[-1.0, 1.0 - 2^-15]",
        ));
    }
    Ok(scaled as i16)
}

/// Frequency tuning word for `hz` at the controller sample rate.
///
/// Negative frequencies wrap modulo 2^32.
pub fn ftw_from_hz(hz: f64) -> Result<u32, FieldRangeError> {
    let fs = crate::synth::SAMPLE_RATE_HZ;
    if !hz.is_finite() || hz.abs() >= fs {
        return Err(FieldRangeError::new("frequency", hz, "(-fs, fs)"));
    }
    let word = (hz / fs * 4294967296.0).round_ties_even() as i64;
    Ok(word.rem_euclid(1 << 32) as u32)
}

pub fn ftw_to_hz(ftw: u32) -> f64 {
    ftw as f64 * crate::synth::SAMPLE_RATE_HZ / 4294967296.0
}

/// Phase word for an angle in radians, wrapped to one turn.
pub fn phase_word_from_radians(rad: f64) -> u16 {
    let turns = rad / std::f64::consts::TAU;
    let word = (turns * 65536.0).round_ties_even() as i64;
    word.rem_euclid(1 << 16) as u16
}

pub fn phase_word_to_radians(word: u16) -> f64 {
    word as f64 * std::f64::consts::TAU / 65536.0
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgramError {
    #[error("channel {0} is outside 0..{NUM_CHANNELS}")]
    ChannelOutOfRange(u8),
    #[error("instruction {index} on channel {owner} names channel {named}")]
    ChannelMismatch { owner: u8, index: usize, named: u8 },
    #[error("instruction {index} on channel {channel} has zero duration")]
    ZeroDuration { channel: u8, index: usize },
}

/// Per-channel instruction streams.
///
/// Channels without instructions are absent; an empty sequence is never
/// stored, so structural equality does not depend on how a program was
/// built.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Program {
    channels: BTreeMap<u8, Vec<Instruction>>,
}

impl Program {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a program from a flat list, routing each instruction to the
    /// channel it names.
    pub fn from_instructions(instrs: impl IntoIterator<Item = Instruction>) -> Result<Self, ProgramError> {
        let mut p = Program::new();
        for i in instrs {
            p.push(i)?;
        }
        Ok(p)
    }

    pub fn push(&mut self, instr: Instruction) -> Result<(), ProgramError> {
        if instr.channel as usize >= NUM_CHANNELS {
            return Err(ProgramError::ChannelOutOfRange(instr.channel));
        }
        if instr.duration_cycles == 0 {
            return Err(ProgramError::ZeroDuration {
                channel: instr.channel,
                index: self.channel(instr.channel).len(),
            });
        }
        self.channels.entry(instr.channel).or_default().push(instr);
        Ok(())
    }

    /// Replaces the sequence of one channel.
    pub fn set_channel(&mut self, channel: u8, seq: Vec<Instruction>) -> Result<(), ProgramError> {
        if channel as usize >= NUM_CHANNELS {
            return Err(ProgramError::ChannelOutOfRange(channel));
        }
        for (index, i) in seq.iter().enumerate() {
            if i.channel != channel {
                return Err(ProgramError::ChannelMismatch {
                    owner: channel,
                    index,
                    named: i.channel,
                });
            }
            if i.duration_cycles == 0 {
                return Err(ProgramError::ZeroDuration { channel, index });
            }
        }
        if seq.is_empty() {
            self.channels.remove(&channel);
        } else {
            self.channels.insert(channel, seq);
        }
        Ok(())
    }

    pub fn channel(&self, channel: u8) -> &[Instruction] {
        self.channels.get(&channel).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn channels(&self) -> impl Iterator<Item = (u8, &[Instruction])> {
        self.channels.iter().map(|(c, s)| (*c, s.as_slice()))
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn instruction_count(&self) -> usize {
        self.channels.values().map(Vec::len).sum()
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.channels.values().flatten()
    }

    pub fn canonicalize(&self) -> Program {
        Program {
            channels: self
                .channels
                .iter()
                .map(|(c, s)| (*c, s.iter().map(|i| i.canonicalize()).collect()))
                .collect(),
        }
    }

    pub fn has_conditionals(&self) -> bool {
        self.instructions().any(|i| i.condition.enabled)
    }

    /// Splits the program into sub-programs keyed by a channel partition.
    ///
    /// `owner` maps a channel to its group; channels in the same group end
    /// up in the same sub-program.
    pub fn partition(&self, groups: usize, owner: impl Fn(u8) -> usize) -> Vec<Program> {
        let mut out = vec![Program::new(); groups];
        for (c, seq) in &self.channels {
            out[owner(*c)].channels.insert(*c, seq.clone());
        }
        out
    }

    /// Checks channel ownership and durations of every sequence.
    pub fn validate(&self) -> Result<(), ProgramError> {
        for (c, seq) in &self.channels {
            if *c as usize >= NUM_CHANNELS {
                return Err(ProgramError::ChannelOutOfRange(*c));
            }
            for (index, i) in seq.iter().enumerate() {
                if i.channel != *c {
                    return Err(ProgramError::ChannelMismatch {
                        owner: *c,
                        index,
                        named: i.channel,
                    });
                }
                if i.duration_cycles == 0 {
                    return Err(ProgramError::ZeroDuration { channel: *c, index });
                }
            }
        }
        Ok(())
    }
}
