// SPDX-License-Identifier: Apache-2.0

//! 64-bit instruction word.
//!
//! ```text
//!  bits   field
//!  0..3   opcode
//!  3..8   channel
//!  8      condition enable
//!  9      condition required level
//!  10..14 condition register bit (0..15)
//!  14     active flag
//!  15..23 envelope id (pulse opcodes) / readout slot (RDO)
//!  23..64 payload, per opcode:
//!         STA   amplitude[16]            duration code[25]
//!         STP   phase[16]                duration code[25]
//!         STAP  amplitude[16] phase[16]  duration[9]
//!         STF   ftw[32]                  duration[9]
//!         WAIT  duration[32]
//!         RDO   window[32]
//!         SYNC  (zero)
//! ```
//!
//! The 25-bit duration code is a 21-bit mantissa (low bits) and a 4-bit left
//! shift; the canonical code uses the smallest shift. The all-zero word
//! decodes to an `STA` with a zero duration and is rejected.
//!
//! Decoding is strict: any word that is not the encoding of a canonical
//! instruction (reserved bits set, non-minimal duration code, unused field
//! non-zero) is a [`DecodeError`], so `encode` is a bijection between
//! canonical instructions and accepted words.

use thiserror::Error;

use super::{Condition, FieldRangeError, Instruction, Opcode, MAX_ENCODED_CONDITION_BIT, NUM_CHANNELS};

/// Longest duration of `STAP` / `STF`.
pub const SHORT_DURATION_MAX: u32 = (1 << 9) - 1;
/// Every duration up to this value is exactly representable by `STA` / `STP`.
pub const MID_DURATION_MAX: u32 = (1 << 21) - 1;
/// Longest `WAIT` / `RDO` duration.
pub const LONG_DURATION_MAX: u32 = u32::MAX;

const MANTISSA_BITS: u32 = 21;
const SHIFT_BITS: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unknown opcode bits {0:#05b}")]
    UnknownOpcode(u8),
    #[error("channel {0} does not exist")]
    InvalidChannel(u8),
    #[error("zero duration")]
    ZeroDuration,
    #[error("word {0:#018x} is not a canonical encoding")]
    NonCanonical(u64),
}

#[derive(Clone, Copy)]
enum DurationField {
    None,
    Short,
    Mid,
    Long,
}

fn duration_field(op: Opcode) -> DurationField {
    match op {
        Opcode::Sta | Opcode::Stp => DurationField::Mid,
        Opcode::Stap | Opcode::Stf => DurationField::Short,
        Opcode::Wait | Opcode::Rdo => DurationField::Long,
        Opcode::Sync => DurationField::None,
    }
}

fn encode_mid(d: u32) -> Option<u64> {
    if d == 0 {
        return None;
    }
    let shift = d.trailing_zeros().min((1 << SHIFT_BITS) - 1);
    // Smallest shift that brings the mantissa under 2^21.
    let needed = (32 - d.leading_zeros()).saturating_sub(MANTISSA_BITS);
    if needed > shift {
        return None;
    }
    let mantissa = (d >> needed) as u64;
    Some(mantissa | ((needed as u64) << MANTISSA_BITS))
}

fn decode_mid(code: u64) -> Option<u32> {
    let mantissa = code & ((1 << MANTISSA_BITS) - 1);
    let shift = (code >> MANTISSA_BITS) & ((1 << SHIFT_BITS) - 1);
    let d = mantissa.checked_shl(shift as u32)?;
    u32::try_from(d).ok()
}

/// Whether `duration` fits the duration field of `op`.
pub fn duration_encodable(op: Opcode, duration: u32) -> bool {
    if duration == 0 {
        return false;
    }
    match duration_field(op) {
        DurationField::None => duration == 1,
        DurationField::Short => duration <= SHORT_DURATION_MAX,
        DurationField::Mid => encode_mid(duration).is_some(),
        DurationField::Long => true,
    }
}

/// Encodes an instruction after canonicalizing it.
pub fn encode(instr: &Instruction) -> Result<u64, FieldRangeError> {
    let i = instr.canonicalize();
    if i.channel as usize >= NUM_CHANNELS {
        return Err(FieldRangeError::new("channel", i.channel, "0..=21"));
    }
    if i.condition.enabled && i.condition.register_bit > MAX_ENCODED_CONDITION_BIT {
        return Err(FieldRangeError::new(
            "condition bit",
            i.condition.register_bit,
            "0..=15",
        ));
    }
    let mut w = i.opcode as u64;
    w |= (i.channel as u64) << 3;
    w |= (i.condition.enabled as u64) << 8;
    w |= (i.condition.required_level as u64) << 9;
    w |= ((i.condition.register_bit as u64) & 0xf) << 10;
    w |= (i.active as u64) << 14;
    let slot = if i.opcode == Opcode::Rdo { i.readout_slot } else { i.envelope_id };
    w |= (slot as u64) << 15;

    let amp = i.amplitude_word as u16 as u64;
    let phase = i.phase_word as u64;
    let d = i.duration_cycles;
    let range_err = |range| FieldRangeError::new("duration", d, range);
    match i.opcode {
        Opcode::Sta | Opcode::Stp => {
            let code = encode_mid(d).ok_or_else(|| range_err("mantissa[21] << shift[4]"))?;
            let param = if i.opcode == Opcode::Sta { amp } else { phase };
            w |= param << 23;
            w |= code << 39;
        }
        Opcode::Stap => {
            if d == 0 || d > SHORT_DURATION_MAX {
                return Err(range_err("1..=511"));
            }
            w |= amp << 23;
            w |= phase << 39;
            w |= (d as u64) << 55;
        }
        Opcode::Stf => {
            if d == 0 || d > SHORT_DURATION_MAX {
                return Err(range_err("1..=511"));
            }
            w |= (i.ftw as u64) << 23;
            w |= (d as u64) << 55;
        }
        Opcode::Wait | Opcode::Rdo => {
            if d == 0 {
                return Err(range_err("1..=2^32-1"));
            }
            w |= (d as u64) << 23;
        }
        Opcode::Sync => {}
    }
    Ok(w)
}

/// Decodes a word produced by [`encode`].
pub fn decode(word: u64) -> Result<Instruction, DecodeError> {
    let op_bits = (word & 0x7) as u8;
    let opcode = Opcode::from_bits(op_bits).ok_or(DecodeError::UnknownOpcode(op_bits))?;
    let channel = ((word >> 3) & 0x1f) as u8;
    if channel as usize >= NUM_CHANNELS {
        return Err(DecodeError::InvalidChannel(channel));
    }
    let condition = Condition {
        enabled: (word >> 8) & 1 == 1,
        required_level: (word >> 9) & 1 == 1,
        register_bit: ((word >> 10) & 0xf) as u8,
    };
    let active = (word >> 14) & 1 == 1;
    let slot = ((word >> 15) & 0xff) as u8;
    let payload = word >> 23;

    let field16 = |shift: u32| ((payload >> shift) & 0xffff) as u16;
    let mut instr = Instruction {
        opcode,
        channel,
        duration_cycles: 1,
        amplitude_word: 0,
        ftw: 0,
        phase_word: 0,
        envelope_id: if opcode == Opcode::Rdo { 0 } else { slot },
        active,
        condition,
        readout_slot: if opcode == Opcode::Rdo { slot } else { 0 },
    };
    match opcode {
        Opcode::Sta | Opcode::Stp => {
            if opcode == Opcode::Sta {
                instr.amplitude_word = field16(0) as i16;
            } else {
                instr.phase_word = field16(0);
            }
            instr.duration_cycles = decode_mid(payload >> 16).ok_or(DecodeError::NonCanonical(word))?;
        }
        Opcode::Stap => {
            instr.amplitude_word = field16(0) as i16;
            instr.phase_word = field16(16);
            instr.duration_cycles = (payload >> 32) as u32;
        }
        Opcode::Stf => {
            instr.ftw = (payload & 0xffff_ffff) as u32;
            instr.duration_cycles = (payload >> 32) as u32;
        }
        Opcode::Wait | Opcode::Rdo => {
            instr.duration_cycles = (payload & 0xffff_ffff) as u32;
        }
        Opcode::Sync => {}
    }
    if instr.duration_cycles == 0 {
        return Err(DecodeError::ZeroDuration);
    }
    // Strictness: the word must be exactly the encoding of what we decoded.
    match encode(&instr) {
        Ok(w) if w == word && instr.is_canonical() => Ok(instr),
        _ => Err(DecodeError::NonCanonical(word)),
    }
}
