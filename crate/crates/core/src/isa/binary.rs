// SPDX-License-Identifier: Apache-2.0

//! Binary program image.
//!
//! Little-endian throughout:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "QCP1"
//! 4       2     format version (1)
//! 6       2     channel count N
//! 8       4     total instruction words
//! 12      4     reserved (0)
//! 16      8*N   channel table: channel u16, reserved u16, word count u32
//! ...     8*W   instruction words, channel by channel in table order
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{decode, encode, DecodeError, FieldRangeError, Program, ProgramError};

pub const PROGRAM_MAGIC: [u8; 4] = *b"QCP1";
pub const PROGRAM_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ProgramFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a program image (bad magic)")]
    BadMagic,
    #[error("unsupported program format version {0}")]
    UnsupportedVersion(u16),
    #[error("corrupt program image: {0}")]
    Corrupt(String),
    #[error("word {index} of channel {channel}: {source}")]
    Decode {
        channel: u16,
        index: usize,
        source: DecodeError,
    },
    #[error(transparent)]
    Encode(#[from] FieldRangeError),
    #[error(transparent)]
    Program(#[from] ProgramError),
}

/// Serializes a program. Fails if any instruction is not encodable.
pub fn write_program<W: Write>(program: &Program, mut out: W) -> Result<(), ProgramFileError> {
    let mut words_by_channel = Vec::new();
    for (c, seq) in program.channels() {
        let words = seq.iter().map(encode).collect::<Result<Vec<u64>, _>>()?;
        words_by_channel.push((c, words));
    }
    let total: usize = words_by_channel.iter().map(|(_, w)| w.len()).sum();
    let mut buf = Vec::with_capacity(16 + 8 * words_by_channel.len() + 8 * total);
    buf.extend_from_slice(&PROGRAM_MAGIC);
    buf.extend_from_slice(&PROGRAM_VERSION.to_le_bytes());
    buf.extend_from_slice(&(words_by_channel.len() as u16).to_le_bytes());
    buf.extend_from_slice(&(total as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for (c, words) in &words_by_channel {
        buf.extend_from_slice(&(*c as u16).to_le_bytes());
        buf.extend_from_slice(&0u16.to_le_bytes());
        buf.extend_from_slice(&(words.len() as u32).to_le_bytes());
    }
    for (_, words) in &words_by_channel {
        for w in words {
            buf.extend_from_slice(&w.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Parses a program image.
pub fn read_program<R: Read>(mut input: R) -> Result<Program, ProgramFileError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || bytes[..4] != PROGRAM_MAGIC {
        return Err(ProgramFileError::BadMagic);
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u16_at(4);
    if version != PROGRAM_VERSION {
        return Err(ProgramFileError::UnsupportedVersion(version));
    }
    let n_channels = u16_at(6) as usize;
    let total = u32_at(8) as usize;
    let table_end = 16 + 8 * n_channels;
    if bytes.len() != table_end + 8 * total {
        return Err(ProgramFileError::Corrupt(format!(
            "expected {} bytes, found {}",
            table_end + 8 * total,
            bytes.len()
        )));
    }
    let mut program = Program::new();
    let mut cursor = table_end;
    let mut counted = 0usize;
    for entry in 0..n_channels {
        let o = 16 + 8 * entry;
        let channel = u16_at(o);
        let count = u32_at(o + 4) as usize;
        counted += count;
        if counted > total {
            return Err(ProgramFileError::Corrupt("channel table exceeds word count".into()));
        }
        let mut seq = Vec::with_capacity(count);
        for index in 0..count {
            let word = u64::from_le_bytes(bytes[cursor..cursor + 8].try_into().unwrap());
            cursor += 8;
            let instr = decode(word).map_err(|source| ProgramFileError::Decode { channel, index, source })?;
            seq.push(instr);
        }
        let ch = u8::try_from(channel).map_err(|_| ProgramFileError::Corrupt(format!("channel {channel}")))?;
        if !program.channel(ch).is_empty() {
            return Err(ProgramFileError::Corrupt(format!("channel {channel} listed twice")));
        }
        program.set_channel(ch, seq)?;
    }
    if counted != total {
        return Err(ProgramFileError::Corrupt("channel table does not cover all words".into()));
    }
    Ok(program)
}
