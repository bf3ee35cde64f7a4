// SPDX-License-Identifier: Apache-2.0

//! Raw ADC capture ring and its binary export.
//!
//! ```text
//! header (32 bytes, little-endian)
//!   0   4  magic "QRC1"
//!   4   2  version (1)
//!   6   2  reserved
//!   8   8  entry count
//!   16  4  window samples of the first entry (0 if empty)
//!   20  4  reserved
//!   24  8  sample rate, f64 Hz
//! entry
//!   shot u64, start_cycle u64, channel u8, slot u8, reserved u16,
//!   sample count u32, samples i16 * count
//! ```

use std::collections::VecDeque;
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::synth::SAMPLE_RATE_HZ;

pub const CAPTURE_MAGIC: [u8; 4] = *b"QRC1";
const CAPTURE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureEntry {
    pub shot: u64,
    pub channel: u8,
    pub slot: u8,
    pub start_cycle: u64,
    pub samples: Vec<i16>,
}

#[derive(Debug, Error)]
pub enum CaptureFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a capture file (bad magic)")]
    BadMagic,
    #[error("unsupported capture version {0}")]
    Version(u16),
    #[error("truncated capture file")]
    Truncated,
}

/// Fixed-capacity ring; the oldest entry is evicted when full.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCapture {
    capacity: usize,
    entries: VecDeque<CaptureEntry>,
}

impl RawCapture {
    pub fn new(capacity: usize) -> Self {
        RawCapture {
            capacity,
            entries: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, entry: CaptureEntry) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &CaptureEntry> {
        self.entries.iter()
    }

    pub fn export<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&CAPTURE_MAGIC);
        buf.extend_from_slice(&CAPTURE_VERSION.to_le_bytes());
        buf.extend_from_slice(&0u16.to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        let window = self.entries.front().map_or(0, |e| e.samples.len() as u32);
        buf.extend_from_slice(&window.to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&SAMPLE_RATE_HZ.to_le_bytes());
        for e in &self.entries {
            buf.extend_from_slice(&e.shot.to_le_bytes());
            buf.extend_from_slice(&e.start_cycle.to_le_bytes());
            buf.push(e.channel);
            buf.push(e.slot);
            buf.extend_from_slice(&0u16.to_le_bytes());
            buf.extend_from_slice(&(e.samples.len() as u32).to_le_bytes());
            for s in &e.samples {
                buf.extend_from_slice(&s.to_le_bytes());
            }
        }
        out.write_all(&buf)
    }

    /// Reads an export back. Capacity is set to the entry count.
    pub fn import<R: Read>(mut input: R) -> Result<Self, CaptureFileError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() < 32 || bytes[..4] != CAPTURE_MAGIC {
            return Err(CaptureFileError::BadMagic);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CAPTURE_VERSION {
            return Err(CaptureFileError::Version(version));
        }
        let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let mut cur = 32usize;
        let mut take = |n: usize| -> Result<&[u8], CaptureFileError> {
            let s = bytes.get(cur..cur + n).ok_or(CaptureFileError::Truncated)?;
            cur += n;
            Ok(s)
        };
        let mut entries = VecDeque::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let shot = u64::from_le_bytes(take(8)?.try_into().unwrap());
            let start_cycle = u64::from_le_bytes(take(8)?.try_into().unwrap());
            let head = take(8)?;
            let (channel, slot) = (head[0], head[1]);
            let n = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
            let samples = take(2 * n)?
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]))
                .collect();
            entries.push_back(CaptureEntry {
                shot,
                channel,
                slot,
                start_cycle,
                samples,
            });
        }
        if cur != bytes.len() {
            return Err(CaptureFileError::Truncated);
        }
        Ok(RawCapture {
            capacity: count,
            entries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(shot: u64) -> CaptureEntry {
        CaptureEntry {
            shot,
            channel: 2,
            slot: 1,
            start_cycle: 10 * shot,
            samples: vec![shot as i16, -7, 32767, -32768],
        }
    }

    #[test]
    fn ring_keeps_latest() {
        let mut c = RawCapture::new(2);
        for s in 1..=3 {
            c.push(entry(s));
        }
        let shots: Vec<u64> = c.entries().map(|e| e.shot).collect();
        assert_eq!(shots, vec![2, 3]);
    }

    #[test]
    fn export_roundtrip() {
        let mut c = RawCapture::new(5);
        c.push(entry(0));
        c.push(entry(1));
        let mut buf = Vec::new();
        c.export(&mut buf).unwrap();
        let back = RawCapture::import(&buf[..]).unwrap();
        assert_eq!(back.entries().cloned().collect::<Vec<_>>(), c.entries().cloned().collect::<Vec<_>>());
        buf.pop();
        assert!(matches!(RawCapture::import(&buf[..]), Err(CaptureFileError::Truncated)));
    }

    #[test]
    fn empty_export_is_header_only() {
        let mut buf = Vec::new();
        RawCapture::new(3).export(&mut buf).unwrap();
        assert_eq!(buf.len(), 32);
        assert!(RawCapture::import(&buf[..]).unwrap().is_empty());
    }
}
