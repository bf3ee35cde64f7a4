// SPDX-License-Identifier: Apache-2.0

//! Sample frames, trace events and trace sinks.
//!
//! Binary trace layout (little-endian):
//!
//! ```text
//! 0   4  magic "QCT1"
//! 4   2  version (1)
//! 6   2  channels per frame (22)
//! 8   4  metadata length M
//! 12  M  metadata, UTF-8 JSON
//! then per frame: cycle u64, then per channel 5 x (i16 I, i16 Q)
//! ```
//!
//! DC channels carry their level on I with Q = 0. The trace hash is SHA-256
//! over the frame records exactly as written to the binary trace.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::isa::NUM_CHANNELS;
use crate::measure::MuTrigger;
use crate::synth::{Iq, SAMPLES_PER_CYCLE};

pub const TRACE_MAGIC: [u8; 4] = *b"QCT1";
pub const TRACE_VERSION: u16 = 1;
/// Bytes per frame record.
pub const FRAME_BYTES: usize = 8 + NUM_CHANNELS * SAMPLES_PER_CYCLE * 4;

pub type DacSamples = [(i16, i16); SAMPLES_PER_CYCLE];

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChannelFrame {
    pub dac: DacSamples,
    /// Post-DSP, pre-quantization output.
    pub analog: [Iq; SAMPLES_PER_CYCLE],
    /// Frequency tuning word in effect during the cycle.
    pub ftw: u32,
}

/// One 5 ns cycle of output on every channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFrame {
    pub cycle: u64,
    pub channels: [ChannelFrame; NUM_CHANNELS],
}

impl Default for SampleFrame {
    fn default() -> Self {
        SampleFrame {
            cycle: 0,
            channels: [ChannelFrame::default(); NUM_CHANNELS],
        }
    }
}

impl SampleFrame {
    pub fn codes(&self) -> FrameCodes {
        FrameCodes {
            cycle: self.cycle,
            dac: std::array::from_fn(|c| self.channels[c].dac),
        }
    }
}

/// DAC codes of one frame; what the trace stores and hashes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameCodes {
    pub cycle: u64,
    pub dac: [DacSamples; NUM_CHANNELS],
}

impl FrameCodes {
    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.cycle.to_le_bytes());
        for ch in &self.dac {
            for (i, q) in ch {
                out.extend_from_slice(&i.to_le_bytes());
                out.extend_from_slice(&q.to_le_bytes());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    MuTrigger { cycle: u64, trigger: MuTrigger },
    SyncWait { cycle: u64, channel: u8 },
    SyncRelease { cycle: u64, channels: Vec<u8> },
    RegisterWrite { cycle: u64, bit: u8, value: bool },
    Halt { cycle: u64 },
}

pub trait TraceSink {
    fn frame(&mut self, frame: &SampleFrame);
    fn event(&mut self, _event: &TraceEvent) {}
}

/// Discards everything.
pub struct NullSink;

impl TraceSink for NullSink {
    fn frame(&mut self, _frame: &SampleFrame) {}
}

/// In-memory trace of DAC codes and events.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub frames: Vec<FrameCodes>,
    pub events: Vec<TraceEvent>,
}

impl TraceSink for ExecutionTrace {
    fn frame(&mut self, frame: &SampleFrame) {
        self.frames.push(frame.codes());
    }
    fn event(&mut self, event: &TraceEvent) {
        self.events.push(event.clone());
    }
}

impl ExecutionTrace {
    pub fn hash(&self) -> [u8; 32] {
        let mut h = TraceHasher::default();
        let mut buf = Vec::with_capacity(FRAME_BYTES);
        for f in &self.frames {
            buf.clear();
            f.write_bytes(&mut buf);
            h.update(&buf);
        }
        h.finish()
    }

    /// Sample stream of one channel.
    pub fn channel_samples(&self, channel: u8) -> Vec<(i16, i16)> {
        self.frames.iter().flat_map(|f| f.dac[channel as usize]).collect()
    }

    pub fn events_json(&self) -> serde_json::Value {
        serde_json::json!({"format": "qctl-events", "version": 1, "events": self.events})
    }
}

/// Streaming SHA-256 of frame records.
#[derive(Default)]
pub struct TraceHasher {
    sha: Sha256,
    frames: u64,
    buf: Vec<u8>,
}

impl TraceHasher {
    fn update(&mut self, bytes: &[u8]) {
        self.sha.update(bytes);
        self.frames += 1;
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn finish(self) -> [u8; 32] {
        self.sha.finalize().into()
    }
}

impl TraceSink for TraceHasher {
    fn frame(&mut self, frame: &SampleFrame) {
        let mut buf = std::mem::take(&mut self.buf);
        buf.clear();
        frame.codes().write_bytes(&mut buf);
        self.update(&buf);
        self.buf = buf;
    }
}

/// Writes the binary trace and collects events for the JSON sidecar.
pub struct BinaryTraceWriter<W: Write> {
    out: W,
    buf: Vec<u8>,
    pub events: Vec<TraceEvent>,
    error: Option<io::Error>,
}

impl<W: Write> BinaryTraceWriter<W> {
    pub fn new(mut out: W, metadata: &serde_json::Value) -> io::Result<Self> {
        let meta = serde_json::to_vec(metadata)?;
        let mut head = Vec::with_capacity(12 + meta.len());
        head.extend_from_slice(&TRACE_MAGIC);
        head.extend_from_slice(&TRACE_VERSION.to_le_bytes());
        head.extend_from_slice(&(NUM_CHANNELS as u16).to_le_bytes());
        head.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        head.extend_from_slice(&meta);
        out.write_all(&head)?;
        Ok(BinaryTraceWriter {
            out,
            buf: Vec::with_capacity(FRAME_BYTES),
            events: Vec::new(),
            error: None,
        })
    }

    /// Appends an already-recorded frame.
    pub fn write_codes(&mut self, codes: &FrameCodes) -> io::Result<()> {
        self.buf.clear();
        codes.write_bytes(&mut self.buf);
        self.out.write_all(&self.buf)
    }

    /// Flushes and reports the first write error, if any.
    pub fn finish(mut self) -> io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> TraceSink for BinaryTraceWriter<W> {
    fn frame(&mut self, frame: &SampleFrame) {
        if self.error.is_some() {
            return;
        }
        self.buf.clear();
        frame.codes().write_bytes(&mut self.buf);
        if let Err(e) = self.out.write_all(&self.buf) {
            self.error = Some(e);
        }
    }
    fn event(&mut self, event: &TraceEvent) {
        self.events.push(event.clone());
    }
}

/// Parsed binary trace.
pub fn read_binary_trace(bytes: &[u8]) -> Result<(serde_json::Value, Vec<FrameCodes>), String> {
    if bytes.len() < 12 || bytes[..4] != TRACE_MAGIC {
        return Err("bad magic".into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != TRACE_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let channels = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    if channels != NUM_CHANNELS {
        return Err(format!("unexpected channel count {channels}"));
    }
    let m = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let meta_end = 12 + m;
    let meta = serde_json::from_slice(bytes.get(12..meta_end).ok_or("truncated metadata")?).map_err(|e| e.to_string())?;
    let body = &bytes[meta_end..];
    if !body.len().is_multiple_of(FRAME_BYTES) {
        return Err("truncated frame".into());
    }
    let frames = body
        .chunks_exact(FRAME_BYTES)
        .map(|rec| {
            let cycle = u64::from_le_bytes(rec[..8].try_into().unwrap());
            let mut dac = [[(0i16, 0i16); SAMPLES_PER_CYCLE]; NUM_CHANNELS];
            for (c, ch) in dac.iter_mut().enumerate() {
                for (k, s) in ch.iter_mut().enumerate() {
                    let o = 8 + (c * SAMPLES_PER_CYCLE + k) * 4;
                    *s = (
                        i16::from_le_bytes([rec[o], rec[o + 1]]),
                        i16::from_le_bytes([rec[o + 2], rec[o + 3]]),
                    );
                }
            }
            FrameCodes { cycle, dac }
        })
        .collect();
    Ok((meta, frames))
}
