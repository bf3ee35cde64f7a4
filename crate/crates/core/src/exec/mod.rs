// SPDX-License-Identifier: Apache-2.0

//! Lock-step execution cores.
//!
//! Every channel advances exactly one 5 ns cycle per [`Controller::step`].
//! A channel fetches its next instruction on the cycle after the previous
//! one ends, so consecutive instructions abut with no idle samples.
//!
//! Timing rules:
//! - a conditional instruction whose condition fails occupies its full
//!   duration with zero output and latches nothing;
//! - SYNC blocks until a rising edge of the trigger line; an edge at cycle
//!   `k` releases every blocked channel and the next instruction starts at
//!   `k + 1`;
//! - RDO keeps its channel silent for the window and notifies the
//!   measurement unit on the first window cycle; the register bit is written
//!   at the end of the last window cycle.

mod config;
mod run;
mod trace;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::isa::{Instruction, Opcode, Program, NUM_CHANNELS};
use crate::measure::MuTrigger;
use crate::synth::{quantize, DcGenerator, Envelope, Fir, Iq, Nco, PathKind, QmcParams, SkewLine, SAMPLES_PER_CYCLE};

pub use config::{ConfigError, ControllerConfig, TriggerSource};
pub(crate) use run::synth_adc;
pub use run::{run_until_halt, ConstantStimulus, DeadlockError, ReadoutSource, RunSummary};
pub use trace::{
    read_binary_trace, BinaryTraceWriter, ChannelFrame, DacSamples, ExecutionTrace, FrameCodes, NullSink, SampleFrame,
    TraceEvent, TraceHasher, TraceSink, FRAME_BYTES, TRACE_MAGIC, TRACE_VERSION,
};

/// What a channel is doing during its current instruction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecMode {
    /// Output zero (silent parameter change, WAIT off, failed condition).
    #[default]
    Idle,
    /// Shaped pulse with the latched envelope.
    Pulse,
    /// WAIT on: latched parameters with a rectangular envelope.
    Hold,
    /// Blocked on SYNC.
    Sync,
    /// Readout window.
    Readout,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelState {
    pub pc: usize,
    /// Cycles left in the current instruction, this one included.
    pub remaining_cycles: u64,
    pub duration_cycles: u64,
    pub amplitude_word: i16,
    pub envelope_id: u8,
    pub gate_on: bool,
    /// Holds the latched ftw and phase word.
    pub nco: Nco,
    pub mode: ExecMode,
    pub halted: bool,
}

impl ChannelState {
    pub fn blocked_on_sync(&self) -> bool {
        !self.halted && self.mode == ExecMode::Sync
    }

    fn elapsed_cycles(&self) -> u64 {
        self.duration_cycles - self.remaining_cycles
    }
}

/// Latest discriminated outcome per bit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementRegister {
    pub bits: u32,
}

impl MeasurementRegister {
    pub fn get(&self, bit: u8) -> bool {
        self.bits >> bit & 1 == 1
    }

    pub(crate) fn set(&mut self, bit: u8, value: bool) {
        if value {
            self.bits |= 1 << bit;
        } else {
            self.bits &= !(1 << bit);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub cycle_counter: u64,
    pub channels: [ChannelState; NUM_CHANNELS],
    pub meas_reg: MeasurementRegister,
    pub ext_trigger_line: bool,
    pub halted: bool,
}

impl ControllerState {
    /// Samples the trigger line. On a rising edge every channel blocked on
    /// SYNC is released to fetch on the next cycle. Returns the released
    /// channels.
    pub fn apply_sync(&mut self, level: bool) -> Vec<u8> {
        let edge = level && !self.ext_trigger_line;
        self.ext_trigger_line = level;
        if !edge {
            return Vec::new();
        }
        let mut released = Vec::new();
        for (c, ch) in self.channels.iter_mut().enumerate() {
            if ch.blocked_on_sync() {
                ch.mode = ExecMode::Idle;
                ch.remaining_cycles = 0;
                released.push(c as u8);
            }
        }
        released
    }

    pub fn live_channels(&self) -> impl Iterator<Item = &ChannelState> {
        self.channels.iter().filter(|c| !c.halted)
    }
}

/// Per-channel DSP chain after the raw DDS sample.
#[derive(Debug, Clone)]
struct Pipeline {
    kind: PathKind,
    qmc: QmcParams,
    qmc_identity: bool,
    fir: Fir,
    skew: SkewLine,
    dc: DcGenerator,
    passthrough: bool,
}

impl Pipeline {
    #[inline]
    fn process(&mut self, raw: Iq, dc_target: f64) -> Iq {
        match self.kind {
            PathKind::Rf => {
                if self.passthrough {
                    return raw;
                }
                let x = if self.qmc_identity { raw } else { self.qmc.apply(raw) };
                self.skew.process(self.fir.process(x))
            }
            PathKind::Dc => {
                self.dc.set_target(dc_target);
                self.skew.process(Iq::new(self.dc.next_sample(), 0.0))
            }
        }
    }

    /// Whether zero input is guaranteed to give zero output from here on.
    fn idle_is_zero(&self) -> bool {
        match self.kind {
            PathKind::Rf => self.passthrough,
            PathKind::Dc => false,
        }
    }
}

/// A loaded controller: program, configuration and mutable state.
///
/// Cloning is cheap; program and envelope tables are shared.
#[derive(Debug, Clone)]
pub struct Controller {
    program: Arc<Vec<Vec<Instruction>>>,
    envelopes: Arc<Vec<Option<Envelope>>>,
    trigger: Arc<TriggerSource>,
    pub state: ControllerState,
    pipelines: Vec<Pipeline>,
    pending_writes: Vec<(u64, u8, bool)>,
    events: Vec<TraceEvent>,
}

impl Controller {
    /// Validates the program against the configuration and resets all state.
    pub fn load(program: &Program, config: &ControllerConfig) -> Result<Self, ConfigError> {
        program.validate()?;
        config.dsp.validate()?;
        for (slot, p) in config.readout_table.iter().enumerate() {
            p.validate().map_err(|reason| ConfigError::ReadoutParams { slot, reason })?;
        }
        let mut seqs = vec![Vec::new(); NUM_CHANNELS];
        for (c, seq) in program.channels() {
            for (index, i) in seq.iter().enumerate() {
                check_instruction(c, index, i, config)?;
            }
            seqs[c as usize] = seq.iter().map(|i| i.canonicalize()).collect();
        }
        let mut envelopes = vec![None; 256];
        for id in config.envelopes.ids() {
            envelopes[id as usize] = config.envelopes.get(id).cloned();
        }
        let pipelines = (0..NUM_CHANNELS as u8)
            .map(|c| {
                let cfg = config.dsp.channel(c);
                Ok(Pipeline {
                    kind: cfg.path_kind,
                    qmc: cfg.qmc,
                    qmc_identity: cfg.qmc.is_identity(),
                    fir: Fir::new(&cfg.fir_taps)?,
                    skew: SkewLine::new(cfg.skew_delay_samples)?,
                    dc: DcGenerator::new(cfg.dc_ramp_cycles),
                    passthrough: cfg.is_passthrough(),
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let channels = std::array::from_fn(|c| ChannelState {
            halted: seqs[c].is_empty(),
            ..Default::default()
        });
        let halted = seqs.iter().all(|s| s.is_empty());
        Ok(Controller {
            program: Arc::new(seqs),
            envelopes: Arc::new(envelopes),
            trigger: Arc::new(config.trigger.clone().normalized()),
            state: ControllerState {
                cycle_counter: 0,
                channels,
                meas_reg: MeasurementRegister::default(),
                ext_trigger_line: false,
                halted,
            },
            pipelines,
            pending_writes: Vec::new(),
            events: Vec::new(),
        })
    }

    pub fn trigger_source(&self) -> &TriggerSource {
        &self.trigger
    }

    pub fn is_halted(&self) -> bool {
        self.state.halted
    }

    /// Every live channel is waiting on SYNC.
    pub fn all_live_blocked(&self) -> bool {
        let mut live = self.state.live_channels().peekable();
        live.peek().is_some() && live.all(|c| c.mode == ExecMode::Sync)
    }

    /// Registers a measurement-register write for the end of `cycle`.
    pub fn schedule_write(&mut self, cycle: u64, bit: u8, value: bool) {
        self.pending_writes.push((cycle, bit, value));
    }

    pub fn drain_events(&mut self) -> std::vec::Drain<'_, TraceEvent> {
        self.events.drain(..)
    }

    /// Overrides the measurement register, e.g. to seed a test.
    pub fn set_meas_bit(&mut self, bit: u8, value: bool) {
        self.state.meas_reg.set(bit, value);
    }

    /// One cycle with no measurement unit attached; RDO triggers are
    /// returned and their outcomes may be fed back via
    /// [`Controller::schedule_write`] for later cycles.
    pub fn step(&mut self) -> (SampleFrame, Vec<MuTrigger>) {
        let mut frame = SampleFrame::default();
        let mut triggers = Vec::new();
        self.step_with(&mut frame, |t| {
            triggers.push(*t);
            None
        });
        (frame, triggers)
    }

    /// One cycle. `on_trigger` runs for each RDO starting this cycle and may
    /// return the `(bit, value)` to write at the end of the window.
    pub fn step_with<F>(&mut self, frame: &mut SampleFrame, mut on_trigger: F)
    where
        F: FnMut(&MuTrigger) -> Option<(u8, bool)>,
    {
        let cycle = self.state.cycle_counter;
        frame.cycle = cycle;
        for c in 0..NUM_CHANNELS {
            if let Some(trigger) = self.channel_cycle(c, cycle, &mut frame.channels[c]) {
                self.events.push(TraceEvent::MuTrigger { cycle, trigger });
                if let Some((bit, value)) = on_trigger(&trigger) {
                    self.schedule_write(trigger.last_cycle(), bit, value);
                }
            }
        }
        let released = self.state.apply_sync(self.trigger.level(cycle));
        if !released.is_empty() {
            self.events.push(TraceEvent::SyncRelease {
                cycle,
                channels: released,
            });
        }
        self.finish_cycle(cycle);
    }

    fn finish_cycle(&mut self, cycle: u64) {
        if !self.pending_writes.is_empty() {
            let reg = &mut self.state.meas_reg;
            let events = &mut self.events;
            self.pending_writes.retain(|&(at, bit, value)| {
                if at <= cycle {
                    reg.set(bit, value);
                    events.push(TraceEvent::RegisterWrite { cycle, bit, value });
                    false
                } else {
                    true
                }
            });
        }
        let was_halted = self.state.halted;
        for (c, ch) in self.state.channels.iter_mut().enumerate() {
            if !ch.halted && ch.remaining_cycles == 0 && ch.mode != ExecMode::Sync && ch.pc >= self.program[c].len() {
                ch.halted = true;
                ch.mode = ExecMode::Idle;
                ch.gate_on = false;
            }
        }
        self.state.halted = self.state.channels.iter().all(|c| c.halted);
        if self.state.halted && !was_halted {
            self.events.push(TraceEvent::Halt { cycle });
        }
        self.state.cycle_counter += 1;
    }

    fn channel_cycle(&mut self, c: usize, cycle: u64, out: &mut ChannelFrame) -> Option<MuTrigger> {
        let mut trigger = None;
        let ch = &mut self.state.channels[c];
        if !ch.halted && ch.remaining_cycles == 0 && ch.mode != ExecMode::Sync {
            let instr = self.program[c][ch.pc];
            ch.pc += 1;
            trigger = begin(ch, &instr, self.state.meas_reg.bits, cycle, c as u8);
            if ch.mode == ExecMode::Sync {
                self.events.push(TraceEvent::SyncWait { cycle, channel: c as u8 });
            }
        }
        let ch = &mut self.state.channels[c];
        let pipe = &mut self.pipelines[c];
        out.ftw = ch.nco.ftw;
        let emitting = matches!(ch.mode, ExecMode::Pulse | ExecMode::Hold) && ch.gate_on && !ch.halted;
        if !emitting && pipe.idle_is_zero() {
            ch.nco.advance(SAMPLES_PER_CYCLE as u32);
            *out = ChannelFrame {
                ftw: out.ftw,
                ..Default::default()
            };
        } else {
            let amplitude = ch.amplitude_word as f64 / 32768.0;
            let dc_target = if emitting { amplitude } else { 0.0 };
            let n = ch.duration_cycles * SAMPLES_PER_CYCLE as u64;
            let k0 = ch.elapsed_cycles() * SAMPLES_PER_CYCLE as u64;
            let envelope = match ch.mode {
                ExecMode::Pulse => self.envelopes[ch.envelope_id as usize].as_ref(),
                _ => None,
            };
            for j in 0..SAMPLES_PER_CYCLE {
                let carrier = ch.nco.step();
                let raw = if !emitting {
                    Iq::new(0.0, 0.0)
                } else {
                    let e = envelope.map_or(1.0, |e| e.value_at(k0 + j as u64, n));
                    carrier * (amplitude * e)
                };
                let y = pipe.process(raw, dc_target);
                out.analog[j] = y;
                out.dac[j] = (quantize(y.re), quantize(y.im));
            }
        }
        if ch.mode != ExecMode::Sync && ch.remaining_cycles > 0 {
            ch.remaining_cycles -= 1;
        }
        trigger
    }
}

fn check_instruction(c: u8, index: usize, i: &Instruction, config: &ControllerConfig) -> Result<(), ConfigError> {
    if i.condition.enabled && i.condition.register_bit >= 32 {
        return Err(ConfigError::ConditionBit {
            channel: c,
            index,
            bit: i.condition.register_bit,
        });
    }
    if i.opcode.is_pulse() && !config.envelopes.contains(i.envelope_id) {
        return Err(ConfigError::UnknownEnvelope {
            channel: c,
            index,
            id: i.envelope_id,
        });
    }
    if i.opcode == Opcode::Rdo {
        let slot = i.readout_slot;
        let p = config
            .readout_table
            .get(slot as usize)
            .ok_or(ConfigError::MissingReadoutSlot { channel: c, index, slot })?;
        if p.window_cycles != i.duration_cycles {
            return Err(ConfigError::WindowMismatch {
                channel: c,
                index,
                slot,
                duration: i.duration_cycles,
                window: p.window_cycles,
            });
        }
    }
    Ok(())
}

/// Starts `instr` on a channel. Returns the MU trigger for RDO.
fn begin(ch: &mut ChannelState, instr: &Instruction, meas: u32, cycle: u64, channel: u8) -> Option<MuTrigger> {
    ch.duration_cycles = instr.duration_cycles as u64;
    ch.remaining_cycles = ch.duration_cycles;
    if !instr.condition.is_met(meas) {
        ch.mode = ExecMode::Idle;
        ch.gate_on = false;
        return None;
    }
    match instr.opcode {
        Opcode::Sta | Opcode::Stf | Opcode::Stp | Opcode::Stap => {
            match instr.opcode {
                Opcode::Sta => ch.amplitude_word = instr.amplitude_word,
                Opcode::Stf => ch.nco.ftw = instr.ftw,
                Opcode::Stp => ch.nco.phase_offset = instr.phase_word,
                _ => {
                    ch.amplitude_word = instr.amplitude_word;
                    ch.nco.phase_offset = instr.phase_word;
                }
            }
            ch.envelope_id = instr.envelope_id;
            ch.gate_on = instr.active;
            ch.mode = if instr.active { ExecMode::Pulse } else { ExecMode::Idle };
            None
        }
        Opcode::Wait => {
            ch.gate_on = instr.active;
            ch.mode = if instr.active { ExecMode::Hold } else { ExecMode::Idle };
            None
        }
        Opcode::Sync => {
            ch.gate_on = false;
            ch.mode = ExecMode::Sync;
            ch.remaining_cycles = 0;
            None
        }
        Opcode::Rdo => {
            ch.gate_on = false;
            ch.mode = ExecMode::Readout;
            Some(MuTrigger {
                channel,
                slot: instr.readout_slot,
                start_cycle: cycle,
                window_cycles: instr.duration_cycles,
            })
        }
    }
}
