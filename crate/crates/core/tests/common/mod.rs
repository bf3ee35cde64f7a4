// SPDX-License-Identifier: Apache-2.0

//! Random instruction and program generators shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qctl_core::exec::{ControllerConfig, TriggerSource};
use qctl_core::isa::{
    duration_encodable, Condition, Instruction, Opcode, Program, MAX_ENCODED_CONDITION_BIT, NUM_CHANNELS,
    SHORT_DURATION_MAX,
};
use qctl_core::measure::{Polarity, ReadoutMode, ReadoutParams};
use qctl_core::synth::{ChannelDspConfig, DspConfig, Envelope, EnvelopeLibrary};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn condition<R: Rng>(rng: &mut R) -> Condition {
    if rng.random_bool(0.5) {
        Condition::ALWAYS
    } else {
        Condition::on_bit(rng.random_range(0..=MAX_ENCODED_CONDITION_BIT), rng.random())
    }
}

/// Duration drawn across every size class the encoding distinguishes.
fn duration<R: Rng>(rng: &mut R, op: Opcode) -> u32 {
    loop {
        let d = match rng.random_range(0..4) {
            0 => rng.random_range(1..=SHORT_DURATION_MAX),
            1 => rng.random_range(1..=1 << 21),
            2 => rng.random_range(1..=1u32 << 12) << rng.random_range(0..=15),
            _ => rng.random_range(1..=u32::MAX),
        };
        if duration_encodable(op, d) {
            return d;
        }
    }
}

/// Any canonical, encodable instruction.
pub fn any_instruction<R: Rng>(rng: &mut R) -> Instruction {
    let op = Opcode::ALL[rng.random_range(0..Opcode::ALL.len())];
    let ch = rng.random_range(0..NUM_CHANNELS as u8);
    let d = duration(rng, op);
    let i = match op {
        Opcode::Sta => Instruction::sta(ch, rng.random(), d),
        Opcode::Stf => Instruction::stf(ch, rng.random(), d),
        Opcode::Stp => Instruction::stp(ch, rng.random(), d),
        Opcode::Stap => Instruction::stap(ch, rng.random(), rng.random(), d),
        Opcode::Wait => Instruction::wait(ch, d),
        Opcode::Sync => Instruction::sync(ch),
        Opcode::Rdo => Instruction::rdo(ch, rng.random(), d),
    };
    i.with_envelope(rng.random())
        .with_active(rng.random())
        .with_condition(condition(rng))
        .canonicalize()
}

/// Readout windows of the two slots in [`exec_config`].
pub const SLOT_WINDOWS: [u32; 2] = [4, 8];

/// Controller configuration that every program from [`exec_program`] loads
/// against: two readout slots, a Gaussian envelope as id 1, a mix of DSP
/// settings and a periodic trigger line.
pub fn exec_config() -> ControllerConfig {
    let mut envelopes = EnvelopeLibrary::default();
    envelopes.insert(Envelope::gaussian(1, 0.2)).unwrap();
    let mut dsp = DspConfig::default();
    dsp.set(
        3,
        ChannelDspConfig {
            fir_taps: vec![0.25, 0.5, 0.25],
            ..Default::default()
        },
    );
    dsp.set(
        5,
        ChannelDspConfig {
            skew_delay_samples: 7,
            ..Default::default()
        },
    );
    dsp.set(20, ChannelDspConfig::dc(3));
    dsp.set(21, ChannelDspConfig::dc(0));
    let reflect = ReadoutParams {
        mode: ReadoutMode::Reflectometry,
        window_cycles: SLOT_WINDOWS[1],
        threshold: 5.0,
        polarity: Polarity::Above,
        target_bit: 9,
        readout_ftw: 1 << 27,
        rotation_phase_word: 0,
    };
    ControllerConfig {
        readout_table: vec![ReadoutParams::charge_sensing(SLOT_WINDOWS[0], 1.0, 2), reflect],
        envelopes,
        dsp,
        trigger: TriggerSource::Periodic { period: 997, first: 40 },
    }
}

/// Readout level per slot for `ConstantStimulus`: slot 0 reads 1, slot 1
/// reads 0.
pub const READOUT_LEVELS: [f64; 2] = [0.5, 0.1];

#[derive(Debug, Clone, Copy)]
pub struct ExecOptions {
    /// Cycles of instructions per channel, at least.
    pub cycles: u64,
    pub conditionals: bool,
    pub sync: bool,
    pub readout: bool,
    pub max_duration: u32,
}

/// Executable instruction for `exec_config`.
fn exec_instruction<R: Rng>(rng: &mut R, ch: u8, o: &ExecOptions) -> Instruction {
    let short = |rng: &mut R| rng.random_range(1..=o.max_duration.min(SHORT_DURATION_MAX));
    let long = |rng: &mut R| rng.random_range(1..=o.max_duration);
    let i = match rng.random_range(0..20) {
        0..=4 => Instruction::sta(ch, rng.random_range(-28000..28000), long(rng)),
        5..=6 => Instruction::stf(ch, rng.random_range(0..1u32 << 30), short(rng)),
        7..=8 => Instruction::stp(ch, rng.random(), long(rng)),
        9..=11 => Instruction::stap(ch, rng.random_range(-28000..28000), rng.random(), short(rng)),
        12..=16 => Instruction::wait(ch, long(rng)),
        17 if o.sync => Instruction::sync(ch),
        18 if o.readout => {
            let slot = rng.random_range(0..2u8);
            Instruction::rdo(ch, slot, SLOT_WINDOWS[slot as usize])
        }
        _ => Instruction::wait(ch, long(rng)),
    };
    let i = i.with_active(rng.random_bool(0.6)).with_envelope(rng.random_range(0..2));
    let i = if o.conditionals && rng.random_bool(0.1) {
        i.with_condition(Condition::on_bit(if rng.random() { 2 } else { 9 }, rng.random()))
    } else {
        i
    };
    i.canonicalize()
}

/// A random program on all 22 channels for [`exec_config`].
pub fn exec_program(seed: u64, o: &ExecOptions) -> Program {
    let mut rng = rng(seed);
    let mut p = Program::new();
    for ch in 0..NUM_CHANNELS as u8 {
        let mut seq = Vec::new();
        let mut total = 0u64;
        while total < o.cycles {
            let i = exec_instruction(&mut rng, ch, o);
            total += i.duration_cycles as u64;
            seq.push(i);
        }
        p.set_channel(ch, seq).unwrap();
    }
    p
}
