// SPDX-License-Identifier: Apache-2.0

//! Per-point program synthesis for the sweeps.

use crate::isa::{Condition, Instruction, Program};

/// Rotation axis of an AllXY gate; lower case is a half rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    I,
    X,
    Y,
    HalfX,
    HalfY,
}

impl Gate {
    pub fn symbol(self) -> char {
        match self {
            Gate::I => 'I',
            Gate::X => 'X',
            Gate::Y => 'Y',
            Gate::HalfX => 'x',
            Gate::HalfY => 'y',
        }
    }

    fn from_symbol(c: char) -> Gate {
        match c {
            'I' => Gate::I,
            'X' => Gate::X,
            'Y' => Gate::Y,
            'x' => Gate::HalfX,
            'y' => Gate::HalfY,
            _ => unreachable!("bad gate symbol {c}"),
        }
    }
}

/// The 21 AllXY pairs in the usual order, with the ideal `|1>` population.
pub fn allxy_pairs() -> Vec<([Gate; 2], f64)> {
    const PAIRS: [&str; 21] = [
        "II", "XX", "YY", "XY", "YX", "xI", "yI", "xy", "yx", "xY", "yX", "Xy", "Yx", "xX", "Xx", "yY", "Yy", "XI", "YI", "xx", "yy",
    ];
    PAIRS
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut c = s.chars().map(Gate::from_symbol);
            let ideal = match k {
                0..=4 => 0.0,
                5..=16 => 0.5,
                _ => 1.0,
            };
            ([c.next().unwrap(), c.next().unwrap()], ideal)
        })
        .collect()
}

/// Pulse words shared by the builders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSet {
    pub channel: u8,
    pub ftw: u32,
    pub cycles: u32,
    pub pi_word: i16,
    pub half_pi_word: i16,
}

/// Phase word for the y axis.
const QUARTER_TURN: u16 = 1 << 14;

impl PulseSet {
    fn tune(&self) -> Instruction {
        Instruction::stf(self.channel, self.ftw, 1)
    }

    fn gate(&self, g: Gate) -> Instruction {
        let c = self.channel;
        match g {
            Gate::I => Instruction::wait(c, self.cycles),
            Gate::X => Instruction::stap(c, self.pi_word, 0, self.cycles).on(),
            Gate::Y => Instruction::stap(c, self.pi_word, QUARTER_TURN, self.cycles).on(),
            Gate::HalfX => Instruction::stap(c, self.half_pi_word, 0, self.cycles).on(),
            Gate::HalfY => Instruction::stap(c, self.half_pi_word, QUARTER_TURN, self.cycles).on(),
        }
    }

    fn wait(&self, cycles: u32, out: &mut Vec<Instruction>) {
        if cycles > 0 {
            out.push(Instruction::wait(self.channel, cycles));
        }
    }

    /// Square pulse at `ftw`; zero duration leaves only the tuning cycle.
    pub fn rabi(&self, ftw: u32, amplitude_word: i16, cycles: u32) -> Vec<Instruction> {
        let mut v = vec![Instruction::stf(self.channel, ftw, 1)];
        if cycles > 0 {
            v.push(Instruction::sta(self.channel, amplitude_word, cycles).on());
        }
        v
    }

    /// `x - delay - x`.
    pub fn ramsey(&self, delay_cycles: u32) -> Vec<Instruction> {
        let mut v = vec![self.tune(), self.gate(Gate::HalfX)];
        self.wait(delay_cycles, &mut v);
        v.push(self.gate(Gate::HalfX));
        v
    }

    /// `x - tau - X - tau - x`.
    pub fn echo(&self, tau_cycles: u32) -> Vec<Instruction> {
        let mut v = vec![self.tune(), self.gate(Gate::HalfX)];
        self.wait(tau_cycles, &mut v);
        v.push(self.gate(Gate::X));
        self.wait(tau_cycles, &mut v);
        v.push(self.gate(Gate::HalfX));
        v
    }

    pub fn allxy(&self, pair: [Gate; 2]) -> Vec<Instruction> {
        vec![self.tune(), self.gate(pair[0]), self.gate(pair[1])]
    }

    /// Optional preparation, readout into `bit`, then a pi pulse only if
    /// the bit reads 1.
    pub fn active_reset(&self, prepare: Option<Gate>, slot: u8, window: u32, bit: u8) -> Vec<Instruction> {
        let mut v = vec![self.tune()];
        v.extend(prepare.map(|g| self.gate(g)));
        v.push(Instruction::rdo(self.channel, slot, window));
        v.push(self.gate(Gate::X).with_condition(Condition::on_bit(bit, true)));
        v
    }
}

/// Program on one channel, optionally closed by a readout.
pub fn single_channel(channel: u8, mut seq: Vec<Instruction>, readout: Option<(u8, u32)>) -> Program {
    if let Some((slot, window)) = readout {
        seq.push(Instruction::rdo(channel, slot, window));
    }
    let mut p = Program::new();
    p.set_channel(channel, seq).expect("builders emit valid sequences");
    p
}
