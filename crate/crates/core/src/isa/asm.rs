// SPDX-License-Identifier: Apache-2.0

//! Line-oriented assembly text.
//!
//! ```text
//! # comment
//! ch0: STF f=100MHz d=4 env=0 off
//! ch0: STA a=0.5 d=20 env=1 on if m[3]==1
//! ch1: WAIT 100 off
//! ch2: RDO slot=0 d=2us
//! ch3: SYNC
//! ```
//!
//! Keys: `d` duration (bare cycles, or `ns`/`us`/`ms`/`s` in whole 5 ns
//! cycles; a bare number token is also a duration), `a` amplitude fraction,
//! `aw` amplitude word, `f` frequency (`Hz`/`kHz`/`MHz`/`GHz`), `ftw` raw
//! tuning word, `p` phase (`deg` default or `rad`), `pw` phase word, `env`
//! envelope id, `slot` readout slot. `on`/`off` sets the active flag
//! (default off); `if m[B]==V` adds a condition. Unspecified durations
//! default to one cycle.

use std::fmt::Write as _;

use thiserror::Error;

use super::{
    amplitude_word, ftw_from_hz, ftw_to_hz, phase_word_from_radians, Condition, FieldRangeError, Instruction,
    Opcode, Program, ProgramError, NUM_CHANNELS,
};
use crate::synth::CYCLE_NS;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AsmErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error(transparent)]
    FieldRange(#[from] FieldRangeError),
}

/// Assembly error at a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub column: usize,
    pub kind: AsmErrorKind,
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (idx, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &line[s..idx],
                    column: line[..s].chars().count() + 1,
                });
            }
        } else if start.is_none() {
            start = Some(idx);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: line[..s].chars().count() + 1,
        });
    }
    out
}

/// Splits `"12.5MHz"` into `(12.5, "MHz")`.
fn split_number(s: &str) -> Option<(f64, &str)> {
    let bytes = s.as_bytes();
    let mut end = 0;
    while end < bytes.len() {
        let c = bytes[end];
        let exp_ok = (c == b'e' || c == b'E')
            && end > 0
            && bytes
                .get(end + 1)
                .is_some_and(|n| n.is_ascii_digit() || *n == b'-' || *n == b'+');
        let sign_ok = (c == b'-' || c == b'+') && (end == 0 || matches!(bytes[end - 1], b'e' | b'E'));
        if c.is_ascii_digit() || c == b'.' || exp_ok || sign_ok {
            end += 1;
        } else {
            break;
        }
    }
    let value = s[..end].parse::<f64>().ok()?;
    Some((value, &s[end..]))
}

fn parse_int<T: TryFrom<i128>>(s: &str) -> Option<T> {
    let v: i128 = if let Some(hex) = s.strip_prefix("0x") {
        i128::from_str_radix(hex, 16).ok()?
    } else {
        s.parse().ok()?
    };
    T::try_from(v).ok()
}

fn parse_duration(s: &str) -> Result<u32, String> {
    if let Some(v) = parse_int::<i128>(s) {
        return u32::try_from(v)
            .ok()
            .filter(|d| *d > 0)
            .ok_or_else(|| format!("duration `{s}` must be in 1..=4294967295 cycles"));
    }
    let (value, unit) = split_number(s).ok_or_else(|| format!("bad duration `{s}`"))?;
    let ns = match unit {
        "ns" => value,
        "us" => value * 1e3,
        "ms" => value * 1e6,
        "s" => value * 1e9,
        _ => return Err(format!("unknown duration unit `{unit}`")),
    };
    let cycles = ns / CYCLE_NS as f64;
    let rounded = cycles.round();
    if (cycles - rounded).abs() > 1e-6 * rounded.max(1.0) {
        return Err(format!("duration `{s}` is not a whole number of {CYCLE_NS} ns cycles"));
    }
    if !(1.0..=u32::MAX as f64).contains(&rounded) {
        return Err(format!("duration `{s}` is out of range"));
    }
    Ok(rounded as u32)
}

fn parse_frequency(s: &str) -> Result<f64, String> {
    let (value, unit) = split_number(s).ok_or_else(|| format!("bad frequency `{s}`"))?;
    let scale = match unit {
        "" | "Hz" => 1.0,
        "kHz" => 1e3,
        "MHz" => 1e6,
        "GHz" => 1e9,
        _ => return Err(format!("unknown frequency unit `{unit}`")),
    };
    Ok(value * scale)
}

fn parse_phase(s: &str) -> Result<f64, String> {
    let (value, unit) = split_number(s).ok_or_else(|| format!("bad phase `{s}`"))?;
    match unit {
        "" | "deg" => Ok(value.to_radians()),
        "rad" => Ok(value),
        _ => Err(format!("unknown phase unit `{unit}`")),
    }
}

fn parse_condition(s: &str) -> Option<Condition> {
    let rest = s.strip_prefix("m[")?;
    let (bit, rest) = rest.split_once("]==")?;
    let register_bit: u8 = bit.parse().ok().filter(|b| *b < 32)?;
    let level = match rest {
        "1" => true,
        "0" => false,
        _ => return None,
    };
    Some(Condition::on_bit(register_bit, level))
}

fn allowed_keys(op: Opcode) -> &'static [&'static str] {
    match op {
        Opcode::Sta => &["d", "a", "aw", "env"],
        Opcode::Stf => &["d", "f", "ftw", "env"],
        Opcode::Stp => &["d", "p", "pw", "env"],
        Opcode::Stap => &["d", "a", "aw", "p", "pw", "env"],
        Opcode::Wait => &["d"],
        Opcode::Sync => &[],
        Opcode::Rdo => &["d", "slot"],
    }
}

fn parse_line(text: &str, line_no: usize) -> Result<Option<Instruction>, AsmError> {
    let code = text.split('#').next().unwrap_or("");
    let tokens = tokenize(code);
    if tokens.is_empty() {
        return Ok(None);
    }
    let err = |column: usize, kind: AsmErrorKind| AsmError {
        line: line_no,
        column,
        kind,
    };
    let syntax = |column: usize, msg: String| err(column, AsmErrorKind::Syntax(msg));

    let label = &tokens[0];
    let channel: u8 = label
        .text
        .strip_prefix("ch")
        .and_then(|s| s.strip_suffix(':'))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| syntax(label.column, format!("expected `chN:` label, found `{}`", label.text)))?;
    if channel as usize >= NUM_CHANNELS {
        return Err(err(
            label.column,
            FieldRangeError::new("channel", channel, "0..=21").into(),
        ));
    }
    let mnemonic = tokens
        .get(1)
        .ok_or_else(|| syntax(label.column + label.text.len(), "missing mnemonic".into()))?;
    let opcode = Opcode::from_mnemonic(mnemonic.text)
        .ok_or_else(|| err(mnemonic.column, AsmErrorKind::UnknownMnemonic(mnemonic.text.to_string())))?;

    let mut instr = Instruction {
        opcode,
        channel,
        duration_cycles: 1,
        amplitude_word: 0,
        ftw: 0,
        phase_word: 0,
        envelope_id: 0,
        active: false,
        condition: Condition::ALWAYS,
        readout_slot: 0,
    };
    let mut seen: Vec<&str> = Vec::new();
    let mut seen_active = false;
    let mut iter = tokens[2..].iter();
    while let Some(tok) = iter.next() {
        let t = tok.text;
        let col = tok.column;
        if t == "on" || t == "off" {
            if !opcode.uses_active() {
                return Err(syntax(col, format!("`{t}` is not valid for {opcode}")));
            }
            if seen_active {
                return Err(syntax(col, "active flag given twice".into()));
            }
            seen_active = true;
            instr.active = t == "on";
        } else if t == "if" {
            let cond_tok = iter
                .next()
                .ok_or_else(|| syntax(col, "`if` needs a condition `m[B]==V`".into()))?;
            if instr.condition.enabled {
                return Err(syntax(col, "condition given twice".into()));
            }
            instr.condition = parse_condition(cond_tok.text)
                .ok_or_else(|| syntax(cond_tok.column, format!("bad condition `{}`", cond_tok.text)))?;
        } else if let Some((key, value)) = t.split_once('=') {
            if !allowed_keys(opcode).contains(&key) {
                return Err(syntax(col, format!("key `{key}` is not valid for {opcode}")));
            }
            // `a`/`aw`, `f`/`ftw` and `p`/`pw` name the same field.
            let field = match key {
                "aw" => "a",
                "ftw" => "f",
                "pw" => "p",
                k => k,
            };
            if seen.contains(&field) {
                return Err(syntax(col, format!("field `{field}` given twice")));
            }
            seen.push(field);
            let vcol = col + key.len() + 1;
            match key {
                "d" => instr.duration_cycles = parse_duration(value).map_err(|m| syntax(vcol, m))?,
                "a" => {
                    let v: f64 = value.parse().map_err(|_| syntax(vcol, format!("bad amplitude `{value}`")))?;
                    instr.amplitude_word = amplitude_word(v).map_err(|e| err(vcol, e.into()))?;
                }
                "aw" => {
                    instr.amplitude_word = parse_int(value).ok_or_else(|| {
                        err(vcol, FieldRangeError::new("amplitude word", value, "-32768..=32767").into())
                    })?
                }
                "f" => {
                    let hz = parse_frequency(value).map_err(|m| syntax(vcol, m))?;
                    instr.ftw = ftw_from_hz(hz).map_err(|e| err(vcol, e.into()))?;
                }
                "ftw" => {
                    instr.ftw = parse_int(value)
                        .ok_or_else(|| err(vcol, FieldRangeError::new("ftw", value, "0..=2^32-1").into()))?
                }
                "p" => instr.phase_word = phase_word_from_radians(parse_phase(value).map_err(|m| syntax(vcol, m))?),
                "pw" => {
                    instr.phase_word = parse_int(value)
                        .ok_or_else(|| err(vcol, FieldRangeError::new("phase word", value, "0..=65535").into()))?
                }
                "env" => {
                    instr.envelope_id = parse_int(value)
                        .ok_or_else(|| err(vcol, FieldRangeError::new("envelope id", value, "0..=255").into()))?
                }
                "slot" => {
                    instr.readout_slot = parse_int(value)
                        .ok_or_else(|| err(vcol, FieldRangeError::new("readout slot", value, "0..=255").into()))?
                }
                _ => unreachable!("checked against allowed_keys"),
            }
        } else if t.starts_with(|c: char| c.is_ascii_digit()) && allowed_keys(opcode).contains(&"d") {
            if seen.contains(&"d") {
                return Err(syntax(col, "field `d` given twice".into()));
            }
            seen.push("d");
            instr.duration_cycles = parse_duration(t).map_err(|m| syntax(col, m))?;
        } else {
            return Err(syntax(col, format!("unexpected token `{t}`")));
        }
    }
    super::encode(&instr).map_err(|e| err(mnemonic.column, e.into()))?;
    Ok(Some(instr))
}

/// Assembles source text into a program.
pub fn assemble(source: &str) -> Result<Program, AsmError> {
    let mut program = Program::new();
    for (idx, line) in source.lines().enumerate() {
        if let Some(instr) = parse_line(line, idx + 1)? {
            program.push(instr).map_err(|e| AsmError {
                line: idx + 1,
                column: 1,
                kind: match e {
                    ProgramError::ChannelOutOfRange(c) => FieldRangeError::new("channel", c, "0..=21").into(),
                    other => AsmErrorKind::Syntax(other.to_string()),
                },
            })?;
        }
    }
    Ok(program)
}

fn format_instruction(out: &mut String, i: &Instruction) {
    let i = i.canonicalize();
    let _ = write!(out, "ch{}: {}", i.channel, i.opcode);
    match i.opcode {
        Opcode::Sta => {
            let _ = write!(out, " a={} d={} env={}", i.amplitude(), i.duration_cycles, i.envelope_id);
        }
        Opcode::Stf => {
            let _ = write!(out, " ftw={} d={} env={}", i.ftw, i.duration_cycles, i.envelope_id);
        }
        Opcode::Stp => {
            let _ = write!(out, " pw={} d={} env={}", i.phase_word, i.duration_cycles, i.envelope_id);
        }
        Opcode::Stap => {
            let _ = write!(
                out,
                " a={} pw={} d={} env={}",
                i.amplitude(),
                i.phase_word,
                i.duration_cycles,
                i.envelope_id
            );
        }
        Opcode::Wait => {
            let _ = write!(out, " d={}", i.duration_cycles);
        }
        Opcode::Sync => {}
        Opcode::Rdo => {
            let _ = write!(out, " slot={} d={}", i.readout_slot, i.duration_cycles);
        }
    }
    if i.opcode.uses_active() {
        out.push_str(if i.active { " on" } else { " off" });
    }
    if i.condition.enabled {
        let _ = write!(
            out,
            " if m[{}]=={}",
            i.condition.register_bit, i.condition.required_level as u8
        );
    }
    if i.opcode == Opcode::Stf {
        let _ = write!(out, "  # {:.6} MHz", ftw_to_hz(i.ftw) / 1e6);
    }
    out.push('\n');
}

/// Renders a program as assembly text, channel by channel.
pub fn disassemble(program: &Program) -> String {
    let mut out = String::new();
    for (_, seq) in program.channels() {
        for i in seq {
            format_instruction(&mut out, i);
        }
    }
    out
}
