// SPDX-License-Identifier: Apache-2.0

//! Conductor and Performer units on a shared reference clock.
//!
//! Units run on their own threads and talk only through [`SyncMessage`]s.
//! The Conductor arms every Performer, waits for all READY replies, then
//! broadcasts START with an absolute start cycle. Unit `u` emits its local
//! sample `n` at reference time `start_cycle * 5000 + n * 1000 + skew_u`
//! picoseconds.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{run_until_halt, ConfigError, ConstantStimulus, Controller, ControllerConfig, DeadlockError, ExecutionTrace, FrameCodes};
use crate::isa::{Program, NUM_CHANNELS};
use crate::measure::MeasurementUnit;
use crate::synth::SAMPLES_PER_CYCLE;

pub const CYCLE_PS: i64 = 5000;
pub const SAMPLE_PS: i64 = 1000;
/// Skews must stay below one cycle.
pub const MAX_SKEW_PS: i64 = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Conductor,
    Performer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitConfig {
    pub unit_id: u32,
    pub role: Role,
    #[serde(default)]
    pub clock_skew_ps: i64,
    pub program: Program,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncKind {
    Arm,
    Ready,
    Start,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncMessage {
    pub kind: SyncKind,
    pub sender: u32,
    /// Meaningful for START only.
    pub start_cycle: u64,
}

impl SyncMessage {
    fn new(kind: SyncKind, sender: u32) -> Self {
        SyncMessage { kind, sender, start_cycle: 0 }
    }
}

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("role error: {0}")]
    Role(String),
    #[error("unit {unit}: skew {skew_ps} ps is not below one cycle")]
    Skew { unit: u32, skew_ps: i64 },
    #[error("sync timeout: units {0:?} never reported READY")]
    SyncTimeout(Vec<u32>),
    #[error("unit {unit}: {source}")]
    Config { unit: u32, source: ConfigError },
    #[error("unit {unit}: {source}")]
    Run { unit: u32, source: DeadlockError },
    #[error("unit traces are not aligned (residual skews {0:?} ps)")]
    NotAligned(Vec<i64>),
    #[error("units {0:?} drive the same channel {1}")]
    Overlap(Vec<u32>, u8),
}

#[derive(Debug, Clone)]
pub struct EnsembleOptions {
    /// Shared by every unit: readout table, envelopes, DSP and trigger line.
    pub config: ControllerConfig,
    /// Readout level per slot seen by every unit.
    pub readout_levels: Vec<f64>,
    pub start_cycle: u64,
    pub ready_timeout: Duration,
    pub max_cycles: Option<u64>,
    /// Performers that receive ARM but never answer; for fault injection.
    pub unresponsive: BTreeSet<u32>,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            config: ControllerConfig::default(),
            readout_levels: Vec::new(),
            start_cycle: 16,
            ready_timeout: Duration::from_secs(5),
            max_cycles: None,
            unresponsive: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitTrace {
    pub unit_id: u32,
    pub role: Role,
    /// Remaining offset from the reference timeline.
    pub skew_ps: i64,
    /// Channels this unit's program drives.
    pub channels: Vec<u8>,
    pub trace: ExecutionTrace,
}

/// A rising or falling edge of a channel's output on the reference timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PulseEdge {
    pub time_ps: i64,
    pub unit_id: u32,
    pub channel: u8,
    pub rising: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnsembleTrace {
    pub start_cycle: u64,
    /// Units in ascending id order.
    pub units: Vec<UnitTrace>,
    /// Messages the Conductor sent and received, in protocol order.
    pub protocol: Vec<SyncMessage>,
}

fn check_roles(units: &[UnitConfig]) -> Result<usize, EnsembleError> {
    let conductors: Vec<usize> = units.iter().enumerate().filter(|(_, u)| u.role == Role::Conductor).map(|(k, _)| k).collect();
    if conductors.len() != 1 {
        return Err(EnsembleError::Role(format!("expected exactly one Conductor, found {}", conductors.len())));
    }
    let mut ids = BTreeSet::new();
    for u in units {
        if !ids.insert(u.unit_id) {
            return Err(EnsembleError::Role(format!("duplicate unit id {}", u.unit_id)));
        }
        if u.clock_skew_ps.abs() >= MAX_SKEW_PS {
            return Err(EnsembleError::Skew {
                unit: u.unit_id,
                skew_ps: u.clock_skew_ps,
            });
        }
    }
    let mut owner: BTreeMap<u8, u32> = BTreeMap::new();
    for u in units {
        for (c, _) in u.program.channels() {
            if let Some(&other) = owner.get(&c) {
                return Err(EnsembleError::Overlap(vec![other, u.unit_id], c));
            }
            owner.insert(c, u.unit_id);
        }
    }
    Ok(conductors[0])
}

struct Loaded {
    id: u32,
    ctrl: Controller,
}

type UnitResult = Result<Option<(Controller, ExecutionTrace)>, EnsembleError>;

fn run_unit(mut unit: Loaded, opts: &EnsembleOptions) -> Result<(Controller, ExecutionTrace), EnsembleError> {
    let mut mu = MeasurementUnit::new(opts.config.readout_table.clone(), 0);
    let mut src = ConstantStimulus {
        levels: opts.readout_levels.clone(),
    };
    let mut trace = ExecutionTrace::default();
    run_until_halt(&mut unit.ctrl, &mut mu, &mut src, &mut trace, opts.max_cycles).map_err(|source| EnsembleError::Run { unit: unit.id, source })?;
    Ok((unit.ctrl, trace))
}

/// Performer side: load, wait for ARM, report READY, wait for START, run.
fn performer(
    unit: Loaded,
    inbox: Receiver<SyncMessage>,
    conductor: Sender<SyncMessage>,
    opts: &EnsembleOptions,
) -> Result<Option<(Controller, ExecutionTrace)>, EnsembleError> {
    let id = unit.id;
    loop {
        match inbox.recv() {
            Ok(m) if m.kind == SyncKind::Arm => {
                if !opts.unresponsive.contains(&id) {
                    let _ = conductor.send(SyncMessage::new(SyncKind::Ready, id));
                }
            }
            Ok(m) if m.kind == SyncKind::Start => return run_unit(unit, opts).map(Some),
            Ok(m) if m.kind == SyncKind::Abort => return Ok(None),
            Ok(_) => {}
            Err(_) => return Ok(None),
        }
    }
}

/// Runs the ensemble and returns every unit's trace.
pub fn orchestrate(units: &[UnitConfig], opts: &EnsembleOptions) -> Result<EnsembleTrace, EnsembleError> {
    let conductor_idx = check_roles(units)?;
    let loaded: Vec<Loaded> = units
        .iter()
        .map(|u| {
            Controller::load(&u.program, &opts.config)
                .map(|ctrl| Loaded { id: u.unit_id, ctrl })
                .map_err(|source| EnsembleError::Config { unit: u.unit_id, source })
        })
        .collect::<Result<_, _>>()?;
    let conductor_id = units[conductor_idx].unit_id;
    let mut protocol = Vec::new();

    let results: Vec<(u32, UnitResult)> = thread::scope(|scope| {
        let (to_conductor, conductor_inbox) = channel::<SyncMessage>();
        let mut outboxes = BTreeMap::new();
        let mut handles = Vec::new();
        let mut own = None;
        for l in loaded {
            if l.id == conductor_id {
                own = Some(l);
                continue;
            }
            let (tx, rx) = channel();
            outboxes.insert(l.id, tx);
            let back = to_conductor.clone();
            let id = l.id;
            handles.push((id, scope.spawn(move || performer(l, rx, back, opts))));
        }
        drop(to_conductor);
        let own = own.expect("conductor present");

        let broadcast = |kind: SyncKind, start_cycle: u64, log: &mut Vec<SyncMessage>| {
            for tx in outboxes.values() {
                let m = SyncMessage {
                    kind,
                    sender: conductor_id,
                    start_cycle,
                };
                let _ = tx.send(m);
            }
            log.push(SyncMessage {
                kind,
                sender: conductor_id,
                start_cycle,
            });
        };

        broadcast(SyncKind::Arm, 0, &mut protocol);
        let mut waiting: BTreeSet<u32> = handles.iter().map(|(id, _)| *id).collect();
        let mut ready = Vec::new();
        let deadline = std::time::Instant::now() + opts.ready_timeout;
        let mut timed_out = false;
        while !waiting.is_empty() {
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            match conductor_inbox.recv_timeout(left) {
                Ok(m) if m.kind == SyncKind::Ready => {
                    if waiting.remove(&m.sender) {
                        ready.push(m);
                    }
                }
                Ok(_) => {}
                Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => {
                    timed_out = true;
                    break;
                }
            }
        }
        // READY arrival order depends on scheduling; log it by sender.
        ready.sort_by_key(|m| m.sender);
        protocol.extend(ready);

        let mut results = Vec::new();
        if timed_out {
            broadcast(SyncKind::Abort, 0, &mut protocol);
            for (id, h) in handles {
                let _ = h.join();
                results.push((id, Ok(None)));
            }
            results.push((u32::MAX, Err(EnsembleError::SyncTimeout(waiting.into_iter().collect()))));
            return results;
        }
        broadcast(SyncKind::Start, opts.start_cycle, &mut protocol);
        results.push((conductor_id, run_unit(own, opts).map(Some)));
        for (id, h) in handles {
            results.push((id, h.join().expect("performer thread panicked")));
        }
        results
    });

    let mut runs = BTreeMap::new();
    for (id, r) in results {
        if let Some(run) = r? {
            runs.insert(id, run);
        }
    }
    // Units that halt early keep stepping until the last one halts, so every
    // trace covers the same cycles.
    let horizon = runs.values().map(|(_, t)| t.frames.len()).max().unwrap_or(0);
    let mut out = Vec::new();
    for u in units {
        let (mut ctrl, mut trace) = runs.remove(&u.unit_id).expect("every unit ran");
        while trace.frames.len() < horizon {
            let (frame, _) = ctrl.step();
            trace.frames.push(frame.codes());
        }
        out.push(UnitTrace {
            unit_id: u.unit_id,
            role: u.role,
            skew_ps: u.clock_skew_ps,
            channels: u.program.channels().map(|(c, _)| c).collect(),
            trace,
        });
    }
    out.sort_by_key(|u| u.unit_id);
    Ok(EnsembleTrace {
        start_cycle: opts.start_cycle,
        units: out,
        protocol,
    })
}

impl EnsembleTrace {
    /// Reference time of local sample `n` of a unit with `skew_ps`.
    pub fn sample_time_ps(&self, n: u64, skew_ps: i64) -> i64 {
        self.start_cycle as i64 * CYCLE_PS + n as i64 * SAMPLE_PS + skew_ps
    }

    /// Output edges on every driven channel, sorted by reference time.
    ///
    /// A rising edge is the first nonzero sample after a zero sample (or the
    /// trace start); a falling edge is the first zero sample after a
    /// nonzero one.
    pub fn edges(&self) -> Vec<PulseEdge> {
        let mut out = Vec::new();
        for u in &self.units {
            for &c in &u.channels {
                let mut on = false;
                let mut n = 0u64;
                for f in &u.trace.frames {
                    for &(i, q) in &f.dac[c as usize] {
                        let now = i != 0 || q != 0;
                        if now != on {
                            out.push(PulseEdge {
                                time_ps: self.sample_time_ps(n, u.skew_ps),
                                unit_id: u.unit_id,
                                channel: c,
                                rising: now,
                            });
                            on = now;
                        }
                        n += 1;
                    }
                }
            }
        }
        out.sort();
        out
    }

    /// Merged timeline as JSON.
    pub fn timeline_json(&self) -> serde_json::Value {
        serde_json::json!({
            "format": "qctl-ensemble-timeline",
            "version": 1,
            "start_cycle": self.start_cycle,
            "units": self.units.iter().map(|u| serde_json::json!({
                "unit_id": u.unit_id,
                "role": u.role,
                "skew_ps": u.skew_ps,
                "channels": u.channels,
                "cycles": u.trace.frames.len(),
            })).collect::<Vec<_>>(),
            "protocol": self.protocol,
            "edges": self.edges(),
        })
    }

    /// Single 22-channel trace taking each channel from the unit that
    /// drives it. Undriven channels come from the Conductor. Requires every
    /// unit to sit on the reference timeline.
    pub fn merged(&self) -> Result<ExecutionTrace, EnsembleError> {
        if self.units.iter().any(|u| u.skew_ps != 0) {
            return Err(EnsembleError::NotAligned(self.units.iter().map(|u| u.skew_ps).collect()));
        }
        let base = self.units.iter().find(|u| u.role == Role::Conductor).expect("one conductor");
        let mut source = [base; NUM_CHANNELS];
        for u in &self.units {
            for &c in &u.channels {
                source[c as usize] = u;
            }
        }
        let frames = (0..base.trace.frames.len())
            .map(|k| FrameCodes {
                cycle: base.trace.frames[k].cycle,
                dac: std::array::from_fn(|c| source[c].trace.frames[k].dac[c]),
            })
            .collect();
        let mut events: Vec<_> = self.units.iter().flat_map(|u| u.trace.events.iter().cloned()).collect();
        events.sort_by_key(event_cycle);
        Ok(ExecutionTrace { frames, events })
    }

    /// Signed offset of each unit's first rising edge from the Conductor's,
    /// in picoseconds. Units without a rising edge are omitted.
    pub fn misalignment_ps(&self) -> BTreeMap<u32, i64> {
        let edges = self.edges();
        let first = |id: u32| edges.iter().find(|e| e.unit_id == id && e.rising).map(|e| e.time_ps);
        let Some(conductor) = self.units.iter().find(|u| u.role == Role::Conductor) else {
            return BTreeMap::new();
        };
        let Some(reference) = first(conductor.unit_id) else {
            return BTreeMap::new();
        };
        self.units.iter().filter_map(|u| first(u.unit_id).map(|t| (u.unit_id, t - reference))).collect()
    }
}

fn event_cycle(e: &crate::exec::TraceEvent) -> u64 {
    use crate::exec::TraceEvent::*;
    match e {
        MuTrigger { cycle, .. } | SyncWait { cycle, .. } | SyncRelease { cycle, .. } | RegisterWrite { cycle, .. } | Halt { cycle } => *cycle,
    }
}

/// Applies a per-unit delay in picoseconds; the residual skew of each unit
/// becomes `skew + delay`. Units missing from `calibration` are unchanged.
pub fn deskew(trace: &EnsembleTrace, calibration: &BTreeMap<u32, i64>) -> EnsembleTrace {
    let mut out = trace.clone();
    for u in &mut out.units {
        u.skew_ps += calibration.get(&u.unit_id).copied().unwrap_or(0);
    }
    out
}

/// Calibration that cancels the configured skews.
pub fn skew_calibration(units: &[UnitConfig]) -> BTreeMap<u32, i64> {
    units.iter().map(|u| (u.unit_id, -u.clock_skew_ps)).collect()
}

/// Worst absolute edge misalignment between any two units.
pub fn worst_misalignment_ps(trace: &EnsembleTrace) -> i64 {
    let m = trace.misalignment_ps();
    let lo = m.values().copied().min().unwrap_or(0);
    let hi = m.values().copied().max().unwrap_or(0);
    hi - lo
}

/// Samples per cycle as a picosecond multiplier check.
const _: () = assert!(SAMPLES_PER_CYCLE as i64 * SAMPLE_PS == CYCLE_PS);
