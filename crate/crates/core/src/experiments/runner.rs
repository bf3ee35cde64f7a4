// SPDX-License-Identifier: Apache-2.0

use rayon::prelude::*;
use thiserror::Error;

use crate::exec::{run_until_halt, ConfigError, Controller, ControllerConfig, DeadlockError, NullSink, ReadoutSource, SampleFrame};
use crate::isa::{Opcode, Program};
use crate::measure::{MeasureError, MeasurementUnit, MuTrigger, RawCapture, ReadoutParams, ShotOutcome, ShotStatistics};
use crate::qubit::{BlochState, DriveSample, QubitParams, QubitSession};
use crate::rng::substream;
use crate::synth::{Iq, SAMPLES_PER_CYCLE};

/// Shots per work item; fixed so floating-point sums do not depend on the
/// thread count.
const SHOT_CHUNK: u64 = 64;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] DeadlockError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Aggregate of a Monte Carlo point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub stats: ShotStatistics,
    pub outcomes: Vec<ShotOutcome>,
    /// Mean `|1>` population at program end, before any further readout.
    pub mean_final_p1: f64,
    /// Raw blocks of the last `capture_capacity` readouts, in shot order.
    pub capture: RawCapture,
}

impl PointResult {
    /// Fraction of shots reporting 1 on `bit`.
    pub fn p1(&self, bit: u8) -> f64 {
        self.stats.mean(bit).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TapeItem {
    Idle(u64),
    Drive(Vec<DriveSample>),
    Readout(MuTrigger, ReadoutParams),
}

/// Drive and readout sequence of a program whose timing does not depend on
/// measurement results.
#[derive(Debug, Clone, Default, PartialEq)]
struct Tape {
    items: Vec<TapeItem>,
}

struct TapeRecorder {
    channel: usize,
    tape: Tape,
}

impl TapeRecorder {
    fn push_sample(&mut self, s: DriveSample) {
        let items = &mut self.tape.items;
        if s.iq == Iq::new(0.0, 0.0) {
            match items.last_mut() {
                Some(TapeItem::Idle(n)) => *n += 1,
                _ => items.push(TapeItem::Idle(1)),
            }
        } else {
            match items.last_mut() {
                Some(TapeItem::Drive(v)) => v.push(s),
                _ => items.push(TapeItem::Drive(vec![s])),
            }
        }
    }
}

impl ReadoutSource for TapeRecorder {
    fn observe(&mut self, frame: &SampleFrame) {
        let ch = frame.channels[self.channel];
        for k in 0..SAMPLES_PER_CYCLE {
            self.push_sample(DriveSample {
                iq: ch.analog[k],
                ftw: ch.ftw,
            });
        }
    }

    fn adc_block(&mut self, trigger: &MuTrigger, params: &ReadoutParams) -> Vec<i16> {
        self.tape.items.push(TapeItem::Readout(*trigger, *params));
        vec![0; params.window_samples()]
    }
}

/// Runs programs against the qubit model, shot by shot.
///
/// Each shot draws from its own substream keyed by `(seed, point, shot)`,
/// so results do not depend on thread count or scheduling.
#[derive(Debug, Clone)]
pub struct ShotRunner {
    pub config: ControllerConfig,
    pub qubit: QubitParams,
    pub seed: u64,
    pub capture_capacity: usize,
}

impl ShotRunner {
    pub fn new(config: ControllerConfig, qubit: QubitParams, seed: u64) -> Self {
        ShotRunner {
            config,
            qubit,
            seed,
            capture_capacity: 0,
        }
    }

    /// Noiseless final state. Readouts inside the program still collapse.
    pub fn ideal_state(&self, program: &Program) -> Result<BlochState, RunError> {
        let mut ctrl = Controller::load(program, &self.config)?;
        let mut mu = MeasurementUnit::new(self.config.readout_table.clone(), 0);
        let params = QubitParams {
            readout_visibility: 1.0,
            ..self.qubit.noiseless()
        };
        let mut session = QubitSession::new(&params, substream(self.seed, 0, 0));
        run_until_halt(&mut ctrl, &mut mu, &mut session, &mut NullSink, None)?;
        Ok(session.state())
    }

    /// Whether shots may replay one recorded drive sequence.
    pub fn replayable(program: &Program) -> bool {
        !program.has_conditionals() && !program.instructions().any(|i| i.opcode == Opcode::Sync)
    }

    fn record(&self, program: &Program) -> Result<Tape, RunError> {
        let mut ctrl = Controller::load(program, &self.config)?;
        let mut mu = MeasurementUnit::new(self.config.readout_table.clone(), 0);
        let mut rec = TapeRecorder {
            channel: self.qubit.drive_channel as usize,
            tape: Tape::default(),
        };
        run_until_halt(&mut ctrl, &mut mu, &mut rec, &mut NullSink, None)?;
        Ok(rec.tape)
    }

    fn replay_shot(&self, tape: &Tape, mu: &mut MeasurementUnit, point: u64, shot: u64) -> Result<(ShotOutcome, f64), RunError> {
        let mut s = QubitSession::new(&self.qubit, substream(self.seed, point, shot));
        for item in &tape.items {
            match item {
                TapeItem::Idle(n) => s.idle(*n),
                TapeItem::Drive(v) => v.iter().for_each(|d| s.drive(*d)),
                TapeItem::Readout(t, p) => {
                    let adc = s.adc_block(t, p);
                    mu.handle(t, adc)?;
                }
            }
        }
        Ok((mu.end_shot(), s.state().p1()))
    }

    fn engine_shot(&self, loaded: &Controller, mu: &mut MeasurementUnit, point: u64, shot: u64) -> Result<(ShotOutcome, f64), RunError> {
        let mut ctrl = loaded.clone();
        let mut s = QubitSession::new(&self.qubit, substream(self.seed, point, shot));
        let summary = run_until_halt(&mut ctrl, mu, &mut s, &mut NullSink, None)?;
        Ok((summary.outcome, s.state().p1()))
    }

    /// `shots` Monte Carlo shots of `program` as sweep point `point`.
    pub fn monte_carlo(&self, program: &Program, point: u64, shots: u64) -> Result<PointResult, RunError> {
        self.monte_carlo_with(program, point, shots, Self::replayable(program))
    }

    /// As [`ShotRunner::monte_carlo`], choosing the replay path explicitly.
    /// Replay of a program that is not replayable is refused by falling back
    /// to the engine.
    pub fn monte_carlo_with(&self, program: &Program, point: u64, shots: u64, replay: bool) -> Result<PointResult, RunError> {
        let replay = replay && Self::replayable(program);
        let loaded = Controller::load(program, &self.config)?;
        let tape = if replay { Some(self.record(program)?) } else { None };
        let chunk = SHOT_CHUNK;
        let starts: Vec<u64> = (0..shots).step_by(chunk as usize).collect();
        let parts = starts
            .par_iter()
            .map(|&first| {
                let last = (first + chunk).min(shots);
                let mut mu = MeasurementUnit::new(self.config.readout_table.clone(), self.capture_capacity);
                mu.set_shot_index(first);
                let mut outcomes = Vec::with_capacity((last - first) as usize);
                let mut p1 = 0.0;
                for shot in first..last {
                    let (o, p) = match &tape {
                        Some(t) => self.replay_shot(t, &mut mu, point, shot)?,
                        None => self.engine_shot(&loaded, &mut mu, point, shot)?,
                    };
                    outcomes.push(o);
                    p1 += p;
                }
                Ok((mu, outcomes, p1))
            })
            .collect::<Result<Vec<_>, RunError>>()?;
        let mut stats = ShotStatistics::default();
        let mut outcomes = Vec::with_capacity(shots as usize);
        let mut capture = RawCapture::new(self.capture_capacity);
        let mut p1 = 0.0;
        for (mu, o, p) in parts {
            stats.merge(&mu.stats).expect("units share one configuration");
            outcomes.extend(o);
            p1 += p;
            for e in mu.capture.entries() {
                capture.push(e.clone());
            }
        }
        Ok(PointResult {
            stats,
            outcomes,
            mean_final_p1: if shots == 0 { f64::NAN } else { p1 / shots as f64 },
            capture,
        })
    }
}
