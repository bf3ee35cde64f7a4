// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use super::{Controller, MeasurementRegister, SampleFrame, TraceSink};
use crate::measure::{MeasureError, MeasurementUnit, MuTrigger, ReadoutMode, ReadoutParams, ShotOutcome};
use crate::synth::{quadrature, quantize};

/// Supplies the ADC signal for readout windows and observes the drive.
pub trait ReadoutSource {
    /// Called with each frame after its triggers have been served.
    fn observe(&mut self, _frame: &SampleFrame) {}

    /// ADC samples for the window that starts with `trigger`.
    fn adc_block(&mut self, trigger: &MuTrigger, params: &ReadoutParams) -> Vec<i16>;
}

/// Fixed signal level per readout slot (zero for unlisted slots).
///
/// Charge-sensing slots see a constant; reflectometry slots see a tone at
/// the slot's readout frequency on the absolute sample timebase.
#[derive(Debug, Clone, Default)]
pub struct ConstantStimulus {
    pub levels: Vec<f64>,
}

impl ReadoutSource for ConstantStimulus {
    fn adc_block(&mut self, trigger: &MuTrigger, params: &ReadoutParams) -> Vec<i16> {
        let level = self.levels.get(trigger.slot as usize).copied().unwrap_or(0.0);
        synth_adc(trigger, params, level)
    }
}

/// Noise-free ADC block at `level` for a readout window.
pub(crate) fn synth_adc(trigger: &MuTrigger, params: &ReadoutParams, level: f64) -> Vec<i16> {
    let n = params.window_samples();
    match params.mode {
        ReadoutMode::ChargeSensing => vec![quantize(level); n],
        ReadoutMode::Reflectometry => {
            let start = trigger.start_sample();
            (0..n as u64)
                .map(|k| quantize(level * quadrature(params.readout_ftw.wrapping_mul((start + k) as u32)).re))
                .collect()
        }
    }
}

#[derive(Debug, Error)]
pub enum DeadlockError {
    #[error("deadlock at cycle {cycle}: every live channel waits on SYNC and no trigger edge remains")]
    Deadlock { cycle: u64 },
    #[error("cycle limit {0} reached before halt")]
    CycleLimit(u64),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub cycles: u64,
    pub meas_reg: MeasurementRegister,
    pub outcome: ShotOutcome,
}

/// Runs one shot to completion.
///
/// Each RDO trigger is served on its start cycle: the source produces the
/// ADC block, the unit discriminates it and the result is scheduled for the
/// last window cycle. The source then observes the frame.
pub fn run_until_halt(
    ctrl: &mut Controller,
    mu: &mut MeasurementUnit,
    source: &mut dyn ReadoutSource,
    sink: &mut dyn TraceSink,
    max_cycles: Option<u64>,
) -> Result<RunSummary, DeadlockError> {
    let mut frame = SampleFrame::default();
    let start = ctrl.state.cycle_counter;
    while !ctrl.is_halted() {
        let cycle = ctrl.state.cycle_counter;
        if ctrl.all_live_blocked() && !ctrl.trigger_source().has_edge_from(cycle) {
            return Err(DeadlockError::Deadlock { cycle });
        }
        if max_cycles.is_some_and(|m| cycle - start >= m) {
            return Err(DeadlockError::CycleLimit(cycle - start));
        }
        let mut err = None;
        ctrl.step_with(&mut frame, |t| {
            let params = match mu.params(t.slot) {
                Ok(p) => *p,
                Err(e) => {
                    err = Some(e);
                    return None;
                }
            };
            let adc = source.adc_block(t, &params);
            match mu.handle(t, adc) {
                Ok(r) => Some(r),
                Err(e) => {
                    err = Some(e);
                    None
                }
            }
        });
        if let Some(e) = err {
            return Err(e.into());
        }
        source.observe(&frame);
        for e in ctrl.drain_events() {
            sink.event(&e);
        }
        sink.frame(&frame);
    }
    Ok(RunSummary {
        cycles: ctrl.state.cycle_counter - start,
        meas_reg: ctrl.state.meas_reg,
        outcome: mu.end_shot(),
    })
}
