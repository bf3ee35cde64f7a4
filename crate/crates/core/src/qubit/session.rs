// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::{PI, SQRT_2, TAU};

use rand::{Rng, RngExt};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{step_sample, BlochState, DriveSample, QubitParams, DT};
use crate::exec::{synth_adc, ReadoutSource, SampleFrame};
use crate::measure::{MuTrigger, ReadoutParams};
use crate::synth::{quantize, SAMPLES_PER_CYCLE};

/// Quasi-static detuning for one shot: Gaussian with
/// `sigma = 1 / (sqrt(2) pi T2*)`, giving a Ramsey envelope
/// `exp(-(t / T2*)^2)`. Zero when T2* is not configured.
pub fn dephase<R: Rng + ?Sized>(params: &QubitParams, rng: &mut R) -> f64 {
    match params.t2_star_s {
        Some(t2) => {
            let z: f64 = rng.sample(StandardNormal);
            z / (SQRT_2 * PI * t2)
        }
        None => 0.0,
    }
}

/// White frequency noise with phase diffusion `D = 1 / T2echo`: an idle
/// stretch of length `t` picks up a Gaussian phase of variance `2 D t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteNoise {
    pub diffusion: f64,
}

impl WhiteNoise {
    pub fn from_params(params: &QubitParams) -> Option<Self> {
        params.t2_echo_s.map(|t| WhiteNoise { diffusion: 1.0 / t })
    }

    /// Standard deviation of the phase picked up over `samples` samples.
    pub fn phase_sigma(&self, samples: u64) -> f64 {
        (2.0 * self.diffusion * samples as f64 * DT).sqrt()
    }

    /// Standard deviation of the per-sample frequency in Hz.
    pub fn frequency_sigma_hz(&self) -> f64 {
        self.phase_sigma(1) / (TAU * DT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Measurement {
    /// Projected state.
    pub true_bit: bool,
    /// What the readout chain reports.
    pub reported_bit: bool,
}

/// One shot of the qubit: state, noise realization and RNG stream.
///
/// Drive samples must arrive in order. Runs of exactly-zero drive are
/// folded into a single z rotation when the next nonzero sample or a
/// measurement arrives, so long idles cost O(1).
#[derive(Debug, Clone)]
pub struct QubitSession {
    params: QubitParams,
    state: BlochState,
    rng: ChaCha8Rng,
    static_hz: f64,
    white: Option<WhiteNoise>,
    pending_idle: u64,
    next_sample: u64,
    last: Option<Measurement>,
}

impl QubitSession {
    /// Draws the shot's quasi-static detuning from `rng` first.
    pub fn new(params: &QubitParams, mut rng: ChaCha8Rng) -> Self {
        let static_hz = dephase(params, &mut rng);
        QubitSession {
            params: params.clone(),
            state: BlochState::GROUND,
            rng,
            static_hz,
            white: WhiteNoise::from_params(params),
            pending_idle: 0,
            next_sample: 0,
            last: None,
        }
    }

    pub fn params(&self) -> &QubitParams {
        &self.params
    }

    pub fn static_detuning_hz(&self) -> f64 {
        self.static_hz
    }

    pub fn last_measurement(&self) -> Option<Measurement> {
        self.last
    }

    /// Current state with pending idle time applied.
    pub fn state(&mut self) -> BlochState {
        self.flush_idle();
        self.state
    }

    pub fn next_sample(&self) -> u64 {
        self.next_sample
    }

    fn flush_idle(&mut self) {
        if self.pending_idle == 0 {
            return;
        }
        let m = self.pending_idle;
        self.pending_idle = 0;
        let mut angle = TAU * self.static_hz * m as f64 * DT;
        if let Some(w) = self.white {
            let z: f64 = self.rng.sample(StandardNormal);
            angle += w.phase_sigma(m) * z;
        }
        self.state = self.state.rotate_z(angle);
    }

    pub fn idle(&mut self, samples: u64) {
        self.pending_idle += samples;
        self.next_sample += samples;
    }

    pub fn drive(&mut self, s: DriveSample) {
        if s.iq.re == 0.0 && s.iq.im == 0.0 {
            self.idle(1);
            return;
        }
        self.flush_idle();
        let mut d = self.static_hz;
        if let Some(w) = self.white {
            let z: f64 = self.rng.sample(StandardNormal);
            d += w.frequency_sigma_hz() * z;
        }
        self.state = step_sample(self.state, s, self.next_sample, &self.params, d);
        self.next_sample += 1;
    }

    /// Projective measurement followed by the symmetric readout error
    /// channel: the reported bit is correct with probability `(1 + V) / 2`.
    pub fn measure(&mut self) -> Measurement {
        self.flush_idle();
        let u: f64 = self.rng.random();
        let true_bit = u < self.state.p1();
        self.state = if true_bit { BlochState::EXCITED } else { BlochState::GROUND };
        let v: f64 = self.rng.random();
        let correct = v < (1.0 + self.params.readout_visibility) / 2.0;
        let m = Measurement {
            true_bit,
            reported_bit: true_bit == correct,
        };
        self.last = Some(m);
        m
    }

    /// ADC block for a readout window reporting `bit`.
    pub fn adc_for(&mut self, trigger: &MuTrigger, params: &ReadoutParams, bit: bool) -> Vec<i16> {
        let level = self.params.readout_levels[bit as usize];
        if self.params.adc_noise_rms == 0.0 {
            return synth_adc(trigger, params, level);
        }
        let clean = synth_adc(trigger, params, level);
        clean
            .into_iter()
            .map(|c| {
                let z: f64 = self.rng.sample(StandardNormal);
                quantize(crate::synth::dequantize(c) + self.params.adc_noise_rms * z)
            })
            .collect()
    }
}

impl ReadoutSource for QubitSession {
    fn observe(&mut self, frame: &SampleFrame) {
        let ch = &frame.channels[self.params.drive_channel as usize];
        debug_assert_eq!(self.next_sample, frame.cycle * SAMPLES_PER_CYCLE as u64);
        for k in 0..SAMPLES_PER_CYCLE {
            self.drive(DriveSample {
                iq: ch.analog[k],
                ftw: ch.ftw,
            });
        }
    }

    fn adc_block(&mut self, trigger: &MuTrigger, params: &ReadoutParams) -> Vec<i16> {
        let m = self.measure();
        self.adc_for(trigger, params, m.reported_bit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn visibility_mapping() {
        let p = QubitParams {
            readout_visibility: 0.3,
            ..QubitParams::default().noiseless()
        };
        let n = 100_000;
        let mut ones = 0;
        for shot in 0..n {
            let mut s = QubitSession::new(&p, substream(1, 0, shot));
            ones += s.measure().reported_bit as u32;
        }
        let mean = ones as f64 / n as f64;
        let sigma = (0.35f64 * 0.65 / n as f64).sqrt();
        assert!((mean - 0.35).abs() < 4.0 * sigma, "{mean}");
    }

    #[test]
    fn perfect_visibility_excited() {
        let p = QubitParams {
            readout_visibility: 1.0,
            ..QubitParams::default()
        };
        let mut s = QubitSession::new(&p, substream(2, 0, 0));
        s.state = BlochState::EXCITED;
        assert_eq!(
            s.measure(),
            Measurement {
                true_bit: true,
                reported_bit: true
            }
        );
    }

    #[test]
    fn idle_folding_matches_per_sample_without_white_noise() {
        let p = QubitParams {
            t2_echo_s: None,
            ..QubitParams::default()
        };
        let mut a = QubitSession::new(&p, substream(3, 0, 0));
        let mut b = a.clone();
        a.state = BlochState { x: 1.0, y: 0.0, z: 0.0 };
        b.state = a.state;
        a.idle(12345);
        let mut r = b.state;
        for _ in 0..12345 {
            r = r.rotate_z(TAU * b.static_hz * DT);
        }
        let sa = a.state();
        assert!((sa.x - r.x).abs() < 1e-9 && (sa.y - r.y).abs() < 1e-9);
    }

    #[test]
    fn static_detuning_spread() {
        let p = QubitParams::default();
        let n = 20_000;
        let var = (0..n)
            .map(|shot| QubitSession::new(&p, substream(4, 0, shot)).static_detuning_hz().powi(2))
            .sum::<f64>()
            / n as f64;
        let sigma = 1.0 / (SQRT_2 * PI * 1.2e-6);
        assert!((var.sqrt() / sigma - 1.0).abs() < 0.02);
    }
}
