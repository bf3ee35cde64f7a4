// SPDX-License-Identifier: Apache-2.0

//! Per-channel direct digital synthesis and DSP chain.
//!
//! RF path: NCO quadrature -> envelope -> amplitude -> QMC -> predistortion
//! FIR -> skew delay -> DAC quantizer. DC path: trapezoid level generator ->
//! skew delay -> DAC quantizer. Arithmetic is double precision between the
//! 32-bit phase accumulator and the 16-bit quantizer.

mod dc;
mod dsp;
mod envelope;
mod modulator;
mod nco;
mod quantize;

pub use num_complex::Complex64 as Iq;

pub use dc::{render_dc, DcGenerator};
pub use dsp::{apply_qmc, ChannelDspConfig, DspConfig, DspConfigError, Fir, PathKind, QmcParams, SkewLine, MAX_FIR_TAPS, MAX_SKEW_SAMPLES};
pub use envelope::{Envelope, EnvelopeError, EnvelopeLibrary, ENVELOPE_LEN};
pub use modulator::SsbModulator;
pub use nco::{quadrature, Nco};
pub use quantize::{dequantize, quantize, quantize_block};

/// DAC sample rate.
pub const SAMPLE_RATE_HZ: f64 = 1e9;
/// Samples emitted per channel per instruction cycle.
pub const SAMPLES_PER_CYCLE: usize = 5;
/// Instruction cycle length.
pub const CYCLE_NS: u64 = 5;

/// One RF output sample: `amplitude * env(k) * (cos theta, sin theta)`.
///
/// `k` is the sample index within a pulse of `n` samples.
#[inline]
pub fn rf_sample(carrier: Iq, amplitude: f64, envelope: &Envelope, k: u64, n: u64) -> Iq {
    carrier * (amplitude * envelope.value_at(k, n))
}

/// Renders a whole RF pulse of `n_samples` starting from `nco`.
///
/// Returns the block and the NCO state after the last sample.
pub fn render_rf(nco: Nco, amplitude: f64, envelope: &Envelope, n_samples: usize) -> (Vec<Iq>, Nco) {
    let mut nco = nco;
    let n = n_samples as u64;
    let block = (0..n).map(|k| rf_sample(nco.step(), amplitude, envelope, k, n)).collect();
    (block, nco)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangular_dc_pulse() {
        let (block, _) = render_rf(Nco::default(), 1.0, &Envelope::rectangular(), 20);
        assert!(block.iter().all(|s| *s == Iq::new(1.0, 0.0)));
    }

    #[test]
    fn five_sample_pulse_hits_envelope_endpoints() {
        let table: Vec<f64> = (0..ENVELOPE_LEN).map(|k| 0.1 + 0.8 * k as f64 / 4095.0).collect();
        let env = Envelope::from_samples(3, table.clone()).unwrap();
        let (block, _) = render_rf(Nco::default(), 1.0, &env, 5);
        assert_eq!(block[0].re, table[0]);
        assert_eq!(block[4].re, table[4095]);
        // Linear table: interior points are exactly on the line.
        for (k, s) in block.iter().enumerate() {
            assert!((s.re - (0.1 + 0.8 * k as f64 / 4.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_peak_within_one_lsb() {
        let env = Envelope::gaussian(7, 0.15);
        let a = 0.6;
        let n = 401;
        let (block, _) = render_rf(Nco::new(ftw(37e6)), a, &env, n);
        let peak = block
            .iter()
            .map(|s| {
                let i = dequantize(quantize(s.re));
                let q = dequantize(quantize(s.im));
                (i * i + q * q).sqrt()
            })
            .fold(0.0, f64::max);
        let max_env = env.samples().iter().cloned().fold(0.0, f64::max);
        assert!((peak - a * max_env).abs() <= 2.0 / 32768.0, "peak={peak}");
    }

    fn ftw(hz: f64) -> u32 {
        crate::isa::ftw_from_hz(hz).unwrap()
    }
}
