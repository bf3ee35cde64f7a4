// SPDX-License-Identifier: Apache-2.0

//! FFT measurements on complex baseband records.

use rustfft::FftPlanner;

use crate::synth::{Iq, SAMPLE_RATE_HZ};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rectangular,
    Hann,
}

fn window_weights(window: Window, n: usize) -> Vec<f64> {
    match window {
        Window::Rectangular => vec![1.0; n],
        Window::Hann => (0..n)
            .map(|k| 0.5 - 0.5 * (std::f64::consts::TAU * k as f64 / n as f64).cos())
            .collect(),
    }
}

/// `|X[k]|^2` of the windowed record, in FFT bin order.
pub fn power_spectrum(x: &[Iq], window: Window) -> Vec<f64> {
    let n = x.len();
    let w = window_weights(window, n);
    let mut buf: Vec<Iq> = x.iter().zip(&w).map(|(s, w)| s * *w).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter().map(|c| c.norm_sqr()).collect()
}

/// Signed frequency of bin `k` in an `n`-point FFT.
pub fn bin_frequency(k: usize, n: usize) -> f64 {
    let k = if k >= n.div_ceil(2) { k as f64 - n as f64 } else { k as f64 };
    k * SAMPLE_RATE_HZ / n as f64
}

/// Bin index nearest to a signed frequency.
pub fn frequency_bin(hz: f64, n: usize) -> usize {
    let k = (hz / SAMPLE_RATE_HZ * n as f64).round() as i64;
    k.rem_euclid(n as i64) as usize
}

pub fn peak_bin(power: &[f64]) -> usize {
    power
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bk, bp), (k, &p)| if p > bp { (k, p) } else { (bk, bp) })
        .0
}

/// Power summed over `bin - halfwidth ..= bin + halfwidth` (wrapping).
pub fn band_power(power: &[f64], bin: usize, halfwidth: usize) -> f64 {
    let n = power.len() as i64;
    (-(halfwidth as i64)..=halfwidth as i64)
        .map(|d| power[(bin as i64 + d).rem_euclid(n) as usize])
        .sum()
}

pub fn db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Tone frequency from a least-squares line through the unwrapped phase.
///
/// Unwrapping accumulates the phase step between adjacent samples, which is
/// unambiguous while `|f| < fs/2` and the record is clean.
pub fn phase_regression_frequency(x: &[Iq]) -> f64 {
    let n = x.len();
    assert!(n >= 2, "need at least two samples");
    let mut phase = Vec::with_capacity(n);
    let mut acc = x[0].arg();
    phase.push(acc);
    for w in x.windows(2) {
        acc += (w[1] * w[0].conj()).arg();
        phase.push(acc);
    }
    let mean_t = (n - 1) as f64 / 2.0;
    let mean_p = phase.iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, p) in phase.iter().enumerate() {
        let dt = t as f64 - mean_t;
        num += dt * (p - mean_p);
        den += dt * dt;
    }
    num / den / std::f64::consts::TAU * SAMPLE_RATE_HZ
}

/// Largest spur relative to the carrier, in dB, over all bins outside
/// `guard` bins of the carrier peak. Rectangular window; intended for
/// coherent (bin-centred) tones.
pub fn worst_spur_dbc(x: &[Iq], guard: usize) -> f64 {
    let p = power_spectrum(x, Window::Rectangular);
    let k0 = peak_bin(&p);
    let n = p.len();
    let carrier = p[k0];
    let mut worst = 0.0f64;
    for (k, &v) in p.iter().enumerate() {
        let d = (k as i64 - k0 as i64).rem_euclid(n as i64) as usize;
        if d.min(n - d) > guard {
            worst = worst.max(v);
        }
    }
    db(worst / carrier)
}
