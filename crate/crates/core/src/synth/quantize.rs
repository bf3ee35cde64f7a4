// SPDX-License-Identifier: Apache-2.0

use super::Iq;

const SCALE: f64 = 32768.0;

/// DAC code for a full-scale fraction, round half to even, saturating.
#[inline]
pub fn quantize(x: f64) -> i16 {
    (x * SCALE).round_ties_even().clamp(-32768.0, 32767.0) as i16
}

#[inline]
pub fn dequantize(code: i16) -> f64 {
    code as f64 / SCALE
}

pub fn quantize_block(block: &[Iq]) -> Vec<(i16, i16)> {
    block.iter().map(|s| (quantize(s.re), quantize(s.im))).collect()
}
