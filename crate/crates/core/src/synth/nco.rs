// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::Iq;

/// Numerically controlled oscillator with a 32-bit phase accumulator.
///
/// The instantaneous phase is `2pi * acc / 2^32 + 2pi * offset / 2^16`.
/// The offset is never folded into the accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nco {
    pub phase_acc: u32,
    pub ftw: u32,
    pub phase_offset: u16,
}

impl Nco {
    pub fn new(ftw: u32) -> Self {
        Nco {
            phase_acc: 0,
            ftw,
            phase_offset: 0,
        }
    }

    /// Phase as a fraction of a turn scaled to 2^32.
    #[inline]
    pub fn phase(&self) -> u32 {
        self.phase_acc.wrapping_add((self.phase_offset as u32) << 16)
    }

    /// Quadrature pair at the current phase, then advance one sample.
    #[inline]
    pub fn step(&mut self) -> Iq {
        let out = quadrature(self.phase());
        self.advance(1);
        out
    }

    #[inline]
    pub fn advance(&mut self, samples: u32) {
        self.phase_acc = self.phase_acc.wrapping_add(self.ftw.wrapping_mul(samples));
    }
}

/// `(cos, sin)` of `2pi * phase / 2^32`.
///
/// The quadrant is taken from the top two bits so that multiples of a
/// quarter turn are exact.
#[inline]
pub fn quadrature(phase: u32) -> Iq {
    let quadrant = phase >> 30;
    let rem = phase & 0x3fff_ffff;
    let (s, c) = (rem as f64 * (FRAC_PI_2 / 1073741824.0)).sin_cos();
    match quadrant {
        0 => Iq::new(c, s),
        1 => Iq::new(-s, c),
        2 => Iq::new(-c, -s),
        _ => Iq::new(s, -c),
    }
}
