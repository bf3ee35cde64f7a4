// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::{Iq, QmcParams};

/// Idealized analog I/Q modulator with gain and phase imbalance and LO
/// leakage, seen at baseband:
///
/// ```text
/// I' = I + c_i
/// Q' = g (Q cos phi + I sin phi) + c_q
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsbModulator {
    pub gain: f64,
    pub phase_skew: f64,
    pub lo_leakage: [f64; 2],
}

impl Default for SsbModulator {
    fn default() -> Self {
        SsbModulator {
            gain: 1.0,
            phase_skew: 0.0,
            lo_leakage: [0.0; 2],
        }
    }
}

impl SsbModulator {
    pub fn new(gain: f64, phase_skew: f64) -> Self {
        SsbModulator {
            gain,
            phase_skew,
            lo_leakage: [0.0; 2],
        }
    }

    fn matrix(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.phase_skew.sin_cos();
        [[1.0, 0.0], [self.gain * s, self.gain * c]]
    }

    #[inline]
    pub fn apply(&self, x: Iq) -> Iq {
        let m = self.matrix();
        Iq::new(
            m[0][0] * x.re + m[0][1] * x.im + self.lo_leakage[0],
            m[1][0] * x.re + m[1][1] * x.im + self.lo_leakage[1],
        )
    }

    pub fn apply_block(&self, block: &[Iq]) -> Vec<Iq> {
        block.iter().map(|&x| self.apply(x)).collect()
    }

    /// QMC parameters that undo this modulator: `M^-1 x - M^-1 c`.
    pub fn correction(&self) -> QmcParams {
        let m = self.matrix();
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let inv = [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]];
        let c = self.lo_leakage;
        QmcParams {
            matrix: inv,
            dc_offset: [
                -(inv[0][0] * c[0] + inv[0][1] * c[1]),
                -(inv[1][0] * c[0] + inv[1][1] * c[1]),
            ],
        }
    }
}
