// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

/// DC level generator with linear edges.
///
/// A new target starts a ramp from the current output level. Output sample
/// `j` of the ramp (0-based) is `start + (target - start) * (j + 1) / R`
/// with `R = ramp_cycles * 5`; `R = 0` gives a square edge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DcGenerator {
    pub ramp_samples: u32,
    level: f64,
    start: f64,
    target: f64,
    pos: u32,
}

impl DcGenerator {
    pub fn new(ramp_cycles: u32) -> Self {
        DcGenerator {
            ramp_samples: ramp_cycles * super::SAMPLES_PER_CYCLE as u32,
            ..Default::default()
        }
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn set_target(&mut self, target: f64) {
        if target != self.target {
            self.start = self.level;
            self.target = target;
            self.pos = 0;
        }
    }

    #[inline]
    pub fn next_sample(&mut self) -> f64 {
        if self.pos >= self.ramp_samples {
            self.level = self.target;
        } else {
            self.pos += 1;
            let r = self.ramp_samples as f64;
            self.level = self.start + (self.target - self.start) * (self.pos as f64 / r);
        }
        self.level
    }
}

/// Renders `n_samples` of the DC path heading for `target`.
pub fn render_dc(gen: &mut DcGenerator, target: f64, n_samples: usize) -> Vec<f64> {
    gen.set_target(target);
    (0..n_samples).map(|_| gen.next_sample()).collect()
}
