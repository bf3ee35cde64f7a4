// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Register bits written during one shot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotOutcome {
    pub bits: u32,
    pub valid: u32,
}

impl ShotOutcome {
    pub fn set(&mut self, bit: u8, value: bool) {
        let m = 1u32 << bit;
        self.valid |= m;
        if value {
            self.bits |= m;
        } else {
            self.bits &= !m;
        }
    }

    pub fn get(&self, bit: u8) -> Option<bool> {
        let m = 1u32 << bit;
        (self.valid & m != 0).then_some(self.bits & m != 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot merge statistics with different joint-pair configurations")]
pub struct StatsMergeError;

/// Per-bit outcome counts and 2x2 joint tables for configured bit pairs.
///
/// A bit contributes to its counts only in shots that wrote it; a joint
/// table counts shots that wrote both of its bits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotStatistics {
    shots: u64,
    count0: Vec<u64>,
    count1: Vec<u64>,
    pairs: Vec<(u8, u8)>,
    joint: Vec<[[u64; 2]; 2]>,
}

impl ShotStatistics {
    pub fn with_pairs(pairs: &[(u8, u8)]) -> Self {
        ShotStatistics {
            pairs: pairs.to_vec(),
            joint: vec![[[0; 2]; 2]; pairs.len()],
            ..Default::default()
        }
    }

    fn ensure(&mut self) {
        if self.count0.is_empty() {
            self.count0 = vec![0; 32];
            self.count1 = vec![0; 32];
        }
    }

    pub fn accumulate(&mut self, o: &ShotOutcome) {
        self.ensure();
        self.shots += 1;
        for b in 0..32u8 {
            match o.get(b) {
                Some(true) => self.count1[b as usize] += 1,
                Some(false) => self.count0[b as usize] += 1,
                None => {}
            }
        }
        for (t, &(a, b)) in self.joint.iter_mut().zip(&self.pairs) {
            if let (Some(x), Some(y)) = (o.get(a), o.get(b)) {
                t[x as usize][y as usize] += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &ShotStatistics) -> Result<(), StatsMergeError> {
        if self.pairs != other.pairs {
            return Err(StatsMergeError);
        }
        if other.count0.is_empty() {
            return Ok(());
        }
        self.ensure();
        self.shots += other.shots;
        for b in 0..32 {
            self.count0[b] += other.count0[b];
            self.count1[b] += other.count1[b];
        }
        for (t, o) in self.joint.iter_mut().zip(&other.joint) {
            for x in 0..2 {
                for y in 0..2 {
                    t[x][y] += o[x][y];
                }
            }
        }
        Ok(())
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    pub fn counts(&self, bit: u8) -> (u64, u64) {
        if self.count0.is_empty() {
            return (0, 0);
        }
        (self.count0[bit as usize], self.count1[bit as usize])
    }

    /// Fraction of ones among shots that wrote `bit`.
    pub fn mean(&self, bit: u8) -> Option<f64> {
        let (c0, c1) = self.counts(bit);
        (c0 + c1 > 0).then(|| c1 as f64 / (c0 + c1) as f64)
    }

    pub fn pairs(&self) -> &[(u8, u8)] {
        &self.pairs
    }

    pub fn joint(&self, a: u8, b: u8) -> Option<[[u64; 2]; 2]> {
        self.pairs.iter().position(|&p| p == (a, b)).map(|i| self.joint[i])
    }

    /// Export document: counts and means for every bit that was written.
    pub fn to_json(&self) -> serde_json::Value {
        let bits: Vec<_> = (0..32u8)
            .filter_map(|b| {
                let (c0, c1) = self.counts(b);
                (c0 + c1 > 0).then(|| {
                    serde_json::json!({"bit": b, "count0": c0, "count1": c1, "mean": self.mean(b)})
                })
            })
            .collect();
        let joint: Vec<_> = self
            .pairs
            .iter()
            .zip(&self.joint)
            .map(|(&(a, b), t)| serde_json::json!({"bits": [a, b], "table": t}))
            .collect();
        serde_json::json!({"shots": self.shots, "bits": bits, "joint": joint})
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(pairs: &[(u8, bool)]) -> ShotOutcome {
        let mut o = ShotOutcome::default();
        for &(b, v) in pairs {
            o.set(b, v);
        }
        o
    }

    #[test]
    fn all_ones() {
        let mut s = ShotStatistics::default();
        for _ in 0..1000 {
            s.accumulate(&outcome(&[(0, true)]));
        }
        assert_eq!(s.counts(0), (0, 1000));
        assert_eq!(s.mean(0), Some(1.0));
        assert_eq!(s.mean(1), None);
    }

    #[test]
    fn correlated_bits_fill_diagonal() {
        let mut s = ShotStatistics::with_pairs(&[(0, 1)]);
        for k in 0..100 {
            let v = k % 3 == 0;
            s.accumulate(&outcome(&[(0, v), (1, v)]));
        }
        let t = s.joint(0, 1).unwrap();
        assert_eq!(t[0][1] + t[1][0], 0);
        assert_eq!(t[1][1] + t[0][0], 100);
        assert_eq!(t[1][0] + t[1][1], s.counts(0).1);
    }

    #[test]
    fn merge_requires_same_pairs() {
        let mut a = ShotStatistics::with_pairs(&[(0, 1)]);
        let b = ShotStatistics::with_pairs(&[(1, 2)]);
        assert_eq!(a.merge(&b), Err(StatsMergeError));
    }

    #[test]
    fn later_write_wins() {
        let o = outcome(&[(4, true), (4, false)]);
        assert_eq!(o.get(4), Some(false));
    }
}
