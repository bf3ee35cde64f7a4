// SPDX-License-Identifier: Apache-2.0

//! Pulse envelopes and the envelope library.
//!
//! An envelope is a 4096-point table in `[-1, 1]`, stretched to the pulse
//! length by linear interpolation: sample `k` of an `n`-sample pulse reads
//! table position `k * 4095 / (n - 1)`, so the first and last samples land
//! exactly on the table endpoints. Id 0 is the rectangular envelope and
//! cannot be replaced.
//!
//! On disk a library is a JSON index plus one raw little-endian
//! `4096 x f64` file per envelope.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENVELOPE_LEN: usize = 4096;

#[derive(Debug, Error)]
pub enum EnvelopeError {
    #[error("envelope table must have {ENVELOPE_LEN} samples, got {0}")]
    BadLength(usize),
    #[error("envelope sample {index} = {value} is outside [-1, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("envelope id 0 is reserved for the rectangular envelope")]
    ReservedId,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("envelope index: {0}")]
    Index(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    id: u8,
    samples: Vec<f64>,
    rectangular: bool,
}

impl Envelope {
    pub fn rectangular() -> Self {
        Envelope {
            id: 0,
            samples: vec![1.0; ENVELOPE_LEN],
            rectangular: true,
        }
    }

    pub fn from_samples(id: u8, samples: Vec<f64>) -> Result<Self, EnvelopeError> {
        if samples.len() != ENVELOPE_LEN {
            return Err(EnvelopeError::BadLength(samples.len()));
        }
        if let Some((index, &value)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !(-1.0..=1.0).contains(*v))
        {
            return Err(EnvelopeError::OutOfRange { index, value });
        }
        let rectangular = samples.iter().all(|v| *v == 1.0);
        Ok(Envelope {
            id,
            samples,
            rectangular,
        })
    }

    /// Gaussian with standard deviation `sigma` as a fraction of the pulse
    /// length, centred in the table. Not renormalized at the edges.
    pub fn gaussian(id: u8, sigma: f64) -> Self {
        let mid = (ENVELOPE_LEN - 1) as f64 / 2.0;
        let s = sigma * (ENVELOPE_LEN - 1) as f64;
        let samples = (0..ENVELOPE_LEN)
            .map(|k| (-0.5 * ((k as f64 - mid) / s).powi(2)).exp())
            .collect();
        Envelope {
            id,
            samples,
            rectangular: false,
        }
    }

    /// Raised-cosine (Hann) window.
    pub fn hann(id: u8) -> Self {
        let n = (ENVELOPE_LEN - 1) as f64;
        let samples = (0..ENVELOPE_LEN)
            .map(|k| 0.5 - 0.5 * (std::f64::consts::TAU * k as f64 / n).cos())
            .collect();
        Envelope {
            id,
            samples,
            rectangular: false,
        }
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Interpolated value for sample `k` of an `n`-sample pulse.
    #[inline]
    pub fn value_at(&self, k: u64, n: u64) -> f64 {
        if self.rectangular {
            return 1.0;
        }
        if n <= 1 {
            return self.samples[0];
        }
        let last = (ENVELOPE_LEN - 1) as u64;
        // Integer part and remainder of k * 4095 / (n - 1), exactly.
        let num = k as u128 * last as u128;
        let den = (n - 1) as u128;
        let idx = (num / den) as usize;
        if idx >= ENVELOPE_LEN - 1 {
            return self.samples[ENVELOPE_LEN - 1];
        }
        let frac = (num % den) as f64 / den as f64;
        let a = self.samples[idx];
        let b = self.samples[idx + 1];
        a + (b - a) * frac
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    envelopes: Vec<IndexEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    id: u8,
    #[serde(default)]
    name: String,
    file: String,
}

/// Envelopes addressable by id. Always contains the rectangular envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeLibrary {
    envelopes: BTreeMap<u8, Envelope>,
}

impl Default for EnvelopeLibrary {
    fn default() -> Self {
        let mut envelopes = BTreeMap::new();
        envelopes.insert(0, Envelope::rectangular());
        EnvelopeLibrary { envelopes }
    }
}

impl EnvelopeLibrary {
    pub fn insert(&mut self, envelope: Envelope) -> Result<(), EnvelopeError> {
        if envelope.id == 0 {
            return Err(EnvelopeError::ReservedId);
        }
        self.envelopes.insert(envelope.id, envelope);
        Ok(())
    }

    pub fn get(&self, id: u8) -> Option<&Envelope> {
        self.envelopes.get(&id)
    }

    pub fn contains(&self, id: u8) -> bool {
        self.envelopes.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = u8> + '_ {
        self.envelopes.keys().copied()
    }

    /// Writes `index.json` and one table file per non-reserved envelope.
    pub fn save(&self, dir: &Path) -> Result<(), EnvelopeError> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        for env in self.envelopes.values().filter(|e| e.id != 0) {
            let file = format!("env_{:03}.f64", env.id);
            let bytes: Vec<u8> = env.samples.iter().flat_map(|v| v.to_le_bytes()).collect();
            fs::write(dir.join(&file), bytes)?;
            entries.push(IndexEntry {
                id: env.id,
                name: String::new(),
                file,
            });
        }
        let index = IndexFile {
            format: "qctl-envelopes".into(),
            version: 1,
            envelopes: entries,
        };
        fs::write(dir.join("index.json"), serde_json::to_vec_pretty(&index)?)?;
        Ok(())
    }

    /// Loads a library from an index file; table paths are relative to it.
    pub fn load(index_path: &Path) -> Result<Self, EnvelopeError> {
        let index: IndexFile = serde_json::from_slice(&fs::read(index_path)?)?;
        let base = index_path.parent().unwrap_or(Path::new("."));
        let mut lib = EnvelopeLibrary::default();
        for entry in index.envelopes {
            let bytes = fs::read(base.join(&entry.file))?;
            if bytes.len() != ENVELOPE_LEN * 8 {
                return Err(EnvelopeError::BadLength(bytes.len() / 8));
            }
            let samples = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            lib.insert(Envelope::from_samples(entry.id, samples)?)?;
        }
        Ok(lib)
    }
}
