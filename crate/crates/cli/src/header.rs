// SPDX-License-Identifier: Apache-2.0

//! Provenance header stamped on every output file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL: &str = "qctl";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const FORMAT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub format_version: u32,
    pub command: String,
    pub seed: u64,
    /// Input file name to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
}

impl Header {
    pub fn new(command: &str, seed: u64) -> Self {
        Header {
            tool: TOOL,
            version: VERSION,
            format_version: FORMAT_VERSION,
            command: command.into(),
            seed,
            inputs: BTreeMap::new(),
        }
    }

    /// Reads an input file and records its hash under the given path.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("header serializes")
    }

    /// `#`-prefixed lines for CSV files.
    pub fn csv_comment(&self) -> String {
        let mut s = format!(
            "# tool={} version={} format_version={} command={} seed={}\n",
            self.tool, self.version, self.format_version, self.command, self.seed
        );
        for (name, h) in &self.inputs {
            let _ = writeln!(s, "# input {name} sha256={h}");
        }
        s
    }
}

/// Output directory helper.
pub struct OutDir {
    pub root: PathBuf,
    pub written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.root.join(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.written.push(p.clone());
        Ok(p)
    }

    /// JSON document with the header as its first member.
    pub fn write_json(&mut self, name: &str, header: &Header, body: serde_json::Value) -> Result<PathBuf> {
        let mut doc = serde_json::Map::new();
        doc.insert("header".into(), header.json());
        match body {
            serde_json::Value::Object(m) => doc.extend(m),
            other => {
                doc.insert("data".into(), other);
            }
        }
        let text = serde_json::to_string_pretty(&serde_json::Value::Object(doc))? + "\n";
        self.write(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &Header, body: &str) -> Result<PathBuf> {
        let text = header.csv_comment() + body;
        self.write(name, text.as_bytes())
    }

    /// Binary formats without a metadata slot get a `.meta.json` sidecar.
    pub fn write_binary_with_sidecar(&mut self, name: &str, header: &Header, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.write(name, bytes)?;
        let meta = serde_json::json!({"file": name, "sha256": sha256_hex(bytes)});
        self.write_json(&format!("{name}.meta.json"), header, meta)?;
        Ok(p)
    }
}
