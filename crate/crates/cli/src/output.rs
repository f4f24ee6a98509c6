use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use valdesign::io::{read_design, DesignFile, FileMeta, SCHEMA_VERSION};

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Canonical description of a run: command, arguments and content hashes
/// of the input files (never their paths), so that the hash depends only
/// on what was computed.
pub struct RunRecord {
    pub config: Value,
    pub hash: String,
    pub seed: u64,
}

impl RunRecord {
    pub fn new<A: Serialize>(command: &str, args: &A, inputs: &[(&str, &Path)], seed: u64) -> Result<Self> {
        let mut files = serde_json::Map::new();
        for (name, path) in inputs {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            files.insert((*name).to_string(), Value::String(sha256_hex(&bytes)));
        }
        let config = json!({
            "command": command,
            "args": serde_json::to_value(args)?,
            "inputs": files,
            "schema": SCHEMA_VERSION,
        });
        let hash = sha256_hex(config.to_string().as_bytes());
        Ok(RunRecord { config, hash, seed })
    }

    pub fn meta(&self) -> FileMeta {
        FileMeta::new(self.hash.clone(), self.seed)
    }

    /// Writes `<out>.json` next to the CSV output.
    pub fn write_sidecar<R: Serialize>(&self, out: Option<&Path>, result: &R) -> Result<()> {
        let Some(out) = out else { return Ok(()) };
        let doc = json!({
            "schema": SCHEMA_VERSION,
            "config_hash": self.hash,
            "seed": self.seed,
            "config": self.config,
            "result": serde_json::to_value(result)?,
        });
        let path = sidecar_path(out);
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Opens `out`, or standard output when no path is given.
pub fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn load_design(path: &Path) -> Result<DesignFile> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_design(f).with_context(|| format!("reading design {}", path.display()))
}
