//! Run directories: resolved config, payloads stamped with the config hash,
//! and a metadata file that holds everything time-dependent.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::verdict::Verdict;
use crate::CliError;

pub const CONFIG_FILE: &str = "config.resolved.toml";
pub const METADATA_FILE: &str = "metadata.json";
/// First line of every CSV payload.
pub const HASH_PREFIX: &str = "# config_hash=";
/// Overrides the default output root `./runs`.
pub const OUT_ROOT_ENV: &str = "SNSE_OUT_ROOT";

/// JSON payload wrapper.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub kind: String,
    pub config_hash: String,
    pub verdicts: Vec<Verdict>,
    pub data: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    pub config_hash: String,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub status: String,
    pub exit_code: i32,
    pub outputs: Vec<String>,
    pub message: Option<String>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// `--out`, then the config's `out`, then `$SNSE_OUT_ROOT/<command>-<hash>`,
/// then `runs/<command>-<hash>`.
pub fn resolve_out_dir(flag: Option<&Path>, config: &RunConfig, command: &str) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &config.out {
        return p.clone();
    }
    let root = std::env::var_os(OUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(format!("{command}-{}", &config.hash()[..12]))
}

pub struct RunDir {
    path: PathBuf,
    hash: String,
    outputs: Vec<String>,
}

impl RunDir {
    /// Creates the directory and writes the resolved config into it.
    pub fn create(path: &Path, config: &RunConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(path)?;
        std::fs::write(path.join(CONFIG_FILE), config.to_toml())?;
        Ok(Self {
            path: path.to_path_buf(),
            hash: config.hash(),
            outputs: vec![CONFIG_FILE.to_string()],
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_json<T: Serialize>(
        &mut self,
        name: &str,
        kind: &str,
        verdicts: &[Verdict],
        data: &T,
    ) -> Result<(), CliError> {
        let env = Envelope {
            kind: kind.to_string(),
            config_hash: self.hash.clone(),
            verdicts: verdicts.to_vec(),
            data,
        };
        let mut text = serde_json::to_string_pretty(&env).map_err(|e| CliError::Invalid(e.to_string()))?;
        text.push('\n');
        std::fs::write(self.file(name), text)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let mut w = self.csv_writer(name)?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    /// Opens a CSV payload for streaming; the hash line is already written.
    pub fn csv_writer(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let mut w = BufWriter::new(File::create(self.file(name))?);
        writeln!(w, "{HASH_PREFIX}{}", self.hash)?;
        self.outputs.push(name.to_string());
        Ok(w)
    }

    /// Registers a binary output written by other code.
    pub fn register(&mut self, name: &str) {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
    }

    pub fn write_metadata(&self, meta: &Metadata) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(meta).map_err(|e| CliError::Invalid(e.to_string()))?;
        text.push('\n');
        std::fs::write(self.file(METADATA_FILE), text)?;
        Ok(())
    }
}

/// Strips the hash line from a CSV payload; returns `(hash, body)`.
pub fn split_csv(text: &str) -> (Option<&str>, &str) {
    match text.strip_prefix(HASH_PREFIX) {
        Some(rest) => {
            let (hash, body) = rest.split_once('\n').unwrap_or((rest, ""));
            (Some(hash.trim()), body)
        }
        None => (None, text),
    }
}
