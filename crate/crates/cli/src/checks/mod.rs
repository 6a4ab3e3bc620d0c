//! Experiment drivers shared by the subcommands and the acceptance suite.
//! Each returns the data to persist together with its verdicts.

pub mod balance;
pub mod elliptic;
pub mod oracle;
pub mod sweep;

use serde::Serialize;

use crate::verdict::Verdict;
use crate::CliError;

/// What a driver produced; written as `<kind>.json` plus the listed CSVs.
pub struct Outcome {
    pub kind: String,
    pub verdicts: Vec<Verdict>,
    pub data: serde_json::Value,
    pub csvs: Vec<(String, String)>,
    /// Set when the driver stopped on a numerical failure after producing
    /// partial results.
    pub failure: Option<CliError>,
}

impl Outcome {
    pub fn new(kind: &str, verdicts: Vec<Verdict>, data: &impl Serialize) -> Self {
        Self {
            kind: kind.to_string(),
            verdicts,
            data: serde_json::to_value(data).expect("payload serializes"),
            csvs: Vec::new(),
            failure: None,
        }
    }

    pub fn with_csv(mut self, name: &str, body: String) -> Self {
        self.csvs.push((name.to_string(), body));
        self
    }
}

pub(crate) fn csv_string(write: impl FnOnce(&mut Vec<u8>) -> snse_core::Result<()>) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

/// `{:e}` for CSV cells.
pub(crate) fn e(x: f64) -> String {
    format!("{x:e}")
}
