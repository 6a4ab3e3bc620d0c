//! Plain-text verdict summary and CSV consolidation of a run directory.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::RunConfig;
use crate::output::{split_csv, Envelope, Metadata, CONFIG_FILE, METADATA_FILE};
use crate::verdict::{Status, Verdict};
use crate::CliError;

pub const REPORT_DIR: &str = "report";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const VERDICTS_FILE: &str = "verdicts.csv";
pub const VERDICTS_CSV_HEADER: &str = "source,criterion,status,value,threshold,detail";

#[derive(Debug, Default)]
pub struct Report {
    pub config_hash: Option<String>,
    /// `(source file, verdict)` from every payload.
    pub criteria: Vec<(String, Verdict)>,
    pub integrity: Vec<Verdict>,
    pub gaps: Vec<String>,
    pub consolidated: Vec<String>,
}

impl Report {
    pub fn text(&self, dir: &Path) -> String {
        let mut s = String::new();
        writeln!(s, "run directory: {}", dir.display()).unwrap();
        writeln!(s, "config hash: {}", self.config_hash.as_deref().unwrap_or("unknown")).unwrap();
        let count = |st: Status| self.criteria.iter().filter(|(_, v)| v.status == st).count();
        writeln!(
            s,
            "criteria: {} ({} pass, {} fail, {} flagged)",
            self.criteria.len(),
            count(Status::Pass),
            count(Status::Fail),
            count(Status::Flagged)
        )
        .unwrap();
        for (src, v) in &self.criteria {
            writeln!(s, "  {} [{src}]", v.line()).unwrap();
        }
        writeln!(s, "integrity:").unwrap();
        if self.integrity.is_empty() {
            writeln!(s, "  all payload hashes match").unwrap();
        }
        for v in &self.integrity {
            writeln!(s, "  {}", v.line()).unwrap();
        }
        writeln!(s, "gaps: {}", self.gaps.len()).unwrap();
        for g in &self.gaps {
            writeln!(s, "  {g}").unwrap();
        }
        s
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn mismatch(file: &str, found: Option<&str>) -> Verdict {
    Verdict::new(
        format!("integrity {file}"),
        Status::Flagged,
        match found {
            Some(h) => format!("config hash {h} does not match the resolved config"),
            None => "payload carries no config hash".to_string(),
        },
    )
}

/// Reads `dir`, writes `dir/report/{summary.txt, verdicts.csv, *.csv}` and
/// prints the summary.
pub fn report(dir: &Path) -> Result<Report, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Invalid(format!("{} is not a directory", dir.display())));
    }
    let mut rep = Report::default();
    match std::fs::read_to_string(dir.join(CONFIG_FILE)) {
        Ok(text) => match RunConfig::parse(&text) {
            Ok(cfg) => rep.config_hash = Some(cfg.hash()),
            Err(e) => rep.gaps.push(format!("{CONFIG_FILE} does not parse: {e}")),
        },
        Err(_) => rep.gaps.push(format!("{CONFIG_FILE} is missing")),
    }
    let expected = rep.config_hash.clone();
    let matches = |h: Option<&str>| expected.is_none() || h == expected.as_deref();

    if let Ok(text) = std::fs::read_to_string(dir.join(METADATA_FILE)) {
        match serde_json::from_str::<Metadata>(&text) {
            Ok(meta) => {
                if !matches(Some(&meta.config_hash)) {
                    rep.integrity.push(mismatch(METADATA_FILE, Some(&meta.config_hash)));
                }
                for o in &meta.outputs {
                    if !dir.join(o).exists() {
                        rep.gaps.push(format!("{o} is listed in {METADATA_FILE} but missing"));
                    }
                }
                if meta.exit_code != 0 {
                    rep.gaps.push(format!(
                        "run ended with exit code {}: {}",
                        meta.exit_code,
                        meta.message.as_deref().unwrap_or("")
                    ));
                }
            }
            Err(e) => rep.gaps.push(format!("{METADATA_FILE} does not parse: {e}")),
        }
    }

    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_ok_and(|t| t.is_file()))
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    let out = dir.join(REPORT_DIR);
    std::fs::create_dir_all(&out)?;
    for name in &names {
        if name == METADATA_FILE {
            continue;
        }
        if name.ends_with(".json") {
            let text = std::fs::read_to_string(dir.join(name))?;
            match serde_json::from_str::<Envelope<serde_json::Value>>(&text) {
                Ok(env) => {
                    if !matches(Some(&env.config_hash)) {
                        rep.integrity.push(mismatch(name, Some(&env.config_hash)));
                    }
                    rep.criteria.extend(env.verdicts.into_iter().map(|v| (name.clone(), v)));
                }
                Err(e) => rep.gaps.push(format!("{name} is not a result payload: {e}")),
            }
        } else if name.ends_with(".csv") {
            let text = std::fs::read_to_string(dir.join(name))?;
            let (hash, body) = split_csv(&text);
            if hash.is_none() || !matches(hash) {
                rep.integrity.push(mismatch(name, hash));
            }
            std::fs::write(out.join(name), body)?;
            rep.consolidated.push(name.clone());
        }
    }

    let mut csv = format!("{VERDICTS_CSV_HEADER}\n");
    for (src, v) in &rep.criteria {
        let num = |x: Option<f64>| x.map(|x| format!("{x:e}")).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            quote(src),
            quote(&v.criterion),
            v.status,
            num(v.value),
            num(v.threshold),
            quote(&v.detail)
        )
        .unwrap();
    }
    std::fs::write(out.join(VERDICTS_FILE), csv)?;
    let text = rep.text(dir);
    std::fs::write(out.join(SUMMARY_FILE), &text)?;
    print!("{text}");
    Ok(rep)
}
