//! Acceptance suite: runs every shipped config through the CLI and prints
//! one line per criterion. Exits nonzero if any criterion fails.
//!
//! `cargo test --test acceptance -- <filter>` runs only the criteria whose
//! key contains `<filter>`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use snse_cli::output::{Envelope, METADATA_FILE};
use snse_cli::verdict::{Status, Verdict};

struct Criterion {
    key: &'static str,
    title: &'static str,
    command: &'static str,
    config: &'static str,
    /// JSON payload holding the verdicts.
    payload: &'static str,
    /// Verdicts whose criterion starts with one of these prefixes.
    prefixes: &'static [&'static str],
    budget_s: f64,
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        key: "nonlinearity",
        title: "Nonlinearity oracle",
        command: "oracle",
        config: "nonlinearity",
        payload: "oracle_nonlinearity.json",
        prefixes: &["nonlinearity oracle"],
        budget_s: 60.0,
    },
    Criterion {
        key: "euler",
        title: "Euler conservation",
        command: "oracle",
        config: "euler",
        payload: "oracle_euler.json",
        prefixes: &["euler"],
        budget_s: 120.0,
    },
    Criterion {
        key: "ou",
        title: "OU stationary law",
        command: "oracle",
        config: "ou",
        payload: "oracle_ou.json",
        prefixes: &["ou "],
        budget_s: 300.0,
    },
    Criterion {
        key: "stokes",
        title: "Stokes spectrum",
        command: "oracle",
        config: "stokes",
        payload: "oracle_stokes.json",
        prefixes: &["stokes"],
        budget_s: 600.0,
    },
    Criterion {
        key: "enstrophy_balance",
        title: "Enstrophy balance",
        command: "balance",
        config: "balance",
        payload: "balance.json",
        prefixes: &["enstrophy balance"],
        budget_s: 600.0,
    },
    Criterion {
        key: "l2_balance",
        title: "L2 balance",
        command: "balance",
        config: "balance",
        payload: "balance.json",
        prefixes: &["l2 balance"],
        budget_s: 600.0,
    },
    Criterion {
        key: "uniform_linf",
        title: "Uniform L-infinity moment",
        command: "sweep",
        config: "inviscid",
        payload: "sweep_inviscid.json",
        prefixes: &["uniform linf moment", "exponential moment"],
        budget_s: 1800.0,
    },
    Criterion {
        key: "damped",
        title: "Damped trichotomy",
        command: "sweep",
        config: "damped",
        payload: "sweep_damped.json",
        prefixes: &["damped"],
        budget_s: 1800.0,
    },
    Criterion {
        key: "moser",
        title: "Moser regularization",
        command: "sweep",
        config: "moser",
        payload: "sweep_moser.json",
        prefixes: &["moser"],
        budget_s: 900.0,
    },
    Criterion {
        key: "ledger",
        title: "Lp Ito ledger",
        command: "oracle",
        config: "ledger",
        payload: "oracle_ledger.json",
        prefixes: &["lp ito ledger"],
        budget_s: 60.0,
    },
    Criterion {
        key: "elliptic_h1",
        title: "Elliptic H1 bound",
        command: "elliptic",
        config: "elliptic",
        payload: "elliptic.json",
        prefixes: &["elliptic h1 bound", "elliptic solver residual"],
        budget_s: 300.0,
    },
    Criterion {
        key: "elliptic_modulus",
        title: "Elliptic modulus",
        command: "elliptic",
        config: "elliptic",
        payload: "elliptic.json",
        prefixes: &["elliptic modulus"],
        budget_s: 300.0,
    },
];

/// Configs re-run for the reproducibility criterion.
const REPRODUCED: &[&str] = &["nonlinearity", "ou", "stokes", "ledger", "euler", "elliptic"];

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn out_root() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn command_of(config: &str) -> &'static str {
    CRITERIA.iter().find(|c| c.config == config).map_or("oracle", |c| c.command)
}

/// Runs one config through the CLI into `out`; returns the exit code and
/// the wall time.
fn run(command: &str, config: &str, out: &Path) -> (i32, f64) {
    let _ = std::fs::remove_dir_all(out);
    let cfg = configs_dir().join(format!("{config}.toml"));
    let start = Instant::now();
    let code = snse_cli::cli_main([
        "snse".as_ref(),
        command.as_ref(),
        "--config".as_ref(),
        cfg.as_os_str(),
        "--out".as_ref(),
        out.as_os_str(),
    ]);
    (code, start.elapsed().as_secs_f64())
}

fn verdicts(out: &Path, payload: &str) -> Result<Vec<Verdict>, String> {
    let text = std::fs::read_to_string(out.join(payload)).map_err(|e| format!("{payload}: {e}"))?;
    let env: Envelope<serde_json::Value> = serde_json::from_str(&text).map_err(|e| format!("{payload}: {e}"))?;
    Ok(env.verdicts)
}

/// Every payload except the metadata file, by name.
fn payloads(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        if name != METADATA_FILE && entry.path().is_file() {
            files.insert(name, std::fs::read(entry.path()).unwrap_or_default());
        }
    }
    files
}

fn line(status: &str, title: &str, detail: &str) {
    println!("{status:<4} {title}: {detail}");
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |key: &str| filter.is_empty() || filter.iter().any(|f| key.contains(f.as_str()));
    let root = out_root();
    let mut ran: BTreeMap<&str, (i32, f64)> = BTreeMap::new();
    let mut failures = 0;

    for c in CRITERIA.iter().filter(|c| selected(c.key)) {
        let out = root.join(c.config);
        let (code, secs) = *ran.entry(c.config).or_insert_with(|| run(c.command, c.config, &out));
        let vs = match verdicts(&out, c.payload) {
            Ok(v) => v,
            Err(e) => {
                failures += 1;
                line("FAIL", c.title, &format!("no results (exit {code}): {e}"));
                continue;
            }
        };
        let mine: Vec<&Verdict> = vs
            .iter()
            .filter(|v| c.prefixes.iter().any(|p| v.criterion.starts_with(p)))
            .collect();
        let failed: Vec<&&Verdict> = mine.iter().filter(|v| v.status == Status::Fail).collect();
        let flagged = mine.iter().filter(|v| v.status == Status::Flagged).count();
        let ok = code == 0 && !mine.is_empty() && failed.is_empty();
        if !ok {
            failures += 1;
        }
        let summary: Vec<String> = mine
            .iter()
            .map(|v| match v.value {
                Some(x) => format!("{} = {x:.4e}", v.criterion),
                None => format!("{} [{}]", v.criterion, v.detail),
            })
            .collect();
        let mut detail = summary.join("; ");
        if flagged > 0 {
            detail.push_str(&format!("; {flagged} flagged"));
        }
        if code != 0 {
            detail.push_str(&format!("; exit code {code}"));
        }
        detail.push_str(&format!(
            "; {secs:.0} s (budget {:.0} s){}",
            c.budget_s,
            if secs > c.budget_s { " OVER BUDGET" } else { "" }
        ));
        line(if ok { "PASS" } else { "FAIL" }, c.title, &detail);
        for v in failed {
            println!("       {}", v.line());
        }
    }

    if selected("reproducibility") {
        let mut differing = Vec::new();
        for &config in REPRODUCED {
            let first = root.join(config);
            if !ran.contains_key(config) {
                run(command_of(config), config, &first);
            }
            let second = root.join(format!("{config}.rerun"));
            run(command_of(config), config, &second);
            let (a, b) = (payloads(&first), payloads(&second));
            if a.is_empty() || a != b {
                differing.push(config);
            }
        }
        let ok = differing.is_empty();
        if !ok {
            failures += 1;
        }
        line(
            if ok { "PASS" } else { "FAIL" },
            "Reproducibility",
            &if ok {
                format!("byte-identical payloads on re-run of {REPRODUCED:?}")
            } else {
                format!("payloads differ for {differing:?}")
            },
        );
    }

    println!("outputs under {}", root.display());
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
