//! Run directories: creation, atomic writes, output scanning and the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::experiments::{self, Artifacts};
use crate::{CliError, EXIT_FAIL, EXIT_NUMERICAL, EXIT_OK};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_SNAPSHOT: &str = "config.conf";
pub const ARTIFACT: &str = "branchfall-run";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact: String,
    pub version: String,
    pub kind: String,
    pub seed: u64,
    pub run_id: String,
    pub config: BTreeMap<String, String>,
    pub config_digest: String,
    pub started_at: String,
    pub finished_at: String,
    /// `ok`, `fail` (verdict FAIL) or `numerical_abort`.
    pub status: String,
    pub exit_code: i32,
    pub verdict: Option<String>,
    pub error: Option<String>,
    /// Sorted by name; the manifest itself is not listed.
    pub files: Vec<FileEntry>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(name))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// `<UTC timestamp>-<kind>-<config digest prefix>`, with a numeric suffix
/// when two runs land in the same millisecond.
fn create_run_dir(parent: &Path, kind: &str, digest: &str) -> std::io::Result<(String, PathBuf)> {
    fs::create_dir_all(parent)?;
    let stamp = Utc::now().format("%Y%m%dT%H%M%S%3fZ");
    let base = format!("{stamp}-{kind}-{}", &digest[..8]);
    for k in 0..1000 {
        let id = if k == 0 { base.clone() } else { format!("{base}-{k}") };
        let dir = parent.join(&id);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok((id, dir)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    Err(std::io::Error::new(std::io::ErrorKind::AlreadyExists, "no free run id"))
}

/// First non-finite number in a CSV body, as `(line, field)`.
fn scan_csv(body: &str) -> Option<(usize, String)> {
    for (i, line) in body.lines().enumerate().skip(1) {
        for field in line.split(',') {
            let f = field.trim();
            let lower = f.to_ascii_lowercase();
            if lower.contains("nan") || lower.contains("inf") {
                return Some((i + 1, f.to_string()));
            }
            if let Ok(v) = f.parse::<f64>() {
                if !v.is_finite() {
                    return Some((i + 1, f.to_string()));
                }
            }
        }
    }
    None
}

/// JSON keys whose value may legitimately be null.
const NULLABLE: &[&str] = &[
    "horizon_T",
    "T",
    "violated_component",
    "parent",
    "alpha",
    "branches",
    "disjoint_from",
    "min_eigenvalue",
    "final",
];

/// serde_json writes non-finite floats as null, so an unexpected null is
/// how a NaN or infinity shows up.
fn scan_json(v: &serde_json::Value, path: &str) -> Option<String> {
    use serde_json::Value;
    match v {
        Value::Number(n) if n.as_f64().is_some_and(|x| !x.is_finite()) => Some(path.to_string()),
        Value::String(s) if matches!(s.as_str(), "NaN" | "nan" | "-inf" | "-Infinity" | "Infinity") => {
            Some(path.to_string())
        }
        Value::Array(a) => a.iter().enumerate().find_map(|(i, x)| {
            if x.is_null() {
                Some(format!("{path}[{i}]"))
            } else {
                scan_json(x, &format!("{path}[{i}]"))
            }
        }),
        Value::Object(m) => m.iter().find_map(|(k, x)| {
            let p = format!("{path}.{k}");
            if x.is_null() && !NULLABLE.contains(&k.as_str()) {
                Some(p)
            } else {
                scan_json(x, &p)
            }
        }),
        _ => None,
    }
}

/// Describe the first non-finite output value, if any.
pub fn scan_outputs(files: &[(String, Vec<u8>)]) -> Option<String> {
    for (name, bytes) in files {
        let body = String::from_utf8_lossy(bytes);
        if name.ends_with(".csv") {
            if let Some((line, f)) = scan_csv(&body) {
                return Some(format!("non-finite value `{f}` in {name} line {line}"));
            }
        } else if name.ends_with(".json") {
            match serde_json::from_str::<serde_json::Value>(&body) {
                Ok(v) => {
                    if let Some(p) = scan_json(&v, "$") {
                        return Some(format!("non-finite value at {p} in {name}"));
                    }
                }
                Err(e) => return Some(format!("{name} is not valid JSON: {e}")),
            }
        }
    }
    None
}

/// Validate, run and record one experiment.
///
/// Invalid input returns an error before any directory is created. A
/// numerical abort or a non-finite output still produces a run directory
/// whose manifest records the error, but no data files.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    experiments::prepare(cfg)?;
    let snapshot = cfg.to_text();
    let config_digest = sha256_hex(snapshot.as_bytes());
    let started_at = now();
    log::info!("running {} with seed {}", cfg.kind.name(), cfg.master_seed);

    let (mut artifacts, error, exit_code) = match experiments::run(cfg) {
        Ok(a) => match scan_outputs(&a.files) {
            None => {
                let code =
                    if a.verdict == Some(branchfall_core::reduction::Verdict::Fail) { EXIT_FAIL } else { EXIT_OK };
                (a, None, code)
            }
            Some(msg) => (Artifacts::default(), Some(msg), EXIT_NUMERICAL),
        },
        Err(e) => {
            let err = CliError::Core(e);
            if err.exit_code() != EXIT_NUMERICAL {
                return Err(err);
            }
            (Artifacts::default(), Some(err.to_string()), EXIT_NUMERICAL)
        }
    };
    artifacts.files.push((CONFIG_SNAPSHOT.to_string(), snapshot.into_bytes()));

    let (run_id, dir) = create_run_dir(Path::new(&cfg.output_dir), cfg.kind.name(), &config_digest)?;
    let mut files = Vec::with_capacity(artifacts.files.len());
    for (name, bytes) in &artifacts.files {
        write_atomic(&dir, name, bytes)?;
        files.push(FileEntry { name: name.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
    }
    files.sort_by(|a, b| a.name.cmp(&b.name));

    let verdict = artifacts.verdict.map(|v| serde_json::to_value(v).expect("verdict serialises"));
    let status = match exit_code {
        EXIT_OK => "ok",
        EXIT_FAIL => "fail",
        _ => "numerical_abort",
    };
    let manifest = Manifest {
        artifact: ARTIFACT.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        kind: cfg.kind.name().into(),
        seed: cfg.master_seed,
        run_id,
        config: cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        config_digest,
        started_at,
        finished_at: now(),
        status: status.into(),
        exit_code,
        verdict: verdict.and_then(|v| v.as_str().map(str::to_string)),
        error,
        files,
    };
    let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    body.push('\n');
    write_atomic(&dir, MANIFEST, body.as_bytes())?;
    Ok(RunOutcome { dir, manifest })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST);
    let text =
        fs::read_to_string(&path).map_err(|e| CliError::Report(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Report(format!("{} is not a manifest: {e}", path.display())))
}

/// Files whose digest or size no longer matches the manifest.
pub fn verify_files(dir: &Path, m: &Manifest) -> Vec<String> {
    m.files
        .iter()
        .filter_map(|f| match fs::read(dir.join(&f.name)) {
            Ok(b) if b.len() as u64 == f.bytes && sha256_hex(&b) == f.sha256 => None,
            Ok(_) => Some(format!("{}: digest mismatch", f.name)),
            Err(e) => Some(format!("{}: {e}", f.name)),
        })
        .collect()
}
