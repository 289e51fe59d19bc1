//! Command-line driver: configuration parsing, experiment runners and run
//! directories with digest-bearing manifests.

pub mod config;
pub mod experiments;
pub mod run;

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

pub use config::{ConfigError, Kind, RunConfig};
pub use run::{execute, Manifest, RunOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_FAIL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] branchfall_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("report: {0}")]
    Report(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Report(_) => EXIT_VALIDATION,
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            CliError::Core(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

/// Parse and check a config without running it.
pub fn validate(path: &Path) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::load(path)?;
    experiments::prepare(&cfg)?;
    Ok(cfg)
}

/// Human-readable summary of a run directory; the flag is true when every
/// listed file still matches its digest.
pub fn report(dir: &Path) -> Result<(String, bool), CliError> {
    let m = run::read_manifest(dir)?;
    let bad = run::verify_files(dir, &m);
    let mut s = String::new();
    let _ = writeln!(s, "run       {}", m.run_id);
    let _ = writeln!(s, "kind      {}", m.kind);
    let _ = writeln!(s, "version   {}", m.version);
    let _ = writeln!(s, "seed      {}", m.seed);
    let _ = writeln!(s, "started   {}", m.started_at);
    let _ = writeln!(s, "finished  {}", m.finished_at);
    let _ = writeln!(s, "status    {} (exit {})", m.status, m.exit_code);
    if let Some(v) = &m.verdict {
        let _ = writeln!(s, "verdict   {v}");
    }
    if let Some(e) = &m.error {
        let _ = writeln!(s, "error     {e}");
    }
    for f in &m.files {
        let mark = if bad.iter().any(|b| b.starts_with(&format!("{}:", f.name))) { "MISMATCH" } else { "ok" };
        let _ = writeln!(s, "  {:<18} {:>10} B  {}  {mark}", f.name, f.bytes, &f.sha256[..16]);
    }
    for b in &bad {
        let _ = writeln!(s, "integrity: {b}");
    }
    Ok((s, bad.is_empty()))
}

/// The documented key table, one key per line.
pub fn keys_help() -> String {
    let d = RunConfig::default();
    let defaults = d.entries();
    config::KEYS.iter().zip(defaults).map(|((k, doc), (_, v))| format!("{k:<18} {doc} [default: {v}]\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use branchfall_core::Error;

    #[test]
    fn errors_map_to_exit_codes() {
        let v = CliError::Core(Error::InvalidGrid("n".into()));
        assert_eq!(v.exit_code(), EXIT_VALIDATION);
        let n =
            CliError::Core(Error::AtTime { t: 1.0, source: Box::new(Error::PositivityError { min_eigenvalue: -1.0 }) });
        assert_eq!(n.exit_code(), EXIT_NUMERICAL);
        let c = CliError::Config(ConfigError { line: Some(1), message: "x".into() });
        assert_eq!(c.exit_code(), EXIT_VALIDATION);
        assert_eq!(CliError::Core(Error::WindowTooSmall("w".into())).exit_code(), EXIT_VALIDATION);
    }

    #[test]
    fn key_help_lists_every_key() {
        let h = keys_help();
        assert_eq!(h.lines().count(), config::KEYS.len());
        assert!(h.contains("lambda"));
    }
}
