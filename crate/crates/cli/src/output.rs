//! Atomic file emission, CSV formatting and the run manifest.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

/// Writes `contents` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Shortest round-trip representation, scientific outside `[1e-4, 1e15)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// [`num`], or an empty field for missing values.
pub fn fmt_f64(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Debug, Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: format!("{}\n", header.join(",")) }
    }

    pub fn row(&mut self, fields: impl IntoIterator<Item = String>) {
        let fields: Vec<String> = fields.into_iter().collect();
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Reading inputs or writing outputs.
    Io,
    /// A numerical stage could not complete.
    Compute,
}

#[derive(Debug, Clone)]
pub struct StageError {
    pub kind: FailureKind,
    pub message: String,
}

impl StageError {
    pub fn io(message: impl Into<String>) -> Self {
        Self { kind: FailureKind::Io, message: message.into() }
    }

    pub fn compute(message: impl Into<String>) -> Self {
        Self { kind: FailureKind::Compute, message: message.into() }
    }
}

impl From<rodlimit::Error> for StageError {
    fn from(e: rodlimit::Error) -> Self {
        Self::compute(e.to_string())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Runs named stages, timing them and recording their outcome.
#[derive(Debug)]
pub struct Recorder {
    out_dir: PathBuf,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<String>,
    worst: Option<FailureKind>,
}

impl Recorder {
    pub fn new(out_dir: PathBuf) -> Self {
        Self { out_dir, stages: Vec::new(), outputs: Vec::new(), worst: None }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T, StageError>) -> Option<T> {
        let start = Instant::now();
        let result = f();
        let seconds = start.elapsed().as_secs_f64();
        match result {
            Ok(v) => {
                self.stages.push(StageRecord { name: name.into(), status: StageStatus::Ok, seconds, message: None });
                Some(v)
            }
            Err(e) => {
                self.fail(name, seconds, e);
                None
            }
        }
    }

    /// Records a failure detected outside a timed closure.
    pub fn fail(&mut self, name: &str, seconds: f64, e: StageError) {
        self.worst = match (self.worst, e.kind) {
            (Some(FailureKind::Io), _) | (_, FailureKind::Io) => Some(FailureKind::Io),
            _ => Some(FailureKind::Compute),
        };
        self.stages.push(StageRecord { name: name.into(), status: StageStatus::Failed, seconds, message: Some(e.message) });
    }

    /// Writes one output file into the output directory.
    pub fn emit(&mut self, file: &str, contents: &[u8]) -> Option<()> {
        let path = self.out_dir.join(file);
        self.stage(&format!("write {file}"), || {
            write_atomic(&path, contents).map_err(|e| StageError::io(format!("cannot write {}: {e}", path.display())))
        })?;
        self.outputs.push(file.to_string());
        Some(())
    }

    pub fn failure(&self) -> Option<FailureKind> {
        self.worst
    }
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub rodlimit: &'static str,
    pub rodlimit_cli: &'static str,
}

pub const VERSIONS: Versions = Versions { rodlimit: env!("CARGO_PKG_VERSION"), rodlimit_cli: env!("CARGO_PKG_VERSION") };

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub subcommand: &'a str,
    pub config_path: String,
    pub config_sha256: String,
    pub versions: Versions,
    pub threads: usize,
    pub seed: u64,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    pub stages: &'a [StageRecord],
    pub outputs: &'a [String],
    pub criteria_passed: bool,
    pub exit_code: i32,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn csv_rows_and_missing_values() {
        let mut c = Csv::new(&["a", "b"]);
        c.row([fmt_f64(Some(0.5)), fmt_f64(None)]);
        assert_eq!(String::from_utf8(c.into_bytes()).unwrap(), "a,b\n0.5,\n");
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, -0.0, 0.5, 1e-4, 5.551115123125783e-17, -3.2e20, 123456.789, f64::MIN_POSITIVE] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits(), "{}", num(v));
        }
        assert_eq!(num(5.551115123125783e-17), "5.551115123125783e-17");
        assert_eq!(num(0.25), "0.25");
    }

    #[test]
    fn io_failures_dominate() {
        let mut r = Recorder::new(PathBuf::from("."));
        r.fail("x", 0.0, StageError::compute("bad"));
        assert_eq!(r.failure(), Some(FailureKind::Compute));
        r.fail("y", 0.0, StageError::io("gone"));
        r.fail("z", 0.0, StageError::compute("bad"));
        assert_eq!(r.failure(), Some(FailureKind::Io));
    }
}
