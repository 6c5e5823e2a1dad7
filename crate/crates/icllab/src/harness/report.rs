//! Run reports, CSV/JSON emission, and content digests.
//!
//! Reproducibility contract: identical configs produce byte-identical
//! artifacts, so everything here serializes deterministically — fixed field
//! order, fixed float formatting (17 significant digits, round-trip exact),
//! LF line endings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// One pass/fail entry in the run ledger.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn new(name: impl Into<String>, holds: bool, detail: impl Into<String>) -> Self {
        CheckOutcome { name: name.into(), holds, detail: detail.into() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub digest: String,
}

/// Everything one subcommand run produces.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub subcommand: String,
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
    pub files: Vec<FileDigest>,
    #[serde(skip)]
    pub wall_time_s: f64,
    #[serde(skip)]
    pub seed_overridden: bool,
}

impl RunReport {
    pub fn new(subcommand: impl Into<String>, seed: u64) -> Self {
        RunReport {
            subcommand: subcommand.into(),
            seed,
            checks: Vec::new(),
            files: Vec::new(),
            wall_time_s: 0.0,
            seed_overridden: false,
        }
    }

    pub fn check(&mut self, name: impl Into<String>, holds: bool, detail: impl Into<String>) {
        self.checks.push(CheckOutcome::new(name, holds, detail));
    }

    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    /// Exit status: 0 all checks hold, 1 an audited inequality failed.
    pub fn exit_code(&self) -> i32 {
        if self.all_hold() {
            0
        } else {
            1
        }
    }

    pub fn digest_of(&self, file_name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|f| f.path.ends_with(file_name))
            .map(|f| f.digest.as_str())
    }

    /// Fixed-field JSON document {subcommand, seed, checks, files}.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One `name: PASS/FAIL detail` line per check.
    pub fn render_ledger(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{}: {} {}",
                c.name,
                if c.holds { "PASS" } else { "FAIL" },
                c.detail
            );
        }
        out
    }
}

/// 17-significant-digit float serialization; doubles round-trip exactly.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.16e}")
}

fn quote_csv(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Minimal RFC-4180 writer: UTF-8, LF line endings, header row first.
#[derive(Debug, Clone)]
pub struct CsvTable {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        CsvTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, fields: Vec<String>) {
        assert_eq!(fields.len(), self.columns.len(), "row width must match the header");
        self.rows.push(fields);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.columns.iter().map(|c| quote_csv(c)).collect::<Vec<_>>().join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.iter().map(|f| quote_csv(f)).collect::<Vec<_>>().join(","));
        }
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let d = h.finalize();
    let mut out = String::with_capacity(64);
    for b in d {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Write a file under the output dir (single writer, after aggregation) and
/// record its digest in the report. The manifest stores the name relative
/// to the output dir, so reruns are byte-identical wherever outputs land.
pub fn emit_file(report: &mut RunReport, dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents.as_bytes())?;
    report.files.push(FileDigest {
        path: name.to_string(),
        digest: sha256_hex(contents.as_bytes()),
    });
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_roundtrips() {
        for &x in &[0.1, 2458.1, 1.0 / 3.0, 6.0 / (5f64.exp() + 3.0), f64::MIN_POSITIVE, 1e300] {
            let s = fmt_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, x, "{s}");
        }
        assert_eq!(fmt_float(f64::INFINITY), "inf");
        assert_eq!(fmt_float(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn csv_render_header_and_quoting() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.row(vec!["1".into(), "plain".into()]);
        t.row(vec!["2".into(), "needs,quote".into()]);
        let s = t.render();
        assert_eq!(s, "a,b\n1,plain\n2,\"needs,quote\"\n");
    }

    #[test]
    fn json_report_fixed_fields() {
        let mut r = RunReport::new("decay", 42);
        r.check("envelope", true, "ok");
        let json = r.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["subcommand"], "decay");
        assert_eq!(v["seed"], 42);
        assert_eq!(v["checks"][0]["name"], "envelope");
        assert_eq!(v["checks"][0]["holds"], true);
        assert!(v.get("wall_time_s").is_none());
    }

    #[test]
    fn digests_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn exit_codes() {
        let mut r = RunReport::new("x", 1);
        r.check("a", true, "");
        assert_eq!(r.exit_code(), 0);
        r.check("b", false, "");
        assert_eq!(r.exit_code(), 1);
    }
}
