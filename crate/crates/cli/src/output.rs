//! Artifact serialization: CSV tables, JSON reports, atomic file writes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use ks_selfsim::radial::RadialProfile;

pub fn profile_csv(p: &RadialProfile) -> String {
    let mut s = String::from("r,value,deriv\n");
    for ((r, v), d) in p.grid.nodes.iter().zip(&p.values).zip(&p.derivs) {
        let _ = writeln!(s, "{r},{v},{d}");
    }
    s
}

/// Generic CSV with a header row.
pub fn table_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// One named threshold check of a report.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub metric: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value < limit` (NaN fails).
    pub fn below(metric: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { metric: metric.into(), value, limit, pass: value < limit }
    }

    pub fn holds(metric: impl Into<String>, ok: bool) -> Self {
        Check { metric: metric.into(), value: if ok { 1.0 } else { 0.0 }, limit: 1.0, pass: ok }
    }
}

/// Collected artifacts of one command. With `out = "-"` only the primary
/// artifact is written, to standard output.
pub struct Sink {
    out: String,
    files: Vec<(String, String)>,
    primary: Option<usize>,
    pub checks: Vec<Check>,
}

impl Sink {
    pub fn new(out: &str) -> Self {
        Sink { out: out.to_string(), files: Vec::new(), primary: None, checks: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn add_primary(&mut self, name: impl Into<String>, contents: String) {
        self.primary = Some(self.files.len());
        self.add(name, contents);
    }

    pub fn set_primary(&mut self, name: &str) {
        self.primary = self.files.iter().position(|(n, _)| n == name).or(self.primary);
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn flush(self) -> std::io::Result<()> {
        if self.out == "-" {
            if let Some((_, text)) = self.files.get(self.primary.unwrap_or(0)) {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(text.as_bytes())?;
                stdout.flush()?;
            }
            return Ok(());
        }
        let dir = PathBuf::from(&self.out);
        std::fs::create_dir_all(&dir)?;
        for (name, text) in &self.files {
            let tmp = dir.join(format!(".{name}.tmp"));
            std::fs::write(&tmp, text)?;
            std::fs::rename(&tmp, dir.join(name))?;
        }
        Ok(())
    }
}
