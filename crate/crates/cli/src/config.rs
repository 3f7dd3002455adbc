//! Run configuration: defaults, then a flat `key=value` file, then flags.

use std::path::Path;

use serde::Serialize;

use ks_selfsim::exterior::{EXTERIOR_R, PICARD_TOL};
use ks_selfsim::matching::{MatchTolerances, DEFAULT_R0};
use ks_selfsim::Dimension;

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub dim: u32,
    pub r0: f64,
    pub r_max: f64,
    pub tol_ode: f64,
    pub tol_match: f64,
    /// Stopping tolerance of the exterior Picard iteration (fixed).
    pub tol_picard: f64,
    pub n: usize,
    /// Scan length in periods of the mismatch; automatic when absent.
    pub scan_periods: Option<f64>,
    pub out: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tol = MatchTolerances::default();
        RunConfig {
            dim: 3,
            r0: DEFAULT_R0,
            r_max: EXTERIOR_R,
            tol_ode: tol.ode,
            tol_match: tol.matching,
            tol_picard: PICARD_TOL,
            n: 3,
            scan_periods: None,
            out: "out".into(),
        }
    }
}

#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, UsageError> {
    v.trim().parse().map_err(|_| UsageError(format!("invalid value for {key}: {v:?}")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), UsageError> {
        match key.trim().replace('_', "-").as_str() {
            "dim" => self.dim = parse(key, value)?,
            "r0" => self.r0 = parse(key, value)?,
            "rmax" | "r-max" => self.r_max = parse(key, value)?,
            "tol-ode" => self.tol_ode = parse(key, value)?,
            "tol-match" => self.tol_match = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "scan-periods" => self.scan_periods = Some(parse(key, value)?),
            "out" => self.out = value.trim().to_string(),
            other => return Err(UsageError(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a `key=value` file; blank lines and `#` comments are skipped.
    pub fn load_file(&mut self, path: &Path) -> Result<(), UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("{}:{}: expected key=value", path.display(), no + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<Dimension, UsageError> {
        let dim = Dimension::new(self.dim).map_err(|e| UsageError(e.to_string()))?;
        if !(self.tol_ode > 0.0 && self.tol_match > 0.0) {
            return Err(UsageError("tolerances must be positive".into()));
        }
        if self.n == 0 {
            return Err(UsageError("n must be at least 1".into()));
        }
        if !(self.r0 > 0.0 && self.r0 < 1.0 && self.r_max > 1.0) {
            return Err(UsageError(format!("need 0 < r0 < 1 < rmax (got r0 = {}, rmax = {})", self.r0, self.r_max)));
        }
        if let Some(p) = self.scan_periods {
            if !(p >= 2.0) {
                return Err(UsageError(format!("scan-periods must be at least 2 (got {p})")));
            }
        }
        Ok(dim)
    }

    pub fn match_tolerances(&self) -> MatchTolerances {
        MatchTolerances { ode: self.tol_ode, matching: self.tol_match }
    }
}
