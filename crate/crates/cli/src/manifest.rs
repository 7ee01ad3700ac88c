use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{CliError, Result};

/// Inclusive range `start:end:count` with `count` equally spaced points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Range {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl Range {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.end - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.end } else { self.start + step * i as f64 })
            .collect()
    }
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("range {s:?} must look like start:end:count"));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("range {s:?}: {e}"));
        let count = parts[2].trim().parse::<usize>().map_err(|e| format!("range {s:?}: count {e}"))?;
        let (start, end) = (num(parts[0])?, num(parts[1])?);
        if !start.is_finite() || !end.is_finite() || count == 0 {
            return Err(format!("range {s:?} needs finite endpoints and count >= 1"));
        }
        Ok(Range { start, end, count })
    }
}

/// Everything that determines the output of one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Config path, `preset:<name>` or `algebra:<label>`.
    pub source: String,
    pub mu: Option<f64>,
    pub mu_range: Option<Range>,
    pub charges: Vec<f64>,
    pub charge_range: Option<Range>,
    pub grid: usize,
    pub tolerance: f64,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl RunManifest {
    pub fn new(command: &str, source: String, out_dir: PathBuf, seed: u64) -> Self {
        RunManifest {
            command: command.into(),
            source,
            mu: None,
            mu_range: None,
            charges: Vec::new(),
            charge_range: None,
            grid: 2,
            tolerance: 1e-10,
            out_dir,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(CliError::validation(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.grid < 2 {
            return Err(CliError::validation(format!("grid size must be at least 2, got {}", self.grid)));
        }
        if let Some(mu) = self.mu {
            check_mu(mu)?;
        }
        if let Some(r) = self.mu_range {
            check_mu(r.start)?;
            check_mu(r.end)?;
        }
        if let Some(r) = self.charge_range {
            if r.points().iter().any(|q| *q == 0.0) {
                return Err(CliError::validation("charge range must not contain 0"));
            }
        }
        Ok(())
    }

    /// Creates the output directory and records the manifest in it.
    pub fn prepare_output(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io(&self.out_dir, e))?;
        write_json(&self.out_dir.join("manifest.json"), self)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(CliError::validation(format!("mu must be positive and finite, got {mu}")))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::validation(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_endpoints_inclusive() {
        let r: Range = "0.1:1.0:10".parse().unwrap();
        let p = r.points();
        assert_eq!(p.len(), 10);
        assert_eq!(p[0], 0.1);
        assert_eq!(p[9], 1.0);
        assert!((p[1] - 0.2).abs() < 1e-15);
        assert_eq!("2:3:1".parse::<Range>().unwrap().points(), vec![2.0]);
    }

    #[test]
    fn bad_ranges() {
        assert!("0.1:1.0".parse::<Range>().is_err());
        assert!("0.1:x:3".parse::<Range>().is_err());
        assert!("0.1:1:0".parse::<Range>().is_err());
    }

    #[test]
    fn manifest_invariants() {
        let mut m = RunManifest::new("solve", "x".into(), ".".into(), 0);
        m.mu = Some(1.0);
        assert!(m.validate().is_ok());
        m.grid = 1;
        assert!(m.validate().is_err());
        m.grid = 2;
        m.tolerance = 0.0;
        assert!(m.validate().is_err());
        m.tolerance = 1e-8;
        m.mu = Some(-1.0);
        assert!(m.validate().is_err());
    }
}
