use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

/// Values that may come from a TOML file. Command-line flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub network: Option<PathBuf>,
    pub grid: Option<String>,
    pub targets: Option<Vec<String>>,
    pub rho: Option<RhoValue>,
    pub m: Option<u32>,
    pub n: Option<u32>,
    pub gap: Option<f64>,
    pub feas: Option<f64>,
    pub iter_cap: Option<u32>,
    pub scaling: Option<String>,
    pub format: Option<String>,
    pub output: Option<PathBuf>,
    pub with_oracle: Option<bool>,
    pub state_cap: Option<usize>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub k: Option<usize>,
    pub independent: Option<Vec<String>>,
}

/// `rho = [0.0, -2.1]` or `rho = "auto:2"`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum RhoValue {
    List(Vec<f64>),
    Text(String),
}

impl RhoValue {
    pub fn to_spec_string(&self) -> String {
        match self {
            RhoValue::List(v) => v.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            RhoValue::Text(s) => s.clone(),
        }
    }
}

impl FileConfig {
    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.network, &mut cfg.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// `start:step:end` or a comma-separated list. A zero step is only allowed
/// when `start == end`, giving a single point.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::config(format!("bad grid '{s}': {why}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, step, end] = parts[..] else {
            return Err(bad("expected start:step:end"));
        };
        let (start, step, end) = (num(start)?, num(step)?, num(end)?);
        if !(start.is_finite() && step.is_finite() && end.is_finite()) {
            return Err(bad("non-finite value"));
        }
        if end < start {
            return Err(bad("end before start"));
        }
        if step == 0.0 {
            if end != start {
                return Err(bad("zero step"));
            }
            vec![start]
        } else if step < 0.0 {
            return Err(bad("negative step"));
        } else {
            let count = ((end - start) / step + 1e-9).floor() as usize;
            (0..=count).map(|k| start + k as f64 * step).collect()
        }
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(bad("times must be finite and >= 0"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("times must be strictly increasing"));
    }
    Ok(grid)
}
