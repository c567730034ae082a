//! Run configuration: a flat `key = value` file with `#` comments and
//! optional `[section]` headers that prefix the keys below them.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use wd_core::model::{build_haldane, build_hofstadter, parse_matrixfile, BlochModel, DEFAULT_GAP_TOL};
use wd_core::transport::DEFAULT_STEPS_PER_UNIT;
use wd_core::wannier::DEFAULT_S_GRID;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Haldane,
    Hofstadter,
    Matrixfile,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "haldane" => Ok(Self::Haldane),
            "hofstadter" => Ok(Self::Hofstadter),
            "matrixfile" => Ok(Self::Matrixfile),
            other => err(format!("unknown model '{other}' (haldane | hofstadter | matrixfile)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Tolerances and integrator settings, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub gap: f64,
    pub steps_per_unit: usize,
    /// Whole-cell smoothing width; `0` disables smoothing.
    pub smoothing_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Model parameters; string-valued entries (`file`) are kept apart.
    pub params: BTreeMap<String, f64>,
    pub file: Option<PathBuf>,
    pub mesh_n: usize,
    /// Supercell sizes; empty means derive from `mesh_n` (see [`RunConfig::ls`]).
    pub l_list: Vec<usize>,
    pub s_grid: Vec<f64>,
    pub tolerances: Tolerances,
    pub truncate: Vec<usize>,
    pub output_dir: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::Haldane,
            params: BTreeMap::new(),
            file: None,
            mesh_n: 32,
            l_list: Vec::new(),
            s_grid: DEFAULT_S_GRID.to_vec(),
            tolerances: Tolerances {
                gap: DEFAULT_GAP_TOL,
                steps_per_unit: DEFAULT_STEPS_PER_UNIT,
                smoothing_width: wd_core::frames::DEFAULT_SMOOTHING_WIDTH,
            },
            truncate: Vec::new(),
            output_dir: None,
            format: Format::Json,
            seed: 0,
        }
    }
}

/// Parses `key = value` lines into fully qualified keys.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return err(format!("line {}: unterminated section header", no + 1));
            };
            section = name.trim().to_string();
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return err(format!("line {}: expected 'key = value'", no + 1));
        };
        let key = k.trim();
        if key.is_empty() {
            return err(format!("line {}: empty key", no + 1));
        }
        let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        out.push((full, v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError(format!("{key}: cannot parse '{v}'")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',').map(|x| num(key, x.trim())).collect()
}

impl RunConfig {
    /// Applies one setting. Bare keys other than the top-level ones are
    /// model parameters.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.strip_prefix("params.").unwrap_or(key);
        match key {
            "model" => self.model = ModelKind::parse(value)?,
            "mesh" | "mesh_n" | "N" => self.mesh_n = num(key, value)?,
            "L" | "l_list" | "supercell_l_list" => self.l_list = list(key, value)?,
            "s_grid" => self.s_grid = list(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "truncate" | "galerkin.n" => self.truncate = list(key, value)?,
            "out" | "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "format" => {
                self.format = match value {
                    "json" => Format::Json,
                    "csv" => Format::Csv,
                    other => return err(format!("unknown format '{other}'")),
                }
            }
            "tolerances.gap" | "gap_tol" => self.tolerances.gap = num(key, value)?,
            "tolerances.steps_per_unit" | "steps_per_unit" => self.tolerances.steps_per_unit = num(key, value)?,
            "tolerances.smoothing_width" | "smoothing_width" => self.tolerances.smoothing_width = num(key, value)?,
            "file" => self.file = Some(PathBuf::from(value)),
            k if k.contains('.') => return err(format!("unknown key '{k}'")),
            k => {
                self.params.insert(k.to_string(), num(k, value)?);
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (k, v) in parse_pairs(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    /// Supercell sizes: the configured list, or `N/8, N/4, N/2` when unset.
    pub fn ls(&self) -> Vec<usize> {
        if !self.l_list.is_empty() {
            return self.l_list.clone();
        }
        let mut ls: Vec<usize> = [8, 4, 2].iter().map(|d| self.mesh_n / d).filter(|&l| l >= 1).collect();
        ls.dedup();
        ls
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.tolerances;
        if !(t.gap > 0.0) || t.steps_per_unit == 0 || !(t.smoothing_width >= 0.0) {
            return err("tolerances must be positive");
        }
        if self.mesh_n < 2 || !self.mesh_n.is_multiple_of(2) {
            return err(format!("mesh size {} must be even and at least 2", self.mesh_n));
        }
        if self.l_list.iter().any(|&l| l == 0 || 2 * l > self.mesh_n) {
            return err(format!("every L must satisfy 1 <= L <= N/2 = {}", self.mesh_n / 2));
        }
        if self.s_grid.iter().any(|s| !(*s >= 0.0)) {
            return err("s_grid entries must be nonnegative");
        }
        Ok(())
    }

    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn int_param(&self, key: &str, default: i64) -> Result<i64, ConfigError> {
        let v = self.param(key, default as f64);
        if v.fract() != 0.0 {
            return err(format!("{key} must be an integer, got {v}"));
        }
        Ok(v as i64)
    }

    /// Occupied window `band .. band + nbands`.
    fn window(&self) -> Result<std::ops::Range<usize>, ConfigError> {
        let band = self.int_param("band", 0)?;
        let nbands = self.int_param("nbands", 1)?;
        if band < 0 || nbands < 1 {
            return err("band must be >= 0 and nbands >= 1");
        }
        Ok(band as usize..(band + nbands) as usize)
    }

    /// Builds the model. Errors from the core builders are returned as is so
    /// the caller can map them to exit codes.
    pub fn build_model(&self) -> Result<BlochModel, BuildError> {
        let known: &[&str] = match self.model {
            ModelKind::Haldane => &["t1", "t2", "phi", "M", "band", "nbands"],
            ModelKind::Hofstadter => &["p", "q", "band", "nbands"],
            ModelKind::Matrixfile => &["band", "nbands"],
        };
        if let Some(k) = self.params.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(ConfigError(format!("unknown parameter '{k}' for this model")).into());
        }
        let window = self.window()?;
        let model = match self.model {
            ModelKind::Haldane => {
                let (t1, t2, phi, m) = (self.param("t1", 1.0), self.param("t2", 0.1), self.param("phi", PI / 2.0), self.param("M", 0.0));
                build_haldane(t1, t2, phi, m)?
            }
            ModelKind::Hofstadter => build_hofstadter(self.int_param("p", 1)?, self.int_param("q", 3)?)?,
            ModelKind::Matrixfile => {
                let Some(path) = &self.file else {
                    return Err(ConfigError("matrixfile model needs file = PATH".into()).into());
                };
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
                parse_matrixfile(&text, 0..1)?
            }
        };
        let mut model = model.with_occupied(window.clone())?;
        model.params.push(("band".into(), window.start as f64));
        model.params.push(("nbands".into(), window.len() as f64));
        Ok(model)
    }
}

/// Failure while building a model from a configuration.
#[derive(Debug)]
pub enum BuildError {
    Config(ConfigError),
    Core(wd_core::WdError),
}

impl From<ConfigError> for BuildError {
    fn from(e: ConfigError) -> Self {
        BuildError::Config(e)
    }
}

impl From<wd_core::WdError> for BuildError {
    fn from(e: wd_core::WdError) -> Self {
        BuildError::Core(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_prefix_keys() {
        let text = "model = hofstadter # flux\n[params]\np = 1\nq = 5\n\n[tolerances]\ngap = 1e-6\n";
        let cfg = RunConfig::from_text(text).unwrap();
        assert_eq!(cfg.model, ModelKind::Hofstadter);
        assert_eq!(cfg.params["q"], 5.0);
        assert_eq!(cfg.tolerances.gap, 1e-6);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(RunConfig::from_text("mesh 16\n").is_err());
        assert!(RunConfig::from_text("[params\n").is_err());
        assert!(RunConfig::from_text("mesh = x\n").is_err());
        assert!(RunConfig::from_text("tolerances.foo = 1\n").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.mesh_n = 15;
        assert!(cfg.validate().is_err());
        cfg.mesh_n = 16;
        cfg.l_list = vec![16];
        assert!(cfg.validate().is_err());
    }
}
