//! Flat key-value configuration (TOML syntax, no tables).
//!
//! Engine keys:
//!
//! | key | type | default |
//! |---|---|---|
//! | `alpha` | float in (0,1) | 0.35 |
//! | `warmup` | integer >= p + 2 | max(2p, 30) |
//! | `boundary` | float | median of warm-up responses |
//! | `kernel` | `"epanechnikov"` or `"tabulated"` | `"epanechnikov"` |
//! | `kernel_table` | path to a `u,k` CSV | required for `"tabulated"` |
//! | `grid_min`, `grid_max`, `grid_count` | float, float, integer >= 1 | -3, 3, 121 |
//! | `seed` | integer | 1 |
//! | `input` | path to a sample CSV | none (synthetic model) |
//! | `p`, `n`, `noise_std` | synthetic model size, length and noise | 10, 1000, 1.0 |
//!
//! Study files use `kind`, `sizes`, `replications`, `alpha`, `seed`, `p`,
//! `noise_std`, `warmup`, `eval_projected`, `eval_count`, `threads`,
//! `bootstrap` and `full_scale`.

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::engine::{EngineOptions, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::kernel::{epanechnikov, BandwidthSchedule, KernelSpec};
use crate::nw::GridAccumulator;
use crate::sim::model_m;
use crate::study::{EvalPoints, StudyConfig, StudyKind, EVAL_POINT_SEED};

#[derive(Debug, Clone, PartialEq)]
pub enum KernelChoice {
    Epanechnikov,
    Tabulated(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        GridAccumulator::linspace(self.min, self.max, self.count)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            min: -3.0,
            max: 3.0,
            count: 121,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    Csv(PathBuf),
    Synthetic { p: usize, n: usize, noise_std: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub alpha: f64,
    pub warmup: Option<usize>,
    pub boundary: Option<f64>,
    pub kernel: KernelChoice,
    pub grid: GridSpec,
    pub seed: u64,
    pub input: InputSource,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            warmup: None,
            boundary: None,
            kernel: KernelChoice::Epanechnikov,
            grid: GridSpec::default(),
            seed: 1,
            input: InputSource::Synthetic {
                p: 10,
                n: 1000,
                noise_std: 1.0,
            },
        }
    }
}

impl EngineConfig {
    /// Warm-up size for dimension `p`, with the default filled in.
    pub fn warmup_for(&self, p: usize) -> usize {
        self.warmup
            .unwrap_or_else(|| crate::engine::default_warmup(p))
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        match &self.kernel {
            KernelChoice::Epanechnikov => Ok(epanechnikov()),
            KernelChoice::Tabulated(path) => crate::io::read_kernel_table(path),
        }
    }

    pub fn engine_options(&self) -> Result<EngineOptions> {
        Ok(EngineOptions {
            kernel: self.kernel_spec()?,
            schedule: BandwidthSchedule::new(self.alpha)?,
            warmup: self.warmup,
            boundary: self.boundary,
            grid: Some(self.grid.points()),
            ..Default::default()
        })
    }

    /// Checks the warm-up override against the data dimension.
    pub fn check_dimension(&self, p: usize) -> Result<()> {
        match self.warmup {
            Some(w) if w < p + 2 => Err(config_error("warmup", format!("warmup >= p + 2 = {}", p + 2))),
            _ => Ok(()),
        }
    }
}

fn config_error(key: &str, constraint: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        constraint: constraint.into(),
    }
}

fn parse_table(text: &str) -> Result<Table> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| config_error("<document>", format!("well-formed key-value document: {}", e.message())))?;
    if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
        return Err(config_error(k, "flat keys only (no tables)"));
    }
    Ok(table)
}

struct Keys<'a> {
    table: &'a Table,
    allowed: &'static [&'static str],
}

impl<'a> Keys<'a> {
    fn new(table: &'a Table, allowed: &'static [&'static str]) -> Result<Self> {
        if let Some(k) = table.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(config_error(k, format!("known key (one of {})", allowed.join(", "))));
        }
        Ok(Self { table, allowed })
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        debug_assert!(self.allowed.contains(&key));
        self.table.get(key)
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(config_error(key, "number")),
        }
    }

    fn uint(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(config_error(key, "non-negative integer")),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.uint(key)?.map(|v| v as usize))
    }

    fn string(&self, key: &str) -> Result<Option<&'a str>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(config_error(key, "string")),
        }
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(config_error(key, "boolean")),
        }
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Float(f) => Ok(*f),
                    Value::Integer(i) => Ok(*i as f64),
                    _ => Err(config_error(key, "array of numbers")),
                })
                .collect::<Result<_>>()
                .map(Some),
            Some(_) => Err(config_error(key, "array of numbers")),
        }
    }

    fn usizes(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    _ => Err(config_error(key, "array of non-negative integers")),
                })
                .collect::<Result<_>>()
                .map(Some),
            Some(_) => Err(config_error(key, "array of non-negative integers")),
        }
    }
}

/// Rejects a bandwidth exponent outside (0, 1) with a config error.
pub fn check_alpha(a: f64) -> Result<f64> {
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(config_error("alpha", "alpha ∈ (0,1)"))
    }
}

const ENGINE_KEYS: &[&str] = &[
    "alpha",
    "warmup",
    "boundary",
    "kernel",
    "kernel_table",
    "grid_min",
    "grid_max",
    "grid_count",
    "seed",
    "input",
    "p",
    "n",
    "noise_std",
];

/// Parses an engine configuration. Relative paths are kept as written.
pub fn parse_config(text: &str) -> Result<EngineConfig> {
    let table = parse_table(text)?;
    let keys = Keys::new(&table, ENGINE_KEYS)?;
    let mut cfg = EngineConfig::default();

    if let Some(a) = keys.float("alpha")? {
        cfg.alpha = check_alpha(a)?;
    }
    cfg.warmup = keys.usize("warmup")?;
    if let Some(b) = keys.float("boundary")? {
        if !b.is_finite() {
            return Err(config_error("boundary", "finite number"));
        }
        cfg.boundary = Some(b);
    }
    let table_path = keys.string("kernel_table")?;
    cfg.kernel = match keys.string("kernel")?.unwrap_or("epanechnikov") {
        "epanechnikov" => {
            if table_path.is_some() {
                return Err(config_error("kernel_table", "only with kernel = \"tabulated\""));
            }
            KernelChoice::Epanechnikov
        }
        "tabulated" => KernelChoice::Tabulated(PathBuf::from(
            table_path.ok_or_else(|| config_error("kernel_table", "path required for kernel = \"tabulated\""))?,
        )),
        _ => return Err(config_error("kernel", "\"epanechnikov\" or \"tabulated\"")),
    };

    if let Some(v) = keys.float("grid_min")? {
        cfg.grid.min = v;
    }
    if let Some(v) = keys.float("grid_max")? {
        cfg.grid.max = v;
    }
    if let Some(c) = keys.usize("grid_count")? {
        if c < 1 {
            return Err(config_error("grid_count", "grid_count >= 1"));
        }
        cfg.grid.count = c;
    }
    if !(cfg.grid.min.is_finite() && cfg.grid.max.is_finite() && cfg.grid.min <= cfg.grid.max) {
        return Err(config_error("grid_max", "finite grid with grid_min <= grid_max"));
    }
    if let Some(s) = keys.uint("seed")? {
        cfg.seed = s;
    }

    let synthetic = ["p", "n", "noise_std"].iter().any(|k| table.contains_key(*k));
    cfg.input = match keys.string("input")? {
        Some(path) => {
            if synthetic {
                return Err(config_error("input", "either `input` or synthetic `p`/`n`/`noise_std`, not both"));
            }
            InputSource::Csv(PathBuf::from(path))
        }
        None => {
            let InputSource::Synthetic { mut p, mut n, mut noise_std } = cfg.input else {
                unreachable!()
            };
            if let Some(v) = keys.usize("p")? {
                if v < 4 {
                    return Err(config_error("p", "p >= 4"));
                }
                p = v;
            }
            if let Some(v) = keys.usize("n")? {
                n = v;
            }
            if let Some(v) = keys.float("noise_std")? {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(config_error("noise_std", "noise_std >= 0"));
                }
                noise_std = v;
            }
            InputSource::Synthetic { p, n, noise_std }
        }
    };
    if let InputSource::Synthetic { p, .. } = cfg.input {
        cfg.check_dimension(p)?;
    }
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<EngineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

const STUDY_KEYS: &[&str] = &[
    "kind",
    "sizes",
    "replications",
    "alpha",
    "seed",
    "p",
    "noise_std",
    "warmup",
    "eval_projected",
    "eval_count",
    "threads",
    "bootstrap",
    "full_scale",
];

/// Parses a study description; `kind` defaults to `fallback` when absent.
pub fn parse_study_config(text: &str, fallback: Option<StudyKind>) -> Result<StudyConfig> {
    let table = parse_table(text)?;
    let keys = Keys::new(&table, STUDY_KEYS)?;
    let kind = match keys.string("kind")? {
        Some(k) => k
            .parse()
            .map_err(|_| config_error("kind", "scatter | convergence | normality | rate"))?,
        None => fallback.ok_or_else(|| config_error("kind", "study kind required"))?,
    };
    let p = keys.usize("p")?.unwrap_or(10);
    let mut model = model_m(p).map_err(|_| config_error("p", "p >= 4"))?;
    if let Some(s) = keys.float("noise_std")? {
        model = model
            .with_noise_std(s)
            .map_err(|_| config_error("noise_std", "noise_std >= 0"))?;
    }
    let mut cfg = StudyConfig::new(kind, model);
    if keys.boolean("full_scale")?.unwrap_or(false) {
        cfg = cfg.full_scale();
    }
    if let Some(s) = keys.usizes("sizes")? {
        if s.is_empty() || s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_error("sizes", "non-empty and strictly increasing"));
        }
        cfg.sizes = s;
    }
    if let Some(r) = keys.usize("replications")? {
        if r < 1 {
            return Err(config_error("replications", "replications >= 1"));
        }
        cfg.replications = r;
    }
    if let Some(a) = keys.float("alpha")? {
        cfg.alpha = check_alpha(a)?;
    }
    if let Some(s) = keys.uint("seed")? {
        cfg.seed = s;
    }
    if let Some(w) = keys.usize("warmup")? {
        if w < p + 2 {
            return Err(config_error("warmup", format!("warmup >= p + 2 = {}", p + 2)));
        }
        cfg.warmup = Some(w);
    }
    match (keys.floats("eval_projected")?, keys.usize("eval_count")?) {
        (Some(_), Some(_)) => {
            return Err(config_error("eval_count", "either eval_count or eval_projected, not both"))
        }
        (Some(ts), None) => cfg.eval_points = EvalPoints::Projected(ts),
        (None, Some(c)) => {
            cfg.eval_points = EvalPoints::Random {
                count: c,
                seed: EVAL_POINT_SEED,
                central: kind == StudyKind::Normality,
            }
        }
        (None, None) => {}
    }
    if let Some(t) = keys.usize("threads")? {
        if t < 1 {
            return Err(config_error("threads", "threads >= 1"));
        }
        cfg.threads = Some(t);
    }
    if let Some(b) = keys.usize("bootstrap")? {
        cfg.bootstrap = b;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, EngineConfig::default());
        assert_eq!(c.alpha, 0.35);
        assert_eq!(c.warmup_for(10), 30);
    }

    #[test]
    fn alpha_out_of_range_names_the_constraint() {
        match parse_config("alpha = 1.2") {
            Err(Error::Config { key, constraint }) => {
                assert_eq!(key, "alpha");
                assert_eq!(constraint, "alpha ∈ (0,1)");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_spec_expands_to_evenly_spaced_points() {
        let c = parse_config("grid_min = -3\ngrid_max = 3\ngrid_count = 121").unwrap();
        let pts = c.grid.points();
        assert_eq!(pts.len(), 121);
        assert_eq!(pts[0], -3.0);
        assert_eq!(pts[120], 3.0);
        assert!((pts[1] - pts[0] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_and_type_mismatches() {
        assert!(matches!(parse_config("alpah = 0.3"), Err(Error::Config { key, .. }) if key == "alpah"));
        assert!(matches!(parse_config("alpha = \"x\""), Err(Error::Config { key, .. }) if key == "alpha"));
        assert!(matches!(parse_config("grid_count = 0"), Err(Error::Config { key, .. }) if key == "grid_count"));
        assert!(matches!(parse_config("[sub]\nalpha = 0.3"), Err(Error::Config { .. })));
        assert!(matches!(parse_config("warmup = 5"), Err(Error::Config { key, .. }) if key == "warmup"));
        assert!(matches!(parse_config("kernel = \"tabulated\""), Err(Error::Config { key, .. }) if key == "kernel_table"));
        assert!(parse_config("input = \"a.csv\"\np = 5").is_err());
    }

    #[test]
    fn full_engine_document() {
        let c = parse_config(
            "alpha = 0.3\nwarmup = 40\nboundary = 0.1\nseed = 9\ninput = \"data.csv\"\nkernel = \"tabulated\"\nkernel_table = \"k.csv\"",
        )
        .unwrap();
        assert_eq!(c.alpha, 0.3);
        assert_eq!(c.warmup, Some(40));
        assert_eq!(c.boundary, Some(0.1));
        assert_eq!(c.seed, 9);
        assert_eq!(c.input, InputSource::Csv("data.csv".into()));
        assert_eq!(c.kernel, KernelChoice::Tabulated("k.csv".into()));
    }

    #[test]
    fn study_document() {
        let c = parse_study_config(
            "kind = \"rate\"\nsizes = [200, 2000]\nreplications = 7\neval_projected = [0, 0.5]\nthreads = 2",
            None,
        )
        .unwrap();
        assert_eq!(c.kind, StudyKind::Rate);
        assert_eq!(c.sizes, vec![200, 2000]);
        assert_eq!(c.replications, 7);
        assert_eq!(c.eval_points, EvalPoints::Projected(vec![0.0, 0.5]));
        assert!(parse_study_config("sizes = [3, 2]", Some(StudyKind::Rate)).is_err());
        assert!(parse_study_config("", None).is_err());
        let d = parse_study_config("full_scale = true", Some(StudyKind::Normality)).unwrap();
        assert_eq!(d.replications, 1000);
    }
}
