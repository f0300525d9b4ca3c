//! Run configuration: a flat key=value file with command-line overrides.
//! The merged configuration is the single source of truth echoed into
//! every report.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use girsanov::mc::EstimatorMode;
use girsanov::suite::{default_params, SuiteParams, PRESETS};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Inline scenario families available without a preset.
pub const INLINE_MODELS: [&str; 3] = ["brownian", "poisson", "continuous"];

/// Output formats for reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => err(format!("unknown format '{other}' (expected json or csv)")),
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Exactly one of `preset` / `model` is set.
    pub preset: Option<String>,
    pub model: Option<String>,
    pub params: SuiteParams,
    pub theta: f64,
    pub rate: f64,
    /// Injected drift for the inline brownian model: a command-line
    /// negative control for the tester.
    pub drift: f64,
    pub out_dir: PathBuf,
    pub formats: Vec<ReportFormat>,
    /// The merged key-value view embedded in reports.
    pub echo: BTreeMap<String, String>,
}

/// Raw key-value layer before validation; file values are overridden by
/// flags.
#[derive(Debug, Default, Clone)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn from_file(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(format!("config line {}: expected key=value", lineno + 1));
            };
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn set_if(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.entries.insert(key.to_string(), v);
        }
    }

    fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => match v.parse::<T>() {
                Ok(x) => Ok(Some(x)),
                Err(_) => err(format!("bad value '{v}' for '{key}'")),
            },
        }
    }

    /// Validate and resolve against per-preset defaults.
    pub fn resolve(self, default_out: PathBuf) -> Result<RunConfig, ConfigError> {
        let known = [
            "preset", "model", "paths", "grid", "T", "seed", "p", "theta", "rate",
            "drift", "estimator", "out", "format",
        ];
        for key in self.entries.keys() {
            if !known.contains(&key.as_str()) {
                return err(format!("unknown configuration key '{key}'"));
            }
        }
        let preset = self.entries.get("preset").cloned();
        let model = self.entries.get("model").cloned();
        match (&preset, &model) {
            (Some(_), Some(_)) => {
                return err("exactly one of 'preset' and 'model' may be set, got both")
            }
            (None, None) => return err("one of 'preset' or 'model' is required"),
            _ => {}
        }
        if let Some(p) = &preset {
            if !PRESETS.contains(&p.as_str()) {
                return err(format!(
                    "unknown preset '{p}' (available: {})",
                    PRESETS.join(", ")
                ));
            }
        }
        if let Some(m) = &model {
            if !INLINE_MODELS.contains(&m.as_str()) {
                return err(format!(
                    "unknown model '{m}' (available: {})",
                    INLINE_MODELS.join(", ")
                ));
            }
        }

        let mut params = default_params(preset.as_deref().unwrap_or("inline"));
        if let Some(v) = self.get_parsed::<u64>("paths")? {
            if v == 0 {
                return err("paths must be at least 1");
            }
            params.paths = v;
        }
        if let Some(v) = self.get_parsed::<usize>("grid")? {
            if v == 0 {
                return err("grid must be at least 1");
            }
            params.grid = v;
        }
        if let Some(v) = self.get_parsed::<f64>("T")? {
            if !(v > 0.0) {
                return err("T must be positive");
            }
            params.horizon = v;
        }
        if let Some(v) = self.get_parsed::<u64>("seed")? {
            params.seed = v;
        }
        if let Some(v) = self.get_parsed::<f64>("p")? {
            if !(v > 0.0 && v < 1.0) {
                return err("p must lie in (0, 1)");
            }
            params.p = v;
        }
        if let Some(v) = self.entries.get("estimator") {
            params.estimator = parse_estimator(v)?;
        }
        let theta = self.get_parsed::<f64>("theta")?.unwrap_or(0.5);
        let rate = self.get_parsed::<f64>("rate")?.unwrap_or(1.0);
        let drift = self.get_parsed::<f64>("drift")?.unwrap_or(0.0);
        let out_dir = self
            .entries
            .get("out")
            .map(PathBuf::from)
            .unwrap_or(default_out);
        let formats = match self.entries.get("format") {
            None => vec![ReportFormat::Json, ReportFormat::Csv],
            Some(list) => {
                let mut v = Vec::new();
                for part in list.split(',') {
                    v.push(ReportFormat::parse(part.trim())?);
                }
                v
            }
        };

        let mut echo = self.entries.clone();
        echo.insert("paths".into(), params.paths.to_string());
        echo.insert("grid".into(), params.grid.to_string());
        echo.insert("T".into(), params.horizon.to_string());
        echo.insert("seed".into(), params.seed.to_string());
        echo.insert("p".into(), params.p.to_string());
        echo.insert("estimator".into(), render_estimator(params.estimator));
        echo.insert("out".into(), out_dir.display().to_string());

        Ok(RunConfig { preset, model, params, theta, rate, drift, out_dir, formats, echo })
    }
}

pub fn parse_estimator(s: &str) -> Result<EstimatorMode, ConfigError> {
    if s == "mean" {
        return Ok(EstimatorMode::Mean);
    }
    if let Some(k) = s
        .strip_prefix("median-of-means:")
        .or_else(|| s.strip_prefix("mom:"))
    {
        let blocks: usize = k
            .parse()
            .map_err(|_| ConfigError(format!("bad block count in estimator '{s}'")))?;
        if blocks == 0 {
            return err("estimator block count must be at least 1");
        }
        return Ok(EstimatorMode::MedianOfMeans { blocks });
    }
    err(format!(
        "unknown estimator '{s}' (expected 'mean' or 'median-of-means:<k>')"
    ))
}

pub fn render_estimator(mode: EstimatorMode) -> String {
    match mode {
        EstimatorMode::Mean => "mean".into(),
        EstimatorMode::MedianOfMeans { blocks } => format!("median-of-means:{blocks}"),
    }
}
