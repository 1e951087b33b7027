//! Experiment configuration: a strict TOML schema with dotted sections.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tubepath::tube::default_radius;
use tubepath::Complex64;

/// Diagnostic for a rejected configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}, key `{k}`: {}", self.message),
            (None, Some(k)) => write!(f, "key `{k}`: {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { key: Some(key.to_string()), line: None, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    #[default]
    Flat,
    /// `g = e^{2α q₁} I`.
    Conformal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialName {
    #[default]
    Free,
    Constant,
    Harmonic,
    Quartic,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteName {
    #[default]
    Reweighted,
    Drifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    #[default]
    Euclidean,
    Lorentzian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleName {
    #[default]
    Auto,
    Heat,
    Mehler,
    Pde,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChartSection {
    pub dim: usize,
    pub metric: MetricName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub potential: PotentialName,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    /// CSV file with `x,V` rows, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
}

impl Default for ChartSection {
    fn default() -> Self {
        Self { dim: 1, metric: MetricName::Flat, alpha: None, potential: PotentialName::Free, omega: None, lambda: None, value: None, table: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSection {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub duration: f64,
    pub hbar: f64,
}

impl Default for PathSection {
    fn default() -> Self {
        Self { start: vec![0.0], end: vec![0.0], duration: 1.0, hbar: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TubeSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coercivity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pole_guard: Option<f64>,
    /// Barrier strength κ; 0 switches confinement off.
    pub kappa: f64,
    /// Barrier exponent m.
    pub power: u32,
}

impl Default for TubeSection {
    fn default() -> Self {
        Self { radius: None, eta: None, delta_e: None, coercivity: None, pole_guard: None, kappa: 0.0, power: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeSection {
    pub sigma: f64,
    pub xi: f64,
    pub steps: usize,
    pub route: RouteName,
    pub max_retries: usize,
}

impl Default for SdeSection {
    fn default() -> Self {
        Self { sigma: 1.0, xi: 0.0, steps: 256, route: RouteName::Reweighted, max_retries: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub samples: usize,
    pub seed: u64,
    pub chunk_size: usize,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    pub workers: usize,
}

impl Default for McSection {
    fn default() -> Self {
        Self { samples: 10_000, seed: 1, chunk_size: 1024, workers: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub mode: ModeName,
    pub oracle: OracleName,
    /// Complex numbers written as strings: "0.5", "-i", "1+2i".
    pub theta: Vec<String>,
    pub series_order: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_bound: Option<f64>,
    /// Interval counts of the partition ladder.
    pub partition_ladder: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_paths: Option<String>,
    pub dump_count: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            mode: ModeName::Euclidean,
            oracle: OracleName::Auto,
            theta: ["0.5", "1", "2", "-i"].map(String::from).to_vec(),
            series_order: 20,
            c_bound: None,
            partition_ladder: vec![8, 16, 32, 64],
            probe_paths: None,
            dump_count: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub chart: ChartSection,
    pub path: PathSection,
    pub tube: TubeSection,
    pub sde: SdeSection,
    pub mc: McSection,
    pub experiment: ExperimentSection,
}

/// Parses `a`, `bi`, `a+bi`, `a-bi`, `i`, `-i`.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return None;
    }
    let Some(body) = s.strip_suffix('i') else {
        return s.parse().ok().map(|re| Complex64::new(re, 0.0));
    };
    // split at the last sign that is not the leading one or part of an exponent
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&j| (bytes[j] == b'+' || bytes[j] == b'-') && !matches!(bytes[j - 1], b'e' | b'E'));
    let imag = |t: &str| -> Option<f64> {
        match t {
            "" | "+" => Some(1.0),
            "-" => Some(-1.0),
            _ => t.parse().ok(),
        }
    };
    match split {
        Some(j) => Some(Complex64::new(body[..j].parse().ok()?, imag(&body[j..])?)),
        None => Some(Complex64::new(0.0, imag(body)?)),
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive and finite, got {v}")))
    }
}

fn unused(key: &str, present: bool, owner: &str) -> Result<(), ConfigError> {
    if present {
        Err(invalid(key, format!("only applies to {owner}")))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    /// Parses TOML text. Unknown keys and type errors are reported with
    /// their line; semantic checks run in [`ExperimentConfig::resolved`].
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| src[..s.start.min(src.len())].matches('\n').count() + 1);
            ConfigError { key: None, line, message: e.message().to_string() }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Validates every field and fills derived defaults, so that the result
    /// is a fixed point: `c.resolved()?.resolved()? == c.resolved()?`.
    pub fn resolved(&self) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        let ch = &mut c.chart;
        if ch.dim == 0 {
            return Err(invalid("chart.dim", "must be at least 1"));
        }
        match ch.metric {
            MetricName::Flat => unused("chart.alpha", ch.alpha.is_some(), "metric = \"conformal\"")?,
            MetricName::Conformal => {
                let a = *ch.alpha.get_or_insert(0.5);
                if !a.is_finite() {
                    return Err(invalid("chart.alpha", "must be finite"));
                }
            }
        }
        let p = ch.potential;
        unused("chart.omega", ch.omega.is_some() && p != PotentialName::Harmonic, "potential = \"harmonic\"")?;
        unused("chart.lambda", ch.lambda.is_some() && p != PotentialName::Quartic, "potential = \"quartic\"")?;
        unused("chart.value", ch.value.is_some() && p != PotentialName::Constant, "potential = \"constant\"")?;
        unused("chart.table", ch.table.is_some() && p != PotentialName::Table, "potential = \"table\"")?;
        match p {
            PotentialName::Free => {}
            PotentialName::Harmonic => positive("chart.omega", *ch.omega.get_or_insert(1.0))?,
            PotentialName::Quartic => positive("chart.lambda", *ch.lambda.get_or_insert(0.25))?,
            PotentialName::Constant => {
                if !ch.value.get_or_insert(1.0).is_finite() {
                    return Err(invalid("chart.value", "must be finite"));
                }
            }
            PotentialName::Table => {
                if ch.table.is_none() {
                    return Err(invalid("chart.table", "required when potential = \"table\""));
                }
                if ch.dim != 1 {
                    return Err(invalid("chart.dim", "a tabulated potential needs dim = 1"));
                }
            }
        }

        let dim = c.chart.dim;
        for (key, v) in [("path.start", &c.path.start), ("path.end", &c.path.end)] {
            if v.len() != dim {
                return Err(invalid(key, format!("expected {dim} coordinates, got {}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(invalid(key, "coordinates must be finite"));
            }
        }
        positive("path.duration", c.path.duration)?;
        positive("path.hbar", c.path.hbar)?;

        let t = &mut c.tube;
        let coercivity = *t.coercivity.get_or_insert(1.0);
        positive("tube.coercivity", coercivity)?;
        let eta = *t.eta.get_or_insert(c.path.hbar / 2.0);
        positive("tube.eta", eta)?;
        if t.radius.is_none() {
            t.radius = Some(default_radius(c.path.hbar, coercivity).map_err(|e| invalid("tube.radius", e.to_string()))?);
        }
        positive("tube.radius", t.radius.unwrap_or_default())?;
        positive("tube.delta_e", *t.delta_e.get_or_insert(eta / c.path.duration))?;
        let guard = *t.pole_guard.get_or_insert(tubepath::tube::DEFAULT_POLE_GUARD);
        if !(guard > 0.0 && guard < 1.0) {
            return Err(invalid("tube.pole_guard", format!("must lie in (0, 1), got {guard}")));
        }
        if !(t.kappa >= 0.0 && t.kappa.is_finite()) {
            return Err(invalid("tube.kappa", format!("must be non-negative, got {}", t.kappa)));
        }
        if t.power < 2 {
            return Err(invalid("tube.power", format!("must be at least 2, got {}", t.power)));
        }

        positive("sde.sigma", c.sde.sigma)?;
        if !c.sde.xi.is_finite() {
            return Err(invalid("sde.xi", "must be finite"));
        }
        if c.sde.steps < 16 {
            return Err(invalid("sde.steps", format!("must be at least 16, got {}", c.sde.steps)));
        }

        if c.mc.samples == 0 {
            return Err(invalid("mc.samples", "must be at least 1"));
        }
        if c.mc.chunk_size == 0 {
            return Err(invalid("mc.chunk_size", "must be at least 1"));
        }

        let e = &mut c.experiment;
        for s in &e.theta {
            if parse_complex(s).is_none() {
                return Err(invalid("experiment.theta", format!("`{s}` is not a complex number")));
            }
        }
        if e.series_order > tubepath::integrator::MAX_SERIES_ORDER {
            return Err(invalid("experiment.series_order", format!("must be at most {}", tubepath::integrator::MAX_SERIES_ORDER)));
        }
        if let Some(cb) = e.c_bound {
            positive("experiment.c_bound", cb)?;
        }
        if e.partition_ladder.iter().any(|&n| n == 0 || !c.sde.steps.is_multiple_of(n)) {
            return Err(invalid("experiment.partition_ladder", format!("every rung must divide sde.steps = {}", c.sde.steps)));
        }
        if e.oracle == OracleName::Auto {
            let flat = c.chart.metric == MetricName::Flat;
            e.oracle = match (c.chart.potential, flat, dim, e.mode) {
                (PotentialName::Free, true, _, ModeName::Euclidean) => OracleName::Heat,
                (PotentialName::Harmonic, true, 1, ModeName::Euclidean) => OracleName::Mehler,
                (_, true, 1, _) => OracleName::Pde,
                _ => OracleName::None,
            };
        }
        Ok(c)
    }

    pub fn thetas(&self) -> Vec<Complex64> {
        self.experiment.theta.iter().filter_map(|s| parse_complex(s)).collect()
    }
}

/// A parsed config file and the directory its relative paths resolve against.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub source: String,
    pub base_dir: PathBuf,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError { key: None, line: None, message: format!("{}: {e}", path.display()) })?;
        let config = ExperimentConfig::from_toml(&source)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, source, base_dir })
    }

    /// Built-in defaults, used when no config file is given.
    pub fn defaults() -> Self {
        Self { config: ExperimentConfig::default(), source: String::new(), base_dir: PathBuf::from(".") }
    }
}

/// Attaches the source line of the offending `section.key` when it is
/// written explicitly in `src`.
pub fn with_line(src: &str, mut err: ConfigError) -> ConfigError {
    if err.line.is_some() {
        return err;
    }
    let Some((section, key)) = err.key.as_deref().and_then(|k| k.split_once('.')) else {
        return err;
    };
    let mut current = String::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs = lhs.trim();
        if (current == section && lhs == key) || (current.is_empty() && lhs == format!("{section}.{key}")) {
            err.line = Some(i + 1);
            break;
        }
    }
    err
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_literals() {
        let c = |re, im| Some(Complex64::new(re, im));
        assert_eq!(parse_complex("0.5"), c(0.5, 0.0));
        assert_eq!(parse_complex("-i"), c(0.0, -1.0));
        assert_eq!(parse_complex("i"), c(0.0, 1.0));
        assert_eq!(parse_complex("2i"), c(0.0, 2.0));
        assert_eq!(parse_complex("1+2i"), c(1.0, 2.0));
        assert_eq!(parse_complex("1e-3-0.5i"), c(1e-3, -0.5));
        assert_eq!(parse_complex(" -1 - i "), c(-1.0, -1.0));
        assert_eq!(parse_complex("x"), None);
        assert_eq!(parse_complex(""), None);
    }

    #[test]
    fn defaults_resolve_to_a_fixed_point() {
        let c = ExperimentConfig::default().resolved().unwrap();
        assert_eq!(c.resolved().unwrap(), c);
        let text = c.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap().resolved().unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn round_trip_with_every_section() {
        let src = r#"
[chart]
dim = 1
potential = "harmonic"
omega = 1.5

[path]
start = [0.0]
end = [0.3]
duration = 0.8

[tube]
radius = 0.9
kappa = 0.5
power = 4

[sde]
sigma = 1.0
xi = 0.25
steps = 128
route = "drifted"

[mc]
samples = 500
seed = 9

[experiment]
theta = ["0.5", "1+i", "-i"]
partition_ladder = [4, 8, 16, 32]
"#;
        let c = ExperimentConfig::from_toml(src).unwrap().resolved().unwrap();
        assert_eq!(c.tube.radius, Some(0.9));
        assert_eq!(c.tube.eta, Some(0.5));
        assert_eq!(c.experiment.oracle, OracleName::Mehler);
        let text = c.to_toml();
        let again = ExperimentConfig::from_toml(&text).unwrap().resolved().unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_toml(), text);
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let src = "[tube]\nradius = 1.0\nradiuss = 2.0\n";
        let err = ExperimentConfig::from_toml(src).unwrap_err();
        assert_eq!(err.line, Some(3));
        assert!(err.message.contains("radiuss"), "{err}");
    }

    #[test]
    fn semantic_errors_name_key_and_line() {
        let src = "[path]\nduration = 1.0\nhbar = -2.0\n";
        let c = ExperimentConfig::from_toml(src).unwrap();
        let err = with_line(src, c.resolved().unwrap_err());
        assert_eq!(err.key.as_deref(), Some("path.hbar"));
        assert_eq!(err.line, Some(3));

        let src = "chart.potential = \"free\"\nchart.omega = 2.0\n";
        let c = ExperimentConfig::from_toml(src).unwrap();
        let err = with_line(src, c.resolved().unwrap_err());
        assert_eq!(err.key.as_deref(), Some("chart.omega"));
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn dimension_mismatch() {
        let mut c = ExperimentConfig::default();
        c.chart.dim = 2;
        assert_eq!(c.resolved().unwrap_err().key.as_deref(), Some("path.start"));
    }

    #[test]
    fn ladder_must_lie_on_the_grid() {
        let mut c = ExperimentConfig::default();
        c.experiment.partition_ladder = vec![8, 16, 24];
        assert_eq!(c.resolved().unwrap_err().key.as_deref(), Some("experiment.partition_ladder"));
    }
}
