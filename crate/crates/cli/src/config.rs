//! Option parsing shared between command-line flags and the optional TOML
//! config file. The file uses the same keys as the flags; flags win.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

use commnet::calibration::AveragingMode;
use commnet::generator::DeterrenceShape;
use commnet::geodata::DistanceStrategy;
use commnet::metrics::DistanceScope;

/// Where the generation exponent comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSource {
    /// Explicit value given on the command line or in the config file.
    Value(f64),
    /// The built-in calibrated constant (exponential shape).
    Constant,
    /// Run a calibration against the observed flows first.
    Calibrate,
}

impl fmt::Display for BetaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaSource::Value(v) => write!(f, "explicit:{v}"),
            BetaSource::Constant => write!(f, "constant"),
            BetaSource::Calibrate => write!(f, "calibrate"),
        }
    }
}

pub fn parse_beta_source(s: &str) -> Result<BetaSource, String> {
    match s {
        "constant" => Ok(BetaSource::Constant),
        "calibrate" => Ok(BetaSource::Calibrate),
        other => other
            .parse::<f64>()
            .map(BetaSource::Value)
            .map_err(|_| format!("expected a float, `constant` or `calibrate`, got `{other}`")),
    }
}

pub fn parse_shape(s: &str) -> Result<DeterrenceShape, String> {
    match s {
        "power" => Ok(DeterrenceShape::Power),
        "exp" | "exponential" => Ok(DeterrenceShape::Exponential),
        other => Err(format!("expected `power` or `exp`, got `{other}`")),
    }
}

pub fn parse_strategy(s: &str) -> Result<DistanceStrategy, String> {
    match s {
        "dense" => Ok(DistanceStrategy::Dense),
        "lazy" => Ok(DistanceStrategy::Lazy),
        "auto" => Ok(DistanceStrategy::Auto),
        other => Err(format!("expected `dense`, `lazy` or `auto`, got `{other}`")),
    }
}

pub fn parse_scope(s: &str) -> Result<DistanceScope, String> {
    match s {
        "region-only" | "region_only" => Ok(DistanceScope::RegionOnly),
        "region-and-outside" | "region_and_outside" => Ok(DistanceScope::RegionAndOutside),
        other => Err(format!(
            "expected `region-only` or `region-and-outside`, got `{other}`"
        )),
    }
}

pub fn parse_averaging(s: &str) -> Result<AveragingMode, String> {
    match s {
        "per-replication" | "per_replication" => Ok(AveragingMode::PerReplicationMinimizers),
        "averaged-ks" | "averaged_ks" => Ok(AveragingMode::MinimizeAveragedKs),
        other => Err(format!(
            "expected `per-replication` or `averaged-ks`, got `{other}`"
        )),
    }
}

/// Optional config file, same keys as the flags (kebab-case). Flags win over
/// file values; built-in defaults apply last.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub municipalities: Option<PathBuf>,
    pub aggregates: Option<PathBuf>,
    pub observed: Option<PathBuf>,
    pub shape: Option<String>,
    pub beta: Option<String>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub distance_strategy: Option<String>,
    pub auto_threshold: Option<usize>,
    pub refresh_interval: Option<u64>,
    pub bins: Option<usize>,
    pub scope: Option<String>,
    pub stability_threshold: Option<f64>,
    pub calibration_replications: Option<usize>,
    pub beta_lo: Option<f64>,
    pub beta_hi: Option<f64>,
    pub beta_tolerance: Option<f64>,
    pub max_probes: Option<usize>,
    pub averaging: Option<String>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub commuters: Option<u64>,
    pub extent: Option<f64>,
    pub slack: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file `{}`", path.display()))?;
        toml::from_str(&text)
            .with_context(|| format!("parsing config file `{}`", path.display()))
    }

    pub fn shape(&self) -> anyhow::Result<Option<DeterrenceShape>> {
        self.shape
            .as_deref()
            .map(|s| parse_shape(s).map_err(anyhow::Error::msg))
            .transpose()
    }

    pub fn beta(&self) -> anyhow::Result<Option<BetaSource>> {
        self.beta
            .as_deref()
            .map(|s| parse_beta_source(s).map_err(anyhow::Error::msg))
            .transpose()
    }

    pub fn distance_strategy(&self) -> anyhow::Result<Option<DistanceStrategy>> {
        self.distance_strategy
            .as_deref()
            .map(|s| parse_strategy(s).map_err(anyhow::Error::msg))
            .transpose()
    }

    pub fn scope(&self) -> anyhow::Result<Option<DistanceScope>> {
        self.scope
            .as_deref()
            .map(|s| parse_scope(s).map_err(anyhow::Error::msg))
            .transpose()
    }

    pub fn averaging(&self) -> anyhow::Result<Option<AveragingMode>> {
        self.averaging
            .as_deref()
            .map(|s| parse_averaging(s).map_err(anyhow::Error::msg))
            .transpose()
    }
}
