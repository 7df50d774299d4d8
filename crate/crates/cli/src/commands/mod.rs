//! Subcommand implementations. Each takes a fully resolved argument struct;
//! flag/config-file merging happens in the binary.

pub mod calibrate;
pub mod compare;
pub mod distances;
pub mod generate;
pub mod synth;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use serde::Serialize;

use commnet::calibration::{
    calibrate as run_calibration, BetaSearch, CalibrationConfig, CalibrationReport, Observed,
};
use commnet::generator::{DeterrenceShape, DeterrenceSpec, GenerationInputs};
use commnet::geodata::{
    build_distance_provider, load_municipalities_csv, DistanceProvider, DistanceStrategy,
    MunicipalityRegistry,
};
use commnet::metrics::DistanceScope;
use commnet::od::{assemble_with_outside_inputs, load_aggregates_csv, load_flows_csv, ODMatrix};

use crate::config::BetaSource;

pub const TOOL_NAME: &str = "commnet";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Loaded and assembled pipeline inputs shared by every subcommand.
pub struct PipelineData {
    pub registry: Arc<MunicipalityRegistry>,
    pub provider: Arc<DistanceProvider>,
    pub inputs: GenerationInputs,
    pub observed: Option<ODMatrix>,
}

impl PipelineData {
    /// In-commuter totals of the region municipalities, used for the
    /// by-difference collapse.
    pub fn region_in_totals(&self) -> &[u64] {
        &self.inputs.in_capacity[..self.registry.region_count()]
    }
}

pub fn load_pipeline(
    municipalities: &Path,
    aggregates: &Path,
    observed: Option<&Path>,
    strategy: DistanceStrategy,
    auto_threshold: usize,
) -> anyhow::Result<PipelineData> {
    let registry = Arc::new(
        load_municipalities_csv(municipalities)
            .with_context(|| format!("loading municipalities `{}`", municipalities.display()))?,
    );
    let records = load_aggregates_csv(aggregates)
        .with_context(|| format!("loading aggregates `{}`", aggregates.display()))?;
    let assembled = assemble_with_outside_inputs(&registry, &records)
        .context("assembling generation inputs from aggregates")?;
    let provider = Arc::new(
        build_distance_provider(registry.clone(), strategy, auto_threshold)
            .context("building the distance provider")?,
    );
    let observed = observed
        .map(|path| {
            load_flows_csv(path, &registry)
                .with_context(|| format!("loading observed flows `{}`", path.display()))
        })
        .transpose()?;
    Ok(PipelineData {
        registry,
        provider: provider.clone(),
        inputs: GenerationInputs {
            distances: provider,
            in_capacity: assembled.in_capacity,
            out_demand: assembled.out_demand,
        },
        observed,
    })
}

/// A resolved exponent plus how it was obtained; carries the calibration
/// report when the source was `calibrate`.
pub struct ResolvedBeta {
    pub spec: DeterrenceSpec,
    pub source: String,
    pub calibration: Option<CalibrationReport>,
}

/// Overrides for the calibration search, shared by the subcommands that may
/// calibrate.
#[derive(Debug, Clone, Copy, Default)]
pub struct SearchOverrides {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_probes: Option<usize>,
}

impl SearchOverrides {
    pub fn apply(&self, mut search: BetaSearch) -> BetaSearch {
        if let Some(lo) = self.lo {
            search.lo = lo;
        }
        if let Some(hi) = self.hi {
            search.hi = hi;
        }
        if let Some(tolerance) = self.tolerance {
            search.rel_tolerance = tolerance;
        }
        if let Some(max_probes) = self.max_probes {
            search.max_probes = max_probes;
        }
        search
    }
}

#[allow(clippy::too_many_arguments)]
pub fn resolve_beta(
    source: BetaSource,
    shape: DeterrenceShape,
    data: &PipelineData,
    scope: DistanceScope,
    base_seed: u64,
    calibration_replications: usize,
    overrides: &SearchOverrides,
    refresh_interval: u64,
) -> anyhow::Result<ResolvedBeta> {
    match source {
        BetaSource::Value(beta) => Ok(ResolvedBeta {
            spec: DeterrenceSpec { shape, beta },
            source: "explicit".to_string(),
            calibration: None,
        }),
        BetaSource::Constant => {
            let constant = commnet::calibration::constant_beta();
            anyhow::ensure!(
                shape == constant.shape,
                "--beta constant is defined for the exponential shape; pass an explicit value for the power law"
            );
            Ok(ResolvedBeta {
                spec: constant.spec(),
                source: "constant".to_string(),
                calibration: None,
            })
        }
        BetaSource::Calibrate => {
            let observed = data
                .observed
                .as_ref()
                .context("--beta calibrate needs --observed flows")?;
            let mut config = CalibrationConfig::new(shape);
            config.replications = calibration_replications;
            config.scope = scope;
            config.base_seed = base_seed;
            config.search = overrides.apply(config.search);
            config.generate.refresh_interval = refresh_interval;
            let report = run_calibration(&data.inputs, Observed::Flows(observed), &config)
                .context("calibrating the deterrence exponent")?;
            Ok(ResolvedBeta {
                spec: DeterrenceSpec {
                    shape,
                    beta: report.beta_average,
                },
                source: "calibrate".to_string(),
                calibration: Some(report),
            })
        }
    }
}

/// Per-replication run provenance written next to every output file set;
/// together with the input files it pins the run down byte for byte. Output
/// locations are deliberately not recorded so that re-running into a
/// different directory yields identical bytes.
#[derive(Debug, Serialize)]
pub struct RunMetadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub rng: &'static str,
    pub base_seed: u64,
    pub replication_index: usize,
    pub replication_seed: u64,
    pub shape: &'static str,
    pub beta: f64,
    pub beta_source: String,
    pub distance_strategy: &'static str,
    pub refresh_interval: u64,
    pub region_municipalities: usize,
    pub municipalities: usize,
    pub total_out_commuters: u64,
    pub total_in_capacity: u64,
    pub municipalities_file: String,
    pub aggregates_file: String,
    pub observed_file: Option<String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing `{}`", path.display()))?;
    Ok(())
}

pub fn replication_dir(out: &Path, replication: usize) -> PathBuf {
    out.join(format!("rep{replication:03}"))
}

/// Mean/min/max summary of a per-replication series.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeriesStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn series_stats(values: &[f64]) -> SeriesStats {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    SeriesStats {
        mean,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Sample coefficient of variation; zero for fewer than two values.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean == 0.0 {
        return 0.0;
    }
    let variance = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (values.len() - 1) as f64;
    variance.sqrt() / mean
}

pub fn display_path(path: &Path) -> String {
    path.display().to_string()
}
