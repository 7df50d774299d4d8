//! `commnet calibrate`: fit the deterrence exponent against observed flows
//! and write the full report, probe traces included.

use std::path::PathBuf;

use anyhow::Context;
use serde::Serialize;

use commnet::calibration::{
    calibrate, AveragingMode, CalibrationConfig, CalibrationReport, Observed,
};
use commnet::geodata::DistanceStrategy;
use commnet::metrics::DistanceScope;

use super::{load_pipeline, write_json, SearchOverrides, TOOL_NAME, TOOL_VERSION};

#[derive(Debug, Clone)]
pub struct CalibrateArgs {
    pub municipalities: PathBuf,
    pub aggregates: PathBuf,
    pub observed: PathBuf,
    pub shape: commnet::generator::DeterrenceShape,
    pub replications: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub strategy: DistanceStrategy,
    pub auto_threshold: usize,
    pub refresh_interval: u64,
    pub scope: DistanceScope,
    pub averaging: AveragingMode,
    pub search: SearchOverrides,
}

#[derive(Debug, Serialize)]
struct CalibrateOutput {
    tool: &'static str,
    version: &'static str,
    config: CalibrationConfig,
    report: CalibrationReport,
}

pub fn run(args: &CalibrateArgs) -> anyhow::Result<()> {
    let data = load_pipeline(
        &args.municipalities,
        &args.aggregates,
        Some(&args.observed),
        args.strategy,
        args.auto_threshold,
    )?;
    let observed = data.observed.as_ref().expect("loaded above");

    let mut config = CalibrationConfig::new(args.shape);
    config.replications = args.replications;
    config.scope = args.scope;
    config.base_seed = args.seed;
    config.mode = args.averaging;
    config.search = args.search.apply(config.search);
    config.generate.refresh_interval = args.refresh_interval;

    let report = calibrate(&data.inputs, Observed::Flows(observed), &config)
        .context("calibrating the deterrence exponent")?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory `{}`", args.out.display()))?;
    write_json(
        &args.out.join("calibration_report.json"),
        &CalibrateOutput {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            config,
            report: report.clone(),
        },
    )?;
    println!(
        "calibrated beta over {} replication(s): average {} (min {}, max {})",
        args.replications, report.beta_average, report.beta_min, report.beta_max
    );
    Ok(())
}
