//! `commnet synth`: write a self-consistent synthetic fixture (municipality
//! registry, aggregates, ground-truth flows) for tests and benchmarks.

use std::path::PathBuf;

use anyhow::Context;
use serde::Serialize;

use commnet::generator::{DeterrenceSpec, RNG_ALGORITHM};
use commnet::geodata::{write_municipalities_csv, DistanceStrategy};
use commnet::od::{write_aggregates_csv, write_flows_csv};

use super::{write_json, TOOL_NAME, TOOL_VERSION};
use crate::synth::{synthesize, SynthParams};

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub region: usize,
    pub total: usize,
    pub commuters: u64,
    pub extent: f64,
    pub beta: f64,
    pub shape: commnet::generator::DeterrenceShape,
    pub slack: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub strategy: DistanceStrategy,
    pub auto_threshold: usize,
    pub refresh_interval: u64,
}

#[derive(Debug, Serialize)]
struct SynthMetadata {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    rng: &'static str,
    seed: u64,
    region_municipalities: usize,
    municipalities: usize,
    commuters: u64,
    extent_m: f64,
    planted_beta: f64,
    shape: &'static str,
    slack: f64,
    refresh_interval: u64,
}

pub fn run(args: &SynthArgs) -> anyhow::Result<()> {
    let fixture = synthesize(&SynthParams {
        region: args.region,
        total: args.total,
        commuters: args.commuters,
        extent: args.extent,
        spec: DeterrenceSpec {
            shape: args.shape,
            beta: args.beta,
        },
        seed: args.seed,
        slack: args.slack,
        strategy: args.strategy,
        auto_threshold: args.auto_threshold,
        refresh_interval: args.refresh_interval,
    })?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory `{}`", args.out.display()))?;
    write_municipalities_csv(&args.out.join("municipalities.csv"), &fixture.registry)?;
    write_aggregates_csv(&args.out.join("aggregates.csv"), &fixture.aggregates)?;
    write_flows_csv(&args.out.join("ground_truth_flows.csv"), &fixture.ground_truth)?;
    write_json(
        &args.out.join("synth_metadata.json"),
        &SynthMetadata {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            command: "synth",
            rng: RNG_ALGORITHM,
            seed: args.seed,
            region_municipalities: args.region,
            municipalities: args.total,
            commuters: args.commuters,
            extent_m: args.extent,
            planted_beta: args.beta,
            shape: args.shape.name(),
            slack: args.slack,
            refresh_interval: args.refresh_interval,
        },
    )?;
    println!(
        "synthesized fixture: {} region + {} outside municipalities, {} commuters -> `{}`",
        args.region,
        args.total - args.region,
        args.commuters,
        args.out.display()
    );
    Ok(())
}
