//! `commnet generate`: synthesize flow matrices from aggregate counts and
//! write one file set per replication.

use std::path::PathBuf;

use anyhow::Context;
use rayon::prelude::*;

use commnet::generator::{generate, GenerateOptions, RNG_ALGORITHM};
use commnet::geodata::DistanceStrategy;
use commnet::metrics::DistanceScope;
use commnet::od::{collapse_to_region_plus_outside, write_flows_csv, write_region_plus_outside_csv};

use super::{
    display_path, load_pipeline, replication_dir, resolve_beta, write_json, RunMetadata,
    SearchOverrides, TOOL_NAME, TOOL_VERSION,
};
use crate::config::BetaSource;

#[derive(Debug, Clone)]
pub struct GenerateArgs {
    pub municipalities: PathBuf,
    pub aggregates: PathBuf,
    pub observed: Option<PathBuf>,
    pub shape: commnet::generator::DeterrenceShape,
    pub beta: BetaSource,
    pub replications: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub strategy: DistanceStrategy,
    pub auto_threshold: usize,
    pub refresh_interval: u64,
    pub scope: DistanceScope,
    pub calibration_replications: usize,
    pub search: SearchOverrides,
}

pub fn run(args: &GenerateArgs) -> anyhow::Result<()> {
    anyhow::ensure!(args.replications >= 1, "need at least one replication");
    let data = load_pipeline(
        &args.municipalities,
        &args.aggregates,
        args.observed.as_deref(),
        args.strategy,
        args.auto_threshold,
    )?;
    let resolved = resolve_beta(
        args.beta,
        args.shape,
        &data,
        args.scope,
        args.seed,
        args.calibration_replications,
        &args.search,
        args.refresh_interval,
    )?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory `{}`", args.out.display()))?;
    if let Some(report) = &resolved.calibration {
        write_json(&args.out.join("calibration_report.json"), report)?;
    }

    let options = GenerateOptions {
        refresh_interval: args.refresh_interval,
    };
    (0..args.replications)
        .into_par_iter()
        .try_for_each(|replication| -> anyhow::Result<()> {
            let seed = args.seed.wrapping_add(replication as u64);
            let full = generate(&data.inputs, &resolved.spec, seed, &options)
                .with_context(|| format!("generation failed for replication {replication}"))?;
            let collapsed = collapse_to_region_plus_outside(&full, data.region_in_totals())
                .context("collapsing to the region-plus-outside table")?;
            let dir = replication_dir(&args.out, replication);
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("creating `{}`", dir.display()))?;
            write_flows_csv(&dir.join("flows_full.csv"), &full)?;
            write_region_plus_outside_csv(&dir.join("flows_collapsed.csv"), &collapsed)?;
            write_json(
                &dir.join("metadata.json"),
                &RunMetadata {
                    tool: TOOL_NAME,
                    version: TOOL_VERSION,
                    command: "generate",
                    rng: RNG_ALGORITHM,
                    base_seed: args.seed,
                    replication_index: replication,
                    replication_seed: seed,
                    shape: resolved.spec.shape.name(),
                    beta: resolved.spec.beta,
                    beta_source: resolved.source.clone(),
                    distance_strategy: data.provider.strategy_name(),
                    refresh_interval: args.refresh_interval,
                    region_municipalities: data.registry.region_count(),
                    municipalities: data.registry.total_count(),
                    total_out_commuters: data.inputs.total_demand(),
                    total_in_capacity: data.inputs.total_capacity(),
                    municipalities_file: display_path(&args.municipalities),
                    aggregates_file: display_path(&args.aggregates),
                    observed_file: args.observed.as_deref().map(display_path),
                },
            )?;
            Ok(())
        })?;

    println!(
        "generated {} replication(s) of {} commuters ({} shape, beta {}) under `{}`",
        args.replications,
        data.inputs.total_demand(),
        resolved.spec.shape.name(),
        resolved.spec.beta,
        args.out.display()
    );
    Ok(())
}
