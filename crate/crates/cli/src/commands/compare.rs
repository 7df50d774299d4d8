//! `commnet compare`: generate replications and score them against observed
//! flows with the common-part-of-commuters index and the KS distance.

use std::path::PathBuf;

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use commnet::generator::{generate, GenerateOptions};
use commnet::geodata::DistanceStrategy;
use commnet::metrics::{
    cpc, cpc_regional_block, distance_distribution, ks_distance, nc, ncc, ComparisonReport,
    DistanceScope,
};
use commnet::od::collapse_to_region_plus_outside;

use super::{
    coefficient_of_variation, load_pipeline, resolve_beta, series_stats, write_json, SearchOverrides,
    SeriesStats, TOOL_NAME, TOOL_VERSION,
};
use crate::config::BetaSource;

#[derive(Debug, Clone)]
pub struct CompareArgs {
    pub municipalities: PathBuf,
    pub aggregates: PathBuf,
    pub observed: PathBuf,
    pub shape: commnet::generator::DeterrenceShape,
    pub beta: BetaSource,
    pub replications: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub strategy: DistanceStrategy,
    pub auto_threshold: usize,
    pub refresh_interval: u64,
    pub scope: DistanceScope,
    /// Soft warning threshold on the CPC coefficient of variation across
    /// replications.
    pub stability_threshold: f64,
    pub calibration_replications: usize,
    pub search: SearchOverrides,
}

#[derive(Debug, Serialize)]
struct StabilityReport {
    cpc_coefficient_of_variation: f64,
    threshold: f64,
    within_threshold: bool,
}

#[derive(Debug, Serialize)]
struct CompareOutput {
    tool: &'static str,
    version: &'static str,
    scope: DistanceScope,
    shape: &'static str,
    beta: f64,
    beta_source: String,
    replications: usize,
    base_seed: u64,
    per_replication: Vec<ComparisonReport>,
    cpc_regional_block_per_replication: Vec<f64>,
    cpc: SeriesStats,
    cpc_regional_block: SeriesStats,
    ks: SeriesStats,
    stability: StabilityReport,
}

pub fn run(args: &CompareArgs) -> anyhow::Result<()> {
    anyhow::ensure!(args.replications >= 1, "need at least one replication");
    let data = load_pipeline(
        &args.municipalities,
        &args.aggregates,
        Some(&args.observed),
        args.strategy,
        args.auto_threshold,
    )?;
    let observed = data.observed.as_ref().expect("loaded above");
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

    let observed_collapsed = collapse_to_region_plus_outside(observed, data.region_in_totals())
        .context("collapsing the observed flows")?
        .to_od_matrix();
    let observed_block_dim = data.registry.region_count();
    let observed_block = observed
        .leading_block(observed_block_dim)
        .context("extracting the observed region block")?;
    let observed_distribution = distance_distribution(observed, &data.provider, args.scope)
        .context("building the observed distance distribution")?;

    let options = GenerateOptions {
        refresh_interval: args.refresh_interval,
    };
    let results: Vec<(ComparisonReport, f64)> = (0..args.replications)
        .into_par_iter()
        .map(|replication| -> anyhow::Result<(ComparisonReport, f64)> {
            let seed = args.seed.wrapping_add(replication as u64);
            let simulated = generate(&data.inputs, &resolved.spec, seed, &options)
                .with_context(|| format!("generation failed for replication {replication}"))?;
            let collapsed = collapse_to_region_plus_outside(&simulated, data.region_in_totals())?
                .to_od_matrix();
            let simulated_distribution =
                distance_distribution(&simulated, &data.provider, args.scope)?;
            let report = ComparisonReport {
                ncc: ncc(&collapsed, &observed_collapsed)?,
                nc_observed: nc(&observed_collapsed),
                nc_simulated: nc(&collapsed),
                cpc: cpc(&collapsed, &observed_collapsed)?,
                ks: ks_distance(&simulated_distribution, &observed_distribution)?,
                scope: args.scope,
                replication_seed: seed,
            };
            let regional = cpc_regional_block(&simulated, &observed_block)?;
            Ok((report, regional))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let per_replication: Vec<ComparisonReport> = results.iter().map(|(r, _)| r.clone()).collect();
    let regional: Vec<f64> = results.iter().map(|&(_, r)| r).collect();
    let cpc_values: Vec<f64> = per_replication.iter().map(|r| r.cpc).collect();
    let ks_values: Vec<f64> = per_replication.iter().map(|r| r.ks).collect();
    let cv = coefficient_of_variation(&cpc_values);
    let stability = StabilityReport {
        cpc_coefficient_of_variation: cv,
        threshold: args.stability_threshold,
        within_threshold: cv <= args.stability_threshold,
    };
    if !stability.within_threshold {
        eprintln!(
            "warning: CPC varies across replications (coefficient of variation {cv:.4} > {})",
            args.stability_threshold
        );
    }

    let output = CompareOutput {
        tool: TOOL_NAME,
        version: TOOL_VERSION,
        scope: args.scope,
        shape: resolved.spec.shape.name(),
        beta: resolved.spec.beta,
        beta_source: resolved.source.clone(),
        replications: args.replications,
        base_seed: args.seed,
        cpc: series_stats(&cpc_values),
        cpc_regional_block: series_stats(&regional),
        ks: series_stats(&ks_values),
        per_replication,
        cpc_regional_block_per_replication: regional,
        stability,
    };
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory `{}`", args.out.display()))?;
    if let Some(report) = &resolved.calibration {
        write_json(&args.out.join("calibration_report.json"), report)?;
    }
    write_json(&args.out.join("compare_report.json"), &output)?;
    println!(
        "compared {} replication(s): mean CPC {:.4} (regional block {:.4}), mean KS {:.4}",
        args.replications, output.cpc.mean, output.cpc_regional_block.mean, output.ks.mean
    );
    Ok(())
}
