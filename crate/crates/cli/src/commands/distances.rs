//! `commnet distances`: emit weighted commuting distance samples and
//! display-binned density tables, plus KS values when observed flows are
//! given.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use commnet::generator::{generate, GenerateOptions};
use commnet::geodata::DistanceStrategy;
use commnet::metrics::{
    binned_density, distance_distribution, ks_distance, DistanceScope,
    WeightedDistanceDistribution,
};

use super::{load_pipeline, replication_dir, resolve_beta, write_json, SearchOverrides};
use crate::config::BetaSource;

#[derive(Debug, Clone)]
pub struct DistancesArgs {
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
    pub bins: usize,
    pub calibration_replications: usize,
    pub search: SearchOverrides,
}

#[derive(Debug, Serialize)]
struct KsEntry {
    replication_seed: u64,
    ks: f64,
}

#[derive(Debug, Serialize)]
struct KsOutput {
    scope: DistanceScope,
    per_replication: Vec<KsEntry>,
}

fn write_distribution_csv(
    path: &Path,
    distribution: &WeightedDistanceDistribution,
) -> anyhow::Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("writing `{}`", path.display()))?;
    writer.write_record(["distance_m", "weight"])?;
    for &(distance, weight) in distribution.steps() {
        writer.write_record(&[distance.to_string(), weight.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

fn write_density_csv(
    path: &Path,
    distribution: &WeightedDistanceDistribution,
    bins: usize,
) -> anyhow::Result<()> {
    let table = binned_density(distribution, bins).context("binning the density table")?;
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("writing `{}`", path.display()))?;
    writer.write_record(["bin_lo_m", "bin_hi_m", "density"])?;
    for bin in table {
        writer.write_record(&[
            bin.lo.to_string(),
            bin.hi.to_string(),
            bin.density.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn run(args: &DistancesArgs) -> anyhow::Result<()> {
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

    let observed_distribution = data
        .observed
        .as_ref()
        .map(|observed| distance_distribution(observed, &data.provider, args.scope))
        .transpose()
        .context("building the observed distance distribution")?;
    if let Some(observed) = &observed_distribution {
        write_distribution_csv(&args.out.join("observed_distribution.csv"), observed)?;
        write_density_csv(&args.out.join("observed_density.csv"), observed, args.bins)?;
    }

    let options = GenerateOptions {
        refresh_interval: args.refresh_interval,
    };
    let mut ks_entries = Vec::new();
    for replication in 0..args.replications {
        let seed = args.seed.wrapping_add(replication as u64);
        let simulated = generate(&data.inputs, &resolved.spec, seed, &options)
            .with_context(|| format!("generation failed for replication {replication}"))?;
        let distribution = distance_distribution(&simulated, &data.provider, args.scope)?;
        let dir = replication_dir(&args.out, replication);
        std::fs::create_dir_all(&dir).with_context(|| format!("creating `{}`", dir.display()))?;
        write_distribution_csv(&dir.join("distribution.csv"), &distribution)?;
        write_density_csv(&dir.join("density.csv"), &distribution, args.bins)?;
        if let Some(observed) = &observed_distribution {
            ks_entries.push(KsEntry {
                replication_seed: seed,
                ks: ks_distance(&distribution, observed)?,
            });
        }
    }
    if !ks_entries.is_empty() {
        write_json(
            &args.out.join("ks.json"),
            &KsOutput {
                scope: args.scope,
                per_replication: ks_entries,
            },
        )?;
    }
    println!(
        "wrote distance distributions for {} replication(s) under `{}`",
        args.replications,
        args.out.display()
    );
    Ok(())
}
