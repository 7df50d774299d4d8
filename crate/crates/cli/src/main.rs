//! Command-line entry point. Flags are merged with the optional TOML config
//! file (flags win), then dispatched to the command implementations. Errors
//! are printed to stderr as one JSON object and exit with status 1.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use commnet::calibration::AveragingMode;
use commnet::generator::{DeterrenceShape, DEFAULT_REFRESH_INTERVAL};
use commnet::geodata::{DistanceStrategy, DEFAULT_AUTO_THRESHOLD};
use commnet::metrics::{DistanceScope, DEFAULT_DENSITY_BINS};

use commnet_cli::commands::{self, SearchOverrides};
use commnet_cli::config::{
    parse_averaging, parse_beta_source, parse_scope, parse_shape, parse_strategy, BetaSource,
    FileConfig,
};

#[derive(Parser)]
#[command(
    name = "commnet",
    version,
    about = "Synthesize, calibrate and compare municipality-level commuting networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate commuting flows from aggregate in/out-commuter counts
    Generate(GenerateCli),
    /// Generate replications and score them against observed flows
    Compare(CompareCli),
    /// Fit the deterrence exponent against observed flows
    Calibrate(CalibrateCli),
    /// Emit commuting distance distributions and density tables
    Distances(DistancesCli),
    /// Synthesize a random self-consistent test fixture
    Synth(SynthCli),
}

#[derive(Args)]
struct CommonFlags {
    /// Municipality CSV `id,x,y,in_region` (coordinates in meters)
    #[arg(long)]
    municipalities: Option<PathBuf>,
    /// Aggregates CSV `id,in_commuters,out_commuters`
    #[arg(long)]
    aggregates: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional TOML config file (same keys as the flags; flags win)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Distance strategy: dense, lazy or auto
    #[arg(long, value_parser = parse_strategy)]
    distance_strategy: Option<DistanceStrategy>,
    /// Cell-count threshold at which `auto` stops precomputing distances
    #[arg(long)]
    auto_threshold: Option<usize>,
    /// Assignments between from-scratch refreshes of the sampler's weight totals
    #[arg(long)]
    refresh_interval: Option<u64>,
    /// Base seed; replication r runs with seed+r
    #[arg(long)]
    seed: Option<u64>,
    /// Distance-distribution scope: region-only or region-and-outside
    #[arg(long, value_parser = parse_scope)]
    scope: Option<DistanceScope>,
}

#[derive(Args)]
struct SearchFlags {
    /// Lower end of the calibration bracket
    #[arg(long)]
    beta_lo: Option<f64>,
    /// Upper end of the calibration bracket
    #[arg(long)]
    beta_hi: Option<f64>,
    /// Relative bracket-width tolerance of the calibration search
    #[arg(long)]
    beta_tolerance: Option<f64>,
    /// Probe budget of the calibration search
    #[arg(long)]
    max_probes: Option<usize>,
}

impl SearchFlags {
    fn overrides(&self, file: &FileConfig) -> SearchOverrides {
        SearchOverrides {
            lo: self.beta_lo.or(file.beta_lo),
            hi: self.beta_hi.or(file.beta_hi),
            tolerance: self.beta_tolerance.or(file.beta_tolerance),
            max_probes: self.max_probes.or(file.max_probes),
        }
    }
}

#[derive(Args)]
struct GenerateCli {
    #[command(flatten)]
    common: CommonFlags,
    /// Observed flows CSV (required with `--beta calibrate`)
    #[arg(long)]
    observed: Option<PathBuf>,
    /// Deterrence shape: power or exp
    #[arg(long, value_parser = parse_shape)]
    shape: Option<DeterrenceShape>,
    /// Exponent source: a float, `constant` or `calibrate`
    #[arg(long, value_parser = parse_beta_source)]
    beta: Option<BetaSource>,
    /// Number of replications to generate
    #[arg(long)]
    replications: Option<usize>,
    /// Replications used when `--beta calibrate`
    #[arg(long)]
    calibration_replications: Option<usize>,
    #[command(flatten)]
    search: SearchFlags,
}

#[derive(Args)]
struct CompareCli {
    #[command(flatten)]
    common: CommonFlags,
    /// Observed flows CSV
    #[arg(long)]
    observed: Option<PathBuf>,
    #[arg(long, value_parser = parse_shape)]
    shape: Option<DeterrenceShape>,
    #[arg(long, value_parser = parse_beta_source)]
    beta: Option<BetaSource>,
    #[arg(long)]
    replications: Option<usize>,
    /// Soft warning threshold on the CPC coefficient of variation
    #[arg(long)]
    stability_threshold: Option<f64>,
    #[arg(long)]
    calibration_replications: Option<usize>,
    #[command(flatten)]
    search: SearchFlags,
}

#[derive(Args)]
struct CalibrateCli {
    #[command(flatten)]
    common: CommonFlags,
    /// Observed flows CSV
    #[arg(long)]
    observed: Option<PathBuf>,
    #[arg(long, value_parser = parse_shape)]
    shape: Option<DeterrenceShape>,
    #[arg(long)]
    replications: Option<usize>,
    /// per-replication (minimize each, average the minimizers) or averaged-ks
    #[arg(long, value_parser = parse_averaging)]
    averaging: Option<AveragingMode>,
    #[command(flatten)]
    search: SearchFlags,
}

#[derive(Args)]
struct DistancesCli {
    #[command(flatten)]
    common: CommonFlags,
    /// Observed flows CSV (adds observed tables and KS sidecar)
    #[arg(long)]
    observed: Option<PathBuf>,
    #[arg(long, value_parser = parse_shape)]
    shape: Option<DeterrenceShape>,
    #[arg(long, value_parser = parse_beta_source)]
    beta: Option<BetaSource>,
    #[arg(long)]
    replications: Option<usize>,
    /// Display bins of the density tables
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    calibration_replications: Option<usize>,
    #[command(flatten)]
    search: SearchFlags,
}

#[derive(Args)]
struct SynthCli {
    #[command(flatten)]
    common: CommonFlags,
    /// Region municipality count
    #[arg(long)]
    n: Option<usize>,
    /// Total municipality count (region + outside)
    #[arg(long)]
    m: Option<usize>,
    /// Total out-commuters
    #[arg(long)]
    commuters: Option<u64>,
    /// Side of the square extent, meters
    #[arg(long)]
    extent: Option<f64>,
    /// Planted exponent of the ground-truth network
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_parser = parse_shape)]
    shape: Option<DeterrenceShape>,
    /// Total in-commuter capacity as a multiple of `commuters`
    #[arg(long)]
    slack: Option<f64>,
}

struct CommonResolved {
    municipalities: PathBuf,
    aggregates: PathBuf,
    out: PathBuf,
    strategy: DistanceStrategy,
    auto_threshold: usize,
    refresh_interval: u64,
    seed: u64,
    scope: DistanceScope,
}

fn resolve_common(flags: &CommonFlags, file: &FileConfig, needs_inputs: bool) -> anyhow::Result<CommonResolved> {
    let municipalities = flags
        .municipalities
        .clone()
        .or_else(|| file.municipalities.clone());
    let aggregates = flags.aggregates.clone().or_else(|| file.aggregates.clone());
    let (municipalities, aggregates) = if needs_inputs {
        (
            municipalities.context("--municipalities is required")?,
            aggregates.context("--aggregates is required")?,
        )
    } else {
        (
            municipalities.unwrap_or_default(),
            aggregates.unwrap_or_default(),
        )
    };
    Ok(CommonResolved {
        municipalities,
        aggregates,
        out: flags
            .out
            .clone()
            .or_else(|| file.out.clone())
            .context("--out is required")?,
        strategy: flags
            .distance_strategy
            .or(file.distance_strategy()?)
            .unwrap_or(DistanceStrategy::Auto),
        auto_threshold: flags
            .auto_threshold
            .or(file.auto_threshold)
            .unwrap_or(DEFAULT_AUTO_THRESHOLD),
        refresh_interval: flags
            .refresh_interval
            .or(file.refresh_interval)
            .unwrap_or(DEFAULT_REFRESH_INTERVAL),
        seed: flags.seed.or(file.seed).unwrap_or(0),
        scope: flags
            .scope
            .or(file.scope()?)
            .unwrap_or(DistanceScope::RegionAndOutside),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(args) => {
            let file = FileConfig::load(args.common.config.as_deref())?;
            let common = resolve_common(&args.common, &file, true)?;
            commands::generate::run(&commands::generate::GenerateArgs {
                municipalities: common.municipalities,
                aggregates: common.aggregates,
                observed: args.observed.or_else(|| file.observed.clone()),
                shape: args
                    .shape
                    .or(file.shape()?)
                    .unwrap_or(DeterrenceShape::Exponential),
                beta: args.beta.or(file.beta()?).unwrap_or(BetaSource::Constant),
                replications: args.replications.or(file.replications).unwrap_or(1),
                seed: common.seed,
                out: common.out,
                strategy: common.strategy,
                auto_threshold: common.auto_threshold,
                refresh_interval: common.refresh_interval,
                scope: common.scope,
                calibration_replications: args
                    .calibration_replications
                    .or(file.calibration_replications)
                    .unwrap_or(10),
                search: args.search.overrides(&file),
            })
        }
        Command::Compare(args) => {
            let file = FileConfig::load(args.common.config.as_deref())?;
            let common = resolve_common(&args.common, &file, true)?;
            commands::compare::run(&commands::compare::CompareArgs {
                municipalities: common.municipalities,
                aggregates: common.aggregates,
                observed: args
                    .observed
                    .or_else(|| file.observed.clone())
                    .context("--observed is required for compare")?,
                shape: args
                    .shape
                    .or(file.shape()?)
                    .unwrap_or(DeterrenceShape::Exponential),
                beta: args.beta.or(file.beta()?).unwrap_or(BetaSource::Constant),
                replications: args.replications.or(file.replications).unwrap_or(10),
                seed: common.seed,
                out: common.out,
                strategy: common.strategy,
                auto_threshold: common.auto_threshold,
                refresh_interval: common.refresh_interval,
                scope: common.scope,
                stability_threshold: args
                    .stability_threshold
                    .or(file.stability_threshold)
                    .unwrap_or(0.05),
                calibration_replications: args
                    .calibration_replications
                    .or(file.calibration_replications)
                    .unwrap_or(10),
                search: args.search.overrides(&file),
            })
        }
        Command::Calibrate(args) => {
            let file = FileConfig::load(args.common.config.as_deref())?;
            let common = resolve_common(&args.common, &file, true)?;
            commands::calibrate::run(&commands::calibrate::CalibrateArgs {
                municipalities: common.municipalities,
                aggregates: common.aggregates,
                observed: args
                    .observed
                    .or_else(|| file.observed.clone())
                    .context("--observed is required for calibrate")?,
                shape: args
                    .shape
                    .or(file.shape()?)
                    .unwrap_or(DeterrenceShape::Exponential),
                replications: args.replications.or(file.replications).unwrap_or(10),
                seed: common.seed,
                out: common.out,
                strategy: common.strategy,
                auto_threshold: common.auto_threshold,
                refresh_interval: common.refresh_interval,
                scope: common.scope,
                averaging: args
                    .averaging
                    .or(file.averaging()?)
                    .unwrap_or(AveragingMode::PerReplicationMinimizers),
                search: args.search.overrides(&file),
            })
        }
        Command::Distances(args) => {
            let file = FileConfig::load(args.common.config.as_deref())?;
            let common = resolve_common(&args.common, &file, true)?;
            commands::distances::run(&commands::distances::DistancesArgs {
                municipalities: common.municipalities,
                aggregates: common.aggregates,
                observed: args.observed.or_else(|| file.observed.clone()),
                shape: args
                    .shape
                    .or(file.shape()?)
                    .unwrap_or(DeterrenceShape::Exponential),
                beta: args.beta.or(file.beta()?).unwrap_or(BetaSource::Constant),
                replications: args.replications.or(file.replications).unwrap_or(1),
                seed: common.seed,
                out: common.out,
                strategy: common.strategy,
                auto_threshold: common.auto_threshold,
                refresh_interval: common.refresh_interval,
                scope: common.scope,
                bins: args.bins.or(file.bins).unwrap_or(DEFAULT_DENSITY_BINS),
                calibration_replications: args
                    .calibration_replications
                    .or(file.calibration_replications)
                    .unwrap_or(10),
                search: args.search.overrides(&file),
            })
        }
        Command::Synth(args) => {
            let file = FileConfig::load(args.common.config.as_deref())?;
            let common = resolve_common(&args.common, &file, false)?;
            commands::synth::run(&commands::synth::SynthArgs {
                region: args.n.or(file.n).context("--n is required for synth")?,
                total: args.m.or(file.m).context("--m is required for synth")?,
                commuters: args
                    .commuters
                    .or(file.commuters)
                    .context("--commuters is required for synth")?,
                extent: args.extent.or(file.extent).unwrap_or(100_000.0),
                beta: args
                    .beta
                    .or(file.beta.as_deref().and_then(|s| s.parse().ok()))
                    .unwrap_or(commnet::calibration::CONSTANT_BETA_PER_METER),
                shape: args
                    .shape
                    .or(file.shape()?)
                    .unwrap_or(DeterrenceShape::Exponential),
                slack: args.slack.or(file.slack).unwrap_or(1.5),
                seed: common.seed,
                out: common.out,
                strategy: common.strategy,
                auto_threshold: common.auto_threshold,
                refresh_interval: common.refresh_interval,
            })
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let chain: Vec<String> = err.chain().map(ToString::to_string).collect();
        eprintln!(
            "{}",
            serde_json::json!({
                "error": chain.first().cloned().unwrap_or_default(),
                "chain": chain,
            })
        );
        std::process::exit(1);
    }
}
