//! Synthetic fixture generation for tests and benchmarks: random
//! municipalities over a square extent, heterogeneous integer marginals with
//! capacity slack, and a ground-truth network generated at a planted
//! exponent. All randomness flows from one seed through separate ChaCha
//! streams, so a fixture is reproducible from its parameters alone.

use std::sync::Arc;

use anyhow::{ensure, Context};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use commnet::generator::{generate, DeterrenceSpec, GenerateOptions, GenerationInputs};
use commnet::geodata::{
    build_distance_provider, DistanceProvider, DistanceStrategy, Municipality,
    MunicipalityRegistry,
};
use commnet::od::{AggregateRecord, ODMatrix};

const COORD_STREAM: u64 = 1;
const DEMAND_STREAM: u64 = 2;
const CAPACITY_STREAM: u64 = 3;

#[derive(Debug, Clone)]
pub struct SynthParams {
    /// Region municipality count (n).
    pub region: usize,
    /// Total municipality count, region plus outside (m >= n).
    pub total: usize,
    /// Total out-commuters to distribute over the region.
    pub commuters: u64,
    /// Side of the square the municipalities are scattered over, meters.
    pub extent: f64,
    /// Planted deterrence used for the ground-truth network.
    pub spec: DeterrenceSpec,
    pub seed: u64,
    /// Total in-commuter capacity as a multiple of `commuters` (>= 1). The
    /// surplus stands for workers arriving from beyond the modeled area, so
    /// the written aggregates stay feasible and collapse cleanly.
    pub slack: f64,
    pub strategy: DistanceStrategy,
    pub auto_threshold: usize,
    pub refresh_interval: u64,
}

#[derive(Debug)]
pub struct SynthFixture {
    pub registry: Arc<MunicipalityRegistry>,
    pub provider: Arc<DistanceProvider>,
    pub aggregates: Vec<AggregateRecord>,
    pub inputs: GenerationInputs,
    pub ground_truth: ODMatrix,
}

/// Split `total` units over `cells` slots with exponentially distributed
/// weights (a heavy-ish size spread, like real municipality sizes).
fn multinomial(rng: &mut ChaCha8Rng, total: u64, cells: usize) -> Vec<u64> {
    let mut cumulative = Vec::with_capacity(cells);
    let mut sum = 0.0f64;
    for _ in 0..cells {
        sum += -(1.0 - rng.random::<f64>()).ln();
        cumulative.push(sum);
    }
    let mut counts = vec![0u64; cells];
    for _ in 0..total {
        let target = rng.random::<f64>() * sum;
        let index = cumulative.partition_point(|&c| c <= target).min(cells - 1);
        counts[index] += 1;
    }
    counts
}

pub fn synthesize(params: &SynthParams) -> anyhow::Result<SynthFixture> {
    ensure!(params.region >= 1, "need at least one region municipality");
    ensure!(
        params.total >= params.region,
        "total municipality count must be >= region count"
    );
    ensure!(
        params.extent.is_finite() && params.extent > 0.0,
        "extent must be positive"
    );
    ensure!(params.slack >= 1.0, "capacity slack must be >= 1");

    let mut coord_rng = ChaCha8Rng::seed_from_u64(params.seed);
    coord_rng.set_stream(COORD_STREAM);
    let municipalities: Vec<Municipality> = (0..params.total)
        .map(|k| {
            let in_region = k < params.region;
            let id = if in_region {
                format!("r{k:05}")
            } else {
                format!("o{k:05}")
            };
            Municipality {
                id,
                x: coord_rng.random::<f64>() * params.extent,
                y: coord_rng.random::<f64>() * params.extent,
                in_region,
            }
        })
        .collect();
    let registry = Arc::new(MunicipalityRegistry::new(municipalities)?);

    let mut demand_rng = ChaCha8Rng::seed_from_u64(params.seed);
    demand_rng.set_stream(DEMAND_STREAM);
    let out_demand = multinomial(&mut demand_rng, params.commuters, params.region);

    let mut capacity_rng = ChaCha8Rng::seed_from_u64(params.seed);
    capacity_rng.set_stream(CAPACITY_STREAM);
    let capacity_total = ((params.commuters as f64 * params.slack).ceil() as u64)
        .max(params.commuters);
    let in_capacity = multinomial(&mut capacity_rng, capacity_total, params.total);

    let provider = Arc::new(build_distance_provider(
        registry.clone(),
        params.strategy,
        params.auto_threshold,
    )?);
    let inputs = GenerationInputs {
        distances: provider.clone(),
        in_capacity: in_capacity.clone(),
        out_demand: out_demand.clone(),
    };
    let ground_truth = generate(
        &inputs,
        &params.spec,
        params.seed,
        &GenerateOptions {
            refresh_interval: params.refresh_interval,
        },
    )
    .context("generating the ground-truth network")?;

    let aggregates = (0..params.total)
        .map(|pos| AggregateRecord {
            id: registry.get(pos).id.clone(),
            in_commuters: in_capacity[pos],
            out_commuters: if pos < params.region {
                out_demand[pos]
            } else {
                0
            },
        })
        .collect();

    Ok(SynthFixture {
        registry,
        provider,
        aggregates,
        inputs,
        ground_truth,
    })
}
