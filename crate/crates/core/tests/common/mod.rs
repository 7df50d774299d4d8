//! Shared fixture builders for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use commnet::generator::{generate, DeterrenceSpec, GenerateOptions, GenerationInputs};
use commnet::geodata::{
    build_distance_provider, DistanceProvider, DistanceStrategy, Municipality,
    MunicipalityRegistry, DEFAULT_AUTO_THRESHOLD,
};
use commnet::od::ODMatrix;

pub fn random_registry(
    rng: &mut ChaCha8Rng,
    region: usize,
    total: usize,
    extent: f64,
) -> Arc<MunicipalityRegistry> {
    let municipalities = (0..total)
        .map(|k| Municipality {
            id: format!("m{k:04}"),
            x: rng.random::<f64>() * extent,
            y: rng.random::<f64>() * extent,
            in_region: k < region,
        })
        .collect();
    Arc::new(MunicipalityRegistry::new(municipalities).unwrap())
}

/// Random marginals with capacity slack: total capacity is 1.5x total demand,
/// spread with heterogeneous weights, so generation never deadlocks.
pub fn random_marginals(
    rng: &mut ChaCha8Rng,
    region: usize,
    total: usize,
    commuters: u64,
) -> (Vec<u64>, Vec<u64>) {
    let out_demand = multinomial(rng, commuters, region);
    let capacity_total = (commuters as f64 * 1.5).ceil() as u64;
    let in_capacity = multinomial(rng, capacity_total, total);
    (in_capacity, out_demand)
}

/// Split `total` units over `cells` with exponentially distributed weights.
pub fn multinomial(rng: &mut ChaCha8Rng, total: u64, cells: usize) -> Vec<u64> {
    let weights: Vec<f64> = (0..cells)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let mut cumulative = Vec::with_capacity(cells);
    let mut sum = 0.0;
    for w in &weights {
        sum += w;
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

pub fn provider(
    registry: Arc<MunicipalityRegistry>,
    strategy: DistanceStrategy,
) -> Arc<DistanceProvider> {
    Arc::new(build_distance_provider(registry, strategy, DEFAULT_AUTO_THRESHOLD).unwrap())
}

/// A fixture with a known planted exponent: inputs plus the ground-truth
/// network generated at that exponent.
pub fn planted_fixture(
    seed: u64,
    region: usize,
    total: usize,
    commuters: u64,
    extent: f64,
    spec: &DeterrenceSpec,
) -> (GenerationInputs, ODMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let registry = random_registry(&mut rng, region, total, extent);
    let (in_capacity, out_demand) = random_marginals(&mut rng, region, total, commuters);
    let inputs = GenerationInputs {
        distances: provider(registry, DistanceStrategy::Auto),
        in_capacity,
        out_demand,
    };
    let ground_truth = generate(&inputs, spec, seed, &GenerateOptions::default()).unwrap();
    (inputs, ground_truth)
}
