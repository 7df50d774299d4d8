//! Stochastic commuting-assignment engine.
//!
//! The generator walks the remaining out-commuter demand one commuter at a
//! time: it draws an origin uniformly among the municipalities with pending
//! demand, then draws that commuter's workplace with probability proportional
//! to each destination's remaining in-commuter capacity weighted by the
//! distance-decay function. Both the chosen destination's capacity and the
//! origin's demand are decremented before the next draw, so early assignments
//! reshape the odds of later ones. A run is a deterministic function of its
//! inputs and seed.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodata::DistanceProvider;
use crate::od::{GenerationMetadata, ODMatrix, OdError};

/// Identifier of the pseudorandom generator recorded in output metadata.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Default number of assignments between from-scratch refreshes of the
/// incrementally maintained per-origin weight totals.
pub const DEFAULT_REFRESH_INTERVAL: u64 = 4096;

// The incremental-total conformance check recomputes every active row; only
// instances this small pay that cost in debug builds.
const CONFORMANCE_MAX_CELLS: usize = 2048;
const CONFORMANCE_RTOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("in-capacity length {got} does not match municipality count {want}")]
    CapacityLength { got: usize, want: usize },
    #[error("out-demand length {got} does not match region municipality count {want}")]
    DemandLength { got: usize, want: usize },
    #[error("infeasible inputs: total in-commuters {total_in} < total out-commuters {total_out} (deficit {deficit})")]
    Infeasible {
        total_in: u64,
        total_out: u64,
        deficit: u64,
    },
    #[error("deterrence exponent must be finite and non-negative, got {beta}")]
    InvalidBeta { beta: f64 },
    #[error("refresh interval must be at least 1")]
    InvalidRefreshInterval,
    #[error("municipalities `{a}` and `{b}` share coordinates; the power-law weight is undefined at zero distance")]
    CoincidentCoordinates { a: String, b: String },
    #[error("stuck origin `{origin_id}`: no admissible destination with remaining capacity (pending demand {pending_demand}, total remaining capacity {remaining_capacity})")]
    StuckOrigin {
        origin_id: String,
        pending_demand: u64,
        remaining_capacity: u64,
    },
    #[error("regional generation needs a square observed matrix aligned with an outside-free registry")]
    RegionalShape,
    #[error(transparent)]
    Od(#[from] OdError),
}

/// Distance-decay family of the workplace choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeterrenceShape {
    /// `f(d) = d^-beta`; beta is a dimensionless exponent.
    Power,
    /// `f(d) = exp(-beta * d)`; beta is in inverse meters.
    Exponential,
}

impl DeterrenceShape {
    pub fn name(&self) -> &'static str {
        match self {
            DeterrenceShape::Power => "power",
            DeterrenceShape::Exponential => "exponential",
        }
    }
}

/// Deterrence function choice: shape plus its exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterrenceSpec {
    pub shape: DeterrenceShape,
    pub beta: f64,
}

impl DeterrenceSpec {
    pub fn power(beta: f64) -> Self {
        Self {
            shape: DeterrenceShape::Power,
            beta,
        }
    }

    pub fn exponential(beta: f64) -> Self {
        Self {
            shape: DeterrenceShape::Exponential,
            beta,
        }
    }
}

/// Distance-decay weight of a destination at distance `d` meters.
///
/// At `d = 0` the exponential weight is 1 and the power weight is defined as
/// 0: self-flows are excluded from the choice anyway, and coincident distinct
/// municipalities are rejected by [`generate`] under the power law, so the
/// function stays total.
pub fn deterrence(spec: &DeterrenceSpec, d: f64) -> f64 {
    debug_assert!(spec.beta >= 0.0 && d >= 0.0);
    match spec.shape {
        DeterrenceShape::Power => {
            if d == 0.0 {
                0.0
            } else {
                d.powf(-spec.beta)
            }
        }
        DeterrenceShape::Exponential => (-spec.beta * d).exp(),
    }
}

/// Everything a generation run consumes besides the deterrence choice and the
/// seed: the distance oracle (which carries the registry) plus the in-commuter
/// capacities (length `m`) and out-commuter demands (length `n`).
#[derive(Debug, Clone)]
pub struct GenerationInputs {
    pub distances: Arc<DistanceProvider>,
    pub in_capacity: Vec<u64>,
    pub out_demand: Vec<u64>,
}

impl GenerationInputs {
    pub fn total_capacity(&self) -> u64 {
        self.in_capacity.iter().sum()
    }

    pub fn total_demand(&self) -> u64 {
        self.out_demand.iter().sum()
    }
}

/// Tunables that do not change the model, only its numerical bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateOptions {
    /// Assignments between from-scratch refreshes of the per-origin weight
    /// totals; bounds floating-point drift from the incremental updates.
    pub refresh_interval: u64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            refresh_interval: DEFAULT_REFRESH_INTERVAL,
        }
    }
}

/// Workplace-choice distribution for one origin: the probability of each
/// destination `j` is proportional to `remaining_in[j] * f(d_ij, beta)`, with
/// the origin's own municipality forced to zero. The vector sums to one.
pub fn choice_probabilities(
    origin: usize,
    remaining_in: &[u64],
    spec: &DeterrenceSpec,
    distances: &DistanceProvider,
) -> Result<Vec<f64>, GenerateError> {
    let registry = distances.registry();
    let m = registry.total_count();
    if remaining_in.len() != m {
        return Err(GenerateError::CapacityLength {
            got: remaining_in.len(),
            want: m,
        });
    }
    validate_beta(spec)?;
    assert!(origin < registry.region_count());
    let mut weights = vec![0.0f64; m];
    let mut total = 0.0f64;
    for (j, weight) in weights.iter_mut().enumerate() {
        if j == origin || remaining_in[j] == 0 {
            continue;
        }
        let term = remaining_in[j] as f64 * deterrence(spec, distances.distance(origin, j));
        *weight = term;
        total += term;
    }
    if total <= 0.0 {
        return Err(GenerateError::StuckOrigin {
            origin_id: registry.get(origin).id.clone(),
            pending_demand: 1,
            remaining_capacity: remaining_in.iter().sum(),
        });
    }
    for weight in &mut weights {
        *weight /= total;
    }
    Ok(weights)
}

fn validate_beta(spec: &DeterrenceSpec) -> Result<(), GenerateError> {
    if !spec.beta.is_finite() || spec.beta < 0.0 {
        return Err(GenerateError::InvalidBeta { beta: spec.beta });
    }
    Ok(())
}

/// Destination weights for one run. Backed by a precomputed table when the
/// distance provider is dense; recomputed per query otherwise so that huge
/// instances stay within their lazy memory budget. The self cell `(i, i)` is
/// always zero.
enum WeightTable<'a> {
    Dense { weights: Vec<f64>, cols: usize },
    Lazy {
        distances: &'a DistanceProvider,
        spec: DeterrenceSpec,
    },
}

impl<'a> WeightTable<'a> {
    fn build(distances: &'a DistanceProvider, spec: &DeterrenceSpec) -> Self {
        let registry = distances.registry();
        let n = registry.region_count();
        let m = registry.total_count();
        if distances.is_dense() {
            let mut weights = Vec::with_capacity(n * m);
            for i in 0..n {
                for j in 0..m {
                    let w = if i == j {
                        0.0
                    } else {
                        deterrence(spec, distances.distance(i, j))
                    };
                    weights.push(w);
                }
            }
            WeightTable::Dense { weights, cols: m }
        } else {
            WeightTable::Lazy {
                distances,
                spec: *spec,
            }
        }
    }

    #[inline]
    fn get(&self, origin: usize, dest: usize) -> f64 {
        match self {
            WeightTable::Dense { weights, cols } => weights[origin * cols + dest],
            WeightTable::Lazy { distances, spec } => {
                if origin == dest {
                    0.0
                } else {
                    deterrence(spec, distances.distance(origin, dest))
                }
            }
        }
    }
}

/// Origins with pending demand, supporting O(1) removal and uniform draws.
/// The model draws the next origin uniformly among pending ones, not weighted
/// by how much demand they have left.
struct ActiveSet {
    items: Vec<usize>,
    slot: Vec<usize>,
}

impl ActiveSet {
    fn new(demand: &[u64]) -> Self {
        let mut items = Vec::new();
        let mut slot = vec![usize::MAX; demand.len()];
        for (origin, &pending) in demand.iter().enumerate() {
            if pending > 0 {
                slot[origin] = items.len();
                items.push(origin);
            }
        }
        Self { items, slot }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        self.items[rng.random_range(0..self.items.len())]
    }

    fn remove(&mut self, origin: usize) {
        let at = self.slot[origin];
        let last = *self.items.last().expect("non-empty on removal");
        self.items.swap_remove(at);
        self.slot[origin] = usize::MAX;
        if last != origin {
            self.slot[last] = at;
        }
    }

    fn iter(&self) -> std::slice::Iter<'_, usize> {
        self.items.iter()
    }
}

/// Reject power-law runs over registries where a region origin coincides with
/// another municipality: the true weight would be infinite there. Region
/// members come first in registry order, so a coordinate collision involves an
/// origin exactly when the first-seen member of the group is a region member.
fn check_power_coincidence(distances: &DistanceProvider) -> Result<(), GenerateError> {
    let registry = distances.registry();
    let n = registry.region_count();
    let norm = |v: f64| (v + 0.0).to_bits();
    let mut first_seen: HashMap<(u64, u64), usize> = HashMap::with_capacity(registry.total_count());
    for (pos, mun) in registry.municipalities().iter().enumerate() {
        match first_seen.entry((norm(mun.x), norm(mun.y))) {
            std::collections::hash_map::Entry::Occupied(entry) => {
                let first = *entry.get();
                if first < n || pos < n {
                    return Err(GenerateError::CoincidentCoordinates {
                        a: registry.get(first).id.clone(),
                        b: mun.id.clone(),
                    });
                }
            }
            std::collections::hash_map::Entry::Vacant(entry) => {
                entry.insert(pos);
            }
        }
    }
    Ok(())
}

fn row_total(origin: usize, remaining_in: &[u64], weights: &WeightTable) -> f64 {
    let mut total = 0.0;
    for (j, &capacity) in remaining_in.iter().enumerate() {
        if capacity == 0 {
            continue;
        }
        let w = weights.get(origin, j);
        if w > 0.0 {
            total += capacity as f64 * w;
        }
    }
    total
}

/// Run the assignment loop: returns the region-origins-by-all-destinations
/// flow matrix whose row sums equal the input demand exactly and whose column
/// sums never exceed the input capacity.
///
/// Fails with [`GenerateError::StuckOrigin`] if some origin still has demand
/// while every destination it could use has zero weight or zero remaining
/// capacity (for example when the only capacity left is its own municipality,
/// or when an extreme exponent underflows every weight).
pub fn generate(
    inputs: &GenerationInputs,
    spec: &DeterrenceSpec,
    seed: u64,
    options: &GenerateOptions,
) -> Result<ODMatrix, GenerateError> {
    let registry = inputs.distances.registry();
    let n = registry.region_count();
    let m = registry.total_count();
    if inputs.in_capacity.len() != m {
        return Err(GenerateError::CapacityLength {
            got: inputs.in_capacity.len(),
            want: m,
        });
    }
    if inputs.out_demand.len() != n {
        return Err(GenerateError::DemandLength {
            got: inputs.out_demand.len(),
            want: n,
        });
    }
    validate_beta(spec)?;
    if options.refresh_interval == 0 {
        return Err(GenerateError::InvalidRefreshInterval);
    }
    let total_in = inputs.total_capacity();
    let total_out = inputs.total_demand();
    if total_in < total_out {
        return Err(GenerateError::Infeasible {
            total_in,
            total_out,
            deficit: total_out - total_in,
        });
    }
    if spec.shape == DeterrenceShape::Power {
        check_power_coincidence(&inputs.distances)?;
    }

    let weights = WeightTable::build(&inputs.distances, spec);
    let mut remaining_in = inputs.in_capacity.clone();
    let mut remaining_out = inputs.out_demand.clone();
    let mut flows = vec![0u64; n * m];
    let mut active = ActiveSet::new(&remaining_out);
    let mut totals = vec![0.0f64; n];
    // Scale captured at the latest from-scratch refresh; anchors the
    // conformance tolerance when a drifted total sits near zero.
    let mut scale = vec![0.0f64; n];
    for &origin in active.iter() {
        totals[origin] = row_total(origin, &remaining_in, &weights);
        scale[origin] = totals[origin];
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pending = total_out;
    let mut since_refresh = 0u64;
    let check_conformance = cfg!(debug_assertions) && n * m <= CONFORMANCE_MAX_CELLS;

    while pending > 0 {
        let origin = active.sample(&mut rng);
        if totals[origin] <= 0.0 {
            totals[origin] = row_total(origin, &remaining_in, &weights);
            scale[origin] = totals[origin];
        }

        // Single cumulative pass against one uniform variate; the last
        // admissible destination absorbs any residual rounding mass.
        let mut selected = usize::MAX;
        let mut fallback = usize::MAX;
        if totals[origin] > 0.0 {
            let target = rng.random::<f64>() * totals[origin];
            let mut cumulative = 0.0f64;
            for (j, &capacity) in remaining_in.iter().enumerate() {
                if capacity == 0 {
                    continue;
                }
                let w = weights.get(origin, j);
                if w <= 0.0 {
                    continue;
                }
                fallback = j;
                cumulative += capacity as f64 * w;
                if cumulative > target {
                    selected = j;
                    break;
                }
            }
        }
        let dest = if selected != usize::MAX {
            selected
        } else if fallback != usize::MAX {
            fallback
        } else {
            return Err(GenerateError::StuckOrigin {
                origin_id: registry.get(origin).id.clone(),
                pending_demand: remaining_out[origin],
                remaining_capacity: remaining_in.iter().sum(),
            });
        };

        flows[origin * m + dest] += 1;
        remaining_in[dest] -= 1;
        remaining_out[origin] -= 1;
        pending -= 1;
        if remaining_out[origin] == 0 {
            active.remove(origin);
        }
        // The destination lost one unit of capacity, so every pending
        // origin's total drops by its weight toward that destination.
        for &a in active.iter() {
            totals[a] -= weights.get(a, dest);
        }

        since_refresh += 1;
        if since_refresh >= options.refresh_interval {
            for &a in active.iter() {
                totals[a] = row_total(a, &remaining_in, &weights);
                scale[a] = totals[a];
            }
            since_refresh = 0;
        }

        if check_conformance {
            for &a in active.iter() {
                let fresh = row_total(a, &remaining_in, &weights);
                let tolerance = CONFORMANCE_RTOL * fresh.max(scale[a]);
                debug_assert!(
                    (totals[a] - fresh).abs() <= tolerance,
                    "incrementally maintained total drifted: origin {a}, kept {}, fresh {fresh}",
                    totals[a]
                );
            }
        }
    }

    let mut matrix = ODMatrix::new(registry.region_ids(), registry.all_ids(), flows)?;
    matrix.metadata = Some(GenerationMetadata {
        shape: spec.shape.name().to_string(),
        beta: spec.beta,
        seed,
        rng: RNG_ALGORITHM.to_string(),
        refresh_interval: options.refresh_interval,
    });
    Ok(matrix)
}

/// Regenerate a network with the same marginals as an observed square matrix:
/// extract its row/column sums and run [`generate`] over an outside-free
/// registry. The observed ids must match the registry's region ids in order.
pub fn generate_regional(
    observed: &ODMatrix,
    distances: &Arc<DistanceProvider>,
    spec: &DeterrenceSpec,
    seed: u64,
    options: &GenerateOptions,
) -> Result<ODMatrix, GenerateError> {
    let registry = distances.registry();
    if registry.region_count() != registry.total_count()
        || observed.origin_ids() != registry.region_ids()
        || observed.dest_ids() != observed.origin_ids()
    {
        return Err(GenerateError::RegionalShape);
    }
    let marginals = crate::od::marginals_from_od(observed)?;
    let inputs = GenerationInputs {
        distances: distances.clone(),
        in_capacity: marginals.in_commuters,
        out_demand: marginals.out_commuters,
    };
    generate(&inputs, spec, seed, options)
}
