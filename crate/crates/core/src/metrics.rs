//! Network-comparison indices and commuting-distance distributions.
//!
//! Two networks over the same municipalities are compared through the common
//! part of commuters (a Sorensen-style overlap of the two flow matrices);
//! distance distributions are compared through the exact Kolmogorov-Smirnov
//! distance between their weighted empirical CDFs, with no binning. Binning
//! exists only for display output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodata::DistanceProvider;
use crate::od::{ODMatrix, RegionPlusOutsideOD};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("matrices cover different origin/destination sets")]
    ShapeMismatch,
    #[error("both networks are empty; the common-part index is undefined")]
    EmptyNetworks,
    #[error("degenerate distance distribution (no weighted samples)")]
    DegenerateDistribution,
    #[error("distance samples must be finite and non-negative, got {0}")]
    InvalidDistance(f64),
    #[error("matrix references municipality `{0}` missing from the registry")]
    UnknownMunicipality(String),
    #[error("origin `{0}` is not a region municipality")]
    OutsideOrigin(String),
    #[error("density table needs at least one bin")]
    NoBins,
}

/// Which destinations contribute to a commuting distance distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceScope {
    /// Region-to-region commutes only.
    RegionOnly,
    /// Region-to-region plus region-to-outside commutes.
    RegionAndOutside,
}

/// Number of common commuters: the entrywise minimum of the two flow
/// matrices, summed.
pub fn ncc(s: &ODMatrix, r: &ODMatrix) -> Result<u64, MetricsError> {
    if s.origin_ids() != r.origin_ids() || s.dest_ids() != r.dest_ids() {
        return Err(MetricsError::ShapeMismatch);
    }
    let mut common = 0u64;
    for i in 0..s.rows() {
        for j in 0..s.cols() {
            common += s.get(i, j).min(r.get(i, j));
        }
    }
    Ok(common)
}

/// Number of commuters in a network: the sum of all flows.
pub fn nc(r: &ODMatrix) -> u64 {
    r.total()
}

/// Common part of commuters: `2 * NCC(S, R) / (NC(R) + NC(S))`. Equals 1 iff
/// the two networks are identical entrywise and 0 iff their supports are
/// disjoint; undefined (error) when both networks are empty.
pub fn cpc(s: &ODMatrix, r: &ODMatrix) -> Result<f64, MetricsError> {
    let common = ncc(s, r)?;
    let denominator = nc(s) + nc(r);
    if denominator == 0 {
        return Err(MetricsError::EmptyNetworks);
    }
    Ok(2.0 * common as f64 / denominator as f64)
}

/// Common part of commuters between two collapsed region-plus-outside tables.
pub fn cpc_region_plus_outside(
    s: &RegionPlusOutsideOD,
    r: &RegionPlusOutsideOD,
) -> Result<f64, MetricsError> {
    cpc(&s.to_od_matrix(), &r.to_od_matrix())
}

/// Common part of commuters restricted to the region-to-region block: `s` is
/// a region-origins-by-all-destinations matrix whose leading columns form the
/// square block matching `r`.
pub fn cpc_regional_block(s: &ODMatrix, r: &ODMatrix) -> Result<f64, MetricsError> {
    if r.origin_ids() != r.dest_ids() {
        return Err(MetricsError::ShapeMismatch);
    }
    let block = s
        .leading_block(r.rows())
        .map_err(|_| MetricsError::ShapeMismatch)?;
    cpc(&block, r)
}

/// Empirical distribution of commuting distances weighted by integer
/// commuter counts. Stored as sorted unique distances with merged weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDistanceDistribution {
    steps: Vec<(f64, u64)>,
    total_weight: u64,
}

impl WeightedDistanceDistribution {
    /// Build from `(distance_meters, weight)` samples. Zero-weight samples
    /// are dropped; equal distances are merged. The result may be degenerate
    /// (empty); degenerate distributions are rejected by [`ks_distance`].
    pub fn from_samples(
        samples: impl IntoIterator<Item = (f64, u64)>,
    ) -> Result<Self, MetricsError> {
        let mut kept: Vec<(f64, u64)> = Vec::new();
        for (distance, weight) in samples {
            if !distance.is_finite() || distance < 0.0 {
                return Err(MetricsError::InvalidDistance(distance));
            }
            if weight > 0 {
                kept.push((distance, weight));
            }
        }
        kept.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances"));
        let mut steps: Vec<(f64, u64)> = Vec::with_capacity(kept.len());
        for (distance, weight) in kept {
            match steps.last_mut() {
                Some((last, total)) if *last == distance => *total += weight,
                _ => steps.push((distance, weight)),
            }
        }
        let total_weight = steps.iter().map(|&(_, w)| w).sum();
        Ok(Self {
            steps,
            total_weight,
        })
    }

    pub fn total_weight(&self) -> u64 {
        self.total_weight
    }

    pub fn is_degenerate(&self) -> bool {
        self.total_weight == 0
    }

    /// Sorted `(distance, weight)` step points of the ECDF.
    pub fn steps(&self) -> &[(f64, u64)] {
        &self.steps
    }

    pub fn max_distance(&self) -> Option<f64> {
        self.steps.last().map(|&(d, _)| d)
    }

    /// Right-continuous weighted ECDF evaluated at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        if self.total_weight == 0 {
            return 0.0;
        }
        let mut cumulative = 0u64;
        for &(distance, weight) in &self.steps {
            if distance > x {
                break;
            }
            cumulative += weight;
        }
        cumulative as f64 / self.total_weight as f64
    }
}

/// Weighted distance distribution of a flow matrix: every nonzero cell
/// contributes its origin-destination distance with the flow count as weight.
/// `RegionOnly` drops destinations outside the region.
pub fn distance_distribution(
    s: &ODMatrix,
    distances: &DistanceProvider,
    scope: DistanceScope,
) -> Result<WeightedDistanceDistribution, MetricsError> {
    let registry = distances.registry();
    let n = registry.region_count();
    let limit = match scope {
        DistanceScope::RegionOnly => n,
        DistanceScope::RegionAndOutside => registry.total_count(),
    };
    let origin_positions = s
        .origin_ids()
        .iter()
        .map(|id| {
            let pos = registry
                .position(id)
                .ok_or_else(|| MetricsError::UnknownMunicipality(id.clone()))?;
            if pos >= n {
                return Err(MetricsError::OutsideOrigin(id.clone()));
            }
            Ok(pos)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dest_positions = s
        .dest_ids()
        .iter()
        .map(|id| {
            registry
                .position(id)
                .ok_or_else(|| MetricsError::UnknownMunicipality(id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut samples = Vec::new();
    for (i, j, count) in s.iter_nonzero() {
        let dest = dest_positions[j];
        if dest >= limit {
            continue;
        }
        samples.push((distances.distance(origin_positions[i], dest), count));
    }
    WeightedDistanceDistribution::from_samples(samples)
}

/// Exact Kolmogorov-Smirnov distance between two weighted ECDFs: the supremum
/// gap over the union of their step points, no binning.
pub fn ks_distance(
    a: &WeightedDistanceDistribution,
    b: &WeightedDistanceDistribution,
) -> Result<f64, MetricsError> {
    if a.is_degenerate() || b.is_degenerate() {
        return Err(MetricsError::DegenerateDistribution);
    }
    let wa = a.total_weight as f64;
    let wb = b.total_weight as f64;
    let mut ia = 0usize;
    let mut ib = 0usize;
    let mut ca = 0u64;
    let mut cb = 0u64;
    let mut sup = 0.0f64;
    while ia < a.steps.len() || ib < b.steps.len() {
        let xa = a.steps.get(ia).map_or(f64::INFINITY, |&(d, _)| d);
        let xb = b.steps.get(ib).map_or(f64::INFINITY, |&(d, _)| d);
        let x = xa.min(xb);
        if xa == x {
            ca += a.steps[ia].1;
            ia += 1;
        }
        if xb == x {
            cb += b.steps[ib].1;
            ib += 1;
        }
        let gap = (ca as f64 / wa - cb as f64 / wb).abs();
        if gap > sup {
            sup = gap;
        }
    }
    Ok(sup)
}

/// One displayed density bin over `[lo, hi)` meters (the last bin is closed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
}

/// Default bin count of the display density tables.
pub const DEFAULT_DENSITY_BINS: usize = 50;

/// Equal-width density table over `[0, max distance]` for display only; the
/// calibration path never bins. `sum(density * width)` is 1 up to rounding.
pub fn binned_density(
    distribution: &WeightedDistanceDistribution,
    bins: usize,
) -> Result<Vec<DensityBin>, MetricsError> {
    if bins == 0 {
        return Err(MetricsError::NoBins);
    }
    let max = distribution
        .max_distance()
        .filter(|&d| d > 0.0)
        .ok_or(MetricsError::DegenerateDistribution)?;
    let width = max / bins as f64;
    let mut weights = vec![0u64; bins];
    for &(distance, weight) in distribution.steps() {
        let index = ((distance / width) as usize).min(bins - 1);
        weights[index] += weight;
    }
    let total = distribution.total_weight() as f64;
    Ok(weights
        .iter()
        .enumerate()
        .map(|(k, &w)| DensityBin {
            lo: k as f64 * width,
            hi: (k + 1) as f64 * width,
            density: w as f64 / (total * width),
        })
        .collect())
}

/// Per-replication comparison record emitted as JSON by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub ncc: u64,
    pub nc_observed: u64,
    pub nc_simulated: u64,
    pub cpc: f64,
    pub ks: f64,
    pub scope: DistanceScope,
    pub replication_seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::{
        build_distance_provider, DistanceStrategy, Municipality, MunicipalityRegistry,
        DEFAULT_AUTO_THRESHOLD,
    };
    use std::sync::Arc;

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn square(names: &[&str], flows: &[u64]) -> ODMatrix {
        ODMatrix::new(ids(names), ids(names), flows.to_vec()).unwrap()
    }

    #[test]
    fn ncc_examples() {
        let s = square(&["a", "b"], &[0, 2, 1, 0]);
        let r = square(&["a", "b"], &[0, 1, 3, 0]);
        assert_eq!(ncc(&s, &r).unwrap(), 2);
        assert_eq!(ncc(&r, &r).unwrap(), nc(&r));
        let disjoint = square(&["a", "b"], &[0, 0, 5, 0]);
        let other = square(&["a", "b"], &[0, 5, 0, 0]);
        assert_eq!(ncc(&disjoint, &other).unwrap(), 0);
    }

    #[test]
    fn nc_examples() {
        assert_eq!(nc(&square(&["a", "b"], &[0, 0, 0, 0])), 0);
        assert_eq!(nc(&square(&["a", "b"], &[0, 2, 3, 0])), 5);
    }

    #[test]
    fn ncc_rejects_shape_mismatch() {
        let s = square(&["a", "b"], &[0, 1, 1, 0]);
        let r = square(&["a", "c"], &[0, 1, 1, 0]);
        assert!(matches!(ncc(&s, &r), Err(MetricsError::ShapeMismatch)));
    }

    #[test]
    fn cpc_examples() {
        let s = square(&["a", "b"], &[0, 2, 1, 0]);
        let r = square(&["a", "b"], &[0, 1, 3, 0]);
        let value = cpc(&s, &r).unwrap();
        assert!((value - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(cpc(&r, &r).unwrap(), 1.0);
        let disjoint = square(&["a", "b"], &[0, 0, 5, 0]);
        let other = square(&["a", "b"], &[0, 5, 0, 0]);
        assert_eq!(cpc(&disjoint, &other).unwrap(), 0.0);
        // Symmetry.
        assert_eq!(cpc(&s, &r).unwrap(), cpc(&r, &s).unwrap());
    }

    #[test]
    fn cpc_rejects_empty_pair() {
        let zero = square(&["a", "b"], &[0, 0, 0, 0]);
        assert!(matches!(
            cpc(&zero, &zero),
            Err(MetricsError::EmptyNetworks)
        ));
    }

    #[test]
    fn cpc_regional_block_examples() {
        let s_full = ODMatrix::new(
            ids(&["a", "b"]),
            ids(&["a", "b", "x"]),
            vec![0, 1, 2, 1, 0, 0],
        )
        .unwrap();
        let r = square(&["a", "b"], &[0, 1, 1, 0]);
        // Region block equals r -> 1.
        assert_eq!(cpc_regional_block(&s_full, &r).unwrap(), 1.0);

        let zero_block = ODMatrix::new(
            ids(&["a", "b"]),
            ids(&["a", "b", "x"]),
            vec![0, 0, 3, 0, 0, 2],
        )
        .unwrap();
        assert_eq!(cpc_regional_block(&zero_block, &r).unwrap(), 0.0);

        // Collapsed table vs the square observed network.
        let collapsed = crate::od::collapse_to_region_plus_outside(&s_full, &[3, 2]).unwrap();
        let value = cpc(&collapsed.region_block(), &r).unwrap();
        assert!((value - 2.0 * 2.0 / (2.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn distribution_from_flows() {
        let municipalities = vec![
            Municipality {
                id: "a".into(),
                x: 0.0,
                y: 0.0,
                in_region: true,
            },
            Municipality {
                id: "b".into(),
                x: 1000.0,
                y: 0.0,
                in_region: true,
            },
        ];
        let registry = Arc::new(MunicipalityRegistry::new(municipalities).unwrap());
        let provider = build_distance_provider(
            registry,
            DistanceStrategy::Dense,
            DEFAULT_AUTO_THRESHOLD,
        )
        .unwrap();
        let s = square(&["a", "b"], &[0, 1, 1, 0]);
        let dist = distance_distribution(&s, &provider, DistanceScope::RegionAndOutside).unwrap();
        assert_eq!(dist.steps(), &[(1000.0, 2)]);
        assert_eq!(dist.total_weight(), 2);
    }

    #[test]
    fn distribution_scope_drops_outside_columns() {
        let municipalities = vec![
            Municipality {
                id: "a".into(),
                x: 0.0,
                y: 0.0,
                in_region: true,
            },
            Municipality {
                id: "b".into(),
                x: 1000.0,
                y: 0.0,
                in_region: true,
            },
            Municipality {
                id: "x".into(),
                x: 5000.0,
                y: 0.0,
                in_region: false,
            },
        ];
        let registry = Arc::new(MunicipalityRegistry::new(municipalities).unwrap());
        let provider = build_distance_provider(
            registry.clone(),
            DistanceStrategy::Dense,
            DEFAULT_AUTO_THRESHOLD,
        )
        .unwrap();
        let s = ODMatrix::new(
            registry.region_ids(),
            registry.all_ids(),
            vec![0, 2, 3, 1, 0, 0],
        )
        .unwrap();
        let all = distance_distribution(&s, &provider, DistanceScope::RegionAndOutside).unwrap();
        assert_eq!(all.total_weight(), 6);
        let region = distance_distribution(&s, &provider, DistanceScope::RegionOnly).unwrap();
        assert_eq!(region.total_weight(), 3);
        assert_eq!(region.total_weight(), s.leading_block(2).unwrap().total());
    }

    #[test]
    fn ecdf_steps_match_hand_construction() {
        let dist =
            WeightedDistanceDistribution::from_samples([(1000.0, 2), (3000.0, 1)]).unwrap();
        assert!((dist.cdf(1000.0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((dist.cdf(2999.0) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(dist.cdf(3000.0), 1.0);
        assert_eq!(dist.cdf(999.0), 0.0);
    }

    #[test]
    fn ecdf_merges_equal_distances() {
        let dist = WeightedDistanceDistribution::from_samples([
            (1000.0, 1),
            (1000.0, 1),
            (500.0, 0),
        ])
        .unwrap();
        assert_eq!(dist.steps(), &[(1000.0, 2)]);
    }

    #[test]
    fn ks_examples() {
        let a = WeightedDistanceDistribution::from_samples([(1000.0, 1), (2000.0, 1)]).unwrap();
        assert_eq!(ks_distance(&a, &a).unwrap(), 0.0);

        let one = WeightedDistanceDistribution::from_samples([(1000.0, 4)]).unwrap();
        let two = WeightedDistanceDistribution::from_samples([(2000.0, 7)]).unwrap();
        assert_eq!(ks_distance(&one, &two).unwrap(), 1.0);

        let b = WeightedDistanceDistribution::from_samples([(1000.0, 1), (3000.0, 1)]).unwrap();
        assert!((ks_distance(&a, &b).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ks_rejects_degenerate() {
        let empty = WeightedDistanceDistribution::from_samples([]).unwrap();
        let a = WeightedDistanceDistribution::from_samples([(1.0, 1)]).unwrap();
        assert!(matches!(
            ks_distance(&empty, &a),
            Err(MetricsError::DegenerateDistribution)
        ));
    }

    #[test]
    fn binned_density_normalizes() {
        let dist = WeightedDistanceDistribution::from_samples([
            (100.0, 3),
            (5500.0, 2),
            (10_000.0, 5),
        ])
        .unwrap();
        let bins = binned_density(&dist, 50).unwrap();
        assert_eq!(bins.len(), 50);
        let mass: f64 = bins.iter().map(|b| b.density * (b.hi - b.lo)).sum();
        assert!((mass - 1.0).abs() < 1e-9);
        // The maximum distance lands in the last bin.
        assert!(bins.last().unwrap().density > 0.0);
    }
}
