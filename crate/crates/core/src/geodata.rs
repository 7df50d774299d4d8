//! Municipality registry and planar distance computation.
//!
//! Coordinates are projected planar coordinates in meters (Lambert-style).
//! Latitude/longitude input is not supported; every distance produced here is
//! the straight-line Euclidean distance between municipality centroids.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved identifier used when serializing the aggregated outside
/// row/column of a collapsed origin-destination table. No municipality may
/// carry this id.
pub const OUTSIDE_ID: &str = "__OUTSIDE__";

/// Cell-count threshold below which the `Auto` strategy precomputes a dense
/// distance matrix (10^7 cells = 80 MB of f64).
pub const DEFAULT_AUTO_THRESHOLD: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum GeodataError {
    #[error("duplicate municipality id `{0}`")]
    DuplicateId(String),
    #[error("municipality id `{0}` is reserved")]
    ReservedId(String),
    #[error("municipality `{id}` has non-finite coordinates ({x}, {y})")]
    NonFiniteCoordinates { id: String, x: f64, y: f64 },
    #[error("registry must contain at least one region municipality")]
    EmptyRegion,
    #[error("dense distance matrix of {rows}x{cols} cells exceeds addressable or available memory")]
    Capacity { rows: usize, cols: usize },
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad municipality record in `{path}`: {msg}")]
    Parse { path: String, msg: String },
}

/// A municipality: an identified point in the plane, flagged as belonging to
/// the studied region or to its outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Municipality {
    pub id: String,
    /// Easting in meters.
    pub x: f64,
    /// Northing in meters.
    pub y: f64,
    pub in_region: bool,
}

/// Planar Euclidean distance between two municipalities, in meters.
pub fn euclidean_distance(a: &Municipality, b: &Municipality) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// Ordered set of municipalities with the canonical layout used everywhere
/// else: region members occupy positions `0..n`, outside members positions
/// `n..m`. Any input order is normalized to this on construction; the
/// relative order within each group is preserved.
#[derive(Debug, Clone)]
pub struct MunicipalityRegistry {
    municipalities: Vec<Municipality>,
    index: HashMap<String, usize>,
    region_count: usize,
}

impl MunicipalityRegistry {
    pub fn new(mut municipalities: Vec<Municipality>) -> Result<Self, GeodataError> {
        for mun in &municipalities {
            if mun.id == OUTSIDE_ID {
                return Err(GeodataError::ReservedId(mun.id.clone()));
            }
            if !mun.x.is_finite() || !mun.y.is_finite() {
                return Err(GeodataError::NonFiniteCoordinates {
                    id: mun.id.clone(),
                    x: mun.x,
                    y: mun.y,
                });
            }
        }
        // Stable partition: region members first, input order preserved
        // within each group.
        municipalities.sort_by_key(|mun| !mun.in_region);
        let region_count = municipalities.iter().take_while(|mun| mun.in_region).count();
        if region_count == 0 {
            return Err(GeodataError::EmptyRegion);
        }
        let mut index = HashMap::with_capacity(municipalities.len());
        for (pos, mun) in municipalities.iter().enumerate() {
            if index.insert(mun.id.clone(), pos).is_some() {
                return Err(GeodataError::DuplicateId(mun.id.clone()));
            }
        }
        Ok(Self {
            municipalities,
            index,
            region_count,
        })
    }

    /// Number of region municipalities (`n`).
    pub fn region_count(&self) -> usize {
        self.region_count
    }

    /// Total number of municipalities, region plus outside (`m`).
    pub fn total_count(&self) -> usize {
        self.municipalities.len()
    }

    pub fn get(&self, position: usize) -> &Municipality {
        &self.municipalities[position]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn municipalities(&self) -> &[Municipality] {
        &self.municipalities
    }

    /// Ids of the region municipalities, in registry order.
    pub fn region_ids(&self) -> Vec<String> {
        self.municipalities[..self.region_count]
            .iter()
            .map(|mun| mun.id.clone())
            .collect()
    }

    /// Ids of all municipalities, in registry order.
    pub fn all_ids(&self) -> Vec<String> {
        self.municipalities.iter().map(|mun| mun.id.clone()).collect()
    }
}

/// How distances are served: precomputed dense matrix, on-demand evaluation,
/// or a size-based choice between the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceStrategy {
    Dense,
    Lazy,
    Auto,
}

/// Distance oracle over a registry: answers `d(i, j)` for every region origin
/// `i` in `0..n` and every destination `j` in `0..m`.
///
/// The dense and lazy strategies return bit-identical values: the dense table
/// is filled with exactly the same [`euclidean_distance`] evaluations the lazy
/// path performs on demand.
#[derive(Debug)]
pub struct DistanceProvider {
    registry: Arc<MunicipalityRegistry>,
    dense: Option<Vec<f64>>,
}

impl DistanceProvider {
    /// Distance in meters from region origin `origin` to destination `dest`.
    #[inline]
    pub fn distance(&self, origin: usize, dest: usize) -> f64 {
        debug_assert!(origin < self.registry.region_count());
        match &self.dense {
            Some(matrix) => matrix[origin * self.registry.total_count() + dest],
            None => euclidean_distance(self.registry.get(origin), self.registry.get(dest)),
        }
    }

    pub fn registry(&self) -> &Arc<MunicipalityRegistry> {
        &self.registry
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    pub fn strategy_name(&self) -> &'static str {
        if self.is_dense() {
            "dense"
        } else {
            "lazy"
        }
    }
}

/// Build a distance provider for `registry`. `Auto` picks the dense table
/// when `n * m <= auto_threshold` and falls back to on-demand evaluation
/// otherwise. An infeasible dense allocation is reported as
/// [`GeodataError::Capacity`] instead of aborting the process.
pub fn build_distance_provider(
    registry: Arc<MunicipalityRegistry>,
    strategy: DistanceStrategy,
    auto_threshold: usize,
) -> Result<DistanceProvider, GeodataError> {
    let n = registry.region_count();
    let m = registry.total_count();
    let dense_requested = match strategy {
        DistanceStrategy::Dense => true,
        DistanceStrategy::Lazy => false,
        DistanceStrategy::Auto => n
            .checked_mul(m)
            .is_some_and(|cells| cells <= auto_threshold),
    };
    let dense = if dense_requested {
        let cells = n
            .checked_mul(m)
            .ok_or(GeodataError::Capacity { rows: n, cols: m })?;
        let mut matrix = Vec::new();
        matrix
            .try_reserve_exact(cells)
            .map_err(|_| GeodataError::Capacity { rows: n, cols: m })?;
        for i in 0..n {
            let origin = registry.get(i);
            for j in 0..m {
                matrix.push(euclidean_distance(origin, registry.get(j)));
            }
        }
        Some(matrix)
    } else {
        None
    };
    Ok(DistanceProvider { registry, dense })
}

#[derive(Debug, Serialize, Deserialize)]
struct MunicipalityRow {
    id: String,
    x: f64,
    y: f64,
    in_region: u8,
}

/// Load a municipality registry from CSV with header `id,x,y,in_region`
/// (`in_region` must be 0 or 1). Duplicate ids are a load error.
pub fn load_municipalities_csv(path: &Path) -> Result<MunicipalityRegistry, GeodataError> {
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|err| csv_error(&display, err))?;
    let mut municipalities = Vec::new();
    for row in reader.deserialize::<MunicipalityRow>() {
        let row = row.map_err(|err| csv_error(&display, err))?;
        let in_region = match row.in_region {
            0 => false,
            1 => true,
            other => {
                return Err(GeodataError::Parse {
                    path: display,
                    msg: format!("in_region must be 0 or 1, got {other} for `{}`", row.id),
                })
            }
        };
        municipalities.push(Municipality {
            id: row.id,
            x: row.x,
            y: row.y,
            in_region,
        });
    }
    MunicipalityRegistry::new(municipalities)
}

/// Write a registry in the same CSV format accepted by
/// [`load_municipalities_csv`], in registry order.
pub fn write_municipalities_csv(
    path: &Path,
    registry: &MunicipalityRegistry,
) -> Result<(), GeodataError> {
    let display = path.display().to_string();
    let mut writer = csv::Writer::from_path(path).map_err(|err| csv_error(&display, err))?;
    for mun in registry.municipalities() {
        writer
            .serialize(MunicipalityRow {
                id: mun.id.clone(),
                x: mun.x,
                y: mun.y,
                in_region: u8::from(mun.in_region),
            })
            .map_err(|err| csv_error(&display, err))?;
    }
    writer.flush().map_err(|err| GeodataError::Io {
        path: display,
        source: err,
    })?;
    Ok(())
}

fn csv_error(path: &str, err: csv::Error) -> GeodataError {
    if err.is_io_error() {
        if let csv::ErrorKind::Io(source) = err.into_kind() {
            return GeodataError::Io {
                path: path.to_string(),
                source,
            };
        }
        unreachable!("is_io_error guarantees an Io kind");
    }
    GeodataError::Parse {
        path: path.to_string(),
        msg: err.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mun(id: &str, x: f64, y: f64, in_region: bool) -> Municipality {
        Municipality {
            id: id.to_string(),
            x,
            y,
            in_region,
        }
    }

    #[test]
    fn euclidean_examples() {
        let a = mun("a", 0.0, 0.0, true);
        assert_eq!(euclidean_distance(&a, &a), 0.0);
        assert_eq!(euclidean_distance(&a, &mun("b", 3.0, 4.0, true)), 5.0);
        assert_eq!(
            euclidean_distance(&mun("c", 1000.0, 2000.0, true), &mun("d", 4000.0, 6000.0, true)),
            5000.0
        );
    }

    #[test]
    fn registry_normalizes_region_first() {
        let reg = MunicipalityRegistry::new(vec![
            mun("out1", 10.0, 0.0, false),
            mun("a", 0.0, 0.0, true),
            mun("out2", 20.0, 0.0, false),
            mun("b", 1.0, 0.0, true),
        ])
        .unwrap();
        assert_eq!(reg.region_count(), 2);
        assert_eq!(reg.total_count(), 4);
        assert_eq!(reg.all_ids(), ["a", "b", "out1", "out2"]);
        // Permutation only: ids keep their coordinates.
        assert_eq!(reg.get(reg.position("out2").unwrap()).x, 20.0);
    }

    #[test]
    fn registry_rejects_duplicates_and_reserved() {
        let err = MunicipalityRegistry::new(vec![
            mun("a", 0.0, 0.0, true),
            mun("a", 1.0, 0.0, true),
        ])
        .unwrap_err();
        assert!(matches!(err, GeodataError::DuplicateId(id) if id == "a"));

        let err =
            MunicipalityRegistry::new(vec![mun(OUTSIDE_ID, 0.0, 0.0, true)]).unwrap_err();
        assert!(matches!(err, GeodataError::ReservedId(_)));

        let err =
            MunicipalityRegistry::new(vec![mun("x", f64::NAN, 0.0, true)]).unwrap_err();
        assert!(matches!(err, GeodataError::NonFiniteCoordinates { .. }));

        let err = MunicipalityRegistry::new(vec![mun("x", 0.0, 0.0, false)]).unwrap_err();
        assert!(matches!(err, GeodataError::EmptyRegion));
    }

    #[test]
    fn dense_matches_pairwise_distances() {
        let reg = Arc::new(
            MunicipalityRegistry::new(vec![
                mun("a", 0.0, 0.0, true),
                mun("b", 3.0, 4.0, true),
                mun("c", -3.0, -4.0, true),
            ])
            .unwrap(),
        );
        let dense =
            build_distance_provider(reg.clone(), DistanceStrategy::Dense, DEFAULT_AUTO_THRESHOLD)
                .unwrap();
        assert!(dense.is_dense());
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(
                    dense.distance(i, j),
                    euclidean_distance(reg.get(i), reg.get(j))
                );
            }
        }
    }

    #[test]
    fn lazy_is_bit_identical_to_dense() {
        let reg = Arc::new(
            MunicipalityRegistry::new(vec![
                mun("a", 0.3, 0.7, true),
                mun("b", 311.25, -47.5, true),
                mun("c", -1034.125, 9.875, false),
            ])
            .unwrap(),
        );
        let dense =
            build_distance_provider(reg.clone(), DistanceStrategy::Dense, DEFAULT_AUTO_THRESHOLD)
                .unwrap();
        let lazy =
            build_distance_provider(reg.clone(), DistanceStrategy::Lazy, DEFAULT_AUTO_THRESHOLD)
                .unwrap();
        assert!(!lazy.is_dense());
        for i in 0..reg.region_count() {
            for j in 0..reg.total_count() {
                assert_eq!(
                    dense.distance(i, j).to_bits(),
                    lazy.distance(i, j).to_bits()
                );
            }
        }
    }

    #[test]
    fn distance_is_symmetric_over_region_pairs() {
        let reg = Arc::new(
            MunicipalityRegistry::new(vec![
                mun("a", 12.5, -3.0, true),
                mun("b", -7.25, 99.0, true),
            ])
            .unwrap(),
        );
        let provider =
            build_distance_provider(reg, DistanceStrategy::Lazy, DEFAULT_AUTO_THRESHOLD).unwrap();
        assert_eq!(
            provider.distance(0, 1).to_bits(),
            provider.distance(1, 0).to_bits()
        );
    }

    #[test]
    fn auto_picks_lazy_above_threshold() {
        // Midi-Pyrenees-scale registry: 3020 region, 3845 outside.
        let mut municipalities = Vec::new();
        for k in 0..6865usize {
            municipalities.push(mun(&format!("m{k}"), k as f64, 0.0, k < 3020));
        }
        let reg = Arc::new(MunicipalityRegistry::new(municipalities).unwrap());
        let cells = reg.region_count() * reg.total_count();
        assert!(cells > DEFAULT_AUTO_THRESHOLD);
        let provider =
            build_distance_provider(reg, DistanceStrategy::Auto, DEFAULT_AUTO_THRESHOLD).unwrap();
        assert!(!provider.is_dense());
    }

    #[test]
    fn auto_picks_dense_below_threshold() {
        let reg = Arc::new(
            MunicipalityRegistry::new(vec![
                mun("a", 0.0, 0.0, true),
                mun("b", 1.0, 0.0, false),
            ])
            .unwrap(),
        );
        let provider =
            build_distance_provider(reg, DistanceStrategy::Auto, DEFAULT_AUTO_THRESHOLD).unwrap();
        assert!(provider.is_dense());
    }

    #[test]
    fn municipalities_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("municipalities.csv");
        let reg = MunicipalityRegistry::new(vec![
            mun("a", 0.5, -1.25, true),
            mun("b", 1e6, 2e6, false),
        ])
        .unwrap();
        write_municipalities_csv(&path, &reg).unwrap();
        let loaded = load_municipalities_csv(&path).unwrap();
        assert_eq!(loaded.municipalities(), reg.municipalities());
    }

    #[test]
    fn municipalities_csv_rejects_bad_flag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "id,x,y,in_region\na,0,0,2\n").unwrap();
        let err = load_municipalities_csv(&path).unwrap_err();
        assert!(matches!(err, GeodataError::Parse { .. }));
    }
}
