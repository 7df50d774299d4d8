//! Origin-destination matrices, marginal extraction, aggregate-input
//! assembly, and the collapse of region-to-everywhere flows into a square
//! region-plus-outside table.
//!
//! Flows are exact integer commuter counts end to end; the generator assigns
//! individual commuters, so nothing here ever goes through floating point.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodata::{MunicipalityRegistry, OUTSIDE_ID};

#[derive(Debug, Error)]
pub enum OdError {
    #[error("flow matrix of {rows}x{cols} needs {want} entries, got {got}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        want: usize,
        got: usize,
    },
    #[error("duplicate id `{0}` in matrix axis")]
    DuplicateAxisId(String),
    #[error("flow from `{id}` to itself must be zero")]
    NonZeroDiagonal { id: String },
    #[error("operation requires a square matrix over a single municipality set")]
    NotSquare,
    #[error("destination ids must start with the origin ids (region block misaligned)")]
    RegionBlockMisaligned,
    #[error("expected {want} in-commuter totals for the region block, got {got}")]
    TotalsLength { want: usize, got: usize },
    #[error("missing aggregate record for municipality `{0}`")]
    MissingAggregate(String),
    #[error("aggregate record for unknown municipality `{0}`")]
    UnknownMunicipality(String),
    #[error("duplicate aggregate record for municipality `{0}`")]
    DuplicateAggregate(String),
    #[error("infeasible inputs: total in-commuters {total_in} < total out-commuters {total_out} (deficit {deficit})")]
    Infeasible {
        total_in: u64,
        total_out: u64,
        deficit: u64,
    },
    #[error("in-commuter total of `{dest_id}` ({total}) is below the generated column sum ({generated})")]
    NegativeOutsideFlow {
        dest_id: String,
        total: u64,
        generated: u64,
    },
    #[error("flow record references unknown municipality `{0}`")]
    UnknownFlowId(String),
    #[error("flow origin `{0}` is not a region municipality")]
    OutsideOrigin(String),
    #[error("duplicate flow record for `{origin}` -> `{dest}`")]
    DuplicateFlow { origin: String, dest: String },
    #[error("failed to read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad record in `{path}`: {msg}")]
    Parse { path: String, msg: String },
}

/// Provenance recorded on synthetic matrices: everything needed to reproduce
/// the generation run bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMetadata {
    pub shape: String,
    pub beta: f64,
    pub seed: u64,
    pub rng: String,
    pub refresh_interval: u64,
}

/// Integer-valued commuter flow matrix between an ordered origin set and an
/// ordered destination set.
///
/// Construction enforces the self-flow rule: whenever an origin id also
/// appears as a destination id, the corresponding entry must be zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ODMatrix {
    origin_ids: Vec<String>,
    dest_ids: Vec<String>,
    flows: Vec<u64>,
    pub metadata: Option<GenerationMetadata>,
}

impl ODMatrix {
    pub fn new(
        origin_ids: Vec<String>,
        dest_ids: Vec<String>,
        flows: Vec<u64>,
    ) -> Result<Self, OdError> {
        let rows = origin_ids.len();
        let cols = dest_ids.len();
        let want = rows
            .checked_mul(cols)
            .ok_or(OdError::DimensionMismatch {
                rows,
                cols,
                want: usize::MAX,
                got: flows.len(),
            })?;
        if flows.len() != want {
            return Err(OdError::DimensionMismatch {
                rows,
                cols,
                want,
                got: flows.len(),
            });
        }
        let dest_index = unique_index(&dest_ids)?;
        unique_index(&origin_ids)?;
        for (i, id) in origin_ids.iter().enumerate() {
            if let Some(&j) = dest_index.get(id.as_str()) {
                if flows[i * cols + j] != 0 {
                    return Err(OdError::NonZeroDiagonal { id: id.clone() });
                }
            }
        }
        Ok(Self {
            origin_ids,
            dest_ids,
            flows,
            metadata: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.origin_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.dest_ids.len()
    }

    pub fn origin_ids(&self) -> &[String] {
        &self.origin_ids
    }

    pub fn dest_ids(&self) -> &[String] {
        &self.dest_ids
    }

    #[inline]
    pub fn get(&self, origin: usize, dest: usize) -> u64 {
        self.flows[origin * self.cols() + dest]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.flows
            .chunks(self.cols())
            .map(|row| row.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let mut sums = vec![0u64; self.cols()];
        for row in self.flows.chunks(self.cols()) {
            for (sum, &value) in sums.iter_mut().zip(row) {
                *sum += value;
            }
        }
        sums
    }

    pub fn total(&self) -> u64 {
        self.flows.iter().sum()
    }

    /// Nonzero entries as `(origin_index, dest_index, count)` in row-major order.
    pub fn iter_nonzero(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        let cols = self.cols();
        self.flows
            .iter()
            .enumerate()
            .filter(|(_, &value)| value != 0)
            .map(move |(k, &value)| (k / cols, k % cols, value))
    }

    /// True when both matrices cover the same index sets and hold the same
    /// counts (metadata ignored).
    pub fn same_flows(&self, other: &ODMatrix) -> bool {
        self.origin_ids == other.origin_ids
            && self.dest_ids == other.dest_ids
            && self.flows == other.flows
    }

    /// Sub-matrix of the first `k` destination columns. The destination ids
    /// of the block must equal the origin ids (the region block of a
    /// region-to-everywhere matrix).
    pub fn leading_block(&self, k: usize) -> Result<ODMatrix, OdError> {
        if k > self.cols() || self.dest_ids[..k] != self.origin_ids[..] {
            return Err(OdError::RegionBlockMisaligned);
        }
        let mut flows = Vec::with_capacity(self.rows() * k);
        for i in 0..self.rows() {
            flows.extend_from_slice(&self.flows[i * self.cols()..i * self.cols() + k]);
        }
        ODMatrix::new(self.origin_ids.clone(), self.dest_ids[..k].to_vec(), flows)
    }
}

fn unique_index(ids: &[String]) -> Result<HashMap<&str, usize>, OdError> {
    let mut index = HashMap::with_capacity(ids.len());
    for (pos, id) in ids.iter().enumerate() {
        if index.insert(id.as_str(), pos).is_some() {
            return Err(OdError::DuplicateAxisId(id.clone()));
        }
    }
    Ok(index)
}

/// In-commuter counts per destination and out-commuter counts per origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub in_commuters: Vec<u64>,
    pub out_commuters: Vec<u64>,
}

/// Column sums (in-commuters per workplace) and row sums (out-commuters per
/// residence) of a square zero-diagonal flow matrix.
pub fn marginals_from_od(r: &ODMatrix) -> Result<Marginals, OdError> {
    if r.origin_ids() != r.dest_ids() {
        return Err(OdError::NotSquare);
    }
    Ok(Marginals {
        in_commuters: r.col_sums(),
        out_commuters: r.row_sums(),
    })
}

/// One municipality's aggregate totals: how many commuters work there
/// (wherever they live) and how many of its residents commute out (wherever
/// they work). Intra-municipality workers are excluded by definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub id: String,
    pub in_commuters: u64,
    pub out_commuters: u64,
}

/// Generation inputs assembled from aggregate totals: in-commuter capacity
/// for every municipality (region and outside) and out-commuter demand for
/// region municipalities only.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledInputs {
    pub in_capacity: Vec<u64>,
    pub out_demand: Vec<u64>,
}

/// Turn per-municipality aggregates into generator inputs over the registry's
/// canonical ordering. Outside residents are not assigned a workplace, so
/// out-commuter counts of outside municipalities are ignored.
pub fn assemble_with_outside_inputs(
    registry: &MunicipalityRegistry,
    aggregates: &[AggregateRecord],
) -> Result<AssembledInputs, OdError> {
    let mut by_id: HashMap<&str, &AggregateRecord> = HashMap::with_capacity(aggregates.len());
    for record in aggregates {
        if registry.position(&record.id).is_none() {
            return Err(OdError::UnknownMunicipality(record.id.clone()));
        }
        if by_id.insert(record.id.as_str(), record).is_some() {
            return Err(OdError::DuplicateAggregate(record.id.clone()));
        }
    }
    let n = registry.region_count();
    let m = registry.total_count();
    let mut in_capacity = Vec::with_capacity(m);
    let mut out_demand = Vec::with_capacity(n);
    for pos in 0..m {
        let id = &registry.get(pos).id;
        let record = by_id
            .get(id.as_str())
            .ok_or_else(|| OdError::MissingAggregate(id.clone()))?;
        in_capacity.push(record.in_commuters);
        if pos < n {
            out_demand.push(record.out_commuters);
        }
    }
    let total_in: u64 = in_capacity.iter().sum();
    let total_out: u64 = out_demand.iter().sum();
    if total_in < total_out {
        return Err(OdError::Infeasible {
            total_in,
            total_out,
            deficit: total_out - total_in,
        });
    }
    Ok(AssembledInputs {
        in_capacity,
        out_demand,
    })
}

/// Square (n+1)x(n+1) origin-destination table: rows/columns `0..n` are the
/// region municipalities, index `n` is the aggregated outside. The
/// outside-to-outside cell and the diagonal are structurally zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPlusOutsideOD {
    region_ids: Vec<String>,
    flows: Vec<u64>,
}

impl RegionPlusOutsideOD {
    pub fn region_count(&self) -> usize {
        self.region_ids.len()
    }

    pub fn side(&self) -> usize {
        self.region_ids.len() + 1
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    #[inline]
    pub fn get(&self, origin: usize, dest: usize) -> u64 {
        self.flows[origin * self.side() + dest]
    }

    pub fn total(&self) -> u64 {
        self.flows.iter().sum()
    }

    /// The region-to-region block as a square [`ODMatrix`].
    pub fn region_block(&self) -> ODMatrix {
        let n = self.region_count();
        let mut flows = Vec::with_capacity(n * n);
        for i in 0..n {
            flows.extend_from_slice(&self.flows[i * self.side()..i * self.side() + n]);
        }
        ODMatrix::new(self.region_ids.clone(), self.region_ids.clone(), flows)
            .expect("region block inherits the zero diagonal")
    }

    /// The full table as an [`ODMatrix`] whose last origin/destination id is
    /// the reserved outside marker; convenient for the comparison indices.
    pub fn to_od_matrix(&self) -> ODMatrix {
        let mut ids = self.region_ids.clone();
        ids.push(OUTSIDE_ID.to_string());
        ODMatrix::new(ids.clone(), ids, self.flows.clone())
            .expect("collapsed table satisfies the zero diagonal")
    }
}

/// Collapse a region-to-everywhere matrix (`n` region origins times `m`
/// destinations) into the square region-plus-outside table.
///
/// The region block is copied, each origin's outside column is the sum of its
/// flows to outside municipalities, and the outside row is obtained by
/// difference: the municipality's total in-commuter count minus the generated
/// region-internal column sum. A negative difference means the supplied
/// totals are inconsistent with the matrix and is a hard error.
pub fn collapse_to_region_plus_outside(
    s_full: &ODMatrix,
    in_totals: &[u64],
) -> Result<RegionPlusOutsideOD, OdError> {
    let n = s_full.rows();
    let m = s_full.cols();
    if m < n || s_full.dest_ids()[..n] != s_full.origin_ids()[..] {
        return Err(OdError::RegionBlockMisaligned);
    }
    if in_totals.len() != n {
        return Err(OdError::TotalsLength {
            want: n,
            got: in_totals.len(),
        });
    }
    let side = n + 1;
    let mut flows = vec![0u64; side * side];
    for i in 0..n {
        for j in 0..n {
            flows[i * side + j] = s_full.get(i, j);
        }
        flows[i * side + n] = (n..m).map(|j| s_full.get(i, j)).sum();
    }
    for j in 0..n {
        let generated: u64 = (0..n).map(|i| s_full.get(i, j)).sum();
        if in_totals[j] < generated {
            return Err(OdError::NegativeOutsideFlow {
                dest_id: s_full.dest_ids()[j].clone(),
                total: in_totals[j],
                generated,
            });
        }
        flows[n * side + j] = in_totals[j] - generated;
    }
    Ok(RegionPlusOutsideOD {
        region_ids: s_full.origin_ids().to_vec(),
        flows,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct FlowRow {
    origin_id: String,
    dest_id: String,
    count: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct AggregateRow {
    id: String,
    in_commuters: u64,
    out_commuters: u64,
}

/// Load detailed flows (`origin_id,dest_id,count`, count >= 1, absent pairs
/// are zero) against a registry. The result is the canonical
/// region-origins-by-all-destinations matrix; diagonal pairs, unknown ids,
/// outside origins, zero counts, and duplicate pairs are load errors.
pub fn load_flows_csv(path: &Path, registry: &MunicipalityRegistry) -> Result<ODMatrix, OdError> {
    let display = path.display().to_string();
    let n = registry.region_count();
    let m = registry.total_count();
    let mut flows = vec![0u64; n * m];
    let mut reader = csv::Reader::from_path(path).map_err(|err| csv_error(&display, err))?;
    for row in reader.deserialize::<FlowRow>() {
        let row = row.map_err(|err| csv_error(&display, err))?;
        if row.count == 0 {
            return Err(OdError::Parse {
                path: display,
                msg: format!("count must be >= 1 for `{}` -> `{}`", row.origin_id, row.dest_id),
            });
        }
        if row.origin_id == row.dest_id {
            return Err(OdError::NonZeroDiagonal { id: row.origin_id });
        }
        let origin = registry
            .position(&row.origin_id)
            .ok_or_else(|| OdError::UnknownFlowId(row.origin_id.clone()))?;
        if origin >= n {
            return Err(OdError::OutsideOrigin(row.origin_id));
        }
        let dest = registry
            .position(&row.dest_id)
            .ok_or_else(|| OdError::UnknownFlowId(row.dest_id.clone()))?;
        let cell = &mut flows[origin * m + dest];
        if *cell != 0 {
            return Err(OdError::DuplicateFlow {
                origin: row.origin_id,
                dest: row.dest_id,
            });
        }
        *cell = row.count;
    }
    ODMatrix::new(registry.region_ids(), registry.all_ids(), flows)
}

/// Write the nonzero entries of a matrix as `origin_id,dest_id,count` in
/// row-major order (deterministic bytes for identical matrices).
pub fn write_flows_csv(path: &Path, matrix: &ODMatrix) -> Result<(), OdError> {
    let display = path.display().to_string();
    let mut writer = csv::Writer::from_path(path).map_err(|err| csv_error(&display, err))?;
    for (i, j, count) in matrix.iter_nonzero() {
        writer
            .serialize(FlowRow {
                origin_id: matrix.origin_ids()[i].clone(),
                dest_id: matrix.dest_ids()[j].clone(),
                count,
            })
            .map_err(|err| csv_error(&display, err))?;
    }
    writer.flush().map_err(|err| OdError::Io {
        path: display,
        source: err,
    })?;
    Ok(())
}

/// Write a collapsed table as a flows CSV using the reserved outside id.
pub fn write_region_plus_outside_csv(
    path: &Path,
    collapsed: &RegionPlusOutsideOD,
) -> Result<(), OdError> {
    write_flows_csv(path, &collapsed.to_od_matrix())
}

/// Load a collapsed region-plus-outside table written by
/// [`write_region_plus_outside_csv`].
pub fn load_region_plus_outside_csv(
    path: &Path,
    registry: &MunicipalityRegistry,
) -> Result<RegionPlusOutsideOD, OdError> {
    let display = path.display().to_string();
    let n = registry.region_count();
    let side = n + 1;
    let position = |id: &str| -> Option<usize> {
        if id == OUTSIDE_ID {
            Some(n)
        } else {
            registry.position(id).filter(|&pos| pos < n)
        }
    };
    let mut flows = vec![0u64; side * side];
    let mut reader = csv::Reader::from_path(path).map_err(|err| csv_error(&display, err))?;
    for row in reader.deserialize::<FlowRow>() {
        let row = row.map_err(|err| csv_error(&display, err))?;
        if row.count == 0 {
            return Err(OdError::Parse {
                path: display,
                msg: format!("count must be >= 1 for `{}` -> `{}`", row.origin_id, row.dest_id),
            });
        }
        if row.origin_id == row.dest_id {
            return Err(OdError::NonZeroDiagonal { id: row.origin_id });
        }
        let origin =
            position(&row.origin_id).ok_or_else(|| OdError::UnknownFlowId(row.origin_id.clone()))?;
        let dest =
            position(&row.dest_id).ok_or_else(|| OdError::UnknownFlowId(row.dest_id.clone()))?;
        let cell = &mut flows[origin * side + dest];
        if *cell != 0 {
            return Err(OdError::DuplicateFlow {
                origin: row.origin_id,
                dest: row.dest_id,
            });
        }
        *cell = row.count;
    }
    Ok(RegionPlusOutsideOD {
        region_ids: registry.region_ids(),
        flows,
    })
}

/// Load aggregate totals from CSV with header `id,in_commuters,out_commuters`.
pub fn load_aggregates_csv(path: &Path) -> Result<Vec<AggregateRecord>, OdError> {
    let display = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|err| csv_error(&display, err))?;
    let mut records = Vec::new();
    for row in reader.deserialize::<AggregateRow>() {
        let row = row.map_err(|err| csv_error(&display, err))?;
        records.push(AggregateRecord {
            id: row.id,
            in_commuters: row.in_commuters,
            out_commuters: row.out_commuters,
        });
    }
    Ok(records)
}

/// Write aggregate totals in the format accepted by [`load_aggregates_csv`].
pub fn write_aggregates_csv(path: &Path, records: &[AggregateRecord]) -> Result<(), OdError> {
    let display = path.display().to_string();
    let mut writer = csv::Writer::from_path(path).map_err(|err| csv_error(&display, err))?;
    for record in records {
        writer
            .serialize(AggregateRow {
                id: record.id.clone(),
                in_commuters: record.in_commuters,
                out_commuters: record.out_commuters,
            })
            .map_err(|err| csv_error(&display, err))?;
    }
    writer.flush().map_err(|err| OdError::Io {
        path: display,
        source: err,
    })?;
    Ok(())
}

fn csv_error(path: &str, err: csv::Error) -> OdError {
    if err.is_io_error() {
        if let csv::ErrorKind::Io(source) = err.into_kind() {
            return OdError::Io {
                path: path.to_string(),
                source,
            };
        }
        unreachable!("is_io_error guarantees an Io kind");
    }
    OdError::Parse {
        path: path.to_string(),
        msg: err.to_string(),
    }
}
