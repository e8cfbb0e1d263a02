//! Point storage, identity management and the distance metric.
//!
//! Points live in a flat coordinate buffer ordered by id. Ids are handed out
//! by arrival and never reused, so the id column stays sorted under appends
//! and deletions and lookups are a binary search.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PointId(pub u64);

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for PointId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.parse().map(PointId)
    }
}

/// A borrowed view of one stored point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point<'a> {
    pub id: PointId,
    pub coords: &'a [f64],
}

/// Euclidean distance between two coordinate vectors.
///
/// The result is bitwise symmetric: every pairwise distance in the crate goes
/// through this function, so rankings computed from either endpoint agree.
#[inline]
pub fn distance(p: &[f64], q: &[f64]) -> f64 {
    squared_distance(p, q).sqrt()
}

/// Squared Euclidean distance; `distance` is exactly its square root.
#[inline]
pub fn squared_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distance between points of different dimension");
    p.iter()
        .zip(q)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    ids: Vec<PointId>,
    coords: Vec<f64>,
    next_id: PointId,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dataset dimension must be positive");
        Dataset {
            dim,
            ids: Vec::new(),
            coords: Vec::new(),
            next_id: PointId(0),
        }
    }

    /// Builds a dataset from coordinate rows, assigning ids `0..rows.len()`.
    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut dataset = Dataset::new(dim);
        for row in rows {
            dataset.check_dim(row.as_ref())?;
        }
        for row in rows {
            dataset.push(row.as_ref());
        }
        Ok(dataset)
    }

    /// Reassembles a dataset from stored parts, validating every invariant.
    pub fn from_parts(dim: usize, ids: Vec<PointId>, coords: Vec<f64>, next_id: PointId) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParams("dimension must be positive".into()));
        }
        if coords.len() != ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: ids.len() * dim,
                found: coords.len(),
            });
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams("point ids must be strictly increasing".into()));
        }
        if ids.last().is_some_and(|last| *last >= next_id) {
            return Err(Error::InvalidParams("next_id must exceed every stored id".into()));
        }
        Ok(Dataset {
            dim,
            ids,
            coords,
            next_id,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn next_id(&self) -> PointId {
        self.next_id
    }

    /// Live ids in ascending order.
    pub fn ids(&self) -> &[PointId] {
        &self.ids
    }

    pub fn index_of(&self, id: PointId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn contains(&self, id: PointId) -> bool {
        self.index_of(id).is_some()
    }

    pub fn id_at(&self, index: usize) -> PointId {
        self.ids[index]
    }

    pub fn coords_at(&self, index: usize) -> &[f64] {
        &self.coords[index * self.dim..(index + 1) * self.dim]
    }

    pub fn coords(&self, id: PointId) -> Option<&[f64]> {
        self.index_of(id).map(|i| self.coords_at(i))
    }

    pub fn point_at(&self, index: usize) -> Point<'_> {
        Point {
            id: self.ids[index],
            coords: self.coords_at(index),
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = Point<'_>> + '_ {
        (0..self.len()).map(move |i| self.point_at(i))
    }

    pub(crate) fn check_dim(&self, coords: &[f64]) -> Result<()> {
        if coords.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: coords.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn push(&mut self, coords: &[f64]) -> PointId {
        debug_assert_eq!(coords.len(), self.dim);
        let id = self.next_id;
        self.ids.push(id);
        self.coords.extend_from_slice(coords);
        self.next_id = PointId(id.0 + 1);
        id
    }

    /// Drops the given ids, keeping the survivors in id order. Returns the
    /// surviving positions' original indices.
    pub(crate) fn remove(&mut self, deleted: &BTreeSet<PointId>) -> Vec<usize> {
        let dim = self.dim;
        let mut kept = Vec::with_capacity(self.len());
        let mut write = 0;
        for read in 0..self.ids.len() {
            if deleted.contains(&self.ids[read]) {
                continue;
            }
            if write != read {
                self.ids[write] = self.ids[read];
                self.coords.copy_within(read * dim..(read + 1) * dim, write * dim);
            }
            kept.push(read);
            write += 1;
        }
        self.ids.truncate(write);
        self.coords.truncate(write * dim);
        kept
    }

    /// The dataset after applying `batch`: additions get fresh ids in order,
    /// then deletions are dropped.
    pub fn applied(&self, batch: &UpdateBatch) -> Result<Dataset> {
        apply_batch_ids(self, batch)?;
        let mut out = self.clone();
        for row in &batch.additions {
            out.push(row);
        }
        out.remove(&batch.deletions);
        Ok(out)
    }

    /// Serializes the coordinates as comma-separated rows in id order.
    pub fn to_rows_text(&self) -> String {
        let mut out = String::new();
        for point in self.iter() {
            push_row(&mut out, point.coords);
        }
        out
    }
}

pub(crate) fn push_row(out: &mut String, coords: &[f64]) {
    use std::fmt::Write;
    for (i, c) in coords.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{c}").unwrap();
    }
    out.push('\n');
}

/// A batch of changes: points to insert and ids to delete.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateBatch {
    pub additions: Vec<Vec<f64>>,
    pub deletions: BTreeSet<PointId>,
}

impl UpdateBatch {
    pub fn is_empty(&self) -> bool {
        self.additions.is_empty() && self.deletions.is_empty()
    }
}

/// Validates a batch against `dataset` and returns the ids its additions will
/// receive. The dataset is not modified.
pub fn apply_batch_ids(dataset: &Dataset, batch: &UpdateBatch) -> Result<Vec<PointId>> {
    for row in &batch.additions {
        dataset.check_dim(row)?;
    }
    let first_new = dataset.next_id().0;
    let new_ids: Vec<PointId> = (0..batch.additions.len() as u64)
        .map(|i| PointId(first_new + i))
        .collect();

    let conflicts: Vec<PointId> = batch
        .deletions
        .iter()
        .copied()
        .filter(|id| id.0 >= first_new && id.0 < first_new + new_ids.len() as u64)
        .collect();
    if !conflicts.is_empty() {
        return Err(Error::AddDeleteConflict(conflicts));
    }
    let missing: Vec<PointId> = batch
        .deletions
        .iter()
        .copied()
        .filter(|id| !dataset.contains(*id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing));
    }
    Ok(new_ids)
}

fn data_lines(source: &str) -> impl Iterator<Item = (usize, &str)> {
    source
        .lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.trim()))
        .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'))
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Number of fields on the first data row, if any.
pub fn infer_dim(source: &str) -> Option<usize> {
    data_lines(source).next().map(|(_, line)| split_fields(line).len())
}

/// Parses numeric rows of exactly `dim` fields. An empty source yields no rows.
pub fn parse_rows(source: &str, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (line_no, line) in data_lines(source) {
        let fields = split_fields(line);
        if fields.len() != dim {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {dim} fields, found {}", fields.len()),
            });
        }
        let row = fields
            .iter()
            .map(|f| {
                let value: f64 = f.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("not a number: {f:?}"),
                })?;
                if value.is_finite() {
                    Ok(value)
                } else {
                    Err(Error::Parse {
                        line: line_no,
                        message: format!("non-finite value: {f:?}"),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Loads a base dataset. Ids are assigned `0..n` in row order.
pub fn load_points(source: &str, dim: usize) -> Result<Dataset> {
    if dim == 0 {
        return Err(Error::InvalidParams("dimension must be positive".into()));
    }
    let rows = parse_rows(source, dim)?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::from_rows(dim, &rows)
}

/// Parses a deletions file: one id per line.
pub fn parse_deletions(source: &str) -> Result<BTreeSet<PointId>> {
    data_lines(source)
        .map(|(line_no, line)| {
            line.parse::<PointId>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("not a point id: {line:?}"),
            })
        })
        .collect()
}
