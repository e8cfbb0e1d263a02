//! One-change-at-a-time baseline.
//!
//! Every addition and then every deletion is applied as its own batch, with a
//! full recluster in between. This models an incremental engine that cannot
//! aggregate changes and is what batch processing is timed against.

use crate::bisd::bisd_update;
use crate::dataset::{apply_batch_ids, UpdateBatch};
use crate::error::Result;
use crate::snnd::EngineState;

/// Per-pass totals from a sequential run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SequentialReport {
    pub passes: usize,
    pub t1_total: usize,
    pub t2_total: usize,
}

/// Applies additions in order, then deletions in ascending id order, one
/// point per pass. The batch is validated up front so a bad batch leaves the
/// state untouched.
pub fn sequential_update(state: &mut EngineState, batch: &UpdateBatch) -> Result<SequentialReport> {
    apply_batch_ids(state.dataset(), batch)?;
    let remaining = state.dataset().len() + batch.additions.len() - batch.deletions.len();
    if remaining < state.params().k + 1 {
        return Err(crate::error::Error::TooSmallAfterDeletions {
            k: state.params().k,
            remaining,
        });
    }
    state.params().check_size(remaining)?;

    let mut report = SequentialReport::default();
    let singles = batch
        .additions
        .iter()
        .map(|row| UpdateBatch {
            additions: vec![row.clone()],
            deletions: Default::default(),
        })
        .chain(batch.deletions.iter().map(|&id| UpdateBatch {
            additions: Vec::new(),
            deletions: [id].into(),
        }));
    for single in singles {
        let affected = bisd_update(state, &single)?;
        report.passes += 1;
        report.t1_total += affected.t1.len();
        report.t2_total += affected.t2.len();
    }
    Ok(report)
}
