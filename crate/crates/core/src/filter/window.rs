use nalgebra::DMatrix;

use super::{clone_offset, CloneEntry, FilterState};
use crate::error::{Error, Result};
use crate::symmetry::idx;

/// Appends `Ê` as a clone at `stamp`, duplicating the `ε_E` rows and columns.
pub fn clone_state(state: &FilterState, stamp: f64) -> Result<FilterState> {
    if let Some(last) = state.clones.last() {
        if stamp <= last.stamp {
            return Err(Error::InvalidArgument(format!(
                "clone stamp {stamp} s does not follow the last clone at {} s",
                last.stamp
            )));
        }
    }
    let n = state.dim();
    let mut cov = DMatrix::zeros(n + 6, n + 6);
    cov.view_mut((0, 0), (n, n)).copy_from(&state.cov);
    let rows = state.cov.view((idx::EXTR, 0), (6, n)).into_owned();
    cov.view_mut((n, 0), (6, n)).copy_from(&rows);
    cov.view_mut((0, n), (n, 6)).copy_from(&rows.transpose());
    cov.view_mut((n, n), (6, 6))
        .copy_from(&state.cov.view((idx::EXTR, idx::EXTR), (6, 6)));

    let mut clones = state.clones.clone();
    clones.push(CloneEntry { stamp, e: state.xhat.e });
    Ok(FilterState { clones, cov, ..state.clone() })
}

/// Removes the clones at `stamps` together with their covariance rows and columns.
pub fn marginalize(state: &FilterState, stamps: &[f64]) -> Result<FilterState> {
    let mut drop = vec![false; state.clones.len()];
    for s in stamps {
        let i = state
            .clone_index(*s)
            .ok_or_else(|| Error::InvalidArgument(format!("no clone at stamp {s} s")))?;
        drop[i] = true;
    }
    let mut keep_rows: Vec<usize> = (0..idx::CORE).collect();
    let mut clones = Vec::new();
    for (i, c) in state.clones.iter().enumerate() {
        if !drop[i] {
            keep_rows.extend(clone_offset(i)..clone_offset(i) + 6);
            clones.push(*c);
        }
    }
    let m = keep_rows.len();
    let cov = DMatrix::from_fn(m, m, |i, j| state.cov[(keep_rows[i], keep_rows[j])]);
    Ok(FilterState { clones, cov, ..state.clone() })
}
