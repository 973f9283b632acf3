//! Anchor set purification: reverse-KNN connectivity of pseudo-labelled
//! candidates, keeping only the least connected ones for the anchor set.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SampleId;
use crate::density::{AnchorIndex, CosineIndex};
use crate::error::{AcplError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    /// `(candidate id, c)` in candidate order.
    pub counts: Vec<(SampleId, usize)>,
    /// Minimum count; absent when there were no candidates.
    pub alpha: Option<usize>,
    /// Candidates with `c <= alpha`, ascending id.
    pub selected: Vec<SampleId>,
}

fn check_indices(unlabelled: &CosineIndex, anchors: &AnchorIndex) -> Result<()> {
    if unlabelled.k() != anchors.k() {
        return Err(AcplError::Consistency(format!(
            "unlabelled index K={} differs from anchor index K={}",
            unlabelled.k(),
            anchors.k()
        )));
    }
    Ok(())
}

fn anchor_neighbours(candidate_id: SampleId, features: &[f64], unlabelled: &CosineIndex, anchors: &AnchorIndex) -> Result<Vec<usize>> {
    if unlabelled.position_of(candidate_id).is_none() {
        return Err(AcplError::Consistency(format!(
            "candidate {candidate_id} is not in the unlabelled index"
        )));
    }
    Ok(anchors
        .cosine()
        .query(features)?
        .into_iter()
        .map(|n| n.position)
        .collect())
}

fn reverse_set(anchors: &AnchorIndex, position: usize, unlabelled: &CosineIndex) -> Result<HashSet<SampleId>> {
    Ok(unlabelled
        .query_unit(anchors.cosine().vector(position), unlabelled.k())?
        .into_iter()
        .map(|n| n.id)
        .collect())
}

/// Number of the candidate's K nearest anchors that have the candidate among
/// their own K nearest unlabelled samples. Always in `[0, K]`.
pub fn connectivity_count(
    candidate_id: SampleId,
    features: &[f64],
    unlabelled: &CosineIndex,
    anchors: &AnchorIndex,
) -> Result<usize> {
    check_indices(unlabelled, anchors)?;
    let mut count = 0;
    for position in anchor_neighbours(candidate_id, features, unlabelled, anchors)? {
        if reverse_set(anchors, position, unlabelled)?.contains(&candidate_id) {
            count += 1;
        }
    }
    Ok(count)
}

/// Connectivity of every candidate and the minimal-connectivity selection.
///
/// `unlabelled` must index the unlabelled pool as it was before the
/// candidates were removed from it.
pub fn purify(
    candidates: &[(SampleId, &[f64])],
    unlabelled: &CosineIndex,
    anchors: &AnchorIndex,
) -> Result<ConnectivityReport> {
    if candidates.is_empty() {
        return Ok(ConnectivityReport {
            counts: Vec::new(),
            alpha: None,
            selected: Vec::new(),
        });
    }
    check_indices(unlabelled, anchors)?;
    let forward: Vec<Vec<usize>> = candidates
        .par_iter()
        .map(|(id, f)| anchor_neighbours(*id, f, unlabelled, anchors))
        .collect::<Result<_>>()?;
    let needed: BTreeSet<usize> = forward.iter().flatten().copied().collect();
    let reverse: BTreeMap<usize, HashSet<SampleId>> = needed
        .into_par_iter()
        .map(|p| reverse_set(anchors, p, unlabelled).map(|s| (p, s)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    let counts: Vec<(SampleId, usize)> = candidates
        .iter()
        .zip(&forward)
        .map(|((id, _), positions)| {
            let c = positions
                .iter()
                .filter(|p| reverse[p].contains(id))
                .count();
            (*id, c)
        })
        .collect();
    let alpha = counts.iter().map(|(_, c)| *c).min();
    let mut selected: Vec<SampleId> = counts
        .iter()
        .filter(|(_, c)| Some(*c) <= alpha)
        .map(|(id, _)| *id)
        .collect();
    selected.sort_unstable();
    Ok(ConnectivityReport {
        counts,
        alpha,
        selected,
    })
}

/// The selection rule alone: every id whose count equals the minimum.
pub fn select_least_connected(counts: &[(SampleId, usize)]) -> Vec<SampleId> {
    let Some(alpha) = counts.iter().map(|(_, c)| *c).min() else {
        return Vec::new();
    };
    let mut out: Vec<SampleId> = counts
        .iter()
        .filter(|(_, c)| *c <= alpha)
        .map(|(id, _)| *id)
        .collect();
    out.sort_unstable();
    out
}
