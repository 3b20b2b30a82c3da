//! Beam-search inference over the label tree.
//!
//! A path's score is the sum over its levels of `sigmoid(w_c · Φ_t(x))`,
//! accumulated from the root down.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MatcherModel;
use crate::error::{Error, Result};
use crate::sparse::FeatureMatrix;

/// A deepest-level cluster (a label when the tree ends at the label level)
/// and its path score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub cluster: u32,
    pub score: f64,
}

#[inline]
fn sigmoid(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

fn ranked(a: &Prediction, b: &Prediction) -> Ordering {
    b.score.total_cmp(&a.score).then(a.cluster.cmp(&b.cluster))
}

fn keep_best(mut v: Vec<Prediction>, k: usize) -> Vec<Prediction> {
    if k < v.len() {
        v.select_nth_unstable_by(k, ranked);
        v.truncate(k);
    }
    v.sort_by(ranked);
    v
}

fn check(model: &MatcherModel, features: &FeatureMatrix, row: usize) -> Result<()> {
    model.check_features(features)?;
    if row >= features.rows() {
        return Err(Error::invalid(format!("row {row} out of range")));
    }
    Ok(())
}

/// Beam search keeping `beam` clusters per level; returns the `top_k`
/// best expanded clusters of the deepest level.
pub fn predict(
    model: &MatcherModel,
    features: &FeatureMatrix,
    row: usize,
    beam: usize,
    top_k: usize,
) -> Result<Vec<Prediction>> {
    check(model, features, row)?;
    if beam == 0 {
        return Err(Error::invalid("beam width must be positive"));
    }
    Ok(beam_search(model, features, row, beam, top_k))
}

fn beam_search(
    model: &MatcherModel,
    features: &FeatureMatrix,
    row: usize,
    beam: usize,
    top_k: usize,
) -> Vec<Prediction> {
    let depth = model.depth();
    let phi = model.encoders[0].encode(features, row);
    let mut frontier: Vec<Prediction> = (0..model.levels[0].n_clusters())
        .map(|c| Prediction {
            cluster: c as u32,
            score: sigmoid(model.levels[0].score(c, &phi)),
        })
        .collect();
    for t in 1..depth {
        let kept = keep_best(frontier, beam);
        let phi = model.encoders[t].encode(features, row);
        frontier = kept
            .iter()
            .flat_map(|p| {
                model
                    .tree
                    .children(t - 1, p.cluster as usize)
                    .iter()
                    .map(|&c| Prediction {
                        cluster: c,
                        score: p.score + sigmoid(model.levels[t].score(c as usize, &phi)),
                    })
            })
            .collect();
    }
    keep_best(frontier, top_k)
}

/// Scores every root-to-leaf path; the reference for beam search.
pub fn predict_exhaustive(
    model: &MatcherModel,
    features: &FeatureMatrix,
    row: usize,
    top_k: usize,
) -> Result<Vec<Prediction>> {
    check(model, features, row)?;
    let phi = model.encoders[0].encode(features, row);
    let mut path: Vec<f64> = (0..model.levels[0].n_clusters())
        .map(|c| sigmoid(model.levels[0].score(c, &phi)))
        .collect();
    for t in 1..model.depth() {
        let phi = model.encoders[t].encode(features, row);
        let parents = model.tree.parents(t);
        path = (0..model.levels[t].n_clusters())
            .map(|c| path[parents[c] as usize] + sigmoid(model.levels[t].score(c, &phi)))
            .collect();
    }
    let all = path
        .into_iter()
        .enumerate()
        .map(|(c, score)| Prediction {
            cluster: c as u32,
            score,
        })
        .collect();
    Ok(keep_best(all, top_k))
}

/// [`predict`] for every row of `features`.
pub fn predict_all(
    model: &MatcherModel,
    features: &FeatureMatrix,
    beam: usize,
    top_k: usize,
) -> Result<Vec<Vec<Prediction>>> {
    model.check_features(features)?;
    if beam == 0 {
        return Err(Error::invalid("beam width must be positive"));
    }
    Ok((0..features.rows())
        .into_par_iter()
        .map(|i| beam_search(model, features, i, beam, top_k))
        .collect())
}
