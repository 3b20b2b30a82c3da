//! Baselines and evaluators: the triplet-loss link predictor, SGC
//! propagation, and node classifiers used to judge embedding quality.

mod classifier;
mod linkpred;
mod sgc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};

pub use classifier::{
    accuracy, train_classifier, Classifier, ClassifierConfig, ClassifierKind, ClassifierReport,
};
pub use linkpred::{
    auc, four_cycle_instance, link_auc, sample_non_edges, split_edges, train_linkpred,
    triplet_loss_and_grad, EdgeSplit, LinkPredConfig, LinkPredLog, LinkPredModel,
};
pub use sgc::{normalized_adjacency, sgc_features};

/// Disjoint train / validation / test node sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Validates disjointness, range and non-emptiness.
    pub fn new(train: Vec<usize>, valid: Vec<usize>, test: Vec<usize>, n: usize) -> Result<Split> {
        if train.is_empty() || valid.is_empty() || test.is_empty() {
            return Err(Error::invalid("every split must be non-empty"));
        }
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&valid).chain(&test) {
            if i >= n {
                return Err(Error::invalid(format!(
                    "split index {i} out of range for {n} nodes"
                )));
            }
            if seen[i] {
                return Err(Error::invalid(format!(
                    "node {i} appears in more than one split"
                )));
            }
            seen[i] = true;
        }
        Ok(Split { train, valid, test })
    }

    /// Seeded random split; the test set takes whatever the first two leave.
    pub fn random(n: usize, train_frac: f64, valid_frac: f64, seed: u64) -> Result<Split> {
        if !(train_frac > 0.0 && valid_frac > 0.0 && train_frac + valid_frac < 1.0) {
            return Err(Error::invalid(
                "split fractions must be positive and sum below 1",
            ));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, streams::SPLIT));
        let n_train = (train_frac * n as f64).round() as usize;
        let n_valid = (valid_frac * n as f64).round() as usize;
        let n_tv = (n_train + n_valid).min(n);
        let test = order.split_off(n_tv);
        let valid = order.split_off(n_train.min(n_tv));
        Split::new(order, valid, test, n)
    }

    /// The default 60/20/20 split.
    pub fn standard(n: usize, seed: u64) -> Result<Split> {
        Split::random(n, 0.6, 0.2, seed)
    }
}
