//! The neighborhood-prediction learner: a linear encoder followed by unit
//! normalization, and one one-vs-all ranker per label-tree level.
//!
//! Level `t` is trained on the cluster targets of level `t` with candidate
//! clusters restricted to children of the active level-`t - 1` parents. The
//! encoder is carried from level to level; its state at the end of every
//! level is kept so that each ranker is always scored with the encoder it was
//! trained against.

mod objective;
mod predict;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::sparse::{axpy, dot, normalize_in_place, DenseMatrix, FeatureMatrix};
use crate::tree::LabelTree;

pub use objective::{loss_and_grad, Batch, BatchItem, LossGrad};
pub use predict::{predict, predict_all, predict_exhaustive, Prediction};
pub use train::{
    candidate_set, train, train_with_log, BatchRecord, BatchSchedule, LevelLog, TrainLog,
};

/// Linear map from input features to the embedding space.
///
/// Stored feature-major: row `j` of `weight` holds the embedding-space
/// column for input feature `j` (the logical map is `weight^T`).
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderModel {
    pub weight: DenseMatrix,
}

impl EncoderModel {
    /// Gaussian initialization with variance `1 / d_emb`, so that a unit
    /// input maps to a vector of roughly unit norm.
    pub fn init(d_feat: usize, d_emb: usize, seed: u64) -> EncoderModel {
        let mut rng = rng::stream(seed, streams::INIT);
        let std = 1.0 / (d_emb as f64).sqrt();
        let data = (0..d_feat * d_emb)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        EncoderModel {
            weight: DenseMatrix::new(d_feat, d_emb, data).expect("finite init"),
        }
    }

    pub fn d_feat(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_emb(&self) -> usize {
        self.weight.cols()
    }

    /// Unnormalized projection of row `i` of `features`.
    pub fn project(&self, features: &FeatureMatrix, i: usize) -> Vec<f64> {
        project_row(&self.weight, features, i)
    }

    /// `Φ(x_i)`: the projection scaled to unit norm (zero stays zero).
    pub fn encode(&self, features: &FeatureMatrix, i: usize) -> Vec<f64> {
        let mut u = self.project(features, i);
        normalize_in_place(&mut u);
        u
    }

    pub fn encode_all(&self, features: &FeatureMatrix) -> Result<DenseMatrix> {
        if features.cols() != self.d_feat() {
            return Err(Error::DimensionMismatch {
                op: "encoder input",
                expected: self.d_feat(),
                actual: features.cols(),
            });
        }
        let k = self.d_emb();
        let mut out = DenseMatrix::zeros(features.rows(), k);
        if k > 0 {
            out.data_mut()
                .par_chunks_mut(k)
                .enumerate()
                .for_each(|(i, row)| row.copy_from_slice(&self.encode(features, i)));
        }
        Ok(out)
    }
}

pub(crate) fn project_row(weight: &DenseMatrix, features: &FeatureMatrix, i: usize) -> Vec<f64> {
    let mut u = vec![0.0; weight.cols()];
    features.for_each_nonzero(i, |j, v| axpy(v, weight.row(j), &mut u));
    u
}

/// One-vs-all weights of a tree level, one row per cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct RankerLevel {
    pub weight: DenseMatrix,
}

impl RankerLevel {
    pub fn zeros(n_clusters: usize, d_emb: usize) -> RankerLevel {
        RankerLevel {
            weight: DenseMatrix::zeros(n_clusters, d_emb),
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    pub fn score(&self, cluster: usize, phi: &[f64]) -> f64 {
        dot(self.weight.row(cluster), phi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSampling {
    /// Teacher-forced negatives: children of ground-truth positive parents.
    Tfn,
    /// Teacher-forced plus model-aware negatives (children of the top-scored
    /// parents under the previous level's ranker).
    TfnPlusMan,
}

impl fmt::Display for NegativeSampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegativeSampling::Tfn => "tfn",
            NegativeSampling::TfnPlusMan => "tfn_plus_man",
        })
    }
}

impl FromStr for NegativeSampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tfn" => Ok(NegativeSampling::Tfn),
            "tfn_plus_man" | "tfn+man" => Ok(NegativeSampling::TfnPlusMan),
            other => Err(Error::invalid(format!(
                "unknown negative sampling '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub d_emb: usize,
    pub learning_rate: f64,
    /// Optimization steps spent on each tree level.
    pub steps_per_level: usize,
    /// Instances per mini-batch.
    pub batch_size: usize,
    pub beam_width: usize,
    pub man_top_k: usize,
    pub negatives: NegativeSampling,
    pub margin: f64,
    pub l2_reg: f64,
    pub seed: u64,
    /// Level whose encoder state produces embeddings; `None` means the last.
    pub extract_level: Option<usize>,
    /// Keep every batch's candidate sets in the training log.
    pub record_batches: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d_emb: 64,
            learning_rate: 0.1,
            steps_per_level: 500,
            batch_size: 32,
            beam_width: 10,
            man_top_k: 20,
            negatives: NegativeSampling::TfnPlusMan,
            margin: 1.0,
            l2_reg: 1e-6,
            seed: 0,
            extract_level: None,
            record_batches: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_emb == 0 || self.batch_size == 0 || self.beam_width == 0 {
            return Err(Error::invalid(
                "d_emb, batch_size and beam_width must be positive",
            ));
        }
        if self.man_top_k == 0 {
            return Err(Error::invalid("man_top_k must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::invalid("margin must be positive"));
        }
        if !(self.l2_reg >= 0.0 && self.l2_reg.is_finite()) {
            return Err(Error::invalid("l2_reg must be non-negative"));
        }
        Ok(())
    }
}

/// A trained neighborhood predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct MatcherModel {
    /// Encoder state at the end of each level's training.
    pub encoders: Vec<EncoderModel>,
    pub levels: Vec<RankerLevel>,
    pub tree: LabelTree,
    pub config: TrainConfig,
}

impl MatcherModel {
    /// Checks the structural invariants tying encoders, rankers and tree.
    pub fn new(
        encoders: Vec<EncoderModel>,
        levels: Vec<RankerLevel>,
        tree: LabelTree,
        config: TrainConfig,
    ) -> Result<MatcherModel> {
        if levels.len() != tree.depth() || encoders.len() != tree.depth() {
            return Err(Error::invalid(format!(
                "model has {} rankers and {} encoders for a depth-{} tree",
                levels.len(),
                encoders.len(),
                tree.depth()
            )));
        }
        let d_emb = encoders[0].d_emb();
        let d_feat = encoders[0].d_feat();
        for (t, (lvl, enc)) in levels.iter().zip(&encoders).enumerate() {
            if lvl.n_clusters() != tree.level_size(t) || lvl.weight.cols() != d_emb {
                return Err(Error::invalid(format!("ranker {t} has the wrong shape")));
            }
            if enc.d_emb() != d_emb || enc.d_feat() != d_feat {
                return Err(Error::invalid(format!("encoder {t} has the wrong shape")));
            }
            if !lvl.weight.is_finite() || !enc.weight.is_finite() {
                return Err(Error::invalid(format!("non-finite weights at level {t}")));
            }
        }
        if let Some(l) = config.extract_level {
            if l >= tree.depth() {
                return Err(Error::invalid(format!(
                    "extract level {l} beyond tree depth"
                )));
            }
        }
        Ok(MatcherModel {
            encoders,
            levels,
            tree,
            config,
        })
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn d_feat(&self) -> usize {
        self.encoders[0].d_feat()
    }

    pub fn d_emb(&self) -> usize {
        self.encoders[0].d_emb()
    }

    pub fn extract_level(&self) -> usize {
        self.config.extract_level.unwrap_or(self.depth() - 1)
    }

    /// The encoder used for embeddings.
    pub fn embedding_encoder(&self) -> &EncoderModel {
        &self.encoders[self.extract_level()]
    }

    fn check_features(&self, features: &FeatureMatrix) -> Result<()> {
        if features.cols() != self.d_feat() {
            return Err(Error::DimensionMismatch {
                op: "matcher features",
                expected: self.d_feat(),
                actual: features.cols(),
            });
        }
        Ok(())
    }
}

/// `w_{level,cluster} · Φ(x_row)`, with `Φ` the encoder state of `level`.
pub fn ova_score(
    model: &MatcherModel,
    features: &FeatureMatrix,
    row: usize,
    level: usize,
    cluster: usize,
) -> Result<f64> {
    model.check_features(features)?;
    if level >= model.depth() || cluster >= model.levels[level].n_clusters() {
        return Err(Error::invalid(format!(
            "no cluster {cluster} at level {level}"
        )));
    }
    let phi = model.encoders[level].encode(features, row);
    Ok(model.levels[level].score(cluster, &phi))
}

/// Unit-norm node embeddings from the extraction-level encoder.
pub fn embed(model: &MatcherModel, features: &FeatureMatrix) -> Result<DenseMatrix> {
    model.check_features(features)?;
    model.embedding_encoder().encode_all(features)
}

/// Embeddings with the input features appended column-wise.
pub fn embed_concat(model: &MatcherModel, features: &FeatureMatrix) -> Result<DenseMatrix> {
    embed(model, features)?.hstack(&features.to_dense())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseRowMatrix;

    fn single_level_model(enc: DenseMatrix, rank: DenseMatrix, labels: usize) -> MatcherModel {
        let tree =
            LabelTree::from_parts(vec![labels], labels, vec![], (0..labels as u32).collect())
                .unwrap();
        MatcherModel::new(
            vec![EncoderModel { weight: enc }],
            vec![RankerLevel { weight: rank }],
            tree,
            TrainConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn ova_self_alignment_and_orthogonality() {
        let x = DenseMatrix::from_rows(&[vec![3.0, 4.0, 0.0]]).unwrap();
        let w = DenseMatrix::from_rows(&[
            vec![0.6, 0.8, 0.0],
            vec![-0.8, 0.6, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let m = single_level_model(DenseMatrix::identity(3), w, 3);
        let f = FeatureMatrix::Dense(x);
        assert!((ova_score(&m, &f, 0, 0, 0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(ova_score(&m, &f, 0, 0, 1).unwrap(), 0.0);
        assert_eq!(ova_score(&m, &f, 0, 0, 2).unwrap(), 0.0);
        assert!(ova_score(&m, &f, 0, 1, 0).is_err());
    }

    #[test]
    fn ova_matches_hand_dot_product() {
        let enc = DenseMatrix::from_rows(&[
            vec![0.2, -1.0, 0.5],
            vec![1.5, 0.3, -0.7],
            vec![-0.4, 0.8, 0.9],
        ])
        .unwrap();
        let w = DenseMatrix::from_rows(&[vec![0.3, -0.2, 1.1], vec![0.0, 0.5, 0.5]]).unwrap();
        let x = [0.7, -1.2, 2.0];
        let m = single_level_model(enc.clone(), w.clone(), 2);
        let f = FeatureMatrix::Dense(DenseMatrix::from_rows(&[x.to_vec()]).unwrap());
        // u_k = Σ_j x_j enc[j][k]
        let mut u = [0.0; 3];
        for (k, uk) in u.iter_mut().enumerate() {
            for (j, xj) in x.iter().enumerate() {
                *uk += xj * enc.get(j, k);
            }
        }
        let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        let expected = (0..3).map(|k| w.get(0, k) * u[k] / n).sum::<f64>();
        assert!((ova_score(&m, &f, 0, 0, 0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn embeddings_unit_or_zero() {
        let enc = EncoderModel::init(4, 3, 1);
        let m = single_level_model(enc.weight.clone(), DenseMatrix::zeros(4, 3), 4);
        let x = SparseRowMatrix::from_triplets(
            3,
            4,
            vec![(0, 1, 2.0), (0, 3, -1.0), (2, 1, 2.0), (2, 3, -1.0)],
        )
        .unwrap();
        let e = embed(&m, &FeatureMatrix::Sparse(x)).unwrap();
        assert!((dot(e.row(0), e.row(0)) - 1.0).abs() < 1e-12);
        assert_eq!(e.row(1), &[0.0, 0.0, 0.0]);
        assert_eq!(e.row(0), e.row(2));
        let wrong = FeatureMatrix::Dense(DenseMatrix::zeros(1, 5));
        assert!(embed(&m, &wrong).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(
            "tfn".parse::<NegativeSampling>().unwrap(),
            NegativeSampling::Tfn
        );
        assert!("man".parse::<NegativeSampling>().is_err());
    }
}
