//! Level-by-level mini-batch training.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{evaluate_terms, ScaledRows};
use super::{
    Batch, BatchItem, EncoderModel, MatcherModel, NegativeSampling, RankerLevel, TrainConfig,
};
use crate::error::{Error, Result};
use crate::rng::{self, streams, Rng};
use crate::sparse::{axpy, DenseMatrix, FeatureMatrix, SparseRowMatrix};
use crate::tree::{cluster_targets, LabelTree};

/// Endless sequence of mini-batches: each epoch visits the pool in a fresh
/// seeded order, and batches run across epoch boundaries.
#[derive(Clone, Debug)]
pub struct BatchSchedule {
    pool: Vec<usize>,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    rng: Rng,
}

impl BatchSchedule {
    /// Batches larger than the pool are clamped to the pool size.
    pub fn new(pool: Vec<usize>, batch_size: usize, seed: u64, level: usize) -> BatchSchedule {
        let batch_size = batch_size.min(pool.len());
        BatchSchedule {
            order: Vec::new(),
            pos: 0,
            pool,
            batch_size,
            rng: rng::stream(seed, streams::BATCHES + level as u64),
        }
    }

    /// The next batch; empty only when the pool is empty.
    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch_size);
        while out.len() < self.batch_size {
            if self.pos == self.order.len() {
                self.order = self.pool.clone();
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Candidate sets of one training instance, kept when batches are recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub level: usize,
    pub step: usize,
    pub instance: usize,
    pub positive_parents: Vec<u32>,
    pub man_parents: Vec<u32>,
    pub candidates: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelLog {
    pub level: usize,
    pub n_clusters: usize,
    pub steps: usize,
    /// Objective value of every batch, evaluated before its update.
    pub losses: Vec<f64>,
    pub mean_candidates: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub eligible_instances: usize,
    pub levels: Vec<LevelLog>,
    pub batches: Vec<BatchRecord>,
}

/// Children of the union of `positive_parents` and `man_parents`, ascending.
/// At level 0 every cluster is a candidate.
pub fn candidate_set(
    tree: &LabelTree,
    level: usize,
    positive_parents: &[u32],
    man_parents: &[u32],
) -> Vec<u32> {
    if level == 0 {
        return (0..tree.level_size(0) as u32).collect();
    }
    let mut parents: Vec<u32> = positive_parents
        .iter()
        .chain(man_parents)
        .copied()
        .collect();
    parents.sort_unstable();
    parents.dedup();
    let mut out: Vec<u32> = parents
        .iter()
        .flat_map(|&p| tree.children(level - 1, p as usize).iter().copied())
        .collect();
    out.sort_unstable();
    out
}

/// The `k` highest-scoring clusters of `ranker` (ties to the smaller index),
/// returned in ascending index order.
fn top_clusters(
    encoder: &EncoderModel,
    ranker: &RankerLevel,
    features: &FeatureMatrix,
    i: usize,
    k: usize,
) -> Vec<u32> {
    let phi = encoder.encode(features, i);
    let mut scored: Vec<(f64, u32)> = (0..ranker.n_clusters())
        .map(|c| (ranker.score(c, &phi), c as u32))
        .collect();
    let k = k.min(scored.len());
    let cmp = |a: &(f64, u32), b: &(f64, u32)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < scored.len() {
        scored.select_nth_unstable_by(k, cmp);
        scored.truncate(k);
    }
    let mut out: Vec<u32> = scored.into_iter().map(|(_, c)| c).collect();
    out.sort_unstable();
    out
}

fn has_col(m: &SparseRowMatrix, i: usize, c: u32) -> bool {
    m.row(i).0.binary_search(&c).is_ok()
}

/// Dense gradient accumulator that remembers which rows it touched.
struct RowAccumulator {
    data: DenseMatrix,
    touched: Vec<usize>,
    mark: Vec<bool>,
}

impl RowAccumulator {
    fn new(rows: usize, cols: usize) -> RowAccumulator {
        RowAccumulator {
            data: DenseMatrix::zeros(rows, cols),
            touched: Vec::new(),
            mark: vec![false; rows],
        }
    }

    fn add(&mut self, r: usize, alpha: f64, g: &[f64]) {
        if !self.mark[r] {
            self.mark[r] = true;
            self.touched.push(r);
        }
        axpy(alpha, g, self.data.row_mut(r));
    }

    fn drain(&mut self) -> Vec<(usize, Vec<f64>)> {
        self.touched.sort_unstable();
        let out = self
            .touched
            .iter()
            .map(|&r| {
                let row = self.data.row_mut(r);
                let g = row.to_vec();
                row.iter_mut().for_each(|v| *v = 0.0);
                (r, g)
            })
            .collect();
        for &r in &self.touched {
            self.mark[r] = false;
        }
        self.touched.clear();
        out
    }
}

pub fn train(
    features: &FeatureMatrix,
    y: &SparseRowMatrix,
    tree: &LabelTree,
    config: &TrainConfig,
) -> Result<MatcherModel> {
    train_with_log(features, y, tree, config).map(|(m, _)| m)
}

/// Trains every level of `tree` in order. `y` holds one row of positive
/// labels per instance (the adjacency matrix for neighborhood prediction).
pub fn train_with_log(
    features: &FeatureMatrix,
    y: &SparseRowMatrix,
    tree: &LabelTree,
    config: &TrainConfig,
) -> Result<(MatcherModel, TrainLog)> {
    config.validate()?;
    if y.rows() != features.rows() {
        return Err(Error::DimensionMismatch {
            op: "train targets",
            expected: features.rows(),
            actual: y.rows(),
        });
    }
    if y.cols() != tree.n_labels() {
        return Err(Error::DimensionMismatch {
            op: "train labels",
            expected: tree.n_labels(),
            actual: y.cols(),
        });
    }
    if let Some(l) = config.extract_level {
        if l >= tree.depth() {
            return Err(Error::invalid(format!(
                "extract level {l} beyond tree depth {}",
                tree.depth()
            )));
        }
    }
    let n = features.rows();
    let d_feat = features.cols();
    let d_emb = config.d_emb;
    let eligible: Vec<usize> = (0..n).filter(|&i| y.row_nnz(i) > 0).collect();
    if eligible.len() < n {
        log::info!(
            "{} instances without positives are skipped",
            n - eligible.len()
        );
    }
    let mut log = TrainLog {
        eligible_instances: eligible.len(),
        ..Default::default()
    };

    let mut enc = ScaledRows::new(EncoderModel::init(d_feat, d_emb, config.seed).weight);
    let mut enc_acc = RowAccumulator::new(d_feat, d_emb);
    let mut encoders: Vec<EncoderModel> = Vec::with_capacity(tree.depth());
    let mut levels: Vec<RankerLevel> = Vec::with_capacity(tree.depth());
    let mut prev_targets: Option<SparseRowMatrix> = None;

    for t in 0..tree.depth() {
        let k = tree.level_size(t);
        let targets = cluster_targets(y, tree, t)?;
        let mut rank = ScaledRows::new(DenseMatrix::zeros(k, d_emb));
        let mut rank_acc = RowAccumulator::new(k, d_emb);
        let mut schedule = BatchSchedule::new(eligible.clone(), config.batch_size, config.seed, t);
        let use_man = t > 0 && config.negatives == NegativeSampling::TfnPlusMan;
        let mut man_cache: Vec<Option<Vec<u32>>> = if use_man { vec![None; n] } else { Vec::new() };
        let mut losses = Vec::with_capacity(config.steps_per_level);
        let mut candidate_total = 0usize;
        let mut pair_instances = 0usize;

        for step in 0..config.steps_per_level {
            let ids = schedule.next_batch();
            if ids.is_empty() {
                break;
            }
            if use_man {
                let missing: Vec<usize> = ids
                    .iter()
                    .copied()
                    .filter(|&i| man_cache[i].is_none())
                    .collect();
                let computed: Vec<(usize, Vec<u32>)> = missing
                    .par_iter()
                    .map(|&i| {
                        (
                            i,
                            top_clusters(
                                &encoders[t - 1],
                                &levels[t - 1],
                                features,
                                i,
                                config.man_top_k,
                            ),
                        )
                    })
                    .collect();
                for (i, top) in computed {
                    man_cache[i] = Some(top);
                }
            }
            let mut items = Vec::with_capacity(ids.len());
            for &i in &ids {
                let pos_parents: &[u32] = match &prev_targets {
                    Some(p) => p.row(i).0,
                    None => &[],
                };
                let man: &[u32] = if use_man {
                    man_cache[i].as_deref().unwrap_or(&[])
                } else {
                    &[]
                };
                let candidates = candidate_set(tree, t, pos_parents, man);
                let positive = candidates
                    .iter()
                    .map(|&c| has_col(&targets, i, c))
                    .collect();
                if config.record_batches {
                    log.batches.push(BatchRecord {
                        level: t,
                        step,
                        instance: i,
                        positive_parents: pos_parents.to_vec(),
                        man_parents: man.to_vec(),
                        candidates: candidates.clone(),
                    });
                }
                candidate_total += candidates.len();
                pair_instances += 1;
                items.push(BatchItem {
                    instance: i,
                    candidates,
                    positive,
                });
            }
            let batch = Batch { items };
            let terms = evaluate_terms(&enc, &rank, features, &batch, config.margin);
            let loss: f64 = terms.iter().map(|x| x.loss).sum::<f64>()
                + config.l2_reg * (enc.sq_norm() + rank.sq_norm());
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at level {t}, step {step}"
                )));
            }
            losses.push(loss);
            for (item, term) in batch.items.iter().zip(&terms) {
                for &(c, d) in &term.score_grads {
                    rank_acc.add(c as usize, d, &term.phi);
                }
                features.for_each_nonzero(item.instance, |j, v| enc_acc.add(j, v, &term.grad_u));
            }
            enc.sgd_step(config.learning_rate, config.l2_reg, &enc_acc.drain());
            rank.sgd_step(config.learning_rate, config.l2_reg, &rank_acc.drain());
        }
        log::info!(
            "level {t}: {k} clusters, {} steps, final loss {:.6}",
            losses.len(),
            losses.last().copied().unwrap_or(f64::NAN)
        );
        log.levels.push(LevelLog {
            level: t,
            n_clusters: k,
            steps: losses.len(),
            losses,
            mean_candidates: if pair_instances == 0 {
                0.0
            } else {
                candidate_total as f64 / pair_instances as f64
            },
        });
        let enc_now = EncoderModel {
            weight: enc.to_dense(),
        };
        let rank_now = RankerLevel {
            weight: rank.to_dense(),
        };
        if !enc_now.weight.is_finite() || !rank_now.weight.is_finite() {
            return Err(Error::Training(format!(
                "non-finite weights after level {t}"
            )));
        }
        encoders.push(enc_now);
        levels.push(rank_now);
        prev_targets = Some(targets);
    }
    let model = MatcherModel::new(encoders, levels, tree.clone(), config.clone())?;
    Ok((model, log))
}
