//! Shared fixtures for the criterion benchmarks.

use nbrpred::csbm::{generate, CsbmInstance, CsbmParams};
use nbrpred::matcher::{
    candidate_set, Batch, BatchItem, EncoderModel, MatcherModel, RankerLevel, TrainConfig,
};
use nbrpred::sparse::{DenseMatrix, FeatureMatrix};
use nbrpred::tree::{build_tree, cluster_targets};
use nbrpred::LabelTree;

/// Homophilic cSBM with `d = 50`.
pub fn csbm(n: usize, seed: u64) -> CsbmInstance {
    generate(&CsbmParams::new(n, 50, 0.05, 0.01, 1.0, 1.0, seed)).expect("valid parameters")
}

pub fn features(inst: &CsbmInstance) -> FeatureMatrix {
    FeatureMatrix::Dense(inst.features.clone())
}

/// Tree over the PIFA features of `inst`.
pub fn tree(inst: &CsbmInstance, schedule: &[usize]) -> LabelTree {
    let z = nbrpred::graph::pifa(&inst.graph, &features(inst)).expect("square graph");
    build_tree(&z, schedule, 0).expect("valid schedule")
}

/// Teacher-forced batch of the first `size` nodes at `level`.
pub fn batch(inst: &CsbmInstance, tree: &LabelTree, level: usize, size: usize) -> Batch {
    let y = inst.graph.adjacency();
    let here = cluster_targets(y, tree, level).expect("matching tree");
    let above = (level > 0).then(|| cluster_targets(y, tree, level - 1).expect("matching tree"));
    let items = (0..size)
        .map(|i| {
            let candidates: Vec<u32> = match &above {
                Some(a) => candidate_set(tree, level, a.row(i).0, &[]),
                None => (0..tree.level_size(0) as u32).collect(),
            };
            let positive = candidates
                .iter()
                .map(|c| here.row(i).0.contains(c))
                .collect();
            BatchItem {
                instance: i,
                candidates,
                positive,
            }
        })
        .collect();
    Batch { items }
}

/// Matcher with random encoder weights and small deterministic ranker weights.
pub fn model(tree: &LabelTree, d_feat: usize, d_emb: usize) -> MatcherModel {
    let encoders = (0..tree.depth())
        .map(|t| EncoderModel::init(d_feat, d_emb, t as u64))
        .collect();
    let levels = (0..tree.depth())
        .map(|t| {
            let k = tree.level_size(t);
            let data = (0..k * d_emb)
                .map(|j| ((j * 7919 + t) % 101) as f64 / 101.0 - 0.5)
                .collect();
            RankerLevel {
                weight: DenseMatrix::new(k, d_emb, data).expect("sized"),
            }
        })
        .collect();
    MatcherModel::new(
        encoders,
        levels,
        tree.clone(),
        TrainConfig {
            d_emb,
            ..Default::default()
        },
    )
    .expect("shapes")
}
