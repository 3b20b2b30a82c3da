//! Similarity-based link prediction trained with a triplet loss.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matcher::EncoderModel;
use crate::rng::{self, streams, Rng};
use crate::sparse::{axpy, dot, DenseMatrix, FeatureMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkPredConfig {
    pub d_emb: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub margin: f64,
    pub batch_size: usize,
    /// Training stops once the epoch-mean loss moves by less than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LinkPredConfig {
    fn default() -> Self {
        LinkPredConfig {
            d_emb: 64,
            learning_rate: 0.5,
            epochs: 100,
            margin: 0.5,
            batch_size: 64,
            tol: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkPredModel {
    pub encoder: EncoderModel,
}

impl LinkPredModel {
    /// Inner product of the two nodes' unit embeddings.
    pub fn score(&self, features: &FeatureMatrix, i: usize, j: usize) -> f64 {
        dot(
            &self.encoder.encode(features, i),
            &self.encoder.encode(features, j),
        )
    }

    pub fn embed(&self, features: &FeatureMatrix) -> Result<DenseMatrix> {
        self.encoder.encode_all(features)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkPredLog {
    pub epoch_losses: Vec<f64>,
    pub converged: bool,
}

/// Mean triplet loss `max(0, m - ⟨Φ_a, Φ_p⟩ + ⟨Φ_a, Φ_n⟩)` over
/// `(anchor, positive, negative)` triplets and its encoder gradient.
pub fn triplet_loss_and_grad(
    encoder: &EncoderModel,
    features: &FeatureMatrix,
    triplets: &[(usize, usize, usize)],
    margin: f64,
) -> (f64, DenseMatrix) {
    let mut grad = DenseMatrix::zeros(encoder.d_feat(), encoder.d_emb());
    let loss = accumulate_triplets(encoder, features, triplets, margin, &mut grad);
    (loss, grad)
}

fn accumulate_triplets(
    encoder: &EncoderModel,
    features: &FeatureMatrix,
    triplets: &[(usize, usize, usize)],
    margin: f64,
    grad: &mut DenseMatrix,
) -> f64 {
    if triplets.is_empty() {
        return 0.0;
    }
    let w = 1.0 / triplets.len() as f64;
    let mut loss = 0.0;
    for &(a, p, q) in triplets {
        let (ua, ub, uc) = (
            encoder.project(features, a),
            encoder.project(features, p),
            encoder.project(features, q),
        );
        let (fa, na) = unit(ua);
        let (fp, np) = unit(ub);
        let (fq, nq) = unit(uc);
        let l = margin - dot(&fa, &fp) + dot(&fa, &fq);
        if l <= 0.0 {
            continue;
        }
        loss += w * l;
        // ∂l/∂Φ_a = Φ_q - Φ_p, ∂l/∂Φ_p = -Φ_a, ∂l/∂Φ_q = Φ_a
        let ga: Vec<f64> = fq.iter().zip(&fp).map(|(x, y)| w * (x - y)).collect();
        let gp: Vec<f64> = fa.iter().map(|x| -w * x).collect();
        let gq: Vec<f64> = fa.iter().map(|x| w * x).collect();
        for (node, g, phi, norm) in [(a, ga, &fa, na), (p, gp, &fp, np), (q, gq, &fq, nq)] {
            if norm == 0.0 {
                continue;
            }
            let proj = dot(&g, phi);
            let gu: Vec<f64> = g
                .iter()
                .zip(phi)
                .map(|(g, f)| (g - proj * f) / norm)
                .collect();
            features.for_each_nonzero(node, |j, v| axpy(v, &gu, grad.row_mut(j)));
        }
    }
    loss
}

fn unit(mut u: Vec<f64>) -> (Vec<f64>, f64) {
    let n = dot(&u, &u).sqrt();
    if n > 0.0 {
        u.iter_mut().for_each(|v| *v /= n);
    }
    (u, n)
}

/// Uniform draw from the non-neighbors of `i` other than `i` itself.
fn sample_non_neighbor(graph: &Graph, i: usize, rng: &mut Rng) -> usize {
    let n = graph.n();
    loop {
        let j = rng.random_range(0..n);
        if j != i && !graph.has_edge(i, j) {
            return j;
        }
    }
}

/// Trains the Siamese encoder. Nodes with no neighbors or no non-neighbors
/// produce no triplet.
pub fn train_linkpred(
    features: &FeatureMatrix,
    graph: &Graph,
    config: &LinkPredConfig,
) -> Result<(LinkPredModel, LinkPredLog)> {
    if features.rows() != graph.n() {
        return Err(Error::DimensionMismatch {
            op: "train_linkpred",
            expected: graph.n(),
            actual: features.rows(),
        });
    }
    if config.d_emb == 0
        || config.batch_size == 0
        || config.learning_rate.is_nan()
        || config.learning_rate <= 0.0
        || config.margin.is_nan()
        || config.margin < 0.0
    {
        return Err(Error::invalid(
            "link predictor config needs positive d_emb, batch_size, learning_rate",
        ));
    }
    let n = graph.n();
    let mut encoder = EncoderModel::init(features.cols(), config.d_emb, config.seed);
    let mut rng = rng::stream(config.seed, streams::SAMPLING);
    let usable: Vec<usize> = (0..n)
        .filter(|&i| graph.degree(i) > 0 && graph.degree(i) + 1 < n)
        .collect();
    let mut log = LinkPredLog::default();
    let mut grad = DenseMatrix::zeros(features.cols(), config.d_emb);
    let mut order = usable.clone();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let triplets: Vec<(usize, usize, usize)> = order
            .iter()
            .map(|&i| {
                let nb = graph.neighbors(i);
                let p = nb[rng.random_range(0..nb.len())] as usize;
                (i, p, sample_non_neighbor(graph, i, &mut rng))
            })
            .collect();
        let mut total = 0.0;
        for chunk in triplets.chunks(config.batch_size) {
            grad.data_mut().iter_mut().for_each(|v| *v = 0.0);
            let l = accumulate_triplets(&encoder, features, chunk, config.margin, &mut grad);
            total += l * chunk.len() as f64;
            axpy(
                -config.learning_rate,
                grad.data(),
                encoder.weight.data_mut(),
            );
        }
        let mean = if triplets.is_empty() {
            0.0
        } else {
            total / triplets.len() as f64
        };
        if !mean.is_finite() {
            return Err(Error::Training("non-finite triplet loss".into()));
        }
        let prev = log.epoch_losses.last().copied();
        log.epoch_losses.push(mean);
        if let Some(prev) = prev {
            if (prev - mean).abs() < config.tol {
                log.converged = true;
                break;
            }
        }
    }
    Ok((LinkPredModel { encoder }, log))
}

/// Area under the ROC curve of `pos` ranked above `neg`; ties count one half.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid(
            "AUC needs at least one positive and one negative",
        ));
    }
    if pos.iter().chain(neg).any(|v| v.is_nan()) {
        return Err(Error::invalid("AUC scores must not be NaN"));
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Mann-Whitney U with mid-ranks for ties.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        rank_sum += mid * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// AUC of the model's similarity on held-out edges against non-edges.
pub fn link_auc(
    model: &LinkPredModel,
    features: &FeatureMatrix,
    edges: &[(usize, usize)],
    non_edges: &[(usize, usize)],
) -> Result<f64> {
    let emb = model.embed(features)?;
    let score = |&(i, j): &(usize, usize)| dot(emb.row(i), emb.row(j));
    let pos: Vec<f64> = edges.iter().map(score).collect();
    let neg: Vec<f64> = non_edges.iter().map(score).collect();
    auc(&pos, &neg)
}

/// `count` distinct unordered non-adjacent pairs `(i < j)`, uniform.
pub fn sample_non_edges(graph: &Graph, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let n = graph.n();
    let available = n * n.saturating_sub(1) / 2 - graph.edge_count();
    if count > available {
        return Err(Error::invalid(format!(
            "requested {count} non-edges, only {available} exist"
        )));
    }
    let mut rng = rng::stream(seed, streams::SAMPLING + 1);
    if 2 * count > available {
        let mut all: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !graph.has_edge(i, j))
            .collect();
        all.shuffle(&mut rng);
        all.truncate(count);
        return Ok(all);
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let (i, j) = (a.min(b), a.max(b));
        if i != j && !graph.has_edge(i, j) && seen.insert((i, j)) {
            out.push((i, j));
        }
    }
    Ok(out)
}

/// A training graph with a held-out fraction of edges and as many non-edges.
#[derive(Clone, Debug)]
pub struct EdgeSplit {
    pub train_graph: Graph,
    pub test_edges: Vec<(usize, usize)>,
    pub test_non_edges: Vec<(usize, usize)>,
}

pub fn split_edges(graph: &Graph, test_frac: f64, seed: u64) -> Result<EdgeSplit> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::invalid("test fraction must lie in (0, 1)"));
    }
    let mut edges = graph.edges();
    edges.shuffle(&mut rng::stream(seed, streams::SPLIT + 1));
    let n_test = ((edges.len() as f64 * test_frac).round() as usize).max(1);
    if n_test >= edges.len() {
        return Err(Error::invalid("graph has too few edges to hold any out"));
    }
    let train = edges.split_off(n_test);
    let (train_graph, _) = Graph::from_edges(graph.n(), &train)?;
    let test_non_edges = sample_non_edges(graph, edges.len(), seed)?;
    Ok(EdgeSplit {
        train_graph,
        test_edges: edges,
        test_non_edges,
    })
}

/// The 4-cycle 0-1-2-3-0 where nodes 0 and 2 carry feature `a = (1, 0)`
/// and nodes 1 and 3 carry `b = (0, 1)`, so no edge joins equal features.
pub fn four_cycle_instance() -> (Graph, DenseMatrix, Vec<u8>) {
    let (g, _) = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).expect("valid cycle");
    let x = DenseMatrix::from_rows(&[
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
    ])
    .expect("finite");
    (g, x, vec![0, 1, 0, 1])
}
