//! Two-class contextual stochastic block model (cSBM) generator and the
//! statistics used to check its theory numerically.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{self, streams};
use crate::sparse::{DenseMatrix, FeatureMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsbmParams {
    /// Node count; must be even so the two classes are balanced.
    pub n: usize,
    /// Feature dimension.
    pub d: usize,
    /// Intra-class edge probability.
    pub p: f64,
    /// Inter-class edge probability.
    pub q: f64,
    /// Mean magnitude: class means are `±(r/√d)·1`.
    pub r: f64,
    /// Noise scale: per-coordinate variance is `σ²/d`.
    pub sigma: f64,
    pub seed: u64,
    /// Shuffle node ids after generating the contiguous class layout.
    pub shuffle: bool,
}

impl Default for CsbmParams {
    fn default() -> Self {
        CsbmParams::new(1000, 50, 0.1, 0.02, 1.0, 1.0, 0)
    }
}

impl CsbmParams {
    pub fn new(n: usize, d: usize, p: f64, q: f64, r: f64, sigma: f64, seed: u64) -> Self {
        CsbmParams {
            n,
            d,
            p,
            q,
            r,
            sigma,
            seed,
            shuffle: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !self.n.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "n must be even and >= 2, got {}",
                self.n
            )));
        }
        if self.d == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::invalid("r must be positive"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CsbmInstance {
    pub graph: Graph,
    pub features: DenseMatrix,
    pub classes: Vec<u8>,
    pub params: CsbmParams,
}

const FEATURE_STREAM_BASE: u64 = 1 << 32;

/// Appends every index in `lo..hi` that survives an independent
/// Bernoulli(`prob`) draw, using geometric skips.
fn bernoulli_range(rng: &mut rng::Rng, lo: usize, hi: usize, prob: f64, out: &mut Vec<u32>) {
    if prob <= 0.0 || lo >= hi {
        return;
    }
    if prob >= 1.0 {
        out.extend((lo..hi).map(|j| j as u32));
        return;
    }
    let log_miss = (1.0 - prob).ln();
    let mut j = lo;
    loop {
        let u: f64 = rng.random();
        let skip = ((1.0 - u).ln() / log_miss).floor();
        if skip >= (hi - j) as f64 {
            break;
        }
        j += skip as usize;
        out.push(j as u32);
        j += 1;
        if j >= hi {
            break;
        }
    }
}

pub fn generate(params: &CsbmParams) -> Result<CsbmInstance> {
    params.validate()?;
    let n = params.n;
    let half = n / 2;
    let d = params.d;

    // Contiguous layout first: nodes [0, n/2) are class 0.
    let upper: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(params.seed, k as u64);
            let mut out = Vec::new();
            if k < half {
                bernoulli_range(&mut rng, k + 1, half, params.p, &mut out);
                bernoulli_range(&mut rng, half, n, params.q, &mut out);
            } else {
                bernoulli_range(&mut rng, k + 1, n, params.p, &mut out);
            }
            out
        })
        .collect();

    let mean = params.r / (d as f64).sqrt();
    let noise = params.sigma / (d as f64).sqrt();
    let mut contiguous_features = vec![0.0; n * d];
    contiguous_features
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(k, row)| {
            let mut rng = rng::stream(params.seed, FEATURE_STREAM_BASE + k as u64);
            let m = if k < half { mean } else { -mean };
            for x in row.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *x = m + noise * z;
            }
        });

    let mut perm: Vec<usize> = (0..n).collect();
    if params.shuffle {
        perm.shuffle(&mut rng::stream(params.seed, streams::PERMUTATION));
    }

    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (k, nbrs) in upper.iter().enumerate() {
        let pk = perm[k];
        for &j in nbrs {
            let pj = perm[j as usize];
            rows[pk].push(pj as u32);
            rows[pj].push(pk as u32);
        }
    }
    drop(upper);
    let graph = Graph::from_sorted_rows(n, rows);

    let mut features = vec![0.0; n * d];
    let mut classes = vec![0u8; n];
    for k in 0..n {
        let pk = perm[k];
        features[pk * d..(pk + 1) * d].copy_from_slice(&contiguous_features[k * d..(k + 1) * d]);
        classes[pk] = u8::from(k >= half);
    }
    Ok(CsbmInstance {
        graph,
        features: DenseMatrix::new(n, d, features)?,
        classes,
        params: params.clone(),
    })
}

/// Ratio of centroid distance to the sum of within-class RMS deviations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectSize {
    Finite(f64),
    /// Distinct centroids with zero spread in both classes.
    Infinite,
}

impl EffectSize {
    pub fn value(self) -> f64 {
        match self {
            EffectSize::Finite(v) => v,
            EffectSize::Infinite => f64::INFINITY,
        }
    }
}

/// Per-class sample statistics: centroid and RMS deviation from it.
#[derive(Clone, Debug)]
pub struct ClassSummary {
    pub centroids: [Vec<f64>; 2],
    pub spreads: [f64; 2],
}

pub fn class_summary(x: &FeatureMatrix, classes: &[u8]) -> Result<ClassSummary> {
    if classes.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            op: "class labels",
            expected: x.rows(),
            actual: classes.len(),
        });
    }
    let d = x.cols();
    let mut sums = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for (i, &c) in classes.iter().enumerate() {
        if c > 1 {
            return Err(Error::invalid(format!("class label {c} is not binary")));
        }
        x.add_row_to(i, 1.0, &mut sums[c as usize]);
        counts[c as usize] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::invalid("both classes must be non-empty"));
    }
    for c in 0..2 {
        let inv = 1.0 / counts[c] as f64;
        sums[c].iter_mut().for_each(|v| *v *= inv);
    }
    let mut sq = [0.0f64; 2];
    match x {
        FeatureMatrix::Dense(m) => {
            for (i, &c) in classes.iter().enumerate() {
                let cent = &sums[c as usize];
                sq[c as usize] += m
                    .row(i)
                    .iter()
                    .zip(cent)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
        }
        FeatureMatrix::Sparse(s) => {
            // ‖x − m‖² = ‖x‖² − 2⟨x, m⟩ + ‖m‖²
            let cent_sq = [
                sums[0].iter().map(|v| v * v).sum::<f64>(),
                sums[1].iter().map(|v| v * v).sum::<f64>(),
            ];
            for (i, &c) in classes.iter().enumerate() {
                let ci = c as usize;
                let xn = s.row_norm(i);
                sq[ci] += (xn * xn - 2.0 * s.row_dot(i, &sums[ci]) + cent_sq[ci]).max(0.0);
            }
        }
    }
    let spreads = [
        (sq[0] / counts[0] as f64).sqrt(),
        (sq[1] / counts[1] as f64).sqrt(),
    ];
    Ok(ClassSummary {
        centroids: sums,
        spreads,
    })
}

pub fn centroid_distance(x: &FeatureMatrix, classes: &[u8]) -> Result<f64> {
    let s = class_summary(x, classes)?;
    Ok(euclid(&s.centroids[0], &s.centroids[1]))
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn effect_size(x: &FeatureMatrix, classes: &[u8]) -> Result<EffectSize> {
    let s = class_summary(x, classes)?;
    let dist = euclid(&s.centroids[0], &s.centroids[1]);
    let spread = s.spreads[0] + s.spreads[1];
    if spread == 0.0 {
        return Ok(if dist > 0.0 {
            EffectSize::Infinite
        } else {
            EffectSize::Finite(0.0)
        });
    }
    Ok(EffectSize::Finite(dist / spread))
}

/// Expected same-class Hamming distance between adjacency rows:
/// `(n/2 − 2)·2p(1−p) + (n/2)·2q(1−q)`.
pub fn analytic_hamming_mean(n: usize, p: f64, q: f64) -> f64 {
    let half = n as f64 / 2.0;
    (half - 2.0) * 2.0 * p * (1.0 - p) + half * 2.0 * q * (1.0 - q)
}

/// Size of the symmetric difference of two sorted neighbor lists.
pub fn hamming_distance(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut common) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    a.len() + b.len() - 2 * common
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HammingStats {
    pub empirical_mean: f64,
    pub empirical_std: f64,
    pub analytic_mean: f64,
    pub pairs: usize,
    pub exhaustive: bool,
}

/// Above this node count same-class pairs are sampled instead of enumerated.
pub const HAMMING_EXHAUSTIVE_MAX_N: usize = 2000;

/// Same-class Hamming distances between adjacency rows.
pub fn hamming_stats(
    instance: &CsbmInstance,
    sample_pairs: usize,
    seed: u64,
) -> Result<HammingStats> {
    let graph = &instance.graph;
    let classes = &instance.classes;
    let members: [Vec<usize>; 2] = [
        (0..graph.n()).filter(|&i| classes[i] == 0).collect(),
        (0..graph.n()).filter(|&i| classes[i] == 1).collect(),
    ];
    if members.iter().any(|m| m.len() < 2) {
        return Err(Error::invalid("each class needs at least two nodes"));
    }
    let mut dists: Vec<f64> = Vec::new();
    let exhaustive = graph.n() <= HAMMING_EXHAUSTIVE_MAX_N;
    if exhaustive {
        for m in &members {
            for (a, &i) in m.iter().enumerate() {
                for &j in &m[a + 1..] {
                    dists.push(hamming_distance(graph.neighbors(i), graph.neighbors(j)) as f64);
                }
            }
        }
    } else {
        if sample_pairs == 0 {
            return Err(Error::invalid("sample_pairs must be positive"));
        }
        let mut rng = rng::stream(seed, streams::SAMPLING);
        for _ in 0..sample_pairs {
            let m = &members[rng.random_range(0..2)];
            let a = rng.random_range(0..m.len());
            let mut b = rng.random_range(0..m.len() - 1);
            if b >= a {
                b += 1;
            }
            dists.push(hamming_distance(graph.neighbors(m[a]), graph.neighbors(m[b])) as f64);
        }
    }
    let k = dists.len() as f64;
    let mean = dists.iter().sum::<f64>() / k;
    let var = dists.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k;
    let p = &instance.params;
    Ok(HammingStats {
        empirical_mean: mean,
        empirical_std: var.sqrt(),
        analytic_mean: analytic_hamming_mean(graph.n(), p.p, p.q),
        pairs: dists.len(),
        exhaustive,
    })
}

/// Finite-n proxies for the asymptotic regime assumptions on `(n, d, p, q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `√(ln n / n)`.
    pub threshold: f64,
    pub p_ratio: f64,
    pub q_ratio: f64,
    /// `|p − q| / (p + q)`.
    pub separation: f64,
    pub d_over_n: f64,
    pub warnings: Vec<String>,
}

/// Separation below this is reported as violating the constant-separation
/// requirement.
pub const MIN_SEPARATION: f64 = 0.1;

pub fn assumption_report(params: &CsbmParams) -> AssumptionReport {
    let n = params.n.max(2) as f64;
    let threshold = (n.ln() / n).sqrt();
    let p_ratio = params.p / threshold;
    let q_ratio = params.q / threshold;
    let sum = params.p + params.q;
    let separation = if sum > 0.0 {
        (params.p - params.q).abs() / sum
    } else {
        0.0
    };
    let d_over_n = params.d as f64 / n;
    let mut warnings = Vec::new();
    if p_ratio <= 1.0 {
        warnings.push(format!(
            "p = {} is not above sqrt(log n / n) = {threshold:.4}",
            params.p
        ));
    }
    if q_ratio <= 1.0 {
        warnings.push(format!(
            "q = {} is not above sqrt(log n / n) = {threshold:.4}",
            params.q
        ));
    }
    if separation < MIN_SEPARATION {
        warnings.push(format!(
            "|p - q| / (p + q) = {separation:.4} is close to zero"
        ));
    }
    if params.d >= params.n {
        warnings.push(format!(
            "d = {} is not small relative to n = {}",
            params.d, params.n
        ));
    }
    AssumptionReport {
        threshold,
        p_ratio,
        q_ratio,
        separation,
        d_over_n,
        warnings,
    }
}
