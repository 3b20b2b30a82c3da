//! Squared-hinge OVA objective over candidate clusters and its gradient.
//!
//! For a batch `B` the objective is
//! `(1/|B|) Σ_i Σ_{c ∈ C_i} max(0, γ - y_ic s_ic)^2 + λ (‖W‖² + ‖E‖²)`
//! with `s_ic = w_c · Φ(x_i)` and `Φ(x) = E x / ‖E x‖`.

use rayon::prelude::*;

use super::{project_row, EncoderModel, RankerLevel};
use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, DenseMatrix, FeatureMatrix};

/// One instance of a batch with its candidate clusters and their targets.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchItem {
    pub instance: usize,
    pub candidates: Vec<u32>,
    pub positive: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub items: Vec<BatchItem>,
}

/// Objective value and full gradient (data term plus regularizer), with
/// gradients laid out like the parameters they belong to.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub loss: f64,
    pub encoder: DenseMatrix,
    pub ranker: DenseMatrix,
}

/// A parameter matrix stored as `scale * raw`, so that weight decay over all
/// rows costs O(1) per step while data gradients touch only a few rows.
#[derive(Clone, Debug)]
pub(crate) struct ScaledRows {
    raw: DenseMatrix,
    scale: f64,
    raw_sq: f64,
    updates_since_resum: usize,
}

impl ScaledRows {
    pub(crate) fn new(m: DenseMatrix) -> ScaledRows {
        let raw_sq = dot(m.data(), m.data());
        ScaledRows {
            raw: m,
            scale: 1.0,
            raw_sq,
            updates_since_resum: 0,
        }
    }

    pub(crate) fn raw(&self) -> &DenseMatrix {
        &self.raw
    }

    pub(crate) fn scale(&self) -> f64 {
        self.scale
    }

    pub(crate) fn sq_norm(&self) -> f64 {
        self.scale * self.scale * self.raw_sq
    }

    pub(crate) fn to_dense(&self) -> DenseMatrix {
        let mut m = self.raw.clone();
        if self.scale != 1.0 {
            m.data_mut().iter_mut().for_each(|v| *v *= self.scale);
        }
        m
    }

    /// `P ← (1 - 2ηλ) P - η G` where `G` is given as sparse rows.
    pub(crate) fn sgd_step(&mut self, lr: f64, l2: f64, grad_rows: &[(usize, Vec<f64>)]) {
        self.scale *= 1.0 - 2.0 * lr * l2;
        if self.scale < 1e-30 {
            self.raw = self.to_dense();
            self.scale = 1.0;
            self.raw_sq = dot(self.raw.data(), self.raw.data());
        }
        let step = -lr / self.scale;
        for (r, g) in grad_rows {
            let row = self.raw.row_mut(*r);
            let before = dot(row, row);
            axpy(step, g, row);
            self.raw_sq += dot(row, row) - before;
        }
        self.updates_since_resum += 1;
        if self.updates_since_resum >= 256 {
            self.raw_sq = dot(self.raw.data(), self.raw.data());
            self.updates_since_resum = 0;
        }
    }
}

/// Per-instance contribution to the data term, evaluated at fixed parameters.
pub(crate) struct InstanceTerms {
    pub(crate) loss: f64,
    pub(crate) phi: Vec<f64>,
    /// `∂L/∂u_i` where `u_i = E x_i`.
    pub(crate) grad_u: Vec<f64>,
    /// `(cluster, ∂L/∂s_ic)` for candidates with a nonzero derivative.
    pub(crate) score_grads: Vec<(u32, f64)>,
}

pub(crate) fn instance_terms(
    encoder: &ScaledRows,
    ranker: &ScaledRows,
    features: &FeatureMatrix,
    item: &BatchItem,
    margin: f64,
    weight: f64,
) -> InstanceTerms {
    let mut u = project_row(encoder.raw(), features, item.instance);
    u.iter_mut().for_each(|v| *v *= encoder.scale());
    let norm = dot(&u, &u).sqrt();
    let mut phi = u;
    if norm > 0.0 {
        phi.iter_mut().for_each(|v| *v /= norm);
    }
    let ws = ranker.scale();
    let mut loss = 0.0;
    let mut grad_phi = vec![0.0; phi.len()];
    let mut score_grads = Vec::new();
    for (&c, &pos) in item.candidates.iter().zip(&item.positive) {
        let w = ranker.raw().row(c as usize);
        let s = ws * dot(w, &phi);
        let y = if pos { 1.0 } else { -1.0 };
        let viol = (margin - y * s).max(0.0);
        if viol > 0.0 {
            loss += viol * viol;
            let d = -2.0 * y * viol * weight;
            score_grads.push((c, d));
            axpy(d * ws, w, &mut grad_phi);
        }
    }
    let grad_u = if norm > 0.0 {
        let proj = dot(&grad_phi, &phi);
        grad_phi
            .iter()
            .zip(&phi)
            .map(|(g, p)| (g - proj * p) / norm)
            .collect()
    } else {
        vec![0.0; phi.len()]
    };
    InstanceTerms {
        loss: loss * weight,
        phi,
        grad_u,
        score_grads,
    }
}

pub(crate) fn check_batch(batch: &Batch, n_rows: usize, n_clusters: usize) -> Result<()> {
    for item in &batch.items {
        if item.instance >= n_rows {
            return Err(Error::invalid(format!(
                "batch instance {} out of range",
                item.instance
            )));
        }
        if item.candidates.len() != item.positive.len() {
            return Err(Error::invalid("candidate and target lengths differ"));
        }
        if let Some(&c) = item.candidates.iter().find(|&&c| c as usize >= n_clusters) {
            return Err(Error::invalid(format!(
                "candidate cluster {c} out of range"
            )));
        }
    }
    Ok(())
}

pub(crate) fn evaluate_terms(
    encoder: &ScaledRows,
    ranker: &ScaledRows,
    features: &FeatureMatrix,
    batch: &Batch,
    margin: f64,
) -> Vec<InstanceTerms> {
    let weight = 1.0 / batch.items.len().max(1) as f64;
    batch
        .items
        .par_iter()
        .map(|item| instance_terms(encoder, ranker, features, item, margin, weight))
        .collect()
}

/// Objective and gradient of one level at the given parameters.
pub fn loss_and_grad(
    encoder: &EncoderModel,
    ranker: &RankerLevel,
    features: &FeatureMatrix,
    batch: &Batch,
    margin: f64,
    l2: f64,
) -> Result<LossGrad> {
    if features.cols() != encoder.d_feat() {
        return Err(Error::DimensionMismatch {
            op: "loss_and_grad features",
            expected: encoder.d_feat(),
            actual: features.cols(),
        });
    }
    if ranker.weight.cols() != encoder.d_emb() {
        return Err(Error::DimensionMismatch {
            op: "loss_and_grad ranker",
            expected: encoder.d_emb(),
            actual: ranker.weight.cols(),
        });
    }
    check_batch(batch, features.rows(), ranker.n_clusters())?;
    let enc = ScaledRows::new(encoder.weight.clone());
    let rank = ScaledRows::new(ranker.weight.clone());
    let terms = evaluate_terms(&enc, &rank, features, batch, margin);

    let mut loss = l2 * (enc.sq_norm() + rank.sq_norm());
    let mut g_enc = encoder.weight.clone();
    g_enc.data_mut().iter_mut().for_each(|v| *v *= 2.0 * l2);
    let mut g_rank = ranker.weight.clone();
    g_rank.data_mut().iter_mut().for_each(|v| *v *= 2.0 * l2);
    for (item, t) in batch.items.iter().zip(&terms) {
        loss += t.loss;
        for &(c, d) in &t.score_grads {
            axpy(d, &t.phi, g_rank.row_mut(c as usize));
        }
        features.for_each_nonzero(item.instance, |j, v| axpy(v, &t.grad_u, g_enc.row_mut(j)));
    }
    Ok(LossGrad {
        loss,
        encoder: g_enc,
        ranker: g_rank,
    })
}
