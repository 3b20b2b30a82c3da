//! Multinomial logistic regression and a one-hidden-layer MLP.
//!
//! Inputs are standardized with training-split column statistics, and the
//! parameters from the epoch with the best validation accuracy are kept.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Split;
use crate::error::{Error, Result};
use crate::rng::{self, streams};
use crate::sparse::{axpy, DenseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Logreg,
    Mlp,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifierKind::Logreg => "logreg",
            ClassifierKind::Mlp => "mlp",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" => Ok(ClassifierKind::Logreg),
            "mlp" => Ok(ClassifierKind::Mlp),
            other => Err(Error::invalid(format!("unknown classifier '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Mini-batch size of the MLP; logistic regression is full-batch.
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            kind: ClassifierKind::Mlp,
            hidden: 256,
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 64,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Params {
    Logreg {
        w: DenseMatrix,
        b: Vec<f64>,
    },
    Mlp {
        w1: DenseMatrix,
        b1: Vec<f64>,
        w2: DenseMatrix,
        b2: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    mean: Vec<f64>,
    std: Vec<f64>,
    n_classes: usize,
    params: Params,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub kind: ClassifierKind,
    pub train_accuracy: f64,
    pub valid_accuracy: f64,
    pub test_accuracy: f64,
    pub best_epoch: usize,
}

/// `out = x W + b` for a single row.
fn affine(x: &[f64], w: &DenseMatrix, b: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(b);
    for (k, &v) in x.iter().enumerate() {
        if v != 0.0 {
            axpy(v, w.row(k), out);
        }
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

impl Classifier {
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn logits_std(&self, x: &[f64], hidden: &mut Vec<f64>, out: &mut Vec<f64>) {
        match &self.params {
            Params::Logreg { w, b } => affine(x, w, b, out),
            Params::Mlp { w1, b1, w2, b2 } => {
                affine(x, w1, b1, hidden);
                hidden.iter_mut().for_each(|v| *v = v.max(0.0));
                affine(hidden, w2, b2, out);
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> usize {
        let (mut h, mut out) = (Vec::new(), Vec::new());
        self.logits_std(&self.standardize(x), &mut h, &mut out);
        argmax(&out)
    }

    pub fn predict(&self, x: &DenseMatrix) -> Vec<usize> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

/// Fraction of `rows` whose prediction matches `labels`.
pub fn accuracy(model: &Classifier, x: &DenseMatrix, labels: &[usize], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let hits = rows
        .iter()
        .filter(|&&i| model.predict_row(x.row(i)) == labels[i])
        .count();
    hits as f64 / rows.len() as f64
}

fn column_stats(x: &DenseMatrix, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let d = x.cols();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in rows {
        axpy(1.0 / n, x.row(i), &mut mean);
    }
    let mut var = vec![0.0; d];
    for &i in rows {
        for (k, &v) in x.row(i).iter().enumerate() {
            var[k] += (v - mean[k]).powi(2) / n;
        }
    }
    let std = var
        .into_iter()
        .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
        .collect();
    (mean, std)
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut rng::Rng) -> DenseMatrix {
    let data = (0..rows * cols)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    DenseMatrix::new(rows, cols, data).expect("finite init")
}

/// Trains on `split.train`, selects the epoch by `split.valid` accuracy, and
/// reports accuracy on all three sets.
pub fn train_classifier(
    x: &DenseMatrix,
    labels: &[usize],
    split: &Split,
    config: &ClassifierConfig,
) -> Result<(Classifier, ClassifierReport)> {
    if labels.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            op: "classifier labels",
            expected: x.rows(),
            actual: labels.len(),
        });
    }
    let split = Split::new(
        split.train.clone(),
        split.valid.clone(),
        split.test.clone(),
        x.rows(),
    )?;
    if config.epochs == 0 || config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
        return Err(Error::invalid(
            "classifier needs positive epochs and learning rate",
        ));
    }
    if config.kind == ClassifierKind::Mlp && (config.hidden == 0 || config.batch_size == 0) {
        return Err(Error::invalid(
            "mlp needs positive hidden width and batch size",
        ));
    }
    let n_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let d = x.cols();
    let (mean, std) = column_stats(x, &split.train);
    let mut rng = rng::stream(config.seed, streams::INIT + 1);
    let params = match config.kind {
        ClassifierKind::Logreg => Params::Logreg {
            w: DenseMatrix::zeros(d, n_classes),
            b: vec![0.0; n_classes],
        },
        ClassifierKind::Mlp => Params::Mlp {
            w1: gaussian(d, config.hidden, (2.0 / d.max(1) as f64).sqrt(), &mut rng),
            b1: vec![0.0; config.hidden],
            w2: gaussian(
                config.hidden,
                n_classes,
                (1.0 / config.hidden as f64).sqrt(),
                &mut rng,
            ),
            b2: vec![0.0; n_classes],
        },
    };
    let mut model = Classifier {
        mean,
        std,
        n_classes,
        params,
    };
    let xs: Vec<Vec<f64>> = (0..x.rows()).map(|i| model.standardize(x.row(i))).collect();
    let valid_acc = |m: &Classifier| {
        let (mut h, mut out) = (Vec::new(), Vec::new());
        let hits = split
            .valid
            .iter()
            .filter(|&&i| {
                m.logits_std(&xs[i], &mut h, &mut out);
                argmax(&out) == labels[i]
            })
            .count();
        hits as f64 / split.valid.len() as f64
    };

    let mut velocity = zeros_like(&model.params);
    let mut best = (f64::NEG_INFINITY, 0usize, model.clone());
    let mut order = split.train.clone();
    for epoch in 0..config.epochs {
        match config.kind {
            ClassifierKind::Logreg => {
                let g = batch_gradient(&model, &xs, labels, &split.train);
                sgd_update(&mut model.params, &mut velocity, &g, config, 0.0);
            }
            ClassifierKind::Mlp => {
                order.shuffle(&mut rng);
                for chunk in order.chunks(config.batch_size) {
                    let g = batch_gradient(&model, &xs, labels, chunk);
                    sgd_update(
                        &mut model.params,
                        &mut velocity,
                        &g,
                        config,
                        config.momentum,
                    );
                }
            }
        }
        let acc = valid_acc(&model);
        if acc > best.0 {
            best = (acc, epoch, model.clone());
        }
    }
    let (_, best_epoch, model) = best;
    let report = ClassifierReport {
        kind: config.kind,
        train_accuracy: accuracy(&model, x, labels, &split.train),
        valid_accuracy: accuracy(&model, x, labels, &split.valid),
        test_accuracy: accuracy(&model, x, labels, &split.test),
        best_epoch,
    };
    Ok((model, report))
}

fn zeros_like(p: &Params) -> Params {
    match p {
        Params::Logreg { w, b } => Params::Logreg {
            w: DenseMatrix::zeros(w.rows(), w.cols()),
            b: vec![0.0; b.len()],
        },
        Params::Mlp { w1, b1, w2, b2 } => Params::Mlp {
            w1: DenseMatrix::zeros(w1.rows(), w1.cols()),
            b1: vec![0.0; b1.len()],
            w2: DenseMatrix::zeros(w2.rows(), w2.cols()),
            b2: vec![0.0; b2.len()],
        },
    }
}

/// Mean softmax cross-entropy gradient over `rows`.
fn batch_gradient(model: &Classifier, xs: &[Vec<f64>], labels: &[usize], rows: &[usize]) -> Params {
    let mut g = zeros_like(&model.params);
    let scale = 1.0 / rows.len() as f64;
    let (mut h, mut out) = (Vec::new(), Vec::new());
    for &i in rows {
        let x = &xs[i];
        model.logits_std(x, &mut h, &mut out);
        softmax_in_place(&mut out);
        out[labels[i]] -= 1.0;
        out.iter_mut().for_each(|v| *v *= scale);
        match (&model.params, &mut g) {
            (Params::Logreg { .. }, Params::Logreg { w: gw, b: gb }) => {
                for (k, &v) in x.iter().enumerate() {
                    if v != 0.0 {
                        axpy(v, &out, gw.row_mut(k));
                    }
                }
                axpy(1.0, &out, gb);
            }
            (
                Params::Mlp { w2, .. },
                Params::Mlp {
                    w1: gw1,
                    b1: gb1,
                    w2: gw2,
                    b2: gb2,
                },
            ) => {
                let mut dh = vec![0.0; h.len()];
                for (j, &hj) in h.iter().enumerate() {
                    if hj > 0.0 {
                        axpy(hj, &out, gw2.row_mut(j));
                        dh[j] = crate::sparse::dot(w2.row(j), &out);
                    }
                }
                axpy(1.0, &out, gb2);
                for (k, &v) in x.iter().enumerate() {
                    if v != 0.0 {
                        axpy(v, &dh, gw1.row_mut(k));
                    }
                }
                axpy(1.0, &dh, gb1);
            }
            _ => unreachable!("gradient shape follows the model"),
        }
    }
    g
}

/// Momentum SGD with weight decay on the weight matrices (not biases).
fn sgd_update(
    params: &mut Params,
    velocity: &mut Params,
    grad: &Params,
    config: &ClassifierConfig,
    momentum: f64,
) {
    let lr = config.learning_rate;
    let wd = config.weight_decay;
    let step = |p: &mut [f64], v: &mut [f64], g: &[f64], decay: f64| {
        for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
            *v = momentum * *v - lr * (g + decay * *p);
            *p += *v;
        }
    };
    match (params, velocity, grad) {
        (
            Params::Logreg { w, b },
            Params::Logreg { w: vw, b: vb },
            Params::Logreg { w: gw, b: gb },
        ) => {
            step(w.data_mut(), vw.data_mut(), gw.data(), wd);
            step(b, vb, gb, 0.0);
        }
        (
            Params::Mlp { w1, b1, w2, b2 },
            Params::Mlp {
                w1: v1,
                b1: vb1,
                w2: v2,
                b2: vb2,
            },
            Params::Mlp {
                w1: g1,
                b1: gb1,
                w2: g2,
                b2: gb2,
            },
        ) => {
            step(w1.data_mut(), v1.data_mut(), g1.data(), wd);
            step(b1, vb1, gb1, 0.0);
            step(w2.data_mut(), v2.data_mut(), g2.data(), wd);
            step(b2, vb2, gb2, 0.0);
        }
        _ => unreachable!("optimizer state follows the model"),
    }
}
