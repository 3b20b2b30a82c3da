//! End-to-end runs composed from the other modules: theory validation on
//! cSBM graphs, the text-proxy benchmark, the four-arm clustering ablation
//! and the generic pipeline behind the command-line tool.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::csbm::{
    assumption_report, centroid_distance, effect_size, generate, hamming_stats, AssumptionReport,
    CsbmInstance, CsbmParams, HammingStats,
};
use crate::downstream::{
    sgc_features, train_classifier, ClassifierConfig, ClassifierReport, Split,
};
use crate::error::{Error, Result};
use crate::graph::{clustering_input, pifa, ClusteringMode, Graph};
use crate::matcher::{embed, train_with_log, MatcherModel, TrainConfig, TrainLog};
use crate::rng::{self, streams};
use crate::sparse::{DenseMatrix, FeatureMatrix};
use crate::text::{TfidfModel, VectorizerConfig};
use crate::tree::{tree_for_input, LabelTree};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryConfig {
    pub ns: Vec<usize>,
    pub d: usize,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub sigma: f64,
    pub seeds: Vec<u64>,
    /// Same-class pairs sampled for the Hamming statistics on large graphs.
    pub hamming_pairs: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            ns: vec![1000, 4000, 16000],
            d: 50,
            p: 0.1,
            q: 0.02,
            r: 1.0,
            sigma: 1.0,
            seeds: vec![0, 1, 2],
            hamming_pairs: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryRun {
    pub n: usize,
    pub seed: u64,
    pub raw_effect_size: f64,
    pub pifa_effect_size: f64,
    pub raw_centroid_distance: f64,
    pub pifa_centroid_distance: f64,
    pub hamming: HammingStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    pub n: usize,
    pub mean_raw_effect_size: f64,
    pub mean_pifa_effect_size: f64,
    pub mean_pifa_centroid_distance: f64,
    pub mean_hamming: f64,
    pub analytic_hamming: f64,
    pub hamming_relative_error: f64,
    pub assumptions: AssumptionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub config: TheoryConfig,
    pub runs: Vec<TheoryRun>,
    pub summary: Vec<TheorySummary>,
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, k) = v
        .into_iter()
        .fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    if k == 0 {
        f64::NAN
    } else {
        s / k as f64
    }
}

/// Raw and PIFA statistics of one cSBM draw.
pub fn theory_run(params: &CsbmParams, hamming_pairs: usize) -> Result<TheoryRun> {
    let inst = generate(params)?;
    let raw = FeatureMatrix::Dense(inst.features.clone());
    let z = pifa(&inst.graph, &raw)?;
    Ok(TheoryRun {
        n: params.n,
        seed: params.seed,
        raw_effect_size: effect_size(&raw, &inst.classes)?.value(),
        pifa_effect_size: effect_size(&z, &inst.classes)?.value(),
        raw_centroid_distance: centroid_distance(&raw, &inst.classes)?,
        pifa_centroid_distance: centroid_distance(&z, &inst.classes)?,
        hamming: hamming_stats(&inst, hamming_pairs, params.seed)?,
    })
}

pub fn validate_theory(config: &TheoryConfig) -> Result<TheoryReport> {
    if config.ns.is_empty() || config.seeds.is_empty() {
        return Err(Error::invalid(
            "theory validation needs at least one n and one seed",
        ));
    }
    let mut runs = Vec::new();
    let mut summary = Vec::new();
    for &n in &config.ns {
        let params = |seed| {
            CsbmParams::new(
                n,
                config.d,
                config.p,
                config.q,
                config.r,
                config.sigma,
                seed,
            )
        };
        let assumptions = assumption_report(&params(0));
        for w in &assumptions.warnings {
            log::warn!("n = {n}: {w}");
        }
        let these: Vec<TheoryRun> = config
            .seeds
            .iter()
            .map(|&s| theory_run(&params(s), config.hamming_pairs))
            .collect::<Result<_>>()?;
        let mean_hamming = mean(these.iter().map(|r| r.hamming.empirical_mean));
        let analytic = these[0].hamming.analytic_mean;
        summary.push(TheorySummary {
            n,
            mean_raw_effect_size: mean(these.iter().map(|r| r.raw_effect_size)),
            mean_pifa_effect_size: mean(these.iter().map(|r| r.pifa_effect_size)),
            mean_pifa_centroid_distance: mean(these.iter().map(|r| r.pifa_centroid_distance)),
            mean_hamming,
            analytic_hamming: analytic,
            hamming_relative_error: (mean_hamming - analytic).abs() / analytic,
            assumptions,
        });
        runs.extend(these);
    }
    Ok(TheoryReport {
        config: config.clone(),
        runs,
        summary,
    })
}

/// A cSBM graph whose nodes carry short documents drawn from two
/// class-dependent word distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextProxyConfig {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    /// Topic words owned by each class.
    pub class_vocab: usize,
    /// Words shared by both classes.
    pub shared_vocab: usize,
    pub doc_len: usize,
    /// Probability that a word comes from the node's class topic.
    pub signal: f64,
    pub seed: u64,
}

impl Default for TextProxyConfig {
    fn default() -> Self {
        TextProxyConfig {
            n: 2000,
            p: 0.01,
            q: 0.002,
            class_vocab: 200,
            shared_vocab: 1000,
            doc_len: 12,
            signal: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TextProxy {
    pub graph: Graph,
    pub classes: Vec<u8>,
    pub docs: Vec<String>,
}

pub fn text_proxy(config: &TextProxyConfig) -> Result<TextProxy> {
    if config.class_vocab == 0 || config.shared_vocab == 0 || config.doc_len == 0 {
        return Err(Error::invalid(
            "text proxy needs non-empty vocabularies and documents",
        ));
    }
    if !(0.0..=1.0).contains(&config.signal) {
        return Err(Error::invalid("signal must lie in [0, 1]"));
    }
    let CsbmInstance { graph, classes, .. } = generate(&CsbmParams::new(
        config.n,
        1,
        config.p,
        config.q,
        1.0,
        1.0,
        config.seed,
    ))?;
    let mut rng = rng::stream(config.seed, streams::TEXT);
    let docs = classes
        .iter()
        .map(|&c| {
            (0..config.doc_len)
                .map(|_| {
                    if rng.random::<f64>() < config.signal {
                        format!("c{c}w{}", rng.random_range(0..config.class_vocab))
                    } else {
                        format!("sw{}", rng.random_range(0..config.shared_vocab))
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    Ok(TextProxy {
        graph,
        classes,
        docs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DownstreamConfig {
    pub classifier: ClassifierConfig,
    /// Propagation steps applied to the features before classification.
    pub sgc_k: usize,
    pub train_frac: f64,
    pub valid_frac: f64,
    /// Append the encoder input features to the embeddings.
    pub concat_features: bool,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        DownstreamConfig {
            classifier: ClassifierConfig::default(),
            sgc_k: 0,
            train_frac: 0.6,
            valid_frac: 0.2,
            concat_features: false,
        }
    }
}

/// Node classification accuracy of `x` under a seeded random split.
pub fn evaluate_features(
    graph: &Graph,
    x: &DenseMatrix,
    labels: &[usize],
    config: &DownstreamConfig,
    seed: u64,
) -> Result<ClassifierReport> {
    let split = Split::random(x.rows(), config.train_frac, config.valid_frac, seed)?;
    let x = if config.sgc_k > 0 {
        sgc_features(graph, x, config.sgc_k)?
    } else {
        x.clone()
    };
    let cls = ClassifierConfig {
        seed,
        ..config.classifier.clone()
    };
    train_classifier(&x, labels, &split, &cls).map(|(_, r)| r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mode: ClusteringMode,
    pub schedule: Vec<usize>,
    pub train: TrainConfig,
    pub downstream: DownstreamConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: ClusteringMode::TfidfPifa,
            schedule: Vec::new(),
            train: TrainConfig::default(),
            downstream: DownstreamConfig::default(),
            seed: 0,
        }
    }
}

/// Cluster counts `8, 64, 512, ...` below `n_labels`, then the label level.
pub fn default_schedule(n_labels: usize) -> Vec<usize> {
    let mut s = Vec::new();
    let mut k = 8;
    while k < n_labels {
        s.push(k);
        k *= 8;
    }
    s.push(n_labels);
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: usize,
    pub n_clusters: usize,
    pub steps: usize,
    pub first_loss: f64,
    pub final_loss: f64,
    pub mean_candidates: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub mode: ClusteringMode,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub d_feat: usize,
    pub schedule: Vec<usize>,
    pub levels: Vec<LevelSummary>,
    pub downstream: Option<ClassifierReport>,
}

pub struct PipelineOutput {
    pub tree: LabelTree,
    pub model: MatcherModel,
    pub embeddings: DenseMatrix,
    pub log: TrainLog,
    pub report: PipelineReport,
}

pub fn summarize_log(log: &TrainLog) -> Vec<LevelSummary> {
    log.levels
        .iter()
        .map(|l| LevelSummary {
            level: l.level,
            n_clusters: l.n_clusters,
            steps: l.steps,
            first_loss: l.losses.first().copied().unwrap_or(f64::NAN),
            final_loss: l.losses.last().copied().unwrap_or(f64::NAN),
            mean_candidates: l.mean_candidates,
        })
        .collect()
}

/// Clustering, tree, training, embedding and (when labels are given)
/// downstream evaluation.
///
/// `text_features` feed the clustering arms that use text; `encoder_features`
/// are the encoder's input. They are usually the same matrix.
pub fn run_pipeline(
    graph: &Graph,
    text_features: &FeatureMatrix,
    encoder_features: &FeatureMatrix,
    labels: Option<&[usize]>,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    let n = graph.n();
    if encoder_features.rows() != n {
        return Err(Error::DimensionMismatch {
            op: "encoder features",
            expected: n,
            actual: encoder_features.rows(),
        });
    }
    let schedule = if config.schedule.is_empty() {
        default_schedule(n)
    } else {
        config.schedule.clone()
    };
    let input = clustering_input(graph, text_features, config.mode)?;
    let tree = tree_for_input(&input, n, &schedule, config.seed)?;
    drop(input);
    log::info!("tree built: schedule {:?}", tree.schedule());
    let (model, log) = train_with_log(encoder_features, graph.adjacency(), &tree, &config.train)?;
    let mut embeddings = embed(&model, encoder_features)?;
    if config.downstream.concat_features {
        embeddings = embeddings.hstack(&encoder_features.to_dense())?;
    }
    let downstream = match labels {
        Some(y) => Some(evaluate_features(
            graph,
            &embeddings,
            y,
            &config.downstream,
            config.seed,
        )?),
        None => None,
    };
    let report = PipelineReport {
        mode: config.mode,
        n_nodes: n,
        n_edges: graph.edge_count(),
        d_feat: encoder_features.cols(),
        schedule: tree.schedule().to_vec(),
        levels: summarize_log(&log),
        downstream,
    };
    Ok(PipelineOutput {
        tree,
        model,
        embeddings,
        log,
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub text: TextProxyConfig,
    pub vectorizer: VectorizerConfig,
    pub seeds: Vec<u64>,
    pub schedule: Vec<usize>,
    pub train: TrainConfig,
    pub downstream: DownstreamConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            text: TextProxyConfig::default(),
            vectorizer: VectorizerConfig::unigrams_only(10_000),
            seeds: vec![0, 1, 2],
            schedule: vec![8, 32, 128],
            train: TrainConfig {
                d_emb: 32,
                learning_rate: 0.5,
                steps_per_level: 300,
                ..Default::default()
            },
            downstream: DownstreamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: ClusteringMode,
    pub test_accuracy: Vec<f64>,
    pub mean_test_accuracy: f64,
    pub mean_valid_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config: AblationConfig,
    pub rows: Vec<AblationRow>,
    /// Arm with the highest mean test accuracy.
    pub best: ClusteringMode,
    /// Arm with the lowest mean test accuracy.
    pub worst: ClusteringMode,
}

/// All four clustering arms on the same graphs, documents, encoder inputs
/// and splits; only the label tree differs between arms.
pub fn run_ablation(config: &AblationConfig) -> Result<AblationReport> {
    if config.seeds.is_empty() {
        return Err(Error::invalid("ablation needs at least one seed"));
    }
    let mut acc: Vec<Vec<(f64, f64)>> = vec![Vec::new(); ClusteringMode::ALL.len()];
    for &seed in &config.seeds {
        let proxy = text_proxy(&TextProxyConfig {
            seed,
            ..config.text.clone()
        })?;
        let tfidf = TfidfModel::fit(&proxy.docs, &config.vectorizer)?;
        let x = FeatureMatrix::Sparse(tfidf.transform_corpus(&proxy.docs));
        let labels: Vec<usize> = proxy.classes.iter().map(|&c| c as usize).collect();
        for (a, &mode) in ClusteringMode::ALL.iter().enumerate() {
            let cfg = PipelineConfig {
                mode,
                schedule: config.schedule.clone(),
                train: TrainConfig {
                    seed,
                    ..config.train.clone()
                },
                downstream: config.downstream.clone(),
                seed,
            };
            let out = run_pipeline(&proxy.graph, &x, &x, Some(&labels), &cfg)?;
            let r = out.report.downstream.expect("labels were given");
            log::info!("seed {seed} {mode}: test accuracy {:.4}", r.test_accuracy);
            acc[a].push((r.test_accuracy, r.valid_accuracy));
        }
    }
    let rows: Vec<AblationRow> = ClusteringMode::ALL
        .iter()
        .zip(&acc)
        .map(|(&mode, v)| AblationRow {
            mode,
            test_accuracy: v.iter().map(|x| x.0).collect(),
            mean_test_accuracy: mean(v.iter().map(|x| x.0)),
            mean_valid_accuracy: mean(v.iter().map(|x| x.1)),
        })
        .collect();
    let by = |better: fn(f64, f64) -> bool| {
        rows.iter()
            .fold(None::<&AblationRow>, |b, r| match b {
                Some(b) if !better(r.mean_test_accuracy, b.mean_test_accuracy) => Some(b),
                _ => Some(r),
            })
            .map(|r| r.mode)
            .expect("four arms")
    };
    let best = by(|a, b| a > b);
    let worst = by(|a, b| a < b);
    Ok(AblationReport {
        config: config.clone(),
        rows,
        best,
        worst,
    })
}
