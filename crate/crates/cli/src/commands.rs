use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use nbrpred::csbm::{assumption_report, effect_size, generate, CsbmParams};
use nbrpred::downstream::{
    four_cycle_instance, link_auc, split_edges, train_linkpred, ClassifierKind, LinkPredConfig,
};
use nbrpred::graph::pifa;
use nbrpred::io;
use nbrpred::matcher::{embed, embed_concat, predict_all, train_with_log, NegativeSampling};
use nbrpred::pipeline::{
    default_schedule, evaluate_features, run_ablation, run_pipeline, summarize_log,
    validate_theory, AblationConfig, DownstreamConfig, PipelineConfig, PipelineReport,
    TheoryConfig,
};
use nbrpred::text::{identity_features, TfidfModel, VectorizerConfig};
use nbrpred::tree::tree_for_input;
use nbrpred::{graph::clustering_input, ClusteringMode, FeatureMatrix, Graph, LabelTree};

#[derive(Parser, Debug)]
#[command(
    name = "nbrpred",
    version,
    about = "Graph-aware node features from neighborhood prediction"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config; flags given on the command line override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the JSON report (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a two-class contextual stochastic block model.
    CsbmGen(CsbmGenArgs),
    /// Fit a TF-IDF vectorizer on a corpus and transform it.
    Vectorize(VectorizeArgs),
    /// Aggregate neighbor features into normalized label features.
    Pifa(PifaArgs),
    /// Build a hierarchical label tree.
    Tree(TreeArgs),
    /// Train the neighborhood matcher (tree, training, embedding, optional evaluation).
    Train(TrainArgs),
    /// Encode nodes with a trained matcher.
    Embed(EmbedArgs),
    /// Beam-search neighborhood predictions.
    Predict(PredictArgs),
    /// Node classification on given features.
    EvalDownstream(EvalArgs),
    /// Triplet-loss link prediction baseline.
    LinkpredBaseline(LinkPredArgs),
    /// Effect-size, centroid-distance and Hamming statistics on cSBM graphs.
    ValidateTheory(TheoryArgs),
    /// Compare the four clustering arms on a cSBM-with-text proxy.
    Ablation(AblationArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::CsbmGen(a) => csbm_gen(a),
        Command::Vectorize(a) => vectorize(a),
        Command::Pifa(a) => pifa_cmd(a),
        Command::Tree(a) => tree(a),
        Command::Train(a) => train(a),
        Command::Embed(a) => embed_cmd(a),
        Command::Predict(a) => predict(a),
        Command::EvalDownstream(a) => eval_downstream(a),
        Command::LinkpredBaseline(a) => linkpred(a),
        Command::ValidateTheory(a) => theory(a),
        Command::Ablation(a) => ablation(a),
    }
}

macro_rules! set {
    ($($dst:expr => $src:expr),* $(,)?) => {
        $(if let Some(v) = $src { $dst = v; })*
    };
}

fn load_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => io::load_json(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(T::default()),
    }
}

fn emit<C: Serialize, R: Serialize>(
    common: &Common,
    command: &str,
    config: &C,
    result: &R,
) -> Result<()> {
    let report = json!({ "command": command, "config": config, "result": result });
    match &common.out {
        Some(p) => {
            io::save_json(p, &report).with_context(|| format!("writing report {}", p.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{}", serde_json::to_string_pretty(&report)?) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn seeds(count: usize) -> Vec<u64> {
    (0..count as u64).collect()
}

fn read_graph(path: &Path, n: Option<usize>) -> Result<Graph> {
    let list =
        io::load_graph(path, n).with_context(|| format!("reading graph {}", path.display()))?;
    Ok(list.graph)
}

fn read_features(path: &Path) -> Result<FeatureMatrix> {
    io::load_features(path).with_context(|| format!("reading features {}", path.display()))
}

/// Loaded features, or identity features when no path is given.
fn features_or_identity(path: &Option<PathBuf>, n: usize) -> Result<FeatureMatrix> {
    let x = match path {
        Some(p) => read_features(p)?,
        None => FeatureMatrix::Sparse(identity_features(n)?),
    };
    if x.rows() != n {
        bail!(nbrpred::Error::DimensionMismatch {
            op: "feature rows",
            expected: n,
            actual: x.rows()
        });
    }
    Ok(x)
}

fn read_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let y = io::load_labels(path).with_context(|| format!("reading labels {}", path.display()))?;
    if y.len() != n {
        bail!(nbrpred::Error::DimensionMismatch {
            op: "label count",
            expected: n,
            actual: y.len()
        });
    }
    Ok(y)
}

// ---------------------------------------------------------------- csbm-gen

#[derive(Args, Debug)]
struct CsbmGenArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep the contiguous class layout instead of shuffling node ids.
    #[arg(long)]
    no_shuffle: bool,
    /// Edge list output.
    #[arg(long)]
    graph_out: Option<PathBuf>,
    /// Dense feature matrix output.
    #[arg(long)]
    features_out: Option<PathBuf>,
    /// Class labels output, one per line.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

fn csbm_gen(a: CsbmGenArgs) -> Result<()> {
    let mut cfg: CsbmParams = load_config(&a.common.config)?;
    set!(cfg.n => a.n, cfg.d => a.d, cfg.p => a.p, cfg.q => a.q, cfg.r => a.r,
         cfg.sigma => a.sigma, cfg.seed => a.seed);
    if a.no_shuffle {
        cfg.shuffle = false;
    }
    let inst = generate(&cfg)?;
    if let Some(p) = &a.graph_out {
        io::save_graph(p, &inst.graph)?;
    }
    if let Some(p) = &a.features_out {
        io::save_dense(p, &inst.features)?;
    }
    if let Some(p) = &a.labels_out {
        let y: Vec<usize> = inst.classes.iter().map(|&c| c as usize).collect();
        io::save_labels(p, &y)?;
    }
    let edges = inst.graph.edges();
    let intra = edges
        .iter()
        .filter(|&&(u, v)| inst.classes[u] == inst.classes[v])
        .count();
    let result = json!({
        "n_nodes": inst.graph.n(),
        "n_edges": edges.len(),
        "mean_degree": 2.0 * edges.len() as f64 / inst.graph.n().max(1) as f64,
        "intra_class_edge_fraction": if edges.is_empty() { 0.0 } else { intra as f64 / edges.len() as f64 },
        "raw_effect_size": effect_size(&FeatureMatrix::Dense(inst.features.clone()), &inst.classes)?.value(),
        "assumptions": assumption_report(&cfg),
    });
    emit(&a.common, "csbm-gen", &cfg, &result)
}

// --------------------------------------------------------------- vectorize

#[derive(Args, Debug)]
struct VectorizeArgs {
    #[command(flatten)]
    common: Common,
    /// Corpus, one document per line.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    max_word_unigrams: Option<usize>,
    #[arg(long)]
    max_word_bigrams: Option<usize>,
    #[arg(long)]
    max_char_trigrams: Option<usize>,
    #[arg(long)]
    sublinear_tf: Option<bool>,
    /// Sparse TF-IDF matrix output.
    #[arg(long)]
    features_out: Option<PathBuf>,
    /// Fitted vectorizer (vocabulary and idf) as JSON.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

fn vectorize(a: VectorizeArgs) -> Result<()> {
    let mut cfg: VectorizerConfig = load_config(&a.common.config)?;
    set!(cfg.max_word_unigrams => a.max_word_unigrams, cfg.max_word_bigrams => a.max_word_bigrams,
         cfg.max_char_trigrams => a.max_char_trigrams, cfg.sublinear_tf => a.sublinear_tf);
    let docs = io::load_corpus(&a.corpus)
        .with_context(|| format!("reading corpus {}", a.corpus.display()))?;
    let model = TfidfModel::fit(&docs, &cfg)?;
    let x = model.transform_corpus(&docs);
    if let Some(p) = &a.features_out {
        io::save_sparse(p, &x)?;
    }
    if let Some(p) = &a.model_out {
        io::write_atomic(p, model.to_json()?.as_bytes())?;
    }
    let families: serde_json::Map<String, Value> = nbrpred::text::Family::ALL
        .iter()
        .map(|&f| {
            (
                serde_json::to_value(f)
                    .unwrap()
                    .as_str()
                    .unwrap()
                    .to_owned(),
                json!(model.family_size(f)),
            )
        })
        .collect();
    let result = json!({
        "documents": docs.len(),
        "vocab_size": model.vocab_size(),
        "family_sizes": families,
        "nnz": x.nnz(),
        "empty_rows": (0..x.rows()).filter(|&i| x.row_nnz(i) == 0).count(),
    });
    emit(&a.common, "vectorize", &cfg, &result)
}

// -------------------------------------------------------------------- pifa

#[derive(Args, Debug)]
struct PifaArgs {
    #[command(flatten)]
    common: Common,
    /// Edge list.
    #[arg(long)]
    graph: PathBuf,
    /// Node count when it exceeds the largest id in the edge list.
    #[arg(long)]
    n: Option<usize>,
    /// Node features; identity features when absent.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    features_out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct PifaConfig {
    n: Option<usize>,
}

fn pifa_cmd(a: PifaArgs) -> Result<()> {
    let mut cfg: PifaConfig = load_config(&a.common.config)?;
    if a.n.is_some() {
        cfg.n = a.n;
    }
    let g = read_graph(&a.graph, cfg.n)?;
    let x = features_or_identity(&a.features, g.n())?;
    let z = pifa(&g, &x)?;
    if let Some(p) = &a.features_out {
        io::save_features(p, &z)?;
    }
    let zero_rows = (0..z.rows()).filter(|&i| z.row_norm(i) == 0.0).count();
    let result = json!({
        "rows": z.rows(),
        "cols": z.cols(),
        "sparse": matches!(z, FeatureMatrix::Sparse(_)),
        "zero_rows": zero_rows,
    });
    emit(&a.common, "pifa", &cfg, &result)
}

// -------------------------------------------------------------------- tree

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct TreeConfig {
    mode: ClusteringMode,
    /// Empty means the default schedule for the label count.
    schedule: Vec<usize>,
    seed: u64,
    n: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            mode: ClusteringMode::TfidfPifa,
            schedule: Vec::new(),
            seed: 0,
            n: None,
        }
    }
}

#[derive(Args, Debug)]
struct TreeArgs {
    #[command(flatten)]
    common: Common,
    /// Edge list; optional for random trees when `--n` is given.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Text features of the nodes; identity features when absent.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// tfidf_pifa, identity_pifa, tfidf_only or random.
    #[arg(long)]
    mode: Option<ClusteringMode>,
    /// Clusters per level, comma separated.
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tree JSON output.
    #[arg(long)]
    tree_out: Option<PathBuf>,
}

fn tree_summary(tree: &LabelTree) -> Result<Value> {
    let levels = (0..tree.depth())
        .map(|t| {
            let sizes: Vec<usize> = tree.cluster_members(t)?.iter().map(Vec::len).collect();
            Ok(json!({
                "level": t,
                "clusters": sizes.len(),
                "min_size": sizes.iter().min(),
                "max_size": sizes.iter().max(),
            }))
        })
        .collect::<nbrpred::Result<Vec<Value>>>()?;
    Ok(json!({
        "n_labels": tree.n_labels(),
        "schedule": tree.schedule(),
        "ends_at_labels": tree.ends_at_labels(),
        "levels": levels,
    }))
}

fn tree(a: TreeArgs) -> Result<()> {
    let mut cfg: TreeConfig = load_config(&a.common.config)?;
    set!(cfg.mode => a.mode, cfg.schedule => a.schedule, cfg.seed => a.seed);
    if a.n.is_some() {
        cfg.n = a.n;
    }
    let (n, input) = match (&a.graph, cfg.mode) {
        (None, ClusteringMode::Random) => {
            let n = cfg.n.context("a random tree without --graph needs --n")?;
            (n, nbrpred::ClusteringInput::Random)
        }
        (None, _) => bail!("--graph is required for mode {}", cfg.mode),
        (Some(p), mode) => {
            let g = read_graph(p, cfg.n)?;
            let x = features_or_identity(&a.features, g.n())?;
            (g.n(), clustering_input(&g, &x, mode)?)
        }
    };
    let schedule = if cfg.schedule.is_empty() {
        default_schedule(n)
    } else {
        cfg.schedule.clone()
    };
    let tree = tree_for_input(&input, n, &schedule, cfg.seed)?;
    if let Some(p) = &a.tree_out {
        io::write_atomic(p, tree.to_json()?.as_bytes())?;
    }
    emit(&a.common, "tree", &cfg, &tree_summary(&tree)?)
}

// ------------------------------------------------------------------- train

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    /// Encoder input features; identity features when absent.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Features used to build the tree; defaults to `--features`.
    #[arg(long)]
    text_features: Option<PathBuf>,
    /// Prebuilt tree JSON; skips clustering.
    #[arg(long)]
    tree: Option<PathBuf>,
    /// Class labels; enables the downstream evaluation.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    mode: Option<ClusteringMode>,
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<usize>>,
    /// Seed for clustering, training and the evaluation split.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    d_emb: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    steps_per_level: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    beam_width: Option<usize>,
    #[arg(long)]
    man_top_k: Option<usize>,
    /// tfn or tfn_plus_man.
    #[arg(long)]
    negatives: Option<NegativeSampling>,
    #[arg(long)]
    l2_reg: Option<f64>,
    /// Model directory output.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Embedding matrix output.
    #[arg(long)]
    embeddings_out: Option<PathBuf>,
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg: PipelineConfig = load_config(&a.common.config)?;
    set!(cfg.mode => a.mode, cfg.schedule => a.schedule,
         cfg.train.d_emb => a.d_emb, cfg.train.learning_rate => a.learning_rate,
         cfg.train.steps_per_level => a.steps_per_level, cfg.train.batch_size => a.batch_size,
         cfg.train.beam_width => a.beam_width, cfg.train.man_top_k => a.man_top_k,
         cfg.train.negatives => a.negatives, cfg.train.l2_reg => a.l2_reg);
    if let Some(s) = a.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    let g = read_graph(&a.graph, a.n)?;
    let x = features_or_identity(&a.features, g.n())?;
    let labels = a
        .labels
        .as_deref()
        .map(|p| read_labels(p, g.n()))
        .transpose()?;
    let (model, embeddings, report) = match &a.tree {
        None => {
            let text = match &a.text_features {
                Some(p) => read_features(p)?,
                None => x.clone(),
            };
            let out = run_pipeline(&g, &text, &x, labels.as_deref(), &cfg)?;
            (out.model, out.embeddings, out.report)
        }
        Some(p) => {
            let tree = LabelTree::from_json(&std::fs::read_to_string(p)?)
                .with_context(|| format!("reading tree {}", p.display()))?;
            let (model, log) = train_with_log(&x, g.adjacency(), &tree, &cfg.train)?;
            let embeddings = if cfg.downstream.concat_features {
                embed_concat(&model, &x)?
            } else {
                embed(&model, &x)?
            };
            let downstream = labels
                .as_deref()
                .map(|y| evaluate_features(&g, &embeddings, y, &cfg.downstream, cfg.seed))
                .transpose()?;
            let report = PipelineReport {
                mode: cfg.mode,
                n_nodes: g.n(),
                n_edges: g.edge_count(),
                d_feat: x.cols(),
                schedule: tree.schedule().to_vec(),
                levels: summarize_log(&log),
                downstream,
            };
            (model, embeddings, report)
        }
    };
    if let Some(p) = &a.model_out {
        io::save_model(p, &model)?;
    }
    if let Some(p) = &a.embeddings_out {
        io::save_dense(p, &embeddings)?;
    }
    emit(&a.common, "train", &cfg, &report)
}

// ------------------------------------------------------------------- embed

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct EmbedConfig {
    /// Append the input features to the embeddings.
    concat_features: bool,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[command(flatten)]
    common: Common,
    /// Model directory written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Encoder input features; identity features when absent.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    concat_features: Option<bool>,
    #[arg(long)]
    embeddings_out: Option<PathBuf>,
}

fn embed_cmd(a: EmbedArgs) -> Result<()> {
    let mut cfg: EmbedConfig = load_config(&a.common.config)?;
    set!(cfg.concat_features => a.concat_features);
    let model =
        io::load_model(&a.model).with_context(|| format!("reading model {}", a.model.display()))?;
    let x = match &a.features {
        Some(p) => read_features(p)?,
        None => FeatureMatrix::Sparse(identity_features(model.d_feat())?),
    };
    let e = if cfg.concat_features {
        embed_concat(&model, &x)?
    } else {
        embed(&model, &x)?
    };
    if let Some(p) = &a.embeddings_out {
        io::save_dense(p, &e)?;
    }
    let result =
        json!({ "rows": e.rows(), "cols": e.cols(), "extract_level": model.extract_level() });
    emit(&a.common, "embed", &cfg, &result)
}

// ----------------------------------------------------------------- predict

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct PredictConfig {
    /// Beam width; the model's training beam width when absent.
    beam_width: Option<usize>,
    top_k: usize,
    /// Rows to predict; all rows when empty.
    rows: Vec<usize>,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            beam_width: None,
            top_k: 10,
            rows: Vec::new(),
        }
    }
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Edge list; adds precision@k against the true neighborhoods.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    beam_width: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    rows: Option<Vec<usize>>,
}

fn predict(a: PredictArgs) -> Result<()> {
    let mut cfg: PredictConfig = load_config(&a.common.config)?;
    set!(cfg.top_k => a.top_k, cfg.rows => a.rows);
    if a.beam_width.is_some() {
        cfg.beam_width = a.beam_width;
    }
    let model =
        io::load_model(&a.model).with_context(|| format!("reading model {}", a.model.display()))?;
    let x = match &a.features {
        Some(p) => read_features(p)?,
        None => FeatureMatrix::Sparse(identity_features(model.d_feat())?),
    };
    let beam = cfg.beam_width.unwrap_or(model.config.beam_width);
    let rows: Vec<usize> = if cfg.rows.is_empty() {
        (0..x.rows()).collect()
    } else {
        cfg.rows.clone()
    };
    if let Some(&bad) = rows.iter().find(|&&r| r >= x.rows()) {
        bail!(nbrpred::Error::InvalidInput(format!(
            "row {bad} out of range for {} rows",
            x.rows()
        )));
    }
    let subset = match &x {
        FeatureMatrix::Dense(d) => FeatureMatrix::Dense(d.gather_rows(&rows)?),
        FeatureMatrix::Sparse(s) => FeatureMatrix::Sparse(s.gather_rows(&rows)?),
    };
    let preds = predict_all(&model, &subset, beam, cfg.top_k)?;
    let precision = match &a.graph {
        Some(p) => {
            if !model.tree.ends_at_labels() {
                bail!(nbrpred::Error::InvalidInput(
                    "precision needs a tree whose last level is the labels".into()
                ));
            }
            let g = read_graph(p, Some(x.rows()))?;
            let hits: usize = rows
                .iter()
                .zip(&preds)
                .map(|(&i, ps)| {
                    ps.iter()
                        .filter(|p| g.has_edge(i, p.cluster as usize))
                        .count()
                })
                .sum();
            Some(hits as f64 / (rows.len() * cfg.top_k).max(1) as f64)
        }
        None => None,
    };
    let predictions: Vec<Value> = rows
        .iter()
        .zip(&preds)
        .map(|(&i, ps)| {
            json!({ "row": i, "clusters": ps.iter().map(|p| p.cluster).collect::<Vec<_>>(),
                                "scores": ps.iter().map(|p| p.score).collect::<Vec<_>>() })
        })
        .collect();
    let result = json!({
        "beam_width": beam,
        "level": model.depth() - 1,
        "precision_at_k": precision,
        "predictions": predictions,
    });
    emit(&a.common, "predict", &cfg, &result)
}

// --------------------------------------------------------- eval-downstream

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct EvalConfig {
    downstream: DownstreamConfig,
    /// Seed of the random split.
    seed: u64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Node features to classify, e.g. embeddings from `train`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Edge list; needed only for SGC propagation.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// logreg or mlp.
    #[arg(long)]
    classifier: Option<ClassifierKind>,
    /// SGC propagation steps before classification.
    #[arg(long)]
    sgc_k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    valid_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn eval_downstream(a: EvalArgs) -> Result<()> {
    let mut cfg: EvalConfig = load_config(&a.common.config)?;
    let d = &mut cfg.downstream;
    set!(d.classifier.kind => a.classifier, d.sgc_k => a.sgc_k, d.classifier.epochs => a.epochs,
         d.classifier.hidden => a.hidden, d.classifier.learning_rate => a.learning_rate,
         d.train_frac => a.train_frac, d.valid_frac => a.valid_frac);
    if let Some(s) = a.seed {
        cfg.seed = s;
        cfg.downstream.classifier.seed = s;
    }
    let x = read_features(&a.features)?.to_dense();
    let y = read_labels(&a.labels, x.rows())?;
    let g = match &a.graph {
        Some(p) => read_graph(p, Some(x.rows()))?,
        None if cfg.downstream.sgc_k > 0 => bail!("--graph is required when sgc_k > 0"),
        None => Graph::from_edges(x.rows(), &[])?.0,
    };
    let report = evaluate_features(&g, &x, &y, &cfg.downstream, cfg.seed)?;
    emit(&a.common, "eval-downstream", &cfg, &report)
}

// ------------------------------------------------------- linkpred-baseline

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct LinkPredCmdConfig {
    model: LinkPredConfig,
    /// Fraction of edges held out for the AUC.
    test_frac: f64,
}

impl Default for LinkPredCmdConfig {
    fn default() -> Self {
        LinkPredCmdConfig {
            model: LinkPredConfig::default(),
            test_frac: 0.1,
        }
    }
}

#[derive(Args, Debug)]
struct LinkPredArgs {
    #[command(flatten)]
    common: Common,
    /// Edge list; required unless `--four-cycle` is given.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Use the built-in heterophilous 4-cycle and score all its pairs.
    #[arg(long)]
    four_cycle: bool,
    #[arg(long)]
    d_emb: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    test_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    embeddings_out: Option<PathBuf>,
}

fn linkpred(a: LinkPredArgs) -> Result<()> {
    let mut cfg: LinkPredCmdConfig = load_config(&a.common.config)?;
    set!(cfg.model.d_emb => a.d_emb, cfg.model.learning_rate => a.learning_rate,
         cfg.model.epochs => a.epochs, cfg.model.margin => a.margin, cfg.model.seed => a.seed,
         cfg.test_frac => a.test_frac);
    let (train_graph, x, pos, neg) = if a.four_cycle {
        let (g, x, _) = four_cycle_instance();
        let edges = g.edges();
        (g, FeatureMatrix::Dense(x), edges, vec![(0, 2), (1, 3)])
    } else {
        let p = a
            .graph
            .as_ref()
            .context("--graph is required unless --four-cycle is given")?;
        let g = read_graph(p, a.n)?;
        let x = features_or_identity(&a.features, g.n())?;
        let split = split_edges(&g, cfg.test_frac, cfg.model.seed)?;
        (split.train_graph, x, split.test_edges, split.test_non_edges)
    };
    let (model, log) = train_linkpred(&x, &train_graph, &cfg.model)?;
    let auc = link_auc(&model, &x, &pos, &neg)?;
    if let Some(p) = &a.embeddings_out {
        io::save_dense(p, &model.embed(&x)?)?;
    }
    let result = json!({
        "auc": auc,
        "test_edges": pos.len(),
        "test_non_edges": neg.len(),
        "epochs_run": log.epoch_losses.len(),
        "final_loss": log.epoch_losses.last(),
        "converged": log.converged,
    });
    emit(&a.common, "linkpred-baseline", &cfg, &result)
}

// --------------------------------------------------------- validate-theory

#[derive(Args, Debug)]
struct TheoryArgs {
    #[command(flatten)]
    common: Common,
    /// Node counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Number of seeds; runs seeds 0..N.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    hamming_pairs: Option<usize>,
}

fn theory(a: TheoryArgs) -> Result<()> {
    let mut cfg: TheoryConfig = load_config(&a.common.config)?;
    set!(cfg.ns => a.n, cfg.d => a.d, cfg.p => a.p, cfg.q => a.q, cfg.r => a.r, cfg.sigma => a.sigma,
         cfg.seeds => a.seeds.map(seeds), cfg.hamming_pairs => a.hamming_pairs);
    let report = validate_theory(&cfg)?;
    emit(
        &a.common,
        "validate-theory",
        &cfg,
        &json!({ "runs": report.runs, "summary": report.summary }),
    )
}

// ---------------------------------------------------------------- ablation

#[derive(Args, Debug)]
struct AblationArgs {
    #[command(flatten)]
    common: Common,
    /// Nodes in the text proxy graph.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    /// Probability that a word comes from the node's class vocabulary.
    #[arg(long)]
    signal: Option<f64>,
    /// Number of seeds; runs seeds 0..N.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<usize>>,
    #[arg(long)]
    steps_per_level: Option<usize>,
}

fn ablation(a: AblationArgs) -> Result<()> {
    let mut cfg: AblationConfig = load_config(&a.common.config)?;
    set!(cfg.text.n => a.n, cfg.text.p => a.p, cfg.text.q => a.q, cfg.text.signal => a.signal,
         cfg.seeds => a.seeds.map(seeds), cfg.schedule => a.schedule,
         cfg.train.steps_per_level => a.steps_per_level);
    let report = run_ablation(&cfg)?;
    eprintln!("{:<14} {:>10} {:>10}", "mode", "test", "valid");
    for row in &report.rows {
        eprintln!(
            "{:<14} {:>10.4} {:>10.4}",
            row.mode.as_str(),
            row.mean_test_accuracy,
            row.mean_valid_accuracy
        );
    }
    let result = json!({ "rows": report.rows, "best": report.best, "worst": report.worst });
    emit(&a.common, "ablation", &cfg, &result)
}
