//! On-disk formats: edge lists, dense and sparse binary matrices, corpora,
//! label files and trained model directories.
//!
//! Binary matrices are little-endian. Dense files hold the magic `GIANTDNS`,
//! `rows` and `cols` as `u64`, then row-major `f32` values. Sparse files hold
//! `GIANTSPR`, `rows`, `cols`, `nnz` as `u64`, then `rows + 1` row offsets and
//! `nnz` column indices as `u64`, then `nnz` `f32` values.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matcher::{EncoderModel, MatcherModel, RankerLevel, TrainConfig};
use crate::sparse::{DenseMatrix, FeatureMatrix, SparseRowMatrix};
use crate::tree::LabelTree;

pub const DENSE_MAGIC: &[u8; 8] = b"GIANTDNS";
pub const SPARSE_MAGIC: &[u8; 8] = b"GIANTSPR";

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp: PathBuf = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!(
                "truncated file while reading {what}"
            ))),
        }
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?)
            .map_err(|_| Error::Format(format!("{what} exceeds address space")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Format(format!("{what} too large")))?,
            what,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let m = self.take(8, "magic")?;
        if m != expected {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn f32_checked(v: f64) -> Result<f32> {
    let x = v as f32;
    if !x.is_finite() {
        return Err(Error::invalid(format!("value {v} does not fit in f32")));
    }
    Ok(x)
}

pub fn encode_dense(m: &DenseMatrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(24 + 4 * m.data().len());
    out.extend_from_slice(DENSE_MAGIC);
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for &v in m.data() {
        out.extend_from_slice(&f32_checked(v)?.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_dense(bytes: &[u8]) -> Result<DenseMatrix> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.magic(DENSE_MAGIC)?;
    let rows = r.usize("rows")?;
    let cols = r.usize("cols")?;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Format("dense shape overflows".into()))?;
    let data = r.f32s(len, "dense values")?;
    r.finish()?;
    DenseMatrix::new(rows, cols, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn encode_sparse(m: &SparseRowMatrix) -> Result<Vec<u8>> {
    let nnz = m.nnz();
    let mut out = Vec::with_capacity(32 + 8 * (m.rows() + 1) + 12 * nnz);
    out.extend_from_slice(SPARSE_MAGIC);
    for v in [m.rows(), m.cols(), nnz] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for &o in m.row_offsets() {
        out.extend_from_slice(&(o as u64).to_le_bytes());
    }
    for &c in m.col_indices() {
        out.extend_from_slice(&(c as u64).to_le_bytes());
    }
    for &v in m.values() {
        out.extend_from_slice(&f32_checked(v)?.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_sparse(bytes: &[u8]) -> Result<SparseRowMatrix> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.magic(SPARSE_MAGIC)?;
    let rows = r.usize("rows")?;
    let cols = r.usize("cols")?;
    let nnz = r.usize("nnz")?;
    let n_off = rows
        .checked_add(1)
        .ok_or_else(|| Error::Format("row count overflows".into()))?;
    // Check the declared lengths against the buffer before allocating.
    let needed = n_off
        .checked_mul(8)
        .and_then(|a| nnz.checked_mul(12).and_then(|b| a.checked_add(b)));
    if needed.is_none_or(|n| n > bytes.len() - r.pos) {
        return Err(Error::Format("truncated sparse file".into()));
    }
    let mut offsets = Vec::with_capacity(n_off);
    for _ in 0..n_off {
        offsets.push(r.usize("row offset")?);
    }
    let mut indices = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let c = r.u64("column index")?;
        indices.push(
            u32::try_from(c).map_err(|_| Error::Format(format!("column index {c} too large")))?,
        );
    }
    let values = r.f32s(nnz, "sparse values")?;
    r.finish()?;
    SparseRowMatrix::new(rows, cols, offsets, indices, values)
        .map_err(|e| Error::Format(e.to_string()))
}

pub fn save_dense(path: &Path, m: &DenseMatrix) -> Result<()> {
    write_atomic(path, &encode_dense(m)?)
}

pub fn load_dense(path: &Path) -> Result<DenseMatrix> {
    decode_dense(&fs::read(path)?)
}

pub fn save_sparse(path: &Path, m: &SparseRowMatrix) -> Result<()> {
    write_atomic(path, &encode_sparse(m)?)
}

pub fn load_sparse(path: &Path) -> Result<SparseRowMatrix> {
    decode_sparse(&fs::read(path)?)
}

pub fn save_features(path: &Path, m: &FeatureMatrix) -> Result<()> {
    match m {
        FeatureMatrix::Dense(d) => save_dense(path, d),
        FeatureMatrix::Sparse(s) => save_sparse(path, s),
    }
}

/// Loads either binary layout, chosen by the file's magic.
pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path)?;
    match bytes.get(..8) {
        Some(m) if m == DENSE_MAGIC => decode_dense(&bytes).map(FeatureMatrix::Dense),
        Some(m) if m == SPARSE_MAGIC => decode_sparse(&bytes).map(FeatureMatrix::Sparse),
        _ => Err(Error::Format(format!(
            "{} is not a feature matrix file",
            path.display()
        ))),
    }
}

/// Parsed edge list with the number of self-loops that were dropped.
#[derive(Clone, Debug)]
pub struct EdgeList {
    pub graph: Graph,
    pub self_loops: usize,
}

/// Parses `u<TAB>v` lines (0-indexed). Blank lines and lines starting with
/// `#` are ignored. With `n = None` the node count is the largest id plus one.
pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<EdgeList> {
    let mut edges = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let mut parts = s.split('\t');
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a.trim(), b.trim()),
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: "expected two tab-separated node ids".into(),
                })
            }
        };
        let parse = |t: &str| {
            t.parse::<u32>()
                .map(|v| v as usize)
                .map_err(|_| Error::Parse {
                    line,
                    msg: format!("'{t}' is not a node id"),
                })
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if let Some(n) = n {
            if u >= n || v >= n {
                return Err(Error::Parse {
                    line,
                    msg: format!("node id {} out of range for {n} nodes", u.max(v)),
                });
            }
        }
        edges.push((u, v));
    }
    let n = n.unwrap_or_else(|| edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0));
    let (graph, self_loops) = Graph::from_edges(n, &edges)?;
    Ok(EdgeList { graph, self_loops })
}

pub fn load_graph(path: &Path, n: Option<usize>) -> Result<EdgeList> {
    let list = parse_edge_list(&fs::read_to_string(path)?, n)?;
    if list.self_loops > 0 {
        log::warn!("{}: dropped {} self-loops", path.display(), list.self_loops);
    }
    Ok(list)
}

/// One `u<TAB>v` line per undirected edge with `u < v`.
pub fn format_edge_list(graph: &Graph) -> String {
    let mut s = String::new();
    for (u, v) in graph.edges() {
        s.push_str(&format!("{u}\t{v}\n"));
    }
    s
}

pub fn save_graph(path: &Path, graph: &Graph) -> Result<()> {
    write_atomic(path, format_edge_list(graph).as_bytes())
}

/// One document per line.
pub fn load_corpus(path: &Path) -> Result<Vec<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::to_owned)
        .collect())
}

pub fn save_corpus(path: &Path, docs: &[String]) -> Result<()> {
    if let Some(i) = docs.iter().position(|d| d.contains('\n')) {
        return Err(Error::invalid(format!("document {i} contains a newline")));
    }
    let mut s = docs.join("\n");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// One non-negative integer class per line.
pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.trim().parse::<usize>().map_err(|_| Error::Parse {
                line: k + 1,
                msg: format!("'{}' is not a class label", l.trim()),
            })
        })
        .collect()
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    parse_labels(&fs::read_to_string(path)?)
}

pub fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let s: String = labels.iter().map(|l| format!("{l}\n")).collect();
    write_atomic(path, s.as_bytes())
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// `metadata.json` of a model directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub format_version: u32,
    pub d_feat: usize,
    pub d_emb: usize,
    pub schedule: Vec<usize>,
    pub n_labels: usize,
    /// Encoder blobs are stored feature-major (`d_feat × d_emb`).
    pub encoder_layout: String,
    pub config: TrainConfig,
}

const MODEL_FORMAT_VERSION: u32 = 1;

/// Writes `metadata.json`, `tree.json`, `encoder_{t}.bin` and `ranker_{t}.bin`.
pub fn save_model(dir: &Path, model: &MatcherModel) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (t, (enc, lvl)) in model.encoders.iter().zip(&model.levels).enumerate() {
        save_dense(&dir.join(format!("encoder_{t}.bin")), &enc.weight)?;
        save_dense(&dir.join(format!("ranker_{t}.bin")), &lvl.weight)?;
    }
    write_atomic(&dir.join("tree.json"), model.tree.to_json()?.as_bytes())?;
    let meta = ModelMetadata {
        format_version: MODEL_FORMAT_VERSION,
        d_feat: model.d_feat(),
        d_emb: model.d_emb(),
        schedule: model.tree.schedule().to_vec(),
        n_labels: model.tree.n_labels(),
        encoder_layout: "feature_major".into(),
        config: model.config.clone(),
    };
    save_json(&dir.join("metadata.json"), &meta)
}

pub fn load_model(dir: &Path) -> Result<MatcherModel> {
    let meta: ModelMetadata = load_json(&dir.join("metadata.json"))?;
    if meta.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported model format {}",
            meta.format_version
        )));
    }
    let tree = LabelTree::from_json(&fs::read_to_string(dir.join("tree.json"))?)?;
    if tree.schedule() != meta.schedule.as_slice() || tree.n_labels() != meta.n_labels {
        return Err(Error::Format(
            "tree.json disagrees with metadata.json".into(),
        ));
    }
    let mut encoders = Vec::with_capacity(tree.depth());
    let mut levels = Vec::with_capacity(tree.depth());
    for t in 0..tree.depth() {
        let e = load_dense(&dir.join(format!("encoder_{t}.bin")))?;
        if (e.rows(), e.cols()) != (meta.d_feat, meta.d_emb) {
            return Err(Error::Format(format!(
                "encoder_{t}.bin has the wrong shape"
            )));
        }
        encoders.push(EncoderModel { weight: e });
        levels.push(RankerLevel {
            weight: load_dense(&dir.join(format!("ranker_{t}.bin")))?,
        });
    }
    MatcherModel::new(encoders, levels, tree, meta.config).map_err(|e| Error::Format(e.to_string()))
}
