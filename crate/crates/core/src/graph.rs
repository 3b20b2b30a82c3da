//! Undirected graphs and positive-instance feature aggregation (PIFA) label
//! embeddings.
//!
//! For neighborhood prediction the labels are the nodes themselves, so the
//! PIFA embedding of label `l` is the normalized sum of the features of the
//! nodes adjacent to `l`: one graph-convolution step followed by row
//! normalization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{
    row_l2_normalize_dense, row_l2_normalize_sparse, spgemm, spmm, FeatureMatrix, SparseRowMatrix,
};

/// Simple undirected graph stored as a binary symmetric adjacency matrix with
/// an empty diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    adjacency: SparseRowMatrix,
}

impl Graph {
    pub fn new(adjacency: SparseRowMatrix) -> Result<Graph> {
        if adjacency.rows() != adjacency.cols() {
            return Err(Error::DimensionMismatch {
                op: "graph adjacency",
                expected: adjacency.rows(),
                actual: adjacency.cols(),
            });
        }
        if adjacency.values().iter().any(|&v| v != 1.0) {
            return Err(Error::invalid("adjacency must be binary"));
        }
        for i in 0..adjacency.rows() {
            if adjacency.get(i, i) != 0.0 {
                return Err(Error::invalid(format!("self-loop at node {i}")));
            }
        }
        if !adjacency.is_symmetric() {
            return Err(Error::invalid("adjacency must be symmetric"));
        }
        Ok(Graph { adjacency })
    }

    /// Builds a graph from an undirected edge list. Duplicates (in either
    /// orientation) collapse into one edge; self-loops are dropped and
    /// counted in the second return value.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<(Graph, usize)> {
        let mut self_loops = 0;
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                self_loops += 1;
                continue;
            }
            rows[u].push(v as u32);
            rows[v].push(u as u32);
        }
        let adjacency = binary_rows_to_csr(n, rows);
        Ok((Graph { adjacency }, self_loops))
    }

    /// Wraps adjacency rows that are already known to be valid. Used by
    /// generators that construct symmetric rows directly.
    pub(crate) fn from_sorted_rows(n: usize, rows: Vec<Vec<u32>>) -> Graph {
        Graph {
            adjacency: binary_rows_to_csr(n, rows),
        }
    }

    pub fn n(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &SparseRowMatrix {
        &self.adjacency
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        self.adjacency.row(i).0
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency.row_nnz(i)
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n()).map(|i| self.degree(i)).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&(j as u32)).is_ok()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    /// Undirected edges as `(u, v)` with `u < v`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n())
            .flat_map(|u| {
                self.neighbors(u)
                    .iter()
                    .filter(move |&&v| (v as usize) > u)
                    .map(move |&v| (u, v as usize))
            })
            .collect()
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        check_permutation(perm, self.n())?;
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); self.n()];
        for i in 0..self.n() {
            rows[perm[i]] = self
                .neighbors(i)
                .iter()
                .map(|&j| perm[j as usize] as u32)
                .collect();
        }
        Ok(Graph::from_sorted_rows(self.n(), rows))
    }
}

fn binary_rows_to_csr(n: usize, mut rows: Vec<Vec<u32>>) -> SparseRowMatrix {
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let total: usize = rows.iter().map(Vec::len).sum();
    let mut cols = Vec::with_capacity(total);
    for r in rows.iter_mut() {
        r.sort_unstable();
        r.dedup();
        cols.extend_from_slice(r);
        offsets.push(cols.len());
    }
    let values = vec![1.0; cols.len()];
    SparseRowMatrix::new(n, n, offsets, cols, values).expect("sorted binary rows form valid CSR")
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::DimensionMismatch {
            op: "permutation",
            expected: n,
            actual: perm.len(),
        });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::invalid("not a permutation"));
        }
        seen[p] = true;
    }
    Ok(())
}

/// PIFA label embeddings: `row_l2_normalize(A · features)`.
///
/// Sparse features give a sparse result, dense features a dense one. Nodes
/// without neighbors get zero rows.
pub fn pifa(graph: &Graph, features: &FeatureMatrix) -> Result<FeatureMatrix> {
    if features.rows() != graph.n() {
        return Err(Error::DimensionMismatch {
            op: "pifa",
            expected: graph.n(),
            actual: features.rows(),
        });
    }
    Ok(match features {
        FeatureMatrix::Dense(d) => {
            FeatureMatrix::Dense(row_l2_normalize_dense(&spmm(graph.adjacency(), d)?))
        }
        FeatureMatrix::Sparse(s) => {
            FeatureMatrix::Sparse(row_l2_normalize_sparse(&spgemm(graph.adjacency(), s)?))
        }
    })
}

/// PIFA over identity features, i.e. the row-normalized adjacency. Computed
/// directly without materializing the identity product.
pub fn identity_pifa(graph: &Graph) -> SparseRowMatrix {
    row_l2_normalize_sparse(graph.adjacency())
}

/// Which label features drive the hierarchical clustering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusteringMode {
    /// PIFA over the text features (the full method).
    TfidfPifa,
    /// PIFA over identity features: normalized neighborhood vectors only.
    IdentityPifa,
    /// Text features of each node, without graph aggregation.
    TfidfOnly,
    /// Random balanced clustering with the same cluster sizes.
    Random,
}

impl ClusteringMode {
    pub const ALL: [ClusteringMode; 4] = [
        ClusteringMode::TfidfPifa,
        ClusteringMode::IdentityPifa,
        ClusteringMode::TfidfOnly,
        ClusteringMode::Random,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClusteringMode::TfidfPifa => "tfidf_pifa",
            ClusteringMode::IdentityPifa => "identity_pifa",
            ClusteringMode::TfidfOnly => "tfidf_only",
            ClusteringMode::Random => "random",
        }
    }
}

impl fmt::Display for ClusteringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClusteringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClusteringMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown clustering mode '{s}'")))
    }
}

/// Label features for the tree builder, or the instruction to cluster at
/// random.
#[derive(Clone, Debug, PartialEq)]
pub enum ClusteringInput {
    Features(FeatureMatrix),
    Random,
}

pub fn clustering_input(
    graph: &Graph,
    text_features: &FeatureMatrix,
    mode: ClusteringMode,
) -> Result<ClusteringInput> {
    if text_features.rows() != graph.n() {
        return Err(Error::DimensionMismatch {
            op: "clustering_input",
            expected: graph.n(),
            actual: text_features.rows(),
        });
    }
    Ok(match mode {
        ClusteringMode::TfidfPifa => ClusteringInput::Features(pifa(graph, text_features)?),
        ClusteringMode::IdentityPifa => {
            ClusteringInput::Features(FeatureMatrix::Sparse(identity_pifa(graph)))
        }
        ClusteringMode::TfidfOnly => ClusteringInput::Features(text_features.clone()),
        ClusteringMode::Random => ClusteringInput::Random,
    })
}
