use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::sparse::{spmm, DenseMatrix, SparseRowMatrix};

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn normalized_adjacency(graph: &Graph) -> SparseRowMatrix {
    let n = graph.n();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / ((graph.degree(i) + 1) as f64).sqrt())
        .collect();
    let rows = (0..n).map(|i| {
        let mut row: Vec<(u32, f64)> = graph
            .neighbors(i)
            .iter()
            .map(|&j| (j, inv_sqrt[i] * inv_sqrt[j as usize]))
            .collect();
        let at = row.partition_point(|&(j, _)| (j as usize) < i);
        row.insert(at, (i as u32, inv_sqrt[i] * inv_sqrt[i]));
        row
    });
    SparseRowMatrix::from_rows(n, rows).expect("normalized adjacency rows are sorted")
}

/// `Ŝ^k x`.
pub fn sgc_features(graph: &Graph, x: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    if x.rows() != graph.n() {
        return Err(Error::DimensionMismatch {
            op: "sgc_features",
            expected: graph.n(),
            actual: x.rows(),
        });
    }
    let s = normalized_adjacency(graph);
    let mut out = x.clone();
    for _ in 0..k {
        out = spmm(&s, &out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::norm2;
    use proptest::prelude::*;

    #[test]
    fn zero_steps_is_identity() {
        let (g, _) = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(sgc_features(&g, &x, 0).unwrap(), x);
    }

    #[test]
    fn isolated_node_unchanged() {
        let (g, _) = Graph::from_edges(1, &[]).unwrap();
        let x = DenseMatrix::from_rows(&[vec![0.3, -2.0]]).unwrap();
        for k in 0..5 {
            assert_eq!(sgc_features(&g, &x, k).unwrap(), x);
        }
    }

    #[test]
    fn path_graph_first_row() {
        let (g, _) = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let out = sgc_features(&g, &DenseMatrix::identity(3), 1).unwrap();
        assert!((out.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((out.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert_eq!(out.get(0, 2), 0.0);
    }

    fn arb_graph() -> impl Strategy<Value = Graph> {
        (1usize..15).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..40).prop_map(move |edges| {
                let edges: Vec<_> = edges.into_iter().filter(|(a, b)| a != b).collect();
                Graph::from_edges(n, &edges).unwrap().0
            })
        })
    }

    proptest! {
        #[test]
        fn operator_symmetric_nonnegative_contractive(g in arb_graph(), seed in 0u64..1000) {
            let s = normalized_adjacency(&g);
            prop_assert!(s.values().iter().all(|&v| v >= 0.0));
            prop_assert_eq!(s.transpose(), s.clone());
            let n = g.n();
            let x: Vec<f64> = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 97) as f64 - 48.0).collect();
            let xm = DenseMatrix::new(n, 1, x.clone()).unwrap();
            for k in 0..=8 {
                let y = sgc_features(&g, &xm, k).unwrap();
                prop_assert!(norm2(y.data()) <= norm2(&x) * 1.0001);
            }
        }
    }
}
