//! Structural invariants shared by the property tests and the acceptance
//! runner.

#![allow(dead_code)]

use nbrpred::csbm::{generate, CsbmParams};
use nbrpred::io;
use nbrpred::matcher::{train, TrainConfig};
use nbrpred::sparse::{DenseMatrix, FeatureMatrix, SparseRowMatrix};
use nbrpred::tree::{build_tree, cluster_targets, random_tree};
use nbrpred::{Graph, LabelTree};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

pub type Check = Result<(), TestCaseError>;

/// A label count with a valid schedule: power-of-two refinements, optionally
/// ending at the label level.
pub fn arb_schedule() -> impl Strategy<Value = (usize, Vec<usize>)> {
    (
        4usize..300,
        1u32..3,
        proptest::collection::vec(1u32..3, 0..3),
        any::<bool>(),
    )
        .prop_filter_map(
            "schedule must fit under the label count",
            |(l, first, steps, to_labels)| {
                let mut k = 1usize << first;
                if k > l {
                    return None;
                }
                let mut s = vec![k];
                for st in steps {
                    let next = k << st;
                    if next > l {
                        break;
                    }
                    k = next;
                    s.push(k);
                }
                if to_labels && *s.last().unwrap() < l {
                    s.push(l);
                }
                Some((l, s))
            },
        )
}

pub fn arb_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (1usize..max_n).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 0..4 * n)
            .prop_map(move |e| Graph::from_edges(n, &e).unwrap().0)
    })
}

pub fn features_for(l: usize, d: usize, seed: u64) -> FeatureMatrix {
    let data: Vec<f64> = (0..l * d)
        .map(|k| {
            let h = (k as u64 ^ seed)
                .wrapping_mul(0x9E3779B97F4A7C15)
                .rotate_left(17);
            (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect();
    FeatureMatrix::Dense(DenseMatrix::new(l, d, data).unwrap())
}

/// Every level partitions the labels, every level refines the one above,
/// and sibling clusters differ in size by at most one.
pub fn check_tree(tree: &LabelTree) -> Check {
    let l = tree.n_labels();
    for t in 0..tree.depth() {
        let members = tree.cluster_members(t).unwrap();
        prop_assert_eq!(members.len(), tree.level_size(t));
        prop_assert!(members.iter().all(|m| !m.is_empty()));
        prop_assert_eq!(members.iter().map(Vec::len).sum::<usize>(), l);
        if t + 1 < tree.depth() {
            let here = tree.membership(t).unwrap();
            let below = tree.membership(t + 1).unwrap();
            let parents = tree.parents(t + 1);
            for lab in 0..l {
                prop_assert_eq!(here[lab], parents[below[lab] as usize]);
            }
            let below_members = tree.cluster_members(t + 1).unwrap();
            for c in 0..tree.level_size(t) {
                let sizes: Vec<usize> = tree
                    .children(t, c)
                    .iter()
                    .map(|&k| below_members[k as usize].len())
                    .collect();
                let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
                prop_assert!(
                    hi - lo <= 1,
                    "children of {}/{} have sizes {:?}",
                    t,
                    c,
                    sizes
                );
            }
        }
    }
    let top = tree.cluster_members(0).unwrap();
    let (lo, hi) = (
        top.iter().map(Vec::len).min().unwrap(),
        top.iter().map(Vec::len).max().unwrap(),
    );
    prop_assert!(hi - lo <= 1);
    Ok(())
}

/// `targets(t)[i, c] = 1` exactly when some child of `c` is a target at `t + 1`.
pub fn check_coarsening(y: &SparseRowMatrix, tree: &LabelTree) -> Check {
    for t in 0..tree.depth() {
        let here = cluster_targets(y, tree, t).unwrap();
        prop_assert!(here.values().iter().all(|&v| v == 1.0));
        if t + 1 < tree.depth() {
            let below = cluster_targets(y, tree, t + 1).unwrap();
            let parents = tree.parents(t + 1);
            for i in 0..y.rows() {
                let mut lifted: Vec<u32> = below
                    .row(i)
                    .0
                    .iter()
                    .map(|&c| parents[c as usize])
                    .collect();
                lifted.sort_unstable();
                lifted.dedup();
                prop_assert_eq!(here.row(i).0, lifted.as_slice());
            }
        }
    }
    Ok(())
}

pub fn check_adjacency(g: &Graph) -> Check {
    let a = g.adjacency();
    prop_assert!(a.is_symmetric());
    prop_assert!(a.values().iter().all(|&v| v == 1.0));
    for i in 0..g.n() {
        prop_assert!(!g.has_edge(i, i));
    }
    prop_assert_eq!(a.nnz(), 2 * g.edge_count());
    Ok(())
}

pub fn check_normalization(x: &FeatureMatrix) -> Check {
    let once = x.row_l2_normalize();
    let twice = once.row_l2_normalize();
    let (a, b) = (once.to_dense(), twice.to_dense());
    for (u, v) in a.data().iter().zip(b.data()) {
        prop_assert!((u - v).abs() <= 1e-12);
    }
    for i in 0..once.rows() {
        let n = once.row_norm(i);
        prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
    }
    Ok(())
}

pub fn check_round_trips(g: &Graph, x: &DenseMatrix, tree: &LabelTree) -> Check {
    let q = DenseMatrix::new(
        x.rows(),
        x.cols(),
        x.data().iter().map(|&v| v as f32 as f64).collect(),
    )
    .unwrap();
    prop_assert_eq!(
        &io::decode_dense(&io::encode_dense(x).unwrap()).unwrap(),
        &q
    );
    let s = SparseRowMatrix::from_dense(&q);
    prop_assert_eq!(
        &io::decode_sparse(&io::encode_sparse(&s).unwrap()).unwrap(),
        &s
    );
    let back = io::parse_edge_list(&io::format_edge_list(g), Some(g.n())).unwrap();
    prop_assert_eq!(back.graph.adjacency(), g.adjacency());
    prop_assert_eq!(
        &LabelTree::from_json(&tree.to_json().unwrap()).unwrap(),
        tree
    );
    Ok(())
}

/// Saves and reloads a small trained model; weights come back at f32
/// precision and a second round trip is exact.
pub fn check_model_round_trip(seed: u64) -> Check {
    let inst = generate(&CsbmParams::new(24, 3, 0.3, 0.1, 1.0, 1.0, seed)).unwrap();
    let tree = random_tree(24, &[2, 8, 24], seed).unwrap();
    let cfg = TrainConfig {
        d_emb: 4,
        steps_per_level: 5,
        batch_size: 4,
        seed,
        ..Default::default()
    };
    let model = train(
        &FeatureMatrix::Dense(inst.features.clone()),
        inst.graph.adjacency(),
        &tree,
        &cfg,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    io::save_model(dir.path(), &model).unwrap();
    let back = io::load_model(dir.path()).unwrap();
    prop_assert_eq!(&back.tree, &model.tree);
    prop_assert_eq!(&back.config, &model.config);
    for (a, b) in back.encoders.iter().zip(&model.encoders) {
        for (u, v) in a.weight.data().iter().zip(b.weight.data()) {
            prop_assert_eq!(*u, *v as f32 as f64);
        }
    }
    let dir2 = tempfile::tempdir().unwrap();
    io::save_model(dir2.path(), &back).unwrap();
    prop_assert_eq!(io::load_model(dir2.path()).unwrap(), back);
    Ok(())
}

/// Runs `check` over `cases` generated inputs; returns the failure message.
pub fn run_property<S: Strategy>(
    cases: u32,
    strategy: S,
    check: impl Fn(S::Value) -> Check,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, check).map_err(|e| e.to_string())
}

pub fn tree_property(cases: u32) -> Result<(), String> {
    run_property(
        cases,
        (arb_schedule(), any::<u64>(), any::<bool>()),
        |((l, s), seed, random)| {
            let tree = if random {
                random_tree(l, &s, seed).unwrap()
            } else {
                build_tree(&features_for(l, 5, seed), &s, seed).unwrap()
            };
            check_tree(&tree)
        },
    )
}

pub fn coarsening_property(cases: u32) -> Result<(), String> {
    run_property(cases, (arb_schedule(), any::<u64>()), |((l, s), seed)| {
        let tree = random_tree(l, &s, seed).unwrap();
        let inst = generate(&CsbmParams::new(l + l % 2, 2, 0.05, 0.02, 1.0, 1.0, seed)).unwrap();
        let y = inst
            .graph
            .adjacency()
            .gather_rows(&(0..l).collect::<Vec<_>>())
            .unwrap();
        let y = SparseRowMatrix::from_triplets(
            l,
            l,
            (0..l)
                .flat_map(|i| {
                    let cols: Vec<u32> = y.row(i).0.to_vec();
                    cols.into_iter()
                        .filter(|&c| (c as usize) < l)
                        .map(move |c| (i, c as usize, 1.0))
                })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        check_coarsening(&y, &tree)
    })
}

pub fn adjacency_property(cases: u32) -> Result<(), String> {
    run_property(
        cases,
        (arb_graph(40), 2usize..60, any::<u64>()),
        |(g, half, seed)| {
            check_adjacency(&g)?;
            let inst = generate(&CsbmParams::new(2 * half, 2, 0.3, 0.1, 1.0, 1.0, seed)).unwrap();
            check_adjacency(&inst.graph)
        },
    )
}

pub fn normalization_property(cases: u32) -> Result<(), String> {
    run_property(
        cases,
        (1usize..30, 1usize..10, any::<u64>()),
        |(n, d, seed)| {
            let x = features_for(n, d, seed);
            check_normalization(&x)?;
            check_normalization(&FeatureMatrix::Sparse(x.to_sparse()))
        },
    )
}

pub fn round_trip_property(cases: u32) -> Result<(), String> {
    run_property(
        cases,
        (arb_graph(30), arb_schedule(), any::<u64>()),
        |(g, (l, s), seed)| {
            let x = features_for(g.n(), 3, seed).to_dense();
            check_round_trips(&g, &x, &random_tree(l, &s, seed).unwrap())
        },
    )?;
    run_property(4, any::<u64>(), check_model_round_trip)
}
