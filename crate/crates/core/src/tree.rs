//! Hierarchical label trees built by recursive balanced spherical 2-means,
//! and the coarse-to-fine targets derived from them.
//!
//! A tree has levels `0..depth`; level `t` partitions the `L` labels into
//! `schedule[t]` clusters. When the last entry of the schedule equals `L` the
//! last level is the label level itself: cluster `l` there is label `l`.
//!
//! Every cluster level is reached from the previous one by rounds of binary
//! splits, so the ratio between consecutive cluster counts must be a power of
//! two. Each binary split hands `⌈m/2⌉` members to the first child and
//! `⌊m/2⌋` to the second.

use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ClusteringInput;
use crate::rng::{self, streams};
use crate::sparse::{normalize_in_place, FeatureMatrix, SparseRowMatrix};

/// Maximum number of candidates examined when seeding a 2-means split.
pub const INIT_CANDIDATES: usize = 32;
/// Lloyd iteration cap per binary split.
pub const MAX_LLOYD_ITERS: usize = 10;
/// Relative objective change below which a split stops early.
pub const LLOYD_TOL: f64 = 1e-4;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TreeRepr {
    schedule: Vec<usize>,
    n_labels: usize,
    /// `parents[t - 1][c]` is the level-`t - 1` parent of level-`t` cluster `c`.
    parents: Vec<Vec<u32>>,
    /// Deepest-level cluster of every label.
    label_to_cluster: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeRepr", into = "TreeRepr")]
pub struct LabelTree {
    schedule: Vec<usize>,
    n_labels: usize,
    parents: Vec<Vec<u32>>,
    label_to_cluster: Vec<u32>,
    /// `children[t][c]`: level-`t + 1` clusters under level-`t` cluster `c`,
    /// for `t < depth - 1`.
    children: Vec<Vec<Vec<u32>>>,
    /// Labels under each deepest-level cluster.
    leaf_labels: Vec<Vec<u32>>,
}

impl TryFrom<TreeRepr> for LabelTree {
    type Error = Error;

    fn try_from(r: TreeRepr) -> Result<Self> {
        LabelTree::from_parts(r.schedule, r.n_labels, r.parents, r.label_to_cluster)
    }
}

impl From<LabelTree> for TreeRepr {
    fn from(t: LabelTree) -> Self {
        TreeRepr {
            schedule: t.schedule,
            n_labels: t.n_labels,
            parents: t.parents,
            label_to_cluster: t.label_to_cluster,
        }
    }
}

impl LabelTree {
    /// Assembles and validates a tree from its parent arrays.
    pub fn from_parts(
        schedule: Vec<usize>,
        n_labels: usize,
        parents: Vec<Vec<u32>>,
        label_to_cluster: Vec<u32>,
    ) -> Result<LabelTree> {
        check_schedule_shape(&schedule, n_labels)?;
        let depth = schedule.len();
        if parents.len() != depth - 1 {
            return Err(Error::invalid(format!(
                "expected {} parent arrays, got {}",
                depth - 1,
                parents.len()
            )));
        }
        let mut children = Vec::with_capacity(depth - 1);
        for t in 1..depth {
            let par = &parents[t - 1];
            if par.len() != schedule[t] {
                return Err(Error::invalid(format!(
                    "level {t} parent array has {} entries, expected {}",
                    par.len(),
                    schedule[t]
                )));
            }
            let mut ch = vec![Vec::new(); schedule[t - 1]];
            for (c, &p) in par.iter().enumerate() {
                if p as usize >= schedule[t - 1] {
                    return Err(Error::invalid(format!("level {t} parent {p} out of range")));
                }
                ch[p as usize].push(c as u32);
            }
            if ch.iter().any(Vec::is_empty) {
                return Err(Error::invalid(format!(
                    "level {} has a childless cluster",
                    t - 1
                )));
            }
            children.push(ch);
        }
        if label_to_cluster.len() != n_labels {
            return Err(Error::invalid(
                "label_to_cluster length must equal the label count",
            ));
        }
        let last = schedule[depth - 1];
        let mut leaf_labels = vec![Vec::new(); last];
        for (l, &c) in label_to_cluster.iter().enumerate() {
            if c as usize >= last {
                return Err(Error::invalid(format!(
                    "label {l} mapped to missing cluster {c}"
                )));
            }
            leaf_labels[c as usize].push(l as u32);
        }
        if leaf_labels.iter().any(Vec::is_empty) {
            return Err(Error::invalid("deepest level has an empty cluster"));
        }
        if last == n_labels
            && label_to_cluster
                .iter()
                .enumerate()
                .any(|(l, &c)| c as usize != l)
        {
            return Err(Error::invalid("label level must map every label to itself"));
        }
        Ok(LabelTree {
            schedule,
            n_labels,
            parents,
            label_to_cluster,
            children,
            leaf_labels,
        })
    }

    pub fn schedule(&self) -> &[usize] {
        &self.schedule
    }

    pub fn depth(&self) -> usize {
        self.schedule.len()
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn level_size(&self, level: usize) -> usize {
        self.schedule[level]
    }

    /// True when the deepest level is the label level.
    pub fn ends_at_labels(&self) -> bool {
        *self.schedule.last().unwrap() == self.n_labels
    }

    /// Parent at level `level - 1` of each level-`level` cluster (`level >= 1`).
    pub fn parents(&self, level: usize) -> &[u32] {
        &self.parents[level - 1]
    }

    /// Children (level `level + 1` clusters) of cluster `c` at `level`.
    pub fn children(&self, level: usize, c: usize) -> &[u32] {
        &self.children[level][c]
    }

    pub fn label_to_cluster(&self) -> &[u32] {
        &self.label_to_cluster
    }

    /// Labels under each deepest-level cluster.
    pub fn leaf_labels(&self) -> &[Vec<u32>] {
        &self.leaf_labels
    }

    /// Cluster of every label at `level`.
    pub fn membership(&self, level: usize) -> Result<Vec<u32>> {
        if level >= self.depth() {
            return Err(Error::invalid(format!(
                "level {level} out of range for depth {}",
                self.depth()
            )));
        }
        let mut m = self.label_to_cluster.clone();
        for t in (level + 1..self.depth()).rev() {
            let par = &self.parents[t - 1];
            m.iter_mut().for_each(|c| *c = par[*c as usize]);
        }
        Ok(m)
    }

    /// Labels of every cluster at `level`, each list ascending.
    pub fn cluster_members(&self, level: usize) -> Result<Vec<Vec<u32>>> {
        let m = self.membership(level)?;
        let mut out = vec![Vec::new(); self.schedule[level]];
        for (l, &c) in m.iter().enumerate() {
            out[c as usize].push(l as u32);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<LabelTree> {
        Ok(serde_json::from_str(s)?)
    }
}

fn check_schedule_shape(schedule: &[usize], n_labels: usize) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::invalid("schedule must have at least one level"));
    }
    if n_labels == 0 {
        return Err(Error::invalid("tree needs at least one label"));
    }
    if schedule[0] == 0 {
        return Err(Error::invalid("cluster counts must be positive"));
    }
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("cluster counts must strictly increase"));
    }
    if *schedule.last().unwrap() > n_labels {
        return Err(Error::invalid(format!(
            "schedule {schedule:?} has more clusters than the {n_labels} labels"
        )));
    }
    Ok(())
}

/// Number of binary-split rounds needed to reach each cluster level, or
/// `None` for a trailing label level.
fn split_rounds(schedule: &[usize], n_labels: usize) -> Result<Vec<Option<u32>>> {
    check_schedule_shape(schedule, n_labels)?;
    let mut prev = 1usize;
    let mut rounds = Vec::with_capacity(schedule.len());
    for (t, &k) in schedule.iter().enumerate() {
        if t + 1 == schedule.len() && k == n_labels {
            rounds.push(None);
            break;
        }
        if k % prev != 0 || !(k / prev).is_power_of_two() {
            return Err(Error::invalid(format!(
                "cluster count {k} is not a power-of-two multiple of {prev}"
            )));
        }
        rounds.push(Some((k / prev).trailing_zeros()));
        prev = k;
    }
    Ok(rounds)
}

/// Runs the level schedule with an arbitrary balanced bisection rule.
/// `split(split_id, members)` must return the first child's members; the
/// rest go to the second child.
fn build_with<F>(n_labels: usize, schedule: &[usize], split: F) -> Result<LabelTree>
where
    F: Fn(u64, &[u32]) -> Vec<u32> + Sync,
{
    let rounds = split_rounds(schedule, n_labels)?;
    let mut clusters: Vec<Vec<u32>> = vec![(0..n_labels as u32).collect()];
    let mut parents: Vec<Vec<u32>> = Vec::new();
    let mut split_base: u64 = 1;
    let mut label_to_cluster: Option<Vec<u32>> = None;
    for (t, r) in rounds.iter().enumerate() {
        match r {
            Some(r) => {
                let before = clusters.len();
                for _ in 0..*r {
                    let base = split_base;
                    clusters = clusters
                        .par_iter()
                        .enumerate()
                        .flat_map_iter(|(i, members)| {
                            let first = split(base + i as u64, members);
                            let mut in_first = first.clone();
                            in_first.sort_unstable();
                            let second: Vec<u32> = members
                                .iter()
                                .copied()
                                .filter(|l| in_first.binary_search(l).is_err())
                                .collect();
                            [first, second]
                        })
                        .collect();
                    split_base += clusters.len() as u64;
                }
                let ratio = (clusters.len() / before) as u32;
                if t > 0 {
                    parents.push((0..clusters.len() as u32).map(|c| c / ratio).collect());
                }
            }
            None => {
                // label level: each label is its own cluster
                let mut par = vec![0u32; n_labels];
                for (c, members) in clusters.iter().enumerate() {
                    for &l in members {
                        par[l as usize] = c as u32;
                    }
                }
                if t > 0 {
                    parents.push(par);
                }
                label_to_cluster = Some((0..n_labels as u32).collect());
            }
        }
    }
    let label_to_cluster = label_to_cluster.unwrap_or_else(|| {
        let mut m = vec![0u32; n_labels];
        for (c, members) in clusters.iter().enumerate() {
            for &l in members {
                m[l as usize] = c as u32;
            }
        }
        m
    });
    LabelTree::from_parts(schedule.to_vec(), n_labels, parents, label_to_cluster)
}

/// Centroid direction of a set of unit rows.
enum Centroid {
    Dense(Vec<f64>),
    Sparse(Vec<u32>, Vec<f64>),
}

struct Scratch {
    buf: Vec<f64>,
    mark: Vec<bool>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Scratch {
            buf: vec![0.0; d],
            mark: vec![false; d],
        }
    }
}

fn centroid_from(feats: &FeatureMatrix, members: &[u32], scratch: &mut Scratch) -> Centroid {
    match feats {
        FeatureMatrix::Dense(_) => {
            let mut c = vec![0.0; feats.cols()];
            for &l in members {
                feats.add_row_to(l as usize, 1.0, &mut c);
            }
            normalize_in_place(&mut c);
            Centroid::Dense(c)
        }
        FeatureMatrix::Sparse(s) => {
            let mut support = Vec::new();
            for &l in members {
                let (cols, vals) = s.row(l as usize);
                for (&j, &v) in cols.iter().zip(vals) {
                    let ju = j as usize;
                    if !scratch.mark[ju] {
                        scratch.mark[ju] = true;
                        support.push(j);
                    }
                    scratch.buf[ju] += v;
                }
            }
            support.sort_unstable();
            let mut vals: Vec<f64> = support
                .iter()
                .map(|&j| {
                    let ju = j as usize;
                    let v = scratch.buf[ju];
                    scratch.buf[ju] = 0.0;
                    scratch.mark[ju] = false;
                    v
                })
                .collect();
            normalize_in_place(&mut vals);
            Centroid::Sparse(support, vals)
        }
    }
}

fn row_centroid(feats: &FeatureMatrix, l: u32) -> Centroid {
    match feats {
        FeatureMatrix::Dense(d) => Centroid::Dense(d.row(l as usize).to_vec()),
        FeatureMatrix::Sparse(s) => {
            let (c, v) = s.row(l as usize);
            Centroid::Sparse(c.to_vec(), v.to_vec())
        }
    }
}

/// Scores of `members` against a centroid.
fn centroid_scores(
    feats: &FeatureMatrix,
    members: &[u32],
    c: &Centroid,
    scratch: &mut Scratch,
) -> Vec<f64> {
    match c {
        Centroid::Dense(v) => members
            .iter()
            .map(|&l| feats.row_dot(l as usize, v))
            .collect(),
        Centroid::Sparse(cols, vals) => {
            for (&j, &v) in cols.iter().zip(vals) {
                scratch.buf[j as usize] = v;
            }
            let out = members
                .iter()
                .map(|&l| feats.row_dot(l as usize, &scratch.buf))
                .collect();
            for &j in cols {
                scratch.buf[j as usize] = 0.0;
            }
            out
        }
    }
}

/// Balanced assignment: members sorted by `s0 - s1` descending (ties by
/// label index), first `⌈m/2⌉` to child 0. Returns the first child and the
/// cosine objective.
fn balanced_assign(members: &[u32], s0: &[f64], s1: &[f64]) -> (Vec<u32>, Vec<u32>, f64) {
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| {
        let ma = s0[a] - s1[a];
        let mb = s0[b] - s1[b];
        mb.total_cmp(&ma).then(members[a].cmp(&members[b]))
    });
    let half = members.len().div_ceil(2);
    let mut obj = 0.0;
    let mut first = Vec::with_capacity(half);
    let mut second = Vec::with_capacity(members.len() - half);
    for (rank, &k) in order.iter().enumerate() {
        if rank < half {
            obj += s0[k];
            first.push(members[k]);
        } else {
            obj += s1[k];
            second.push(members[k]);
        }
    }
    (first, second, obj)
}

/// One balanced spherical 2-means split over unit-normalized rows.
fn spherical_bisect(
    feats: &FeatureMatrix,
    members: &[u32],
    rng: &mut rng::Rng,
    scratch: &mut Scratch,
) -> Vec<u32> {
    if members.len() < 2 {
        return members.to_vec();
    }
    let candidates: Vec<u32> = if members.len() <= INIT_CANDIDATES {
        members.to_vec()
    } else {
        members
            .choose_multiple(rng, INIT_CANDIDATES)
            .copied()
            .collect()
    };
    let (mut a, mut b, mut best) = (candidates[0], candidates[1], f64::INFINITY);
    for (x, &ca) in candidates.iter().enumerate() {
        let cent = row_centroid(feats, ca);
        let sims = centroid_scores(feats, &candidates[x + 1..], &cent, scratch);
        for (&cb, &s) in candidates[x + 1..].iter().zip(&sims) {
            if s < best {
                best = s;
                a = ca;
                b = cb;
            }
        }
    }
    let mut c0 = row_centroid(feats, a);
    let mut c1 = row_centroid(feats, b);
    let mut prev_obj: Option<f64> = None;
    let mut first = Vec::new();
    for _ in 0..MAX_LLOYD_ITERS {
        let s0 = centroid_scores(feats, members, &c0, scratch);
        let s1 = centroid_scores(feats, members, &c1, scratch);
        let (f, s, obj) = balanced_assign(members, &s0, &s1);
        first = f;
        if let Some(p) = prev_obj {
            if (obj - p).abs() <= LLOYD_TOL * p.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        prev_obj = Some(obj);
        c0 = centroid_from(feats, &first, scratch);
        c1 = centroid_from(feats, &s, scratch);
    }
    first
}

/// Top-down recursive balanced spherical 2-means over the rows of
/// `label_features` (one row per label).
pub fn build_tree(
    label_features: &FeatureMatrix,
    schedule: &[usize],
    seed: u64,
) -> Result<LabelTree> {
    let n = label_features.rows();
    split_rounds(schedule, n)?;
    let feats = label_features.row_l2_normalize();
    let d = feats.cols();
    build_with(n, schedule, |split_id, members| {
        let mut rng = rng::stream(seed, streams::TREE + split_id);
        let mut scratch = Scratch::new(match &feats {
            FeatureMatrix::Sparse(_) => d,
            FeatureMatrix::Dense(_) => 0,
        });
        spherical_bisect(&feats, members, &mut rng, &mut scratch)
    })
}

/// Uniformly random balanced clustering with the same cluster sizes as
/// [`build_tree`].
pub fn random_tree(n_labels: usize, schedule: &[usize], seed: u64) -> Result<LabelTree> {
    split_rounds(schedule, n_labels)?;
    let mut order: Vec<u32> = (0..n_labels as u32).collect();
    order.shuffle(&mut rng::stream(seed, streams::TREE));
    let mut rank = vec![0u32; n_labels];
    for (r, &l) in order.iter().enumerate() {
        rank[l as usize] = r as u32;
    }
    // Each split keeps the shuffled order and cuts it in half.
    build_with(n_labels, schedule, |_, members| {
        let mut m = members.to_vec();
        m.sort_unstable_by_key(|&l| rank[l as usize]);
        m.truncate(members.len().div_ceil(2));
        m
    })
}

/// Builds the tree a clustering input asks for.
pub fn tree_for_input(
    input: &ClusteringInput,
    n_labels: usize,
    schedule: &[usize],
    seed: u64,
) -> Result<LabelTree> {
    match input {
        ClusteringInput::Features(f) => {
            if f.rows() != n_labels {
                return Err(Error::DimensionMismatch {
                    op: "label features",
                    expected: n_labels,
                    actual: f.rows(),
                });
            }
            build_tree(f, schedule, seed)
        }
        ClusteringInput::Random => random_tree(n_labels, schedule, seed),
    }
}

/// Binary `n × K_level` matrix: entry `(i, c)` is 1 iff row `i` of `y` has a
/// positive label inside cluster `c`.
pub fn cluster_targets(
    y: &SparseRowMatrix,
    tree: &LabelTree,
    level: usize,
) -> Result<SparseRowMatrix> {
    if y.cols() != tree.n_labels() {
        return Err(Error::DimensionMismatch {
            op: "cluster_targets",
            expected: tree.n_labels(),
            actual: y.cols(),
        });
    }
    let member = tree.membership(level)?;
    let rows = (0..y.rows()).map(|i| {
        let mut cs: Vec<u32> = y.row(i).0.iter().map(|&l| member[l as usize]).collect();
        cs.sort_unstable();
        cs.dedup();
        cs.into_iter().map(|c| (c, 1.0)).collect::<Vec<_>>()
    });
    SparseRowMatrix::from_rows(tree.level_size(level), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::DenseMatrix;

    fn sizes(tree: &LabelTree, level: usize) -> Vec<usize> {
        tree.cluster_members(level)
            .unwrap()
            .iter()
            .map(Vec::len)
            .collect()
    }

    #[test]
    fn structural_eight_labels() {
        let x = DenseMatrix::from_rows(
            &(0..8)
                .map(|i| vec![(i as f64).cos(), (i as f64).sin(), 0.1 * i as f64])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let tree = build_tree(&FeatureMatrix::Dense(x), &[2, 4, 8], 1).unwrap();
        assert_eq!(sizes(&tree, 0), vec![4, 4]);
        assert_eq!(sizes(&tree, 1), vec![2, 2, 2, 2]);
        assert_eq!(sizes(&tree, 2), vec![1; 8]);
        for c in 0..2 {
            assert_eq!(tree.children(0, c).len(), 2);
        }
        for c in 0..4 {
            assert_eq!(tree.children(1, c).len(), 2);
        }
        assert_eq!(tree.membership(2).unwrap(), (0..8).collect::<Vec<u32>>());
    }

    #[test]
    fn identical_features_split_by_index() {
        let x = DenseMatrix::from_rows(&vec![vec![1.0, 2.0]; 4]).unwrap();
        let tree = build_tree(&FeatureMatrix::Dense(x), &[2], 9).unwrap();
        assert_eq!(
            tree.cluster_members(0).unwrap(),
            vec![vec![0, 1], vec![2, 3]]
        );
        let tree = build_tree(
            &FeatureMatrix::Dense(DenseMatrix::from_rows(&vec![vec![1.0, 2.0]; 5]).unwrap()),
            &[2, 4],
            9,
        )
        .unwrap();
        assert_eq!(
            tree.cluster_members(1).unwrap(),
            vec![vec![0, 1], vec![2], vec![3], vec![4]]
        );
    }

    #[test]
    fn separates_obvious_groups() {
        let mut rows = Vec::new();
        for i in 0..6 {
            let e = 0.01 * i as f64;
            rows.push(if i % 2 == 0 {
                vec![1.0, e]
            } else {
                vec![e, 1.0]
            });
        }
        let tree = build_tree(
            &FeatureMatrix::Dense(DenseMatrix::from_rows(&rows).unwrap()),
            &[2],
            0,
        )
        .unwrap();
        let m = tree.cluster_members(0).unwrap();
        let evens: Vec<u32> = vec![0, 2, 4];
        assert!(m[0] == evens || m[1] == evens);
    }

    #[test]
    fn schedule_errors() {
        let x = FeatureMatrix::Dense(DenseMatrix::zeros(8, 2));
        assert!(build_tree(&x, &[3], 0).is_err());
        assert!(build_tree(&x, &[2, 6], 0).is_err());
        assert!(build_tree(&x, &[4, 2], 0).is_err());
        assert!(build_tree(&x, &[16], 0).is_err());
        assert!(build_tree(&x, &[], 0).is_err());
        // a trailing label level need not be a power-of-two multiple
        assert!(random_tree(12, &[2, 12], 0).is_ok());
        assert!(random_tree(12, &[12], 0).is_ok());
    }

    #[test]
    fn random_tree_sizes_and_determinism() {
        let t = random_tree(8, &[2], 4).unwrap();
        assert_eq!(sizes(&t, 0), vec![4, 4]);
        assert_eq!(t, random_tree(8, &[2], 4).unwrap());
        let t = random_tree(8, &[2, 4], 5).unwrap();
        assert_eq!(sizes(&t, 1), vec![2, 2, 2, 2]);
    }

    #[test]
    fn random_tree_bipartitions_uniform() {
        // Three balanced bipartitions of {0,1,2,3}, keyed by the partner of 0.
        let mut counts = [0usize; 3];
        let trials = 1000;
        for seed in 0..trials {
            let t = random_tree(4, &[2], seed).unwrap();
            let m = t.membership(0).unwrap();
            let partner = (1..4).find(|&l| m[l] == m[0]).unwrap();
            counts[partner - 1] += 1;
        }
        for c in counts {
            let f = c as f64 / trials as f64;
            assert!((f - 1.0 / 3.0).abs() < 0.05, "frequency {f}");
        }
    }

    #[test]
    fn cluster_targets_examples() {
        let y = SparseRowMatrix::from_triplets(
            3,
            3,
            vec![(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)],
        )
        .unwrap();
        let tree = LabelTree::from_parts(vec![2], 3, vec![], vec![0, 0, 1]).unwrap();
        let t = cluster_targets(&y, &tree, 0).unwrap();
        assert_eq!(t.to_dense().row(2), &[1.0, 0.0]);
        assert_eq!(t.to_dense().row(1), &[1.0, 1.0]);

        let flat = LabelTree::from_parts(vec![3], 3, vec![], vec![0, 1, 2]).unwrap();
        assert_eq!(cluster_targets(&y, &flat, 0).unwrap(), y);

        let one = LabelTree::from_parts(vec![1], 4, vec![], vec![0; 4]).unwrap();
        let y4 = SparseRowMatrix::from_triplets(4, 4, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let t = cluster_targets(&y4, &one, 0).unwrap();
        assert_eq!(t.to_dense().data(), &[1.0, 1.0, 0.0, 0.0]);
        assert!(cluster_targets(&y4, &one, 1).is_err());
    }

    #[test]
    fn from_parts_rejects_bad_trees() {
        assert!(LabelTree::from_parts(vec![2], 3, vec![], vec![0, 0, 0]).is_err());
        assert!(LabelTree::from_parts(vec![2, 3], 3, vec![vec![0, 0, 0]], vec![0, 1, 2]).is_err());
        assert!(LabelTree::from_parts(vec![3], 3, vec![], vec![1, 0, 2]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = random_tree(10, &[2, 8, 10], 3).unwrap();
        let back = LabelTree::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
