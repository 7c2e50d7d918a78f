//! Scenario trees, path enumeration and path subsets.
//!
//! Nodes are stored breadth-first. The children of the `p`-th node of level
//! `d` are nodes `p * branching + c` of level `d + 1`, so a path id is the
//! index of its leaf and its branch choices are the base-`branching` digits
//! of that id.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{DemandCap, Instance};

pub const TREE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("period {period} out of range 1..={horizon}")]
    PeriodOutOfRange { period: usize, horizon: usize },
    #[error("path {path} out of range (tree has {paths} paths)")]
    PathOutOfRange { path: usize, paths: usize },
    #[error("subset size {requested} out of range 1..={paths}")]
    SubsetSize { requested: usize, paths: usize },
    #[error("branching must be at least 1")]
    Branching,
    #[error("tree too large: {0} paths")]
    TooLarge(u128),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed tree file {path}: {message}")]
    Format { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub parent: Option<usize>,
    pub depth: usize,
    /// Demand per item realized in period `depth` (empty at the root).
    pub demand: Vec<u32>,
    /// Conditional probability of reaching this node from its parent.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTree {
    pub format_version: u32,
    pub branching: usize,
    pub horizon: usize,
    pub num_items: usize,
    pub nodes: Vec<TreeNode>,
}

/// Source of per-branch demand draws.
pub trait DemandSampler {
    fn sample(&self, item: usize, period: usize, rng: &mut ChaCha8Rng) -> u32;
}

impl<F> DemandSampler for F
where
    F: Fn(usize, usize, &mut ChaCha8Rng) -> u32,
{
    fn sample(&self, item: usize, period: usize, rng: &mut ChaCha8Rng) -> u32 {
        self(item, period, rng)
    }
}

/// Three-level mixture: regular Poisson demand, no demand, extreme demand.
#[derive(Debug, Clone)]
pub struct LumpySampler {
    /// Mean demand `F_it`, items x periods (0-based periods).
    pub means: Vec<Vec<f64>>,
}

impl LumpySampler {
    pub fn from_instance(instance: &Instance) -> Self {
        let means = if instance.mean_demand.is_empty() {
            vec![vec![0.0; instance.horizon]; instance.num_items()]
        } else {
            instance.mean_demand.clone()
        };
        Self { means }
    }
}

impl DemandSampler for LumpySampler {
    fn sample(&self, item: usize, period: usize, rng: &mut ChaCha8Rng) -> u32 {
        sample_lumpy(self.means[item][period], rng)
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("positive finite mean").sample(rng);
    draw as u32
}

/// One Lumpy demand draw with mean `mean`: with probability 1/2 a Poisson
/// draw of mean `2/3 * mean`, with probability 1/3 zero, otherwise a Poisson
/// draw of mean `4 * mean`.
pub fn sample_lumpy<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    let u: f64 = rng.random();
    if u < 0.5 {
        poisson(2.0 / 3.0 * mean, rng)
    } else if u < 0.5 + 1.0 / 3.0 {
        0
    } else {
        poisson(4.0 * mean, rng)
    }
}

fn checked_pow(base: usize, exp: usize) -> Result<usize, ScenarioError> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc *= base as u128;
        if acc > 50_000_000 {
            return Err(ScenarioError::TooLarge(acc));
        }
    }
    Ok(acc as usize)
}

/// Builds a full `branching`-ary tree over the instance horizon. Demand of
/// every node is drawn independently per item; branch probabilities are
/// uniform.
pub fn build_tree(
    instance: &Instance,
    branching: usize,
    sampler: &dyn DemandSampler,
    seed: u64,
) -> Result<ScenarioTree, ScenarioError> {
    build_tree_with(instance.num_items(), instance.horizon, branching, sampler, seed)
}

pub fn build_tree_with(
    num_items: usize,
    horizon: usize,
    branching: usize,
    sampler: &dyn DemandSampler,
    seed: u64,
) -> Result<ScenarioTree, ScenarioError> {
    if branching == 0 {
        return Err(ScenarioError::Branching);
    }
    checked_pow(branching, horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![TreeNode {
        parent: None,
        depth: 0,
        demand: Vec::new(),
        probability: 1.0,
    }];
    let cond = 1.0 / branching as f64;
    let mut level: Vec<usize> = vec![0];
    for depth in 1..=horizon {
        let mut next = Vec::with_capacity(level.len() * branching);
        for &parent in &level {
            for _ in 0..branching {
                let demand = (0..num_items)
                    .map(|i| sampler.sample(i, depth - 1, &mut rng))
                    .collect();
                next.push(nodes.len());
                nodes.push(TreeNode {
                    parent: Some(parent),
                    depth,
                    demand,
                    probability: cond,
                });
            }
        }
        level = next;
    }
    Ok(ScenarioTree {
        format_version: TREE_FORMAT_VERSION,
        branching,
        horizon,
        num_items,
        nodes,
    })
}

impl ScenarioTree {
    pub fn num_paths(&self) -> usize {
        self.branching.pow(self.horizon as u32)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn level_start(&self, depth: usize) -> usize {
        (0..depth).map(|d| self.branching.pow(d as u32)).sum()
    }

    /// Node of `path` at `depth` (0 is the root, `horizon` the leaf).
    pub fn path_node(&self, path: usize, depth: usize) -> usize {
        debug_assert!(depth <= self.horizon);
        let below = self.branching.pow((self.horizon - depth) as u32);
        self.level_start(depth) + path / below
    }

    /// Branch choice per period, `(omega_1, ..., omega_T)`.
    pub fn branch_choices(&self, path: usize) -> Vec<usize> {
        (1..=self.horizon)
            .map(|d| {
                let below = self.branching.pow((self.horizon - d) as u32);
                (path / below) % self.branching
            })
            .collect()
    }

    /// Paths passing through `node`, as a contiguous id range.
    pub fn paths_through(&self, node: usize) -> std::ops::Range<usize> {
        let depth = self.nodes[node].depth;
        let pos = node - self.level_start(depth);
        let below = self.branching.pow((self.horizon - depth) as u32);
        pos * below..(pos + 1) * below
    }

    /// Unconditional probability of reaching `node`.
    pub fn node_probability(&self, node: usize) -> f64 {
        let mut p = 1.0;
        let mut cur = Some(node);
        while let Some(n) = cur {
            p *= self.nodes[n].probability;
            cur = self.nodes[n].parent;
        }
        p
    }

    pub fn path_probability(&self, path: usize) -> f64 {
        self.node_probability(self.path_node(path, self.horizon))
    }

    /// Demand matrix `D[i][t]` of a path, 0-based periods.
    pub fn path_demand(&self, path: usize) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.horizon]; self.num_items];
        for depth in 1..=self.horizon {
            let node = &self.nodes[self.path_node(path, depth)];
            for (i, row) in d.iter_mut().enumerate() {
                row[depth - 1] = f64::from(node.demand[i]);
            }
        }
        d
    }

    /// Cumulative demand of `item` from period 1 up to the depth of `node`.
    pub fn cumulative_demand(&self, node: usize, item: usize) -> f64 {
        let mut total = 0.0;
        let mut cur = Some(node);
        while let Some(n) = cur {
            if let Some(&d) = self.nodes[n].demand.get(item) {
                total += f64::from(d);
            }
            cur = self.nodes[n].parent;
        }
        total
    }

    /// Largest demand of each item in each period over all nodes.
    pub fn demand_cap(&self) -> DemandCap {
        let mut cap = DemandCap::uniform(self.num_items, self.horizon, 0.0);
        for node in self.nodes.iter().filter(|n| n.depth > 0) {
            for (i, &d) in node.demand.iter().enumerate() {
                let slot = &mut cap.max_demand[i][node.depth - 1];
                *slot = slot.max(f64::from(d));
            }
        }
        cap
    }

    /// Paths that share the first `periods` periods of demand with `path`.
    pub fn indistinguishable_set(&self, path: usize, periods: usize) -> Result<Vec<usize>, ScenarioError> {
        if periods < 1 || periods > self.horizon {
            return Err(ScenarioError::PeriodOutOfRange {
                period: periods,
                horizon: self.horizon,
            });
        }
        if path >= self.num_paths() {
            return Err(ScenarioError::PathOutOfRange {
                path,
                paths: self.num_paths(),
            });
        }
        Ok(self.paths_through(self.path_node(path, periods)).collect())
    }

    /// Structural checks for trees read from disk.
    pub fn check(&self) -> Result<(), String> {
        if self.branching == 0 {
            return Err("branching must be at least 1".into());
        }
        let expected: usize = (0..=self.horizon).map(|d| self.branching.pow(d as u32)).sum();
        if self.nodes.len() != expected {
            return Err(format!("expected {expected} nodes, found {}", self.nodes.len()));
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            if idx == 0 {
                if node.parent.is_some() || node.depth != 0 {
                    return Err("node 0 must be the root".into());
                }
                continue;
            }
            let depth = node.depth;
            let pos = idx.checked_sub(self.level_start(depth)).ok_or("node depth out of order")?;
            let want_parent = self.level_start(depth - 1) + pos / self.branching;
            if node.parent != Some(want_parent) {
                return Err(format!("node {idx} has parent {:?}, expected {want_parent}", node.parent));
            }
            if node.demand.len() != self.num_items {
                return Err(format!("node {idx} demand has {} entries", node.demand.len()));
            }
            if !(node.probability > 0.0 && node.probability <= 1.0) {
                return Err(format!("node {idx} probability {} not in (0, 1]", node.probability));
            }
        }
        let total: f64 = (0..self.num_paths()).map(|p| self.path_probability(p)).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(format!("path probabilities sum to {total}"));
        }
        Ok(())
    }
}

/// A subset of paths with renormalized probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialTree {
    pub paths: Vec<usize>,
    pub probabilities: Vec<f64>,
}

impl PartialTree {
    pub fn full(tree: &ScenarioTree) -> Self {
        let paths: Vec<usize> = (0..tree.num_paths()).collect();
        let probabilities = paths.iter().map(|&p| tree.path_probability(p)).collect();
        Self { paths, probabilities }
    }

    /// Subset of `paths` with probabilities rescaled to sum to one.
    pub fn from_paths(tree: &ScenarioTree, mut paths: Vec<usize>) -> Self {
        paths.sort_unstable();
        paths.dedup();
        let raw: Vec<f64> = paths.iter().map(|&p| tree.path_probability(p)).collect();
        let total: f64 = raw.iter().sum();
        Self {
            paths,
            probabilities: raw.iter().map(|p| p / total).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Nodes visited by at least one included path.
    pub fn nodes(&self, tree: &ScenarioTree) -> BTreeSet<usize> {
        self.paths
            .iter()
            .flat_map(|&p| (0..=tree.horizon).map(move |d| tree.path_node(p, d)))
            .collect()
    }
}

/// Samples `n` distinct paths uniformly without replacement.
pub fn sample_path_subset(tree: &ScenarioTree, n: usize, seed: u64) -> Result<PartialTree, ScenarioError> {
    let total = tree.num_paths();
    if n < 1 || n > total {
        return Err(ScenarioError::SubsetSize {
            requested: n,
            paths: total,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, total, n).into_vec();
    Ok(PartialTree::from_paths(tree, picked))
}

pub fn save_tree(tree: &ScenarioTree, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    let text = serde_json::to_string(tree).map_err(|e| ScenarioError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    fs::write(path, text).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_tree(path: impl AsRef<Path>) -> Result<ScenarioTree, ScenarioError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: shown.clone(),
        source,
    })?;
    let tree: ScenarioTree = serde_json::from_str(&text).map_err(|e| ScenarioError::Format {
        path: shown.clone(),
        message: e.to_string(),
    })?;
    if tree.format_version != TREE_FORMAT_VERSION {
        return Err(ScenarioError::Format {
            path: shown,
            message: format!("unsupported format_version {}", tree.format_version),
        });
    }
    tree.check().map_err(|message| ScenarioError::Format { path: shown, message })?;
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counting(item: usize, period: usize, _: &mut ChaCha8Rng) -> u32 {
        (10 * item + period) as u32
    }

    fn random_tree(branching: usize, horizon: usize, seed: u64) -> ScenarioTree {
        let sampler = LumpySampler {
            means: vec![vec![5.0; horizon]; 2],
        };
        build_tree_with(2, horizon, branching, &sampler, seed).unwrap()
    }

    #[test]
    fn path_counts_match_branching_power() {
        for (b, expected) in [(1, 1), (2, 128), (3, 2187)] {
            let tree = build_tree_with(1, 7, b, &counting, 0).unwrap();
            assert_eq!(tree.num_paths(), expected);
            let nodes: usize = (0..=7).map(|d| b.pow(d)).sum();
            assert_eq!(tree.num_nodes(), nodes);
        }
    }

    #[test]
    fn single_branch_tree_has_probability_one() {
        let tree = build_tree_with(1, 5, 1, &counting, 0).unwrap();
        assert_eq!(tree.num_paths(), 1);
        assert_eq!(tree.path_probability(0), 1.0);
    }

    #[test]
    fn leaf_set_is_singleton() {
        let tree = random_tree(2, 3, 1);
        for p in 0..tree.num_paths() {
            assert_eq!(tree.indistinguishable_set(p, 3).unwrap(), vec![p]);
        }
    }

    #[test]
    fn first_period_set_of_four_path_tree() {
        let tree = random_tree(2, 2, 1);
        // Paths 0,1 hang under the first period-1 node, 2,3 under the second.
        assert_eq!(tree.indistinguishable_set(0, 1).unwrap(), vec![0, 1]);
        assert_eq!(tree.indistinguishable_set(3, 1).unwrap(), vec![2, 3]);
        assert!(tree.indistinguishable_set(1, 1).unwrap().contains(&0));
    }

    #[test]
    fn indistinguishable_set_rejects_bad_period() {
        let tree = random_tree(2, 2, 1);
        assert!(tree.indistinguishable_set(0, 0).is_err());
        assert!(tree.indistinguishable_set(0, 3).is_err());
    }

    #[test]
    fn shared_prefix_shares_demand() {
        let tree = random_tree(3, 3, 9);
        for p in 0..tree.num_paths() {
            for q in tree.indistinguishable_set(p, 2).unwrap() {
                let (dp, dq) = (tree.path_demand(p), tree.path_demand(q));
                for i in 0..2 {
                    assert_eq!(dp[i][..2], dq[i][..2]);
                }
            }
        }
    }

    #[test]
    fn branch_choices_decode_path_id() {
        let tree = build_tree_with(1, 3, 3, &counting, 0).unwrap();
        assert_eq!(tree.branch_choices(0), vec![0, 0, 0]);
        assert_eq!(tree.branch_choices(5), vec![0, 1, 2]);
        assert_eq!(tree.branch_choices(26), vec![2, 2, 2]);
    }

    #[test]
    fn full_subset_keeps_probabilities() {
        let tree = random_tree(2, 3, 2);
        let sub = sample_path_subset(&tree, tree.num_paths(), 4).unwrap();
        assert_eq!(sub, PartialTree::full(&tree));
    }

    #[test]
    fn subset_of_uniform_tree_is_uniform() {
        let tree = random_tree(2, 4, 2);
        let sub = sample_path_subset(&tree, 5, 11).unwrap();
        assert_eq!(sub.len(), 5);
        for p in &sub.probabilities {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn subset_size_is_checked() {
        let tree = random_tree(2, 2, 2);
        assert!(sample_path_subset(&tree, 0, 1).is_err());
        assert!(sample_path_subset(&tree, 5, 1).is_err());
    }

    #[test]
    fn lumpy_zero_mean_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..1000).all(|_| sample_lumpy(0.0, &mut rng) == 0));
    }

    #[test]
    fn tree_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.json");
        let tree = random_tree(2, 3, 5);
        save_tree(&tree, &path).unwrap();
        assert_eq!(load_tree(&path).unwrap(), tree);
    }

    #[test]
    fn corrupted_tree_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tree.json");
        let mut tree = random_tree(2, 2, 5);
        tree.nodes.pop();
        save_tree(&tree, &path).unwrap();
        assert!(matches!(load_tree(&path), Err(ScenarioError::Format { .. })));
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(b in 1usize..4, t in 1usize..5, seed in any::<u64>()) {
            let tree = random_tree(b, t, seed);
            let total: f64 = (0..tree.num_paths()).map(|p| tree.path_probability(p)).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn indistinguishable_sets_partition_and_refine(b in 1usize..4, t in 1usize..5, seed in any::<u64>()) {
            let tree = random_tree(b, t, seed);
            let n = tree.num_paths();
            for period in 1..=t {
                let mut seen = vec![0usize; n];
                for p in 0..n {
                    let set = tree.indistinguishable_set(p, period).unwrap();
                    prop_assert!(set.contains(&p));
                    for &q in &set {
                        // Membership is symmetric, so each set is an equivalence class.
                        if q >= p {
                            prop_assert_eq!(&tree.indistinguishable_set(q, period).unwrap(), &set);
                        }
                    }
                    if set[0] == p {
                        for &q in &set { seen[q] += 1; }
                    }
                    if period < t {
                        let finer = tree.indistinguishable_set(p, period + 1).unwrap();
                        prop_assert!(finer.iter().all(|q| set.contains(q)));
                    }
                }
                prop_assert!(seen.iter().all(|&c| c == 1));
            }
        }

        #[test]
        fn same_seed_same_tree(seed in any::<u64>()) {
            prop_assert_eq!(random_tree(2, 3, seed), random_tree(2, 3, seed));
        }

        #[test]
        fn partial_probabilities_sum_to_one(n in 1usize..16, seed in any::<u64>()) {
            let tree = random_tree(2, 4, 1);
            let sub = sample_path_subset(&tree, n, seed).unwrap();
            let total: f64 = sub.probabilities.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert_eq!(sub.len(), n);
        }
    }
}
