//! Unbalanced binary tree over a zero-inflated, long-tailed cost label.
//!
//! The root separates "no cost" from "some cost": its left child is a leaf
//! that holds exactly the zero samples, and its right subtree splits the
//! positive samples into equal-frequency quantile leaves. Every internal
//! node carries one binary classifier; the probability of a leaf is the
//! product of the branch probabilities along its root path. Leaf intervals
//! are closed on the right: a leaf `(lo, hi]` holds samples with
//! `lo < cost <= hi`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{AcqError, Result};
use crate::hash::fnv1a64;

/// Which side of an internal node a path step takes. The classifier at the
/// node is trained to output the probability of going left, so a left step
/// has target label 1 and a right step label 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Left,
    Right,
}

impl Branch {
    /// Classifier target label for this step.
    pub fn label(self) -> f64 {
        match self {
            Branch::Left => 1.0,
            Branch::Right => 0.0,
        }
    }
}

/// One step on a root-to-leaf path: which classifier fires and which side
/// the path takes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStep {
    /// Index into the tree's classifier list (not a node id).
    pub classifier: usize,
    pub branch: Branch,
}

/// A full root-to-leaf path, ordered root first.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub leaf_id: usize,
    pub steps: Vec<PathStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Leaf that holds exactly the zero-cost samples.
    Zero,
    /// Node covering an interval `(lo, hi]` of positive costs (the root of
    /// a mixed tree covers `[0, hi]`).
    Interval,
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub id: usize,
    pub kind: NodeKind,
    /// Open left edge of the covered interval. 0 for the zero leaf.
    pub lo: f64,
    /// Closed right edge of the covered interval. 0 for the zero leaf.
    pub hi: f64,
    pub parent: Option<usize>,
    pub left: Option<usize>,
    pub right: Option<usize>,
    /// Mean cost of the build samples in this leaf. 0 for internal nodes.
    pub leaf_value: f64,
    /// Mean squared cost of the build samples in this leaf.
    pub leaf_value_sq: f64,
    /// Number of build samples that landed in this node.
    pub sample_count: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.left.is_none() && self.right.is_none()
    }
}

/// Aggregates for one quantile leaf before node ids are assigned.
#[derive(Debug, Clone)]
struct LeafSpec {
    lo: f64,
    hi: f64,
    mean: f64,
    mean_sq: f64,
    count: usize,
}

#[derive(Debug, Clone)]
pub struct UnbalancedCostTree {
    nodes: Vec<TreeNode>,
    root: usize,
    /// Zero leaf first when present, then positive leaves in ascending
    /// interval order.
    leaf_ids: Vec<usize>,
    /// Positive leaves only, ascending; used for interval lookup.
    positive_leaves: Vec<usize>,
    zero_leaf: Option<usize>,
    /// Internal nodes in id order; index into this vec is the classifier
    /// index used by [`PathStep`].
    classifier_nodes: Vec<usize>,
    /// Cached root paths, parallel to `leaf_ids`.
    paths: Vec<PathSpec>,
}

impl UnbalancedCostTree {
    /// Build the tree from raw cost labels.
    ///
    /// `positive_leaf_count` asks for that many equal-frequency leaves over
    /// the positive samples; duplicate quantile boundaries are merged, so
    /// the realized count can be lower. Degenerate inputs (no zeros, or no
    /// positives) drop the corresponding side of the tree with a warning.
    pub fn build(costs: &[f64], positive_leaf_count: usize) -> Result<Self> {
        if costs.is_empty() {
            return Err(AcqError::EmptyInput("cost labels"));
        }
        if positive_leaf_count < 1 {
            return Err(AcqError::InvalidArgument(
                "positive_leaf_count must be at least 1".into(),
            ));
        }
        let mut zeros = 0usize;
        let mut positives: Vec<f64> = Vec::new();
        for &c in costs {
            if !c.is_finite() {
                return Err(AcqError::NonFinite("cost labels".into()));
            }
            if c < 0.0 {
                return Err(AcqError::NegativeCost(c));
            }
            if c == 0.0 {
                zeros += 1;
            } else {
                positives.push(c);
            }
        }
        positives.sort_by(|a, b| a.partial_cmp(b).unwrap());

        if positives.is_empty() {
            log::warn!("tree build: no positive samples; tree degenerates to the zero leaf");
            let node = TreeNode {
                id: 0,
                kind: NodeKind::Zero,
                lo: 0.0,
                hi: 0.0,
                parent: None,
                left: None,
                right: None,
                leaf_value: 0.0,
                leaf_value_sq: 0.0,
                sample_count: zeros,
            };
            return Ok(Self::assemble(vec![node], 0));
        }

        let specs = quantile_leaves(&positives, positive_leaf_count);

        let mut nodes: Vec<TreeNode> = Vec::new();
        let root;
        if zeros == 0 {
            log::warn!("tree build: no zero samples; dropping the zero leaf");
            root = 0;
            build_subtree(&mut nodes, &specs, None);
        } else {
            root = 0;
            let max = *positives.last().unwrap();
            nodes.push(TreeNode {
                id: 0,
                kind: NodeKind::Interval,
                lo: 0.0,
                hi: max,
                parent: None,
                left: None,
                right: None,
                leaf_value: 0.0,
                leaf_value_sq: 0.0,
                sample_count: zeros + positives.len(),
            });
            let zero_id = nodes.len();
            nodes.push(TreeNode {
                id: zero_id,
                kind: NodeKind::Zero,
                lo: 0.0,
                hi: 0.0,
                parent: Some(0),
                left: None,
                right: None,
                leaf_value: 0.0,
                leaf_value_sq: 0.0,
                sample_count: zeros,
            });
            let right_id = build_subtree(&mut nodes, &specs, Some(0));
            nodes[0].left = Some(zero_id);
            nodes[0].right = Some(right_id);
        }
        Ok(Self::assemble(nodes, root))
    }

    /// Derive leaf ordering, classifier indices and cached paths from a
    /// finished node table.
    fn assemble(nodes: Vec<TreeNode>, root: usize) -> Self {
        let mut zero_leaf = None;
        let mut positive_leaves: Vec<usize> = Vec::new();
        let mut classifier_nodes: Vec<usize> = Vec::new();
        for n in &nodes {
            if n.is_leaf() {
                match n.kind {
                    NodeKind::Zero => zero_leaf = Some(n.id),
                    NodeKind::Interval => positive_leaves.push(n.id),
                }
            } else {
                classifier_nodes.push(n.id);
            }
        }
        positive_leaves.sort_by(|&a, &b| nodes[a].hi.partial_cmp(&nodes[b].hi).unwrap());
        let mut leaf_ids = Vec::new();
        if let Some(z) = zero_leaf {
            leaf_ids.push(z);
        }
        leaf_ids.extend(&positive_leaves);

        let classifier_of: BTreeMap<usize, usize> = classifier_nodes
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect();

        let mut paths = Vec::with_capacity(leaf_ids.len());
        for &leaf in &leaf_ids {
            let mut steps = Vec::new();
            let mut cur = leaf;
            while let Some(p) = nodes[cur].parent {
                let branch = if nodes[p].left == Some(cur) {
                    Branch::Left
                } else {
                    Branch::Right
                };
                steps.push(PathStep {
                    classifier: classifier_of[&p],
                    branch,
                });
                cur = p;
            }
            steps.reverse();
            paths.push(PathSpec {
                leaf_id: leaf,
                steps,
            });
        }

        UnbalancedCostTree {
            nodes,
            root,
            leaf_ids,
            positive_leaves,
            zero_leaf,
            classifier_nodes,
            paths,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_ids.len()
    }

    /// Number of internal nodes, i.e. binary classifiers the predictor
    /// must provide.
    pub fn classifier_count(&self) -> usize {
        self.classifier_nodes.len()
    }

    pub fn root_id(&self) -> usize {
        self.root
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// Leaf ids, zero leaf first when present, then ascending intervals.
    pub fn leaf_ids(&self) -> &[usize] {
        &self.leaf_ids
    }

    /// Cached root paths, parallel to [`Self::leaf_ids`].
    pub fn paths(&self) -> &[PathSpec] {
        &self.paths
    }

    /// Mean cost per leaf, parallel to [`Self::leaf_ids`].
    pub fn leaf_values(&self) -> Vec<f64> {
        self.leaf_ids
            .iter()
            .map(|&id| self.nodes[id].leaf_value)
            .collect()
    }

    /// Mean squared cost per leaf, parallel to [`Self::leaf_ids`].
    pub fn leaf_values_sq(&self) -> Vec<f64> {
        self.leaf_ids
            .iter()
            .map(|&id| self.nodes[id].leaf_value_sq)
            .collect()
    }

    /// Map a cost label to the id of the leaf that owns it. Costs outside
    /// the build support clamp to the nearest leaf: there is no probability
    /// mass outside what the tree was built on.
    pub fn assign_leaf(&self, cost: f64) -> Result<usize> {
        if !cost.is_finite() {
            return Err(AcqError::NonFinite("cost label".into()));
        }
        if cost < 0.0 {
            return Err(AcqError::NegativeCost(cost));
        }
        if cost == 0.0 {
            if let Some(z) = self.zero_leaf {
                return Ok(z);
            }
            return Ok(self.positive_leaves[0]);
        }
        if self.positive_leaves.is_empty() {
            return Ok(self.zero_leaf.expect("tree has at least one leaf"));
        }
        // First positive leaf whose closed right edge admits the cost.
        let idx = self
            .positive_leaves
            .partition_point(|&id| self.nodes[id].hi < cost);
        if idx == self.positive_leaves.len() {
            Ok(*self.positive_leaves.last().unwrap())
        } else {
            Ok(self.positive_leaves[idx])
        }
    }

    /// Root path for a leaf, with per-step classifier targets.
    pub fn path_labels(&self, leaf_id: usize) -> Result<PathSpec> {
        match self.leaf_ids.iter().position(|&id| id == leaf_id) {
            Some(pos) => Ok(self.paths[pos].clone()),
            None => Err(AcqError::NotALeaf(leaf_id)),
        }
    }

    /// Fold per-classifier left-branch probabilities into a distribution
    /// over leaves (parallel to [`Self::leaf_ids`]).
    pub fn leaf_distribution(&self, probs: &[f64]) -> Result<Vec<f64>> {
        if probs.len() != self.classifier_count() {
            return Err(AcqError::DimensionMismatch {
                what: "classifier probabilities",
                expected: self.classifier_count(),
                got: probs.len(),
            });
        }
        for &p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(AcqError::ProbabilityOutOfRange(p));
            }
        }
        let mut out = Vec::with_capacity(self.leaf_ids.len());
        for path in &self.paths {
            let mut mass = 1.0;
            for step in &path.steps {
                let p = probs[step.classifier];
                mass *= match step.branch {
                    Branch::Left => p,
                    Branch::Right => 1.0 - p,
                };
            }
            out.push(mass);
        }
        Ok(out)
    }

    /// Expectation of the cost under a leaf distribution, using per-leaf
    /// mean values. `leaf_probs` is parallel to [`Self::leaf_ids`].
    pub fn expected_cost(&self, leaf_probs: &[f64]) -> f64 {
        assert_eq!(
            leaf_probs.len(),
            self.leaf_ids.len(),
            "leaf distribution length"
        );
        self.leaf_ids
            .iter()
            .zip(leaf_probs)
            .map(|(&id, &p)| p * self.nodes[id].leaf_value)
            .sum()
    }

    /// Standard deviation of the cost under a leaf distribution, using the
    /// per-leaf first and second moments. Clamps tiny negative variances
    /// (floating-point) to zero.
    pub fn expected_cost_std(&self, leaf_probs: &[f64]) -> f64 {
        assert_eq!(
            leaf_probs.len(),
            self.leaf_ids.len(),
            "leaf distribution length"
        );
        let mut e = 0.0;
        let mut e2 = 0.0;
        for (&id, &p) in self.leaf_ids.iter().zip(leaf_probs) {
            e += p * self.nodes[id].leaf_value;
            e2 += p * self.nodes[id].leaf_value_sq;
        }
        (e2 - e * e).max(0.0).sqrt()
    }

    /// Plain-text serialization: a header with the node count and leaf ids,
    /// then one line per node in id order. Absent fields are written `-`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let leaf_list = self
            .leaf_ids
            .iter()
            .map(|id| id.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(
            s,
            "acq-tree v1 nodes {} leaves {}",
            self.nodes.len(),
            leaf_list
        );
        for n in &self.nodes {
            let kind = match n.kind {
                NodeKind::Zero => "zero",
                NodeKind::Interval => "interval",
            };
            let opt = |v: Option<usize>| v.map_or("-".to_string(), |x| x.to_string());
            let (lo, hi) = match n.kind {
                NodeKind::Zero => ("-".to_string(), "-".to_string()),
                NodeKind::Interval => (n.lo.to_string(), n.hi.to_string()),
            };
            let (lv, lvs) = if n.is_leaf() {
                (n.leaf_value.to_string(), n.leaf_value_sq.to_string())
            } else {
                ("-".to_string(), "-".to_string())
            };
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {} {} {} {}",
                n.id,
                kind,
                lo,
                hi,
                opt(n.parent),
                opt(n.left),
                opt(n.right),
                lv,
                lvs,
                n.sample_count
            );
        }
        s
    }

    /// Parse the output of [`Self::to_text`]. Validates structural
    /// consistency (dense ids, parent/child symmetry, declared leaves are
    /// exactly the childless nodes).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(AcqError::EmptyInput("tree text"))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() < 5 || head[0] != "acq-tree" || head[1] != "v1" || head[2] != "nodes" {
            return Err(AcqError::Parse {
                line: 1,
                message: "bad tree header".into(),
            });
        }
        let node_count: usize = head[3].parse().map_err(|_| AcqError::Parse {
            line: 1,
            message: "bad node count".into(),
        })?;
        if head[4] != "leaves" {
            return Err(AcqError::Parse {
                line: 1,
                message: "bad tree header".into(),
            });
        }
        let declared_leaves: Vec<usize> = head[5..]
            .iter()
            .map(|t| {
                t.parse().map_err(|_| AcqError::Parse {
                    line: 1,
                    message: "bad leaf id".into(),
                })
            })
            .collect::<Result<_>>()?;

        let mut nodes: Vec<Option<TreeNode>> = vec![None; node_count];
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let t: Vec<&str> = line.split_whitespace().collect();
            let perr = |m: &str| AcqError::Parse {
                line: lineno + 1,
                message: m.into(),
            };
            if t.len() != 10 {
                return Err(perr("expected 10 fields"));
            }
            let id: usize = t[0].parse().map_err(|_| perr("bad id"))?;
            if id >= node_count {
                return Err(perr("node id out of range"));
            }
            let kind = match t[1] {
                "zero" => NodeKind::Zero,
                "interval" => NodeKind::Interval,
                _ => return Err(perr("bad kind")),
            };
            let opt_usize = |s: &str, m: &str| -> Result<Option<usize>> {
                if s == "-" {
                    Ok(None)
                } else {
                    Ok(Some(s.parse().map_err(|_| perr(m))?))
                }
            };
            let opt_f64 = |s: &str, m: &str| -> Result<f64> {
                if s == "-" {
                    Ok(0.0)
                } else {
                    s.parse().map_err(|_| perr(m))
                }
            };
            let node = TreeNode {
                id,
                kind,
                lo: opt_f64(t[2], "bad lo")?,
                hi: opt_f64(t[3], "bad hi")?,
                parent: opt_usize(t[4], "bad parent")?,
                left: opt_usize(t[5], "bad left")?,
                right: opt_usize(t[6], "bad right")?,
                leaf_value: opt_f64(t[7], "bad leaf value")?,
                leaf_value_sq: opt_f64(t[8], "bad leaf value sq")?,
                sample_count: t[9].parse().map_err(|_| perr("bad sample count"))?,
            };
            if nodes[id].is_some() {
                return Err(perr("duplicate node id"));
            }
            nodes[id] = Some(node);
        }
        let nodes: Vec<TreeNode> = nodes
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                n.ok_or(AcqError::Parse {
                    line: 0,
                    message: format!("missing node {i}"),
                })
            })
            .collect::<Result<_>>()?;

        // Structural checks: one root, symmetric parent/child links,
        // declared leaves match childless nodes.
        let mut root = None;
        for n in &nodes {
            match n.parent {
                None => {
                    if root.is_some() {
                        return Err(AcqError::Parse {
                            line: 0,
                            message: "multiple roots".into(),
                        });
                    }
                    root = Some(n.id);
                }
                Some(p) => {
                    let pn = nodes.get(p).ok_or(AcqError::Parse {
                        line: 0,
                        message: format!("node {} has missing parent {}", n.id, p),
                    })?;
                    if pn.left != Some(n.id) && pn.right != Some(n.id) {
                        return Err(AcqError::Parse {
                            line: 0,
                            message: format!("node {} not linked from parent {}", n.id, p),
                        });
                    }
                }
            }
            if n.left.is_some() != n.right.is_some() {
                return Err(AcqError::Parse {
                    line: 0,
                    message: format!("node {} has exactly one child", n.id),
                });
            }
        }
        let root = root.ok_or(AcqError::Parse {
            line: 0,
            message: "no root".into(),
        })?;
        let mut actual_leaves: Vec<usize> =
            nodes.iter().filter(|n| n.is_leaf()).map(|n| n.id).collect();
        actual_leaves.sort_unstable();
        let mut declared_sorted = declared_leaves.clone();
        declared_sorted.sort_unstable();
        if actual_leaves != declared_sorted {
            return Err(AcqError::Parse {
                line: 1,
                message: "declared leaves do not match childless nodes".into(),
            });
        }
        Ok(Self::assemble(nodes, root))
    }

    /// Stable fingerprint of the serialized tree, used to refuse loading a
    /// model against a different tree.
    pub fn checksum(&self) -> String {
        format!("{:016x}", fnv1a64(self.to_text().as_bytes()))
    }
}

/// Split sorted positive costs into up to `count` equal-frequency groups,
/// absorbing duplicated quantile boundaries into a single leaf. Returns the
/// groups in ascending order; the first group's open left edge is 0.
fn quantile_leaves(sorted: &[f64], count: usize) -> Vec<LeafSpec> {
    let n = sorted.len();
    let k = count.min(n).max(1);
    // Raw right-edge positions of each group: ceil(n * (i+1) / k) keeps the
    // groups within one sample of each other in size.
    let mut cuts: Vec<usize> = (1..=k)
        .map(|i| n * i / k + usize::from(!(n * i).is_multiple_of(k)))
        .collect();
    cuts.dedup();
    // A cut inside a run of duplicates would split equal values across two
    // leaves; push it to the end of the run, then drop collapsed groups.
    for c in cuts.iter_mut() {
        let v = sorted[*c - 1];
        let mut e = *c;
        while e < n && sorted[e] == v {
            e += 1;
        }
        *c = e;
    }
    cuts.dedup();

    let mut specs = Vec::with_capacity(cuts.len());
    let mut start = 0usize;
    let mut lo = 0.0f64;
    for &end in &cuts {
        let group = &sorted[start..end];
        let cnt = group.len();
        let mean = group.iter().sum::<f64>() / cnt as f64;
        let mean_sq = group.iter().map(|v| v * v).sum::<f64>() / cnt as f64;
        let hi = group[cnt - 1];
        specs.push(LeafSpec {
            lo,
            hi,
            mean,
            mean_sq,
            count: cnt,
        });
        lo = hi;
        start = end;
    }
    specs
}

/// Recursively lay out an interval subtree over `specs`, allocating node
/// ids in preorder (node, then left, then right). Returns the subtree root
/// id. Left subtrees get the larger half on odd splits.
fn build_subtree(nodes: &mut Vec<TreeNode>, specs: &[LeafSpec], parent: Option<usize>) -> usize {
    let id = nodes.len();
    let lo = specs[0].lo;
    let hi = specs[specs.len() - 1].hi;
    if specs.len() == 1 {
        let s = &specs[0];
        nodes.push(TreeNode {
            id,
            kind: NodeKind::Interval,
            lo,
            hi,
            parent,
            left: None,
            right: None,
            leaf_value: s.mean,
            leaf_value_sq: s.mean_sq,
            sample_count: s.count,
        });
        return id;
    }
    nodes.push(TreeNode {
        id,
        kind: NodeKind::Interval,
        lo,
        hi,
        parent,
        left: None,
        right: None,
        leaf_value: 0.0,
        leaf_value_sq: 0.0,
        sample_count: specs.iter().map(|s| s.count).sum(),
    });
    let mid = specs.len().div_ceil(2);
    let left = build_subtree(nodes, &specs[..mid], Some(id));
    let right = build_subtree(nodes, &specs[mid..], Some(id));
    nodes[id].left = Some(left);
    nodes[id].right = Some(right);
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::LogNormal;

    fn five_node_costs() -> Vec<f64> {
        vec![0.0, 0.0, 0.0, 4.0, 8.0, 16.0, 32.0]
    }

    #[test]
    fn build_mixed_two_leaf() {
        let t = UnbalancedCostTree::build(&five_node_costs(), 2).unwrap();
        assert_eq!(t.node_count(), 5);
        assert_eq!(t.leaf_count(), 3);
        assert_eq!(t.classifier_count(), 2);
        // Root covers the full range, left child is the zero leaf.
        let root = t.node(t.root_id());
        assert_eq!(root.lo, 0.0);
        assert_eq!(root.hi, 32.0);
        let zero = t.node(root.left.unwrap());
        assert_eq!(zero.kind, NodeKind::Zero);
        assert_eq!(zero.sample_count, 3);
        // Positive leaves: (0, 8] holds {4, 8}; (8, 32] holds {16, 32}.
        let leaves = t.leaf_ids();
        let a = t.node(leaves[1]);
        let b = t.node(leaves[2]);
        assert_eq!((a.lo, a.hi), (0.0, 8.0));
        assert_eq!(a.sample_count, 2);
        assert_abs_diff_eq!(a.leaf_value, 6.0);
        assert_abs_diff_eq!(a.leaf_value_sq, 40.0);
        assert_eq!((b.lo, b.hi), (8.0, 32.0));
        assert_eq!(b.sample_count, 2);
        assert_abs_diff_eq!(b.leaf_value, 24.0);
        assert_abs_diff_eq!(b.leaf_value_sq, 640.0);
    }

    #[test]
    fn build_merges_duplicate_boundaries() {
        // All positives equal: asking for 3 leaves collapses to 1.
        let t = UnbalancedCostTree::build(&[0.0, 0.0, 5.0, 5.0, 5.0, 5.0], 3).unwrap();
        assert_eq!(t.node_count(), 3);
        assert_eq!(t.classifier_count(), 1);
        let leaf = t.node(*t.leaf_ids().last().unwrap());
        assert_eq!((leaf.lo, leaf.hi), (0.0, 5.0));
        assert_eq!(leaf.sample_count, 4);
        assert_abs_diff_eq!(leaf.leaf_value, 5.0);
    }

    #[test]
    fn build_no_positives_degenerates() {
        let t = UnbalancedCostTree::build(&[0.0; 10], 4).unwrap();
        assert_eq!(t.node_count(), 1);
        assert_eq!(t.classifier_count(), 0);
        assert_eq!(t.leaf_ids(), &[0]);
        assert_eq!(t.node(0).sample_count, 10);
        // The single leaf absorbs everything on assignment.
        assert_eq!(t.assign_leaf(0.0).unwrap(), 0);
        assert_eq!(t.assign_leaf(7.5).unwrap(), 0);
        assert_eq!(t.leaf_distribution(&[]).unwrap(), vec![1.0]);
    }

    #[test]
    fn build_no_zeros_degenerates() {
        let t = UnbalancedCostTree::build(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(t.node_count(), 3);
        assert_eq!(t.classifier_count(), 1);
        assert_eq!(t.leaf_count(), 2);
        // Zero cost clamps to the first positive leaf.
        let first = t.leaf_ids()[0];
        assert_eq!(t.assign_leaf(0.0).unwrap(), first);
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(matches!(
            UnbalancedCostTree::build(&[], 2),
            Err(AcqError::EmptyInput(_))
        ));
        assert!(matches!(
            UnbalancedCostTree::build(&[1.0, -2.0], 2),
            Err(AcqError::NegativeCost(_))
        ));
        assert!(matches!(
            UnbalancedCostTree::build(&[1.0, 2.0], 0),
            Err(AcqError::InvalidArgument(_))
        ));
        assert!(matches!(
            UnbalancedCostTree::build(&[1.0, f64::NAN], 2),
            Err(AcqError::NonFinite(_))
        ));
    }

    /// Independent recount: bucket the sorted positives with a direct
    /// scan over the final leaf intervals and compare sizes and moments.
    #[test]
    fn build_equal_frequency_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dist = LogNormal::new(1.5, 2.0).unwrap();
        for leaf_target in [2usize, 4, 8, 16] {
            let mut costs: Vec<f64> = Vec::new();
            for _ in 0..10_000 {
                if rng.random::<f64>() < 0.8 {
                    costs.push(0.0);
                } else {
                    // Integer-quantized to force some duplicate boundaries.
                    let v: f64 = dist.sample(&mut rng);
                    costs.push(v.ceil().min(20_000.0));
                }
            }
            let t = UnbalancedCostTree::build(&costs, leaf_target).unwrap();
            let mut positives: Vec<f64> = costs.iter().copied().filter(|&c| c > 0.0).collect();
            positives.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut total = 0usize;
            for (i, &leaf) in t.leaf_ids().iter().enumerate() {
                let n = t.node(leaf);
                if n.kind == NodeKind::Zero {
                    assert_eq!(n.sample_count, costs.len() - positives.len());
                    continue;
                }
                let bucket: Vec<f64> = positives
                    .iter()
                    .copied()
                    .filter(|&c| c > n.lo && c <= n.hi)
                    .collect();
                assert_eq!(bucket.len(), n.sample_count, "leaf {i} size");
                let mean = bucket.iter().sum::<f64>() / bucket.len() as f64;
                let mean_sq = bucket.iter().map(|v| v * v).sum::<f64>() / bucket.len() as f64;
                assert_abs_diff_eq!(n.leaf_value, mean, epsilon = 1e-9);
                assert!((n.leaf_value_sq - mean_sq).abs() <= 1e-9 * mean_sq.max(1.0));
                total += bucket.len();
            }
            assert_eq!(total, positives.len());
        }
        // With all-distinct positives no boundary absorption happens and
        // the leaves are equal-frequency within one sample.
        for leaf_target in [2usize, 4, 8, 16] {
            let mut costs: Vec<f64> = vec![0.0; 1000];
            let mut seen = std::collections::BTreeSet::new();
            while seen.len() < 1000 {
                let v = (dist.sample(&mut rng) * 1e6).ceil();
                if v > 0.0 && seen.insert(v as u64) {
                    costs.push(v);
                }
            }
            let t = UnbalancedCostTree::build(&costs, leaf_target).unwrap();
            let sizes: Vec<usize> = t
                .leaf_ids()
                .iter()
                .filter(|&&l| t.node(l).kind == NodeKind::Interval)
                .map(|&l| t.node(l).sample_count)
                .collect();
            assert_eq!(sizes.len(), leaf_target);
            let lo = *sizes.iter().min().unwrap();
            let hi = *sizes.iter().max().unwrap();
            assert!(hi - lo <= 1, "unbalanced quantile leaves: {sizes:?}");
        }
    }

    #[test]
    fn assign_leaf_examples() {
        let t = UnbalancedCostTree::build(&five_node_costs(), 2).unwrap();
        let leaves = t.leaf_ids();
        assert_eq!(t.assign_leaf(0.0).unwrap(), leaves[0]);
        assert_eq!(t.assign_leaf(8.0).unwrap(), leaves[1]); // closed right edge
        assert_eq!(t.assign_leaf(8.5).unwrap(), leaves[2]);
        assert_eq!(t.assign_leaf(33.0).unwrap(), leaves[2]); // clamp above max
        assert_eq!(t.assign_leaf(0.001).unwrap(), leaves[1]);
        assert!(matches!(
            t.assign_leaf(-1.0),
            Err(AcqError::NegativeCost(_))
        ));
    }

    #[test]
    fn path_labels_examples() {
        let t = UnbalancedCostTree::build(&five_node_costs(), 2).unwrap();
        let leaves = t.leaf_ids();
        // Zero leaf: one step, left at the root.
        let p = t.path_labels(leaves[0]).unwrap();
        assert_eq!(p.steps.len(), 1);
        assert_eq!(p.steps[0].branch, Branch::Left);
        assert_eq!(p.steps[0].branch.label(), 1.0);
        // Deepest leaf: right at the root, right at the inner node.
        let p = t.path_labels(leaves[2]).unwrap();
        assert_eq!(p.steps.len(), 2);
        assert!(p.steps.iter().all(|s| s.branch == Branch::Right));
        assert!(matches!(
            t.path_labels(t.root_id()),
            Err(AcqError::NotALeaf(_))
        ));
    }

    /// Replay: walking the tree according to each path's steps must land on
    /// the path's leaf.
    #[test]
    fn path_replay_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(3..300);
            let costs: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random::<f64>() < 0.5 {
                        0.0
                    } else {
                        rng.random_range(1..=200) as f64
                    }
                })
                .collect();
            let k = rng.random_range(1..12);
            let t = match UnbalancedCostTree::build(&costs, k) {
                Ok(t) => t,
                Err(_) => continue,
            };
            for path in t.paths() {
                let mut cur = t.root_id();
                for step in &path.steps {
                    let node = t.node(cur);
                    cur = match step.branch {
                        Branch::Left => node.left.unwrap(),
                        Branch::Right => node.right.unwrap(),
                    };
                }
                assert_eq!(cur, path.leaf_id);
            }
        }
    }

    #[test]
    fn leaf_distribution_example() {
        let t = UnbalancedCostTree::build(&five_node_costs(), 2).unwrap();
        let d = t.leaf_distribution(&[0.7, 0.4]).unwrap();
        assert_abs_diff_eq!(d[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 0.3 * 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(d[2], 0.3 * 0.6, epsilon = 1e-12);
        // Degenerate probabilities concentrate all mass on one leaf.
        let d = t.leaf_distribution(&[1.0, 1.0]).unwrap();
        assert_eq!(d, vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            t.leaf_distribution(&[0.5]),
            Err(AcqError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            t.leaf_distribution(&[0.5, 1.5]),
            Err(AcqError::ProbabilityOutOfRange(_))
        ));
    }

    #[test]
    fn leaf_distribution_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let n = rng.random_range(5..500);
            let costs: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random::<f64>() < 0.6 {
                        0.0
                    } else {
                        rng.random::<f64>() * 500.0 + 0.5
                    }
                })
                .collect();
            let t = UnbalancedCostTree::build(&costs, rng.random_range(1..16)).unwrap();
            let probs: Vec<f64> = (0..t.classifier_count()).map(|_| rng.random()).collect();
            let d = t.leaf_distribution(&probs).unwrap();
            let sum: f64 = d.iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
            assert!(d.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn expected_cost_examples() {
        // Point-mass leaves {0}, {6}, {24}.
        let t = UnbalancedCostTree::build(&[0.0, 6.0, 24.0], 2).unwrap();
        let probs = [0.7, 0.12, 0.18];
        assert_abs_diff_eq!(t.expected_cost(&probs), 5.04, epsilon = 1e-12);
        assert_abs_diff_eq!(t.expected_cost_std(&probs), 9.0884, epsilon = 1e-4);
        // All mass on the zero leaf: degenerate distribution.
        assert_abs_diff_eq!(t.expected_cost(&[1.0, 0.0, 0.0]), 0.0);
        assert_abs_diff_eq!(t.expected_cost_std(&[1.0, 0.0, 0.0]), 0.0);
    }

    /// Brute-force oracle: with singleton leaves the leaf distribution is a
    /// categorical over exact values; compare mean/std against direct
    /// enumeration.
    #[test]
    fn moments_match_categorical_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let k = rng.random_range(2..9);
            let mut vals: Vec<f64> = Vec::new();
            while vals.len() < k {
                let v = rng.random_range(1..1000) as f64;
                if !vals.contains(&v) {
                    vals.push(v);
                }
            }
            let mut costs = vec![0.0];
            costs.extend(&vals);
            let t = UnbalancedCostTree::build(&costs, k).unwrap();
            assert_eq!(t.leaf_count(), k + 1);
            let mut probs: Vec<f64> = (0..t.leaf_count()).map(|_| rng.random::<f64>()).collect();
            let z: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= z);
            let values = t.leaf_values();
            let mean: f64 = probs.iter().zip(&values).map(|(p, v)| p * v).sum();
            let var: f64 = probs
                .iter()
                .zip(&values)
                .map(|(p, v)| p * (v - mean) * (v - mean))
                .sum();
            assert_abs_diff_eq!(t.expected_cost(&probs), mean, epsilon = 1e-9);
            assert_abs_diff_eq!(t.expected_cost_std(&probs), var.sqrt(), epsilon = 1e-7);
        }
    }

    #[test]
    fn text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..20 {
            let n = rng.random_range(3..200);
            let costs: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random::<f64>() < 0.5 {
                        0.0
                    } else {
                        rng.random_range(1..=200) as f64
                    }
                })
                .collect();
            let t = UnbalancedCostTree::build(&costs, rng.random_range(1..10)).unwrap();
            let text = t.to_text();
            let back = UnbalancedCostTree::from_text(&text).unwrap();
            assert_eq!(back.to_text(), text);
            assert_eq!(back.checksum(), t.checksum());
            assert_eq!(back.leaf_ids(), t.leaf_ids());
            assert_eq!(back.classifier_count(), t.classifier_count());
        }
    }

    #[test]
    fn from_text_rejects_corruption() {
        let t = UnbalancedCostTree::build(&five_node_costs(), 2).unwrap();
        let text = t.to_text();
        // Truncated body.
        let truncated: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(UnbalancedCostTree::from_text(&truncated).is_err());
        // Wrong header.
        assert!(UnbalancedCostTree::from_text("bogus").is_err());
        // A leaf redeclared as internal.
        let tampered = text.replacen("leaves 1 3 4", "leaves 1 3", 1);
        assert!(UnbalancedCostTree::from_text(&tampered).is_err());
    }

    #[test]
    fn checksum_is_stable_and_sensitive() {
        let t1 = UnbalancedCostTree::build(&five_node_costs(), 2).unwrap();
        let t2 = UnbalancedCostTree::build(&five_node_costs(), 2).unwrap();
        assert_eq!(t1.checksum(), t2.checksum());
        let t3 = UnbalancedCostTree::build(&[0.0, 0.0, 0.0, 4.0, 8.0, 16.0, 33.0], 2).unwrap();
        assert_ne!(t1.checksum(), t3.checksum());
    }
}
