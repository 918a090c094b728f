//! The hierarchical class tree built by the analyst.
//!
//! Each split discretizes one attribute over the splitting node's samples and
//! maps bins to groups; every group becomes a child. Bins left out of the
//! mapping filter their samples out of the subtree. Only leaves are classes.
//! The tree is a value: every edit returns a new version.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::knowledge::bins::{discretize_samples, BinSet};

pub type NodeId = u32;

pub const ROOT: NodeId = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub bins: BinSet,
    /// Bin index → dense group index. Unmapped bins are filtered out.
    pub bin_to_group: BTreeMap<usize, usize>,
    /// Child per group; `None` once that child has been deleted.
    pub children: Vec<Option<NodeId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    /// Group index within the parent's split.
    pub group: Option<usize>,
    pub color: u32,
    pub split: Option<Split>,
    /// Whether the node was a valid class when it was split; decides if it
    /// becomes a class again once all of its children are deleted.
    pub was_colorful: bool,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    pub fn live_children(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.split.iter().flat_map(|s| s.children.iter().filter_map(|c| *c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeTree {
    nodes: BTreeMap<NodeId, Node>,
    next_id: NodeId,
    next_color: u32,
}

/// Per-sample class labels derived from the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub labels: Vec<Option<usize>>,
    /// Tree node behind each class id.
    pub class_nodes: Vec<NodeId>,
    pub class_sizes: Vec<usize>,
    pub active_count: usize,
    /// Set when only one class exists; the classification loss is then
    /// identically zero.
    pub single_class: bool,
}

impl LabelAssignment {
    pub fn num_classes(&self) -> usize {
        self.class_sizes.len()
    }

    /// Active sample indices in dataset order.
    pub fn active_samples(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|_| i))
            .collect()
    }

    /// Labels for a fully labeled sample set.
    pub fn from_dense(labels: &[usize]) -> Result<Self> {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut sizes = vec![0usize; k];
        for &l in labels {
            sizes[l] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidLabels(format!("class {empty} has no samples")));
        }
        if k == 0 {
            return Err(Error::NoValidClasses);
        }
        Ok(Self {
            labels: labels.iter().map(|&l| Some(l)).collect(),
            class_nodes: (0..k as NodeId).collect(),
            class_sizes: sizes,
            active_count: labels.len(),
            single_class: k == 1,
        })
    }
}

impl Default for KnowledgeTree {
    fn default() -> Self {
        Self::new()
    }
}

impl KnowledgeTree {
    /// A root-only tree: the whole dataset is a single class.
    pub fn new() -> Self {
        let root = Node {
            id: ROOT,
            parent: None,
            group: None,
            color: 0,
            split: None,
            was_colorful: true,
        };
        Self {
            nodes: BTreeMap::from([(ROOT, root)]),
            next_id: 1,
            next_color: 1,
        }
    }

    pub fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(&id).ok_or(Error::InvalidNode(id))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    /// Leaves in depth-first order, children by group index. This is the
    /// class order of [`KnowledgeTree::derive_labels`].
    pub fn leaves(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![ROOT];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[&id];
            if node.is_leaf() {
                out.push(id);
            } else {
                let children: Vec<NodeId> = node.live_children().collect();
                stack.extend(children.into_iter().rev());
            }
        }
        out
    }

    /// The leaf each sample falls into, `None` for filtered samples.
    pub fn assign_samples(&self, ds: &Dataset) -> Result<Vec<Option<NodeId>>> {
        let attr_idx = self.split_attr_indices(ds)?;
        Ok((0..ds.n()).map(|s| self.descend(ds, &attr_idx, s, ROOT)).collect())
    }

    fn split_attr_indices(&self, ds: &Dataset) -> Result<BTreeMap<NodeId, usize>> {
        self.nodes
            .values()
            .filter_map(|n| n.split.as_ref().map(|s| (n.id, &s.bins.attribute)))
            .map(|(id, attr)| Ok((id, ds.attribute_index(attr)?)))
            .collect()
    }

    fn descend(&self, ds: &Dataset, attr_idx: &BTreeMap<NodeId, usize>, sample: usize, from: NodeId) -> Option<NodeId> {
        let mut at = from;
        loop {
            let node = &self.nodes[&at];
            let Some(split) = &node.split else {
                return Some(at);
            };
            let bin = split.bins.bin_of(ds, attr_idx[&at], sample)?;
            let group = *split.bin_to_group.get(&bin)?;
            at = split.children[group]?;
        }
    }

    /// Samples reaching `node` (its support), in dataset order.
    pub fn support(&self, ds: &Dataset, node: NodeId) -> Result<Vec<usize>> {
        self.node(node)?;
        let mut path = vec![node];
        while let Some(p) = self.nodes[path.last().unwrap()].parent {
            path.push(p);
        }
        path.reverse();
        let attr_idx = self.split_attr_indices(ds)?;
        let mut out = Vec::new();
        'samples: for s in 0..ds.n() {
            for pair in path.windows(2) {
                let (parent, child) = (pair[0], pair[1]);
                let split = self.nodes[&parent].split.as_ref().expect("parent has split");
                let Some(bin) = split.bins.bin_of(ds, attr_idx[&parent], s) else {
                    continue 'samples;
                };
                let Some(&g) = split.bin_to_group.get(&bin) else {
                    continue 'samples;
                };
                if split.children[g] != Some(child) {
                    continue 'samples;
                }
            }
            out.push(s);
        }
        Ok(out)
    }

    /// Splits `node` (the root, or any leaf) on `attr` with equal-width bins
    /// computed over the node's own samples.
    pub fn create_classes(
        &self,
        ds: &Dataset,
        node: NodeId,
        attr: &str,
        resolution: usize,
        bin_to_group: &BTreeMap<usize, usize>,
    ) -> Result<Self> {
        self.check_splittable(node)?;
        let support = self.support(ds, node)?;
        let bins = discretize_samples(ds, attr, resolution, &support)?;
        self.split_with_bins(ds, node, bins, bin_to_group)
    }

    /// Subdivides an existing class; only leaves qualify.
    pub fn refine_class(
        &self,
        ds: &Dataset,
        leaf: NodeId,
        attr: &str,
        resolution: usize,
        bin_to_group: &BTreeMap<usize, usize>,
    ) -> Result<Self> {
        if !self.node(leaf)?.is_leaf() {
            return Err(Error::InvalidNode(leaf));
        }
        self.create_classes(ds, leaf, attr, resolution, bin_to_group)
    }

    fn check_splittable(&self, node: NodeId) -> Result<()> {
        let n = self.node(node)?;
        if node != ROOT && !n.is_leaf() {
            return Err(Error::InvalidNode(node));
        }
        Ok(())
    }

    /// Splits with caller-supplied bins (e.g. explicit edges). Re-splitting
    /// the root replaces the whole tree below it.
    pub fn split_with_bins(
        &self,
        ds: &Dataset,
        node: NodeId,
        bins: BinSet,
        bin_to_group: &BTreeMap<usize, usize>,
    ) -> Result<Self> {
        self.check_splittable(node)?;
        if bin_to_group.is_empty() {
            return Err(Error::InvalidGrouping("no bin is mapped to a group".into()));
        }
        if let Some((&bin, _)) = bin_to_group.iter().find(|(&b, _)| b >= bins.len()) {
            return Err(Error::InvalidGrouping(format!(
                "bin {bin} out of range ({} bins)",
                bins.len()
            )));
        }
        let attr_idx = ds.attribute_index(&bins.attribute)?;

        // dense group ids in ascending order of the caller's ids
        let distinct: BTreeSet<usize> = bin_to_group.values().copied().collect();
        let dense: BTreeMap<usize, usize> = distinct.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        let mapping: BTreeMap<usize, usize> = bin_to_group.iter().map(|(&b, g)| (b, dense[g])).collect();

        let support = self.support(ds, node)?;
        let mut counts = vec![0usize; distinct.len()];
        for &s in &support {
            if let Some(g) = bins.bin_of(ds, attr_idx, s).and_then(|b| mapping.get(&b)) {
                counts[*g] += 1;
            }
        }
        if let Some(g) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyGroup(g));
        }

        let mut next = self.clone();
        next.remove_descendants(node);
        let mut children = Vec::with_capacity(distinct.len());
        for g in 0..distinct.len() {
            let id = next.next_id;
            next.next_id += 1;
            let color = next.next_color;
            next.next_color += 1;
            next.nodes.insert(
                id,
                Node {
                    id,
                    parent: Some(node),
                    group: Some(g),
                    color,
                    split: None,
                    was_colorful: true,
                },
            );
            children.push(Some(id));
        }
        let target = next.nodes.get_mut(&node).expect("checked above");
        if target.is_leaf() {
            target.was_colorful = true;
        }
        target.split = Some(Split {
            bins,
            bin_to_group: mapping,
            children,
        });
        Ok(next)
    }

    fn remove_descendants(&mut self, node: NodeId) {
        let children: Vec<NodeId> = self.nodes[&node].live_children().collect();
        for c in children {
            self.remove_descendants(c);
            self.nodes.remove(&c);
        }
    }

    /// Removes a node and its subtree; its samples become filtered. A parent
    /// left without children turns back into a class if it was one before
    /// being split.
    pub fn delete_class(&self, node: NodeId) -> Result<Self> {
        if node == ROOT {
            return Err(Error::CannotDeleteRoot);
        }
        let target = self.node(node)?;
        let parent = target.parent.expect("non-root nodes have parents");
        let group = target.group.expect("non-root nodes have a group");

        let mut next = self.clone();
        next.remove_descendants(node);
        next.nodes.remove(&node);
        let p = next.nodes.get_mut(&parent).expect("parent exists");
        let split = p.split.as_mut().expect("parent has a split");
        split.children[group] = None;
        if split.children.iter().all(Option::is_none) && p.was_colorful {
            p.split = None;
        }
        Ok(next)
    }

    /// Dense class ids over the leaves, in [`KnowledgeTree::leaves`] order.
    pub fn derive_labels(&self, ds: &Dataset) -> Result<LabelAssignment> {
        let leaves = self.leaves();
        if leaves.is_empty() {
            return Err(Error::NoValidClasses);
        }
        let class_of: BTreeMap<NodeId, usize> = leaves.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let assignment = self.assign_samples(ds)?;
        let mut sizes = vec![0usize; leaves.len()];
        let labels: Vec<Option<usize>> = assignment
            .iter()
            .map(|leaf| {
                leaf.map(|id| {
                    let c = class_of[&id];
                    sizes[c] += 1;
                    c
                })
            })
            .collect();
        // an empty leaf is not a class
        if sizes.contains(&0) {
            let keep: Vec<usize> = (0..leaves.len()).filter(|&c| sizes[c] > 0).collect();
            if keep.is_empty() {
                return Err(Error::NoValidClasses);
            }
            let remap: BTreeMap<usize, usize> = keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
            let labels = labels.iter().map(|l| l.map(|c| remap[&c])).collect();
            let class_nodes = keep.iter().map(|&c| leaves[c]).collect();
            let class_sizes: Vec<usize> = keep.iter().map(|&c| sizes[c]).collect();
            let active_count = class_sizes.iter().sum();
            return Ok(LabelAssignment {
                labels,
                class_nodes,
                single_class: class_sizes.len() == 1,
                class_sizes,
                active_count,
            });
        }
        let active_count = sizes.iter().sum();
        Ok(LabelAssignment {
            labels,
            class_nodes: leaves,
            single_class: sizes.len() == 1,
            class_sizes: sizes,
            active_count,
        })
    }

    /// Bins that currently define classes: `(node, bin index)` for every bin
    /// mapped to a live child. Filtered bins are excluded.
    pub fn live_bins(&self) -> Vec<(NodeId, usize)> {
        let mut out = Vec::new();
        for node in self.nodes.values() {
            if let Some(split) = &node.split {
                for (&bin, &g) in &split.bin_to_group {
                    if split.children[g].is_some() {
                        out.push((node.id, bin));
                    }
                }
            }
        }
        out
    }

    /// Structural self-check used by tests and the session layer.
    pub fn check_invariants(&self, ds: &Dataset) -> std::result::Result<(), String> {
        let root = self.nodes.get(&ROOT).ok_or("missing root")?;
        if root.parent.is_some() {
            return Err("root has a parent".into());
        }
        for node in self.nodes.values() {
            if let Some(split) = &node.split {
                if split.children.iter().all(Option::is_none) && node.was_colorful {
                    return Err(format!("node {} has an empty split", node.id));
                }
                for (g, child) in split.children.iter().enumerate() {
                    if let Some(c) = child {
                        let child = self.nodes.get(c).ok_or(format!("dangling child {c}"))?;
                        if child.parent != Some(node.id) || child.group != Some(g) {
                            return Err(format!("child {c} has inconsistent back-links"));
                        }
                    }
                }
            }
            if let Some(p) = node.parent {
                let parent = self.nodes.get(&p).ok_or(format!("dangling parent {p}"))?;
                let g = node.group.ok_or("non-root without group")?;
                let linked = parent.split.as_ref().and_then(|s| s.children.get(g).copied().flatten());
                if linked != Some(node.id) {
                    return Err(format!("node {} is not linked from its parent", node.id));
                }
            }
        }
        let assignment = self.assign_samples(ds).map_err(|e| e.to_string())?;
        for (&id, node) in &self.nodes {
            if node.is_leaf() && !assignment.contains(&Some(id)) {
                return Err(format!("leaf {id} has no samples"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AttributeSpec, Column};

    fn ds() -> Dataset {
        // 8 samples: c in {a,b,c,d} twice each, v = 0..8
        Dataset::from_columns(
            vec![
                AttributeSpec::embedding("f"),
                AttributeSpec::categorical("c"),
                AttributeSpec::numeric("v"),
            ],
            vec![
                Column::Numeric(vec![0.0; 8]),
                Column::categorical_from(&["a", "b", "c", "d", "a", "b", "c", "d"]),
                Column::Numeric((0..8).map(f64::from).collect()),
            ],
        )
        .unwrap()
    }

    fn identity(n: usize) -> BTreeMap<usize, usize> {
        (0..n).map(|i| (i, i)).collect()
    }

    #[test]
    fn root_only_tree_is_single_class() {
        let ds = ds();
        let labels = KnowledgeTree::new().derive_labels(&ds).unwrap();
        assert!(labels.single_class);
        assert_eq!(labels.labels, vec![Some(0); 8]);
        assert_eq!(labels.class_sizes, vec![8]);
    }

    #[test]
    fn one_group_split_keeps_support() {
        let ds = ds();
        let all_one: BTreeMap<usize, usize> = (0..4).map(|b| (b, 0)).collect();
        let tree = KnowledgeTree::new()
            .create_classes(&ds, ROOT, "c", 1, &all_one)
            .unwrap();
        let leaves = tree.leaves();
        assert_eq!(leaves.len(), 1);
        assert_eq!(tree.support(&ds, leaves[0]).unwrap(), (0..8).collect::<Vec<_>>());
        assert!(!tree.node(ROOT).unwrap().is_leaf());
    }

    #[test]
    fn partial_cover_filters_samples() {
        let ds = ds();
        let map = BTreeMap::from([(0, 0), (1, 1)]);
        let tree = KnowledgeTree::new().create_classes(&ds, ROOT, "c", 1, &map).unwrap();
        let labels = tree.derive_labels(&ds).unwrap();
        assert_eq!(labels.active_count, 4);
        assert_eq!(labels.labels[2], None);
        assert_eq!(tree.live_bins(), vec![(ROOT, 0), (ROOT, 1)]);
    }

    #[test]
    fn empty_group_and_bad_nodes() {
        let ds = ds();
        let tree = KnowledgeTree::new()
            .create_classes(&ds, ROOT, "c", 1, &identity(4))
            .unwrap();
        let leaf = tree.leaves()[0];
        // leaf "a" holds v = 0 and 4; v-bins over [0, 4] with resolution 4
        // leave the middle bins empty
        let err = tree
            .refine_class(&ds, leaf, "v", 4, &BTreeMap::from([(1, 0), (3, 1)]))
            .unwrap_err();
        assert_eq!(err, Error::EmptyGroup(0));
        assert_eq!(
            tree.refine_class(&ds, 99, "v", 2, &identity(2)).unwrap_err(),
            Error::InvalidNode(99)
        );
        let refined = tree.refine_class(&ds, leaf, "v", 2, &identity(2)).unwrap();
        assert_eq!(
            refined.create_classes(&ds, leaf, "v", 2, &identity(2)).unwrap_err(),
            Error::InvalidNode(leaf)
        );
        assert!(matches!(
            tree.create_classes(&ds, ROOT, "c", 1, &BTreeMap::new()),
            Err(Error::InvalidGrouping(_))
        ));
        assert!(matches!(
            tree.create_classes(&ds, ROOT, "c", 1, &BTreeMap::from([(9, 0)])),
            Err(Error::InvalidGrouping(_))
        ));
    }

    #[test]
    fn refine_and_delete() {
        let ds = ds();
        let tree = KnowledgeTree::new()
            .create_classes(&ds, ROOT, "c", 1, &BTreeMap::from([(0, 0), (1, 0), (2, 1), (3, 1)]))
            .unwrap();
        let ab = tree.leaves()[0];
        let refined = tree.refine_class(&ds, ab, "c", 1, &identity(2)).unwrap();
        assert_eq!(refined.leaves().len(), 3);
        let labels = refined.derive_labels(&ds).unwrap();
        assert_eq!(labels.class_sizes, vec![2, 2, 4]);

        let a_leaf = refined.leaves()[0];
        let deleted = refined.delete_class(a_leaf).unwrap();
        let labels = deleted.derive_labels(&ds).unwrap();
        assert_eq!(labels.labels[0], None);
        assert_eq!(labels.labels[4], None);
        assert_eq!(labels.active_count, 6);

        // removing the last child turns the parent back into a class
        let b_leaf = deleted.leaves()[0];
        let restored = deleted.delete_class(b_leaf).unwrap();
        assert!(restored.node(ab).unwrap().is_leaf());
        assert_eq!(restored.derive_labels(&ds).unwrap().active_count, 8);

        assert_eq!(tree.delete_class(ROOT).unwrap_err(), Error::CannotDeleteRoot);
        assert_eq!(tree.delete_class(42).unwrap_err(), Error::InvalidNode(42));
    }

    #[test]
    fn labels_are_pure_and_serializable() {
        let ds = ds();
        let tree = KnowledgeTree::new()
            .create_classes(&ds, ROOT, "v", 3, &identity(3))
            .unwrap();
        let a = serde_json::to_vec(&tree.derive_labels(&ds).unwrap()).unwrap();
        let b = serde_json::to_vec(&tree.derive_labels(&ds).unwrap()).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_string(&tree).unwrap();
        let back: KnowledgeTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tree);
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    #[test]
    fn resplitting_root_replaces_tree() {
        let ds = ds();
        let tree = KnowledgeTree::new()
            .create_classes(&ds, ROOT, "c", 1, &identity(4))
            .unwrap();
        let again = tree.create_classes(&ds, ROOT, "v", 2, &identity(2)).unwrap();
        assert_eq!(again.leaves().len(), 2);
        assert_eq!(again.nodes().count(), 3);
        again.check_invariants(&ds).unwrap();
    }
}
