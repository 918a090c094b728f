//! Randomized edit scripts against the knowledge tree, checked against an
//! independent bookkeeping of node supports.

use std::collections::{BTreeMap, BTreeSet};

use knowlens_core::dataset::{AttributeSpec, Column, Dataset, Value};
use knowlens_core::knowledge::{BinLayout, BinSet, KnowledgeTree, NodeId, ROOT};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const ATTRS: [&str; 4] = ["a", "b", "c", "kind"];
const MAX_LEAVES: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzReport {
    pub steps: usize,
    /// Edits the tree accepted.
    pub applied: usize,
    pub rejected: usize,
    pub violations: Vec<String>,
}

/// One embedding feature, three numeric attributes with repeated values and
/// one categorical.
pub fn fuzz_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut num =
        |levels: u32| -> Column { Column::Numeric((0..n).map(|_| rng.gen_range(0..levels) as f64 * 0.5).collect()) };
    let (e, a, b, c) = (num(10), num(40), num(7), num(3));
    let kinds = ["north", "south", "east", "west"];
    let cat: Vec<&str> = (0..n).map(|_| *kinds.choose(&mut rng).unwrap()).collect();
    let schema = vec![
        AttributeSpec::embedding("e"),
        AttributeSpec::numeric("a"),
        AttributeSpec::numeric("b"),
        AttributeSpec::numeric("c"),
        AttributeSpec::categorical("kind"),
    ];
    Dataset::from_columns(schema, vec![e, a, b, c, Column::categorical_from(&cat)]).expect("valid columns")
}

/// Node supports tracked step by step, never derived from the tree itself.
struct Shadow {
    support: BTreeMap<NodeId, BTreeSet<usize>>,
    children: BTreeMap<NodeId, Vec<NodeId>>,
    parent: BTreeMap<NodeId, NodeId>,
}

impl Shadow {
    fn new(n: usize) -> Self {
        Self {
            support: BTreeMap::from([(ROOT, (0..n).collect())]),
            children: BTreeMap::new(),
            parent: BTreeMap::new(),
        }
    }

    fn leaves(&self) -> Vec<NodeId> {
        self.support
            .keys()
            .copied()
            .filter(|id| self.children.get(id).is_none_or(|c| c.is_empty()))
            .collect()
    }

    fn drop_subtree(&mut self, node: NodeId) {
        for c in self.children.remove(&node).unwrap_or_default() {
            self.drop_subtree(c);
        }
        self.support.remove(&node);
        self.parent.remove(&node);
    }
}

fn in_bin(bins: &BinSet, value: Value<'_>, i: usize) -> bool {
    match (&bins.layout, value) {
        (BinLayout::Numeric { edges }, Value::Num(v)) => {
            let last = i + 2 == edges.len();
            v >= edges[i] && (v < edges[i + 1] || (last && v == edges[i + 1]))
        }
        (BinLayout::Categorical { values }, Value::Cat(v)) => values[i] == v,
        _ => false,
    }
}

fn random_mapping(rng: &mut ChaCha8Rng, bins: usize) -> BTreeMap<usize, usize> {
    let groups = rng.gen_range(1..=bins.clamp(1, 3));
    let mut mapping = BTreeMap::new();
    for b in 0..bins {
        if rng.gen_bool(0.85) {
            mapping.insert(b, rng.gen_range(0..groups));
        }
    }
    mapping
}

fn check(tree: &KnowledgeTree, shadow: &Shadow, ds: &Dataset, step: usize, out: &mut Vec<String>) {
    if let Err(e) = tree.check_invariants(ds) {
        out.push(format!("step {step}: {e}"));
    }
    let mut expected: Vec<Option<NodeId>> = vec![None; ds.n()];
    for leaf in shadow.leaves() {
        for &s in &shadow.support[&leaf] {
            if let Some(other) = expected[s] {
                out.push(format!("step {step}: sample {s} in leaves {other} and {leaf}"));
            }
            expected[s] = Some(leaf);
        }
    }
    match tree.assign_samples(ds) {
        Ok(got) if got == expected => {}
        Ok(got) => {
            let s = (0..ds.n()).find(|&s| got[s] != expected[s]).unwrap();
            out.push(format!(
                "step {step}: sample {s} assigned {:?}, expected {:?}",
                got[s], expected[s]
            ));
        }
        Err(e) => out.push(format!("step {step}: {e}")),
    }
    let mut tree_leaves = tree.leaves();
    tree_leaves.sort_unstable();
    if tree_leaves != shadow.leaves() {
        out.push(format!("step {step}: leaf sets differ"));
    }
}

/// Runs `steps` random create/refine/filter/delete edits. Filtering happens
/// through partial bin mappings. Every accepted edit must keep the leaves and
/// the filtered samples a partition of the dataset.
pub fn knowledge_fuzz(ds: &Dataset, steps: usize, seed: u64) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tree = KnowledgeTree::new();
    let mut shadow = Shadow::new(ds.n());
    let mut report = FuzzReport {
        steps,
        applied: 0,
        rejected: 0,
        violations: Vec::new(),
    };

    for step in 0..steps {
        let leaves = shadow.leaves();
        let non_root: Vec<NodeId> = shadow.support.keys().copied().filter(|&id| id != ROOT).collect();
        let roll: f64 = rng.gen();
        let delete = !non_root.is_empty() && (roll < 0.3 || leaves.len() > MAX_LEAVES);

        let attempt = if delete {
            let node = *non_root.choose(&mut rng).unwrap();
            tree.delete_class(node).map(|t| (t, None, Some(node)))
        } else {
            let node = if roll < 0.4 {
                ROOT
            } else {
                *leaves.choose(&mut rng).unwrap()
            };
            let attr = *ATTRS.choose(&mut rng).unwrap();
            let resolution = rng.gen_range(1..=5);
            let bins = if attr == "kind" { 4 } else { resolution };
            let mapping = random_mapping(&mut rng, bins);
            let edit = if node == ROOT {
                tree.create_classes(ds, node, attr, resolution, &mapping)
            } else {
                tree.refine_class(ds, node, attr, resolution, &mapping)
            };
            edit.map(|t| (t, Some(node), None))
        };

        let (next, split_node, deleted) = match attempt {
            Ok(v) => v,
            Err(_) => {
                report.rejected += 1;
                continue;
            }
        };
        report.applied += 1;

        if let Some(node) = split_node {
            for c in shadow.children.remove(&node).unwrap_or_default() {
                shadow.drop_subtree(c);
            }
            let split = next.node(node).unwrap().split.clone().expect("split node");
            let attr_idx = ds.attribute_index(&split.bins.attribute).unwrap();
            let mut kids = Vec::new();
            for child in split.children.iter().flatten() {
                let g = next.node(*child).unwrap().group.unwrap();
                let members: BTreeSet<usize> = shadow.support[&node]
                    .iter()
                    .copied()
                    .filter(|&s| {
                        let v = ds.value(attr_idx, s);
                        split
                            .bin_to_group
                            .iter()
                            .any(|(&b, &grp)| grp == g && in_bin(&split.bins, v, b))
                    })
                    .collect();
                shadow.support.insert(*child, members);
                shadow.parent.insert(*child, node);
                kids.push(*child);
            }
            shadow.children.insert(node, kids);
        }
        if let Some(node) = deleted {
            let parent = shadow.parent[&node];
            shadow.drop_subtree(node);
            if let Some(kids) = shadow.children.get_mut(&parent) {
                kids.retain(|&c| c != node);
            }
        }
        tree = next;
        check(&tree, &shadow, ds, step, &mut report.violations);
        if report.violations.len() > 20 {
            break;
        }
    }
    report
}
