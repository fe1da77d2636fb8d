use super::{FeedbackSpec, LayeredGraph, NodeId};
use crate::error::{bail, Result};
use serde::Serialize;
use std::collections::BTreeSet;

/// Which uncertainty sources the graph and feedback declare.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConditionReport {
    /// Stochastic terminal feedback.
    pub a1: bool,
    /// Some node computes stochastically.
    pub a2: bool,
    /// Some node sees only part of the previous layer.
    pub a3: bool,
    pub a3_witnesses: Vec<NodeId>,
}

impl ConditionReport {
    pub fn any(&self) -> bool {
        self.a1 || self.a2 || self.a3
    }
}

pub(super) fn check(g: &LayeredGraph, feedback: &FeedbackSpec) -> ConditionReport {
    let a1 = feedback.is_stochastic();
    let a2 = g.node_ids().any(|id| g.n(id).spec.noise.is_stochastic());
    let mut witnesses = Vec::new();
    for id in g.node_ids().filter(|id| id.layer > 0) {
        let node = g.n(id);
        // A projected edge reads a strict subspace of its parent, which makes
        // the node as partially observing as a missing edge would.
        let projected = node.spec.parents.iter().any(|e| e.coords.is_some());
        if node.spec.parents.len() < g.layer_len(id.layer - 1) || projected {
            witnesses.push(id);
        }
    }
    ConditionReport { a1, a2, a3: !witnesses.is_empty(), a3_witnesses: witnesses }
}

/// Nodes of the same layer sharing at least one parent with `id` (self included).
pub(super) fn siblings(g: &LayeredGraph, id: NodeId) -> Vec<NodeId> {
    if id.layer == 0 {
        return vec![id];
    }
    let mine: BTreeSet<usize> = g.n(id).spec.parents.iter().map(|e| e.parent.index).collect();
    (0..g.layer_len(id.layer))
        .map(|i| NodeId::new(id.layer, i))
        .filter(|o| g.n(*o).spec.parents.iter().any(|e| mine.contains(&e.parent.index)))
        .collect()
}

pub(super) fn extended_ancestors(g: &LayeredGraph, id: NodeId) -> Result<BTreeSet<NodeId>> {
    g.node(id)?;
    if id.layer == 0 {
        bail!(Contract, "extended ancestors are defined for non-input nodes only");
    }
    let mut memo = std::collections::HashMap::new();
    Ok(an_sib(g, id, &mut memo))
}

fn an_sib(
    g: &LayeredGraph,
    id: NodeId,
    memo: &mut std::collections::HashMap<NodeId, BTreeSet<NodeId>>,
) -> BTreeSet<NodeId> {
    if id.layer == 0 {
        return BTreeSet::new();
    }
    if let Some(s) = memo.get(&id) {
        return s.clone();
    }
    let sib = siblings(g, id);
    let mut out: BTreeSet<NodeId> = sib.iter().copied().collect();
    let parents: BTreeSet<NodeId> = sib.iter().flat_map(|s| g.parents(*s)).collect();
    for p in parents {
        out.extend(an_sib(g, p, memo));
    }
    memo.insert(id, out.clone());
    out
}
