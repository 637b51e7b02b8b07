//! Directed acyclic subtask graphs.
//!
//! A [`TaskGraph`] is the decomposition of one composite question: nodes are
//! natural-language subtasks, edges say that an upstream answer feeds a
//! downstream unknown, and a single sink (`final_node`) yields the answer to
//! the whole question.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bUNK_\d+\b").unwrap());

/// All `UNK_<n>` tokens in `text`, in order of appearance (duplicates kept).
pub fn placeholders(text: &str) -> Vec<&str> {
    PLACEHOLDER.find_iter(text).map(|m| m.as_str()).collect()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("malformed task graph document: {0}")]
    Parse(String),
    #[error("cycle detected: {0:?}")]
    CycleDetected(Vec<NodeId>),
    #[error("edge {from} -> {to} references a missing node")]
    DanglingEdge { from: NodeId, to: NodeId },
    #[error("final node {0} does not exist")]
    MissingFinalNode(NodeId),
    #[error("final node {0} has outgoing edges")]
    FinalNodeHasSuccessors(NodeId),
    #[error("duplicate node id {0}")]
    DuplicateNodeId(NodeId),
    #[error("node {0} has empty text")]
    EmptyText(NodeId),
    #[error("node {node} uses placeholder {placeholder} not listed in its unknowns")]
    UndeclaredPlaceholder { node: NodeId, placeholder: String },
    #[error("node {0} cannot reach the final node")]
    Disconnected(NodeId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskNode {
    pub id: NodeId,
    pub text: String,
    #[serde(default)]
    pub target_profile: String,
    #[serde(default)]
    pub unknowns: Vec<String>,
    /// Subject label; used by simulated backends and reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub from: NodeId,
    pub to: NodeId,
    #[serde(default)]
    pub relation_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGraph {
    pub nodes: Vec<SubtaskNode>,
    pub edges: Vec<DependencyEdge>,
    pub final_node: NodeId,
}

/// Payload of a solved node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAnswer {
    pub node_id: NodeId,
    pub value: Option<f64>,
    pub text: String,
    pub agent_id: String,
    pub tokens: u64,
}

impl TaskGraph {
    /// Checks every structural invariant, in a fixed order.
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut ids = BTreeSet::new();
        for node in &self.nodes {
            if !ids.insert(node.id) {
                return Err(GraphError::DuplicateNodeId(node.id));
            }
            if node.text.trim().is_empty() {
                return Err(GraphError::EmptyText(node.id));
            }
            for ph in placeholders(&node.text) {
                if !node.unknowns.iter().any(|u| u == ph) {
                    return Err(GraphError::UndeclaredPlaceholder { node: node.id, placeholder: ph.to_string() });
                }
            }
        }
        for e in &self.edges {
            if !ids.contains(&e.from) || !ids.contains(&e.to) {
                return Err(GraphError::DanglingEdge { from: e.from, to: e.to });
            }
            if e.from == e.to {
                return Err(GraphError::CycleDetected(vec![e.from]));
            }
        }
        if !ids.contains(&self.final_node) {
            return Err(GraphError::MissingFinalNode(self.final_node));
        }
        if let Some(cycle) = self.find_cycle() {
            return Err(GraphError::CycleDetected(cycle));
        }
        if self.edges.iter().any(|e| e.from == self.final_node) {
            return Err(GraphError::FinalNodeHasSuccessors(self.final_node));
        }
        // every node must reach the sink
        let mut reach = BTreeSet::from([self.final_node]);
        let mut stack = vec![self.final_node];
        while let Some(n) = stack.pop() {
            for e in self.edges.iter().filter(|e| e.to == n) {
                if reach.insert(e.from) {
                    stack.push(e.from);
                }
            }
        }
        if let Some(&lost) = ids.iter().find(|id| !reach.contains(id)) {
            return Err(GraphError::Disconnected(lost));
        }
        Ok(())
    }

    fn successors(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut out: BTreeMap<NodeId, Vec<NodeId>> = self.nodes.iter().map(|n| (n.id, Vec::new())).collect();
        for e in &self.edges {
            out.entry(e.from).or_default().push(e.to);
        }
        for v in out.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        out
    }

    /// Depth-first search for one cycle; returns its nodes in traversal order.
    fn find_cycle(&self) -> Option<Vec<NodeId>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let succ = self.successors();
        let mut mark: BTreeMap<NodeId, Mark> = succ.keys().map(|&k| (k, Mark::New)).collect();
        for &root in succ.keys() {
            if mark[&root] != Mark::New {
                continue;
            }
            // (node, next child index)
            let mut path: Vec<(NodeId, usize)> = vec![(root, 0)];
            mark.insert(root, Mark::Active);
            while let Some(&mut (node, ref mut idx)) = path.last_mut() {
                let children = &succ[&node];
                if *idx < children.len() {
                    let child = children[*idx];
                    *idx += 1;
                    match mark[&child] {
                        Mark::New => {
                            mark.insert(child, Mark::Active);
                            path.push((child, 0));
                        }
                        Mark::Active => {
                            let start = path.iter().position(|(n, _)| *n == child).unwrap();
                            return Some(path[start..].iter().map(|(n, _)| *n).collect());
                        }
                        Mark::Done => {}
                    }
                } else {
                    mark.insert(node, Mark::Done);
                    path.pop();
                }
            }
        }
        None
    }

    /// Kahn's algorithm with ascending-id tie-breaking.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, GraphError> {
        let succ = self.successors();
        let mut indegree: BTreeMap<NodeId, usize> = succ.keys().map(|&k| (k, 0)).collect();
        for children in succ.values() {
            for c in children {
                if let Some(d) = indegree.get_mut(c) {
                    *d += 1;
                }
            }
        }
        let mut heap: BinaryHeap<Reverse<NodeId>> =
            indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| Reverse(n)).collect();
        let mut order = Vec::with_capacity(indegree.len());
        while let Some(Reverse(n)) = heap.pop() {
            order.push(n);
            for c in &succ[&n] {
                let d = indegree.get_mut(c).expect("edge endpoint checked");
                *d -= 1;
                if *d == 0 {
                    heap.push(Reverse(*c));
                }
            }
        }
        if order.len() != indegree.len() {
            return Err(GraphError::CycleDetected(self.find_cycle().unwrap_or_default()));
        }
        Ok(order)
    }

    /// Uncompleted nodes whose predecessors are all in `completed`.
    pub fn ready_frontier(&self, completed: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
        self.nodes
            .iter()
            .map(|n| n.id)
            .filter(|id| !completed.contains(id))
            .filter(|id| self.edges.iter().filter(|e| e.to == *id).all(|e| completed.contains(&e.from)))
            .collect()
    }

    pub fn node(&self, id: NodeId) -> Option<&SubtaskNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Direct predecessors of `id`, ascending.
    pub fn predecessors(&self, id: NodeId) -> Vec<NodeId> {
        let mut p: Vec<NodeId> = self.edges.iter().filter(|e| e.to == id).map(|e| e.from).collect();
        p.sort_unstable();
        p.dedup();
        p
    }

    /// Incoming edges of `id`, ordered by source id.
    pub fn incoming(&self, id: NodeId) -> Vec<&DependencyEdge> {
        let mut e: Vec<&DependencyEdge> = self.edges.iter().filter(|e| e.to == id).collect();
        e.sort_by_key(|e| e.from);
        e
    }

    /// All transitive predecessors of `id`, ascending.
    pub fn ancestors(&self, id: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            for p in self.predecessors(n) {
                if seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        seen
    }

    /// Number of nodes on the longest path (the number of sequential frontier rounds).
    pub fn depth(&self) -> usize {
        let Ok(order) = self.topological_order() else {
            return 0;
        };
        let mut level: BTreeMap<NodeId, usize> = BTreeMap::new();
        for n in order {
            let l = self.predecessors(n).iter().map(|p| level[p]).max().unwrap_or(0) + 1;
            level.insert(n, l);
        }
        level.values().copied().max().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("task graph serializes")
    }
}

/// Parses and validates a task-graph JSON document. Unknown fields are ignored.
pub fn parse_task_graph(text: &str) -> Result<TaskGraph, GraphError> {
    let graph: TaskGraph = serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
    graph.validate()?;
    Ok(graph)
}
