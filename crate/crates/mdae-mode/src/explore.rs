//! Reachability over instant-start configurations.
//!
//! Guard valuations are treated as free oracles: at every configuration each
//! admissible combination of guard values is tried. Admissibility is purely
//! structural — a transient guard true at the previous instant is forced
//! false, a rising-edge guard takes its derived value, and at the initial
//! instant the declared guard initial values apply. The result is a finite
//! automaton whose transitions record what each instant does: assumed mode,
//! deletions/solve schedule, and the tick to the next configuration. Failed
//! instants are kept as terminal nodes with their diagnosis.

use std::collections::{BTreeMap, VecDeque};

use serde_json::json;

use crate::instant::{run_instant, Instant, InstantFail};
use crate::{CompiledModel, Node, Valuation};

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// An instant-start configuration.
    Start(Node),
    /// A configuration with its guards valued, before solving.
    Valued,
    /// The instant solved successfully.
    Solved,
    /// The instant failed; terminal.
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoNode {
    pub kind: NodeKind,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Guard valuation chosen.
    Assume,
    /// Structural selection, conflict resolution and evaluation.
    Solve,
    /// Hand-over to the next instant.
    Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoEdge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
    pub label: String,
    /// Index into [`ModeAutomaton::runs`] for `Solve` edges.
    pub run: Option<usize>,
    /// Filled in by impulse analysis: does this transition drive any
    /// variable impulsively?
    pub impulsive: Option<bool>,
}

/// One executed (or failed) instant during exploration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub start: Node,
    pub valuation: Valuation,
    pub outcome: Result<Instant, InstantFail>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeAutomaton {
    pub nodes: Vec<AutoNode>,
    pub edges: Vec<AutoEdge>,
    pub runs: Vec<RunRecord>,
    /// True when exploration stopped at the node cap.
    pub truncated: bool,
}

impl ModeAutomaton {
    pub fn tick_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Tick).count()
    }

    pub fn fail_nodes(&self) -> Vec<&AutoNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Fail).collect()
    }

    /// Start-to-start transitions as (from, to) pairs of start-node ids, one
    /// per successful run.
    pub fn instant_transitions(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for assume in self.edges.iter().filter(|e| e.kind == EdgeKind::Assume) {
            let mut cur = assume.to;
            loop {
                match self.edges.iter().find(|e| e.from == cur) {
                    Some(next) if next.kind == EdgeKind::Tick => {
                        out.push((assume.from, next.to));
                        break;
                    }
                    Some(next) => cur = next.to,
                    None => break,
                }
            }
        }
        out
    }

    pub fn to_json(&self, cm: &CompiledModel) -> serde_json::Value {
        let nodes: Vec<_> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                json!({
                    "id": i,
                    "kind": match n.kind {
                        NodeKind::Start(_) => "start",
                        NodeKind::Valued => "valued",
                        NodeKind::Solved => "solved",
                        NodeKind::Fail => "fail",
                    },
                    "label": n.label,
                })
            })
            .collect();
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| {
                let deletions = e
                    .run
                    .and_then(|r| self.runs[r].outcome.as_ref().ok())
                    .map(|i| {
                        i.deleted.iter().map(|&d| cm.eq_label(d)).collect::<Vec<_>>()
                    })
                    .unwrap_or_default();
                json!({
                    "from": e.from,
                    "to": e.to,
                    "kind": match e.kind {
                        EdgeKind::Assume => "assume",
                        EdgeKind::Solve => "solve",
                        EdgeKind::Tick => "tick",
                    },
                    "label": e.label,
                    "deletions": deletions,
                    "impulsive": e.impulsive,
                })
            })
            .collect();
        json!({ "nodes": nodes, "edges": edges, "truncated": self.truncated })
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph modes {\n  rankdir=LR;\n");
        for (i, n) in self.nodes.iter().enumerate() {
            let (shape, extra) = match n.kind {
                NodeKind::Start(_) => ("ellipse", ", style=bold"),
                NodeKind::Valued => ("box", ""),
                NodeKind::Solved => ("box", ", style=rounded"),
                NodeKind::Fail => ("octagon", ", color=red"),
            };
            out.push_str(&format!(
                "  n{} [label=\"{}\", shape={}{}];\n",
                i,
                n.label.replace('"', "'"),
                shape,
                extra
            ));
        }
        for e in &self.edges {
            let style = match e.kind {
                EdgeKind::Assume => "dashed",
                EdgeKind::Solve => "solid",
                EdgeKind::Tick => "bold",
            };
            let color = if e.impulsive == Some(true) { ", color=red" } else { "" };
            out.push_str(&format!(
                "  n{} -> n{} [label=\"{}\", style={}{}];\n",
                e.from,
                e.to,
                e.label.replace('"', "'"),
                style,
                color
            ));
        }
        out.push_str("}\n");
        out
    }
}

/// Admissible complete valuations at a configuration, in a deterministic
/// order.
pub fn valuations_at(cm: &CompiledModel, node: &Node) -> Vec<Valuation> {
    let mut fixed: Valuation = Valuation::new();
    let mut derived: Vec<(usize, usize)> = Vec::new();
    let mut free: Vec<usize> = Vec::new();

    for (g, info) in cm.guards.iter().enumerate() {
        if let Some(&b) = node.pinned.get(&g) {
            fixed.insert(g, b);
        } else if let Some(base) = info.rising_edge_of {
            if node.prev.contains_key(&base) {
                derived.push((g, base));
            } else {
                // No history and not pinned: a rising edge cannot have fired.
                fixed.insert(g, false);
            }
        } else if info.transient && node.prev.get(&g) == Some(&true) {
            // Transient modes last one instant.
            fixed.insert(g, false);
        } else {
            free.push(g);
        }
    }

    let mut out = Vec::with_capacity(1 << free.len());
    assert!(free.len() < 20, "guard enumeration over {} guards refused", free.len());
    for bits in 0..(1u64 << free.len()) {
        let mut val = fixed.clone();
        for (k, &g) in free.iter().enumerate() {
            val.insert(g, bits & (1 << k) != 0);
        }
        // Derived guards may chain (a rising edge over a rising edge), so
        // resolve until stable.
        let mut pending = derived.clone();
        while !pending.is_empty() {
            let before = pending.len();
            pending.retain(|&(g, base)| match val.get(&base) {
                Some(&cur) => {
                    let was = node.prev.get(&base).copied().unwrap_or(false);
                    val.insert(g, !was && cur);
                    false
                }
                None => true,
            });
            if pending.len() == before {
                for &(g, _) in &pending {
                    val.insert(g, false);
                }
                break;
            }
        }
        out.push(val);
    }
    out
}

fn start_label(cm: &CompiledModel, node: &Node) -> String {
    let ctx: Vec<String> = node.delta.iter().map(|&e| cm.eq_label(e)).collect();
    let mut label = format!("ctx:{{{}}}", ctx.join(","));
    if !node.prev.is_empty() {
        let prev: Vec<String> = node
            .prev
            .iter()
            .map(|(&g, &b)| format!("{}{}", if b { "" } else { "!" }, cm.guards[g].name))
            .collect();
        label.push_str(&format!(" after:{{{}}}", prev.join(",")));
    }
    if !node.pinned.is_empty() {
        label.push_str(" (init)");
    }
    label
}

fn mode_label(cm: &CompiledModel, val: &Valuation) -> String {
    val.iter()
        .map(|(&g, &v)| {
            format!("{}{}", if v { "" } else { "!" }, cm.guards[g].name)
        })
        .collect::<Vec<_>>()
        .join(" & ")
}

/// Breadth-first exploration from the initial configuration, stopping at
/// `cap` nodes.
pub fn explore(cm: &CompiledModel, cap: usize) -> ModeAutomaton {
    let mut auto = ModeAutomaton {
        nodes: Vec::new(),
        edges: Vec::new(),
        runs: Vec::new(),
        truncated: false,
    };
    let mut start_ids: BTreeMap<Node, usize> = BTreeMap::new();
    let mut queue: VecDeque<usize> = VecDeque::new();

    let init = cm.initial_node();
    auto.nodes.push(AutoNode { kind: NodeKind::Start(init.clone()), label: start_label(cm, &init) });
    start_ids.insert(init, 0);
    queue.push_back(0);

    while let Some(nid) = queue.pop_front() {
        if auto.nodes.len() >= cap {
            auto.truncated = true;
            break;
        }
        let node = match &auto.nodes[nid].kind {
            NodeKind::Start(n) => n.clone(),
            _ => continue,
        };
        for val in valuations_at(cm, &node) {
            let vid = auto.nodes.len();
            auto.nodes.push(AutoNode { kind: NodeKind::Valued, label: mode_label(cm, &val) });
            auto.edges.push(AutoEdge {
                from: nid,
                to: vid,
                kind: EdgeKind::Assume,
                label: mode_label(cm, &val),
                run: None,
                impulsive: None,
            });

            let outcome = run_instant(cm, &node, &val);
            let run_id = auto.runs.len();
            auto.runs.push(RunRecord {
                start: node.clone(),
                valuation: val.clone(),
                outcome: outcome.clone(),
            });

            match outcome {
                Ok(instant) => {
                    let sid = auto.nodes.len();
                    let label = if instant.deleted.is_empty() {
                        "solve".to_string()
                    } else {
                        format!(
                            "delete {{{}}}",
                            instant
                                .deleted
                                .iter()
                                .map(|&e| cm.eq_label(e))
                                .collect::<Vec<_>>()
                                .join(",")
                        )
                    };
                    auto.nodes.push(AutoNode { kind: NodeKind::Solved, label: label.clone() });
                    auto.edges.push(AutoEdge {
                        from: vid,
                        to: sid,
                        kind: EdgeKind::Solve,
                        label,
                        run: Some(run_id),
                        impulsive: None,
                    });

                    let next = instant.next.clone();
                    let tgt = *start_ids.entry(next.clone()).or_insert_with(|| {
                        let id = auto.nodes.len();
                        auto.nodes.push(AutoNode {
                            kind: NodeKind::Start(next.clone()),
                            label: start_label(cm, &next),
                        });
                        queue.push_back(id);
                        id
                    });
                    auto.edges.push(AutoEdge {
                        from: sid,
                        to: tgt,
                        kind: EdgeKind::Tick,
                        label: "tick".to_string(),
                        run: None,
                        impulsive: None,
                    });
                }
                Err(fail) => {
                    let fid = auto.nodes.len();
                    auto.nodes.push(AutoNode { kind: NodeKind::Fail, label: fail.to_string() });
                    auto.edges.push(AutoEdge {
                        from: vid,
                        to: fid,
                        kind: EdgeKind::Solve,
                        label: "fail".to_string(),
                        run: Some(run_id),
                        impulsive: None,
                    });
                }
            }
        }
    }
    auto
}
