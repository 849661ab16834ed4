//! Weighted bipartite graphs between equations and variables.
//!
//! This crate is the structural backbone of the analyzer: everything upstream
//! (offset computation, conflict resolution, block scheduling) reduces to a
//! handful of graph questions about an equation/variable incidence graph:
//!
//! * does a matching exist that covers every equation, and what is the
//!   heaviest such matching ([`max_cardinality_matching`],
//!   [`max_weight_complete_matching`]);
//! * which equations are over- or under-determined once the known variables
//!   are removed from play ([`dulmage_mendelsohn`]);
//! * in what order can the square part be solved block by block
//!   ([`block_triangular_form`]).
//!
//! Graphs are immutable after construction and all algorithms are
//! deterministic: ties are broken by (equation index, variable index), so two
//! runs over the same model produce identical artifacts.

use std::collections::VecDeque;

use serde_json::json;
use thiserror::Error;

/// Errors produced by matching construction.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    /// No matching covers every equation; the offending graph is
    /// structurally singular. Carries the equations left uncovered by a
    /// maximum-cardinality matching as a diagnosis hint.
    #[error("no complete matching: equations {0:?} cannot all be covered")]
    NoCompleteMatching(Vec<String>),
}

/// A bipartite graph between equations (rows) and variables (columns), with a
/// nonnegative integer weight per edge.
///
/// Weights carry the maximal shift degree of a variable inside an equation;
/// the pure structural algorithms ignore them. At most one edge per
/// (equation, variable) pair is kept — inserting a duplicate keeps the larger
/// weight, which matches how incidence is accumulated from expressions.
#[derive(Debug, Clone)]
pub struct BipGraph {
    eq_names: Vec<String>,
    var_names: Vec<String>,
    /// Adjacency per equation, sorted by variable index, no duplicates.
    rows: Vec<Vec<(usize, u32)>>,
}

impl BipGraph {
    /// Creates a graph with the given node sets and no edges.
    pub fn new(eq_names: Vec<String>, var_names: Vec<String>) -> Self {
        let rows = vec![Vec::new(); eq_names.len()];
        BipGraph { eq_names, var_names, rows }
    }

    /// Inserts an edge. A repeated (eq, var) pair keeps the maximum weight.
    ///
    /// Panics if either index is out of range, which would indicate a
    /// construction bug in the caller.
    pub fn add_edge(&mut self, eq: usize, var: usize, weight: u32) {
        assert!(eq < self.eq_names.len(), "equation index out of range");
        assert!(var < self.var_names.len(), "variable index out of range");
        let row = &mut self.rows[eq];
        match row.binary_search_by_key(&var, |&(v, _)| v) {
            Ok(i) => row[i].1 = row[i].1.max(weight),
            Err(i) => row.insert(i, (var, weight)),
        }
    }

    pub fn n_eqs(&self) -> usize {
        self.eq_names.len()
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn eq_name(&self, eq: usize) -> &str {
        &self.eq_names[eq]
    }

    pub fn var_name(&self, var: usize) -> &str {
        &self.var_names[var]
    }

    /// Adjacency of one equation: (variable, weight) pairs sorted by
    /// variable index.
    pub fn row(&self, eq: usize) -> &[(usize, u32)] {
        &self.rows[eq]
    }

    /// Weight of the (eq, var) edge, if present.
    pub fn edge_weight(&self, eq: usize, var: usize) -> Option<u32> {
        let row = &self.rows[eq];
        row.binary_search_by_key(&var, |&(v, _)| v).ok().map(|i| row[i].1)
    }

    /// All edges as (eq, var, weight), ordered by (eq, var).
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(e, row)| row.iter().map(move |&(v, w)| (e, v, w)))
    }

    /// GraphViz rendering of the bipartite graph. Matched edges, if a
    /// matching is supplied, are drawn bold.
    pub fn to_dot(&self, matching: Option<&Matching>) -> String {
        let mut out = String::from("graph structure {\n  rankdir=LR;\n");
        for (e, name) in self.eq_names.iter().enumerate() {
            out.push_str(&format!("  e{e} [shape=box, label=\"{name}\"];\n"));
        }
        for (v, name) in self.var_names.iter().enumerate() {
            out.push_str(&format!("  v{v} [shape=ellipse, label=\"{name}\"];\n"));
        }
        for (e, v, w) in self.edges() {
            let matched = matching.map_or(false, |m| m.eq_to_var[e] == Some(v));
            let style = if matched { ", style=bold" } else { "" };
            out.push_str(&format!("  e{e} -- v{v} [label=\"{w}\"{style}];\n"));
        }
        out.push_str("}\n");
        out
    }
}

/// A matching: a set of edges no two of which share a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    /// Per equation, the matched variable if any.
    pub eq_to_var: Vec<Option<usize>>,
    /// Per variable, the matched equation if any.
    pub var_to_eq: Vec<Option<usize>>,
}

impl Matching {
    fn empty(n_eqs: usize, n_vars: usize) -> Self {
        Matching { eq_to_var: vec![None; n_eqs], var_to_eq: vec![None; n_vars] }
    }

    /// Number of matched pairs.
    pub fn cardinality(&self) -> usize {
        self.eq_to_var.iter().filter(|m| m.is_some()).count()
    }

    /// True when every equation is covered.
    pub fn is_complete(&self) -> bool {
        self.eq_to_var.iter().all(|m| m.is_some())
    }

    /// Total weight of the matched edges in `g`.
    pub fn weight(&self, g: &BipGraph) -> u64 {
        self.eq_to_var
            .iter()
            .enumerate()
            .filter_map(|(e, m)| m.map(|v| g.edge_weight(e, v).unwrap_or(0) as u64))
            .sum()
    }

    /// Matched pairs ordered by equation index.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.eq_to_var
            .iter()
            .enumerate()
            .filter_map(|(e, m)| m.map(|v| (e, v)))
    }
}

/// Computes a maximum-cardinality matching (Hopcroft–Karp).
///
/// Deterministic: layers and augmenting paths are scanned in node order.
pub fn max_cardinality_matching(g: &BipGraph) -> Matching {
    let n_eqs = g.n_eqs();
    let mut m = Matching::empty(n_eqs, g.n_vars());
    if n_eqs == 0 {
        return m;
    }

    // dist[e]: BFS layer of equation e in the alternating level graph.
    const INF: u32 = u32::MAX;
    let mut dist = vec![INF; n_eqs];
    let mut queue = VecDeque::new();

    loop {
        // BFS from unmatched equations to build layers.
        queue.clear();
        for e in 0..n_eqs {
            if m.eq_to_var[e].is_none() {
                dist[e] = 0;
                queue.push_back(e);
            } else {
                dist[e] = INF;
            }
        }
        let mut found_free_var = false;
        while let Some(e) = queue.pop_front() {
            for &(v, _) in g.row(e) {
                match m.var_to_eq[v] {
                    None => found_free_var = true,
                    Some(e2) => {
                        if dist[e2] == INF {
                            dist[e2] = dist[e] + 1;
                            queue.push_back(e2);
                        }
                    }
                }
            }
        }
        if !found_free_var {
            break;
        }
        // DFS phase: augment along the level graph.
        for e in 0..n_eqs {
            if m.eq_to_var[e].is_none() {
                augment(g, e, &mut m, &mut dist);
            }
        }
    }
    m
}

/// Tries to extend the matching with an augmenting path starting at the
/// unmatched equation `e`, restricted to the BFS level graph. Returns true
/// and flips the path if one is found.
fn augment(g: &BipGraph, e: usize, m: &mut Matching, dist: &mut [u32]) -> bool {
    for &(v, _) in g.row(e) {
        let ok = match m.var_to_eq[v] {
            None => true,
            Some(e2) => dist[e2] == dist[e] + 1 && augment(g, e2, m, dist),
        };
        if ok {
            m.eq_to_var[e] = Some(v);
            m.var_to_eq[v] = Some(e);
            return true;
        }
    }
    // Dead end: take e out of this phase.
    dist[e] = u32::MAX;
    false
}

/// True iff some matching covers every equation.
pub fn exists_complete_matching(g: &BipGraph) -> bool {
    max_cardinality_matching(g).is_complete()
}

/// Computes a complete matching of maximum total weight.
///
/// Implemented as an assignment problem: equations are inserted one at a
/// time and each insertion augments along a minimum-cost alternating path
/// (costs are negated weights; Bellman–Ford suffices at the sizes this
/// analyzer meets). Any maximizer is acceptable downstream — offsets and
/// block structure are matching-independent — but the construction is
/// deterministic for reproducible artifacts.
pub fn max_weight_complete_matching(g: &BipGraph) -> Result<Matching, GraphError> {
    let n_eqs = g.n_eqs();
    let n_vars = g.n_vars();
    let mut m = Matching::empty(n_eqs, n_vars);

    for start in 0..n_eqs {
        // Shortest alternating path from `start` to any unmatched variable,
        // where traversing eq -> var costs -w(eq, var) and walking back a
        // matched edge var -> eq refunds +w(eq, var).
        let mut eq_dist = vec![i64::MAX; n_eqs];
        let mut var_dist = vec![i64::MAX; n_vars];
        // Predecessor equation for each variable on the best path.
        let mut var_pred = vec![usize::MAX; n_vars];
        eq_dist[start] = 0;

        // Bellman–Ford style relaxation: each round extends paths by one
        // eq->var->eq hop, so n_eqs rounds reach every alternating path.
        for _ in 0..=n_eqs {
            let mut changed = false;
            for e in 0..n_eqs {
                if eq_dist[e] == i64::MAX {
                    continue;
                }
                for &(v, w) in g.row(e) {
                    let cand = eq_dist[e] - w as i64;
                    if cand < var_dist[v] {
                        var_dist[v] = cand;
                        var_pred[v] = e;
                        if let Some(e2) = m.var_to_eq[v] {
                            let back = cand + g.edge_weight(e2, v).unwrap_or(0) as i64;
                            if back < eq_dist[e2] {
                                eq_dist[e2] = back;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }

        // Best reachable unmatched variable; ties go to the lowest index.
        let target = (0..n_vars)
            .filter(|&v| m.var_to_eq[v].is_none() && var_dist[v] < i64::MAX)
            .min_by_key(|&v| (var_dist[v], v));
        let Some(mut v) = target else {
            let unmatched: Vec<String> = (start..n_eqs)
                .filter(|&e| m.eq_to_var[e].is_none() || e == start)
                .map(|e| g.eq_name(e).to_string())
                .collect();
            return Err(GraphError::NoCompleteMatching(unmatched));
        };

        // Flip the alternating path back to `start`.
        loop {
            let e = var_pred[v];
            let prev = m.eq_to_var[e];
            m.eq_to_var[e] = Some(v);
            m.var_to_eq[v] = Some(e);
            match prev {
                Some(pv) => v = pv,
                None => break,
            }
        }
    }
    Ok(m)
}

/// The three-way Dulmage–Mendelsohn partition of a graph, plus the block
/// triangular form of its square part.
///
/// Every equation and every dependent variable lands in exactly one of
/// `under`, `enabled`, `over`. The partition does not depend on which
/// maximum matching the implementation happened to find.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DmResult {
    /// Underdetermined part: fewer equations than variables.
    pub under: (Vec<usize>, Vec<usize>),
    /// Square, structurally nonsingular part.
    pub enabled: (Vec<usize>, Vec<usize>),
    /// Overdetermined part: more equations than variables. An equation with
    /// no incident dependent variable at all always lands here.
    pub over: (Vec<usize>, Vec<usize>),
    /// Indecomposable blocks of the enabled part, in solve order.
    pub btf: Vec<Block>,
    /// The matching used, for callers that go on to schedule solves.
    pub matching: Matching,
}

/// One indecomposable square block: equations and the variables matched to
/// them. `eqs` and `vars` are aligned (eqs[i] is matched to vars[i]) and
/// sorted by equation index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub eqs: Vec<usize>,
    pub vars: Vec<usize>,
}

/// Dulmage–Mendelsohn decomposition with an explicit dependent-variable set.
///
/// Edges to variables outside `dependents` are ignored: those variables are
/// known and act as constants. `dependents` is given as a boolean mask over
/// the graph's variables.
pub fn dulmage_mendelsohn(g: &BipGraph, dependents: &[bool]) -> DmResult {
    assert_eq!(dependents.len(), g.n_vars(), "dependents mask length mismatch");

    // Restrict to dependent columns, keeping original indices.
    let mut restricted = BipGraph::new(g.eq_names.clone(), g.var_names.clone());
    for (e, v, w) in g.edges() {
        if dependents[v] {
            restricted.add_edge(e, v, w);
        }
    }

    let m = max_cardinality_matching(&restricted);
    let n_eqs = g.n_eqs();
    let n_vars = g.n_vars();

    // Overdetermined side: alternating reachability from unmatched equations
    // (equation -> variable by any edge, variable -> equation by its matched
    // edge). Equations with empty restricted rows are unmatched and seed this
    // sweep, which is exactly the degenerate "no dependent variable" rule.
    let mut eq_over = vec![false; n_eqs];
    let mut var_over = vec![false; n_vars];
    let mut queue: VecDeque<usize> =
        (0..n_eqs).filter(|&e| m.eq_to_var[e].is_none()).collect();
    for &e in &queue {
        eq_over[e] = true;
    }
    while let Some(e) = queue.pop_front() {
        for &(v, _) in restricted.row(e) {
            if !var_over[v] {
                var_over[v] = true;
                if let Some(e2) = m.var_to_eq[v] {
                    if !eq_over[e2] {
                        eq_over[e2] = true;
                        queue.push_back(e2);
                    }
                }
            }
        }
    }

    // Underdetermined side: the mirror sweep from unmatched dependent
    // variables (variable -> equation by any edge, equation -> variable by
    // its matched edge).
    let mut eq_under = vec![false; n_eqs];
    let mut var_under = vec![false; n_vars];
    // Variable -> equations adjacency of the restricted graph.
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n_vars];
    for (e, v, _) in restricted.edges() {
        cols[v].push(e);
    }
    let mut vqueue: VecDeque<usize> = (0..n_vars)
        .filter(|&v| dependents[v] && !cols[v].is_empty() && m.var_to_eq[v].is_none())
        .collect();
    // Dependent variables with no incident equation at all are
    // underdetermined outright.
    let mut isolated_under: Vec<usize> = (0..n_vars)
        .filter(|&v| dependents[v] && cols[v].is_empty())
        .collect();
    for &v in vqueue.iter().chain(isolated_under.iter()) {
        var_under[v] = true;
    }
    while let Some(v) = vqueue.pop_front() {
        for &e in &cols[v] {
            if !eq_under[e] {
                eq_under[e] = true;
                if let Some(v2) = m.eq_to_var[e] {
                    if !var_under[v2] {
                        var_under[v2] = true;
                        vqueue.push_back(v2);
                    }
                }
            }
        }
    }

    let mut under = (Vec::new(), Vec::new());
    let mut enabled = (Vec::new(), Vec::new());
    let mut over = (Vec::new(), Vec::new());
    for e in 0..n_eqs {
        if eq_over[e] {
            over.0.push(e);
        } else if eq_under[e] {
            under.0.push(e);
        } else {
            enabled.0.push(e);
        }
    }
    for v in 0..n_vars {
        if !dependents[v] {
            continue;
        }
        if var_over[v] {
            over.1.push(v);
        } else if var_under[v] {
            under.1.push(v);
        } else if m.var_to_eq[v].is_some() || !cols[v].is_empty() {
            enabled.1.push(v);
        } else {
            // Isolated dependent variable: recorded as underdetermined above.
            debug_assert!(isolated_under.contains(&v));
            under.1.push(v);
        }
    }
    isolated_under.clear();

    // Block triangular form of the enabled part, using the restriction of
    // the matching found above (complete on the enabled part by maximality).
    let btf = block_triangular_form_of(&restricted, &m, &enabled.0);

    DmResult { under, enabled, over, btf, matching: m }
}

/// Block triangular form of a square system under a complete matching.
///
/// Orientation: a matched edge points equation → variable, every other edge
/// points variable → equation. Collapsing variables gives a directed graph
/// whose strongly connected components are the indecomposable blocks; the
/// returned order is a topological sort with definition blocks first, i.e.
/// the order in which blocks can be solved.
pub fn block_triangular_form(g: &BipGraph, m: &Matching) -> Vec<Block> {
    let eqs: Vec<usize> = m.pairs().map(|(e, _)| e).collect();
    block_triangular_form_of(g, m, &eqs)
}

fn block_triangular_form_of(g: &BipGraph, m: &Matching, eqs: &[usize]) -> Vec<Block> {
    use petgraph::graph::DiGraph;

    let mut graph = DiGraph::<usize, ()>::new();
    let mut node_of = vec![None; g.n_eqs()];
    for &e in eqs {
        node_of[e] = Some(graph.add_node(e));
    }
    // Edge definer -> user: the equation defining v (its match) points to
    // every other equation mentioning v.
    for &user in eqs {
        for &(v, _) in g.row(user) {
            if let Some(definer) = m.var_to_eq[v] {
                if definer != user {
                    if let (Some(a), Some(b)) = (node_of[definer], node_of[user]) {
                        graph.update_edge(a, b, ());
                    }
                }
            }
        }
    }

    // tarjan_scc returns components in reverse topological order of the
    // condensation (users before definers); solving wants definers first.
    let mut sccs = petgraph::algo::tarjan_scc(&graph);
    sccs.reverse();
    sccs.into_iter()
        .map(|comp| {
            let mut eqs: Vec<usize> = comp.iter().map(|&n| graph[n]).collect();
            eqs.sort_unstable();
            let vars = eqs.iter().map(|&e| m.eq_to_var[e].unwrap()).collect();
            Block { eqs, vars }
        })
        .collect()
}

impl DmResult {
    /// JSON rendering with named nodes.
    pub fn to_json(&self, g: &BipGraph) -> serde_json::Value {
        let part = |(eqs, vars): &(Vec<usize>, Vec<usize>)| {
            json!({
                "equations": eqs.iter().map(|&e| g.eq_name(e)).collect::<Vec<_>>(),
                "variables": vars.iter().map(|&v| g.var_name(v)).collect::<Vec<_>>(),
            })
        };
        json!({
            "under": part(&self.under),
            "enabled": part(&self.enabled),
            "over": part(&self.over),
            "blocks": self.btf.iter().map(|b| {
                json!({
                    "equations": b.eqs.iter().map(|&e| g.eq_name(e)).collect::<Vec<_>>(),
                    "variables": b.vars.iter().map(|&v| g.var_name(v)).collect::<Vec<_>>(),
                })
            }).collect::<Vec<_>>(),
        })
    }
}

/// GraphViz rendering of a block triangular form: one cluster per block, in
/// solve order, with inter-block dependency edges.
pub fn btf_to_dot(g: &BipGraph, m: &Matching, blocks: &[Block]) -> String {
    let mut out = String::from("digraph btf {\n  rankdir=LR;\n");
    let mut block_of = vec![usize::MAX; g.n_eqs()];
    for (i, b) in blocks.iter().enumerate() {
        for &e in &b.eqs {
            block_of[e] = i;
        }
        out.push_str(&format!("  subgraph cluster_{i} {{\n    label=\"block {i}\";\n"));
        for (&e, &v) in b.eqs.iter().zip(&b.vars) {
            out.push_str(&format!(
                "    b{i}e{e} [shape=box, label=\"{} -> {}\"];\n",
                g.eq_name(e),
                g.var_name(v)
            ));
        }
        out.push_str("  }\n");
    }
    let mut seen = std::collections::BTreeSet::new();
    for b in blocks {
        for &user in &b.eqs {
            for &(v, _) in g.row(user) {
                if let Some(definer) = m.var_to_eq[v] {
                    let (bi, bj) = (block_of[definer], block_of[user]);
                    if bi != usize::MAX && bj != usize::MAX && bi != bj && seen.insert((bi, bj))
                    {
                        let (e0, e1) = (blocks[bi].eqs[0], blocks[bj].eqs[0]);
                        out.push_str(&format!("  b{bi}e{e0} -> b{bj}e{e1};\n"));
                    }
                }
            }
        }
    }
    out.push_str("}\n");
    out
}
