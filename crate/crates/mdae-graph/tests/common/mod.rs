//! Brute-force reference implementations shared by the oracle and property
//! suites. Everything here enumerates exhaustively and is only usable for
//! small graphs; the point is independence from the algorithms under test.

// Each test binary compiles its own copy and uses a different subset.
#![allow(dead_code)]

use mdae_graph::BipGraph;

/// Builds a graph from adjacency rows of (var index, weight).
pub fn build(n_vars: usize, rows: &[Vec<(usize, u32)>]) -> BipGraph {
    let eq_names = (0..rows.len()).map(|i| format!("f{i}")).collect();
    let var_names = (0..n_vars).map(|i| format!("x{i}")).collect();
    let mut g = BipGraph::new(eq_names, var_names);
    for (e, row) in rows.iter().enumerate() {
        for &(v, w) in row {
            g.add_edge(e, v, w);
        }
    }
    g
}

/// Builds a graph with explicit names; rows index into `vars`.
pub fn build_named(vars: &[&str], rows: &[(&str, &[(&str, u32)])]) -> BipGraph {
    let var_names: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
    let eq_names: Vec<String> = rows.iter().map(|(n, _)| n.to_string()).collect();
    let mut g = BipGraph::new(eq_names, var_names.clone());
    for (e, (_, adj)) in rows.iter().enumerate() {
        for (v, w) in adj.iter() {
            let vi = var_names.iter().position(|n| n == v).unwrap();
            g.add_edge(e, vi, *w);
        }
    }
    g
}

/// Every matching that covers all equations, as eq -> var vectors.
pub fn all_complete_matchings(g: &BipGraph) -> Vec<Vec<usize>> {
    assert!(g.n_vars() <= 64, "bitmask enumeration limit");
    let mut out = Vec::new();
    let mut cur = vec![0usize; g.n_eqs()];
    fn rec(g: &BipGraph, e: usize, used: u64, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if e == g.n_eqs() {
            out.push(cur.clone());
            return;
        }
        for &(v, _) in g.row(e) {
            if used & (1 << v) == 0 {
                cur[e] = v;
                rec(g, e + 1, used | (1 << v), cur, out);
            }
        }
    }
    rec(g, 0, 0, &mut cur, &mut out);
    out
}

/// Maximum matching cardinality by exhaustive search.
pub fn brute_max_cardinality(g: &BipGraph) -> usize {
    fn rec(g: &BipGraph, e: usize, used: u64) -> usize {
        if e == g.n_eqs() {
            return 0;
        }
        let mut best = rec(g, e + 1, used); // leave e unmatched
        for &(v, _) in g.row(e) {
            if used & (1 << v) == 0 {
                best = best.max(1 + rec(g, e + 1, used | (1 << v)));
            }
        }
        best
    }
    assert!(g.n_vars() <= 64);
    rec(g, 0, 0)
}

/// Every maximum-cardinality matching, as eq -> Option<var> vectors.
pub fn all_maximum_matchings(g: &BipGraph) -> Vec<Vec<Option<usize>>> {
    let target = brute_max_cardinality(g);
    let mut out = Vec::new();
    let mut cur = vec![None; g.n_eqs()];
    fn rec(
        g: &BipGraph,
        e: usize,
        used: u64,
        count: usize,
        target: usize,
        cur: &mut Vec<Option<usize>>,
        out: &mut Vec<Vec<Option<usize>>>,
    ) {
        // Even matching every remaining equation cannot reach the target.
        if count + (g.n_eqs() - e) < target {
            return;
        }
        if e == g.n_eqs() {
            if count == target {
                out.push(cur.clone());
            }
            return;
        }
        cur[e] = None;
        rec(g, e + 1, used, count, target, cur, out);
        for &(v, _) in g.row(e) {
            if used & (1 << v) == 0 {
                cur[e] = Some(v);
                rec(g, e + 1, used | (1 << v), count + 1, target, cur, out);
            }
        }
        cur[e] = None;
    }
    rec(g, 0, 0, 0, target, &mut cur, &mut out);
    out
}

/// Restriction of a graph to a dependent-variable mask (edges to other
/// variables dropped), mirroring what the decomposition does internally but
/// built independently for the oracles.
pub fn restrict(g: &BipGraph, dependents: &[bool]) -> BipGraph {
    let eq_names = (0..g.n_eqs()).map(|e| g.eq_name(e).to_string()).collect();
    let var_names = (0..g.n_vars()).map(|v| g.var_name(v).to_string()).collect();
    let mut r = BipGraph::new(eq_names, var_names);
    for (e, v, w) in g.edges() {
        if dependents[v] {
            r.add_edge(e, v, w);
        }
    }
    r
}
