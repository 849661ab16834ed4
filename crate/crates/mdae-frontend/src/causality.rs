//! Static check that guard values never depend on results computed within
//! the instant they control.
//!
//! A guard defined in next-value form (`guard g init b = body;`) is always
//! safe: its body is evaluated at one instant to produce the guard's value
//! at the next, so everything it reads is already known.  A guard defined in
//! current-value form (`guard g = body;`) reads signals at the very instant
//! it is needed.  That is fine when the body touches only states (whose
//! current values carry over from the previous instant), but if it reads an
//! algebraic variable the guard's value and the variable's value must be
//! solved simultaneously — a logico-numerical fixpoint this tool, like the
//! structural analysis it feeds, refuses to entertain.

use crate::ast::*;
use crate::error::FrontendError;
use std::collections::BTreeMap;

/// Graph node used for the cycle search: a current-form guard, an algebraic
/// variable, or an equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Guard(usize),
    Var(usize),
    Eq(usize),
}

/// Reject models whose current-form guards read values computed within the
/// same instant.
///
/// The dependency graph has an edge from a guard to each algebraic variable
/// its body reads at the current instant, from a variable to each equation
/// that can determine it, and from an equation to the algebraic variables it
/// reads and the current-form guards that decide whether it is active.  A
/// strongly connected component containing a guard is an instantaneous
/// fixpoint and is reported as a cycle; a guard reading an in-instant value
/// without feeding back into it is still unschedulable and reported
/// separately.
pub fn check_guard_causality(model: &Model) -> Result<(), FrontendError> {
    let current_guards: Vec<&GuardDef> =
        model.guards.iter().filter(|g| g.form == GuardForm::Current).collect();
    if current_guards.is_empty() {
        return Ok(());
    }

    // Algebraic variables: never differentiated or shifted anywhere.
    let algebraics: Vec<&str> = model
        .variables
        .iter()
        .map(|v| v.name.as_str())
        .filter(|name| !model.is_state(name))
        .collect();
    let var_index: BTreeMap<&str, usize> =
        algebraics.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let guard_index: BTreeMap<&str, usize> =
        current_guards.iter().enumerate().map(|(i, g)| (g.name.as_str(), i)).collect();

    // node ids: guards, then variables, then equations
    let n_guards = current_guards.len();
    let n_vars = algebraics.len();
    let id = |node: Node| -> usize {
        match node {
            Node::Guard(i) => i,
            Node::Var(i) => n_guards + i,
            Node::Eq(i) => n_guards + n_vars + i,
        }
    };
    let n_nodes = n_guards + n_vars + model.equations.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];

    // Guard bodies: which in-instant values do they read?
    let mut instant_reads: Vec<Vec<String>> = vec![Vec::new(); n_guards];
    for (gi, def) in current_guards.iter().enumerate() {
        for (sig, is_pre) in bool_signals(&def.body) {
            if is_pre {
                continue; // previous-instant read, always known
            }
            if !sig.word.is_empty() {
                // Shifted or differentiated read: the value only becomes
                // available once the instant is solved.
                instant_reads[gi].push(format!("{}@{}", sig.base, sig.degree()));
                continue;
            }
            if let Some(&vi) = var_index.get(sig.base.as_str()) {
                instant_reads[gi].push(sig.base.clone());
                adj[id(Node::Guard(gi))].push(id(Node::Var(vi)));
            }
            // Plain reads of states are carried over from the previous
            // instant and are known before the instant is solved.
        }
        for gref in bool_guard_refs(&def.body) {
            if let Some(&gj) = guard_index.get(gref) {
                instant_reads[gi].push(gref.to_string());
                adj[id(Node::Guard(gi))].push(id(Node::Guard(gj)));
            }
        }
    }

    // Variables can be determined by any equation mentioning them; an
    // equation in turn reads its other algebraic variables and is enabled
    // only once its current-form guards are valued.
    for (ei, eq) in model.equations.iter().enumerate() {
        let inc = crate::transform::equation_incidence(eq);
        for base in inc.keys() {
            if let Some(&vi) = var_index.get(base.as_str()) {
                adj[id(Node::Var(vi))].push(id(Node::Eq(ei)));
                adj[id(Node::Eq(ei))].push(id(Node::Var(vi)));
            }
        }
        let guard_names = match &eq.kind {
            EquationKind::If(g) => g.guard_names(),
            EquationKind::When(g) => vec![g.clone()],
        };
        for gname in guard_names {
            if let Some(&gi) = guard_index.get(gname.as_str()) {
                adj[id(Node::Eq(ei))].push(id(Node::Guard(gi)));
            }
        }
    }

    // Strongly connected components (iterative Tarjan).
    let sccs = tarjan(&adj);
    for comp in &sccs {
        let has_guard = comp.iter().any(|&n| n < n_guards);
        let cyclic = comp.len() > 1 || adj[comp[0]].contains(&comp[0]);
        if has_guard && cyclic {
            let mut guards: Vec<String> = comp
                .iter()
                .filter(|&&n| n < n_guards)
                .map(|&n| current_guards[n].name.clone())
                .collect();
            let mut variables: Vec<String> = comp
                .iter()
                .filter(|&&n| n >= n_guards && n < n_guards + n_vars)
                .map(|&n| algebraics[n - n_guards].to_string())
                .collect();
            guards.sort();
            variables.sort();
            return Err(FrontendError::GuardCycle { guards, variables });
        }
    }

    // No fixpoint cycle, but a current-form guard reading an in-instant
    // value still cannot be scheduled.
    for (gi, reads) in instant_reads.iter().enumerate() {
        if let Some(first) = reads.first() {
            return Err(FrontendError::GuardReadsInstantValue {
                guard: current_guards[gi].name.clone(),
                signal: first.clone(),
            });
        }
    }
    Ok(())
}

/// Iterative Tarjan SCC over an adjacency list; returns components as sorted
/// node-id lists.
fn tarjan(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next_index = 0usize;
    let mut out = Vec::new();

    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // Each frame holds (node, next edge position).
        let mut work = vec![(root, 0usize)];
        while let Some(&(v, ei)) = work.last() {
            if ei == 0 {
                index[v] = next_index;
                low[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = adj[v].get(ei) {
                work.last_mut().unwrap().1 += 1;
                if index[w] == usize::MAX {
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    out.push(comp);
                }
            }
        }
    }
    out
}
