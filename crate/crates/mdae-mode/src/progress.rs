//! Progressive mode determination within a long instant.
//!
//! The main engine requires every guard value up front. This variant starts
//! from a partial valuation and interleaves solving with guard evaluation: a
//! guard whose body only reads already-determined values takes its value
//! (supplied by an oracle valuation), which may enable more equations, which
//! may determine more values. It either reaches a complete valuation — and
//! then delegates to the standard instant — or gets stuck, reporting the
//! guards it cannot value and the subsystem that makes no progress.

use std::collections::{BTreeMap, BTreeSet};

use mdae_frontend::{bool_guard_refs, bool_signals, GuardExpr, GuardForm};
use mdae_graph::{dulmage_mendelsohn, BipGraph};
use mdae_sigma::VarInst;

use crate::instant::{run_instant, Instant, InstantFail};
use crate::{CompiledModel, Node, Valuation};

/// Why progressive evaluation stopped without completing the instant.
#[derive(Debug, Clone, PartialEq)]
pub enum ProgressFail {
    /// No block solvable, no guard valuable: the listed guards stay unknown
    /// and the listed enabled subsystem cannot determine anything on its own.
    NoProgress { stuck_guards: Vec<String>, subsystem: Vec<String> },
    /// The completed valuation failed the standard instant.
    Instant(InstantFail),
}

/// Result of a progressive instant: the order in which guards were valued,
/// then the standard instant outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Progress {
    pub guard_order: Vec<String>,
    pub instant: Instant,
}

/// Whether a guard's value is available given what has been determined so
/// far. Next-form guards were fixed by the previous instant; current-form
/// guards need every current-instant read determined and every referenced
/// guard valued.
fn readable(
    cm: &CompiledModel,
    g: usize,
    determined: &BTreeSet<VarInst>,
    valued: &Valuation,
) -> bool {
    let info = &cm.guards[g];
    if info.form == GuardForm::Next {
        return true;
    }
    let signals_ok = bool_signals(&info.body).into_iter().all(|(s, is_pre)| {
        is_pre
            || cm
                .var_index(&s.base)
                .map(|var| determined.contains(&VarInst { var, shift: s.shift_count() }))
                .unwrap_or(true)
    });
    let refs_ok = bool_guard_refs(&info.body)
        .into_iter()
        .all(|name| cm.guard_index(name).map(|gi| valued.contains_key(&gi)).unwrap_or(true));
    signals_ok && refs_ok
}

/// True when the guard expression holds under every completion of the
/// partial valuation.
fn definitely_true(expr: &GuardExpr, partial: &BTreeMap<String, bool>) -> bool {
    match expr {
        GuardExpr::True => true,
        GuardExpr::Lit(name, positive) => {
            partial.get(name).map(|&v| v == *positive).unwrap_or(false)
        }
        GuardExpr::And(parts) => parts.iter().all(|p| definitely_true(p, partial)),
        GuardExpr::Or(parts) => parts.iter().any(|p| definitely_true(p, partial)),
    }
}

/// Runs one long instant, valuing guards progressively.
///
/// `oracle` supplies the value of every guard, but a value is only *used*
/// once the guard is readable (or the guard was listed in `given`, for
/// guards driven from outside the model).
pub fn progressive_run(
    cm: &CompiledModel,
    node: &Node,
    oracle: &Valuation,
    given: &BTreeSet<usize>,
) -> Result<Progress, ProgressFail> {
    let mut valued: Valuation =
        given.iter().map(|&g| (g, *oracle.get(&g).expect("oracle is complete"))).collect();
    let mut guard_order: Vec<String> = Vec::new();
    let mut determined: BTreeSet<VarInst> = node.known.clone();
    let mut evaluated: BTreeSet<usize> = BTreeSet::new();

    loop {
        if valued.len() == cm.guards.len() {
            return run_instant(cm, node, &valued)
                .map(|instant| Progress { guard_order, instant })
                .map_err(ProgressFail::Instant);
        }

        // Value every guard whose body is readable.
        let mut progressed = false;
        for g in 0..cm.guards.len() {
            if !valued.contains_key(&g) && readable(cm, g, &determined, &valued) {
                valued.insert(g, *oracle.get(&g).expect("oracle is complete"));
                guard_order.push(cm.guards[g].name.clone());
                progressed = true;
            }
        }
        if progressed {
            continue;
        }

        // Solve what the definitely-enabled subsystem can determine.
        let by_name: BTreeMap<String, bool> =
            valued.iter().map(|(&g, &v)| (cm.guards[g].name.clone(), v)).collect();
        let enabled: Vec<usize> = (0..cm.eq_names.len())
            .filter(|&e| !evaluated.contains(&e) && definitely_true(&cm.eq_guard[e], &by_name))
            .collect();

        let rows: Vec<(usize, &Vec<VarInst>)> =
            enabled.iter().map(|&e| (e, &cm.eq_insts[e])).collect();
        let mut columns: Vec<VarInst> = rows
            .iter()
            .flat_map(|(_, insts)| insts.iter().copied())
            .filter(|v| !determined.contains(v))
            .collect();
        columns.sort();
        columns.dedup();
        let col_index: BTreeMap<VarInst, usize> =
            columns.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut graph = BipGraph::new(
            rows.iter().map(|(e, _)| cm.eq_names[*e].clone()).collect(),
            columns.iter().map(|&v| cm.var_label(v)).collect(),
        );
        for (r, (_, insts)) in rows.iter().enumerate() {
            for v in *insts {
                if let Some(&c) = col_index.get(v) {
                    graph.add_edge(r, c, 0);
                }
            }
        }
        let dm = dulmage_mendelsohn(&graph, &vec![true; columns.len()]);

        // Blocks of the square part determine their variables; the
        // underdetermined part determines nothing. Over-part equations only
        // re-check already-known values; mark them evaluated so they stop
        // counting as pending work.
        let mut solved_any = false;
        for block in &dm.btf {
            for &r in &block.eqs {
                evaluated.insert(rows[r].0);
            }
            for &c in &block.vars {
                determined.insert(columns[c]);
                solved_any = true;
            }
        }
        for &r in &dm.over.0 {
            evaluated.insert(rows[r].0);
            solved_any = true;
        }

        if !solved_any {
            let stuck_guards: Vec<String> = (0..cm.guards.len())
                .filter(|g| !valued.contains_key(g))
                .map(|g| cm.guards[g].name.clone())
                .collect();
            let subsystem: Vec<String> =
                enabled.iter().map(|&e| cm.eq_names[e].clone()).collect();
            return Err(ProgressFail::NoProgress { stuck_guards, subsystem });
        }
    }
}
