//! Structural analysis across an event cascade.
//!
//! At an instant that belongs to a transient mode, the equations enabled now
//! may not suffice to determine the current unknowns, and equations from
//! hypothesized *future* instants may legitimately help (they are latent
//! equations of the cascade). The array machinery stacks the current system
//! on top of shifted copies of the hypothesized continuation and asks a
//! three-part structural question: nothing overdetermined, the current
//! unknowns not underdetermined, and no "existential" future-only variable
//! feeding the blocks that determine the current unknowns.

use std::collections::{BTreeMap, BTreeSet};

use mdae_graph::{dulmage_mendelsohn, BipGraph};

use crate::{EqInst, VarInst};

/// One row of a difference array: equation instances with their exact
/// variable-instance incidence.
#[derive(Debug, Clone, Default)]
pub struct ArrayRow {
    pub eqs: Vec<(EqInst, Vec<VarInst>)>,
}

impl ArrayRow {
    pub fn new(eqs: Vec<(EqInst, Vec<VarInst>)>) -> Self {
        ArrayRow { eqs }
    }
}

/// Outcome of the existentially quantified solvability check for
/// `F(X, W, Y) = 0`: determine X, given Y, with W existential.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExistResult {
    /// True iff the overdetermined part is empty.
    pub b_over: bool,
    /// True iff no X-variable is underdetermined and no block containing an
    /// X-variable involves or reads a W-variable.
    pub b_under: bool,
    /// On success: equations of the blocks that involve X-variables, in
    /// solve order.
    pub f_sigma: Vec<EqInst>,
    /// On success: the remaining (consistency) blocks, over W and Y only.
    pub f_bar: Vec<EqInst>,
    /// When `b_over` is false: the offending equations.
    pub over_eqs: Vec<EqInst>,
    /// When `b_under` is false: the X-variables that cannot be determined.
    pub under_vars: Vec<VarInst>,
}

/// Checks structural solvability of `F(X, W, Y) = 0` for the X-variables.
///
/// `rows` lists equation instances with their full incidence; variables in
/// neither `x_set` nor `w_set` are treated as given (Y) and drop out of the
/// bipartite graph. The decomposition then has to satisfy: no overdetermined
/// part; no X-variable in the underdetermined part; and every block
/// containing an X-variable neither contains nor reads a W-variable.
pub fn exist_quantif_eqn(
    rows: &[(EqInst, Vec<VarInst>)],
    x_set: &BTreeSet<VarInst>,
    w_set: &BTreeSet<VarInst>,
) -> ExistResult {
    // Index the dependent variable instances that actually occur.
    let mut var_index: BTreeMap<VarInst, usize> = BTreeMap::new();
    for (_, deps) in rows {
        for v in deps {
            if x_set.contains(v) || w_set.contains(v) {
                let next = var_index.len();
                var_index.entry(*v).or_insert(next);
            }
        }
    }
    // Unused X-variables still need a column: an X-variable mentioned by no
    // equation at all is underdetermined, and dropping it would hide that.
    for v in x_set {
        let next = var_index.len();
        var_index.entry(*v).or_insert(next);
    }

    let eq_names = rows.iter().map(|(e, _)| format!("{}@{}", e.eq, e.shift)).collect();
    let mut var_insts = vec![VarInst { var: 0, shift: 0 }; var_index.len()];
    for (inst, &i) in &var_index {
        var_insts[i] = *inst;
    }
    let var_names = var_insts.iter().map(|v| format!("{}@{}", v.var, v.shift)).collect();
    let mut g = BipGraph::new(eq_names, var_names);
    for (e, (_, deps)) in rows.iter().enumerate() {
        for v in deps {
            if let Some(&vi) = var_index.get(v) {
                g.add_edge(e, vi, 0);
            }
        }
    }

    let dm = dulmage_mendelsohn(&g, &vec![true; var_insts.len()]);

    let b_over = dm.over.0.is_empty();
    let over_eqs: Vec<EqInst> = dm.over.0.iter().map(|&e| rows[e].0).collect();

    // Condition on the underdetermined part: it may only involve
    // W-variables.
    let mut under_vars: Vec<VarInst> = dm
        .under
        .1
        .iter()
        .map(|&v| var_insts[v])
        .filter(|v| x_set.contains(v))
        .collect();

    // Condition on the blocks: a block with an X-variable must not contain a
    // W-variable, nor read one from an earlier block.
    let mut f_sigma = Vec::new();
    let mut f_bar = Vec::new();
    for block in &dm.btf {
        let block_vars: BTreeSet<usize> = block.vars.iter().copied().collect();
        let has_x = block.vars.iter().any(|&v| x_set.contains(&var_insts[v]));
        if !has_x {
            f_bar.extend(block.eqs.iter().map(|&e| rows[e].0));
            continue;
        }
        let mut tainted = false;
        for &v in &block.vars {
            if w_set.contains(&var_insts[v]) {
                tainted = true;
            }
        }
        for &e in &block.eqs {
            for &(v, _) in g.row(e) {
                if !block_vars.contains(&v) && w_set.contains(&var_insts[v]) {
                    tainted = true;
                }
            }
        }
        if tainted {
            under_vars.extend(
                block.vars.iter().map(|&v| var_insts[v]).filter(|v| x_set.contains(v)),
            );
        }
        f_sigma.extend(block.eqs.iter().map(|&e| rows[e].0));
    }
    under_vars.sort_unstable();
    under_vars.dedup();

    let b_under = under_vars.is_empty();
    ExistResult { b_over, b_under, f_sigma, f_bar, over_eqs, under_vars }
}

/// Result of analyzing a transient instant against one hypothesized
/// continuation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArrayOutcome {
    Success(ArraySuccess),
    /// Equations of the cascade rows conflict among themselves; transient
    /// equations may not be erased, so this is fatal.
    Overdetermined { eqs: Vec<EqInst> },
    /// The current unknowns cannot be determined even with every
    /// hypothesized future equation available.
    Underdetermined { vars: Vec<VarInst> },
    /// The single allowed deletion pass did not clear the overdetermined
    /// part; this indicates an internal inconsistency, not a model error.
    Inconsistent { detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArraySuccess {
    /// Equations to solve at the current instant (every block involving a
    /// current unknown), in solve order. May borrow future-row equations.
    pub f_sigma: Vec<EqInst>,
    /// Consistency blocks over future-only variables; reported but not
    /// solved at the current instant.
    pub f_bar: Vec<EqInst>,
    /// Current-row equations whose incidence is entirely known: they face
    /// the past, not the future, and go to instant-level conflict
    /// resolution.
    pub conflicts: Vec<EqInst>,
    /// Depth at which the growing-prefix phase succeeded; `None` when the
    /// full-array phase decided.
    pub depth: Option<usize>,
}

/// Analyzes a transient instant against one hypothesized continuation.
///
/// `transient_rows[0]` is the system enabled at the current instant;
/// `transient_rows[1..]` are the hypothesized further transient instants of
/// the cascade, already shifted. `long_f_sigma` and `long_f_bar` are the
/// shifted system and consistency set of the hypothesized final long mode,
/// already shifted past the cascade. `known` classifies variable instances
/// that carry values from the past.
///
/// Phase one grows the prefix row by row, accepting as soon as the check
/// passes; phase two adds the final-mode rows, deletes conflicting final-mode
/// consistency equations once, and re-checks.
pub fn diff_array(
    transient_rows: &[ArrayRow],
    long_f_sigma: &ArrayRow,
    long_f_bar: &ArrayRow,
    known: &dyn Fn(VarInst) -> bool,
) -> ArrayOutcome {
    assert!(!transient_rows.is_empty(), "need at least the current row");

    // Split the current row: equations with no unknown left conflict with
    // the past and are resolved (deleted, with residuals) at the instant
    // level, not here.
    let mut conflicts = Vec::new();
    let mut active0 = Vec::new();
    for (inst, deps) in &transient_rows[0].eqs {
        if deps.iter().all(|v| known(*v)) {
            conflicts.push(*inst);
        } else {
            active0.push((*inst, deps.clone()));
        }
    }

    // X: unknown instances of the current row. They are what the instant
    // must determine, whatever shift they formally live at.
    let x_set: BTreeSet<VarInst> = active0
        .iter()
        .flat_map(|(_, deps)| deps.iter().copied())
        .filter(|v| !known(*v))
        .collect();

    let unknowns_of = |rows: &[(EqInst, Vec<VarInst>)]| -> BTreeSet<VarInst> {
        rows.iter()
            .flat_map(|(_, deps)| deps.iter().copied())
            .filter(|v| !known(*v))
            .collect()
    };

    // Phase one: grow the prefix of transient rows.
    let mut prefix = active0.clone();
    for k in 0..transient_rows.len() {
        if k > 0 {
            prefix.extend(transient_rows[k].eqs.iter().cloned());
        }
        let mut w_set = unknowns_of(&prefix);
        w_set.retain(|v| !x_set.contains(v));
        let r = exist_quantif_eqn(&prefix, &x_set, &w_set);
        if !r.b_over {
            return ArrayOutcome::Overdetermined { eqs: r.over_eqs };
        }
        if r.b_under {
            return ArrayOutcome::Success(ArraySuccess {
                f_sigma: r.f_sigma,
                f_bar: r.f_bar,
                conflicts,
                depth: Some(k),
            });
        }
    }

    // Phase two: append the final-mode rows, dropping duplicates of
    // equations already present in the cascade rows.
    let present: BTreeSet<EqInst> = prefix.iter().map(|(e, _)| *e).collect();
    let sigma_rows: Vec<(EqInst, Vec<VarInst>)> = long_f_sigma
        .eqs
        .iter()
        .filter(|(e, _)| !present.contains(e))
        .cloned()
        .collect();
    let mut bar_rows: Vec<(EqInst, Vec<VarInst>)> = long_f_bar
        .eqs
        .iter()
        .filter(|(e, _)| !present.contains(e))
        .cloned()
        .collect();

    for pass in 0..2 {
        let mut rows = prefix.clone();
        rows.extend(sigma_rows.iter().cloned());
        rows.extend(bar_rows.iter().cloned());
        let mut w_set = unknowns_of(&rows);
        w_set.retain(|v| !x_set.contains(v));
        let r = exist_quantif_eqn(&rows, &x_set, &w_set);

        if !r.b_over {
            let deletable: BTreeSet<EqInst> = bar_rows.iter().map(|(e, _)| *e).collect();
            if pass == 0 && r.over_eqs.iter().all(|e| deletable.contains(e)) {
                // Final-mode consistency equations that conflict (typically
                // with known values) are deleted; their satisfaction is the
                // future instant's business.
                let doomed: BTreeSet<EqInst> = r.over_eqs.iter().copied().collect();
                bar_rows.retain(|(e, _)| !doomed.contains(e));
                continue;
            }
            if pass == 0 {
                let stuck: Vec<EqInst> = r
                    .over_eqs
                    .iter()
                    .filter(|e| !deletable.contains(e))
                    .copied()
                    .collect();
                return ArrayOutcome::Overdetermined { eqs: stuck };
            }
            return ArrayOutcome::Inconsistent {
                detail: format!(
                    "overdetermined part survived the deletion pass: {:?}",
                    r.over_eqs
                ),
            };
        }
        if !r.b_under {
            return ArrayOutcome::Underdetermined { vars: r.under_vars };
        }
        return ArrayOutcome::Success(ArraySuccess {
            f_sigma: r.f_sigma,
            f_bar: r.f_bar,
            conflicts,
            depth: None,
        });
    }
    unreachable!("loop always returns")
}
