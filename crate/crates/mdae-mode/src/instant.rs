//! One symbolic instant: structural selection, conflict resolution,
//! evaluation order, and the hand-over to the next instant.
//!
//! Given an instant-start configuration ([`Node`]) and a complete guard
//! valuation, [`run_instant`] either fails with a structural diagnosis or
//! produces an [`Instant`]: the equations actually solved (in block order),
//! the equations deleted because they conflict with inherited values, the
//! facts inherited from the past, and the configuration handed to the next
//! instant.

use std::collections::{BTreeMap, BTreeSet};

use mdae_graph::{dulmage_mendelsohn, BipGraph};
use mdae_sigma::array::{diff_array, ArrayOutcome, ArrayRow};
use mdae_sigma::{sigma_method, EqInst, SigmaOutcome, VarInst};
use thiserror::Error;

use crate::{shift_insts, CompiledModel, Node, SVar, Snapshot, StatusValue, Valuation};

/// Why an instant cannot be executed.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum InstantFail {
    /// The long-mode system admits no complete matching on its variables.
    #[error("mode {mode} is structurally singular (overdetermined: {over:?}, underdetermined: {under:?})")]
    SingularMode { mode: String, over: Vec<String>, under: Vec<String> },
    /// A transient instant cannot determine its unknowns even borrowing every
    /// hypothesized future equation.
    #[error("transient instant cannot determine {vars:?} under continuation {continuation}")]
    UnderdeterminedTransient { vars: Vec<String>, continuation: String },
    /// Equations enabled at a transient instant conflict among themselves;
    /// transient equations may not be deleted.
    #[error("transient instant overdetermined by {eqs:?}")]
    OverdeterminedTransient { eqs: Vec<String> },
    /// After deleting conflicting equations the restart system still cannot
    /// determine some unknowns.
    #[error("restart cannot determine {vars:?}")]
    UnderdeterminedRestart { vars: Vec<String> },
    /// A transient instant needs a long mode to continue into, but no guard
    /// valuation yields a structurally sound one.
    #[error("no structurally sound long continuation: {detail}")]
    NoLongContinuation { detail: String },
    /// Hypothesized continuations disagree about what to solve now: the
    /// schedule of the transient instant would depend on the future.
    #[error("continuations disagree on the transient schedule: {detail}")]
    ContinuationMismatch { detail: String },
    /// Invariant violation inside the engine (not a model error).
    #[error("internal: {0}")]
    Internal(String),
}

/// One square block of the evaluation schedule: equations and the variable
/// instances they determine, aligned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveBlock {
    pub eqs: Vec<EqInst>,
    pub vars: Vec<VarInst>,
}

/// The outcome of one symbolic instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Instant {
    pub valuation: Valuation,
    pub transient: bool,
    /// Differentiation index of the mode (long modes only).
    pub index: Option<u32>,
    /// Latent equations: shifted copies solved in place of lower shifts
    /// (long modes), or future-row equations borrowed by a transient
    /// instant.
    pub latent: Vec<EqInst>,
    /// Facts: enabled equation instances already guaranteed by the past.
    pub facts: BTreeSet<EqInst>,
    /// Equation instances deleted because every variable they mention is
    /// already determined (they face the past; the runtime checks their
    /// residuals instead of solving them).
    pub deleted: Vec<EqInst>,
    /// The evaluation schedule, in dependency order.
    pub blocks: Vec<SolveBlock>,
    /// Consistency equations of hypothesized future instants (transient
    /// instants only); reported, never solved now.
    pub future_consistency: Vec<EqInst>,
    /// Status snapshots at each micro-step, for monotonicity checking.
    pub snapshots: Vec<Snapshot>,
    /// The configuration handed to the next instant.
    pub next: Node,
}

/// Builds the within-mode reduction graph: enabled equations against the
/// variables they mention, weighted by maximal shift.
fn mode_graph(cm: &CompiledModel, enabled: &[usize]) -> (BipGraph, Vec<bool>) {
    let eq_names = enabled.iter().map(|&e| cm.eq_names[e].clone()).collect();
    let mut g = BipGraph::new(eq_names, cm.var_names.clone());
    let mut dependents = vec![false; cm.var_names.len()];
    for (row, &e) in enabled.iter().enumerate() {
        for &(v, d) in &cm.eq_degrees[e] {
            g.add_edge(row, v, d);
            dependents[v] = true;
        }
    }
    (g, dependents)
}

fn mode_label(cm: &CompiledModel, val: &Valuation) -> String {
    val.iter()
        .map(|(&g, &v)| if v { cm.guards[g].name.clone() } else { format!("!{}", cm.guards[g].name) })
        .collect::<Vec<_>>()
        .join(" & ")
}

/// Within-mode structural reduction of the system enabled by `val`.
///
/// On success returns `(shifted system, consistency equations, index)` with
/// global equation indices.
pub fn index_reduc(
    cm: &CompiledModel,
    enabled: &[usize],
    val: &Valuation,
) -> Result<(Vec<EqInst>, Vec<EqInst>, u32), InstantFail> {
    let (g, dependents) = mode_graph(cm, enabled);
    match sigma_method(&g, &dependents).map_err(|e| InstantFail::Internal(e.to_string()))? {
        SigmaOutcome::Success(s) => {
            let remap = |insts: Vec<EqInst>| -> Vec<EqInst> {
                insts.into_iter().map(|i| EqInst { eq: enabled[i.eq], shift: i.shift }).collect()
            };
            Ok((remap(s.f_sigma), remap(s.f_bar), s.index))
        }
        SigmaOutcome::Singular { over_eqs, under_vars } => Err(InstantFail::SingularMode {
            mode: mode_label(cm, val),
            over: over_eqs.iter().map(|&e| cm.eq_names[enabled[e]].clone()).collect(),
            under: under_vars.iter().map(|&v| cm.var_names[v].clone()).collect(),
        }),
    }
}

/// All long-mode valuations: transient and rising-edge guards false, the
/// rest enumerated in binary-counting order.
pub fn long_valuations(cm: &CompiledModel) -> Vec<Valuation> {
    let free = cm.long_guards();
    let n = free.len();
    assert!(n < 20, "mode enumeration over {n} guards refused");
    let mut out = Vec::with_capacity(1 << n);
    for bits in 0..(1u32 << n) {
        let mut val = Valuation::new();
        for (i, info) in cm.guards.iter().enumerate() {
            if info.transient {
                val.insert(i, false);
            }
        }
        for (k, &g) in free.iter().enumerate() {
            val.insert(g, bits & (1 << k) != 0);
        }
        out.push(val);
    }
    out
}

/// Structural analysis of a transient instant: stacks the enabled system on
/// hypothesized future rows and checks solvability of the current unknowns
/// against every long continuation.
fn transient_schedule(
    cm: &CompiledModel,
    node: &Node,
    enabled: &[usize],
) -> Result<(Vec<EqInst>, Vec<EqInst>, Vec<EqInst>), InstantFail> {
    // Rows of the cascade: the current system, then hypothesized repeats up
    // to the declared cascade bound.
    let row = |shift: u32| -> ArrayRow {
        ArrayRow::new(
            enabled
                .iter()
                .map(|&e| (EqInst { eq: e, shift }, shift_insts(&cm.eq_insts[e], shift)))
                .collect(),
        )
    };
    let rows: Vec<ArrayRow> = (0..=cm.cascade_bound).map(row).collect();
    let future_shift = cm.cascade_bound + 1;

    let known = |v: VarInst| node.known.contains(&v);
    let mut agreed: Option<(Vec<EqInst>, Vec<EqInst>, Vec<EqInst>, String)> = None;
    let mut any_long = false;
    let mut last_singular = String::new();

    for cont in long_valuations(cm) {
        let cont_enabled = cm.enabled(&cont);
        let (f_sigma, f_bar, _) = match index_reduc(cm, &cont_enabled, &cont) {
            Ok(x) => x,
            Err(e) => {
                last_singular = e.to_string();
                continue;
            }
        };
        any_long = true;
        let to_row = |insts: &[EqInst]| -> ArrayRow {
            ArrayRow::new(
                insts
                    .iter()
                    .map(|i| {
                        let shift = i.shift + future_shift;
                        (EqInst { eq: i.eq, shift }, shift_insts(&cm.eq_insts[i.eq], shift))
                    })
                    .collect(),
            )
        };
        let label = mode_label(cm, &cont);
        match diff_array(&rows, &to_row(&f_sigma), &to_row(&f_bar), &known) {
            ArrayOutcome::Success(s) => {
                let this = (s.f_sigma, s.conflicts, s.f_bar);
                match &agreed {
                    None => agreed = Some((this.0, this.1, this.2, label)),
                    Some((fs, cf, _, first_label)) => {
                        let same = {
                            let a: BTreeSet<_> = fs.iter().collect();
                            let b: BTreeSet<_> = this.0.iter().collect();
                            let ca: BTreeSet<_> = cf.iter().collect();
                            let cb: BTreeSet<_> = this.1.iter().collect();
                            a == b && ca == cb
                        };
                        if !same {
                            return Err(InstantFail::ContinuationMismatch {
                                detail: format!(
                                    "{} solves {:?} but {} solves {:?}",
                                    first_label,
                                    fs.iter().map(|&e| cm.eq_label(e)).collect::<Vec<_>>(),
                                    label,
                                    this.0.iter().map(|&e| cm.eq_label(e)).collect::<Vec<_>>()
                                ),
                            });
                        }
                    }
                }
            }
            ArrayOutcome::Underdetermined { vars } => {
                return Err(InstantFail::UnderdeterminedTransient {
                    vars: vars.iter().map(|&v| cm.var_label(v)).collect(),
                    continuation: label,
                });
            }
            ArrayOutcome::Overdetermined { eqs } => {
                return Err(InstantFail::OverdeterminedTransient {
                    eqs: eqs.iter().map(|&e| cm.eq_label(e)).collect(),
                });
            }
            ArrayOutcome::Inconsistent { detail } => {
                return Err(InstantFail::Internal(detail));
            }
        }
    }

    if !any_long {
        return Err(InstantFail::NoLongContinuation { detail: last_singular });
    }
    let (f_sigma, conflicts, f_bar, _) = agreed.expect("any_long implies a result");
    Ok((f_sigma, conflicts, f_bar))
}

/// Runs one symbolic instant under a complete guard valuation.
pub fn run_instant(
    cm: &CompiledModel,
    node: &Node,
    val: &Valuation,
) -> Result<Instant, InstantFail> {
    debug_assert_eq!(val.len(), cm.guards.len(), "valuation must be complete");
    let mut snapshots: Vec<Snapshot> = Vec::new();

    // Step 0: what the past hands over.
    let mut status: Snapshot = BTreeMap::new();
    for &v in &node.known {
        status.insert(SVar::Var(v), StatusValue::True);
    }
    for &e in &node.delta {
        status.insert(SVar::Eq(e), StatusValue::True);
    }
    snapshots.push(status.clone());

    // Step 1: guards take their values; disabled equations leave the game.
    let enabled = cm.enabled(val);
    let enabled_set: BTreeSet<usize> = enabled.iter().copied().collect();
    for (&g, &b) in val {
        status.insert(SVar::Guard(g), if b { StatusValue::True } else { StatusValue::False });
    }
    for e in 0..cm.eq_names.len() {
        if !enabled_set.contains(&e) {
            let inst = EqInst { eq: e, shift: 0 };
            status.entry(SVar::Eq(inst)).or_insert(StatusValue::False);
        }
    }
    snapshots.push(status.clone());

    // Step 2: facts — enabled equation instances guaranteed by the past.
    let facts: BTreeSet<EqInst> =
        node.delta.iter().copied().filter(|e| enabled_set.contains(&e.eq)).collect();

    // Structural selection.
    let transient = cm.is_transient(val);
    let (g_sigma, g_bar, index, future_consistency) = if transient {
        let (f_sigma, conflicts, f_bar) = transient_schedule(cm, node, &enabled)?;
        // Row-0 equations whose instances are all known join the conflict
        // set; borrowed future equations are part of the solved system.
        (f_sigma, conflicts, None, f_bar)
    } else {
        let (f_sigma, f_bar, index) = index_reduc(cm, &enabled, val)?;
        (f_sigma, f_bar, Some(index), Vec::new())
    };

    let latent: Vec<EqInst> = g_sigma.iter().copied().filter(|e| e.shift > 0).collect();

    // The instances put in play.
    let mut in_play: Vec<(EqInst, Vec<VarInst>)> = Vec::new();
    for &inst in g_sigma.iter().chain(g_bar.iter()) {
        if facts.contains(&inst) {
            continue;
        }
        in_play.push((inst, shift_insts(&cm.eq_insts[inst.eq], inst.shift)));
    }
    in_play.sort_by_key(|(e, _)| *e);
    in_play.dedup_by_key(|(e, _)| *e);

    for (e, insts) in &in_play {
        status.entry(SVar::Eq(*e)).or_insert(StatusValue::Unknown);
        for &v in insts {
            status.entry(SVar::Var(v)).or_insert(StatusValue::Unknown);
        }
    }
    snapshots.push(status.clone());

    // Step 3: conflict resolution over the unknown instances.
    let mut columns: Vec<VarInst> = in_play
        .iter()
        .flat_map(|(_, insts)| insts.iter().copied())
        .filter(|v| !node.known.contains(v))
        .collect();
    columns.sort();
    columns.dedup();
    let col_index: BTreeMap<VarInst, usize> =
        columns.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    let build = |rows: &[(EqInst, Vec<VarInst>)]| -> BipGraph {
        let mut g = BipGraph::new(
            rows.iter().map(|(e, _)| cm.eq_label(*e)).collect(),
            columns.iter().map(|&v| cm.var_label(v)).collect(),
        );
        for (r, (_, insts)) in rows.iter().enumerate() {
            for v in insts {
                if let Some(&c) = col_index.get(v) {
                    g.add_edge(r, c, 0);
                }
            }
        }
        g
    };

    let dm1 = dulmage_mendelsohn(&build(&in_play), &vec![true; columns.len()]);
    let deleted: Vec<EqInst> = dm1.over.0.iter().map(|&r| in_play[r].0).collect();

    if transient && !deleted.is_empty() {
        // Only restatements of the past may be deleted at a transient
        // instant; a conflicting equation with unknowns is a model error.
        let with_unknowns: Vec<String> = deleted
            .iter()
            .filter(|e| {
                in_play
                    .iter()
                    .find(|(i, _)| i == *e)
                    .map(|(_, insts)| insts.iter().any(|v| !node.known.contains(v)))
                    .unwrap_or(false)
            })
            .map(|&e| cm.eq_label(e))
            .collect();
        if !with_unknowns.is_empty() {
            return Err(InstantFail::OverdeterminedTransient { eqs: with_unknowns });
        }
    }

    let kept: Vec<(EqInst, Vec<VarInst>)> = in_play
        .iter()
        .filter(|(e, _)| !deleted.contains(e))
        .cloned()
        .collect();
    let dm2 = if deleted.is_empty() { dm1 } else { dulmage_mendelsohn(&build(&kept), &vec![true; columns.len()]) };
    if !dm2.over.0.is_empty() {
        return Err(InstantFail::Internal(format!(
            "conflict deletion left an overdetermined part: {:?}",
            dm2.over.0.iter().map(|&r| cm.eq_label(kept[r].0)).collect::<Vec<_>>()
        )));
    }
    if !dm2.under.1.is_empty() {
        return Err(InstantFail::UnderdeterminedRestart {
            vars: dm2.under.1.iter().map(|&c| cm.var_label(columns[c])).collect(),
        });
    }

    for &e in &deleted {
        status.insert(SVar::Eq(e), StatusValue::False);
    }
    snapshots.push(status.clone());

    // Step 4: the evaluation schedule.
    let blocks: Vec<SolveBlock> = dm2
        .btf
        .iter()
        .map(|b| SolveBlock {
            eqs: b.eqs.iter().map(|&r| kept[r].0).collect(),
            vars: b.vars.iter().map(|&c| columns[c]).collect(),
        })
        .collect();

    for b in &blocks {
        for &e in &b.eqs {
            status.insert(SVar::Eq(e), StatusValue::True);
        }
        for &v in &b.vars {
            status.insert(SVar::Var(v), StatusValue::True);
        }
    }
    snapshots.push(status.clone());

    // Tick: shift everything guaranteed one instant down.
    let mut next_known: BTreeSet<VarInst> = BTreeSet::new();
    for (k, &v) in &status {
        if let (SVar::Var(inst), StatusValue::True) = (k, v) {
            if inst.shift > 0 {
                next_known.insert(VarInst { var: inst.var, shift: inst.shift - 1 });
            }
        }
    }
    let mut next_delta: BTreeSet<EqInst> = BTreeSet::new();
    for (k, &v) in &status {
        if let (SVar::Eq(inst), StatusValue::True) = (k, v) {
            if inst.shift > 0 {
                next_delta.insert(EqInst { eq: inst.eq, shift: inst.shift - 1 });
            }
        }
    }
    let relevant = cm.relevant_prev();
    let prev: BTreeMap<usize, bool> =
        val.iter().filter(|(g, _)| relevant.contains(g)).map(|(&g, &b)| (g, b)).collect();
    let next = Node { known: next_known, delta: next_delta, prev, pinned: BTreeMap::new() };

    let instant = Instant {
        valuation: val.clone(),
        transient,
        index,
        latent,
        facts,
        deleted,
        blocks,
        future_consistency,
        snapshots,
        next,
    };
    crate::validate_monotone(&instant.snapshots).map_err(InstantFail::Internal)?;
    Ok(instant)
}
