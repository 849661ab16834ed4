//! Symbolic per-instant execution for multimode difference systems.
//!
//! The frontend turns a model into guarded difference equations; this crate
//! answers, instant by instant and without numbers, three questions:
//!
//! * which equations and which variable instances make up the system to be
//!   solved at an instant of a given mode (structural index reduction within
//!   a mode, difference arrays at transient instants);
//! * what happens at a mode change, where equations inherited as facts,
//!   equations conflicting with past values, and genuinely new constraints
//!   must be told apart (conflict resolution by Dulmage–Mendelsohn
//!   decomposition, with deletions recorded for runtime residual checks);
//! * which instant-level configurations are reachable at all
//!   ([`explore::explore`] builds the finite mode automaton by treating
//!   guard valuations as free oracles).
//!
//! Everything is bookkept through *statuses*: each guard, variable instance
//! and equation instance moves monotonically through the lattice
//! `Unprocessed < Unknown < {False, True}` within an instant. The snapshots
//! recorded by [`instant::run_instant`] let tests assert that monotonicity.

pub mod explore;
pub mod instant;
pub mod progress;

use std::collections::{BTreeMap, BTreeSet};

use mdae_frontend::{
    desugar_when, expand_differences, expand_differences_stretched, equation_incidence,
    instance_incidence, BoolExpr, Equation, EquationKind, FrontendError, GuardExpr, GuardForm,
    Model, ModeType,
};
pub use mdae_sigma::{EqInst, VarInst};

/// Knowledge about one status variable at a point within an instant.
///
/// `Unprocessed < Unknown < False` and `Unprocessed < Unknown < True`;
/// `False` and `True` are incomparable. For an equation instance `True`
/// means guaranteed to hold, `False` disabled or deleted; for a variable
/// instance `True` means its value is available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StatusValue {
    Unprocessed,
    Unknown,
    False,
    True,
}

impl StatusValue {
    /// Lattice order (not the derived `Ord`, which is only used for storage):
    /// may a status move from `self` to `next` within an instant?
    pub fn may_become(self, next: StatusValue) -> bool {
        use StatusValue::*;
        match (self, next) {
            (a, b) if a == b => true,
            (Unprocessed, _) => true,
            (Unknown, False) | (Unknown, True) => true,
            _ => false,
        }
    }
}

/// The things a status is recorded for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SVar {
    Guard(usize),
    Var(VarInst),
    Eq(EqInst),
}

/// One status snapshot: everything not mapped is `Unprocessed`.
pub type Snapshot = BTreeMap<SVar, StatusValue>;

/// Checks that consecutive snapshots only move statuses up the lattice.
pub fn validate_monotone(snapshots: &[Snapshot]) -> Result<(), String> {
    for w in snapshots.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        for (k, &v) in prev {
            let n = next.get(k).copied().unwrap_or(StatusValue::Unprocessed);
            if !v.may_become(n) {
                return Err(format!("status of {k:?} moved {v:?} -> {n:?}"));
            }
        }
    }
    Ok(())
}

/// A guard valuation: guard index to value. Complete valuations map every
/// guard of the model.
pub type Valuation = BTreeMap<usize, bool>;

/// Per-guard compile-time facts.
#[derive(Debug, Clone)]
pub struct GuardInfo {
    pub name: String,
    pub form: GuardForm,
    pub init: Option<bool>,
    /// Transient guards select modes that last a single instant; a guard
    /// true at the previous instant is forced false at the current one.
    pub transient: bool,
    /// `Some(base)` when this guard holds exactly on the rising edge of
    /// `base` (the shape synthesized for `when` equations): its value is
    /// derived, not free, during exploration.
    pub rising_edge_of: Option<usize>,
    pub body: BoolExpr,
}

/// A model lowered to index space: equations and variables are numbered, and
/// each equation carries its exact variable-instance incidence.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub source: Model,
    pub eq_names: Vec<String>,
    pub var_names: Vec<String>,
    pub guards: Vec<GuardInfo>,
    /// Guard expression controlling each equation (always `If` after
    /// desugaring).
    pub eq_guard: Vec<GuardExpr>,
    /// Exact incidence of each unshifted equation: variable instances.
    pub eq_insts: Vec<Vec<VarInst>>,
    /// Per-equation maximal shift of each incident variable (the weights of
    /// the within-mode reduction graph).
    pub eq_degrees: Vec<Vec<(usize, u32)>>,
    pub cascade_bound: u32,
}

impl CompiledModel {
    pub fn eq_index(&self, name: &str) -> Option<usize> {
        self.eq_names.iter().position(|n| n == name)
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|n| n == name)
    }

    pub fn guard_index(&self, name: &str) -> Option<usize> {
        self.guards.iter().position(|g| g.name == name)
    }

    pub fn eq_label(&self, i: EqInst) -> String {
        if i.shift == 0 {
            self.eq_names[i.eq].clone()
        } else {
            format!("{}@{}", self.eq_names[i.eq], i.shift)
        }
    }

    pub fn var_label(&self, i: VarInst) -> String {
        if i.shift == 0 {
            self.var_names[i.var].clone()
        } else {
            format!("{}@{}", self.var_names[i.var], i.shift)
        }
    }

    /// Equations enabled under a complete valuation.
    pub fn enabled(&self, val: &Valuation) -> Vec<usize> {
        let by_name: BTreeMap<String, bool> = val
            .iter()
            .map(|(&g, &v)| (self.guards[g].name.clone(), v))
            .collect();
        (0..self.eq_names.len())
            .filter(|&e| self.eq_guard[e].eval(&by_name))
            .collect()
    }

    /// True when the valuation selects a transient mode (any transient guard
    /// holds).
    pub fn is_transient(&self, val: &Valuation) -> bool {
        val.iter().any(|(&g, &v)| v && self.guards[g].transient)
    }

    /// Indices of the guards that select long modes.
    pub fn long_guards(&self) -> Vec<usize> {
        (0..self.guards.len()).filter(|&g| !self.guards[g].transient).collect()
    }

    /// The instant-start configuration at the initial time: instances known
    /// from declared initial values, no inherited facts, declared guard
    /// initial values pinned.
    pub fn initial_node(&self) -> Node {
        let mut known = BTreeSet::new();
        for v in &self.source.variables {
            let var = self.var_index(&v.name).expect("declared variable");
            if v.init.is_some() {
                known.insert(VarInst { var, shift: 0 });
            }
            if v.der_init.is_some() {
                known.insert(VarInst { var, shift: 1 });
            }
        }
        let mut pinned = BTreeMap::new();
        for (g, info) in self.guards.iter().enumerate() {
            if let Some(b) = info.init {
                if info.form == GuardForm::Next {
                    pinned.insert(g, b);
                }
            }
        }
        Node { known, delta: BTreeSet::new(), prev: BTreeMap::new(), pinned }
    }

    /// Set of guards whose previous-instant value matters for the next
    /// instant: transient guards (forcing) and rising-edge bases (derived
    /// values). Rising-edge guards themselves are excluded: their value is
    /// always derived, so their own history is redundant.
    pub fn relevant_prev(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for (g, info) in self.guards.iter().enumerate() {
            if info.transient && info.rising_edge_of.is_none() {
                out.insert(g);
            }
            if let Some(base) = info.rising_edge_of {
                out.insert(base);
            }
        }
        out
    }
}

/// An instant-start configuration: what the past hands to the instant.
///
/// `known` holds variable instances carrying values; `delta` holds equation
/// instances guaranteed by past solving; `prev` holds previous-instant values
/// of the guards that can influence the current one (transient forcing,
/// rising edges); `pinned` fixes guard values outright (used at the initial
/// instant, where declared initial values apply).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Node {
    pub known: BTreeSet<VarInst>,
    pub delta: BTreeSet<EqInst>,
    pub prev: BTreeMap<usize, bool>,
    pub pinned: BTreeMap<usize, bool>,
}

/// Lowers a loaded model. Idempotent over the frontend pipeline: raw parsed
/// models are normalized here, already-normalized ones pass through.
pub fn compile(model: &Model) -> Result<CompiledModel, FrontendError> {
    Ok(lower(expand_differences(&desugar_when(model)?)))
}

/// Lowers a model with the stretched difference expansion: every incidence
/// degree is `m` times what [`compile`] would produce. The model must still
/// be in source form (derivatives present, shifts unexpanded); see
/// [`mdae_frontend::expand_differences_stretched`].
pub fn compile_stretched(model: &Model, m: u32) -> Result<CompiledModel, FrontendError> {
    Ok(lower(expand_differences_stretched(&desugar_when(model)?, m)))
}

fn lower(model: Model) -> CompiledModel {
    let eq_names: Vec<String> = model.equations.iter().map(|e| e.name.clone()).collect();
    let var_names: Vec<String> = model.variables.iter().map(|v| v.name.clone()).collect();
    let var_index: BTreeMap<&str, usize> =
        var_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let mut guards = Vec::new();
    for def in &model.guards {
        guards.push(GuardInfo {
            name: def.name.clone(),
            form: def.form,
            init: def.init,
            transient: def.mode_type == ModeType::Transient,
            rising_edge_of: None,
            body: def.body.clone(),
        });
    }
    // Detect rising-edge guards by their synthesized shape:
    // `not base and <body of base>`.
    let by_name: BTreeMap<String, usize> =
        guards.iter().enumerate().map(|(i, g)| (g.name.clone(), i)).collect();
    for i in 0..guards.len() {
        if let BoolExpr::And(parts) = &guards[i].body {
            if parts.len() == 2 {
                if let BoolExpr::Not(inner) = &parts[0] {
                    if let BoolExpr::GuardRef(base) = inner.as_ref() {
                        if let Some(&b) = by_name.get(base) {
                            if guards[i].transient && parts[1] == guards[b].body {
                                guards[i].rising_edge_of = Some(b);
                            }
                        }
                    }
                }
            }
        }
    }

    let mut eq_guard = Vec::new();
    let mut eq_insts = Vec::new();
    let mut eq_degrees = Vec::new();
    for eq in &model.equations {
        eq_guard.push(match &eq.kind {
            EquationKind::If(g) => g.clone(),
            EquationKind::When(_) => unreachable!("when equations are desugared"),
        });
        eq_insts.push(lower_insts(eq, &var_index));
        let degrees: Vec<(usize, u32)> = equation_incidence(eq)
            .into_iter()
            .map(|(name, d)| (var_index[name.as_str()], d))
            .collect();
        eq_degrees.push(degrees);
    }

    let cascade_bound = model.cascade_bound;
    CompiledModel {
        source: model,
        eq_names,
        var_names,
        guards,
        eq_guard,
        eq_insts,
        eq_degrees,
        cascade_bound,
    }
}

fn lower_insts(eq: &Equation, var_index: &BTreeMap<&str, usize>) -> Vec<VarInst> {
    let mut insts: Vec<VarInst> = instance_incidence(eq)
        .into_iter()
        .map(|(name, shift)| VarInst { var: var_index[name.as_str()], shift })
        .collect();
    insts.sort();
    insts
}

/// Shifts an instance incidence forward.
pub fn shift_insts(insts: &[VarInst], by: u32) -> Vec<VarInst> {
    insts.iter().map(|v| VarInst { var: v.var, shift: v.shift + by }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdae_frontend::load_model;

    const CLUTCH: &str = include_str!("../../../models/clutch.mdae");
    const ELASTIC: &str = include_str!("../../../models/cupball_elastic.mdae");

    #[test]
    fn compiles_the_clutch_with_exact_incidence() {
        let cm = compile(&load_model(CLUTCH).unwrap()).unwrap();
        assert_eq!(cm.eq_names, vec!["clock", "e1", "e2", "e3", "e4", "e5", "e6"]);
        let e1 = cm.eq_index("e1").unwrap();
        let w1 = cm.var_index("w1").unwrap();
        let tau1 = cm.var_index("tau1").unwrap();
        let mut want = vec![
            VarInst { var: w1, shift: 0 },
            VarInst { var: w1, shift: 1 },
            VarInst { var: tau1, shift: 0 },
        ];
        want.sort();
        assert_eq!(cm.eq_insts[e1], want);
        assert_eq!(
            cm.eq_degrees[e1].iter().copied().collect::<BTreeMap<_, _>>()[&w1],
            1
        );
    }

    #[test]
    fn initial_node_knows_declared_initials() {
        let cm = compile(&load_model(CLUTCH).unwrap()).unwrap();
        let node = cm.initial_node();
        let w1 = cm.var_index("w1").unwrap();
        let tau1 = cm.var_index("tau1").unwrap();
        assert!(node.known.contains(&VarInst { var: w1, shift: 0 }));
        assert!(!node.known.contains(&VarInst { var: w1, shift: 1 }));
        assert!(!node.known.contains(&VarInst { var: tau1, shift: 0 }));
        // The clutch guard reads the current instant: nothing to pin.
        assert!(node.pinned.is_empty());
    }

    #[test]
    fn second_order_initials_pin_two_instances() {
        let src = "var x init 1.0 der 2.0; equation e: der(der(x)) = 0 - x;";
        let cm = compile(&load_model(src).unwrap()).unwrap();
        let node = cm.initial_node();
        let x = cm.var_index("x").unwrap();
        assert!(node.known.contains(&VarInst { var: x, shift: 0 }));
        assert!(node.known.contains(&VarInst { var: x, shift: 1 }));
    }

    #[test]
    fn rising_edge_guards_are_detected() {
        let cm = compile(&load_model(ELASTIC).unwrap()).unwrap();
        let g = cm.guard_index("g").unwrap();
        let up = (0..cm.guards.len()).find(|&i| cm.guards[i].name.starts_with("up_")).unwrap();
        assert_eq!(cm.guards[up].rising_edge_of, Some(g));
        assert!(cm.guards[up].transient);
        // The base guard is itself transient here, so both instants matter.
        assert!(cm.guards[g].transient);
        assert_eq!(cm.relevant_prev(), [g].into_iter().collect());
    }

    #[test]
    fn statuses_move_monotonically_or_are_flagged() {
        use StatusValue::*;
        let a: Snapshot = [(SVar::Guard(0), Unknown)].into();
        let b: Snapshot = [(SVar::Guard(0), True)].into();
        assert!(validate_monotone(&[a.clone(), b.clone()]).is_ok());
        assert!(validate_monotone(&[b, a]).is_err());
    }
}
