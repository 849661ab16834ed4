//! Assembly of the restart system analysed for magnitude orders.
//!
//! Given a solved instant at a mode change, the restart system collects, in
//! monomial form:
//!
//! * the scheduled equations of every solve block,
//! * a defining row for each state *jump* recognised inside them,
//! * a defining row for the *residual* of each erased equation (the erased
//!   equation held before the change, so its residual on carried values is
//!   a bounded, generically nonzero quantity), and
//! * linear consequences of the above, obtained by exact elimination, which
//!   expose couplings (for example between two state jumps and a residual)
//!   that no single source row shows.

use std::collections::{BTreeMap, BTreeSet};

use mdae_frontend::Expr;
use mdae_mode::instant::Instant;
use mdae_mode::{CompiledModel, EqInst, Node, VarInst};
use num_rational::Ratio;
use num_traits::Zero;

use crate::monomial::{monomialize_collect, normalize, scale, shift_sum, Atom, Monomial, SumForm};
use crate::solve::OrderSolution;
use crate::{ImpulseError, Order, Rat};

/// Where a restart row comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowSource {
    /// A scheduled equation instance of the change instant.
    Equation(EqInst),
    /// The definition `0 = jump - v@to + v@from` of a state jump.
    JumpDef(Atom),
    /// The definition `0 = residual - (carried value)` of an erased equation.
    ResidualDef(EqInst),
    /// A linear consequence of the rows above.
    Derived,
}

/// One equation of the restart system, as a normalised sum of monomials.
#[derive(Debug, Clone)]
pub struct RestartRow {
    pub label: String,
    pub source: RowSource,
    pub sum: SumForm,
}

/// The full restart system of one mode-change instant.
#[derive(Debug, Clone)]
pub struct RestartSystem {
    pub rows: Vec<RestartRow>,
    /// Atoms carrying an order variable, in a fixed deterministic order.
    pub unknowns: Vec<Atom>,
    /// Instances whose values the instant inherited; their order is zero.
    pub known: BTreeSet<VarInst>,
    /// Expressions behind opaque [`Atom::Known`] labels, for evaluation.
    pub known_exprs: BTreeMap<String, Expr>,
}

impl RestartSystem {
    pub fn unknown_index(&self, atom: &Atom) -> Option<usize> {
        self.unknowns.iter().position(|a| a == atom)
    }

    /// The unknown atom for a model variable by label (`name` or
    /// `name@shift`), if it is part of this system.
    pub fn unknown_by_label(&self, cm: &CompiledModel, label: &str) -> Option<&Atom> {
        self.unknowns.iter().find(|a| a.label(cm) == label)
    }
}

/// Builds the restart system of a solved instant.
pub fn restart_system(
    cm: &CompiledModel,
    node: &Node,
    instant: &Instant,
) -> Result<RestartSystem, ImpulseError> {
    let mut known_exprs = BTreeMap::new();
    let mut rows: Vec<RestartRow> = Vec::new();

    // Scheduled equations, block by block.
    let mut base_sums: BTreeMap<usize, SumForm> = BTreeMap::new();
    let mut sum_of = |eq: usize, kx: &mut BTreeMap<String, Expr>| -> Result<SumForm, ImpulseError> {
        if let Some(s) = base_sums.get(&eq) {
            return Ok(s.clone());
        }
        let s = monomialize_collect(cm, &cm.source.equations[eq].residual(), kx)?;
        base_sums.insert(eq, s.clone());
        Ok(s)
    };
    for block in &instant.blocks {
        for &e in &block.eqs {
            let sum = shift_sum(&sum_of(e.eq, &mut known_exprs)?, e.shift);
            rows.push(RestartRow {
                label: cm.eq_label(e),
                source: RowSource::Equation(e),
                sum,
            });
        }
    }

    // Recognise state jumps inside the equation rows and add their
    // defining rows.
    let mut jumps: BTreeSet<Atom> = BTreeSet::new();
    for row in &mut rows {
        pair_state_jumps(cm, &mut row.sum, &mut jumps);
    }
    for j in &jumps {
        let Atom::Jump { var, from, to } = j else { unreachable!() };
        let sum = vec![
            Monomial::atom(j.clone()),
            Monomial {
                coeff: -1.0,
                factors: [(Atom::Inst(VarInst { var: *var, shift: *to }), Ratio::new(1, 1))].into(),
            },
            Monomial {
                coeff: 1.0,
                factors: [(Atom::Inst(VarInst { var: *var, shift: *from }), Ratio::new(1, 1))]
                    .into(),
            },
        ];
        rows.push(RestartRow { label: j.label(cm), source: RowSource::JumpDef(j.clone()), sum });
    }

    // Residual rows for the erased equations.
    for &d in &instant.deleted {
        let sum = shift_sum(&sum_of(d.eq, &mut known_exprs)?, d.shift);
        for m in &sum {
            for a in m.factors.keys() {
                if let Atom::Inst(v) = a {
                    if !node.known.contains(v) {
                        return Err(ImpulseError::ResidualNotPast(
                            cm.eq_label(d),
                            cm.var_label(*v),
                        ));
                    }
                }
            }
        }
        let mut def = vec![Monomial::atom(Atom::Residual(d))];
        def.extend(scale(&sum, -1.0));
        rows.push(RestartRow {
            label: format!("residual({})", cm.eq_label(d)),
            source: RowSource::ResidualDef(d),
            sum: normalize(def),
        });
    }

    let mut sys = RestartSystem {
        rows,
        unknowns: Vec::new(),
        known: node.known.clone(),
        known_exprs,
    };
    sys.unknowns = collect_unknowns(&sys);
    let derived = derived_rows(cm, &sys);
    sys.rows.extend(derived);
    sys.unknowns = collect_unknowns(&sys);
    Ok(sys)
}

/// Atoms that carry an order variable: everything except `dt`, opaque
/// knowns, and instances whose value is inherited.
fn collect_unknowns(sys: &RestartSystem) -> Vec<Atom> {
    let mut out: BTreeSet<Atom> = BTreeSet::new();
    for row in &sys.rows {
        for m in &row.sum {
            for a in m.factors.keys() {
                collect_atom(a, &sys.known, &mut out);
            }
        }
    }
    out.into_iter().collect()
}

fn collect_atom(a: &Atom, known: &BTreeSet<VarInst>, out: &mut BTreeSet<Atom>) {
    match a {
        Atom::Dt | Atom::Known(_) => {}
        Atom::Inst(v) if known.contains(v) => {}
        Atom::App { inner, .. } => {
            out.insert(a.clone());
            collect_atom(inner, known, out);
        }
        _ => {
            out.insert(a.clone());
        }
    }
}

/// Rewrites pairs `c*x@to*R - c*x@from*R` (same state `x`, same cofactor
/// `R`) into `c*jump(x)*R`, recording the jump atom.  Pricing the pair as a
/// generic sum would lose the cancellation that makes jumps bounded.
fn pair_state_jumps(cm: &CompiledModel, sum: &mut SumForm, jumps: &mut BTreeSet<Atom>) {
    loop {
        let mut replacement: Option<(usize, usize, Monomial)> = None;
        'scan: for i in 0..sum.len() {
            for j in 0..sum.len() {
                if i == j {
                    continue;
                }
                if let Some(m) = try_pair(cm, &sum[i], &sum[j]) {
                    replacement = Some((i, j, m));
                    break 'scan;
                }
            }
        }
        match replacement {
            Some((i, j, m)) => {
                if let Some(a) = m.factors.keys().find(|a| matches!(a, Atom::Jump { .. })) {
                    jumps.insert(a.clone());
                }
                let mut next: Vec<Monomial> = Vec::with_capacity(sum.len() - 1);
                for (k, t) in sum.iter().enumerate() {
                    if k != i && k != j {
                        next.push(t.clone());
                    }
                }
                next.push(m);
                *sum = normalize(next);
            }
            None => break,
        }
    }
}

/// If `hi = c*x@to*R` and `lo = -c*x@from*R` for a state `x`, returns
/// `c*jump(x)*R`.
fn try_pair(cm: &CompiledModel, hi: &Monomial, lo: &Monomial) -> Option<Monomial> {
    if (hi.coeff + lo.coeff).abs() > 1e-9 * hi.coeff.abs().max(1.0) {
        return None;
    }
    for (a, e) in &hi.factors {
        let Atom::Inst(vto) = a else { continue };
        if *e != Ratio::new(1, 1) || !cm.source.is_state(&cm.var_names[vto.var]) {
            continue;
        }
        for (b, f) in &lo.factors {
            let Atom::Inst(vfrom) = b else { continue };
            if *f != Ratio::new(1, 1) || vfrom.var != vto.var || vfrom.shift >= vto.shift {
                continue;
            }
            let mut rest_hi = hi.factors.clone();
            rest_hi.remove(a);
            let mut rest_lo = lo.factors.clone();
            rest_lo.remove(b);
            if rest_hi == rest_lo {
                let jump = Atom::Jump { var: vto.var, from: vfrom.shift, to: vto.shift };
                let mut factors = rest_hi;
                factors.insert(jump, Ratio::new(1, 1));
                return Some(Monomial { coeff: hi.coeff, factors });
            }
        }
    }
    None
}

/// Linear consequences of the purely linear rows, by exact elimination.
///
/// Only rows whose every monomial is a constant or a single atom to the
/// first power participate.  Eliminating next-step instances first, then
/// inherited ones, pushes relations onto jumps, residuals and algebraic
/// unknowns — the atoms whose relative orders decide impulsiveness.
fn derived_rows(cm: &CompiledModel, sys: &RestartSystem) -> Vec<RestartRow> {
    let linear: Vec<&RestartRow> = sys
        .rows
        .iter()
        .filter(|r| {
            !r.sum.is_empty()
                && r.sum.iter().all(|m| {
                    m.is_constant()
                        || (m.factors.len() == 1
                            && m.factors.iter().all(|(a, e)| {
                                *e == Ratio::new(1, 1)
                                    && matches!(
                                        a,
                                        Atom::Inst(_)
                                            | Atom::Jump { .. }
                                            | Atom::Residual(_)
                                            | Atom::Scaled(_)
                                    )
                            }))
                })
        })
        .collect();
    if linear.len() < 2 || linear.len() > 256 {
        return Vec::new();
    }

    // Column order drives what the elimination solves *for*: next-step
    // instances and inherited values go first so they drop out of the
    // derived rows whenever possible.
    let mut atoms: BTreeSet<Atom> = BTreeSet::new();
    for r in &linear {
        for m in &r.sum {
            atoms.extend(m.factors.keys().cloned());
        }
    }
    let mut columns: Vec<Atom> = atoms.into_iter().collect();
    columns.sort_by_key(|a| match a {
        Atom::Inst(v) if !sys.known.contains(v) && v.shift >= 1 => (0, u32::MAX - v.shift, v.var),
        Atom::Inst(v) if sys.known.contains(v) => (1, v.shift, v.var),
        Atom::Jump { var, to, .. } => (2, *to, *var),
        Atom::Inst(v) => (3, v.shift, v.var),
        Atom::Scaled(v) => (4, v.shift, v.var),
        Atom::Residual(e) => (5, e.shift, e.eq),
        _ => (6, 0, 0),
    });
    let col_of: BTreeMap<&Atom, usize> =
        columns.iter().enumerate().map(|(i, a)| (a, i)).collect();

    // Dense elimination; the constant rides along as an extra column.
    let w = columns.len() + 1;
    let mut mat: Vec<Vec<f64>> = Vec::with_capacity(linear.len());
    for r in &linear {
        let mut row = vec![0.0; w];
        for m in &r.sum {
            if m.is_constant() {
                row[w - 1] += m.coeff;
            } else {
                let a = m.factors.keys().next().unwrap();
                row[col_of[a]] += m.coeff;
            }
        }
        mat.push(row);
    }

    const EPS: f64 = 1e-9;
    let mut pivot_row = 0;
    for col in 0..columns.len() {
        let Some(best) = (pivot_row..mat.len())
            .filter(|&r| mat[r][col].abs() > EPS)
            .max_by(|&a, &b| mat[a][col].abs().total_cmp(&mat[b][col].abs()))
        else {
            continue;
        };
        mat.swap(pivot_row, best);
        let p = mat[pivot_row][col];
        for x in &mut mat[pivot_row] {
            *x /= p;
        }
        for r in 0..mat.len() {
            if r != pivot_row && mat[r][col].abs() > EPS {
                let f = mat[r][col];
                for c in 0..w {
                    let delta = f * mat[pivot_row][c];
                    mat[r][c] -= delta;
                    if mat[r][c].abs() < EPS {
                        mat[r][c] = 0.0;
                    }
                }
            }
        }
        pivot_row += 1;
        if pivot_row == mat.len() {
            break;
        }
    }

    // Turn reduced rows back into sums, dropping echoes of original rows.
    let mut seen: BTreeSet<Vec<(String, i64)>> = linear
        .iter()
        .map(|r| row_signature(&r.sum, cm))
        .collect();
    let mut out = Vec::new();
    for row in &mat {
        let mut terms: Vec<Monomial> = Vec::new();
        for (c, a) in columns.iter().enumerate() {
            if row[c].abs() > EPS {
                terms.push(Monomial {
                    coeff: row[c],
                    factors: [(a.clone(), Ratio::new(1, 1))].into(),
                });
            }
        }
        if row[w - 1].abs() > EPS {
            terms.push(Monomial::constant(row[w - 1]));
        }
        let sum = normalize(terms);
        if sum.is_empty() {
            continue;
        }
        let sig = row_signature(&sum, cm);
        if seen.insert(sig) {
            out.push(RestartRow {
                label: format!("derived{}", out.len() + 1),
                source: RowSource::Derived,
                sum,
            });
        }
    }
    out
}

/// A scale- and sign-invariant fingerprint of a linear row, for deduplication.
fn row_signature(sum: &SumForm, cm: &CompiledModel) -> Vec<(String, i64)> {
    let mut terms: Vec<(String, f64)> = sum
        .iter()
        .map(|m| {
            let key = if m.is_constant() {
                String::from("#const")
            } else {
                m.factors
                    .iter()
                    .map(|(a, e)| format!("{}^{}", a.label(cm), e))
                    .collect::<Vec<_>>()
                    .join("*")
            };
            (key, m.coeff)
        })
        .collect();
    terms.sort_by(|a, b| a.0.cmp(&b.0));
    let lead = terms.iter().map(|t| t.1).find(|c| c.abs() > 0.0).unwrap_or(1.0);
    terms
        .into_iter()
        .map(|(k, c)| (k, (c / lead * 1e6).round() as i64))
        .collect()
}

/// One way of reading a row as an assignment: `sum[term] = -(rest)`.
#[derive(Debug, Clone)]
pub struct Isolation {
    pub row: usize,
    pub term: usize,
    pub rest: SumForm,
}

/// All single-term isolations of each multi-term row.  A row with `n >= 2`
/// monomials yields `n` isolations; single-term rows only state that their
/// term vanishes and yield none.
pub fn saturate(rows: &[RestartRow]) -> Vec<Isolation> {
    let mut out = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        if row.sum.len() < 2 {
            continue;
        }
        for t in 0..row.sum.len() {
            let rest: Vec<Monomial> = row
                .sum
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != t)
                .map(|(_, m)| m.clone())
                .collect();
            out.push(Isolation { row: r, term: t, rest });
        }
    }
    out
}

/// Substitutes `w = scaled(w) * dt^order` for every impulsive unknown, so
/// that the scaled unknowns stay bounded as the step vanishes.
///
/// Fails when an impulsive unknown has no exact finite order: either the
/// analysis only bounded it, or it grows faster than any power of `1/dt`.
pub fn rescale(
    cm: &CompiledModel,
    sys: &RestartSystem,
    solution: &OrderSolution,
) -> Result<RestartSystem, ImpulseError> {
    let mut subs: BTreeMap<VarInst, Rat> = BTreeMap::new();
    for (i, atom) in sys.unknowns.iter().enumerate() {
        let iv = solution.intervals[i];
        if iv.lo <= Order::ZERO {
            continue;
        }
        let label = atom.label(cm);
        if !iv.is_point() {
            return Err(ImpulseError::UndeterminedOrder(label, iv.to_string()));
        }
        let Order::Finite(mu) = iv.lo else {
            return Err(ImpulseError::InfiniteOrder(label));
        };
        match atom {
            Atom::Inst(v) => {
                subs.insert(*v, mu);
            }
            // Jumps and residuals are bounded by construction; anything
            // else impulsive has no power-law substitution.
            other => {
                return Err(ImpulseError::Unsupported(format!(
                    "cannot rescale non-variable quantity {}",
                    other.label(cm)
                )))
            }
        }
    }

    let rows = sys
        .rows
        .iter()
        .map(|r| RestartRow {
            label: r.label.clone(),
            source: r.source.clone(),
            sum: normalize(r.sum.iter().map(|m| rescale_monomial(m, &subs)).collect()),
        })
        .collect();
    let mut out = RestartSystem {
        rows,
        unknowns: Vec::new(),
        known: sys.known.clone(),
        known_exprs: sys.known_exprs.clone(),
    };
    out.unknowns = collect_unknowns(&out);
    Ok(out)
}

fn rescale_monomial(m: &Monomial, subs: &BTreeMap<VarInst, Rat>) -> Monomial {
    let mut factors: BTreeMap<Atom, Rat> = BTreeMap::new();
    let mut dt_extra = Rat::zero();
    for (a, e) in &m.factors {
        match a {
            Atom::Inst(v) if subs.contains_key(v) => {
                let mu = subs[v];
                // w blows up like dt^(-mu), so w^e = scaled(w)^e * dt^(-mu*e)
                // with scaled(w) bounded.
                factors.insert(Atom::Scaled(*v), *e);
                dt_extra -= mu * e;
            }
            _ => {
                let entry = factors.entry(a.clone()).or_insert_with(Rat::zero);
                *entry += e;
            }
        }
    }
    if !dt_extra.is_zero() {
        let entry = factors.entry(Atom::Dt).or_insert_with(Rat::zero);
        *entry += dt_extra;
        if entry.is_zero() {
            factors.remove(&Atom::Dt);
        }
    }
    Monomial { coeff: m.coeff, factors }
}
