//! From restart rows to order constraints.
//!
//! The order of a monomial is an affine function of the orders of its
//! unknown atoms: exponents become coefficients, `dt` factors and known
//! values land in the constant.  Each restart row then yields one *group*
//! of affine terms subject to the cancellation discipline: a sum can only
//! be zero if its maximal order is attained by at least two terms (or by
//! none, every term being exactly zero).  Priors seed what is known a
//! priori — states and their jumps stay bounded, carried residuals are
//! bounded and generically nonzero.

use std::collections::BTreeMap;

use mdae_mode::CompiledModel;
use num_rational::Ratio;
use num_traits::Zero;

use crate::monomial::{series_info, Atom, Monomial, SeriesInfo};
use crate::system::RestartSystem;
use crate::{Order, OrderInterval, Rat};

/// An affine form `constant + sum(coeff * o(var))` over order variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Affine {
    pub constant: Rat,
    pub coeffs: BTreeMap<usize, Rat>,
}

impl Affine {
    pub fn constant(c: Rat) -> Affine {
        Affine { constant: c, coeffs: BTreeMap::new() }
    }

    /// The exact difference `self - other`.
    pub fn sub(&self, other: &Affine) -> Affine {
        let mut coeffs = self.coeffs.clone();
        for (&v, &k) in &other.coeffs {
            let entry = coeffs.entry(v).or_insert_with(Rat::zero);
            *entry -= k;
            if entry.is_zero() {
                coeffs.remove(&v);
            }
        }
        Affine { constant: self.constant - other.constant, coeffs }
    }

    /// Interval of possible values under the given variable bounds.  A
    /// variable of order `-inf` annihilates its monomial, so `-inf`
    /// dominates the sum from either side.
    pub fn eval(&self, iv: &[OrderInterval]) -> OrderInterval {
        let mut lo = Order::Finite(self.constant);
        let mut hi = lo;
        for (&v, &k) in &self.coeffs {
            let (tlo, thi) = if k > Rat::zero() {
                (iv[v].lo.scale(k), iv[v].hi.scale(k))
            } else {
                (iv[v].hi.scale(k), iv[v].lo.scale(k))
            };
            lo = lo.add(tlo);
            hi = hi.add(thi);
        }
        OrderInterval { lo, hi }
    }

    pub fn render(&self, labels: &[String]) -> String {
        let mut parts = Vec::new();
        if !self.constant.is_zero() || self.coeffs.is_empty() {
            parts.push(self.constant.to_string());
        }
        for (&v, &k) in &self.coeffs {
            let var = format!("o({})", labels[v]);
            if k == Ratio::new(1, 1) {
                parts.push(var);
            } else if k == Ratio::new(-1, 1) {
                parts.push(format!("-{var}"));
            } else {
                parts.push(format!("{k}*{var}"));
            }
        }
        parts.join(" + ").replace("+ -", "- ")
    }
}

/// The order terms of one restart row.  At any solution, either every term
/// is `-inf` or the maximum is attained by at least two of them.
#[derive(Debug, Clone)]
pub struct Group {
    pub row: usize,
    pub label: String,
    pub terms: Vec<Affine>,
}

/// An a-priori bound on one order variable, with its justification.
#[derive(Debug, Clone)]
pub struct Prior {
    pub var: usize,
    pub bound: OrderInterval,
    pub why: &'static str,
}

/// Ties the order of a function value to the order of its argument through
/// the function's series expansion.
#[derive(Debug, Clone)]
pub struct AppLink {
    /// Order variable of the function value.
    pub var: usize,
    /// Order variable of the (single) unknown atom inside the argument.
    pub inner: usize,
    /// Exponent of that atom in the argument monomial.
    pub exp: Rat,
    pub series: SeriesInfo,
}

/// The order-constraint system of a restart system.
#[derive(Debug, Clone)]
pub struct OrderConstraintSystem {
    /// Order variable index -> atom.
    pub atoms: Vec<Atom>,
    /// Order variable index -> human-readable name.
    pub labels: Vec<String>,
    pub groups: Vec<Group>,
    pub priors: Vec<Prior>,
    pub apps: Vec<AppLink>,
}

impl OrderConstraintSystem {
    pub fn var_of(&self, atom: &Atom) -> Option<usize> {
        self.atoms.iter().position(|a| a == atom)
    }

    /// Initial bounds: free, narrowed by the priors.
    pub fn initial_intervals(&self) -> Vec<OrderInterval> {
        let mut iv = vec![OrderInterval::FREE; self.atoms.len()];
        for p in &self.priors {
            iv[p.var] = iv[p.var].intersect(p.bound);
        }
        iv
    }
}

impl std::fmt::Display for OrderConstraintSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for g in &self.groups {
            let terms: Vec<String> = g.terms.iter().map(|t| t.render(&self.labels)).collect();
            writeln!(f, "{}: balance{{{}}}", g.label, terms.join(", "))?;
        }
        for p in &self.priors {
            writeln!(f, "prior: o({}) in {} ({})", self.labels[p.var], p.bound, p.why)?;
        }
        Ok(())
    }
}

/// Builds the order-constraint system of a restart system.
pub fn build_order_constraints(cm: &CompiledModel, sys: &RestartSystem) -> OrderConstraintSystem {
    let atoms = sys.unknowns.clone();
    let labels: Vec<String> = atoms.iter().map(|a| a.label(cm)).collect();
    let index: BTreeMap<&Atom, usize> = atoms.iter().enumerate().map(|(i, a)| (a, i)).collect();

    let mut groups = Vec::new();
    for (r, row) in sys.rows.iter().enumerate() {
        if row.sum.is_empty() {
            continue;
        }
        let terms: Vec<Affine> =
            row.sum.iter().map(|m| monomial_order(m, sys, &index)).collect();
        groups.push(Group { row: r, label: row.label.clone(), terms });
    }

    let mut priors = Vec::new();
    let mut apps = Vec::new();
    for (i, atom) in atoms.iter().enumerate() {
        match atom {
            Atom::Inst(v) => {
                if cm.source.is_state(&cm.var_names[v.var]) {
                    priors.push(Prior {
                        var: i,
                        bound: OrderInterval { lo: Order::NegInf, hi: Order::ZERO },
                        why: "state values stay bounded",
                    });
                }
            }
            Atom::Jump { .. } => priors.push(Prior {
                var: i,
                bound: OrderInterval { lo: Order::NegInf, hi: Order::ZERO },
                why: "difference of bounded values",
            }),
            Atom::Residual(_) => priors.push(Prior {
                var: i,
                bound: OrderInterval::point(Order::ZERO),
                why: "carried value of an equation that held before the change",
            }),
            Atom::App { name, inner, exp } => {
                let series = series_info(name).expect("series known at monomialization");
                match index.get(inner.as_ref()) {
                    Some(&inner_var) => {
                        apps.push(AppLink { var: i, inner: inner_var, exp: *exp, series })
                    }
                    // The argument turned out to be an inherited value, so
                    // the function value is itself a bounded known.
                    None => priors.push(Prior {
                        var: i,
                        bound: OrderInterval::point(Order::ZERO),
                        why: "function of a known value",
                    }),
                }
            }
            Atom::Scaled(_) | Atom::Dt | Atom::Known(_) => {}
        }
    }

    OrderConstraintSystem { atoms, labels, groups, priors, apps }
}

/// The order of one monomial as an affine form over order variables.
fn monomial_order(
    m: &Monomial,
    sys: &RestartSystem,
    index: &BTreeMap<&Atom, usize>,
) -> Affine {
    let mut constant = Rat::zero();
    let mut coeffs: BTreeMap<usize, Rat> = BTreeMap::new();
    for (a, &e) in &m.factors {
        match a {
            // o(dt) = -1, so dt^e contributes -e.
            Atom::Dt => constant -= e,
            // Knowns and inherited instances have order zero.
            Atom::Known(_) => {}
            Atom::Inst(v) if sys.known.contains(v) => {}
            other => {
                let var = index[other];
                let entry = coeffs.entry(var).or_insert_with(Rat::zero);
                *entry += e;
                if entry.is_zero() {
                    coeffs.remove(&var);
                }
            }
        }
    }
    Affine { constant, coeffs }
}
