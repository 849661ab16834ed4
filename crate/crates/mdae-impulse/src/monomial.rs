//! Normalisation of restart-equation expressions into sums of monomials.
//!
//! The order calculus only knows products and powers, so every equation is
//! first flattened into a [`SumForm`]: a sum of monomials, each a real
//! coefficient times a product of [`Atom`]s raised to rational exponents.
//! Expressions outside this fragment (division by a sum, a smooth function
//! applied to a sum of unknowns, ...) are rejected rather than guessed at.

use std::collections::BTreeMap;

use mdae_frontend::{Expr, SignalRef};
use mdae_mode::{CompiledModel, EqInst, VarInst};
use num_rational::Ratio;
use num_traits::{Signed, Zero};

use crate::{ImpulseError, Rat};

/// Coefficients this close to zero are treated as exact cancellations.
const COEFF_EPS: f64 = 1e-12;

/// An indivisible factor of a monomial.
///
/// Atoms are the carriers of magnitude orders: every atom either has a
/// fixed order (knowns, `dt`) or gets an order variable in the constraint
/// system (unknown instances, jumps, residuals, function values).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    /// A variable instance `v@shift`.
    Inst(VarInst),
    /// The jump `v@to - v@from` of a state variable across the change.
    /// Both endpoints are bounded, so the jump has order at most zero;
    /// keeping it atomic avoids pricing the difference as a generic sum.
    Jump { var: usize, from: u32, to: u32 },
    /// The leftover value of an equation erased at the change: the equation
    /// held in the previous mode, so evaluating its residual on carried
    /// values gives a bounded, generically nonzero quantity.
    Residual(EqInst),
    /// The infinitesimal step, of fixed order `-1`.
    Dt,
    /// An opaque subexpression involving only known values, of order zero;
    /// the expression itself is kept in [`RestartSystem::known_exprs`]
    /// keyed by this label so the runtime can still evaluate it.
    ///
    /// [`RestartSystem::known_exprs`]: crate::RestartSystem::known_exprs
    Known(String),
    /// A smooth function applied to `c * inner^exp`; its order is tied to
    /// the order of the argument by the function's series expansion.
    App { name: String, inner: Box<Atom>, exp: Rat },
    /// A previously impulsive unknown after rescaling by a power of `dt`;
    /// analysed like a fresh algebraic unknown.
    Scaled(VarInst),
}

impl Atom {
    /// Never carries an order variable: its order is a known constant.
    pub fn is_fixed_known(&self) -> bool {
        matches!(self, Atom::Dt | Atom::Known(_))
    }

    pub fn label(&self, cm: &CompiledModel) -> String {
        match self {
            Atom::Inst(v) => cm.var_label(*v),
            Atom::Jump { var, from, to } => {
                let base = &cm.var_names[*var];
                if *from == 0 && *to == 1 {
                    format!("jump({base})")
                } else {
                    format!("jump({base}@{from}..{to})")
                }
            }
            Atom::Residual(e) => format!("residual({})", cm.eq_label(*e)),
            Atom::Dt => "dt".into(),
            Atom::Known(l) => l.clone(),
            Atom::App { name, inner, exp } => {
                if exp.is_one() {
                    format!("{name}({})", inner.label(cm))
                } else {
                    format!("{name}({}^{exp})", inner.label(cm))
                }
            }
            Atom::Scaled(v) => format!("scaled({})", cm.var_label(*v)),
        }
    }
}

trait RatExt {
    fn is_one(&self) -> bool;
}

impl RatExt for Rat {
    fn is_one(&self) -> bool {
        *self == Ratio::new(1, 1)
    }
}

/// A real coefficient times a product of atoms raised to rational powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub factors: BTreeMap<Atom, Rat>,
}

impl Monomial {
    pub fn constant(c: f64) -> Monomial {
        Monomial { coeff: c, factors: BTreeMap::new() }
    }

    pub fn atom(a: Atom) -> Monomial {
        Monomial { coeff: 1.0, factors: [(a, Ratio::new(1, 1))].into() }
    }

    pub fn is_constant(&self) -> bool {
        self.factors.is_empty()
    }

    /// The exponent of `atom`, zero if absent.
    pub fn exponent(&self, atom: &Atom) -> Rat {
        self.factors.get(atom).copied().unwrap_or_else(Ratio::zero)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut factors = self.factors.clone();
        for (a, e) in &other.factors {
            let entry = factors.entry(a.clone()).or_insert_with(Ratio::zero);
            *entry += e;
            if entry.is_zero() {
                factors.remove(a);
            }
        }
        Monomial { coeff: self.coeff * other.coeff, factors }
    }

    /// Raises to a rational power. Fails for non-integer powers of negative
    /// coefficients (no principal real value) unless the denominator is odd.
    pub fn pow(&self, k: Rat) -> Result<Monomial, ImpulseError> {
        if k.is_zero() {
            return Ok(Monomial::constant(1.0));
        }
        let coeff = if k.is_integer() {
            self.coeff.powi(*k.numer() as i32)
        } else if self.coeff >= 0.0 {
            self.coeff.powf(ratio_f64(k))
        } else if k.denom() % 2 == 1 {
            // Odd roots of negative reals are well defined.
            -(-self.coeff).powf(ratio_f64(k))
        } else {
            return Err(ImpulseError::Unsupported(format!(
                "power {k} of a negative coefficient {}",
                self.coeff
            )));
        };
        let factors = self.factors.iter().map(|(a, e)| (a.clone(), e * k)).collect();
        Ok(Monomial { coeff, factors })
    }

}

fn ratio_f64(r: Rat) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// A normalised sum of monomials: like terms collected, zero terms dropped.
pub type SumForm = Vec<Monomial>;

/// Collects like terms and drops (numerically) vanished ones.
pub fn normalize(terms: Vec<Monomial>) -> SumForm {
    let mut by_shape: BTreeMap<BTreeMap<Atom, Rat>, f64> = BTreeMap::new();
    for m in terms {
        if m.coeff == 0.0 {
            continue;
        }
        *by_shape.entry(m.factors).or_insert(0.0) += m.coeff;
    }
    by_shape
        .into_iter()
        .filter(|(_, c)| c.abs() > COEFF_EPS)
        .map(|(factors, coeff)| Monomial { coeff, factors })
        .collect()
}

/// Scales a sum by a constant.
pub fn scale(sum: &SumForm, c: f64) -> SumForm {
    sum.iter().map(|m| Monomial { coeff: m.coeff * c, factors: m.factors.clone() }).collect()
}

/// Shifts every variable instance in the sum `by` extra steps.
pub fn shift_sum(sum: &SumForm, by: u32) -> SumForm {
    if by == 0 {
        return sum.clone();
    }
    sum.iter()
        .map(|m| Monomial {
            coeff: m.coeff,
            factors: m
                .factors
                .iter()
                .map(|(a, e)| (shift_atom(a, by), *e))
                .collect(),
        })
        .collect()
}

fn shift_atom(a: &Atom, by: u32) -> Atom {
    match a {
        Atom::Inst(v) => Atom::Inst(VarInst { var: v.var, shift: v.shift + by }),
        Atom::Jump { var, from, to } => Atom::Jump { var: *var, from: from + by, to: to + by },
        Atom::App { name, inner, exp } => Atom::App {
            name: name.clone(),
            inner: Box::new(shift_atom(inner, by)),
            exp: *exp,
        },
        other => other.clone(),
    }
}

/// Flattens an equation-side expression into a sum of monomials.
///
/// The compiled model supplies variable indices and parameter values; the
/// expression must already be in shift form (derivatives expanded away).
pub fn monomialize(cm: &CompiledModel, expr: &Expr) -> Result<SumForm, ImpulseError> {
    monomialize_collect(cm, expr, &mut BTreeMap::new())
}

/// Like [`monomialize`], but records the expression behind every opaque
/// [`Atom::Known`] label so callers can evaluate it numerically later.
pub fn monomialize_collect(
    cm: &CompiledModel,
    expr: &Expr,
    known_exprs: &mut BTreeMap<String, Expr>,
) -> Result<SumForm, ImpulseError> {
    Ok(normalize(mono_terms(cm, expr, known_exprs)?))
}

fn mono_terms(
    cm: &CompiledModel,
    expr: &Expr,
    kx: &mut BTreeMap<String, Expr>,
) -> Result<Vec<Monomial>, ImpulseError> {
    match expr {
        Expr::Num(c) => Ok(vec![Monomial::constant(*c)]),
        Expr::Param(p) => {
            let v = cm.source.param_value(p).ok_or_else(|| {
                ImpulseError::Unsupported(format!("unknown parameter {p}"))
            })?;
            Ok(vec![Monomial::constant(v)])
        }
        Expr::Signal(s) => Ok(vec![Monomial::atom(signal_atom(cm, s)?)]),
        Expr::Pre(s) => {
            // A held previous value is known at the change instant.
            let label = format!("pre({})", s.base);
            kx.insert(label.clone(), expr.clone());
            Ok(vec![Monomial::atom(Atom::Known(label))])
        }
        Expr::Dt => Ok(vec![Monomial::atom(Atom::Dt)]),
        Expr::Neg(e) => Ok(scale(&mono_terms(cm, e, kx)?, -1.0)),
        Expr::Add(es) => {
            let mut out = Vec::new();
            for e in es {
                out.extend(mono_terms(cm, e, kx)?);
            }
            Ok(out)
        }
        Expr::Mul(es) => {
            let mut acc = vec![Monomial::constant(1.0)];
            for e in es {
                let rhs = normalize(mono_terms(cm, e, kx)?);
                let mut next = Vec::new();
                for a in &acc {
                    for b in &rhs {
                        next.push(a.mul(b));
                    }
                }
                acc = next;
            }
            Ok(acc)
        }
        Expr::Div(n, d) => {
            let den = normalize(mono_terms(cm, d, kx)?);
            let inv = single_monomial(den, "divisor")?.pow(Ratio::new(-1, 1))?;
            Ok(normalize(mono_terms(cm, n, kx)?)
                .iter()
                .map(|m| m.mul(&inv))
                .collect())
        }
        Expr::Pow(b, k) => {
            let base = normalize(mono_terms(cm, b, kx)?);
            if base.len() == 1 {
                return Ok(vec![base[0].pow(*k)?]);
            }
            if k.is_integer() && *k.numer() >= 0 && *k.numer() <= 8 {
                // Expand small integer powers of sums by repeated product.
                let mut acc = vec![Monomial::constant(1.0)];
                for _ in 0..*k.numer() {
                    let mut next = Vec::new();
                    for a in &acc {
                        for m in &base {
                            next.push(a.mul(m));
                        }
                    }
                    acc = normalize(next);
                }
                return Ok(acc);
            }
            Err(ImpulseError::Unsupported(format!(
                "power {k} of a sum of {} terms",
                base.len()
            )))
        }
        Expr::App(name, args) => app_atom(cm, name, args, kx),
    }
}

fn signal_atom(cm: &CompiledModel, s: &SignalRef) -> Result<Atom, ImpulseError> {
    if s.diff_count() != 0 {
        return Err(ImpulseError::Unsupported(format!(
            "underived occurrence of {}; expand derivatives first",
            s.base
        )));
    }
    let var = cm.var_index(&s.base).ok_or_else(|| {
        ImpulseError::Unsupported(format!("unknown variable {}", s.base))
    })?;
    Ok(Atom::Inst(VarInst { var, shift: s.shift_count() }))
}

/// Prices a function application.  Applications of known-only arguments
/// become opaque known atoms; a single-monomial unknown argument becomes an
/// [`Atom::App`] whose order the solver ties to the argument's order.
fn app_atom(
    cm: &CompiledModel,
    name: &str,
    args: &[Expr],
    kx: &mut BTreeMap<String, Expr>,
) -> Result<Vec<Monomial>, ImpulseError> {
    let mut flats = Vec::with_capacity(args.len());
    let mut has_unknown = false;
    for a in args {
        let f = normalize(mono_terms(cm, a, kx)?);
        if f.iter().any(|m| m.factors.keys().any(|at| !at.is_fixed_known())) {
            has_unknown = true;
        }
        flats.push(f);
    }
    if !has_unknown {
        let label = format!("{name}({})", args.iter().map(expr_text).collect::<Vec<_>>().join(", "));
        kx.insert(label.clone(), Expr::App(name.to_owned(), args.to_vec()));
        return Ok(vec![Monomial::atom(Atom::Known(label))]);
    }
    if args.len() != 1 {
        return Err(ImpulseError::Unsupported(format!(
            "{name} applied to several arguments with unknowns"
        )));
    }
    if series_info(name).is_none() {
        return Err(ImpulseError::Unsupported(format!(
            "no series expansion known for {name}"
        )));
    }
    let arg = single_monomial(flats.pop().unwrap(), &format!("argument of {name}"))?;
    let unknowns: Vec<(&Atom, &Rat)> =
        arg.factors.iter().filter(|(a, _)| !a.is_fixed_known()).collect();
    if unknowns.len() != 1 || arg.factors.len() != 1 {
        return Err(ImpulseError::Unsupported(format!(
            "{name} applied to a compound monomial"
        )));
    }
    let (inner, exp) = (unknowns[0].0.clone(), *unknowns[0].1);
    Ok(vec![Monomial::atom(Atom::App { name: name.into(), inner: Box::new(inner), exp })])
}

fn expr_text(e: &Expr) -> String {
    mdae_frontend::print_expr(e)
}

fn single_monomial(sum: SumForm, what: &str) -> Result<Monomial, ImpulseError> {
    if sum.len() == 1 {
        Ok(sum.into_iter().next().unwrap())
    } else {
        Err(ImpulseError::Unsupported(format!(
            "{what} is a sum of {} terms",
            sum.len()
        )))
    }
}

/// Renders a sum of monomials readably, e.g. `w1@1*dt^-1 - w1*dt^-1 - 1`.
pub fn render_sum(cm: &CompiledModel, sum: &SumForm) -> String {
    if sum.is_empty() {
        return "0".into();
    }
    let mut out = String::new();
    for (i, m) in sum.iter().enumerate() {
        let neg = m.coeff < 0.0;
        if i == 0 {
            if neg {
                out.push('-');
            }
        } else {
            out.push_str(if neg { " - " } else { " + " });
        }
        let mag = m.coeff.abs();
        let mut parts: Vec<String> = Vec::new();
        if m.is_constant() || (mag - 1.0).abs() > 1e-12 {
            parts.push(if mag.fract() == 0.0 && mag < 1e15 {
                format!("{}", mag as i64)
            } else {
                format!("{mag}")
            });
        }
        for (a, e) in &m.factors {
            if *e == Ratio::new(1, 1) {
                parts.push(a.label(cm));
            } else {
                parts.push(format!("{}^{}", a.label(cm), e));
            }
        }
        out.push_str(&parts.join("*"));
    }
    out
}

/// How a smooth function transforms the order of its argument.
///
/// For `f(x) = sum a_k x^k` with `x` vanishing, `o(f(x)) = min_k(k) *
/// o(x)` over the support; what matters is whether `a_0` is nonzero (then
/// `f` of a small argument has order zero) and whether the support is
/// infinite (then an impulsive argument makes the value grow faster than
/// any power of `1/dt`).
#[derive(Debug, Clone, Copy)]
pub struct SeriesInfo {
    /// `f(0) != 0`.
    pub constant_term: bool,
    /// Smallest nonzero-power exponent in the expansion.
    pub first_power: i64,
    /// The expansion has unboundedly large exponents.
    pub infinite_support: bool,
}

pub(crate) fn series_info(name: &str) -> Option<SeriesInfo> {
    let i = match name {
        "sin" | "tan" | "asin" | "atan" | "sinh" | "tanh" => SeriesInfo {
            constant_term: false,
            first_power: 1,
            infinite_support: true,
        },
        "cos" | "cosh" | "exp" => SeriesInfo {
            constant_term: true,
            first_power: 1,
            infinite_support: true,
        },
        _ => return None,
    };
    Some(i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mdae_frontend::load_model;
    use mdae_mode::compile;

    fn cm_for(body: &str) -> CompiledModel {
        let src = format!(
            "param a = 2.0;\nvar x init 1.0;\nvar y init 2.0;\nvar z;\nequation cl: der(x) = 1;\nequation cy: der(y) = 1;\nequation e: {body};\n"
        );
        compile(&load_model(&src).unwrap()).unwrap()
    }

    fn mono_of(body: &str) -> SumForm {
        let cm = cm_for(body);
        let eq = cm.eq_index("e").unwrap();
        monomialize(&cm, &cm.source.equations[eq].residual()).unwrap()
    }

    #[test]
    fn like_terms_collect_and_cancel() {
        // z = 2x + ax - 4x  with a = 2  leaves no x term at all.
        let sum = mono_of("z = 2*x + a*x - 4*x");
        assert_eq!(sum.len(), 1, "{sum:?}");
        assert_eq!(sum[0].coeff, 1.0);
    }

    #[test]
    fn constant_identities_vanish_entirely() {
        let cm = cm_for("z = x");
        let five_minus_five =
            Expr::Add(vec![Expr::Num(5.0), Expr::Neg(Box::new(Expr::Num(5.0)))]);
        assert!(monomialize(&cm, &five_minus_five).unwrap().is_empty());
    }

    #[test]
    fn expanded_derivatives_divide_by_the_step() {
        // der(x) = 1 expands to (next(x) - x)/dt - 1: two step-scaled
        // instance terms of opposite sign plus a constant.
        let cm = cm_for("z = x");
        let eq = cm.eq_index("cl").unwrap();
        let sum = monomialize(&cm, &cm.source.equations[eq].residual()).unwrap();
        assert_eq!(sum.len(), 3, "{sum:?}");
        let step_terms: Vec<&Monomial> =
            sum.iter().filter(|m| m.factors.contains_key(&Atom::Dt)).collect();
        assert_eq!(step_terms.len(), 2);
        let mut coeffs: Vec<f64> = step_terms.iter().map(|m| m.coeff).collect();
        coeffs.sort_by(f64::total_cmp);
        assert_eq!(coeffs, vec![-1.0, 1.0]);
        for m in step_terms {
            assert_eq!(m.exponent(&Atom::Dt), Ratio::new(-1, 1));
        }
        assert!(sum.iter().any(|m| m.is_constant() && m.coeff == -1.0));
    }

    #[test]
    fn division_by_a_sum_is_rejected() {
        let cm = cm_for("z = x / (x + y)");
        let eq = cm.eq_index("e").unwrap();
        let err = monomialize(&cm, &cm.source.equations[eq].residual()).unwrap_err();
        assert!(matches!(err, ImpulseError::Unsupported(_)), "{err}");
    }

    #[test]
    fn fractional_powers_scale_exponents_exactly() {
        let sum = mono_of("z = (x^3)^(1/3)");
        let m = sum.iter().find(|m| !m.factors.is_empty() && m.coeff < 0.0).unwrap();
        let (atom, e) = m.factors.iter().next().unwrap();
        assert!(matches!(atom, Atom::Inst(_)));
        assert_eq!(*e, Ratio::new(1, 1));
    }

    #[test]
    fn small_integer_powers_of_sums_expand() {
        let sum = mono_of("z = (x + y)^2");
        // z - x^2 - 2xy - y^2
        assert_eq!(sum.len(), 4, "{sum:?}");
        let mixed = sum
            .iter()
            .find(|m| m.factors.len() == 2)
            .expect("cross term");
        assert_eq!(mixed.coeff, -2.0);
    }

    #[test]
    fn functions_of_known_values_become_opaque_knowns() {
        // `a` is a parameter, so sin(a) is a known quantity of order zero.
        let sum = mono_of("z = sin(a)");
        assert!(sum.iter().any(|m| m
            .factors
            .keys()
            .any(|at| matches!(at, Atom::Known(l) if l.starts_with("sin")))));
    }

    #[test]
    fn functions_of_unknowns_keep_the_argument_atom() {
        let sum = mono_of("z = sin(x)");
        let app = sum
            .iter()
            .flat_map(|m| m.factors.keys())
            .find_map(|a| match a {
                Atom::App { name, inner, .. } => Some((name.clone(), inner.clone())),
                _ => None,
            })
            .expect("app atom");
        assert_eq!(app.0, "sin");
        assert!(matches!(*app.1, Atom::Inst(_)));
    }

    #[test]
    fn functions_of_sums_of_unknowns_are_rejected() {
        let cm = cm_for("z = sin(x + z)");
        let eq = cm.eq_index("e").unwrap();
        assert!(monomialize(&cm, &cm.source.equations[eq].residual()).is_err());
    }

    #[test]
    fn shifting_moves_instances_but_not_the_step() {
        let cm = cm_for("z = x");
        let eq = cm.eq_index("cl").unwrap();
        let sum = monomialize(&cm, &cm.source.equations[eq].residual()).unwrap();
        let shifted = shift_sum(&sum, 2);
        let shifts: Vec<u32> = shifted
            .iter()
            .flat_map(|m| m.factors.keys())
            .filter_map(|a| match a {
                Atom::Inst(v) => Some(v.shift),
                _ => None,
            })
            .collect();
        assert_eq!(shifts.len(), 2);
        assert!(shifts.contains(&2) && shifts.contains(&3), "{shifts:?}");
        assert!(shifted.iter().any(|m| m.factors.contains_key(&Atom::Dt)));
    }
}
