//! Syntactic transforms applied between parsing and structural analysis.
//!
//! * [`desugar_when`] rewrites event equations (`when g`) into ordinary
//!   guarded equations under a fresh single-instant guard that fires on the
//!   rising edge of `g`.
//! * [`expand_differences`] eliminates derivatives by rewriting each
//!   `der`-occurrence into a forward difference quotient over the
//!   infinitesimal step [`Expr::Dt`], leaving only shifted instances.
//! * [`incidence`] / [`instance_incidence`] report which variables an
//!   equation touches and at which degree.

use crate::ast::*;
use crate::error::FrontendError;
use std::collections::{BTreeMap, BTreeSet};

/// Rewrite every `when g` equation into an `if` equation under a fresh
/// transient guard `up_g` defined by `next(up_g) = (not g) and next(g)`,
/// i.e. true exactly at instants where `g` rises from false to true.
///
/// Requires each `when`-guard to be defined in next-value form (so its next
/// value is available when the rising edge must be detected).  Idempotent:
/// a model without `when` equations is returned unchanged.
pub fn desugar_when(model: &Model) -> Result<Model, FrontendError> {
    let mut out = model.clone();
    let mut fresh: BTreeMap<String, String> = BTreeMap::new();
    for eq in &mut out.equations {
        let g = match &eq.kind {
            EquationKind::When(g) => g.clone(),
            EquationKind::If(_) => continue,
        };
        let up_name = match fresh.get(&g) {
            Some(name) => name.clone(),
            None => {
                let def = model
                    .guard_def(&g)
                    .expect("parser guarantees when-guards are declared");
                if def.form != GuardForm::Next {
                    return Err(FrontendError::WhenNeedsNextForm { guard: g.clone() });
                }
                let mut name = format!("up_{g}");
                let mut counter = 0;
                while name_taken(model, &name) {
                    counter += 1;
                    name = format!("up_{g}_{counter}");
                }
                out.guards.push(GuardDef {
                    name: name.clone(),
                    form: GuardForm::Next,
                    init: Some(false),
                    mode_type: ModeType::Transient,
                    // The body gives the guard's next value:
                    // up is true next iff g is false now and true next,
                    // and g's next value is given by g's own body.
                    body: BoolExpr::And(vec![
                        BoolExpr::Not(Box::new(BoolExpr::GuardRef(g.clone()))),
                        def.body.clone(),
                    ]),
                    line: def.line,
                });
                fresh.insert(g.clone(), name.clone());
                name
            }
        };
        eq.kind = EquationKind::If(GuardExpr::Lit(up_name, true));
    }
    Ok(out)
}

fn name_taken(model: &Model, name: &str) -> bool {
    model.params.iter().any(|p| p.name == name)
        || model.variables.iter().any(|v| v.name == name)
        || model.guards.iter().any(|g| g.name == name)
}

/// Replace every derivative occurrence by its forward difference quotient:
/// the `d`-th derivative of `x`, shifted by `s`, becomes
///
/// ```text
/// (sum over k of (-1)^(d-k) * C(d,k) * x shifted by s+k) / dt^d
/// ```
///
/// so `der(x)` becomes `(next(x) - x) / dt` and `der(der(x))` becomes
/// `(next(next(x)) - 2*next(x) + x) / dt^2`.  After the pass every signal
/// word consists of shifts only.  Idempotent.
pub fn expand_differences(model: &Model) -> Model {
    expand_differences_stretched(model, 1)
}

/// Stretched variant of [`expand_differences`]: derivatives expand to the
/// averaged slope over `m` unit shifts,
///
/// ```text
/// der(x)  ->  (next^m(x) - x) / (m * dt)
/// ```
///
/// (higher orders telescope accordingly), and explicit shifts widen to `m`
/// unit shifts, so every incidence degree of the result is `m` times the
/// degree produced by the plain expansion.  `m = 1` *is* the plain
/// expansion.
///
/// Unlike the plain expansion, this is **not** idempotent for `m > 1`: it
/// must be applied to a model whose shifts are still source-level (an
/// already-expanded model would have its unit shifts widened again).
pub fn expand_differences_stretched(model: &Model, m: u32) -> Model {
    assert!(m >= 1, "stretch factor must be positive");
    let mut out = model.clone();
    for eq in &model.equations {
        for s in expr_signals(&eq.lhs).chain(expr_signals(&eq.rhs)) {
            let d = s.diff_count();
            if d > 0 {
                let entry = out.diff_orders.entry(s.base.clone()).or_insert(0);
                *entry = (*entry).max(d);
            }
        }
    }
    for eq in &mut out.equations {
        eq.lhs = expand_expr(&eq.lhs, m);
        eq.rhs = expand_expr(&eq.rhs, m);
    }
    for g in &mut out.guards {
        g.body = expand_bool(&g.body, m);
    }
    out
}

fn expand_expr(e: &Expr, m: u32) -> Expr {
    match e {
        Expr::Signal(s) => expand_signal(s, m),
        Expr::Num(_) | Expr::Param(_) | Expr::Pre(_) | Expr::Dt => e.clone(),
        Expr::Neg(inner) => Expr::Neg(Box::new(expand_expr(inner, m))),
        Expr::Add(parts) => Expr::Add(parts.iter().map(|p| expand_expr(p, m)).collect()),
        Expr::Mul(parts) => Expr::Mul(parts.iter().map(|p| expand_expr(p, m)).collect()),
        Expr::Div(a, b) => Expr::Div(Box::new(expand_expr(a, m)), Box::new(expand_expr(b, m))),
        Expr::Pow(inner, r) => Expr::Pow(Box::new(expand_expr(inner, m)), *r),
        Expr::App(name, args) => {
            Expr::App(name.clone(), args.iter().map(|a| expand_expr(a, m)).collect())
        }
    }
}

fn expand_bool(b: &BoolExpr, m: u32) -> BoolExpr {
    match b {
        BoolExpr::Const(_) | BoolExpr::GuardRef(_) => b.clone(),
        BoolExpr::Cmp(l, op, r) => BoolExpr::Cmp(expand_expr(l, m), *op, expand_expr(r, m)),
        BoolExpr::Not(inner) => BoolExpr::Not(Box::new(expand_bool(inner, m))),
        BoolExpr::And(parts) => BoolExpr::And(parts.iter().map(|p| expand_bool(p, m)).collect()),
        BoolExpr::Or(parts) => BoolExpr::Or(parts.iter().map(|p| expand_bool(p, m)).collect()),
    }
}

fn expand_signal(s: &SignalRef, m: u32) -> Expr {
    let d = s.diff_count();
    if d == 0 {
        if m == 1 || s.word.is_empty() {
            return Expr::Signal(s.clone());
        }
        return Expr::Signal(SignalRef::with_word(
            s.base.clone(),
            vec![WordLetter::Shift; (m * s.shift_count()) as usize],
        ));
    }
    let shift = s.shift_count();
    let mut terms = Vec::new();
    for k in 0..=d {
        let coef = binomial(d, k) as i64 * if (d - k) % 2 == 0 { 1 } else { -1 };
        let inst = Expr::Signal(SignalRef::with_word(
            s.base.clone(),
            vec![WordLetter::Shift; (m * (shift + k)) as usize],
        ));
        let term = match coef {
            1 => inst,
            -1 => Expr::Neg(Box::new(inst)),
            c if c < 0 => Expr::Neg(Box::new(Expr::Mul(vec![Expr::Num(-c as f64), inst]))),
            c => Expr::Mul(vec![Expr::Num(c as f64), inst]),
        };
        terms.push(term);
    }
    // Put the newest instance first so the printed form reads
    // (next(x) - x) / dt.
    terms.reverse();
    let numer = if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Add(terms) };
    let dt_pow = if d == 1 {
        Expr::Dt
    } else {
        Expr::Pow(Box::new(Expr::Dt), Exponent::from_integer(d as i64))
    };
    let denom = if m == 1 {
        dt_pow
    } else {
        Expr::Mul(vec![Expr::Num((m as f64).powi(d as i32)), dt_pow])
    };
    Expr::Div(Box::new(numer), Box::new(denom))
}

fn binomial(n: u32, k: u32) -> u64 {
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Maximum degree (word length) at which each variable occurs in the
/// expression.  Valid both before expansion (derivative orders count toward
/// the degree) and after (pure shift degrees).
pub fn incidence(e: &Expr) -> BTreeMap<String, u32> {
    let mut out = BTreeMap::new();
    for s in expr_signals(e) {
        let entry = out.entry(s.base.clone()).or_insert(0);
        *entry = (*entry).max(s.degree());
    }
    out
}

/// Union of [`incidence`] over an equation's two sides.
pub fn equation_incidence(eq: &Equation) -> BTreeMap<String, u32> {
    let mut out = incidence(&eq.lhs);
    for (base, deg) in incidence(&eq.rhs) {
        let entry = out.entry(base).or_insert(0);
        *entry = (*entry).max(deg);
    }
    out
}

/// Exact set of `(variable, shift)` instances occurring in an equation.
///
/// Only meaningful after [`expand_differences`]; panics if a derivative
/// occurrence remains.
pub fn instance_incidence(eq: &Equation) -> BTreeSet<(String, u32)> {
    let mut out = BTreeSet::new();
    for s in expr_signals(&eq.lhs).chain(expr_signals(&eq.rhs)) {
        assert!(
            s.diff_count() == 0,
            "instance incidence requires difference-expanded equations, \
             found derivative of `{}`",
            s.base
        );
        out.insert((s.base.clone(), s.shift_count()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_model;

    #[test]
    fn first_derivative_expands_to_forward_difference() {
        let m = parse_model("var x init 0; equation e: der(x) = 1;").unwrap();
        let ex = expand_differences(&m);
        let lhs = &ex.equations[0].lhs;
        match lhs {
            Expr::Div(numer, denom) => {
                assert_eq!(**denom, Expr::Dt);
                match &**numer {
                    Expr::Add(parts) => {
                        assert_eq!(parts.len(), 2);
                        assert_eq!(
                            parts[0],
                            Expr::Signal(SignalRef::with_word("x", vec![WordLetter::Shift]))
                        );
                        assert_eq!(
                            parts[1],
                            Expr::Neg(Box::new(Expr::signal("x")))
                        );
                    }
                    other => panic!("unexpected numerator {other:?}"),
                }
            }
            other => panic!("unexpected expansion {other:?}"),
        }
        assert_eq!(ex.diff_orders.get("x"), Some(&1));
    }

    #[test]
    fn second_derivative_uses_three_instances() {
        let m = parse_model("var x init 0; equation e: der(der(x)) = 0;").unwrap();
        let ex = expand_differences(&m);
        let inc = instance_incidence(&ex.equations[0]);
        let expected: BTreeSet<(String, u32)> =
            [("x".to_string(), 0), ("x".to_string(), 1), ("x".to_string(), 2)]
                .into_iter()
                .collect();
        assert_eq!(inc, expected);
        // Coefficient pattern next(next(x)) - 2 next(x) + x over dt^2.
        match &ex.equations[0].lhs {
            Expr::Div(_, denom) => {
                assert_eq!(**denom, Expr::Pow(Box::new(Expr::Dt), Exponent::from_integer(2)));
            }
            other => panic!("unexpected expansion {other:?}"),
        }
    }

    #[test]
    fn shifted_derivative_keeps_its_shift() {
        // next(der(x)) = (next(next(x)) - next(x)) / dt
        let m = parse_model("var x init 0; equation e: next(der(x)) = 0;").unwrap();
        let ex = expand_differences(&m);
        let inc = instance_incidence(&ex.equations[0]);
        let expected: BTreeSet<(String, u32)> =
            [("x".to_string(), 1), ("x".to_string(), 2)].into_iter().collect();
        assert_eq!(inc, expected);
    }

    #[test]
    fn stretched_expansion_scales_every_degree() {
        let m = parse_model(
            "var x init 0; var y init 0; \
             equation a: der(der(x)) = 0; \
             equation b: next(der(y)) = 0;",
        )
        .unwrap();
        let ex = expand_differences_stretched(&m, 3);
        // Second derivative telescopes: only multiples of the stretch factor.
        let inc_a = instance_incidence(&ex.equations[0]);
        let expected: BTreeSet<(String, u32)> =
            [("x".to_string(), 0), ("x".to_string(), 3), ("x".to_string(), 6)]
                .into_iter()
                .collect();
        assert_eq!(inc_a, expected);
        // Shifts widen too: next(der(y)) spans shifts 3 and 6.
        let inc_b = instance_incidence(&ex.equations[1]);
        let expected_b: BTreeSet<(String, u32)> =
            [("y".to_string(), 3), ("y".to_string(), 6)].into_iter().collect();
        assert_eq!(inc_b, expected_b);
        // Factor one is exactly the plain expansion.
        assert_eq!(expand_differences_stretched(&m, 1), expand_differences(&m));
    }

    #[test]
    fn expansion_is_idempotent() {
        let m = parse_model(
            "var x init 0; var y init 0; equation e: der(der(x)) + der(y) * x = 0;",
        )
        .unwrap();
        let once = expand_differences(&m);
        let twice = expand_differences(&once);
        assert_eq!(once, twice);
    }

    #[test]
    fn desugar_creates_one_rising_edge_guard_per_when_guard() {
        let m = parse_model(
            "var s; var y init 1; guard g init false = s <= 0; \
             equation a: when g next(y') = -0.9 * y'; \
             equation b: when g s = 0;",
        )
        .unwrap();
        let d = desugar_when(&m).unwrap();
        assert_eq!(d.guards.len(), 2);
        let up = &d.guards[1];
        assert_eq!(up.name, "up_g");
        assert_eq!(up.mode_type, ModeType::Transient);
        assert_eq!(up.init, Some(false));
        match &up.body {
            BoolExpr::And(parts) => {
                assert!(matches!(&parts[0], BoolExpr::Not(inner)
                    if matches!(&**inner, BoolExpr::GuardRef(n) if n == "g")));
                assert_eq!(parts[1], m.guards[0].body);
            }
            other => panic!("unexpected body {other:?}"),
        }
        for eq in &d.equations {
            assert_eq!(eq.kind, EquationKind::If(GuardExpr::Lit("up_g".into(), true)));
        }
        // Idempotent: nothing left to rewrite.
        assert_eq!(desugar_when(&d).unwrap(), d);
    }

    #[test]
    fn desugar_rejects_current_form_when_guards() {
        let m = parse_model(
            "var s; guard g = s <= 0; equation a: when g s = 0;",
        )
        .unwrap();
        let err = desugar_when(&m).unwrap_err();
        assert!(matches!(err, FrontendError::WhenNeedsNextForm { guard } if guard == "g"));
    }

    #[test]
    fn incidence_reports_max_degree_per_variable() {
        let m = parse_model(
            "var x init 0; var lam; equation e: der(der(x)) + lam * x = 0;",
        )
        .unwrap();
        let inc = equation_incidence(&m.equations[0]);
        assert_eq!(inc.get("x"), Some(&2));
        assert_eq!(inc.get("lam"), Some(&0));
        let ex = expand_differences(&m);
        let inc2 = equation_incidence(&ex.equations[0]);
        assert_eq!(inc2, inc);
    }
}
