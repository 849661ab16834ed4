//! Pretty-printer producing source text that parses back to the same model.

use crate::ast::*;
use std::fmt::Write;

/// Render a model as source text.  For any model produced by the parser,
/// `parse_model(print_model(m))` is structurally equal to `m`.
pub fn print_model(m: &Model) -> String {
    let mut out = String::new();
    for p in &m.params {
        let _ = writeln!(out, "param {} = {};", p.name, fmt_f64(p.value));
    }
    for v in &m.variables {
        match v.init {
            Some(init) => {
                let der = match v.der_init {
                    Some(d) => format!(" der {}", fmt_f64(d)),
                    None => String::new(),
                };
                let _ = writeln!(out, "var {} init {}{};", v.name, fmt_f64(init), der);
            }
            None => {
                let _ = writeln!(out, "var {};", v.name);
            }
        }
    }
    for g in &m.guards {
        let body = print_bool(&g.body, 0);
        match (g.form, g.mode_type) {
            (GuardForm::Next, mode) => {
                let init = if g.init == Some(true) { "true" } else { "false" };
                let transient = if mode == ModeType::Transient { " transient" } else { "" };
                let _ = writeln!(out, "guard {} init {}{} = {};", g.name, init, transient, body);
            }
            (GuardForm::Current, ModeType::Transient) => {
                let _ = writeln!(out, "transient guard {} = {};", g.name, body);
            }
            (GuardForm::Current, ModeType::Long) => {
                let _ = writeln!(out, "guard {} = {};", g.name, body);
            }
        }
    }
    if m.cascade_bound > 0 {
        let _ = writeln!(out, "cascade_bound = {};", m.cascade_bound);
    }
    for eq in &m.equations {
        let head = match &eq.kind {
            EquationKind::If(GuardExpr::True) => String::new(),
            EquationKind::If(g) => format!("if {} then ", print_guard_expr(g, 0)),
            EquationKind::When(g) => format!("when {g} then "),
        };
        let _ = writeln!(
            out,
            "equation {}: {}{} = {};",
            eq.name,
            head,
            print_expr(&eq.lhs),
            print_expr(&eq.rhs)
        );
    }
    out
}

/// Render an expression (used for diagnostics and reports as well as by
/// [`print_model`]).
pub fn print_expr(e: &Expr) -> String {
    print_prec(e, 0)
}

/// Format a float so it parses back to the same value.
fn fmt_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

// Precedence levels: Add = 1, Mul/Div = 2, Neg = 3, Pow = 4, atoms = 5.
// A child is parenthesized when its level is below the context level.
fn print_prec(e: &Expr, ctx: u8) -> String {
    let (text, level) = match e {
        Expr::Num(v) => (fmt_f64(*v), 5),
        Expr::Param(name) => (name.clone(), 5),
        Expr::Signal(s) => (print_signal(s), 5),
        Expr::Pre(s) => (format!("pre({})", s.base), 5),
        Expr::Dt => ("dt".to_string(), 5),
        Expr::Neg(inner) => (format!("-{}", print_prec(inner, 3)), 3),
        Expr::Add(parts) => {
            let mut text = String::new();
            for (i, part) in parts.iter().enumerate() {
                if i == 0 {
                    text.push_str(&print_prec(part, 1));
                } else if let Expr::Neg(inner) = part {
                    text.push_str(" - ");
                    text.push_str(&print_prec(inner, 2));
                } else {
                    text.push_str(" + ");
                    text.push_str(&print_prec(part, 2));
                }
            }
            (text, 1)
        }
        Expr::Mul(parts) => {
            let mut text = String::new();
            for (i, part) in parts.iter().enumerate() {
                if i > 0 {
                    text.push_str(" * ");
                }
                // Later factors must not re-associate as division or
                // subtraction, so they need a slightly higher context.
                text.push_str(&print_prec(part, if i == 0 { 2 } else { 3 }));
            }
            (text, 2)
        }
        Expr::Div(a, b) => {
            (format!("{} / {}", print_prec(a, 2), print_prec(b, 3)), 2)
        }
        Expr::Pow(base, exp) => {
            let exp_text = if exp.is_integer() && *exp.numer() >= 0 {
                format!("{}", exp.numer())
            } else if exp.is_integer() {
                format!("({})", exp.numer())
            } else {
                format!("({}/{})", exp.numer(), exp.denom())
            };
            (format!("{}^{}", print_prec(base, 5), exp_text), 4)
        }
        Expr::App(name, args) => {
            let args: Vec<String> = args.iter().map(|a| print_prec(a, 0)).collect();
            (format!("{}({})", name, args.join(", ")), 5)
        }
    };
    if level < ctx {
        format!("({text})")
    } else {
        text
    }
}

fn print_signal(s: &SignalRef) -> String {
    let mut text = s.base.clone();
    for letter in &s.word {
        text = match letter {
            WordLetter::Diff => format!("der({text})"),
            WordLetter::Shift => format!("next({text})"),
        };
    }
    text
}

// Boolean precedence: Or = 1, And = 2, Not = 3, atoms = 4.
fn print_bool(b: &BoolExpr, ctx: u8) -> String {
    let (text, level) = match b {
        BoolExpr::Const(v) => (v.to_string(), 4),
        BoolExpr::GuardRef(name) => (name.clone(), 4),
        BoolExpr::Cmp(l, op, r) => {
            let op = match op {
                CmpOp::Le => "<=",
                CmpOp::Lt => "<",
                CmpOp::Ge => ">=",
                CmpOp::Gt => ">",
                CmpOp::Eq => "==",
            };
            (format!("{} {} {}", print_expr(l), op, print_expr(r)), 4)
        }
        BoolExpr::Not(inner) => (format!("not {}", print_bool(inner, 3)), 3),
        BoolExpr::And(parts) => {
            let parts: Vec<String> = parts.iter().map(|p| print_bool(p, 2)).collect();
            (parts.join(" and "), 2)
        }
        BoolExpr::Or(parts) => {
            let parts: Vec<String> = parts.iter().map(|p| print_bool(p, 1)).collect();
            (parts.join(" or "), 1)
        }
    };
    if level < ctx {
        format!("({text})")
    } else {
        text
    }
}

fn print_guard_expr(g: &GuardExpr, ctx: u8) -> String {
    let (text, level) = match g {
        GuardExpr::True => ("true".to_string(), 4),
        GuardExpr::Lit(name, true) => (name.clone(), 4),
        GuardExpr::Lit(name, false) => (format!("not {name}"), 3),
        GuardExpr::And(parts) => {
            let parts: Vec<String> = parts.iter().map(|p| print_guard_expr(p, 2)).collect();
            (parts.join(" and "), 2)
        }
        GuardExpr::Or(parts) => {
            let parts: Vec<String> = parts.iter().map(|p| print_guard_expr(p, 1)).collect();
            (parts.join(" or "), 1)
        }
    };
    if level < ctx {
        format!("({text})")
    } else {
        text
    }
}
