//! In-memory representation of a guarded-equation model.
//!
//! A model couples ordinary differential-algebraic equations with boolean
//! guards: each equation is active only in the modes where its guard
//! evaluates to true.  Derivatives and forward shifts are recorded
//! symbolically on each signal occurrence, so the same representation serves
//! both the source-level form (with `der`) and the difference form produced
//! by [`expand_differences`](crate::expand_differences).

use num_rational::Ratio;
use std::collections::BTreeMap;

/// One letter of the operator word attached to a signal occurrence.
///
/// Words read left to right: `[Diff, Shift]` means the signal is first
/// differentiated, then shifted one instant forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WordLetter {
    /// Time derivative (`der(x)`, `x'`).
    Diff,
    /// Forward shift by one instant (`next(x)`).
    Shift,
}

/// A signal occurrence: a base variable together with the word of
/// derivative/shift operators applied to it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignalRef {
    pub base: String,
    pub word: Vec<WordLetter>,
}

impl SignalRef {
    pub fn plain(base: impl Into<String>) -> Self {
        SignalRef { base: base.into(), word: Vec::new() }
    }

    pub fn with_word(base: impl Into<String>, word: Vec<WordLetter>) -> Self {
        SignalRef { base: base.into(), word }
    }

    /// Number of `Diff` letters in the word.
    pub fn diff_count(&self) -> u32 {
        self.word.iter().filter(|l| **l == WordLetter::Diff).count() as u32
    }

    /// Number of `Shift` letters in the word.
    pub fn shift_count(&self) -> u32 {
        self.word.iter().filter(|l| **l == WordLetter::Shift).count() as u32
    }

    /// Total word length; this is the (maximum) degree the occurrence
    /// contributes to the incidence weight of its equation.
    pub fn degree(&self) -> u32 {
        self.word.len() as u32
    }
}

/// Rational exponent used by [`Expr::Pow`].
pub type Exponent = Ratio<i64>;

/// An arithmetic expression.
///
/// Sums and products are n-ary; subtraction is represented as addition of a
/// negation and division as an explicit node so printed output stays close
/// to what was parsed.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Numeric literal.
    Num(f64),
    /// Reference to a declared parameter.
    Param(String),
    /// Signal occurrence.
    Signal(SignalRef),
    /// Previous-instant value of a signal; only legal inside guard bodies.
    Pre(SignalRef),
    /// The infinitesimal time step symbol introduced when derivatives are
    /// expanded into finite differences.  Never appears in parsed source.
    Dt,
    Neg(Box<Expr>),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Exponent),
    /// Application of a named smooth function, e.g. `sin(x)`.
    App(String, Vec<Expr>),
}

impl Expr {
    pub fn signal(base: impl Into<String>) -> Self {
        Expr::Signal(SignalRef::plain(base))
    }

    /// `lhs - rhs` as a single expression.
    pub fn difference(lhs: Expr, rhs: Expr) -> Expr {
        Expr::Add(vec![lhs, Expr::Neg(Box::new(rhs))])
    }
}

/// Comparison operator inside a guard body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
}

/// Boolean expression forming the body of a guard definition.
#[derive(Debug, Clone, PartialEq)]
pub enum BoolExpr {
    Const(bool),
    /// Comparison between two arithmetic expressions.
    Cmp(Expr, CmpOp, Expr),
    /// Current value of another guard.
    GuardRef(String),
    Not(Box<BoolExpr>),
    And(Vec<BoolExpr>),
    Or(Vec<BoolExpr>),
}

/// Whether a guard definition gives the *next* value of the guard (the
/// well-founded form: the body is evaluated at one instant to produce the
/// guard's value at the following instant) or its *current* value (which may
/// create an instantaneous fixpoint and is subject to the causality check).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardForm {
    /// `guard g init b = body;` — body defines the next value, `init` the
    /// value at the first instant.
    Next,
    /// `guard g = body;` — body defines the value at the same instant.
    Current,
}

/// Mode-duration class of a guard: guards marked `transient` hold for a
/// single instant (events), all others delimit modes of positive duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeType {
    Long,
    Transient,
}

/// Definition of one boolean guard variable.
#[derive(Debug, Clone)]
pub struct GuardDef {
    pub name: String,
    pub form: GuardForm,
    /// Initial value; present exactly when `form` is [`GuardForm::Next`].
    pub init: Option<bool>,
    pub mode_type: ModeType,
    pub body: BoolExpr,
    /// Source line of the definition, for diagnostics.
    pub line: usize,
}

// Structural equality ignores source positions.
impl PartialEq for GuardDef {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.form == other.form
            && self.init == other.init
            && self.mode_type == other.mode_type
            && self.body == other.body
    }
}

/// Propositional formula over guard names controlling when an equation is
/// active.
#[derive(Debug, Clone, PartialEq)]
pub enum GuardExpr {
    True,
    /// `(name, positive)`: the guard itself or its negation.
    Lit(String, bool),
    And(Vec<GuardExpr>),
    Or(Vec<GuardExpr>),
}

impl GuardExpr {
    /// Evaluate under a total valuation of guard names.
    pub fn eval(&self, valuation: &BTreeMap<String, bool>) -> bool {
        match self {
            GuardExpr::True => true,
            GuardExpr::Lit(name, positive) => {
                let v = *valuation.get(name).unwrap_or(&false);
                if *positive {
                    v
                } else {
                    !v
                }
            }
            GuardExpr::And(parts) => parts.iter().all(|p| p.eval(valuation)),
            GuardExpr::Or(parts) => parts.iter().any(|p| p.eval(valuation)),
        }
    }

    /// All guard names mentioned, in order of first occurrence.
    pub fn guard_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_names(&mut out);
        out
    }

    fn collect_names(&self, out: &mut Vec<String>) {
        match self {
            GuardExpr::True => {}
            GuardExpr::Lit(name, _) => {
                if !out.contains(name) {
                    out.push(name.clone());
                }
            }
            GuardExpr::And(parts) | GuardExpr::Or(parts) => {
                for p in parts {
                    p.collect_names(out);
                }
            }
        }
    }
}

/// How an equation is conditioned on guards.
#[derive(Debug, Clone, PartialEq)]
pub enum EquationKind {
    /// Active whenever the guard expression holds (`if`-equations;
    /// unconditional equations carry [`GuardExpr::True`]).
    If(GuardExpr),
    /// Active for the single instant at which the named guard rises from
    /// false to true.  Removed by [`desugar_when`](crate::desugar_when).
    When(String),
}

/// One guarded equation `lhs = rhs`.
#[derive(Debug, Clone)]
pub struct Equation {
    pub name: String,
    pub kind: EquationKind,
    pub lhs: Expr,
    pub rhs: Expr,
    /// Source line of the equation, for diagnostics.
    pub line: usize,
}

// Structural equality ignores source positions.
impl PartialEq for Equation {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.kind == other.kind
            && self.lhs == other.lhs
            && self.rhs == other.rhs
    }
}

impl Equation {
    /// Residual form `lhs - rhs`.
    pub fn residual(&self) -> Expr {
        Expr::difference(self.lhs.clone(), self.rhs.clone())
    }
}

/// A declared numeric parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: f64,
}

/// A declared variable with optional initial values.
#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub init: Option<f64>,
    /// Initial value of the first derivative, for second-order states whose
    /// restart needs a velocity (`var x init 0.6 der 1.0;`).
    pub der_init: Option<f64>,
}

/// A complete model: declarations, guard definitions and guarded equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: Vec<Param>,
    pub variables: Vec<VarDecl>,
    pub guards: Vec<GuardDef>,
    pub equations: Vec<Equation>,
    /// Declared bound on the number of consecutive transient instants the
    /// model may chain at an event (0 = single restart instant).
    pub cascade_bound: u32,
    /// For each variable that appeared under `der(..)` in the source, the
    /// highest derivative order seen before difference expansion.  Kept so
    /// reports can label shifted instances with their original notation.
    pub diff_orders: BTreeMap<String, u32>,
}

impl Model {
    pub fn param_value(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn guard_def(&self, name: &str) -> Option<&GuardDef> {
        self.guards.iter().find(|g| g.name == name)
    }

    pub fn equation(&self, name: &str) -> Option<&Equation> {
        self.equations.iter().find(|e| e.name == name)
    }

    pub fn variable(&self, name: &str) -> Option<&VarDecl> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// A variable is a state if some equation applies a derivative or shift
    /// to it; purely algebraic variables only ever occur with an empty word.
    pub fn is_state(&self, name: &str) -> bool {
        self.equations.iter().any(|e| {
            expr_signals(&e.lhs)
                .chain(expr_signals(&e.rhs))
                .any(|s| s.base == name && !s.word.is_empty())
        })
    }
}

/// Iterate over every signal occurrence in an expression (excluding `Pre`,
/// which only appears in guard bodies).
pub fn expr_signals(e: &Expr) -> Box<dyn Iterator<Item = &SignalRef> + '_> {
    match e {
        Expr::Signal(s) => Box::new(std::iter::once(s)),
        Expr::Pre(_) | Expr::Num(_) | Expr::Param(_) | Expr::Dt => Box::new(std::iter::empty()),
        Expr::Neg(inner) => expr_signals(inner),
        Expr::Pow(inner, _) => expr_signals(inner),
        Expr::Add(parts) | Expr::Mul(parts) | Expr::App(_, parts) => {
            Box::new(parts.iter().flat_map(expr_signals))
        }
        Expr::Div(a, b) => Box::new(expr_signals(a).chain(expr_signals(b))),
    }
}

/// Iterate over every signal occurrence in a guard body, including the
/// signals under `pre(..)` (paired with a flag telling whether the occurrence
/// reads the previous instant).
pub fn bool_signals(b: &BoolExpr) -> Vec<(&SignalRef, bool)> {
    fn expr_occ<'a>(e: &'a Expr, out: &mut Vec<(&'a SignalRef, bool)>) {
        match e {
            Expr::Signal(s) => out.push((s, false)),
            Expr::Pre(s) => out.push((s, true)),
            Expr::Num(_) | Expr::Param(_) | Expr::Dt => {}
            Expr::Neg(inner) | Expr::Pow(inner, _) => expr_occ(inner, out),
            Expr::Add(parts) | Expr::Mul(parts) | Expr::App(_, parts) => {
                for p in parts {
                    expr_occ(p, out);
                }
            }
            Expr::Div(a, b) => {
                expr_occ(a, out);
                expr_occ(b, out);
            }
        }
    }
    fn walk<'a>(b: &'a BoolExpr, out: &mut Vec<(&'a SignalRef, bool)>) {
        match b {
            BoolExpr::Const(_) | BoolExpr::GuardRef(_) => {}
            BoolExpr::Cmp(l, _, r) => {
                expr_occ(l, out);
                expr_occ(r, out);
            }
            BoolExpr::Not(inner) => walk(inner, out),
            BoolExpr::And(parts) | BoolExpr::Or(parts) => {
                for p in parts {
                    walk(p, out);
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(b, &mut out);
    out
}

/// Guard names referenced (as `GuardRef`) inside a guard body.
pub fn bool_guard_refs(b: &BoolExpr) -> Vec<&str> {
    let mut out = Vec::new();
    fn walk<'a>(b: &'a BoolExpr, out: &mut Vec<&'a str>) {
        match b {
            BoolExpr::GuardRef(name) => out.push(name),
            BoolExpr::Const(_) | BoolExpr::Cmp(..) => {}
            BoolExpr::Not(inner) => walk(inner, out),
            BoolExpr::And(parts) | BoolExpr::Or(parts) => {
                for p in parts {
                    walk(p, out);
                }
            }
        }
    }
    walk(b, &mut out);
    out
}
