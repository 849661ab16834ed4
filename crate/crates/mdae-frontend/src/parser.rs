//! Hand-written recursive-descent parser for the modeling language.
//!
//! ```text
//! model    := item*
//! item     := "param" IDENT "=" number ";"
//!           | "var" IDENT ["init" number ["der" number]] ";"
//!           | ["transient"] "guard" IDENT ["init" bool] ["transient"] "=" boolexpr ";"
//!           | "equation" [IDENT ":"] [guard-head] expr "=" expr ";"
//!           | "cascade_bound" "=" integer ";"
//! guard-head := "if" guardexpr ["then"] | "when" IDENT ["then"]
//! ```
//!
//! Declarations must precede use.  Derivatives are written `der(x)` or `x'`,
//! forward shifts `next(x)`, and previous-instant reads (guard bodies only)
//! `pre(x)`.

use crate::ast::*;
use crate::error::FrontendError;
use crate::lexer::{tokenize, Tok, Token};
use num_rational::Ratio;
use std::collections::{BTreeMap, BTreeSet};

const KEYWORDS: &[&str] = &[
    "param", "var", "init", "guard", "transient", "equation", "if", "when", "then", "not", "and",
    "or", "true", "false", "cascade_bound", "der", "next", "pre",
];

/// Parse a complete model from source text.
pub fn parse_model(src: &str) -> Result<Model, FrontendError> {
    let toks = tokenize(src)?;
    let mut p = Parser::new(toks);
    p.model()
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    params: BTreeSet<String>,
    vars: BTreeSet<String>,
    guards: BTreeSet<String>,
    eq_names: BTreeSet<String>,
}

impl Parser {
    fn new(toks: Vec<Token>) -> Self {
        Parser {
            toks,
            pos: 0,
            params: BTreeSet::new(),
            vars: BTreeSet::new(),
            guards: BTreeSet::new(),
            eq_names: BTreeSet::new(),
        }
    }

    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_ident(&self, word: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == word)
    }

    fn eat_ident(&mut self, word: &str) -> bool {
        if self.at_ident(word) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, FrontendError> {
        let t = self.peek();
        Err(FrontendError::Syntax { line: t.line, col: t.col, msg: msg.into() })
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, FrontendError> {
        if self.peek().tok == tok {
            Ok(self.bump())
        } else {
            let found = self.peek().tok.clone();
            self.syntax(format!("expected {tok}, found {found}"))
        }
    }

    /// A fresh (non-keyword, undeclared) identifier for a declaration.
    fn declare_name(&mut self) -> Result<(String, usize, usize), FrontendError> {
        let t = self.peek().clone();
        let name = match &t.tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => s.clone(),
            Tok::Ident(s) => {
                return self.syntax(format!("`{s}` is a keyword and cannot be declared"))
            }
            other => return self.syntax(format!("expected identifier, found {other}")),
        };
        self.bump();
        if self.params.contains(&name) || self.vars.contains(&name) || self.guards.contains(&name)
        {
            return Err(FrontendError::DuplicateIdentifier { line: t.line, col: t.col, name });
        }
        Ok((name, t.line, t.col))
    }

    fn model(&mut self) -> Result<Model, FrontendError> {
        let mut model = Model {
            params: Vec::new(),
            variables: Vec::new(),
            guards: Vec::new(),
            equations: Vec::new(),
            cascade_bound: 0,
            diff_orders: BTreeMap::new(),
        };
        loop {
            match &self.peek().tok {
                Tok::Eof => break,
                Tok::Ident(kw) => match kw.as_str() {
                    "param" => {
                        self.bump();
                        let (name, ..) = self.declare_name()?;
                        self.expect(Tok::Assign)?;
                        let value = self.signed_number()?;
                        self.expect(Tok::Semi)?;
                        self.params.insert(name.clone());
                        model.params.push(Param { name, value });
                    }
                    "var" => {
                        self.bump();
                        let (name, ..) = self.declare_name()?;
                        let init = if self.eat_ident("init") {
                            Some(self.signed_number()?)
                        } else {
                            None
                        };
                        let der_init = if self.eat_ident("der") {
                            Some(self.signed_number()?)
                        } else {
                            None
                        };
                        self.expect(Tok::Semi)?;
                        self.vars.insert(name.clone());
                        model.variables.push(VarDecl { name, init, der_init });
                    }
                    "transient" | "guard" => {
                        let def = self.guard_def()?;
                        self.guards.insert(def.name.clone());
                        model.guards.push(def);
                    }
                    "equation" => {
                        let eq = self.equation(model.equations.len())?;
                        model.equations.push(eq);
                    }
                    "cascade_bound" => {
                        self.bump();
                        self.expect(Tok::Assign)?;
                        let n = self.signed_number()?;
                        if n < 0.0 || n.fract() != 0.0 {
                            return self.syntax("cascade_bound must be a nonnegative integer");
                        }
                        self.expect(Tok::Semi)?;
                        model.cascade_bound = n as u32;
                    }
                    other => {
                        return self.syntax(format!(
                            "expected `param`, `var`, `guard`, `equation` or `cascade_bound`, \
                             found `{other}`"
                        ))
                    }
                },
                other => {
                    let other = other.clone();
                    return self.syntax(format!("expected a declaration, found {other}"));
                }
            }
        }
        // Record, per variable, the highest derivative order appearing in the
        // source so later passes can label shifted instances.
        for eq in &model.equations {
            for s in expr_signals(&eq.lhs).chain(expr_signals(&eq.rhs)) {
                let d = s.diff_count();
                if d > 0 {
                    let entry = model.diff_orders.entry(s.base.clone()).or_insert(0);
                    *entry = (*entry).max(d);
                }
            }
        }
        Ok(model)
    }

    fn guard_def(&mut self) -> Result<GuardDef, FrontendError> {
        let mut transient = self.eat_ident("transient");
        let line = self.peek().line;
        if !self.eat_ident("guard") {
            return self.syntax("expected `guard`");
        }
        let (name, ..) = self.declare_name()?;
        let init = if self.eat_ident("init") {
            if self.eat_ident("true") {
                Some(true)
            } else if self.eat_ident("false") {
                Some(false)
            } else {
                return self.syntax("expected `true` or `false` after `init`");
            }
        } else {
            None
        };
        if self.eat_ident("transient") {
            transient = true;
        }
        self.expect(Tok::Assign)?;
        let body = self.bool_or()?;
        self.expect(Tok::Semi)?;
        let form = if init.is_some() { GuardForm::Next } else { GuardForm::Current };
        Ok(GuardDef {
            name,
            form,
            init,
            mode_type: if transient { ModeType::Transient } else { ModeType::Long },
            body,
            line,
        })
    }

    fn equation(&mut self, index: usize) -> Result<Equation, FrontendError> {
        let line = self.peek().line;
        self.bump(); // `equation`
        let mut name = format!("eq{}", index + 1);
        if let Tok::Ident(label) = &self.peek().tok {
            if !KEYWORDS.contains(&label.as_str())
                && self.toks.get(self.pos + 1).map(|t| &t.tok) == Some(&Tok::Colon)
            {
                name = label.clone();
                let t = self.bump();
                self.bump(); // `:`
                if !self.eq_names.insert(name.clone()) {
                    return Err(FrontendError::DuplicateIdentifier {
                        line: t.line,
                        col: t.col,
                        name,
                    });
                }
            }
        }
        let kind = if self.eat_ident("if") {
            let g = self.guard_expr()?;
            self.eat_ident("then");
            EquationKind::If(g)
        } else if self.eat_ident("when") {
            let t = self.peek().clone();
            let g = match &t.tok {
                Tok::Ident(s) if self.guards.contains(s) => s.clone(),
                Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                    return Err(FrontendError::Undeclared {
                        line: t.line,
                        col: t.col,
                        kind: "guard",
                        name: s.clone(),
                    })
                }
                other => return self.syntax(format!("expected guard name, found {other}")),
            };
            self.bump();
            self.eat_ident("then");
            EquationKind::When(g)
        } else {
            EquationKind::If(GuardExpr::True)
        };
        let lhs = self.expr(false)?;
        self.expect(Tok::Assign)?;
        let rhs = self.expr(false)?;
        self.expect(Tok::Semi)?;
        Ok(Equation { name, kind, lhs, rhs, line })
    }

    // ---- guard expressions over guard names ----

    fn guard_expr(&mut self) -> Result<GuardExpr, FrontendError> {
        let mut parts = vec![self.guard_and()?];
        while self.eat_ident("or") {
            parts.push(self.guard_and()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { GuardExpr::Or(parts) })
    }

    fn guard_and(&mut self) -> Result<GuardExpr, FrontendError> {
        let mut parts = vec![self.guard_primary()?];
        while self.at_ident("and") {
            self.bump();
            parts.push(self.guard_primary()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { GuardExpr::And(parts) })
    }

    fn guard_primary(&mut self) -> Result<GuardExpr, FrontendError> {
        if self.eat_ident("not") {
            let inner = self.guard_primary()?;
            return Ok(match inner {
                GuardExpr::Lit(name, pos) => GuardExpr::Lit(name, !pos),
                other => GuardExpr::And(vec![negate_guard_expr(other)]),
            });
        }
        if self.eat_ident("true") {
            return Ok(GuardExpr::True);
        }
        if self.peek().tok == Tok::LParen {
            self.bump();
            let inner = self.guard_expr()?;
            self.expect(Tok::RParen)?;
            return Ok(inner);
        }
        let t = self.peek().clone();
        match &t.tok {
            Tok::Ident(s) if self.guards.contains(s) => {
                self.bump();
                Ok(GuardExpr::Lit(s.clone(), true))
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => Err(FrontendError::Undeclared {
                line: t.line,
                col: t.col,
                kind: "guard",
                name: s.clone(),
            }),
            other => self.syntax(format!("expected guard name, found {other}")),
        }
    }

    // ---- boolean guard bodies ----

    fn bool_or(&mut self) -> Result<BoolExpr, FrontendError> {
        let mut parts = vec![self.bool_and()?];
        while self.eat_ident("or") {
            parts.push(self.bool_and()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { BoolExpr::Or(parts) })
    }

    fn bool_and(&mut self) -> Result<BoolExpr, FrontendError> {
        let mut parts = vec![self.bool_primary()?];
        while self.at_ident("and") {
            self.bump();
            parts.push(self.bool_primary()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { BoolExpr::And(parts) })
    }

    fn bool_primary(&mut self) -> Result<BoolExpr, FrontendError> {
        if self.eat_ident("not") {
            return Ok(BoolExpr::Not(Box::new(self.bool_primary()?)));
        }
        if self.eat_ident("true") {
            return Ok(BoolExpr::Const(true));
        }
        if self.eat_ident("false") {
            return Ok(BoolExpr::Const(false));
        }
        // A guard name stands for its current boolean value, unless it opens
        // a comparison (guards cannot be compared, so a following comparison
        // operator means the identifier was meant as a signal and is an
        // error reported by `expr`).
        if let Tok::Ident(s) = &self.peek().tok {
            if self.guards.contains(s) && !self.next_is_arithmetic_continuation() {
                let name = s.clone();
                self.bump();
                return Ok(BoolExpr::GuardRef(name));
            }
        }
        // `( ... )` may close over a nested boolean expression or open the
        // left operand of a comparison; try the boolean reading first and
        // fall back on backtracking.
        if self.peek().tok == Tok::LParen {
            let save = self.pos;
            self.bump();
            if let Ok(inner) = self.bool_or() {
                if self.peek().tok == Tok::RParen {
                    self.bump();
                    if !self.next_is_comparison() {
                        return Ok(inner);
                    }
                }
            }
            self.pos = save;
        }
        let lhs = self.expr(true)?;
        let op = match self.peek().tok {
            Tok::Le => CmpOp::Le,
            Tok::Lt => CmpOp::Lt,
            Tok::Ge => CmpOp::Ge,
            Tok::Gt => CmpOp::Gt,
            Tok::EqEq => CmpOp::Eq,
            ref other => {
                let other = other.clone();
                return self.syntax(format!("expected comparison operator, found {other}"));
            }
        };
        self.bump();
        let rhs = self.expr(true)?;
        Ok(BoolExpr::Cmp(lhs, op, rhs))
    }

    fn next_is_arithmetic_continuation(&self) -> bool {
        matches!(
            self.toks.get(self.pos + 1).map(|t| &t.tok),
            Some(Tok::Le)
                | Some(Tok::Lt)
                | Some(Tok::Ge)
                | Some(Tok::Gt)
                | Some(Tok::EqEq)
                | Some(Tok::Plus)
                | Some(Tok::Minus)
                | Some(Tok::Star)
                | Some(Tok::Slash)
                | Some(Tok::Caret)
        )
    }

    fn next_is_comparison(&self) -> bool {
        matches!(
            self.peek().tok,
            Tok::Le | Tok::Lt | Tok::Ge | Tok::Gt | Tok::EqEq
        )
    }

    // ---- arithmetic expressions ----

    fn expr(&mut self, in_guard_body: bool) -> Result<Expr, FrontendError> {
        let mut parts = vec![self.term(in_guard_body)?];
        loop {
            match self.peek().tok {
                Tok::Plus => {
                    self.bump();
                    parts.push(self.term(in_guard_body)?);
                }
                Tok::Minus => {
                    self.bump();
                    parts.push(Expr::Neg(Box::new(self.term(in_guard_body)?)));
                }
                _ => break,
            }
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Expr::Add(parts) })
    }

    fn term(&mut self, in_guard_body: bool) -> Result<Expr, FrontendError> {
        let mut acc = self.factor(in_guard_body)?;
        loop {
            match self.peek().tok {
                Tok::Star => {
                    self.bump();
                    let rhs = self.factor(in_guard_body)?;
                    acc = match acc {
                        Expr::Mul(mut parts) => {
                            parts.push(rhs);
                            Expr::Mul(parts)
                        }
                        other => Expr::Mul(vec![other, rhs]),
                    };
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.factor(in_guard_body)?;
                    acc = Expr::Div(Box::new(acc), Box::new(rhs));
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn factor(&mut self, in_guard_body: bool) -> Result<Expr, FrontendError> {
        if self.peek().tok == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.factor(in_guard_body)?)));
        }
        self.power(in_guard_body)
    }

    fn power(&mut self, in_guard_body: bool) -> Result<Expr, FrontendError> {
        let base = self.postfix(in_guard_body)?;
        if self.peek().tok == Tok::Caret {
            self.bump();
            let exp = self.exponent()?;
            return Ok(Expr::Pow(Box::new(base), exp));
        }
        Ok(base)
    }

    /// Exponents are constant integers or parenthesized rationals: `^2`,
    /// `^-1`, `^(1/3)`.
    fn exponent(&mut self) -> Result<Exponent, FrontendError> {
        if self.peek().tok == Tok::LParen {
            self.bump();
            let numer = self.signed_integer()?;
            let denom = if self.peek().tok == Tok::Slash {
                self.bump();
                self.signed_integer()?
            } else {
                1
            };
            self.expect(Tok::RParen)?;
            if denom == 0 {
                return self.syntax("exponent denominator must be nonzero");
            }
            return Ok(Ratio::new(numer, denom));
        }
        Ok(Ratio::from_integer(self.signed_integer()?))
    }

    fn signed_integer(&mut self) -> Result<i64, FrontendError> {
        let n = self.signed_number()?;
        if n.fract() != 0.0 || n.abs() > i64::MAX as f64 / 2.0 {
            return self.syntax("expected an integer constant");
        }
        Ok(n as i64)
    }

    fn signed_number(&mut self) -> Result<f64, FrontendError> {
        let mut sign = 1.0;
        while self.peek().tok == Tok::Minus {
            self.bump();
            sign = -sign;
        }
        match self.peek().tok {
            Tok::Number(n) => {
                self.bump();
                Ok(sign * n)
            }
            ref other => {
                let other = other.clone();
                self.syntax(format!("expected a number, found {other}"))
            }
        }
    }

    fn postfix(&mut self, in_guard_body: bool) -> Result<Expr, FrontendError> {
        let mut e = self.primary(in_guard_body)?;
        while self.peek().tok == Tok::Prime {
            let t = self.bump();
            match e {
                Expr::Signal(ref mut s) => s.word.push(WordLetter::Diff),
                _ => {
                    return Err(FrontendError::Syntax {
                        line: t.line,
                        col: t.col,
                        msg: "`'` applies only to a variable or its derivative".into(),
                    })
                }
            }
        }
        Ok(e)
    }

    fn primary(&mut self, in_guard_body: bool) -> Result<Expr, FrontendError> {
        let t = self.peek().clone();
        match &t.tok {
            Tok::Number(n) => {
                self.bump();
                Ok(Expr::Num(*n))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr(in_guard_body)?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => match name.as_str() {
                "der" | "next" => {
                    let letter =
                        if name == "der" { WordLetter::Diff } else { WordLetter::Shift };
                    self.bump();
                    self.expect(Tok::LParen)?;
                    let inner = self.primary(in_guard_body)?;
                    let inner = self.apply_primes(inner)?;
                    self.expect(Tok::RParen)?;
                    match inner {
                        Expr::Signal(mut s) => {
                            s.word.push(letter);
                            Ok(Expr::Signal(s))
                        }
                        _ => self.syntax(format!(
                            "`{name}(..)` applies only to a variable or a nested \
                             `der`/`next` of one"
                        )),
                    }
                }
                "pre" => {
                    if !in_guard_body {
                        return self.syntax("`pre(..)` is only allowed in guard bodies");
                    }
                    self.bump();
                    self.expect(Tok::LParen)?;
                    let inner = self.primary(in_guard_body)?;
                    self.expect(Tok::RParen)?;
                    match inner {
                        Expr::Signal(s) if s.word.is_empty() => Ok(Expr::Pre(s)),
                        _ => self.syntax("`pre(..)` applies only to a plain variable"),
                    }
                }
                _ if KEYWORDS.contains(&name.as_str()) => {
                    self.syntax(format!("unexpected keyword `{name}` in expression"))
                }
                _ if self.params.contains(name) => {
                    self.bump();
                    Ok(Expr::Param(name.clone()))
                }
                _ if self.vars.contains(name) => {
                    self.bump();
                    Ok(Expr::Signal(SignalRef::plain(name.clone())))
                }
                _ if self.toks.get(self.pos + 1).map(|t| &t.tok) == Some(&Tok::LParen) => {
                    // Undeclared identifier applied to an argument: a smooth
                    // unary function by name (sin, cos, exp, user tables, ...).
                    let fname = name.clone();
                    self.bump();
                    self.bump(); // '('
                    let arg = self.expr(in_guard_body)?;
                    self.expect(Tok::RParen)?;
                    Ok(Expr::App(fname, vec![arg]))
                }
                _ => Err(FrontendError::Undeclared {
                    line: t.line,
                    col: t.col,
                    kind: "variable",
                    name: name.clone(),
                }),
            },
            other => {
                let other = other.clone();
                self.syntax(format!("expected an expression, found {other}"))
            }
        }
    }

    /// Allow `der(x')` style mixes: primes directly inside `der`/`next`.
    fn apply_primes(&mut self, mut e: Expr) -> Result<Expr, FrontendError> {
        while self.peek().tok == Tok::Prime {
            self.bump();
            match e {
                Expr::Signal(ref mut s) => s.word.push(WordLetter::Diff),
                _ => return self.syntax("`'` applies only to a variable"),
            }
        }
        Ok(e)
    }
}

fn negate_guard_expr(e: GuardExpr) -> GuardExpr {
    match e {
        GuardExpr::True => GuardExpr::Or(Vec::new()), // constant false
        GuardExpr::Lit(name, pos) => GuardExpr::Lit(name, !pos),
        GuardExpr::And(parts) => {
            GuardExpr::Or(parts.into_iter().map(negate_guard_expr).collect())
        }
        GuardExpr::Or(parts) => {
            GuardExpr::And(parts.into_iter().map(negate_guard_expr).collect())
        }
    }
}
