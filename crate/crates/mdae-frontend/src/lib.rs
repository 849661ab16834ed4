//! Frontend for a guarded-equation modeling language.
//!
//! Models are systems of differential-algebraic equations whose equations
//! are individually enabled or disabled by boolean guards, so the active
//! system changes shape as guards flip.  This crate turns source text into
//! a checked in-memory representation and normalizes it for structural
//! analysis:
//!
//! 1. [`parse_model`] — source text to AST, with positioned diagnostics.
//! 2. [`desugar_when`] — event equations (`when g`) become ordinary guarded
//!    equations under a fresh rising-edge guard active for a single instant.
//! 3. [`expand_differences`] — derivatives become forward difference
//!    quotients over an infinitesimal step, so equations only mention
//!    variables at integer shifts.
//! 4. [`check_guard_causality`] — rejects guards whose value at an instant
//!    depends on values computed within that same instant.
//!
//! [`load_model`] runs the whole pipeline.  [`print_model`] renders a model
//! back to parseable source text.

mod ast;
mod causality;
mod error;
mod lexer;
mod parser;
mod printer;
mod transform;

pub use ast::{
    bool_guard_refs, bool_signals, expr_signals, BoolExpr, CmpOp, Equation, EquationKind, Expr,
    Exponent, GuardDef, GuardExpr, GuardForm, Model, ModeType, Param, SignalRef, VarDecl,
    WordLetter,
};
pub use causality::check_guard_causality;
pub use error::FrontendError;
pub use parser::parse_model;
pub use printer::{print_expr, print_model};
pub use transform::{
    desugar_when, equation_incidence, expand_differences, expand_differences_stretched,
    incidence, instance_incidence,
};

/// Parse source text and run the full normalization pipeline: when-equation
/// desugaring, difference expansion and the guard causality check.
///
/// The returned model mentions variables only at integer shifts and contains
/// no `when` equations; every guard either carries an explicit initial value
/// or provably depends only on previous-instant information.
pub fn load_model(src: &str) -> Result<Model, FrontendError> {
    let parsed = parse_model(src)?;
    let desugared = desugar_when(&parsed)?;
    let expanded = expand_differences(&desugared);
    check_guard_causality(&expanded)?;
    Ok(expanded)
}
