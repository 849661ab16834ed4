//! Diagnostics produced while reading and checking a model.

use thiserror::Error;

/// Everything that can go wrong between raw source text and a checked model.
#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    #[error("{line}:{col}: duplicate identifier `{name}`")]
    DuplicateIdentifier { line: usize, col: usize, name: String },

    #[error("{line}:{col}: undeclared {kind} `{name}`")]
    Undeclared { line: usize, col: usize, kind: &'static str, name: String },

    #[error(
        "guard cycle: the value of {guards:?} at an instant depends, through {variables:?}, \
         on equations those guards enable at the same instant"
    )]
    GuardCycle { guards: Vec<String>, variables: Vec<String> },

    #[error(
        "guard `{guard}` reads `{signal}`, which is computed within the same instant; \
         define the guard in next-value form (`guard {guard} init ... = ...`) instead"
    )]
    GuardReadsInstantValue { guard: String, signal: String },

    #[error("`when {guard}` requires `{guard}` to be defined in next-value form")]
    WhenNeedsNextForm { guard: String },
}

impl FrontendError {
    /// Stable machine-readable code for each diagnostic class.
    pub fn code(&self) -> &'static str {
        match self {
            FrontendError::Syntax { .. } => "syntax",
            FrontendError::DuplicateIdentifier { .. } => "duplicate-identifier",
            FrontendError::Undeclared { .. } => "undeclared-identifier",
            FrontendError::GuardCycle { .. } => "fixpoint-cycle",
            FrontendError::GuardReadsInstantValue { .. } => "guard-instant-read",
            FrontendError::WhenNeedsNextForm { .. } => "when-needs-next-form",
        }
    }
}
