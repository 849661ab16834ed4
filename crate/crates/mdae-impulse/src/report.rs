//! End-to-end analysis of one mode-change instant and reporting.
//!
//! [`analyze_change`] chains system assembly, constraint building and the
//! order solver, then classifies every unknown: *impulsive* when its order
//! is provably positive (the variable blows up as the step vanishes),
//! *bounded* when the order is at most zero, *unknown* otherwise.
//! [`annotate_automaton`] runs the analysis over every successful run of an
//! explored mode automaton and marks its transitions.

use mdae_mode::explore::ModeAutomaton;
use mdae_mode::instant::Instant;
use mdae_mode::{CompiledModel, Node};
use serde_json::json;

use crate::constraints::{build_order_constraints, OrderConstraintSystem};
use crate::monomial::{render_sum, Atom};
use crate::solve::{solve_orders, OrderSolution};
use crate::system::{restart_system, RestartSystem};
use crate::{ImpulseError, Order, OrderInterval};

/// How a quantity behaves as the step vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Provably blows up: the order has a positive lower bound.
    Impulsive,
    /// Provably stays bounded: the order is at most zero.
    Bounded,
    /// The bounds straddle zero.
    Unknown,
}

impl Verdict {
    fn of(iv: OrderInterval) -> Verdict {
        if iv.lo > Order::ZERO {
            Verdict::Impulsive
        } else if iv.hi <= Order::ZERO {
            Verdict::Bounded
        } else {
            Verdict::Unknown
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Impulsive => "impulsive",
            Verdict::Bounded => "bounded",
            Verdict::Unknown => "unknown",
        }
    }
}

/// The classified order bounds of one unknown of the restart system.
#[derive(Debug, Clone)]
pub struct VariableVerdict {
    pub atom: Atom,
    pub label: String,
    pub interval: OrderInterval,
    pub verdict: Verdict,
    /// The magnitude profile across the change: order zero before, the
    /// change-instant order in braces, order zero after.
    pub profile: String,
}

/// Everything the analysis of one change instant produced.
#[derive(Debug, Clone)]
pub struct ChangeAnalysis {
    pub system: RestartSystem,
    pub constraints: OrderConstraintSystem,
    pub solution: OrderSolution,
    pub verdicts: Vec<VariableVerdict>,
    rendered_rows: Vec<String>,
}

impl ChangeAnalysis {
    /// Labels of the model variables that provably blow up.
    pub fn impulsive_variables(&self) -> Vec<String> {
        self.verdicts
            .iter()
            .filter(|v| matches!(v.atom, Atom::Inst(_)) && v.verdict == Verdict::Impulsive)
            .map(|v| v.label.clone())
            .collect()
    }

    pub fn verdict_of(&self, label: &str) -> Option<&VariableVerdict> {
        self.verdicts.iter().find(|v| v.label == label)
    }

    pub fn order_of(&self, label: &str) -> Option<OrderInterval> {
        self.verdict_of(label).map(|v| v.interval)
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "rows": self.rendered_rows,
            "unknowns": self.verdicts.iter().map(|v| json!({
                "name": v.label,
                "lower": v.interval.lo.to_string(),
                "upper": v.interval.hi.to_string(),
                "verdict": v.verdict.as_str(),
                "profile": v.profile,
            })).collect::<Vec<_>>(),
            "impulsive": self.impulsive_variables(),
            "exhaustive": self.solution.exhaustive,
            "branches": self.solution.branches,
        })
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let width = self.verdicts.iter().map(|v| v.label.len()).max().unwrap_or(4).max(4);
        out.push_str(&format!(
            "{:width$}  {:14}  {:10}  profile\n",
            "name", "order", "verdict"
        ));
        for v in &self.verdicts {
            out.push_str(&format!(
                "{:width$}  {:14}  {:10}  {}\n",
                v.label,
                v.interval.to_string(),
                v.verdict.as_str(),
                v.profile
            ));
        }
        if !self.solution.exhaustive {
            out.push_str("(dominance search truncated: bounds are propagation-only)\n");
        }
        out
    }
}

/// Analyses the restart system of a solved instant.
pub fn analyze_change(
    cm: &CompiledModel,
    node: &Node,
    instant: &Instant,
) -> Result<ChangeAnalysis, ImpulseError> {
    let system = restart_system(cm, node, instant)?;
    let constraints = build_order_constraints(cm, &system);
    let solution = solve_orders(&constraints)?;
    let verdicts = verdicts(&constraints, &solution);
    let rendered_rows = system
        .rows
        .iter()
        .map(|r| format!("{}: 0 = {}", r.label, render_sum(cm, &r.sum)))
        .collect();
    Ok(ChangeAnalysis { system, constraints, solution, verdicts, rendered_rows })
}

fn verdicts(ocs: &OrderConstraintSystem, sol: &OrderSolution) -> Vec<VariableVerdict> {
    ocs.atoms
        .iter()
        .zip(&sol.intervals)
        .zip(&ocs.labels)
        .map(|((atom, &interval), label)| {
            let verdict = Verdict::of(interval);
            let at_change = if interval.is_point() {
                interval.lo.to_string()
            } else if verdict == Verdict::Bounded {
                "<=0".to_string()
            } else {
                "?".to_string()
            };
            VariableVerdict {
                atom: atom.clone(),
                label: label.clone(),
                interval,
                verdict,
                profile: format!("0,{{{at_change}}},0"),
            }
        })
        .collect()
}

/// Runs the analysis over every successful run of an explored automaton and
/// flags its solve edges: `Some(true)` when some model variable is provably
/// impulsive at that transition, `Some(false)` when none is, `None` when
/// the analysis does not apply (failed instant or unsupported model).
pub fn annotate_automaton(cm: &CompiledModel, auto: &mut ModeAutomaton) {
    for r in 0..auto.runs.len() {
        let flag = match &auto.runs[r].outcome {
            Ok(instant) => analyze_change(cm, &auto.runs[r].start, instant)
                .ok()
                .map(|a| !a.impulsive_variables().is_empty()),
            Err(_) => None,
        };
        if flag.is_some() {
            for e in auto.edges.iter_mut().filter(|e| e.run == Some(r)) {
                e.impulsive = flag;
            }
        }
    }
}
