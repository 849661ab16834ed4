//! Order analysis of the two-branch switched RLC circuit: switching never
//! produces an impulse, in any direction.
//!
//! The circuit has four long modes. Changes *into* the all-closed or
//! all-open mode are underdetermined (the model carries no restart
//! equations for the switch voltages) and never reach order analysis; every
//! other ordered pair of modes, self-loops included, runs cleanly and must
//! classify every unknown as bounded.

use std::collections::{BTreeMap, BTreeSet};

use mdae_frontend::load_model;
use mdae_impulse::analyze_change;
use mdae_mode::instant::{index_reduc, run_instant, InstantFail};
use mdae_mode::{compile, shift_insts, CompiledModel, Node, Valuation, VarInst};

const SRC: &str = include_str!("../../../models/rldc2.mdae");

const MODES: [(bool, bool); 4] = [(true, true), (true, false), (false, true), (false, false)];

fn model() -> CompiledModel {
    compile(&load_model(SRC).unwrap()).unwrap()
}

fn val(cm: &CompiledModel, (g1, g2): (bool, bool)) -> Valuation {
    [
        (cm.guard_index("g1").unwrap(), g1),
        (cm.guard_index("g2").unwrap(), g2),
    ]
    .into()
}

/// The self-reproducing configuration of a fixed mode: facts are the mode's
/// own consistency equations, carried variables are those it determines one
/// step ahead.
fn steady_node(cm: &CompiledModel, mode: (bool, bool)) -> Node {
    let v = val(cm, mode);
    let enabled = cm.enabled(&v);
    let (f_sigma, f_bar, _) = index_reduc(cm, &enabled, &v).unwrap();
    let mut known: BTreeSet<VarInst> = BTreeSet::new();
    for e in f_sigma.iter().chain(f_bar.iter()) {
        for inst in shift_insts(&cm.eq_insts[e.eq], e.shift) {
            if inst.shift >= 1 {
                known.insert(VarInst { var: inst.var, shift: inst.shift - 1 });
            }
        }
    }
    let relevant = cm.relevant_prev();
    let prev: BTreeMap<usize, bool> =
        v.iter().filter(|(g, _)| relevant.contains(g)).map(|(&g, &b)| (g, b)).collect();
    Node {
        known,
        delta: f_bar.iter().copied().collect(),
        prev,
        pinned: BTreeMap::new(),
    }
}

fn mode_name((g1, g2): (bool, bool)) -> String {
    let s = |b| if b { "closed" } else { "open" };
    format!("{}-{}", s(g1), s(g2))
}

#[test]
fn no_switch_change_is_impulsive() {
    let cm = model();
    let mut succeeded = Vec::new();
    let mut failed = Vec::new();
    for from in MODES {
        let node = steady_node(&cm, from);
        for to in MODES {
            let label = format!("{} -> {}", mode_name(from), mode_name(to));
            match run_instant(&cm, &node, &val(&cm, to)) {
                Ok(instant) => {
                    let analysis = analyze_change(&cm, &node, &instant)
                        .unwrap_or_else(|e| panic!("{label}: {e}"));
                    assert!(analysis.solution.exhaustive, "{label}");
                    assert!(
                        analysis.impulsive_variables().is_empty(),
                        "{label}: impulsive {:?}",
                        analysis.impulsive_variables()
                    );
                    succeeded.push((from, to));
                }
                Err(InstantFail::UnderdeterminedRestart { .. }) => failed.push((from, to)),
                Err(other) => panic!("{label}: unexpected failure {other:?}"),
            }
        }
    }
    // The underdetermined changes are exactly those entering the all-closed
    // or all-open mode from a different mode; everything else runs.
    assert_eq!(succeeded.len(), 10);
    assert_eq!(failed.len(), 6);
    for (from, to) in failed {
        assert_ne!(from, to);
        assert!(to == (true, true) || to == (false, false), "{to:?}");
    }
}

#[test]
fn closing_one_switch_bounds_every_jump() {
    let cm = model();
    // Open-open to closed-open: the richest succeeding change (the coupled
    // current block dissolves). Spot-check the verdict table shape.
    let node = steady_node(&cm, (false, false));
    let instant = run_instant(&cm, &node, &val(&cm, (true, false))).unwrap();
    let analysis = analyze_change(&cm, &node, &instant).unwrap();
    assert!(!analysis.verdicts.is_empty());
    for v in &analysis.verdicts {
        assert_ne!(v.verdict, mdae_impulse::Verdict::Impulsive, "{}", v.label);
    }
    let json = analysis.to_json();
    assert_eq!(json["impulsive"].as_array().unwrap().len(), 0);
}
