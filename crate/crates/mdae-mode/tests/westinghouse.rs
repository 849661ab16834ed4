//! Structural analysis of the brake-valve model: an index-1 system in both
//! long modes, whose mode change erases exactly one restated equation.

use std::collections::BTreeSet;

use mdae_frontend::load_model;
use mdae_mode::explore::{explore, NodeKind};
use mdae_mode::instant::{run_instant, Instant, InstantFail};
use mdae_mode::{compile, CompiledModel, Valuation};

const SRC: &str = include_str!("../../../models/westinghouse.mdae");

fn model() -> CompiledModel {
    compile(&load_model(SRC).unwrap()).unwrap()
}

fn val(cm: &CompiledModel, b: bool) -> Valuation {
    [(cm.guard_index("g").unwrap(), b)].into()
}

fn deleted(cm: &CompiledModel, i: &Instant) -> Vec<String> {
    i.deleted.iter().map(|&e| cm.eq_label(e)).collect()
}

fn latents(cm: &CompiledModel, i: &Instant) -> BTreeSet<String> {
    i.latent.iter().map(|&e| cm.eq_label(e)).collect()
}

#[test]
fn both_long_modes_have_index_one_with_shifted_pressure_laws() {
    let cm = model();
    let init = run_instant(&cm, &cm.initial_node(), &val(&cm, false)).unwrap();
    let steady_f = run_instant(&cm, &init.next, &val(&cm, false)).unwrap();
    assert_eq!(steady_f.index, Some(1));
    assert_eq!(
        latents(&cm, &steady_f),
        ["l1@1", "l2@1"].iter().map(|s| s.to_string()).collect()
    );

    let change = run_instant(&cm, &init.next, &val(&cm, true)).unwrap();
    let steady_t = run_instant(&cm, &change.next, &val(&cm, true)).unwrap();
    assert_eq!(steady_t.index, Some(1));
    assert_eq!(
        latents(&cm, &steady_t),
        ["l1@1", "l2@1", "v1@1"].iter().map(|s| s.to_string()).collect()
    );
}

#[test]
fn the_initial_instant_erases_the_two_laws_already_pinned_by_initial_values() {
    let cm = model();
    let init = run_instant(&cm, &cm.initial_node(), &val(&cm, false)).unwrap();
    // Both pressure-balance laws only mention initialized variables at the
    // first instant; they are checked against those values, not solved.
    assert_eq!(deleted(&cm, &init), vec!["l1", "l2"]);
    assert_eq!(init.index, Some(1));
}

#[test]
fn closing_the_valve_erases_exactly_the_pressure_tie() {
    let cm = model();
    let init = run_instant(&cm, &cm.initial_node(), &val(&cm, false)).unwrap();
    let steady_f = run_instant(&cm, &init.next, &val(&cm, false)).unwrap();
    assert!(steady_f.deleted.is_empty(), "steady open mode deletes nothing");

    let change = run_instant(&cm, &steady_f.next, &val(&cm, true)).unwrap();
    assert_eq!(deleted(&cm, &change), vec!["v1"]);

    let steady_t = run_instant(&cm, &change.next, &val(&cm, true)).unwrap();
    assert!(steady_t.deleted.is_empty());

    // Opening again conflicts with nothing: the tie just disappears.
    let back = run_instant(&cm, &steady_t.next, &val(&cm, false)).unwrap();
    assert!(back.deleted.is_empty());
    assert_eq!(back.next, steady_f.next, "back to the steady open context");
}

#[test]
fn the_automaton_has_three_configurations_and_no_failures() {
    let cm = model();
    let auto = explore(&cm, 10_000);
    assert!(!auto.truncated);
    assert!(auto.fail_nodes().is_empty());
    let starts = auto
        .nodes
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Start(_)))
        .count();
    assert_eq!(starts, 3, "initial, open and closed configurations");
    assert_eq!(auto.tick_edges(), 5);
    let trans = auto.instant_transitions();
    assert_eq!(trans.iter().filter(|(a, b)| a == b).count(), 2);
    assert_eq!(trans.iter().filter(|(a, b)| a != b).count(), 3);
}

#[test]
fn the_balance_variable_needs_an_initial_value() {
    // Without it, the initial instant faces two laws tying one unknown to
    // initialized states: one is erased, and the unknown stays free in the
    // remaining square part's complement.
    let stripped = SRC.replace("var b init 0.0;", "var b;");
    assert_ne!(stripped, SRC, "fixture declares `b` with an initial value");
    let cm = compile(&load_model(&stripped).unwrap()).unwrap();
    match run_instant(&cm, &cm.initial_node(), &val(&cm, false)) {
        Err(InstantFail::UnderdeterminedRestart { vars }) => {
            assert!(vars.contains(&"b".to_string()), "free unknown: {vars:?}");
        }
        other => panic!("expected an underdetermined restart, got {other:?}"),
    }
}
