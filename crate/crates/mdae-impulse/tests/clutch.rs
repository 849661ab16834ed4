//! Order analysis of the clutch at both mode changes.
//!
//! Engaging couples two shafts of distinct velocities through an idealized
//! (infinitely stiff) contact: the velocity mismatch is absorbed in one
//! instant, so the coupling torques blow up like `1/dt` while the
//! velocities themselves stay bounded.  Releasing imposes nothing abrupt:
//! the torques drop to exactly zero and everything else drifts by `O(dt)`.

use mdae_frontend::load_model;
use mdae_impulse::{
    analyze_change, annotate_automaton, build_order_constraints, rescale, restart_system,
    solve_orders, Atom, Order, OrderInterval, Verdict,
};
use mdae_mode::explore::{explore, EdgeKind};
use mdae_mode::instant::run_instant;
use mdae_mode::{compile, CompiledModel, Node, Valuation};

const SRC: &str = include_str!("../../../models/clutch.mdae");

fn model() -> CompiledModel {
    compile(&load_model(SRC).unwrap()).unwrap()
}

fn val(cm: &CompiledModel, engaged: bool) -> Valuation {
    [(cm.guard_index("g").unwrap(), engaged)].into()
}

/// The steady instant-start configuration of a mode: run the mode from the
/// initial configuration until the hand-over reproduces itself.
fn steady(cm: &CompiledModel, engaged: bool) -> Node {
    let mut node = cm.initial_node();
    for _ in 0..8 {
        let instant = run_instant(cm, &node, &val(cm, engaged)).unwrap();
        if instant.next == node {
            return node;
        }
        node = instant.next;
    }
    panic!("mode never settles");
}

#[test]
fn engaging_makes_both_torques_impulsive_of_order_one() {
    let cm = model();
    let node = steady(&cm, false);
    let instant = run_instant(&cm, &node, &val(&cm, true)).unwrap();
    assert_eq!(instant.deleted.len(), 1, "the velocity tie holds an instant late");

    let analysis = analyze_change(&cm, &node, &instant).unwrap();
    assert!(analysis.solution.exhaustive);

    let one = OrderInterval::point(Order::finite(1, 1));
    assert_eq!(analysis.order_of("tau1").unwrap(), one);
    assert_eq!(analysis.order_of("tau2").unwrap(), one);
    assert_eq!(analysis.verdict_of("tau1").unwrap().verdict, Verdict::Impulsive);
    assert_eq!(analysis.verdict_of("tau1").unwrap().profile, "0,{1},0");
    assert_eq!(analysis.impulsive_variables(), vec!["tau1", "tau2"]);

    // The velocity jumps absorb the mismatch: bounded, order exactly 0 is
    // not claimed (the jump could vanish if the shafts already agreed).
    for label in ["jump(w1)", "jump(w2)"] {
        let v = analysis.verdict_of(label).unwrap();
        assert_eq!(v.verdict, Verdict::Bounded, "{label}: {:?}", v.interval);
        assert_eq!(v.interval, OrderInterval::point(Order::ZERO), "{label}");
    }

    // Next-step velocities stay bounded even though their exact order is
    // mode-data dependent.
    for label in ["w1@1", "w2@1"] {
        let v = analysis.verdict_of(label).unwrap();
        assert_eq!(v.verdict, Verdict::Bounded, "{label}: {:?}", v.interval);
        assert_eq!(v.interval.hi, Order::ZERO);
    }
}

#[test]
fn releasing_is_impulse_free() {
    let cm = model();
    let node = steady(&cm, true);
    let instant = run_instant(&cm, &node, &val(&cm, false)).unwrap();
    assert!(instant.deleted.is_empty(), "release drops constraints, none conflict");

    let analysis = analyze_change(&cm, &node, &instant).unwrap();
    assert!(analysis.impulsive_variables().is_empty());

    // The pinned torques are exactly zero...
    assert_eq!(
        analysis.order_of("tau1").unwrap(),
        OrderInterval::point(Order::NegInf)
    );
    // ...and the released shafts move by a step-sized amount.
    assert_eq!(
        analysis.order_of("jump(w1)").unwrap(),
        OrderInterval::point(Order::finite(-1, 1))
    );
    assert_eq!(
        analysis.order_of("jump(w2)").unwrap(),
        OrderInterval::point(Order::finite(-1, 1))
    );
    for v in &analysis.verdicts {
        assert_ne!(v.verdict, Verdict::Impulsive, "{}: {:?}", v.label, v.interval);
    }
}

#[test]
fn rescaling_the_engagement_leaves_only_bounded_unknowns() {
    let cm = model();
    let node = steady(&cm, false);
    let instant = run_instant(&cm, &node, &val(&cm, true)).unwrap();
    let sys = restart_system(&cm, &node, &instant).unwrap();
    let sol = solve_orders(&build_order_constraints(&cm, &sys)).unwrap();

    let scaled = rescale(&cm, &sys, &sol).unwrap();
    // The torques are now represented by scaled stand-ins.
    let tau1 = cm.var_index("tau1").unwrap();
    assert!(scaled
        .unknowns
        .iter()
        .any(|a| matches!(a, Atom::Scaled(v) if v.var == tau1 && v.shift == 0)));
    assert!(!scaled
        .unknowns
        .iter()
        .any(|a| matches!(a, Atom::Inst(v) if v.var == tau1 && v.shift == 0)));

    // Re-analysing the scaled system finds nothing impulsive: the scaled
    // torques come out bounded and generically nonzero.
    let sol2 = solve_orders(&build_order_constraints(&cm, &scaled)).unwrap();
    for (atom, iv) in scaled.unknowns.iter().zip(&sol2.intervals) {
        assert!(
            iv.hi <= Order::ZERO,
            "{} still blows up: {iv}",
            atom.label(&cm)
        );
    }
    let scaled_tau = scaled
        .unknowns
        .iter()
        .position(|a| matches!(a, Atom::Scaled(v) if v.var == tau1))
        .unwrap();
    assert_eq!(sol2.intervals[scaled_tau], OrderInterval::point(Order::ZERO));
}

#[test]
fn the_automaton_flags_exactly_the_engagement_as_impulsive() {
    let cm = model();
    let mut auto = explore(&cm, 10_000);
    annotate_automaton(&cm, &mut auto);

    let solve_edges: Vec<_> =
        auto.edges.iter().filter(|e| e.kind == EdgeKind::Solve).collect();
    assert_eq!(solve_edges.len(), 4);
    assert!(solve_edges.iter().all(|e| e.impulsive.is_some()));
    let impulsive: Vec<_> =
        solve_edges.iter().filter(|e| e.impulsive == Some(true)).collect();
    assert_eq!(impulsive.len(), 1, "only engagement is impulsive");
    assert!(
        impulsive[0].label.contains("delete"),
        "the impulsive transition is the conflicted one: {}",
        impulsive[0].label
    );
}

#[test]
fn analysis_reports_are_complete_and_stable() {
    let cm = model();
    let node = steady(&cm, false);
    let instant = run_instant(&cm, &node, &val(&cm, true)).unwrap();
    let analysis = analyze_change(&cm, &node, &instant).unwrap();

    let j = analysis.to_json();
    let names: Vec<&str> =
        j["unknowns"].as_array().unwrap().iter().map(|u| u["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"tau1"));
    assert_eq!(j["impulsive"].as_array().unwrap().len(), 2);
    assert_eq!(j["exhaustive"], serde_json::json!(true));

    let text = analysis.render_text();
    assert!(text.contains("tau1"));
    assert!(text.contains("impulsive"));

    // Rendering includes the derived coupling row that ties the two jumps
    // to the residual of the erased velocity tie.
    assert!(
        j["rows"].as_array().unwrap().iter().any(|r| {
            let s = r.as_str().unwrap();
            s.contains("jump(w1)") && s.contains("jump(w2)") && s.contains("residual")
        }),
        "rows: {:#?}",
        j["rows"]
    );
}
