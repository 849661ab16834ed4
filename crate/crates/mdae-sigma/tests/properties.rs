//! Randomized properties of the offset computation: smallest-dual agreement
//! with brute force, integer scaling, relabeling invariance, and structural
//! nonsingularity of the shifted system.

use mdae_graph::BipGraph;
use mdae_sigma::find_offsets;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

/// Random square graph that surely admits a complete matching: a permutation
/// diagonal plus random extra edges, weights in 0..=2.
fn arb_square() -> impl Strategy<Value = BipGraph> {
    (1usize..=4).prop_flat_map(|n| {
        let perm = Just((0..n).collect::<Vec<usize>>()).prop_shuffle();
        let diag_w = proptest::collection::vec(0u32..3, n);
        let extras = proptest::collection::vec(
            proptest::collection::vec((proptest::bool::weighted(0.35), 0u32..3), n),
            n,
        );
        (perm, diag_w, extras).prop_map(move |(perm, diag_w, extras)| {
            let eq_names = (0..n).map(|i| format!("f{i}")).collect();
            let var_names = (0..n).map(|i| format!("x{i}")).collect();
            let mut g = BipGraph::new(eq_names, var_names);
            for e in 0..n {
                g.add_edge(e, perm[e], diag_w[e]);
                for (v, &(on, w)) in extras[e].iter().enumerate() {
                    if on {
                        g.add_edge(e, v, w);
                    }
                }
            }
            g
        })
    })
}

/// Brute-force check that `got` is feasible and elementwise minimal among
/// all duals with c bounded by `bound`.
fn check_smallest(g: &BipGraph, got: &mdae_sigma::Offsets, bound: u32) -> Result<(), String> {
    let n_eqs = g.n_eqs();
    let n_vars = g.n_vars();
    let mut c = vec![0u32; n_eqs];
    let mut found_self = false;
    loop {
        let mut d = vec![0u32; n_vars];
        for v in 0..n_vars {
            for e in 0..n_eqs {
                if let Some(w) = g.edge_weight(e, v) {
                    d[v] = d[v].max(w + c[e]);
                }
            }
        }
        let mut tight = BipGraph::new(
            (0..n_eqs).map(|e| g.eq_name(e).to_string()).collect(),
            (0..n_vars).map(|v| g.var_name(v).to_string()).collect(),
        );
        for (e, v, w) in g.edges() {
            if d[v] - c[e] == w {
                tight.add_edge(e, v, 0);
            }
        }
        if mdae_graph::exists_complete_matching(&tight) {
            if c == got.c && d == got.d {
                found_self = true;
            }
            for (a, b) in got.c.iter().zip(&c) {
                if a > b {
                    return Err(format!("c not smallest: {:?} beats {:?}", c, got.c));
                }
            }
            for (a, b) in got.d.iter().zip(&d) {
                if a > b {
                    return Err(format!("d not smallest: {:?} beats {:?}", d, got.d));
                }
            }
        }
        let mut i = 0;
        loop {
            if i == n_eqs {
                if found_self {
                    return Ok(());
                }
                return Err("returned offsets not found feasible".into());
            }
            if c[i] < bound {
                c[i] += 1;
                break;
            }
            c[i] = 0;
            i += 1;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn offsets_are_the_smallest_feasible_dual(g in arb_square()) {
        let got = find_offsets(&g).unwrap();
        // Offsets are bounded by n * max weight; the box is padded past it.
        let bound = (g.n_eqs() as u32) * 2 + 2;
        if let Err(msg) = check_smallest(&g, &got, bound) {
            return Err(TestCaseError::fail(msg));
        }
    }

    #[test]
    fn scaling_weights_scales_offsets(g in arb_square(), m in 2u32..4) {
        let base = find_offsets(&g).unwrap();
        let mut scaled = BipGraph::new(
            (0..g.n_eqs()).map(|e| g.eq_name(e).to_string()).collect(),
            (0..g.n_vars()).map(|v| g.var_name(v).to_string()).collect(),
        );
        for (e, v, w) in g.edges() {
            scaled.add_edge(e, v, w * m);
        }
        let got = find_offsets(&scaled).unwrap();
        let want_c: Vec<u32> = base.c.iter().map(|&c| c * m).collect();
        let want_d: Vec<u32> = base.d.iter().map(|&d| d * m).collect();
        prop_assert_eq!(got.c, want_c);
        prop_assert_eq!(got.d, want_d);
    }

    #[test]
    fn offsets_are_invariant_under_relabeling(g in arb_square(), seed in any::<u64>()) {
        let base = find_offsets(&g).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let mut pe: Vec<usize> = (0..g.n_eqs()).collect();
            let mut pv: Vec<usize> = (0..g.n_vars()).collect();
            pe.shuffle(&mut rng);
            pv.shuffle(&mut rng);
            let mut pg = BipGraph::new(
                pe.iter().map(|&e| g.eq_name(e).to_string()).collect(),
                pv.iter().map(|&v| g.var_name(v).to_string()).collect(),
            );
            let mut new_var = vec![0usize; g.n_vars()];
            for (new, &old) in pv.iter().enumerate() {
                new_var[old] = new;
            }
            for (new_e, &old_e) in pe.iter().enumerate() {
                for &(v, w) in g.row(old_e) {
                    pg.add_edge(new_e, new_var[v], w);
                }
            }
            let got = find_offsets(&pg).unwrap();
            for (new_e, &old_e) in pe.iter().enumerate() {
                prop_assert_eq!(got.c[new_e], base.c[old_e]);
            }
            for (new_v, &old_v) in pv.iter().enumerate() {
                prop_assert_eq!(got.d[new_v], base.d[old_v]);
            }
        }
    }

    #[test]
    fn shifted_system_covers_its_leading_variables(g in arb_square()) {
        let o = find_offsets(&g).unwrap();
        // Tight edges are where a shifted equation reaches the leading
        // instance of a variable; the shifted system must still be
        // structurally nonsingular on those.
        let mut tight = BipGraph::new(
            (0..g.n_eqs()).map(|e| g.eq_name(e).to_string()).collect(),
            (0..g.n_vars()).map(|v| g.var_name(v).to_string()).collect(),
        );
        for (e, v, w) in g.edges() {
            if o.d[v] == o.c[e] + w {
                tight.add_edge(e, v, 0);
            }
        }
        prop_assert!(mdae_graph::exists_complete_matching(&tight));
    }
}
