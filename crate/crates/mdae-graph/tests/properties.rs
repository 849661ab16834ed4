//! Randomized properties: agreement with the brute-force enumerators and
//! invariance of the decomposition under node relabeling (which exercises
//! matching-independence, since a different label order makes the algorithms
//! find different matchings).

mod common;

use common::{all_complete_matchings, all_maximum_matchings, brute_max_cardinality, restrict};
use mdae_graph::{
    block_triangular_form, dulmage_mendelsohn, exists_complete_matching,
    max_cardinality_matching, max_weight_complete_matching, BipGraph, Matching,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use std::collections::BTreeSet;

/// Random small graph plus a dependent-variable mask.
fn arb_case() -> impl Strategy<Value = (BipGraph, Vec<bool>)> {
    (0usize..=6, 0usize..=6).prop_flat_map(|(ne, nv)| {
        let rows = proptest::collection::vec(
            proptest::collection::vec((proptest::bool::weighted(0.45), 0u32..4), nv),
            ne,
        );
        let mask = proptest::collection::vec(proptest::bool::weighted(0.8), nv);
        (rows, mask).prop_map(move |(rows, mask)| {
            let rows: Vec<Vec<(usize, u32)>> = rows
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(_, (on, _))| *on)
                        .map(|(v, (_, w))| (v, *w))
                        .collect()
                })
                .collect();
            (common::build(nv, &rows), mask)
        })
    })
}

fn assert_valid_matching(g: &BipGraph, m: &Matching) {
    let mut used = BTreeSet::new();
    for (e, v) in m.pairs() {
        assert!(g.edge_weight(e, v).is_some(), "matched pair is not an edge");
        assert!(used.insert(v), "variable matched twice");
        assert_eq!(m.var_to_eq[v], Some(e), "reverse map out of sync");
    }
}

/// Relabels a graph by the given permutations (new index -> old index).
fn permuted(g: &BipGraph, pe: &[usize], pv: &[usize]) -> BipGraph {
    let eq_names = pe.iter().map(|&e| g.eq_name(e).to_string()).collect();
    let var_names = pv.iter().map(|&v| g.var_name(v).to_string()).collect();
    let mut out = BipGraph::new(eq_names, var_names);
    let mut old_to_new_var = vec![0; g.n_vars()];
    for (new, &old) in pv.iter().enumerate() {
        old_to_new_var[old] = new;
    }
    for (new_e, &old_e) in pe.iter().enumerate() {
        for &(v, w) in g.row(old_e) {
            out.add_edge(new_e, old_to_new_var[v], w);
        }
    }
    out
}

type Parts = (BTreeSet<usize>, BTreeSet<usize>);

fn parts_of(dm: &mdae_graph::DmResult) -> [Parts; 3] {
    let s = |p: &(Vec<usize>, Vec<usize>)| {
        (
            p.0.iter().copied().collect::<BTreeSet<_>>(),
            p.1.iter().copied().collect::<BTreeSet<_>>(),
        )
    };
    [s(&dm.under), s(&dm.enabled), s(&dm.over)]
}

proptest! {
    #[test]
    fn cardinality_matches_brute_force((g, _) in arb_case()) {
        let m = max_cardinality_matching(&g);
        assert_valid_matching(&g, &m);
        prop_assert_eq!(m.cardinality(), brute_max_cardinality(&g));
        prop_assert_eq!(
            exists_complete_matching(&g),
            brute_max_cardinality(&g) == g.n_eqs()
        );
    }

    #[test]
    fn weight_matches_complete_enumeration((g, _) in arb_case()) {
        let complete = all_complete_matchings(&g);
        match max_weight_complete_matching(&g) {
            Ok(m) => {
                assert_valid_matching(&g, &m);
                prop_assert!(m.is_complete());
                let best = complete
                    .iter()
                    .map(|c| {
                        c.iter()
                            .enumerate()
                            .map(|(e, &v)| g.edge_weight(e, v).unwrap() as u64)
                            .sum::<u64>()
                    })
                    .max()
                    .expect("a complete matching was returned, so one exists");
                prop_assert_eq!(m.weight(&g), best);
            }
            Err(_) => prop_assert!(complete.is_empty()),
        }
    }

    #[test]
    fn decomposition_matches_missable_node_oracle((g, mask) in arb_case()) {
        let dm = dulmage_mendelsohn(&g, &mask);

        // Partition sanity: every equation in exactly one part, every
        // dependent variable in exactly one part, no others anywhere.
        let [u, e, o] = parts_of(&dm);
        let all_eqs: BTreeSet<usize> =
            u.0.iter().chain(e.0.iter()).chain(o.0.iter()).copied().collect();
        prop_assert_eq!(all_eqs.len(), u.0.len() + e.0.len() + o.0.len());
        prop_assert_eq!(all_eqs, (0..g.n_eqs()).collect::<BTreeSet<_>>());
        let all_vars: BTreeSet<usize> =
            u.1.iter().chain(e.1.iter()).chain(o.1.iter()).copied().collect();
        prop_assert_eq!(all_vars.len(), u.1.len() + e.1.len() + o.1.len());
        let deps: BTreeSet<usize> =
            (0..g.n_vars()).filter(|&v| mask[v]).collect();
        prop_assert_eq!(all_vars, deps);

        // Independent characterization via exhaustive matchings of the
        // restricted graph: a node is in the deficient part on its own side
        // exactly if some maximum matching misses it.
        let r = restrict(&g, &mask);
        let maxima = all_maximum_matchings(&r);
        let missable_eq: BTreeSet<usize> = (0..r.n_eqs())
            .filter(|&eq| maxima.iter().any(|m| m[eq].is_none()))
            .collect();
        let dep_vars: Vec<usize> = (0..g.n_vars()).filter(|&v| mask[v]).collect();
        let missable_var: BTreeSet<usize> = dep_vars
            .iter()
            .copied()
            .filter(|&v| maxima.iter().any(|m| !m.contains(&Some(v))))
            .collect();
        prop_assert_eq!(&o.0, &missable_eq);
        prop_assert_eq!(&u.1, &missable_var);

        // Closure sides: over variables are those adjacent to over
        // equations; under equations are those adjacent to under variables.
        let mut over_vars = BTreeSet::new();
        for &eq in &missable_eq {
            for &(v, _) in r.row(eq) {
                over_vars.insert(v);
            }
        }
        prop_assert_eq!(&o.1, &over_vars);
        let under_eqs: BTreeSet<usize> = (0..r.n_eqs())
            .filter(|&eq| r.row(eq).iter().any(|&(v, _)| missable_var.contains(&v)))
            .collect();
        prop_assert_eq!(&u.0, &under_eqs);

        // Enabled part is square and perfectly matched.
        prop_assert_eq!(e.0.len(), e.1.len());
        for &eq in &e.0 {
            let v = dm.matching.eq_to_var[eq].expect("enabled equation unmatched");
            prop_assert!(e.1.contains(&v));
        }
    }

    #[test]
    fn decomposition_is_invariant_under_relabeling(
        (g, mask) in arb_case(),
        seed in any::<u64>(),
    ) {
        let base = parts_of(&dulmage_mendelsohn(&g, &mask));
        let base_blocks: BTreeSet<(Vec<usize>, Vec<usize>)> =
            dulmage_mendelsohn(&g, &mask)
                .btf
                .iter()
                .map(|b| {
                    let mut vs = b.vars.clone();
                    vs.sort_unstable();
                    (b.eqs.clone(), vs)
                })
                .collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let mut pe: Vec<usize> = (0..g.n_eqs()).collect();
            let mut pv: Vec<usize> = (0..g.n_vars()).collect();
            pe.shuffle(&mut rng);
            pv.shuffle(&mut rng);
            let pg = permuted(&g, &pe, &pv);
            let pmask: Vec<bool> = pv.iter().map(|&old| mask[old]).collect();
            let pdm = dulmage_mendelsohn(&pg, &pmask);
            // Map the permuted result back to original labels.
            let back = |idx: &Vec<usize>, p: &[usize]| -> BTreeSet<usize> {
                idx.iter().map(|&i| p[i]).collect()
            };
            let mapped = [
                (back(&pdm.under.0, &pe), back(&pdm.under.1, &pv)),
                (back(&pdm.enabled.0, &pe), back(&pdm.enabled.1, &pv)),
                (back(&pdm.over.0, &pe), back(&pdm.over.1, &pv)),
            ];
            prop_assert_eq!(&mapped, &base);
            let mapped_blocks: BTreeSet<(Vec<usize>, Vec<usize>)> = pdm
                .btf
                .iter()
                .map(|b| {
                    let mut es: Vec<usize> = b.eqs.iter().map(|&e| pe[e]).collect();
                    let mut vs: Vec<usize> = b.vars.iter().map(|&v| pv[v]).collect();
                    es.sort_unstable();
                    vs.sort_unstable();
                    (es, vs)
                })
                .collect();
            prop_assert_eq!(&mapped_blocks, &base_blocks);
        }
    }

    #[test]
    fn over_part_vanishes_after_removing_its_equations((g, mask) in arb_case()) {
        let dm = dulmage_mendelsohn(&g, &mask);
        let keep: Vec<usize> =
            (0..g.n_eqs()).filter(|e| !dm.over.0.contains(e)).collect();
        let rows: Vec<Vec<(usize, u32)>> =
            keep.iter().map(|&e| g.row(e).to_vec()).collect();
        let trimmed = common::build(g.n_vars(), &rows);
        let dm2 = dulmage_mendelsohn(&trimmed, &mask);
        prop_assert!(dm2.over.0.is_empty(), "over part must vanish: {:?}", dm2.over);
        prop_assert!(dm2.over.1.is_empty());
    }

    #[test]
    fn block_structure_is_complete_matching_independent((g, _) in arb_case()) {
        // Matching-independence is a statement about square systems: every
        // complete matching must also cover every incident variable.
        let incident_vars: BTreeSet<usize> =
            g.edges().map(|(_, v, _)| v).collect();
        prop_assume!(incident_vars.len() == g.n_eqs());
        let complete = all_complete_matchings(&g);
        // Keep runtime bounded; enough matchings to catch order dependence.
        let mut reference: Option<BTreeSet<(Vec<usize>, Vec<usize>)>> = None;
        for c in complete.into_iter().take(24) {
            let mut m = Matching {
                eq_to_var: vec![None; g.n_eqs()],
                var_to_eq: vec![None; g.n_vars()],
            };
            for (e, &v) in c.iter().enumerate() {
                m.eq_to_var[e] = Some(v);
                m.var_to_eq[v] = Some(e);
            }
            let blocks = block_triangular_form(&g, &m);

            // Solve-order soundness: a block may only read variables defined
            // in itself or an earlier block.
            let mut defined = BTreeSet::new();
            for b in &blocks {
                for &v in &b.vars {
                    defined.insert(v);
                }
                for &eq in &b.eqs {
                    for &(v, _) in g.row(eq) {
                        if m.var_to_eq[v].is_some() {
                            prop_assert!(
                                defined.contains(&v),
                                "block order reads an undefined variable"
                            );
                        }
                    }
                }
            }

            let set: BTreeSet<(Vec<usize>, Vec<usize>)> = blocks
                .iter()
                .map(|b| {
                    let mut vs = b.vars.clone();
                    vs.sort_unstable();
                    (b.eqs.clone(), vs)
                })
                .collect();
            match &reference {
                None => reference = Some(set),
                Some(r) => prop_assert_eq!(r, &set),
            }
        }
    }
}
