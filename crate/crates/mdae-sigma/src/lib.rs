//! Structural index reduction.
//!
//! Within one mode, a system of difference equations may not determine its
//! leading variables directly: some equations must be shifted forward in time
//! ("latent equations") before the system becomes solvable instant by
//! instant. How far to shift each equation is an integer dual problem on the
//! weighted incidence graph; [`find_offsets`] computes its elementwise
//! smallest solution and [`sigma_method`] packages the result as the shifted
//! system plus the consistency equations it leaves behind.
//!
//! Across a mode change things are harder: the current instant may borrow
//! equations from hypothesized *future* instants. [`array`] implements that
//! machinery (existentially quantified structural checks and difference
//! arrays).

pub mod array;

use mdae_graph::{dulmage_mendelsohn, max_weight_complete_matching, BipGraph, GraphError};
use thiserror::Error;

/// One equation shifted forward `shift` instants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EqInst {
    pub eq: usize,
    pub shift: u32,
}

/// One variable instance `shift` instants ahead of the current one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarInst {
    pub var: usize,
    pub shift: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SigmaError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    /// The offset fixpoint failed to stabilize within the sweep budget.
    /// This cannot happen for well-formed inputs and indicates a bug.
    #[error("offset iteration did not converge within {0} sweeps")]
    NonConvergence(usize),
}

/// The smallest dual solution: `c[f]` shifts per equation, `d[x]` leads per
/// variable. Feasibility means `d[x] - c[f] >= w(f,x)` on every edge, with
/// equality on some complete matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Offsets {
    pub c: Vec<u32>,
    pub d: Vec<u32>,
}

/// Computes the elementwise-smallest offsets for a graph that admits a
/// complete matching.
///
/// Iterates the two relaxation steps — raise each `d[x]` to the highest
/// `w(f,x) + c[f]` over incident equations, then tighten each `c[f]` to
/// `d[M(f)] - w(f, M(f))` along a maximum-weight complete matching — starting
/// from `c = 0` until nothing changes.
pub fn find_offsets(g: &BipGraph) -> Result<Offsets, SigmaError> {
    let m = max_weight_complete_matching(g)?;
    let n_eqs = g.n_eqs();
    let n_vars = g.n_vars();
    let mut c = vec![0i64; n_eqs];
    let mut d = vec![0i64; n_vars];

    let max_w = g.edges().map(|(_, _, w)| w).max().unwrap_or(0) as usize;
    let budget = 10 * (n_eqs + n_vars + max_w + 1);
    for _ in 0..budget {
        let mut changed = false;
        for v in 0..n_vars {
            let mut best = 0i64;
            for e in 0..n_eqs {
                if let Some(w) = g.edge_weight(e, v) {
                    best = best.max(w as i64 + c[e]);
                }
            }
            if d[v] != best {
                d[v] = best;
                changed = true;
            }
        }
        for e in 0..n_eqs {
            let v = m.eq_to_var[e].expect("matching is complete");
            let w = g.edge_weight(e, v).unwrap_or(0) as i64;
            let next = d[v] - w;
            if c[e] != next {
                c[e] = next;
                changed = true;
            }
        }
        if !changed {
            return Ok(Offsets {
                c: c.into_iter().map(|x| x as u32).collect(),
                d: d.into_iter().map(|x| x as u32).collect(),
            });
        }
    }
    Err(SigmaError::NonConvergence(budget))
}

/// Result of per-mode index reduction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SigmaOutcome {
    Success(SigmaSuccess),
    /// No complete matching on the dependent variables: the mode is
    /// structurally singular. Carries the Dulmage–Mendelsohn diagnosis.
    Singular {
        over_eqs: Vec<usize>,
        under_vars: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigmaSuccess {
    pub offsets: Offsets,
    /// The shifted system: each equation advanced by its offset.
    pub f_sigma: Vec<EqInst>,
    /// Consistency equations: every strictly smaller shift of each equation.
    pub f_bar: Vec<EqInst>,
    /// Differentiation index in the difference sense: max equation offset.
    pub index: u32,
}

impl SigmaSuccess {
    /// JSON report: offsets keyed by name, the shifted system, and the
    /// consistency set.
    pub fn to_json(
        &self,
        eq_name: impl Fn(usize) -> String,
        var_name: impl Fn(usize) -> String,
    ) -> serde_json::Value {
        let inst = |i: &EqInst| format!("{}@{}", eq_name(i.eq), i.shift);
        let eq_offsets: serde_json::Map<String, serde_json::Value> = self
            .offsets
            .c
            .iter()
            .enumerate()
            .map(|(e, &c)| (eq_name(e), c.into()))
            .collect();
        let var_offsets: serde_json::Map<String, serde_json::Value> = self
            .offsets
            .d
            .iter()
            .enumerate()
            .map(|(v, &d)| (var_name(v), d.into()))
            .collect();
        serde_json::json!({
            "offsets": { "equations": eq_offsets, "variables": var_offsets },
            "index": self.index,
            "shifted_system": self.f_sigma.iter().map(inst).collect::<Vec<_>>(),
            "consistency": self.f_bar.iter().map(inst).collect::<Vec<_>>(),
        })
    }
}

/// Runs the per-mode index reduction on a weighted incidence graph.
///
/// `dependents` masks the variables of the mode (columns); weights are the
/// maximal shift degree of each variable in each equation. On success the
/// outcome carries offsets, the shifted system, the consistency equations,
/// and the index; a singular mode is reported with its over/under parts.
pub fn sigma_method(g: &BipGraph, dependents: &[bool]) -> Result<SigmaOutcome, SigmaError> {
    // Restrict to the mode's variables.
    let mut restricted = BipGraph::new(
        (0..g.n_eqs()).map(|e| g.eq_name(e).to_string()).collect(),
        (0..g.n_vars()).map(|v| g.var_name(v).to_string()).collect(),
    );
    for (e, v, w) in g.edges() {
        if dependents[v] {
            restricted.add_edge(e, v, w);
        }
    }

    if !mdae_graph::exists_complete_matching(&restricted) {
        let dm = dulmage_mendelsohn(&restricted, dependents);
        return Ok(SigmaOutcome::Singular {
            over_eqs: dm.over.0,
            under_vars: dm.under.1,
        });
    }

    let offsets = find_offsets(&restricted)?;
    let f_sigma = offsets
        .c
        .iter()
        .enumerate()
        .map(|(eq, &shift)| EqInst { eq, shift })
        .collect();
    let f_bar = offsets
        .c
        .iter()
        .enumerate()
        .flat_map(|(eq, &c)| (0..c).map(move |shift| EqInst { eq, shift }))
        .collect();
    let index = offsets.c.iter().copied().max().unwrap_or(0);
    Ok(SigmaOutcome::Success(SigmaSuccess { offsets, f_sigma, f_bar, index }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(vars: &[&str], rows: &[(&str, &[(&str, u32)])]) -> BipGraph {
        let var_names: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
        let eq_names: Vec<String> = rows.iter().map(|(n, _)| n.to_string()).collect();
        let mut g = BipGraph::new(eq_names, var_names.clone());
        for (e, (_, adj)) in rows.iter().enumerate() {
            for (v, w) in adj.iter() {
                let vi = var_names.iter().position(|n| n == v).unwrap();
                g.add_edge(e, vi, *w);
            }
        }
        g
    }

    #[test]
    fn diagonal_zero_weights_has_zero_offsets() {
        let g = graph(
            &["x", "y"],
            &[("f1", &[("x", 0)]), ("f2", &[("y", 0)])],
        );
        let o = find_offsets(&g).unwrap();
        assert_eq!(o.c, vec![0, 0]);
        assert_eq!(o.d, vec![0, 0]);
    }

    #[test]
    fn coupled_shafts_need_one_latent_equation() {
        // Differential equations on w1, w2 plus an algebraic tie w1 = w2 and
        // a torque balance: the tie must be shifted once.
        let g = graph(
            &["w1", "w2", "t1", "t2"],
            &[
                ("e1", &[("w1", 1), ("t1", 0)]),
                ("e2", &[("w2", 1), ("t2", 0)]),
                ("e3", &[("w1", 0), ("w2", 0)]),
                ("e4", &[("t1", 0), ("t2", 0)]),
            ],
        );
        let o = find_offsets(&g).unwrap();
        assert_eq!(o.c, vec![0, 0, 1, 0]);
        assert_eq!(o.d, vec![1, 1, 0, 0]);

        match sigma_method(&g, &[true; 4]).unwrap() {
            SigmaOutcome::Success(s) => {
                assert_eq!(s.index, 1);
                assert_eq!(
                    s.f_sigma,
                    vec![
                        EqInst { eq: 0, shift: 0 },
                        EqInst { eq: 1, shift: 0 },
                        EqInst { eq: 2, shift: 1 },
                        EqInst { eq: 3, shift: 0 },
                    ]
                );
                assert_eq!(s.f_bar, vec![EqInst { eq: 2, shift: 0 }]);
            }
            other => panic!("expected success, got {other:?}"),
        }
    }

    #[test]
    fn constrained_point_mass_needs_two_shifts_of_the_constraint() {
        let g = graph(
            &["x", "y", "lam", "s"],
            &[
                ("e1", &[("x", 2), ("lam", 0)]),
                ("e2", &[("y", 2), ("lam", 0)]),
                ("k1", &[("x", 0), ("y", 0)]),
                ("k2", &[("lam", 0), ("s", 0)]),
            ],
        );
        let o = find_offsets(&g).unwrap();
        assert_eq!(o.c, vec![0, 0, 2, 0]);
        assert_eq!(o.d, vec![2, 2, 0, 0]);
        match sigma_method(&g, &[true; 4]).unwrap() {
            SigmaOutcome::Success(s) => {
                assert_eq!(s.index, 2);
                assert_eq!(
                    s.f_bar,
                    vec![EqInst { eq: 2, shift: 0 }, EqInst { eq: 2, shift: 1 }]
                );
            }
            other => panic!("expected success, got {other:?}"),
        }
    }

    #[test]
    fn two_equations_on_one_variable_are_singular_over() {
        let g = graph(&["x"], &[("f1", &[("x", 0)]), ("f2", &[("x", 0)])]);
        match sigma_method(&g, &[true]).unwrap() {
            SigmaOutcome::Singular { over_eqs, under_vars } => {
                assert_eq!(over_eqs, vec![0, 1]);
                assert!(under_vars.is_empty());
            }
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn index_zero_mode_has_no_consistency_equations() {
        let g = graph(
            &["w1", "w2", "t1", "t2"],
            &[
                ("e1", &[("w1", 1), ("t1", 0)]),
                ("e2", &[("w2", 1), ("t2", 0)]),
                ("e5", &[("t1", 0)]),
                ("e6", &[("t2", 0)]),
            ],
        );
        match sigma_method(&g, &[true; 4]).unwrap() {
            SigmaOutcome::Success(s) => {
                assert_eq!(s.index, 0);
                assert!(s.f_bar.is_empty());
            }
            other => panic!("expected success, got {other:?}"),
        }
    }
}
