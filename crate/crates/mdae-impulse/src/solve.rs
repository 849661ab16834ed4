//! Interval solver for order-constraint systems.
//!
//! Every order variable starts with the interval its priors allow and is
//! narrowed by three kinds of reasoning, run to a fixpoint:
//!
//! * *function links*: the order of a smooth function value follows from
//!   the order of its argument through the series expansion;
//! * *upper tightening*: in any group, each term is at most the largest
//!   possible value of the others (the maximum is attained at least twice,
//!   so no term can exceed all others);
//! * *dominance forcing*: when at most two terms can still reach the
//!   group's maximum, they are forced equal (and a single such term is
//!   forced to vanish outright).
//!
//! When propagation stalls with three or more possible dominant terms, the
//! solver case-splits on which pair attains the maximum, explores the
//! branches depth-first under a budget, and returns the hull of consistent
//! leaves.  If the budget runs out, the propagation-only bounds are
//! returned and the solution is marked non-exhaustive.

use num_traits::Zero;

use crate::constraints::{Affine, Group, OrderConstraintSystem};
use crate::monomial::SeriesInfo;
use crate::{ImpulseError, Order, OrderInterval, Rat};

/// Branch budget for the dominance case-split.
const MAX_BRANCHES: usize = 1024;
/// Safety cap on propagation sweeps; narrowings are monotone, so this only
/// truncates pathological slow convergence, never correctness.
const MAX_PASSES: usize = 4096;

/// Solved order bounds, one interval per order variable.
#[derive(Debug, Clone)]
pub struct OrderSolution {
    pub intervals: Vec<OrderInterval>,
    /// False when the case-split budget ran out and only propagation-level
    /// bounds are reported.
    pub exhaustive: bool,
    /// Branches explored by the case-split.
    pub branches: usize,
}

/// A contradiction found while narrowing, with the offending constraint.
#[derive(Debug)]
struct Dead(String);

/// Solves the constraint system to interval bounds on every order.
pub fn solve_orders(sys: &OrderConstraintSystem) -> Result<OrderSolution, ImpulseError> {
    let mut root = sys.initial_intervals();
    if let Some(v) = (0..root.len()).find(|&v| root[v].is_empty()) {
        return Err(ImpulseError::Inconsistent(format!(
            "priors on {} conflict",
            sys.labels[v]
        )));
    }
    propagate(sys, &mut root).map_err(|Dead(why)| ImpulseError::Inconsistent(why))?;

    let mut ctl = Search { leaves: Vec::new(), branches: 0, exhausted: false };
    search(sys, root.clone(), 0, &mut ctl);

    if ctl.exhausted {
        return Ok(OrderSolution { intervals: root, exhaustive: false, branches: ctl.branches });
    }
    let mut leaves = ctl.leaves.into_iter();
    let Some(mut hull) = leaves.next() else {
        return Err(ImpulseError::Inconsistent(
            "every choice of dominant terms contradicts the bounds".into(),
        ));
    };
    for leaf in leaves {
        for (h, l) in hull.iter_mut().zip(leaf) {
            *h = h.hull(l);
        }
    }
    Ok(OrderSolution { intervals: hull, exhaustive: true, branches: ctl.branches })
}

struct Search {
    leaves: Vec<Vec<OrderInterval>>,
    branches: usize,
    exhausted: bool,
}

/// Depth-first dominance search.  Groups are split in index order and each
/// split moves `from` past the group, so the depth is bounded by the number
/// of groups; narrowing only ever shrinks candidate sets, so skipped groups
/// cannot become ambiguous again.
fn search(sys: &OrderConstraintSystem, iv: Vec<OrderInterval>, from: usize, ctl: &mut Search) {
    if ctl.exhausted {
        return;
    }
    let mut iv = iv;
    if propagate(sys, &mut iv).is_err() {
        return;
    }
    for (gi, g) in sys.groups.iter().enumerate().skip(from) {
        let evals: Vec<OrderInterval> = g.terms.iter().map(|t| t.eval(&iv)).collect();
        let cands = candidates(&evals);
        if cands.len() < 3 || witnessed(&evals) {
            continue;
        }
        for a in 0..cands.len() {
            for b in a + 1..cands.len() {
                if ctl.branches >= MAX_BRANCHES {
                    ctl.exhausted = true;
                    return;
                }
                ctl.branches += 1;
                let mut child = iv.clone();
                if force_dominant_pair(g, cands[a], cands[b], &mut child).is_ok() {
                    search(sys, child, gi + 1, ctl);
                }
                if ctl.exhausted {
                    return;
                }
            }
        }
        return;
    }
    ctl.leaves.push(iv);
}

/// Terms that can still attain the group maximum: live terms whose upper
/// bound reaches the largest lower bound.
fn candidates(evals: &[OrderInterval]) -> Vec<usize> {
    let max_lo = evals.iter().map(|e| e.lo).max().unwrap_or(Order::NegInf);
    (0..evals.len())
        .filter(|&i| evals[i].hi > Order::NegInf && evals[i].hi >= max_lo)
        .collect()
}

/// Two equal point-valued terms at or above every other upper bound prove
/// the twice-attained maximum outright.
fn witnessed(evals: &[OrderInterval]) -> bool {
    for i in 0..evals.len() {
        if !evals[i].is_point() {
            continue;
        }
        for j in i + 1..evals.len() {
            if evals[j] != evals[i] {
                continue;
            }
            let top = evals[i].lo;
            if evals
                .iter()
                .enumerate()
                .all(|(k, e)| k == i || k == j || e.hi <= top)
            {
                return true;
            }
        }
    }
    false
}

/// Assume terms `a` and `b` jointly attain the group maximum: they are
/// equal and every other term is at most their value.
fn force_dominant_pair(
    g: &Group,
    a: usize,
    b: usize,
    iv: &mut [OrderInterval],
) -> Result<(), Dead> {
    let mut changed = false;
    narrow_eq(&g.terms[a], &g.terms[b], iv, &mut changed)?;
    for (k, t) in g.terms.iter().enumerate() {
        if k != a && k != b {
            narrow_le_affine(t, &g.terms[a], iv, &mut changed)?;
        }
    }
    Ok(())
}

/// Runs all narrowing rules to a fixpoint.
fn propagate(sys: &OrderConstraintSystem, iv: &mut [OrderInterval]) -> Result<(), Dead> {
    for _ in 0..MAX_PASSES {
        let mut changed = false;
        for l in &sys.apps {
            let arg = scale_interval(iv[l.inner], l.exp);
            let image = app_image(arg, l.series);
            shrink(iv, l.var, image, "function image", &mut changed)?;
        }
        for g in &sys.groups {
            group_pass(g, iv, &mut changed)?;
        }
        if !changed {
            return Ok(());
        }
    }
    Ok(())
}

fn group_pass(g: &Group, iv: &mut [OrderInterval], changed: &mut bool) -> Result<(), Dead> {
    // Upper tightening: every term is at most the max of the others.
    for i in 0..g.terms.len() {
        let bound = g
            .terms
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, t)| t.eval(iv).hi)
            .max()
            .unwrap_or(Order::NegInf);
        narrow_le_const(&g.terms[i], bound, iv, changed)
            .map_err(|Dead(w)| Dead(format!("{} (row {})", w, g.label)))?;
    }

    // Dominance forcing.
    let evals: Vec<OrderInterval> = g.terms.iter().map(|t| t.eval(iv)).collect();
    let max_lo = evals.iter().map(|e| e.lo).max().unwrap_or(Order::NegInf);
    let cands = candidates(&evals);
    let die = |what: &str| {
        Dead(format!(
            "row {} needs its maximum attained twice, but {what}",
            g.label
        ))
    };
    match cands.len() {
        0 => {
            if max_lo > Order::NegInf {
                return Err(die("no term can attain it"));
            }
        }
        1 => {
            if max_lo > Order::NegInf {
                return Err(die("only one term can attain it"));
            }
            // Everything else is zero, so the last live term must vanish too.
            narrow_le_const(&g.terms[cands[0]], Order::NegInf, iv, changed)
                .map_err(|Dead(w)| Dead(format!("{} (row {})", w, g.label)))?;
        }
        2 => {
            narrow_eq(&g.terms[cands[0]], &g.terms[cands[1]], iv, changed)
                .map_err(|Dead(w)| Dead(format!("{} (row {})", w, g.label)))?;
        }
        _ => {}
    }
    Ok(())
}

/// Intersects `iv[v]` with `with`.
fn shrink(
    iv: &mut [OrderInterval],
    v: usize,
    with: OrderInterval,
    what: &str,
    changed: &mut bool,
) -> Result<(), Dead> {
    let next = iv[v].intersect(with);
    if next != iv[v] {
        if next.is_empty() {
            return Err(Dead(format!("empty bound from {what}")));
        }
        iv[v] = next;
        *changed = true;
    }
    Ok(())
}

/// Requires `aff <= bound`, tightening each variable through the affine.
fn narrow_le_const(
    aff: &Affine,
    bound: Order,
    iv: &mut [OrderInterval],
    changed: &mut bool,
) -> Result<(), Dead> {
    if aff.eval(iv).lo > bound {
        return Err(Dead(format!("term is at least {}", aff.eval(iv).lo)));
    }
    let vars: Vec<usize> = aff.coeffs.keys().copied().collect();
    for v in vars {
        let k = aff.coeffs[&v];
        // Everything except v, at its smallest.
        let mut rest_lo = Order::Finite(aff.constant);
        for (&u, &ku) in &aff.coeffs {
            if u == v {
                continue;
            }
            let t = if ku > Rat::zero() { iv[u].lo.scale(ku) } else { iv[u].hi.scale(ku) };
            rest_lo = rest_lo.add(t);
        }
        let Some(slack) = order_sub(bound, rest_lo) else { continue };
        let limit = slack.scale(k.recip());
        let with = if k > Rat::zero() {
            OrderInterval { lo: Order::NegInf, hi: limit }
        } else {
            OrderInterval { lo: limit, hi: Order::PosInf }
        };
        shrink(iv, v, with, "upper tightening", changed)?;
    }
    Ok(())
}

/// Requires `a <= b` as affine forms.
fn narrow_le_affine(
    a: &Affine,
    b: &Affine,
    iv: &mut [OrderInterval],
    changed: &mut bool,
) -> Result<(), Dead> {
    narrow_le_const(&a.sub(b), Order::ZERO, iv, changed)
}

/// Requires `a == b`.
fn narrow_eq(
    a: &Affine,
    b: &Affine,
    iv: &mut [OrderInterval],
    changed: &mut bool,
) -> Result<(), Dead> {
    narrow_le_const(&a.sub(b), Order::ZERO, iv, changed)?;
    narrow_le_const(&b.sub(a), Order::ZERO, iv, changed)
}

/// `a - b`, `None` when the difference carries no information (both ends
/// unbounded the same way).
fn order_sub(a: Order, b: Order) -> Option<Order> {
    use Order::*;
    match (a, b) {
        (_, NegInf) => None,
        (PosInf, PosInf) => None,
        (NegInf, _) => Some(NegInf),
        (Finite(_), PosInf) => Some(NegInf),
        (PosInf, _) => Some(PosInf),
        (Finite(x), Finite(y)) => Some(Finite(x - y)),
    }
}

fn scale_interval(i: OrderInterval, k: Rat) -> OrderInterval {
    if k >= Rat::zero() {
        OrderInterval { lo: i.lo.scale(k), hi: i.hi.scale(k) }
    } else {
        OrderInterval { lo: i.hi.scale(k), hi: i.lo.scale(k) }
    }
}

/// The possible orders of `f(argument)` given the order of the argument.
///
/// A vanishing or bounded argument is priced by the leading series term; a
/// blowing-up argument feeds an infinite-support expansion, whose value
/// then grows faster than any power of `1/dt`.
fn app_image(arg: OrderInterval, s: SeriesInfo) -> OrderInterval {
    let k0 = Rat::from_integer(s.first_power);
    let small = |part: OrderInterval| {
        if s.constant_term {
            OrderInterval::point(Order::ZERO)
        } else {
            scale_interval(part, k0)
        }
    };
    if arg.hi <= Order::ZERO {
        small(arg)
    } else if arg.lo > Order::ZERO {
        if s.infinite_support {
            OrderInterval::point(Order::PosInf)
        } else {
            OrderInterval::FREE
        }
    } else {
        let below = small(OrderInterval { lo: arg.lo, hi: Order::ZERO });
        let above = if s.infinite_support {
            OrderInterval::point(Order::PosInf)
        } else {
            OrderInterval::FREE
        };
        below.hull(above)
    }
}
