//! Magnitude-order analysis of restart systems.
//!
//! When a mode change forces an instantaneous jump, the restart equations
//! are solved over an infinitesimal step `dt`.  Some unknowns stay bounded
//! as `dt -> 0`, others blow up like a power of `1/dt`.  This crate assigns
//! each unknown a *magnitude order*: the exponent `o` such that the variable
//! scales like `dt^(-o)`.  A variable with a provably positive order is
//! *impulsive*; one whose order is bounded above by zero is not.
//!
//! The analysis is purely structural.  Each restart equation is normalised
//! into a sum of monomials ([`SumForm`]); the order of a monomial is an
//! affine function of the orders of its factors, and a sum can only vanish
//! if its largest terms cancel, so in every equation the maximal order must
//! be attained by at least two monomials.  [`solve_orders`] propagates these
//! constraints to interval bounds on every order, case-splitting over which
//! terms dominate when propagation alone cannot decide.
//!
//! The result feeds two consumers: classification (flagging impulsive
//! variables on mode-change edges, see [`annotate_automaton`]) and
//! [`rescale`], which substitutes `w = v * dt^(-order)` so that a numerical
//! solver only ever sees bounded unknowns.

use num_rational::Ratio;
use thiserror::Error;

mod constraints;
mod monomial;
mod report;
mod solve;
mod system;

pub use constraints::{
    build_order_constraints, Affine, AppLink, Group, OrderConstraintSystem, Prior,
};
pub use monomial::{
    monomialize, monomialize_collect, normalize, render_sum, shift_sum, Atom, Monomial,
    SeriesInfo, SumForm,
};
pub use report::{analyze_change, annotate_automaton, ChangeAnalysis, VariableVerdict, Verdict};
pub use solve::{solve_orders, OrderSolution};
pub use system::{
    rescale, restart_system, saturate, Isolation, RestartRow, RestartSystem, RowSource,
};

/// Exact rational exponents, shared with the surface syntax of powers.
pub type Rat = Ratio<i64>;

/// The magnitude order of a quantity as the step `dt` tends to zero.
///
/// `Finite(q)` means the quantity scales like `dt^(-q)`: order `0` is a
/// bounded nonzero value, positive orders blow up, negative orders vanish.
/// `NegInf` is the order of an exact zero and `PosInf` the order of a
/// quantity growing faster than any power of `1/dt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    /// The order of zero: smaller than every finite order.
    NegInf,
    /// Scales like `dt^(-q)`.
    Finite(Rat),
    /// Grows faster than any power of `1/dt`.
    PosInf,
}

impl Order {
    /// Order of a bounded, generically nonzero quantity.
    pub const ZERO: Order = Order::Finite(Ratio::new_raw(0, 1));

    pub fn finite(n: i64, d: i64) -> Order {
        Order::Finite(Ratio::new(n, d))
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Order::Finite(_))
    }

    /// The order of a product is the sum of the factor orders.  A zero
    /// factor annihilates the product, so `NegInf` dominates even `PosInf`.
    pub fn add(self, other: Order) -> Order {
        use Order::*;
        match (self, other) {
            (NegInf, _) | (_, NegInf) => NegInf,
            (PosInf, _) | (_, PosInf) => PosInf,
            (Finite(a), Finite(b)) => Finite(a + b),
        }
    }

    /// The order of a power `x^k` is `k` times the order of `x`.  Raising
    /// to the zeroth power yields the constant `1`, of order zero.
    pub fn scale(self, k: Rat) -> Order {
        use num_traits::Zero;
        use Order::*;
        if k.is_zero() {
            return Order::ZERO;
        }
        match self {
            Finite(a) => Finite(a * k),
            NegInf => {
                if k > Ratio::zero() {
                    NegInf
                } else {
                    PosInf
                }
            }
            PosInf => {
                if k > Ratio::zero() {
                    PosInf
                } else {
                    NegInf
                }
            }
        }
    }
}

impl PartialOrd for Order {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Order {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering::*;
        use Order::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Equal,
            (NegInf, _) | (_, PosInf) => Less,
            (_, NegInf) | (PosInf, _) => Greater,
            (Finite(a), Finite(b)) => a.cmp(b),
        }
    }
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Order::NegInf => write!(f, "-inf"),
            Order::PosInf => write!(f, "+inf"),
            Order::Finite(q) => write!(f, "{q}"),
        }
    }
}

/// A closed interval of orders; empty when `lo > hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderInterval {
    pub lo: Order,
    pub hi: Order,
}

impl OrderInterval {
    /// The full interval `[-inf, +inf]`.
    pub const FREE: OrderInterval = OrderInterval { lo: Order::NegInf, hi: Order::PosInf };

    pub fn point(o: Order) -> OrderInterval {
        OrderInterval { lo: o, hi: o }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn intersect(self, other: OrderInterval) -> OrderInterval {
        OrderInterval { lo: self.lo.max(other.lo), hi: self.hi.min(other.hi) }
    }

    pub fn hull(self, other: OrderInterval) -> OrderInterval {
        OrderInterval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }
}

impl std::fmt::Display for OrderInterval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_point() {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "[{}, {}]", self.lo, self.hi)
        }
    }
}

/// Failures of the magnitude-order analysis.
///
/// These are reports, not panics: a model outside the supported fragment or
/// a genuinely unbounded restart is diagnosed and left for the caller to
/// surface.
#[derive(Debug, Error)]
pub enum ImpulseError {
    /// The expression cannot be normalised into the supported monomial
    /// fragment (for example a division by a sum, or a function applied to
    /// a sum of unknowns).
    #[error("unsupported expression in order analysis: {0}")]
    Unsupported(String),

    /// Every way of matching dominant terms contradicts the derived bounds;
    /// the restart system admits no consistent order assignment.
    #[error("order constraints are inconsistent: {0}")]
    Inconsistent(String),

    /// A variable grows faster than any power of `1/dt`, so no power-law
    /// rescaling can tame it.
    #[error("{0} grows faster than any power of 1/dt; rescaling refused")]
    InfiniteOrder(String),

    /// Rescaling needs an exact order, but the analysis only bounded it.
    #[error("order of {0} is only known within {1}; rescaling refused")]
    UndeterminedOrder(String, String),

    /// A residual of an erased equation involves values that are not known
    /// at the change instant, so its carried magnitude cannot be priced.
    #[error("residual of {0} depends on unknown {1}")]
    ResidualNotPast(String, String),
}
