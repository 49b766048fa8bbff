//! Comparison functions (class K-infinity) as exact expression trees.
//!
//! A comparison function is continuous, zero at zero, strictly increasing,
//! and unbounded. The class is closed under sums, compositions, and positive
//! input scaling, so a small symbolic grammar represents every function the
//! toolkit ever produces:
//!
//! * `Pow { c, q }`: `s -> c * s^q` with `c > 0`, `q > 0`;
//! * `Sum([phi_1, ..])`: pointwise sum;
//! * `Comp(outer, inner)`: `outer(inner(s))`;
//! * `Scale { c, inner }`: `s -> inner(c * s)` with `c > 0`.
//!
//! Trees are kept exact (no floating-point simplification), so a propagated
//! modulus certificate can be re-evaluated bit-identically later.
//!
//! The propagation rules turn one-step continuity moduli of a system map
//! into multi-step deviation bounds. Writing `alpha_x`, `alpha_u` for the
//! state/input moduli of the transition map, the horizon-M state moduli
//! `alpha^[m]` satisfy
//!
//! ```text
//! d(s_u(M), s_v(M)) <= sum_{m=0}^{M-1} alpha^[m]( d_U(u(m), v(m)) )
//! ```
//!
//! for trajectories started at the same initial state. They are built by
//! recursing on the horizon: the one-step bound feeds the inductive sum into
//! `alpha_x`, which is then split across the sum's terms with the weak
//! triangle inequality `alpha(s + t) <= alpha(2s) + alpha(2t)`. Iterating
//! the split over an n-term sum yields multipliers `2, 4, ..., 2^(n-1)` with
//! the final two terms sharing `2^(n-1)`; the earliest input keeps the
//! smallest multiplier. Cost moduli reuse the same machinery with the
//! stage/terminal cost moduli `gamma_x`, `gamma_u`, `gamma_N` on the outside.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Symbolic class K-infinity function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComparisonFunction {
    /// `s -> c * s^q`, `c > 0`, `q > 0`.
    Pow {
        #[serde(rename = "C")]
        c: f64,
        q: f64,
    },
    /// Pointwise sum of one or more comparison functions.
    Sum(Vec<ComparisonFunction>),
    /// Composition `outer(inner(s))`, serialised as `[outer, inner]`.
    Comp(Box<ComparisonFunction>, Box<ComparisonFunction>),
    /// Input scaling `s -> inner(c * s)`, `c > 0`.
    Scale {
        c: f64,
        inner: Box<ComparisonFunction>,
    },
}

impl ComparisonFunction {
    /// Power law `c * s^q`.
    pub fn power(c: f64, q: f64) -> Result<Self> {
        let f = ComparisonFunction::Pow { c, q };
        f.validate()?;
        Ok(f)
    }

    /// The identity `s -> s`.
    pub fn identity() -> Self {
        ComparisonFunction::Pow { c: 1.0, q: 1.0 }
    }

    /// Pointwise sum; the term list must be non-empty.
    pub fn sum(terms: Vec<ComparisonFunction>) -> Result<Self> {
        let f = ComparisonFunction::Sum(terms);
        f.validate()?;
        Ok(f)
    }

    /// Composition `outer(inner(s))`.
    pub fn compose(outer: ComparisonFunction, inner: ComparisonFunction) -> Self {
        ComparisonFunction::Comp(Box::new(outer), Box::new(inner))
    }

    /// Input scaling `s -> inner(c * s)`.
    pub fn scale_input(c: f64, inner: ComparisonFunction) -> Result<Self> {
        let f = ComparisonFunction::Scale {
            c,
            inner: Box::new(inner),
        };
        f.validate()?;
        Ok(f)
    }

    /// Output scaling `s -> c * inner(s)`, expressed inside the grammar as
    /// `Pow{c,1} . inner`.
    pub fn scale_output(c: f64, inner: ComparisonFunction) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::input(format!(
                "output scaling factor must be positive and finite, got {c}"
            )));
        }
        Ok(Self::compose(ComparisonFunction::Pow { c, q: 1.0 }, inner))
    }

    /// Checks the class invariants on every node.
    pub fn validate(&self) -> Result<()> {
        match self {
            ComparisonFunction::Pow { c, q } => {
                if !(*c > 0.0) || !c.is_finite() {
                    return Err(Error::input(format!(
                        "power law coefficient must be positive and finite, got {c}"
                    )));
                }
                if !(*q > 0.0) || !q.is_finite() {
                    return Err(Error::input(format!(
                        "power law exponent must be positive and finite, got {q}"
                    )));
                }
            }
            ComparisonFunction::Sum(terms) => {
                if terms.is_empty() {
                    return Err(Error::input("sum of comparison functions must not be empty"));
                }
                for t in terms {
                    t.validate()?;
                }
            }
            ComparisonFunction::Comp(outer, inner) => {
                outer.validate()?;
                inner.validate()?;
            }
            ComparisonFunction::Scale { c, inner } => {
                if !(*c > 0.0) || !c.is_finite() {
                    return Err(Error::input(format!(
                        "input scaling factor must be positive and finite, got {c}"
                    )));
                }
                inner.validate()?;
            }
        }
        Ok(())
    }

    /// Evaluates at `s >= 0`.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::input(format!(
                "comparison functions are defined on s >= 0, got {s}"
            )));
        }
        Ok(self.eval_unchecked(s))
    }

    fn eval_unchecked(&self, s: f64) -> f64 {
        match self {
            ComparisonFunction::Pow { c, q } => c * s.powf(*q),
            ComparisonFunction::Sum(terms) => terms.iter().map(|t| t.eval_unchecked(s)).sum(),
            ComparisonFunction::Comp(outer, inner) => {
                outer.eval_unchecked(inner.eval_unchecked(s))
            }
            ComparisonFunction::Scale { c, inner } => inner.eval_unchecked(c * s),
        }
    }

    /// Smallest `s` with `self(s) >= t`, up to bisection accuracy, rounded
    /// towards the safe (larger) side. Strict monotonicity makes this the
    /// functional inverse; callers use it to turn value bounds into radius
    /// bounds.
    pub fn inverse(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::input(format!(
                "inverse is defined for finite t >= 0, got {t}"
            )));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0f64;
        let mut grow = 0;
        while self.eval_unchecked(hi) < t {
            hi *= 2.0;
            grow += 1;
            if grow > 2_000 {
                return Err(Error::numeric(format!(
                    "inverse search for t = {t} did not bracket a solution"
                )));
            }
        }
        let mut lo = 0.0f64;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.eval_unchecked(mid) >= t {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// Declared one-step continuity moduli of a transition map:
/// `d(f(x,u,t), f(x',u',t)) <= alpha_x(d(x,x')) + alpha_u(d(u,u'))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateModuli {
    pub alpha_x: ComparisonFunction,
    pub alpha_u: ComparisonFunction,
}

/// Declared continuity moduli of the cost ingredients:
/// `|l0(x,u,t) - l0(x',u',t)| <= gamma_x(d(x,x')) + gamma_u(d(u,u'))` and
/// `|F(x,t) - F(x',t)| <= gamma_n(d(x,x'))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModuli {
    pub gamma_x: ComparisonFunction,
    pub gamma_u: ComparisonFunction,
    #[serde(rename = "gamma_N")]
    pub gamma_n: ComparisonFunction,
}

/// Both halves of the weak triangle inequality
/// `phi(s + t) <= phi(2s) + phi(2t)`: returns `(s -> phi(2s), t -> phi(2t))`.
pub fn weak_triangle_split(
    phi: &ComparisonFunction,
) -> (ComparisonFunction, ComparisonFunction) {
    let doubled = ComparisonFunction::Scale {
        c: 2.0,
        inner: Box::new(phi.clone()),
    };
    (doubled.clone(), doubled)
}

/// Multipliers for splitting a comparison function across an `n`-term sum:
/// `phi(t_0 + .. + t_{n-1}) <= sum_m phi(c_m * t_m)`.
///
/// Obtained by iterating the two-term weak triangle inequality, peeling one
/// term per step; the last two terms share the final multiplier.
fn split_multipliers(n: usize) -> Vec<f64> {
    assert!(n >= 1);
    (0..n)
        .map(|m| {
            let exp = (m + 1).min((n - 1).max(1));
            (1u64 << exp) as f64
        })
        .collect()
}

/// Horizon-`horizon` state deviation moduli.
///
/// Returns `[alpha^[0], .., alpha^[horizon-1]]` such that two trajectories
/// from the same initial state under inputs `u`, `v` satisfy
/// `d(s_u(M), s_v(M)) <= sum_m alpha^[m](d_U(u(m), v(m)))` whenever the
/// one-step moduli hold along both trajectories.
pub fn propagate_state_moduli(
    moduli: &StateModuli,
    horizon: usize,
) -> Result<Vec<ComparisonFunction>> {
    if horizon == 0 {
        return Err(Error::input("state moduli propagation needs horizon >= 1"));
    }
    moduli.alpha_x.validate()?;
    moduli.alpha_u.validate()?;
    let mut current = vec![moduli.alpha_u.clone()];
    for _ in 1..horizon {
        let mults = split_multipliers(current.len());
        let mut next: Vec<ComparisonFunction> = current
            .iter()
            .zip(&mults)
            .map(|(inner, &c)| {
                ComparisonFunction::compose(
                    moduli.alpha_x.clone(),
                    ComparisonFunction::scale_output(c, inner.clone()).expect("c > 0"),
                )
            })
            .collect();
        next.push(moduli.alpha_u.clone());
        current = next;
    }
    Ok(current)
}

/// Propagated moduli for the stage cost at the final step and for the
/// terminal cost.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagatedCostModuli {
    /// `stage[m]` bounds the influence of input deviation `m` on
    /// `l0(s(M-1), u(M-1), t)`; length `horizon`.
    pub stage: Vec<ComparisonFunction>,
    /// `terminal[m]` bounds the influence of input deviation `m` on
    /// `F(s(M), t)` for `m < horizon`. The list carries `horizon + 1`
    /// entries to match the declared interface; the final entry duplicates
    /// the last real modulus and is never paired with an input deviation
    /// (a length-M input sequence has only M components).
    pub terminal: Vec<ComparisonFunction>,
}

/// Horizon-`horizon` cost deviation moduli.
///
/// With `J[m] = stage[m]` the bound reads
/// `|l0(s_u(M-1), u(M-1), t) - l0(s_v(M-1), v(M-1), t)| <=
///  sum_{m<M} stage[m](d_U(u(m), v(m)))`, and with the terminal list
/// `|F(s_u(M), t) - F(s_v(M), t)| <= sum_{m<M} terminal[m](d_U(u(m), v(m)))`.
pub fn propagate_cost_moduli(
    state: &StateModuli,
    cost: &CostModuli,
    horizon: usize,
) -> Result<PropagatedCostModuli> {
    if horizon == 0 {
        return Err(Error::input("cost moduli propagation needs horizon >= 1"));
    }
    cost.gamma_x.validate()?;
    cost.gamma_u.validate()?;
    cost.gamma_n.validate()?;

    let stage = if horizon == 1 {
        vec![cost.gamma_u.clone()]
    } else {
        let inner = propagate_state_moduli(state, horizon - 1)?;
        let mults = split_multipliers(inner.len());
        let mut list: Vec<ComparisonFunction> = inner
            .iter()
            .zip(&mults)
            .map(|(f, &c)| {
                ComparisonFunction::compose(
                    cost.gamma_x.clone(),
                    ComparisonFunction::scale_output(c, f.clone()).expect("c > 0"),
                )
            })
            .collect();
        list.push(cost.gamma_u.clone());
        list
    };

    let state_full = propagate_state_moduli(state, horizon)?;
    let mults = split_multipliers(state_full.len());
    let mut terminal: Vec<ComparisonFunction> = state_full
        .iter()
        .zip(&mults)
        .map(|(f, &c)| {
            ComparisonFunction::compose(
                cost.gamma_n.clone(),
                ComparisonFunction::scale_output(c, f.clone()).expect("c > 0"),
            )
        })
        .collect();
    let pad = terminal.last().expect("horizon >= 1").clone();
    terminal.push(pad);

    Ok(PropagatedCostModuli { stage, terminal })
}
