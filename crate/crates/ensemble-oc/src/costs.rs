//! Cost evaluation: the `l = l_u + l0` stage split, per-system totals, and
//! the measure-averaged functional.
//!
//! Every total is accumulated in fixed ascending order (stage index, then
//! atom index), so results are bit-reproducible no matter how the per-atom
//! work is scheduled, and the decomposition
//! `total = total_without_input_penalty + sum of input penalties` holds
//! exactly, not just up to rounding.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::comparison::{ComparisonFunction, CostModuli};
use crate::ensemble::{ControlSequence, InitialStateMap};
use crate::error::{check_dim, Result};
use crate::exec;
use crate::measures::DiscreteMeasure;
use crate::problem::EnsembleProblem;
use crate::spaces::SpaceDescriptor;
use crate::Error;

/// Input-penalty registry: `l_u(u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputPenalty {
    /// `lambda * ||u - anchor||_p^q`; the anchor defaults to the origin.
    Power {
        lambda: f64,
        q: f64,
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        anchor: Option<Vec<f64>>,
    },
    /// `lambda * 1{u != anchor}`: lower semicontinuous but discontinuous,
    /// kept in the registry precisely to exercise semicontinuity beyond
    /// continuity.
    Threshold {
        lambda: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        anchor: Option<Vec<f64>>,
    },
    /// Sum of penalties, evaluated in order.
    Sum { terms: Vec<InputPenalty> },
    /// `lambda * 1{u == anchor}`: NOT lower semicontinuous. This exists so
    /// the semicontinuity checker has a genuine failing case; it is not
    /// part of the run-config schema.
    SpikeAtAnchor {
        lambda: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        anchor: Option<Vec<f64>>,
    },
}

fn check_anchor(anchor: &Option<Vec<f64>>) -> Result<()> {
    if let Some(a) = anchor {
        if a.is_empty() {
            return Err(Error::input("penalty anchor must have dimension >= 1"));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("penalty anchor must be finite"));
        }
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::input(format!(
            "penalty weight must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(())
}

impl InputPenalty {
    pub fn power(lambda: f64, q: f64, p: f64, anchor: Option<Vec<f64>>) -> Result<Self> {
        let penalty = InputPenalty::Power { lambda, q, p, anchor };
        penalty.validate()?;
        Ok(penalty)
    }

    pub fn threshold(lambda: f64, anchor: Option<Vec<f64>>) -> Result<Self> {
        let penalty = InputPenalty::Threshold { lambda, anchor };
        penalty.validate()?;
        Ok(penalty)
    }

    pub fn sum(terms: Vec<InputPenalty>) -> Result<Self> {
        let penalty = InputPenalty::Sum { terms };
        penalty.validate()?;
        Ok(penalty)
    }

    pub fn spike_at_anchor(lambda: f64, anchor: Option<Vec<f64>>) -> Result<Self> {
        let penalty = InputPenalty::SpikeAtAnchor { lambda, anchor };
        penalty.validate()?;
        Ok(penalty)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InputPenalty::Power { lambda, q, p, anchor } => {
                check_lambda(*lambda)?;
                if !q.is_finite() || *q <= 0.0 {
                    return Err(Error::input(format!(
                        "power penalty exponent must be positive, got {q}"
                    )));
                }
                if !p.is_finite() || *p < 1.0 {
                    return Err(Error::input(format!(
                        "power penalty norm order must satisfy p >= 1, got {p}"
                    )));
                }
                check_anchor(anchor)
            }
            InputPenalty::Threshold { lambda, anchor }
            | InputPenalty::SpikeAtAnchor { lambda, anchor } => {
                check_lambda(*lambda)?;
                check_anchor(anchor)
            }
            InputPenalty::Sum { terms } => {
                if terms.is_empty() {
                    return Err(Error::input("penalty sum must have at least one term"));
                }
                for t in terms {
                    t.validate()?;
                }
                Ok(())
            }
        }
    }

    pub fn check_dims(&self, input_dim: usize) -> Result<()> {
        match self {
            InputPenalty::Power { anchor, .. }
            | InputPenalty::Threshold { anchor, .. }
            | InputPenalty::SpikeAtAnchor { anchor, .. } => {
                if let Some(a) = anchor {
                    check_dim("penalty anchor", a.len(), input_dim)?;
                }
                Ok(())
            }
            InputPenalty::Sum { terms } => {
                for t in terms {
                    t.check_dims(input_dim)?;
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, u: &[f64]) -> Result<f64> {
        match self {
            InputPenalty::Power { lambda, q, p, anchor } => {
                let norm = anchored_p_norm(u, anchor, *p)?;
                let v = lambda * norm.powf(*q);
                if !v.is_finite() {
                    return Err(Error::numeric(format!(
                        "power penalty is non-finite at ||u - anchor|| = {norm}"
                    )));
                }
                Ok(v)
            }
            InputPenalty::Threshold { lambda, anchor } => {
                Ok(if at_anchor(u, anchor)? { 0.0 } else { *lambda })
            }
            InputPenalty::SpikeAtAnchor { lambda, anchor } => {
                Ok(if at_anchor(u, anchor)? { *lambda } else { 0.0 })
            }
            InputPenalty::Sum { terms } => {
                let mut acc = 0.0;
                for t in terms {
                    acc += t.eval(u)?;
                }
                Ok(acc)
            }
        }
    }

    /// The penalty's anchor, or the origin of `U` when none is declared.
    /// A sum has no single anchor and falls back to the origin.
    pub fn anchor_or_origin(&self, input_dim: usize) -> Vec<f64> {
        match self {
            InputPenalty::Power { anchor, .. }
            | InputPenalty::Threshold { anchor, .. }
            | InputPenalty::SpikeAtAnchor { anchor, .. } => {
                anchor.clone().unwrap_or_else(|| vec![0.0; input_dim])
            }
            InputPenalty::Sum { .. } => vec![0.0; input_dim],
        }
    }

    /// Whether the penalty is continuous everywhere (gradient-based solvers
    /// refuse discontinuous penalties).
    pub fn is_continuous(&self) -> bool {
        match self {
            InputPenalty::Power { .. } => true,
            InputPenalty::Threshold { .. } | InputPenalty::SpikeAtAnchor { .. } => false,
            InputPenalty::Sum { terms } => terms.iter().all(|t| t.is_continuous()),
        }
    }
}

fn anchored_p_norm(u: &[f64], anchor: &Option<Vec<f64>>, p: f64) -> Result<f64> {
    let diff: Vec<f64> = match anchor {
        Some(a) => {
            check_dim("penalty anchor", a.len(), u.len())?;
            u.iter().zip(a).map(|(x, y)| x - y).collect()
        }
        None => u.to_vec(),
    };
    Ok(if p == 2.0 {
        diff.iter().map(|v| v * v).sum::<f64>().sqrt()
    } else if p == 1.0 {
        diff.iter().map(|v| v.abs()).sum()
    } else {
        diff.iter()
            .map(|v| v.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    })
}

fn at_anchor(u: &[f64], anchor: &Option<Vec<f64>>) -> Result<bool> {
    match anchor {
        Some(a) => {
            check_dim("penalty anchor", a.len(), u.len())?;
            Ok(u.iter().zip(a).all(|(x, y)| x == y))
        }
        None => Ok(u.iter().all(|v| *v == 0.0)),
    }
}

/// Validates that `m` (given as rows) is square of size `n`, symmetric, and
/// positive semidefinite; returns nothing but the guarantee.
fn check_psd(name: &str, m: &[Vec<f64>]) -> Result<()> {
    let n = m.len();
    if n == 0 {
        return Err(Error::input(format!("{name} must be a non-empty square matrix")));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(Error::input(format!(
                "{name} row {i} has {} entries, expected {n}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::input(format!("{name} must have finite entries")));
        }
    }
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[i][j] - m[j][i]).abs() > 1e-12 * scale {
                return Err(Error::input(format!("{name} must be symmetric")));
            }
        }
    }
    let flat: Vec<f64> = m.iter().flatten().copied().collect();
    let mat = DMatrix::from_row_slice(n, n, &flat);
    let sym = (&mat + mat.transpose()) * 0.5;
    let eigen = sym.symmetric_eigen();
    let min = eigen.eigenvalues.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    if min < -1e-9 * scale {
        return Err(Error::input(format!(
            "{name} must be positive semidefinite (smallest eigenvalue {min})"
        )));
    }
    Ok(())
}

/// Quadratic form `r' M r` in fixed row-major order, clamped at zero: for a
/// validated PSD matrix a negative result can only be rounding noise.
fn quadratic_form(m: &[Vec<f64>], r: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, q) in row.iter().enumerate() {
            acc += r[i] * q * r[j];
        }
    }
    acc.max(0.0)
}

/// State-dependent stage cost registry: `l0(x, u, theta)` (no registry
/// entry reads `u`; the split already routes input dependence through
/// `l_u`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateCost {
    Zero,
    /// `(x - x_ref(theta))' Q (x - x_ref(theta))` with `Q` PSD.
    QuadraticTracking {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        xref: InitialStateMap,
    },
}

impl StateCost {
    pub fn zero() -> Self {
        StateCost::Zero
    }

    pub fn quadratic_tracking(q: Vec<Vec<f64>>, xref: InitialStateMap) -> Result<Self> {
        let cost = StateCost::QuadraticTracking { q, xref };
        cost.validate()?;
        Ok(cost)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StateCost::Zero => Ok(()),
            StateCost::QuadraticTracking { q, .. } => check_psd("tracking weight Q", q),
        }
    }

    pub fn check_dims(&self, state_dim: usize, theta_dim: usize) -> Result<()> {
        match self {
            StateCost::Zero => Ok(()),
            StateCost::QuadraticTracking { q, xref } => {
                check_dim("tracking weight Q", q.len(), state_dim)?;
                xref.check_dims(theta_dim, state_dim)
            }
        }
    }

    pub fn eval(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        match self {
            StateCost::Zero => Ok(0.0),
            StateCost::QuadraticTracking { q, xref } => {
                check_dim("state", x.len(), q.len())?;
                let reference = xref.eval(theta, x.len())?;
                let r: Vec<f64> = x.iter().zip(&reference).map(|(a, b)| a - b).collect();
                let v = quadratic_form(q, &r);
                if !v.is_finite() {
                    return Err(Error::numeric("tracking cost is non-finite".to_string()));
                }
                Ok(v)
            }
        }
    }
}

/// Terminal cost registry: `F_N(x, theta)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalCost {
    Zero,
    /// `x' P x` with `P` PSD.
    Quadratic {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
    },
}

impl TerminalCost {
    pub fn zero() -> Self {
        TerminalCost::Zero
    }

    pub fn quadratic(p: Vec<Vec<f64>>) -> Result<Self> {
        let cost = TerminalCost::Quadratic { p };
        cost.validate()?;
        Ok(cost)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TerminalCost::Zero => Ok(()),
            TerminalCost::Quadratic { p } => check_psd("terminal weight P", p),
        }
    }

    pub fn check_dims(&self, state_dim: usize) -> Result<()> {
        match self {
            TerminalCost::Zero => Ok(()),
            TerminalCost::Quadratic { p } => check_dim("terminal weight P", p.len(), state_dim),
        }
    }

    pub fn eval(&self, x: &[f64], _theta: &[f64]) -> Result<f64> {
        match self {
            TerminalCost::Zero => Ok(0.0),
            TerminalCost::Quadratic { p } => {
                check_dim("terminal state", x.len(), p.len())?;
                let v = quadratic_form(p, x);
                if !v.is_finite() {
                    return Err(Error::numeric("terminal cost is non-finite".to_string()));
                }
                Ok(v)
            }
        }
    }
}

/// Complete cost specification with optional declared continuity moduli.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    ell_u: InputPenalty,
    ell0: StateCost,
    terminal: TerminalCost,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    declared_moduli: Option<CostModuli>,
}

impl CostSpec {
    pub fn new(ell_u: InputPenalty, ell0: StateCost, terminal: TerminalCost) -> Result<Self> {
        ell_u.validate()?;
        ell0.validate()?;
        terminal.validate()?;
        Ok(CostSpec {
            ell_u,
            ell0,
            terminal,
            declared_moduli: None,
        })
    }

    pub fn with_declared_moduli(mut self, moduli: CostModuli) -> Result<Self> {
        moduli.gamma_x.validate()?;
        moduli.gamma_u.validate()?;
        moduli.gamma_n.validate()?;
        self.declared_moduli = Some(moduli);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.ell_u.validate()?;
        self.ell0.validate()?;
        self.terminal.validate()?;
        if let Some(m) = &self.declared_moduli {
            m.gamma_x.validate()?;
            m.gamma_u.validate()?;
            m.gamma_n.validate()?;
        }
        Ok(())
    }

    pub fn check_dims(&self, state_dim: usize, input_dim: usize, theta_dim: usize) -> Result<()> {
        self.ell_u.check_dims(input_dim)?;
        self.ell0.check_dims(state_dim, theta_dim)?;
        self.terminal.check_dims(state_dim)
    }

    pub fn ell_u(&self) -> &InputPenalty {
        &self.ell_u
    }

    pub fn ell0(&self) -> &StateCost {
        &self.ell0
    }

    pub fn terminal(&self) -> &TerminalCost {
        &self.terminal
    }

    pub fn declared_moduli(&self) -> Option<&CostModuli> {
        self.declared_moduli.as_ref()
    }
}

/// `l(x, u, theta) = l_u(u) + l0(x, u, theta)`; the addends are available
/// separately through [`CostSpec::ell_u`] and [`CostSpec::ell0`].
pub fn stage_cost(spec: &CostSpec, x: &[f64], u: &[f64], theta: &[f64]) -> Result<f64> {
    let pu = spec.ell_u.eval(u)?;
    let l0 = spec.ell0.eval(x, theta)?;
    let v = pu + l0;
    if !v.is_finite() {
        return Err(Error::numeric(format!("stage cost is non-finite ({pu} + {l0})")));
    }
    Ok(v)
}

/// Every term of one system's total cost, kept separately for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct CostBreakdown {
    /// `J_N`: total including input penalties.
    pub total: f64,
    /// `J_N^0`: stage state costs plus terminal cost only.
    pub without_input_penalty: f64,
    /// `sum_n l_u(u(n))`.
    pub input_penalty_sum: f64,
    /// `l0(s(n), u(n), theta)` per stage.
    pub stage_state: Vec<f64>,
    /// `l_u(u(n))` per stage.
    pub stage_input: Vec<f64>,
    /// `F_N(s(N), theta)`.
    pub terminal: f64,
}

/// Rolls the system out under `u` and accumulates all cost terms.
///
/// Reduction order is fixed: stage state costs ascending in `n`, then the
/// terminal cost (giving `without_input_penalty`), then input penalties
/// ascending in `n`, and finally `total = without_input_penalty +
/// input_penalty_sum`. The decomposition identity is therefore exact.
pub fn cost_breakdown(
    problem: &EnsembleProblem,
    u: &ControlSequence,
    theta: &[f64],
) -> Result<CostBreakdown> {
    check_dim("control horizon", u.horizon(), problem.horizon())?;
    check_dim("control input", u.input_dim(), problem.input_dim())?;
    check_dim("theta", theta.len(), problem.theta_dim())?;
    let trajectory = problem.system().rollout(problem.x0_map(), u, theta)?;
    let spec = problem.cost();

    let horizon = problem.horizon();
    let mut stage_state = Vec::with_capacity(horizon);
    let mut stage_input = Vec::with_capacity(horizon);
    for n in 0..horizon {
        stage_state.push(spec.ell0.eval(trajectory.state(n), theta)?);
        stage_input.push(spec.ell_u.eval(u.step(n))?);
    }
    let terminal = spec.terminal.eval(trajectory.final_state(), theta)?;

    let mut without_input_penalty = 0.0;
    for v in &stage_state {
        without_input_penalty += v;
    }
    without_input_penalty += terminal;
    let mut input_penalty_sum = 0.0;
    for v in &stage_input {
        input_penalty_sum += v;
    }
    let total = without_input_penalty + input_penalty_sum;
    if !total.is_finite() {
        return Err(Error::numeric(format!("total cost is non-finite ({total})")));
    }
    Ok(CostBreakdown {
        total,
        without_input_penalty,
        input_penalty_sum,
        stage_state,
        stage_input,
        terminal,
    })
}

/// `J_N(x0(theta), u, theta)`.
pub fn total_cost(problem: &EnsembleProblem, u: &ControlSequence, theta: &[f64]) -> Result<f64> {
    Ok(cost_breakdown(problem, u, theta)?.total)
}

/// `J_N^0`: the total with the input-penalty sum omitted.
pub fn total_cost_without_input_penalty(
    problem: &EnsembleProblem,
    u: &ControlSequence,
    theta: &[f64],
) -> Result<f64> {
    Ok(cost_breakdown(problem, u, theta)?.without_input_penalty)
}

fn tag_atom(index: usize, e: Error) -> Error {
    match e {
        Error::Input(m) => Error::Input(format!("atom {index}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("atom {index}: {m}")),
        Error::Unsupported(m) => Error::Unsupported(format!("atom {index}: {m}")),
    }
}

/// `J_N` per atom of `mu`, in atom order. Atoms may be evaluated
/// concurrently; the returned order is always the measure's.
pub fn per_atom_costs(
    problem: &EnsembleProblem,
    u: &ControlSequence,
    mu: &DiscreteMeasure,
) -> Result<Vec<f64>> {
    check_dim("measure atoms", mu.dimension(), problem.theta_dim())?;
    let evaluated = exec::ordered_map(mu.atoms(), |theta| total_cost(problem, u, theta));
    evaluated
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| tag_atom(i, e)))
        .collect()
}

/// The averaged functional `sum_i w_i J_N(x0(theta_i), u, theta_i)`,
/// reduced in fixed atom order.
pub fn averaged_cost(
    problem: &EnsembleProblem,
    u: &ControlSequence,
    mu: &DiscreteMeasure,
) -> Result<f64> {
    let costs = per_atom_costs(problem, u, mu)?;
    let mut acc = 0.0;
    for (w, c) in mu.weights().iter().zip(&costs) {
        acc += w * c;
    }
    if !acc.is_finite() {
        return Err(Error::numeric(format!("averaged cost is non-finite ({acc})")));
    }
    Ok(acc)
}

/// Certificate that the input penalty dominates a comparison function of
/// the distance to an anchor: `l_u(u) >= r(d_U(u, anchor))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoercivityWitness {
    pub r: ComparisonFunction,
    pub anchor: Vec<f64>,
}

impl CoercivityWitness {
    pub fn new(r: ComparisonFunction, anchor: Vec<f64>) -> Self {
        CoercivityWitness { r, anchor }
    }

    pub fn check_dims(&self, input_dim: usize) -> Result<()> {
        self.r.validate()?;
        check_dim("coercivity anchor", self.anchor.len(), input_dim)
    }

    /// `r(d)` for a single stage's distance to the anchor.
    pub fn stage_bound(&self, distance: f64) -> Result<f64> {
        self.r.eval(distance)
    }

    /// `sum_n r(d_U(u(n), anchor))`: the certified lower bound on any total
    /// cost that satisfies the witness stage-wise.
    pub fn sequence_lower_bound(
        &self,
        u: &ControlSequence,
        input_space: &SpaceDescriptor,
    ) -> Result<f64> {
        let mut acc = 0.0;
        for n in 0..u.horizon() {
            acc += self.r.eval(input_space.distance(u.step(n), &self.anchor)?)?;
        }
        Ok(acc)
    }

    /// Radius `rho` such that any sequence with total cost `<= c` keeps
    /// every entry within `rho` of the anchor (since each stage bound alone
    /// is below the total).
    pub fn sublevel_radius(&self, c: f64) -> Result<f64> {
        self.r.inverse(c)
    }
}
