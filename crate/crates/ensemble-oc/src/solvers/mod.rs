//! Minimisation of `u -> averaged_cost(problem, u, mu)` over the stacked
//! input space `R^(N*m)`.
//!
//! Three solvers with different contracts:
//! - [`solve_lq_exact`]: closed-form global minimiser for linear families
//!   with quadratic costs; the oracle the iterative solvers are tested
//!   against.
//! - [`solve_nelder_mead`]: derivative-free, works for every registered
//!   penalty including the discontinuous threshold.
//! - [`solve_fd_gradient`]: finite-difference gradient descent with Armijo
//!   backtracking; refuses discontinuous penalties.
//!
//! All solvers re-evaluate the objective at the returned minimiser, so
//! `report.value` is always a fresh `averaged_cost` result, and all are
//! deterministic given their options.

pub mod fd_gradient;
pub mod lq;
pub mod nelder_mead;

pub use fd_gradient::{solve_fd_gradient, FdGradientOptions};
pub use lq::{assemble_lq, solve_lq_exact, LqQuadratic};
pub use nelder_mead::{solve_nelder_mead, NelderMeadOptions};

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::comparison::ComparisonFunction;
use crate::costs::{averaged_cost, CoercivityWitness};
use crate::ensemble::ControlSequence;
use crate::error::Result;
use crate::measures::DiscreteMeasure;
use crate::problem::EnsembleProblem;
use crate::Error;

/// Why a solver stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ToleranceMet,
    MaxIter,
    Stagnation,
}

/// Everything a solve produced, including instrumentation counters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub minimiser: ControlSequence,
    /// `averaged_cost` re-evaluated at `minimiser` on return.
    pub value: f64,
    pub iterations: usize,
    pub objective_evaluations: usize,
    pub termination: Termination,
    /// Best value seen after each iteration; non-increasing.
    pub trace: Vec<f64>,
    /// Objective evaluations that raised a numeric error and were treated
    /// as +infinity.
    pub rejected_evaluations: usize,
    /// Whether the exact solver fell back to Tikhonov regularisation.
    pub regularised: bool,
    /// Accepted iterates that escaped the coercivity sublevel radius for
    /// their own value (0 whenever a power-law witness is attached and the
    /// theory holds).
    pub sublevel_violations: usize,
}

/// Solver selection for config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverConfig {
    LqExact,
    NelderMead(NelderMeadOptions),
    FdGradient(FdGradientOptions),
}

impl SolverConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SolverConfig::LqExact => "lq_exact",
            SolverConfig::NelderMead(_) => "nelder_mead",
            SolverConfig::FdGradient(_) => "fd_gradient",
        }
    }
}

/// Dispatches to the selected solver.
pub fn solve(
    problem: &EnsembleProblem,
    mu: &DiscreteMeasure,
    config: &SolverConfig,
) -> Result<SolveReport> {
    match config {
        SolverConfig::LqExact => solve_lq_exact(problem, mu),
        SolverConfig::NelderMead(options) => solve_nelder_mead(problem, mu, options),
        SolverConfig::FdGradient(options) => solve_fd_gradient(problem, mu, options),
    }
}

/// Radius `rho(t) = r^{-1}(t)`: every `u` with averaged cost below `t`
/// keeps each entry within `rho(t)` of the witness anchor, because the
/// stage-wise coercivity bound alone already exceeds `t` outside.
///
/// Only power-law witnesses invert in closed form; anything else is
/// unsupported here (the generic bisection inverse lives on
/// [`ComparisonFunction::inverse`]).
pub fn search_region_from_coercivity(
    problem: &EnsembleProblem,
    witness: &CoercivityWitness,
    level: f64,
) -> Result<f64> {
    witness.check_dims(problem.input_dim())?;
    if !(level > 0.0) || !level.is_finite() {
        return Err(Error::input(format!(
            "sublevel value must be positive and finite, got {level}"
        )));
    }
    match &witness.r {
        ComparisonFunction::Pow { c, q } => Ok((level / c).powf(1.0 / q)),
        _ => Err(Error::unsupported(
            "search region needs a power-law coercivity witness with a closed-form inverse",
        )),
    }
}

/// The stacked objective `z -> averaged_cost(problem, from_flat(z), mu)`
/// with evaluation counters shared across a solve.
pub(crate) struct Objective<'a> {
    problem: &'a EnsembleProblem,
    mu: &'a DiscreteMeasure,
    input_dim: usize,
    horizon: usize,
    evaluations: Cell<usize>,
    rejected: Cell<usize>,
}

impl<'a> Objective<'a> {
    pub fn new(problem: &'a EnsembleProblem, mu: &'a DiscreteMeasure) -> Result<Self> {
        crate::error::check_dim("measure atoms", mu.dimension(), problem.theta_dim())?;
        Ok(Objective {
            problem,
            mu,
            input_dim: problem.input_dim(),
            horizon: problem.horizon(),
            evaluations: Cell::new(0),
            rejected: Cell::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.horizon * self.input_dim
    }

    /// The stacked coercivity anchor (default starting point).
    pub fn anchor(&self) -> Vec<f64> {
        let per_step = self.problem.input_anchor();
        let mut z = Vec::with_capacity(self.dim());
        for _ in 0..self.horizon {
            z.extend_from_slice(&per_step);
        }
        z
    }

    pub fn eval_strict(&self, z: &[f64]) -> Result<f64> {
        self.evaluations.set(self.evaluations.get() + 1);
        let u = ControlSequence::from_flat(z, self.input_dim)?;
        averaged_cost(self.problem, &u, self.mu)
    }

    /// Evaluation with numeric failures mapped to +infinity (and counted),
    /// the contract iterative solvers need to reject bad vertices.
    pub fn eval(&self, z: &[f64]) -> f64 {
        match self.eval_strict(z) {
            Ok(v) => v,
            Err(_) => {
                self.rejected.set(self.rejected.get() + 1);
                f64::INFINITY
            }
        }
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.get()
    }

    pub fn rejected(&self) -> usize {
        self.rejected.get()
    }
}

/// Watches accepted iterates: with a power-law witness `r = C s^q`, any
/// iterate of value `t` must keep all entries within `(t/C)^(1/q)` of the
/// anchor.
pub(crate) struct SublevelMonitor {
    law: Option<(f64, f64)>,
    anchor: Vec<f64>,
    input_dim: usize,
    pub violations: usize,
}

impl SublevelMonitor {
    pub fn new(problem: &EnsembleProblem) -> Self {
        let law = problem.coercivity().and_then(|w| match &w.r {
            ComparisonFunction::Pow { c, q } => Some((*c, *q)),
            _ => None,
        });
        let anchor = problem
            .coercivity()
            .map(|w| w.anchor.clone())
            .unwrap_or_else(|| problem.input_anchor());
        SublevelMonitor {
            law,
            anchor,
            input_dim: problem.input_dim(),
            violations: 0,
        }
    }

    pub fn observe(&mut self, z: &[f64], value: f64) {
        let Some((c, q)) = self.law else { return };
        if !value.is_finite() {
            return;
        }
        let rho = (value.max(0.0) / c).powf(1.0 / q);
        for step in z.chunks(self.input_dim) {
            let dist = step
                .iter()
                .zip(&self.anchor)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist > rho * (1.0 + 1e-9) + 1e-12 {
                self.violations += 1;
            }
        }
    }
}

/// Finishes a solve: rebuilds the sequence, re-evaluates the objective at
/// it, and assembles the report.
pub(crate) fn finish_report(
    problem: &EnsembleProblem,
    mu: &DiscreteMeasure,
    objective: &Objective<'_>,
    z: &[f64],
    iterations: usize,
    termination: Termination,
    trace: Vec<f64>,
    monitor: &SublevelMonitor,
) -> Result<SolveReport> {
    let minimiser = ControlSequence::from_flat(z, problem.input_dim())?;
    let value = averaged_cost(problem, &minimiser, mu)?;
    Ok(SolveReport {
        minimiser,
        value,
        iterations,
        objective_evaluations: objective.evaluations(),
        termination,
        trace,
        rejected_evaluations: objective.rejected(),
        regularised: false,
        sublevel_violations: monitor.violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{CostSpec, InputPenalty, StateCost, TerminalCost};
    use crate::ensemble::{InitialStateMap, SystemFamily};

    pub(super) fn lq_problem(horizon: usize) -> EnsembleProblem {
        EnsembleProblem::new(
            SystemFamily::scalar_linear(None),
            InitialStateMap::constant(vec![1.0]),
            CostSpec::new(
                InputPenalty::power(1.0, 2.0, 2.0, None).unwrap(),
                StateCost::zero(),
                TerminalCost::quadratic(vec![vec![1.0]]).unwrap(),
            )
            .unwrap(),
            horizon,
        )
        .unwrap()
    }

    #[test]
    fn search_region_examples() {
        let problem = lq_problem(1);
        let unit = CoercivityWitness::new(ComparisonFunction::power(1.0, 2.0).unwrap(), vec![0.0]);
        assert_eq!(search_region_from_coercivity(&problem, &unit, 1.0).unwrap(), 1.0);
        let double =
            CoercivityWitness::new(ComparisonFunction::power(2.0, 2.0).unwrap(), vec![0.0]);
        assert_eq!(search_region_from_coercivity(&problem, &double, 8.0).unwrap(), 2.0);
    }

    #[test]
    fn search_region_rejects_composite_witnesses_and_bad_levels() {
        let problem = lq_problem(1);
        let composite = CoercivityWitness::new(
            ComparisonFunction::sum(vec![
                ComparisonFunction::identity(),
                ComparisonFunction::power(1.0, 2.0).unwrap(),
            ])
            .unwrap(),
            vec![0.0],
        );
        assert!(matches!(
            search_region_from_coercivity(&problem, &composite, 1.0),
            Err(Error::Unsupported(_))
        ));
        let unit = CoercivityWitness::new(ComparisonFunction::power(1.0, 2.0).unwrap(), vec![0.0]);
        assert!(search_region_from_coercivity(&problem, &unit, 0.0).is_err());
        assert!(search_region_from_coercivity(&problem, &unit, f64::INFINITY).is_err());
    }

    #[test]
    fn objective_counts_rejections() {
        let problem = lq_problem(1);
        let mu = DiscreteMeasure::dirac(vec![0.5]).unwrap();
        let obj = Objective::new(&problem, &mu).unwrap();
        assert_eq!(obj.dim(), 1);
        assert_eq!(obj.eval(&[0.0]), 0.25);
        assert!(obj.eval(&[1e200]).is_infinite());
        assert_eq!(obj.evaluations(), 2);
        assert_eq!(obj.rejected(), 1);
    }

    #[test]
    fn solver_config_serde() {
        let nm: SolverConfig = serde_json::from_str(
            r#"{"kind":"nelder_mead","max_iter":5000,"f_tol":1e-10,"seed_multistart":3}"#,
        )
        .unwrap();
        match &nm {
            SolverConfig::NelderMead(o) => {
                assert_eq!(o.max_iter, 5000);
                assert_eq!(o.f_tol, 1e-10);
                assert_eq!(o.seed_multistart, 3);
                assert_eq!(o.x_tol, 1e-10);
                assert_eq!(o.restarts, 1);
            }
            _ => panic!("wrong variant"),
        }
        assert_eq!(nm.kind_name(), "nelder_mead");
        let lq: SolverConfig = serde_json::from_str(r#"{"kind":"lq_exact"}"#).unwrap();
        assert_eq!(lq, SolverConfig::LqExact);
        let fd: SolverConfig = serde_json::from_str(r#"{"kind":"fd_gradient"}"#).unwrap();
        match &fd {
            SolverConfig::FdGradient(o) => {
                assert_eq!(o.g_tol, 1e-8);
                assert_eq!(o.armijo_c, 1e-4);
            }
            _ => panic!("wrong variant"),
        }
    }
}
