//! Derivative-free simplex search over the stacked input.
//!
//! This is the fallback solver: it never differentiates the objective, so
//! it accepts every registered input penalty, including the discontinuous
//! threshold. Robustness against local traps comes from three layers that
//! all share one global iteration budget:
//!
//! - the coercivity anchor is always evaluated as a candidate, so the
//!   reported minimiser is never worse than the anchor;
//! - each start is polished with `restarts` fresh simplices around the
//!   incumbent;
//! - `seed_multistart` extra starts are drawn inside the coercivity
//!   sublevel ball of the anchor value (falling back to a unit box when no
//!   power-law witness is attached).
//!
//! Everything is deterministic for fixed options: starts come from
//! counter-mode streams of `seed`, and all comparisons use total order.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::measures::DiscreteMeasure;
use crate::problem::EnsembleProblem;
use crate::rng::stream_rng;
use crate::Error;

use super::{
    finish_report, search_region_from_coercivity, Objective, SolveReport, SublevelMonitor,
    Termination,
};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn default_max_iter() -> usize {
    5000
}

fn default_f_tol() -> f64 {
    1e-10
}

fn default_x_tol() -> f64 {
    1e-10
}

fn default_restarts() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    /// Global iteration budget shared by all starts and restarts.
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Simplex value spread below which a round counts as converged.
    #[serde(default = "default_f_tol")]
    pub f_tol: f64,
    /// Simplex coordinate spread below which a round counts as converged.
    #[serde(default = "default_x_tol")]
    pub x_tol: f64,
    /// Fresh simplices around the incumbent after each converged round.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Extra seeded starts beyond the primary one.
    #[serde(default)]
    pub seed_multistart: usize,
    #[serde(default)]
    pub seed: u64,
    /// Primary start (stacked); defaults to the input-penalty anchor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iter: default_max_iter(),
            f_tol: default_f_tol(),
            x_tol: default_x_tol(),
            restarts: default_restarts(),
            seed_multistart: 0,
            seed: 0,
            start: None,
        }
    }
}

impl NelderMeadOptions {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::input("max_iter must be at least 1"));
        }
        for (name, tol) in [("f_tol", self.f_tol), ("x_tol", self.x_tol)] {
            if !(tol > 0.0) || !tol.is_finite() {
                return Err(Error::input(format!(
                    "{name} must be positive and finite, got {tol}"
                )));
            }
        }
        if let Some(start) = &self.start {
            check_dim("start", start.len(), dim)?;
            if start.iter().any(|v| !v.is_finite()) {
                return Err(Error::input("start must be finite"));
            }
        }
        Ok(())
    }
}

/// Shared search state threaded through every simplex round.
struct Search<'a, 'b> {
    objective: &'b Objective<'a>,
    options: &'b NelderMeadOptions,
    iterations: usize,
    trace: Vec<f64>,
    best_z: Vec<f64>,
    best_f: f64,
    monitor: SublevelMonitor,
}

impl Search<'_, '_> {
    fn offer(&mut self, z: &[f64], f: f64) {
        if f < self.best_f {
            self.best_f = f;
            self.best_z = z.to_vec();
            self.monitor.observe(z, f);
        }
    }

    fn record_iteration(&mut self) {
        self.iterations += 1;
        if self.best_f.is_finite() {
            self.trace.push(self.best_f);
        }
    }

    fn budget_left(&self) -> bool {
        self.iterations < self.options.max_iter
    }

    /// One simplex life cycle from `center`. Returns whether both spread
    /// tolerances were met before the budget ran out.
    fn run_round(&mut self, center: &[f64]) -> bool {
        let dim = center.len();
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        let mut insert = |search: &mut Self, z: Vec<f64>| {
            let f = search.objective.eval(&z);
            search.offer(&z, f);
            simplex.push((z, f));
        };
        insert(self, center.to_vec());
        for j in 0..dim {
            let mut vertex = center.to_vec();
            vertex[j] += if vertex[j] != 0.0 {
                0.05 * vertex[j].abs()
            } else {
                0.25
            };
            insert(self, vertex);
        }

        while self.budget_left() {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let f_best = simplex[0].1;
            let f_worst = simplex[dim].1;
            let f_spread = f_worst - f_best;
            let x_spread = (0..dim)
                .map(|j| {
                    let coords = simplex.iter().map(|(z, _)| z[j]);
                    let lo = coords.clone().fold(f64::INFINITY, f64::min);
                    let hi = coords.fold(f64::NEG_INFINITY, f64::max);
                    hi - lo
                })
                .fold(0.0_f64, f64::max);
            if f_spread <= self.options.f_tol && x_spread <= self.options.x_tol {
                return true;
            }

            let centroid: Vec<f64> = (0..dim)
                .map(|j| simplex[..dim].iter().map(|(z, _)| z[j]).sum::<f64>() / dim as f64)
                .collect();
            let worst = simplex[dim].0.clone();
            let toward = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&worst)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            if centroid.iter().any(|v| !v.is_finite()) {
                // Degenerate vertex coordinates: only shrinking is safe.
                shrink(&mut simplex, self);
                self.record_iteration();
                continue;
            }

            let reflected = toward(REFLECT);
            let f_reflected = self.objective.eval(&reflected);
            self.offer(&reflected, f_reflected);

            if f_reflected < f_best {
                let expanded = toward(EXPAND);
                let f_expanded = self.objective.eval(&expanded);
                self.offer(&expanded, f_expanded);
                simplex[dim] = if f_expanded < f_reflected {
                    (expanded, f_expanded)
                } else {
                    (reflected, f_reflected)
                };
            } else if f_reflected < simplex[dim - 1].1 {
                simplex[dim] = (reflected, f_reflected);
            } else {
                let (contracted, reference) = if f_reflected < f_worst {
                    (toward(CONTRACT), f_reflected)
                } else {
                    (toward(-CONTRACT), f_worst)
                };
                let f_contracted = self.objective.eval(&contracted);
                self.offer(&contracted, f_contracted);
                if f_contracted < reference {
                    simplex[dim] = (contracted, f_contracted);
                } else {
                    shrink(&mut simplex, self);
                }
            }
            self.record_iteration();
        }
        false
    }
}

fn shrink(simplex: &mut [(Vec<f64>, f64)], search: &mut Search<'_, '_>) {
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let best = simplex[0].0.clone();
    for entry in simplex.iter_mut().skip(1) {
        for (v, b) in entry.0.iter_mut().zip(&best) {
            *v = b + SHRINK * (*v - b);
        }
        entry.1 = search.objective.eval(&entry.0);
        let z = entry.0.clone();
        search.offer(&z, entry.1);
    }
}

pub fn solve_nelder_mead(
    problem: &EnsembleProblem,
    mu: &DiscreteMeasure,
    options: &NelderMeadOptions,
) -> Result<SolveReport> {
    let objective = Objective::new(problem, mu)?;
    let dim = objective.dim();
    options.validate(dim)?;
    let anchor = objective.anchor();

    let mut search = Search {
        objective: &objective,
        options,
        iterations: 0,
        trace: Vec::new(),
        best_z: anchor.clone(),
        best_f: f64::INFINITY,
        monitor: SublevelMonitor::new(problem),
    };

    // The anchor is always a candidate: for anchored penalties it is the
    // one point the theory guarantees lies in every nonempty sublevel set.
    let f_anchor = search.objective.eval(&anchor);
    search.offer(&anchor, f_anchor);
    if f_anchor.is_finite() {
        search.trace.push(search.best_f);
    }

    let mut starts: Vec<Vec<f64>> = vec![options.start.clone().unwrap_or_else(|| anchor.clone())];
    if options.seed_multistart > 0 {
        let radius = problem
            .coercivity()
            .and_then(|witness| search_region_from_coercivity(problem, witness, f_anchor).ok())
            .map_or(1.0, |rho| rho.min(1e3));
        for k in 0..options.seed_multistart {
            let mut rng = stream_rng(options.seed, k as u64);
            let z: Vec<f64> = anchor
                .iter()
                .map(|a| a + rng.gen_range(-radius..=radius))
                .collect();
            starts.push(z);
        }
    }

    let mut any_converged = false;
    'starts: for start in &starts {
        let mut center = start.clone();
        for _round in 0..=options.restarts {
            if !search.budget_left() {
                break 'starts;
            }
            any_converged |= search.run_round(&center);
            center = search.best_z.clone();
        }
    }

    if !search.best_f.is_finite() {
        return Err(Error::numeric(
            "no candidate evaluated to a finite objective value".to_string(),
        ));
    }
    let termination = if any_converged {
        Termination::ToleranceMet
    } else {
        Termination::MaxIter
    };
    let z = search.best_z.clone();
    finish_report(
        problem,
        mu,
        &objective,
        &z,
        search.iterations,
        termination,
        search.trace,
        &search.monitor,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::ComparisonFunction;
    use crate::costs::{averaged_cost, CoercivityWitness, CostSpec, InputPenalty, StateCost, TerminalCost};
    use crate::ensemble::{ControlSequence, InitialStateMap, SystemFamily};
    use crate::solvers::tests::lq_problem;

    #[test]
    fn matches_the_exact_solver_on_the_two_atom_ensemble() {
        let problem = lq_problem(1);
        let mu = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let report = solve_nelder_mead(&problem, &mu, &NelderMeadOptions::default()).unwrap();
        assert!((report.value - 0.375).abs() <= 1e-6, "value {}", report.value);
        assert!(
            (report.minimiser.step(0)[0] + 0.25).abs() <= 1e-5,
            "minimiser {:?}",
            report.minimiser.step(0)
        );
        assert_eq!(report.termination, Termination::ToleranceMet);
        assert_eq!(report.sublevel_violations, 0);
    }

    #[test]
    fn threshold_penalty_returns_the_anchor_exactly() {
        let problem = EnsembleProblem::new(
            SystemFamily::scalar_linear(None),
            InitialStateMap::constant(vec![1.0]),
            CostSpec::new(
                InputPenalty::threshold(1.0, None).unwrap(),
                StateCost::zero(),
                TerminalCost::zero(),
            )
            .unwrap(),
            2,
        )
        .unwrap();
        let mu = DiscreteMeasure::dirac(vec![0.5]).unwrap();
        let options = NelderMeadOptions {
            start: Some(vec![0.7, -0.3]),
            ..NelderMeadOptions::default()
        };
        let report = solve_nelder_mead(&problem, &mu, &options).unwrap();
        assert_eq!(report.minimiser.to_flat(), vec![0.0, 0.0]);
        assert_eq!(report.value, 0.0);
    }

    #[test]
    fn descends_on_the_logistic_family() {
        let problem = EnsembleProblem::new(
            SystemFamily::logistic(None),
            InitialStateMap::constant(vec![0.5]),
            CostSpec::new(
                InputPenalty::power(0.1, 2.0, 2.0, None).unwrap(),
                StateCost::zero(),
                TerminalCost::quadratic(vec![vec![1.0]]).unwrap(),
            )
            .unwrap(),
            2,
        )
        .unwrap();
        let mu = DiscreteMeasure::new(vec![vec![2.5], vec![3.2]], vec![0.5, 0.5]).unwrap();
        let report = solve_nelder_mead(&problem, &mu, &NelderMeadOptions::default()).unwrap();
        let at_zero = averaged_cost(
            &problem,
            &ControlSequence::zeros(2, 1).unwrap(),
            &mu,
        )
        .unwrap();
        assert!(report.value < at_zero, "{} vs {}", report.value, at_zero);
        for pair in report.trace.windows(2) {
            assert!(pair[1] <= pair[0], "trace increased: {pair:?}");
        }
    }

    #[test]
    fn multistart_is_deterministic_and_respects_the_budget() {
        let witness = CoercivityWitness::new(
            ComparisonFunction::power(1.0, 2.0).unwrap(),
            vec![0.0],
        );
        let problem = lq_problem(2).with_coercivity(witness).unwrap();
        let mu = DiscreteMeasure::uniform_atoms(vec![vec![0.1], vec![0.9]]).unwrap();
        let options = NelderMeadOptions {
            seed_multistart: 3,
            seed: 7,
            max_iter: 400,
            ..NelderMeadOptions::default()
        };
        let first = solve_nelder_mead(&problem, &mu, &options).unwrap();
        let second = solve_nelder_mead(&problem, &mu, &options).unwrap();
        assert_eq!(first, second);
        assert!(first.iterations <= 400);
        assert_eq!(first.sublevel_violations, 0);
    }

    #[test]
    fn rejects_malformed_options() {
        let problem = lq_problem(1);
        let mu = DiscreteMeasure::dirac(vec![0.5]).unwrap();
        let zero_iter = NelderMeadOptions {
            max_iter: 0,
            ..NelderMeadOptions::default()
        };
        assert!(solve_nelder_mead(&problem, &mu, &zero_iter).is_err());
        let bad_start = NelderMeadOptions {
            start: Some(vec![0.0, 0.0]),
            ..NelderMeadOptions::default()
        };
        assert!(solve_nelder_mead(&problem, &mu, &bad_start).is_err());
    }
}
