//! Finite-difference gradient descent with Armijo backtracking.
//!
//! Central differences at scale `h * (1 + |z_j|)` approximate the gradient,
//! a Barzilai-Borwein step seeds the line search, and Armijo backtracking
//! guarantees monotone decrease. Discontinuous input penalties are refused
//! up front: a difference quotient across a jump is not a gradient, and
//! silently descending on one would report garbage with a straight face.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::measures::DiscreteMeasure;
use crate::problem::EnsembleProblem;
use crate::Error;

use super::{finish_report, Objective, SolveReport, SublevelMonitor, Termination};

fn default_max_iter() -> usize {
    1000
}

fn default_h() -> f64 {
    1e-6
}

fn default_armijo_c() -> f64 {
    1e-4
}

fn default_backtrack_beta() -> f64 {
    0.5
}

fn default_g_tol() -> f64 {
    1e-8
}

fn default_max_backtracks() -> usize {
    60
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdGradientOptions {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Base difference scale; coordinate `j` uses `h * (1 + |z_j|)`.
    #[serde(default = "default_h")]
    pub h: f64,
    /// Armijo sufficient-decrease constant.
    #[serde(default = "default_armijo_c")]
    pub armijo_c: f64,
    /// Step shrink factor per backtrack.
    #[serde(default = "default_backtrack_beta")]
    pub backtrack_beta: f64,
    /// Gradient norm below which the solve stops as converged.
    #[serde(default = "default_g_tol")]
    pub g_tol: f64,
    /// Line-search attempts after the first before declaring stagnation.
    #[serde(default = "default_max_backtracks")]
    pub max_backtracks: usize,
    /// Start point (stacked); defaults to the input-penalty anchor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
}

impl Default for FdGradientOptions {
    fn default() -> Self {
        FdGradientOptions {
            max_iter: default_max_iter(),
            h: default_h(),
            armijo_c: default_armijo_c(),
            backtrack_beta: default_backtrack_beta(),
            g_tol: default_g_tol(),
            max_backtracks: default_max_backtracks(),
            start: None,
        }
    }
}

impl FdGradientOptions {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::input("max_iter must be at least 1"));
        }
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::input(format!(
                "difference scale h must be positive and finite, got {}",
                self.h
            )));
        }
        for (name, v) in [
            ("armijo_c", self.armijo_c),
            ("backtrack_beta", self.backtrack_beta),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::input(format!(
                    "{name} must lie strictly between 0 and 1, got {v}"
                )));
            }
        }
        if !(self.g_tol >= 0.0) || !self.g_tol.is_finite() {
            return Err(Error::input(format!(
                "g_tol must be nonnegative and finite, got {}",
                self.g_tol
            )));
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

/// Central-difference gradient. Evaluation failures propagate: a point
/// whose neighbourhood is not evaluable has no trustworthy gradient.
fn fd_gradient(objective: &Objective<'_>, z: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut gradient = vec![0.0; z.len()];
    let mut probe = z.to_vec();
    for j in 0..z.len() {
        let hj = h * (1.0 + z[j].abs());
        probe[j] = z[j] + hj;
        let above = objective.eval_strict(&probe)?;
        probe[j] = z[j] - hj;
        let below = objective.eval_strict(&probe)?;
        probe[j] = z[j];
        gradient[j] = (above - below) / (2.0 * hj);
        if !gradient[j].is_finite() {
            return Err(Error::numeric(format!(
                "difference quotient in coordinate {j} is not finite"
            )));
        }
    }
    Ok(gradient)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn solve_fd_gradient(
    problem: &EnsembleProblem,
    mu: &DiscreteMeasure,
    options: &FdGradientOptions,
) -> Result<SolveReport> {
    if !problem.cost().ell_u().is_continuous() {
        return Err(Error::unsupported(
            "finite differences need a continuous input penalty; use the nelder_mead solver for discontinuous penalties",
        ));
    }
    let objective = Objective::new(problem, mu)?;
    options.validate(objective.dim())?;
    let mut monitor = SublevelMonitor::new(problem);

    let mut z = options.start.clone().unwrap_or_else(|| objective.anchor());
    let mut value = objective.eval_strict(&z)?;
    if !value.is_finite() {
        return Err(Error::numeric(
            "objective is not finite at the start point".to_string(),
        ));
    }
    monitor.observe(&z, value);
    let mut trace = vec![value];

    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut termination = Termination::MaxIter;

    while iterations < options.max_iter {
        let gradient = fd_gradient(&objective, &z, options.h)?;
        let g_norm = norm(&gradient);
        if g_norm <= options.g_tol {
            termination = Termination::ToleranceMet;
            break;
        }

        // BB2 step from the last accepted move; scale-free fallback first.
        let fallback = 1.0 / (1.0 + g_norm);
        let step = match &previous {
            Some((z_prev, g_prev)) => {
                let mut sy = 0.0;
                let mut yy = 0.0;
                for j in 0..z.len() {
                    let s = z[j] - z_prev[j];
                    let y = gradient[j] - g_prev[j];
                    sy += s * y;
                    yy += y * y;
                }
                if yy > 0.0 && sy.abs().is_finite() {
                    (sy.abs() / yy).clamp(1e-12, 1e12)
                } else {
                    fallback
                }
            }
            None => fallback,
        };

        let mut t = step;
        let mut accepted = None;
        for _ in 0..=options.max_backtracks {
            let candidate: Vec<f64> = z
                .iter()
                .zip(&gradient)
                .map(|(zi, gi)| zi - t * gi)
                .collect();
            let f_candidate = objective.eval(&candidate);
            if f_candidate <= value - options.armijo_c * t * g_norm * g_norm {
                accepted = Some((candidate, f_candidate));
                break;
            }
            t *= options.backtrack_beta;
        }
        iterations += 1;

        match accepted {
            Some((next, f_next)) => {
                previous = Some((z, gradient));
                z = next;
                value = f_next;
                monitor.observe(&z, value);
                trace.push(value);
            }
            None => {
                termination = Termination::Stagnation;
                break;
            }
        }
    }

    finish_report(
        problem,
        mu,
        &objective,
        &z,
        iterations,
        termination,
        trace,
        &monitor,
    )
}
