//! Exact solver for linear-quadratic ensembles.
//!
//! For a linear family, quadratic state/terminal costs, and the squared
//! Euclidean input penalty, every trajectory is affine in the stacked input
//! `z = (u(0); ..; u(N-1))`, so the averaged objective is one
//! positive-semidefinite quadratic `z' H z + 2 g' z + c`. Its global
//! minimiser solves `H z = -g` by convexity; a Tikhonov fallback keeps
//! degenerate ensembles (singular `H`) well-posed with the minimum-norm
//! solution.

use nalgebra::{DMatrix, DVector};

use crate::costs::{averaged_cost, InputPenalty, StateCost, TerminalCost};
use crate::ensemble::ControlSequence;
use crate::error::Result;
use crate::measures::DiscreteMeasure;
use crate::problem::EnsembleProblem;
use crate::Error;

use super::{SolveReport, SublevelMonitor, Termination};

/// The assembled objective `z' h z + 2 g' z + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct LqQuadratic {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: f64,
}

impl LqQuadratic {
    pub fn value(&self, z: &DVector<f64>) -> f64 {
        (z.transpose() * &self.h * z)[(0, 0)] + 2.0 * self.g.dot(z) + self.c
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        (&self.h * z + &self.g) * 2.0
    }
}

struct QuadraticPieces<'a> {
    lambda: f64,
    penalty_anchor: Vec<f64>,
    tracking: Option<(DMatrix<f64>, &'a crate::ensemble::InitialStateMap)>,
    terminal: Option<DMatrix<f64>>,
}

/// Validates the problem is LQ and extracts the weight matrices.
fn quadratic_pieces(problem: &EnsembleProblem) -> Result<QuadraticPieces<'_>> {
    let cost = problem.cost();
    let (lambda, penalty_anchor) = match cost.ell_u() {
        InputPenalty::Power { lambda, q, p, anchor } if *q == 2.0 && *p == 2.0 => (
            *lambda,
            anchor.clone().unwrap_or_else(|| vec![0.0; problem.input_dim()]),
        ),
        other => {
            return Err(Error::unsupported(format!(
                "exact LQ solve needs the squared Euclidean input penalty, got {other:?}"
            )))
        }
    };
    let tracking = match cost.ell0() {
        StateCost::Zero => None,
        StateCost::QuadraticTracking { q, xref } => {
            let n = q.len();
            let flat: Vec<f64> = q.iter().flatten().copied().collect();
            Some((DMatrix::from_row_slice(n, n, &flat), xref))
        }
    };
    let terminal = match cost.terminal() {
        TerminalCost::Zero => None,
        TerminalCost::Quadratic { p } => {
            let n = p.len();
            let flat: Vec<f64> = p.iter().flatten().copied().collect();
            Some(DMatrix::from_row_slice(n, n, &flat))
        }
    };
    Ok(QuadraticPieces {
        lambda,
        penalty_anchor,
        tracking,
        terminal,
    })
}

/// Adds `w * (m z + d)' weight (m z + d)` to the accumulators.
fn accumulate_term(
    h: &mut DMatrix<f64>,
    g: &mut DVector<f64>,
    c: &mut f64,
    w: f64,
    m: &DMatrix<f64>,
    d: &DVector<f64>,
    weight: &DMatrix<f64>,
) {
    let wm = weight * m;
    *h += w * m.transpose() * &wm;
    *g += w * wm.transpose() * d;
    *c += w * (weight * d).dot(d);
}

/// Builds the stacked quadratic for the averaged objective. Fails with an
/// unsupported error on nonlinear families or non-quadratic costs.
pub fn assemble_lq(problem: &EnsembleProblem, mu: &DiscreteMeasure) -> Result<LqQuadratic> {
    crate::error::check_dim("measure atoms", mu.dimension(), problem.theta_dim())?;
    let pieces = quadratic_pieces(problem)?;
    let nx = problem.state_dim();
    let nu = problem.input_dim();
    let horizon = problem.horizon();
    let dim = horizon * nu;

    let mut h = DMatrix::zeros(dim, dim);
    let mut g = DVector::zeros(dim);
    let mut c = 0.0;

    // Input penalty: lambda * ||z - stacked anchor||^2 per atom, which is
    // atom-independent; accumulate it with the atom weights so the assembly
    // mirrors the averaged sum exactly.
    let mut anchor_stack = DVector::zeros(dim);
    for n in 0..horizon {
        for j in 0..nu {
            anchor_stack[n * nu + j] = pieces.penalty_anchor[j];
        }
    }

    for (theta, &w) in mu.atoms().iter().zip(mu.weights()) {
        let (a_mat, b_mat) = problem.system().linear_matrices(theta)?;
        // s(n) = m_n z + b_n along the rollout.
        let mut m_n = DMatrix::zeros(nx, dim);
        let mut b_n = DVector::from_vec(problem.x0_map().eval(theta, nx)?);
        for n in 0..horizon {
            if let Some((q_mat, xref)) = &pieces.tracking {
                let reference = DVector::from_vec(xref.eval(theta, nx)?);
                accumulate_term(&mut h, &mut g, &mut c, w, &m_n, &(&b_n - reference), q_mat);
            }
            let mut m_next = &a_mat * &m_n;
            m_next.columns_mut(n * nu, nu).copy_from(&b_mat);
            // the u(n) block of m_n is zero before step n, so copy == add
            m_n = m_next;
            b_n = &a_mat * &b_n;
        }
        if let Some(p_mat) = &pieces.terminal {
            accumulate_term(&mut h, &mut g, &mut c, w, &m_n, &b_n, p_mat);
        }
        if pieces.lambda > 0.0 {
            let wl = w * pieces.lambda;
            for i in 0..dim {
                h[(i, i)] += wl;
            }
            g -= wl * &anchor_stack;
            c += wl * anchor_stack.dot(&anchor_stack);
        }
    }

    // Kill rounding asymmetry before factorisation.
    let h = (&h + h.transpose()) * 0.5;
    if h.iter().any(|v| !v.is_finite()) || g.iter().any(|v| !v.is_finite()) || !c.is_finite() {
        return Err(Error::numeric(
            "LQ assembly produced non-finite coefficients".to_string(),
        ));
    }
    Ok(LqQuadratic { h, g, c })
}

/// Global minimiser of the assembled quadratic.
///
/// `report.regularised` records whether the Gram matrix needed the 1e-10
/// Tikhonov shift (degenerate ensembles); the returned minimiser is then
/// the minimum-norm one.
pub fn solve_lq_exact(problem: &EnsembleProblem, mu: &DiscreteMeasure) -> Result<SolveReport> {
    let quad = assemble_lq(problem, mu)?;
    let rhs = -&quad.g;
    // Cholesky is only the definiteness certificate; the solve itself goes
    // through pivoted LU, which has no square roots and keeps the simple
    // benchmark systems exact to the last bit.
    let (matrix, regularised) = if quad.h.clone().cholesky().is_some() {
        (quad.h.clone(), false)
    } else {
        let mut shifted = quad.h.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += 1e-10;
        }
        if shifted.clone().cholesky().is_none() {
            return Err(Error::numeric(
                "Gram matrix is not positive semidefinite".to_string(),
            ));
        }
        (shifted, true)
    };
    let z = matrix
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numeric("stacked normal equations are singular".to_string()))?;
    let minimiser = ControlSequence::from_flat(z.as_slice(), problem.input_dim())?;
    let value = averaged_cost(problem, &minimiser, mu)?;
    let mut monitor = SublevelMonitor::new(problem);
    monitor.observe(z.as_slice(), value);
    Ok(SolveReport {
        minimiser,
        value,
        iterations: 1,
        objective_evaluations: 1,
        termination: Termination::ToleranceMet,
        trace: vec![value],
        rejected_evaluations: 0,
        regularised,
        sublevel_violations: monitor.violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::CostSpec;
    use crate::ensemble::{InitialStateMap, SystemFamily};
    use crate::solvers::tests::lq_problem;

    #[test]
    fn single_atom_example() {
        let problem = lq_problem(1);
        let mu = DiscreteMeasure::dirac(vec![0.5]).unwrap();
        let report = solve_lq_exact(&problem, &mu).unwrap();
        assert_eq!(report.minimiser.step(0), &[-0.25]);
        assert_eq!(report.value, 0.125);
        assert!(!report.regularised);
        assert_eq!(report.termination, Termination::ToleranceMet);
    }

    #[test]
    fn two_atom_example() {
        let problem = lq_problem(1);
        let mu = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let report = solve_lq_exact(&problem, &mu).unwrap();
        assert_eq!(report.minimiser.step(0), &[-0.25]);
        assert_eq!(report.value, 0.375);
    }

    #[test]
    fn pure_input_penalty_minimises_at_the_anchor() {
        let problem = EnsembleProblem::new(
            SystemFamily::scalar_linear(None),
            InitialStateMap::constant(vec![1.0]),
            CostSpec::new(
                InputPenalty::power(1.0, 2.0, 2.0, None).unwrap(),
                StateCost::zero(),
                TerminalCost::zero(),
            )
            .unwrap(),
            3,
        )
        .unwrap();
        let mu = DiscreteMeasure::dirac(vec![0.5]).unwrap();
        let report = solve_lq_exact(&problem, &mu).unwrap();
        assert_eq!(report.minimiser.to_flat(), vec![0.0, 0.0, 0.0]);
        assert_eq!(report.value, 0.0);
    }

    #[test]
    fn report_value_is_a_fresh_objective_evaluation() {
        let problem = lq_problem(3);
        let mu = DiscreteMeasure::uniform_atoms(vec![vec![0.2], vec![0.8], vec![-0.3]]).unwrap();
        let report = solve_lq_exact(&problem, &mu).unwrap();
        let again = averaged_cost(&problem, &report.minimiser, &mu).unwrap();
        assert_eq!(report.value, again);
        assert_eq!(report.trace, vec![report.value]);
    }

    #[test]
    fn degenerate_ensemble_regularises_to_minimum_norm() {
        // B(theta) = 0 and lambda = 0: the objective ignores z entirely.
        let a = vec![
            DMatrix::from_row_slice(1, 1, &[0.5]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
        ];
        let b = vec![
            DMatrix::from_row_slice(1, 1, &[0.0]),
            DMatrix::from_row_slice(1, 1, &[0.0]),
        ];
        let problem = EnsembleProblem::new(
            SystemFamily::matrix_linear(a, b, None).unwrap(),
            InitialStateMap::constant(vec![1.0]),
            CostSpec::new(
                InputPenalty::power(0.0, 2.0, 2.0, None).unwrap(),
                StateCost::zero(),
                TerminalCost::quadratic(vec![vec![1.0]]).unwrap(),
            )
            .unwrap(),
            2,
        )
        .unwrap();
        let mu = DiscreteMeasure::dirac(vec![0.3]).unwrap();
        let report = solve_lq_exact(&problem, &mu).unwrap();
        assert!(report.regularised);
        assert_eq!(report.minimiser.to_flat(), vec![0.0, 0.0]);
        assert_eq!(report.value, 0.0625);
    }

    #[test]
    fn anchored_penalty_shifts_the_minimiser() {
        // No state/terminal cost: minimum exactly at the anchor.
        let problem = EnsembleProblem::new(
            SystemFamily::scalar_linear(None),
            InitialStateMap::constant(vec![0.0]),
            CostSpec::new(
                InputPenalty::power(2.0, 2.0, 2.0, Some(vec![0.75])).unwrap(),
                StateCost::zero(),
                TerminalCost::zero(),
            )
            .unwrap(),
            2,
        )
        .unwrap();
        let mu = DiscreteMeasure::dirac(vec![0.0]).unwrap();
        let report = solve_lq_exact(&problem, &mu).unwrap();
        assert_eq!(report.minimiser.to_flat(), vec![0.75, 0.75]);
        assert_eq!(report.value, 0.0);
    }

    #[test]
    fn non_lq_problems_are_unsupported() {
        let mu = DiscreteMeasure::dirac(vec![0.5]).unwrap();
        let logistic = EnsembleProblem::new(
            SystemFamily::logistic(None),
            InitialStateMap::constant(vec![0.5]),
            CostSpec::new(
                InputPenalty::power(1.0, 2.0, 2.0, None).unwrap(),
                StateCost::zero(),
                TerminalCost::quadratic(vec![vec![1.0]]).unwrap(),
            )
            .unwrap(),
            1,
        )
        .unwrap();
        assert!(matches!(
            solve_lq_exact(&logistic, &mu),
            Err(Error::Unsupported(_))
        ));

        let threshold = EnsembleProblem::new(
            SystemFamily::scalar_linear(None),
            InitialStateMap::constant(vec![1.0]),
            CostSpec::new(
                InputPenalty::threshold(1.0, None).unwrap(),
                StateCost::zero(),
                TerminalCost::quadratic(vec![vec![1.0]]).unwrap(),
            )
            .unwrap(),
            1,
        )
        .unwrap();
        assert!(matches!(
            solve_lq_exact(&threshold, &mu),
            Err(Error::Unsupported(_))
        ));

        let quartic = EnsembleProblem::new(
            SystemFamily::scalar_linear(None),
            InitialStateMap::constant(vec![1.0]),
            CostSpec::new(
                InputPenalty::power(1.0, 4.0, 2.0, None).unwrap(),
                StateCost::zero(),
                TerminalCost::quadratic(vec![vec![1.0]]).unwrap(),
            )
            .unwrap(),
            1,
        )
        .unwrap();
        assert!(matches!(
            solve_lq_exact(&quartic, &mu),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn assembled_quadratic_matches_direct_evaluation() {
        use rand::Rng;
        let problem = EnsembleProblem::new(
            SystemFamily::scalar_linear(None),
            InitialStateMap::constant(vec![1.0]),
            CostSpec::new(
                InputPenalty::power(0.5, 2.0, 2.0, None).unwrap(),
                StateCost::quadratic_tracking(
                    vec![vec![2.0]],
                    InitialStateMap::constant(vec![0.25]),
                )
                .unwrap(),
                TerminalCost::quadratic(vec![vec![1.5]]).unwrap(),
            )
            .unwrap(),
            3,
        )
        .unwrap();
        let mu = DiscreteMeasure::uniform_atoms(vec![vec![0.1], vec![0.6], vec![0.9]]).unwrap();
        let quad = assemble_lq(&problem, &mu).unwrap();
        let mut rng = crate::rng::stream_rng(21, 0);
        for _ in 0..100 {
            let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let u = ControlSequence::from_flat(&z, 1).unwrap();
            let direct = averaged_cost(&problem, &u, &mu).unwrap();
            let quadratic = quad.value(&DVector::from_vec(z));
            assert!(
                (direct - quadratic).abs() <= 1e-12 * (1.0 + direct.abs()),
                "direct {direct} vs assembled {quadratic}"
            );
        }
    }
}
