//! Convergence harness for empirical-measure approximations.
//!
//! The question under test: if the parameter measure is replaced by an
//! empirical `k`-sample approximation, do the optimal values and minimisers
//! of the averaged problem converge to those of the limit problem as `k`
//! grows? The harness makes that question executable: it solves the
//! ensemble problem on a grid of `k` values across several seeded sample
//! streams, solves a high-order quadrature reference once, and reduces the
//! gaps to per-`k` medians with explicit convergence verdicts.
//!
//! The assumptions that make the limit meaningful are not taken on faith:
//! [`run_gamma_sweep`] refuses to run unless the sampling checkers for the
//! transition moduli, the cost moduli, the input-penalty lower
//! semicontinuity, and the coercivity witness all pass on the declared
//! boxes. The two probe utilities ([`recovery_sequence_check`],
//! [`liminf_probe`]) evaluate fixed and perturbed control sequences along
//! the measure sequence, the two halves of the convergence argument.

use serde::Serialize;

use crate::costs::averaged_cost;
use crate::ensemble::ControlSequence;
use crate::error::Result;
use crate::exec;
use crate::measures::{
    empirical_measure, quadrature_measure, wasserstein1_1d, DiscreteMeasure, ThetaDistribution,
};
use crate::problem::EnsembleProblem;
use crate::rng::{derive_seed, stream_rng};
use crate::solvers::{solve, SolverConfig};
use crate::verify::{
    check_assumption1, check_assumption2, check_coercivity, check_lsc, CheckReport, CheckSettings,
};
use crate::Error;

/// Everything a sweep needs. The check settings gate the run: the sweep
/// refuses to start when any preflight checker fails on these boxes.
#[derive(Clone, Debug)]
pub struct GammaSweepConfig {
    pub problem: EnsembleProblem,
    pub dist: ThetaDistribution,
    /// Strictly increasing sample counts.
    pub k_grid: Vec<usize>,
    pub n_seeds: usize,
    /// Gauss-Legendre nodes per dimension for the reference measure
    /// (ignored for finite distributions, which are their own reference).
    pub reference_nodes: usize,
    pub solver: SolverConfig,
    pub value_tol: f64,
    pub minimiser_tol: f64,
    pub base_seed: u64,
    pub check: CheckSettings,
    /// Sequence length for the lower-semicontinuity probe.
    pub lsc_seq_len: usize,
}

impl GammaSweepConfig {
    fn validate(&self) -> Result<()> {
        if self.k_grid.is_empty() {
            return Err(Error::input("k_grid must not be empty"));
        }
        if self.k_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input("k_grid must be strictly increasing"));
        }
        if self.k_grid[0] == 0 {
            return Err(Error::input("k_grid entries must be at least 1"));
        }
        if self.n_seeds == 0 {
            return Err(Error::input("n_seeds must be at least 1"));
        }
        if self.reference_nodes == 0 {
            return Err(Error::input("reference_nodes must be at least 1"));
        }
        for (name, tol) in [("value_tol", self.value_tol), ("minimiser_tol", self.minimiser_tol)]
        {
            if !(tol >= 0.0) {
                return Err(Error::input(format!("{name} must be nonnegative, got {tol}")));
            }
        }
        self.dist.validate()?;
        crate::error::check_dim(
            "parameter distribution",
            self.dist.dimension(),
            self.problem.theta_dim(),
        )
    }
}

/// One solved (or failed) cell of the sweep grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaCell {
    pub seed_index: usize,
    /// Seed actually passed to `empirical_measure`; re-solving with it
    /// reproduces the cell.
    pub seed: u64,
    pub k: usize,
    pub solved: bool,
    pub value: Option<f64>,
    pub value_gap: Option<f64>,
    pub minimiser: Option<Vec<f64>>,
    /// Product-metric distance `max_n d_U(u_k(n), u_ref(n))`.
    pub minimiser_gap: Option<f64>,
    pub w1: f64,
}

/// Per-`k` medians over the solved cells.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaSummaryRow {
    pub k: usize,
    pub solved_cells: usize,
    pub median_value_gap: Option<f64>,
    pub median_minimiser_gap: Option<f64>,
    pub median_w1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaSweepResult {
    pub reference_value: f64,
    pub reference_minimiser: ControlSequence,
    pub cells: Vec<GammaCell>,
    pub summary: Vec<GammaSummaryRow>,
    /// Medians non-increasing along `k_grid` and final median within
    /// `value_tol`, with every `k` contributing at least one solved cell.
    pub value_converged: bool,
    pub minimiser_converged: bool,
    pub solver_failures: usize,
    /// Spearman rank correlation between `w1` and `value_gap` over all
    /// solved cells; `None` when it is undefined (fewer than two cells or a
    /// constant column, e.g. the exact-replication finite case).
    pub spearman_w1_value: Option<f64>,
    /// The passing preflight reports, in check order.
    pub preflight: Vec<CheckReport>,
}

/// A sweep either runs to completion or is refused by a failing checker.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SweepOutcome {
    Ran(GammaSweepResult),
    Refused(CheckReport),
}

/// The measure the empirical sequence is compared against: finite
/// distributions are their own (exact) reference, everything else gets a
/// tensor Gauss-Legendre quadrature.
pub fn reference_measure(
    dist: &ThetaDistribution,
    nodes_per_dim: usize,
) -> Result<DiscreteMeasure> {
    match dist {
        ThetaDistribution::Finite { atoms, weights } => {
            DiscreteMeasure::new(atoms.clone(), weights.clone())
        }
        _ => quadrature_measure(dist, nodes_per_dim),
    }
}

/// 1-D Wasserstein-1 distance, extended to several dimensions as the
/// maximum over coordinate marginals.
fn marginal_w1(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.dimension() == 1 {
        return wasserstein1_1d(mu, nu);
    }
    let mut worst = 0.0_f64;
    for dim in 0..mu.dimension() {
        worst = worst.max(wasserstein1_1d(&mu.marginal(dim)?, &nu.marginal(dim)?)?);
    }
    Ok(worst)
}

fn median(sorted: &mut Vec<f64>) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let average_rank = (i + j) as f64 / 2.0 + 1.0;
        for &slot in &order[i..=j] {
            out[slot] = average_rank;
        }
        i = j + 1;
    }
    out
}

fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() < 2 {
        return None;
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let n = ra.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        var_a += (x - mean) * (x - mean);
        var_b += (y - mean) * (y - mean);
    }
    if var_a == 0.0 || var_b == 0.0 {
        return None;
    }
    Some(cov / (var_a * var_b).sqrt())
}

/// Runs the four standing checkers (transition moduli, cost moduli,
/// input-penalty lower semicontinuity, coercivity) against the problem's
/// declared data, in that order. Missing declarations are input errors;
/// failing checks come back as reports for the caller to act on.
pub fn preflight_checks(
    problem: &EnsembleProblem,
    settings: &CheckSettings,
    lsc_seq_len: usize,
) -> Result<Vec<CheckReport>> {
    let state_moduli = problem.system().declared_moduli().ok_or_else(|| {
        Error::input("preflight checks need a system with declared state moduli")
    })?;
    let cost_moduli = problem
        .cost()
        .declared_moduli()
        .ok_or_else(|| Error::input("preflight checks need a cost with declared moduli"))?;
    let witness = problem.coercivity().ok_or_else(|| {
        Error::input("preflight checks need a coercivity witness attached to the problem")
    })?;

    Ok(vec![
        check_assumption1(problem.system(), state_moduli, settings)?,
        check_assumption2(problem.cost(), cost_moduli, settings)?,
        check_lsc(
            problem.cost().ell_u(),
            &settings.input_box,
            settings.n_samples.min(256),
            lsc_seq_len,
            settings.seed,
        )?,
        check_coercivity(problem, witness, settings)?,
    ])
}

/// Runs the full sweep. A failing preflight checker refuses the sweep and
/// hands back its report; infrastructure problems (bad config, failing
/// reference solve) are hard errors.
pub fn run_gamma_sweep(config: &GammaSweepConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let preflight_reports =
        preflight_checks(&config.problem, &config.check, config.lsc_seq_len)?;
    if let Some(failing) = preflight_reports.iter().find(|r| !r.passed()) {
        return Ok(SweepOutcome::Refused(failing.clone()));
    }

    let reference = reference_measure(&config.dist, config.reference_nodes)?;
    let reference_report = solve(&config.problem, &reference, &config.solver)?;
    let reference_value = reference_report.value;
    let reference_minimiser = reference_report.minimiser;

    let grid: Vec<(usize, usize)> = (0..config.n_seeds)
        .flat_map(|s| config.k_grid.iter().map(move |&k| (s, k)))
        .collect();
    let input_space = config.problem.system().input_space();

    let cells: Vec<GammaCell> = exec::ordered_map(&grid, |&(seed_index, k)| {
        let seed = derive_seed(config.base_seed, seed_index as u64);
        let build = || -> Result<(DiscreteMeasure, f64)> {
            let mu = empirical_measure(&config.dist, k, seed)?;
            let w1 = marginal_w1(&mu, &reference)?;
            Ok((mu, w1))
        };
        let (mu, w1) = match build() {
            Ok(pair) => pair,
            Err(_) => {
                return GammaCell {
                    seed_index,
                    seed,
                    k,
                    solved: false,
                    value: None,
                    value_gap: None,
                    minimiser: None,
                    minimiser_gap: None,
                    w1: f64::NAN,
                }
            }
        };
        match solve(&config.problem, &mu, &config.solver) {
            Ok(report) => {
                let minimiser_gap = report
                    .minimiser
                    .sup_distance(&reference_minimiser, input_space)
                    .ok();
                GammaCell {
                    seed_index,
                    seed,
                    k,
                    solved: true,
                    value: Some(report.value),
                    value_gap: Some((report.value - reference_value).abs()),
                    minimiser: Some(report.minimiser.to_flat()),
                    minimiser_gap,
                    w1,
                }
            }
            Err(_) => GammaCell {
                seed_index,
                seed,
                k,
                solved: false,
                value: None,
                value_gap: None,
                minimiser: None,
                minimiser_gap: None,
                w1,
            },
        }
    });

    let solver_failures = cells.iter().filter(|c| !c.solved).count();
    let mut summary = Vec::with_capacity(config.k_grid.len());
    for &k in &config.k_grid {
        let at_k: Vec<&GammaCell> = cells.iter().filter(|c| c.k == k).collect();
        let mut value_gaps: Vec<f64> = at_k.iter().filter_map(|c| c.value_gap).collect();
        let mut minimiser_gaps: Vec<f64> = at_k.iter().filter_map(|c| c.minimiser_gap).collect();
        let mut w1s: Vec<f64> = at_k.iter().map(|c| c.w1).filter(|v| v.is_finite()).collect();
        summary.push(GammaSummaryRow {
            k,
            solved_cells: at_k.iter().filter(|c| c.solved).count(),
            median_value_gap: median(&mut value_gaps),
            median_minimiser_gap: median(&mut minimiser_gaps),
            median_w1: median(&mut w1s).unwrap_or(f64::NAN),
        });
    }

    let converged = |gaps: Vec<Option<f64>>, tol: f64| -> bool {
        let Some(gaps) = gaps.into_iter().collect::<Option<Vec<f64>>>() else {
            return false;
        };
        gaps.windows(2).all(|w| w[1] <= w[0]) && *gaps.last().expect("validated non-empty") <= tol
    };
    let value_converged = converged(
        summary.iter().map(|row| row.median_value_gap).collect(),
        config.value_tol,
    );
    let minimiser_converged = converged(
        summary.iter().map(|row| row.median_minimiser_gap).collect(),
        config.minimiser_tol,
    );

    let solved: Vec<&GammaCell> = cells.iter().filter(|c| c.solved && c.w1.is_finite()).collect();
    let w1s: Vec<f64> = solved.iter().map(|c| c.w1).collect();
    let gaps: Vec<f64> = solved.iter().filter_map(|c| c.value_gap).collect();
    let spearman_w1_value = spearman(&w1s, &gaps);

    Ok(SweepOutcome::Ran(GammaSweepResult {
        reference_value,
        reference_minimiser,
        cells,
        summary,
        value_converged,
        minimiser_converged,
        solver_failures,
        spearman_w1_value,
        preflight: preflight_reports,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub k: usize,
    pub value: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryTable {
    pub reference_value: f64,
    pub rows: Vec<RecoveryRow>,
}

/// Evaluates the constant recovery sequence `u = u_star` along the measure
/// sequence: the gaps `|J(u*, mu_k) - J(u*, mu_ref)|` shrinking to zero is
/// the empirical face of the upper convergence half.
pub fn recovery_sequence_check(
    problem: &EnsembleProblem,
    measures: &[(usize, DiscreteMeasure)],
    reference: &DiscreteMeasure,
    u_star: &ControlSequence,
) -> Result<RecoveryTable> {
    let reference_value = averaged_cost(problem, u_star, reference)?;
    let mut rows = Vec::with_capacity(measures.len());
    for (k, mu) in measures {
        let value = averaged_cost(problem, u_star, mu)?;
        rows.push(RecoveryRow {
            k: *k,
            value,
            gap: (value - reference_value).abs(),
        });
    }
    Ok(RecoveryTable {
        reference_value,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiminfRow {
    pub k: usize,
    pub scale: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiminfTable {
    pub reference_value: f64,
    pub rows: Vec<LiminfRow>,
    /// Whether the deep tail dropped below `reference_value - tolerance`,
    /// which would witness a lower-convergence failure at `u_star`.
    pub undercut: bool,
}

/// Probes the lower-convergence half: evaluates `u_star + scale_k * dir_k`
/// (seeded unit perturbations) on `mu_k` and flags if the tail of those
/// values undercuts the reference value at `u_star` by more than
/// `tolerance`.
pub fn liminf_probe(
    problem: &EnsembleProblem,
    measures: &[(usize, DiscreteMeasure)],
    reference: &DiscreteMeasure,
    u_star: &ControlSequence,
    scales: &[f64],
    tolerance: f64,
    seed: u64,
) -> Result<LiminfTable> {
    if scales.len() != measures.len() {
        return Err(Error::input(format!(
            "got {} perturbation scales for {} measures",
            scales.len(),
            measures.len()
        )));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::input(format!(
            "tolerance must be nonnegative, got {tolerance}"
        )));
    }
    let reference_value = averaged_cost(problem, u_star, reference)?;
    let flat = u_star.to_flat();
    let mut rows = Vec::with_capacity(measures.len());
    for (index, ((k, mu), &scale)) in measures.iter().zip(scales).enumerate() {
        use rand::Rng;
        let mut rng = stream_rng(seed, index as u64);
        let mut direction: Vec<f64> = (0..flat.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-9 {
            direction = vec![0.0; flat.len()];
            direction[0] = 1.0;
        } else {
            for v in &mut direction {
                *v /= norm;
            }
        }
        let perturbed: Vec<f64> = flat
            .iter()
            .zip(&direction)
            .map(|(u, d)| u + scale * d)
            .collect();
        let sequence = ControlSequence::from_flat(&perturbed, u_star.input_dim())?;
        let value = averaged_cost(problem, &sequence, mu)?;
        rows.push(LiminfRow {
            k: *k,
            scale,
            value,
        });
    }
    let tail_start = rows.len() / 2;
    let undercut = rows[tail_start..]
        .iter()
        .any(|row| row.value < reference_value - tolerance);
    Ok(LiminfTable {
        reference_value,
        rows,
        undercut,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comparison::{ComparisonFunction, CostModuli, StateModuli};
    use crate::costs::{CoercivityWitness, CostSpec, InputPenalty, StateCost, TerminalCost};
    use crate::ensemble::{InitialStateMap, SystemFamily};
    use crate::verify::SampleBox;

    /// The scalar benchmark: x+ = theta x + u from x0 = 1 over one step,
    /// cost u^2 + x(1)^2, theta uniform on [0, 1]. Closed form gives the
    /// averaged objective 2u^2 + u + 1/3 with minimum 5/24 at u = -1/4.
    fn benchmark_config(dist: ThetaDistribution) -> GammaSweepConfig {
        let system = SystemFamily::scalar_linear(Some(StateModuli {
            alpha_x: ComparisonFunction::identity(),
            alpha_u: ComparisonFunction::identity(),
        }));
        let cost = CostSpec::new(
            InputPenalty::power(1.0, 2.0, 2.0, None).unwrap(),
            StateCost::zero(),
            TerminalCost::quadratic(vec![vec![1.0]]).unwrap(),
        )
        .unwrap()
        .with_declared_moduli(CostModuli {
            gamma_x: ComparisonFunction::identity(),
            gamma_u: ComparisonFunction::identity(),
            gamma_n: ComparisonFunction::power(4.0, 1.0).unwrap(),
        })
        .unwrap();
        let problem = EnsembleProblem::new(system, InitialStateMap::constant(vec![1.0]), cost, 1)
            .unwrap()
            .with_coercivity(CoercivityWitness::new(
                ComparisonFunction::power(1.0, 2.0).unwrap(),
                vec![0.0],
            ))
            .unwrap();
        GammaSweepConfig {
            problem,
            dist,
            k_grid: vec![16, 64],
            n_seeds: 3,
            reference_nodes: 64,
            solver: SolverConfig::LqExact,
            value_tol: 0.05,
            minimiser_tol: 0.1,
            base_seed: 0,
            check: CheckSettings {
                n_samples: 1000,
                seed: 5,
                state_box: SampleBox::new(vec![(-2.0, 2.0)]).unwrap(),
                input_box: SampleBox::new(vec![(-2.0, 2.0)]).unwrap(),
                theta_box: SampleBox::new(vec![(0.0, 1.0)]).unwrap(),
            },
            lsc_seq_len: 40,
        }
    }

    fn uniform01() -> ThetaDistribution {
        ThetaDistribution::Uniform {
            bounds: vec![[0.0, 1.0]],
        }
    }

    #[test]
    fn reference_matches_the_closed_form() {
        let config = benchmark_config(uniform01());
        let SweepOutcome::Ran(result) = run_gamma_sweep(&config).unwrap() else {
            panic!("sweep was refused");
        };
        assert!(
            (result.reference_value - 5.0 / 24.0).abs() <= 1e-9,
            "reference value {}",
            result.reference_value
        );
        assert!(
            (result.reference_minimiser.step(0)[0] + 0.25).abs() <= 1e-9,
            "reference minimiser {:?}",
            result.reference_minimiser.step(0)
        );
        assert_eq!(result.cells.len(), 6);
        assert_eq!(result.summary.len(), 2);
        assert_eq!(result.solver_failures, 0);
        assert_eq!(result.preflight.len(), 4);
        // Rank correlation between the measure distance and the value gap
        // is defined here and must not be negative.
        assert!(result.spearman_w1_value.map_or(true, |r| r >= 0.0));
    }

    #[test]
    fn dirac_distribution_replicates_the_reference_exactly() {
        let dist = ThetaDistribution::Finite {
            atoms: vec![vec![0.5]],
            weights: vec![1.0],
        };
        let mut config = benchmark_config(dist);
        config.k_grid = vec![4, 16];
        config.value_tol = 1e-12;
        config.minimiser_tol = 1e-12;
        let SweepOutcome::Ran(result) = run_gamma_sweep(&config).unwrap() else {
            panic!("sweep was refused");
        };
        assert_eq!(result.reference_value, 0.125);
        for cell in &result.cells {
            assert_eq!(cell.value, Some(0.125));
            assert_eq!(cell.value_gap, Some(0.0));
            assert_eq!(cell.w1, 0.0);
        }
        assert!(result.value_converged);
        assert!(result.minimiser_converged);
        // Both columns are constant, so the correlation is undefined.
        assert_eq!(result.spearman_w1_value, None);
    }

    #[test]
    fn single_entry_grid_is_trivially_converged() {
        let mut config = benchmark_config(uniform01());
        config.k_grid = vec![32];
        config.n_seeds = 1;
        config.value_tol = f64::INFINITY;
        config.minimiser_tol = f64::INFINITY;
        let SweepOutcome::Ran(result) = run_gamma_sweep(&config).unwrap() else {
            panic!("sweep was refused");
        };
        assert_eq!(result.summary.len(), 1);
        assert!(result.value_converged);
        assert!(result.minimiser_converged);
    }

    #[test]
    fn reruns_are_identical() {
        let config = benchmark_config(uniform01());
        let first = run_gamma_sweep(&config).unwrap();
        let second = run_gamma_sweep(&config).unwrap();
        assert_eq!(first, second);
        let SweepOutcome::Ran(result) = first else {
            panic!("sweep was refused");
        };
        let json_a = serde_json::to_string(&result).unwrap();
        let json_b = serde_json::to_string(&result.clone()).unwrap();
        assert_eq!(json_a, json_b);
    }

    #[test]
    fn stored_cell_seeds_reproduce_the_cells() {
        let config = benchmark_config(uniform01());
        let SweepOutcome::Ran(result) = run_gamma_sweep(&config).unwrap() else {
            panic!("sweep was refused");
        };
        for cell in &result.cells {
            let mu = empirical_measure(&config.dist, cell.k, cell.seed).unwrap();
            let report = solve(&config.problem, &mu, &config.solver).unwrap();
            assert_eq!(Some(report.value), cell.value);
            assert_eq!(Some(report.minimiser.to_flat()), cell.minimiser);
        }
    }

    #[test]
    fn sweep_is_refused_when_a_checker_fails() {
        let dist = ThetaDistribution::Uniform {
            bounds: vec![[-2.0, 2.0]],
        };
        let mut config = benchmark_config(dist);
        // theta reaches magnitude 2 but the declared modulus is identity.
        config.check.theta_box = SampleBox::new(vec![(-2.0, 2.0)]).unwrap();
        let outcome = run_gamma_sweep(&config).unwrap();
        let SweepOutcome::Refused(report) = outcome else {
            panic!("sweep should have been refused");
        };
        assert_eq!(report.check_id, "assumption1");
        assert!(!report.passed());
        assert!(!report.violations.is_empty());
    }

    #[test]
    fn invalid_grids_are_rejected() {
        let mut config = benchmark_config(uniform01());
        config.k_grid = vec![16, 16];
        assert!(run_gamma_sweep(&config).is_err());
        config.k_grid = vec![];
        assert!(run_gamma_sweep(&config).is_err());
        config.k_grid = vec![16];
        config.n_seeds = 0;
        assert!(run_gamma_sweep(&config).is_err());
    }

    #[test]
    fn recovery_sequence_approaches_the_reference() {
        let config = benchmark_config(uniform01());
        let reference = reference_measure(&config.dist, 64).unwrap();
        let measures: Vec<(usize, DiscreteMeasure)> = [64usize, 256, 1024]
            .iter()
            .map(|&k| (k, empirical_measure(&config.dist, k, 42).unwrap()))
            .collect();
        let u_zero = ControlSequence::zeros(1, 1).unwrap();
        let table =
            recovery_sequence_check(&config.problem, &measures, &reference, &u_zero).unwrap();
        // J(0) integrates theta^2 over [0, 1].
        assert!(
            (table.reference_value - 1.0 / 3.0).abs() <= 1e-12,
            "reference {}",
            table.reference_value
        );
        assert!(table.rows.last().unwrap().gap <= 0.05);

        // A single-atom distribution replicates exactly: all gaps zero.
        let dirac = ThetaDistribution::Finite {
            atoms: vec![vec![0.5]],
            weights: vec![1.0],
        };
        let dirac_measures: Vec<(usize, DiscreteMeasure)> = [2usize, 8]
            .iter()
            .map(|&k| (k, empirical_measure(&dirac, k, 1).unwrap()))
            .collect();
        let dirac_reference = reference_measure(&dirac, 64).unwrap();
        let table =
            recovery_sequence_check(&config.problem, &dirac_measures, &dirac_reference, &u_zero)
                .unwrap();
        for row in &table.rows {
            assert_eq!(row.gap, 0.0);
        }
    }

    #[test]
    fn liminf_probe_finds_no_undercut_at_the_minimiser() {
        let config = benchmark_config(uniform01());
        let reference = reference_measure(&config.dist, 64).unwrap();
        let ks = [16usize, 64, 256, 1024];
        let measures: Vec<(usize, DiscreteMeasure)> = ks
            .iter()
            .map(|&k| (k, empirical_measure(&config.dist, k, 9).unwrap()))
            .collect();
        let scales: Vec<f64> = (1..=ks.len()).map(|j| 0.5_f64.powi(j as i32)).collect();
        let u_star = ControlSequence::new(vec![vec![-0.25]]).unwrap();
        let table = liminf_probe(
            &config.problem,
            &measures,
            &reference,
            &u_star,
            &scales,
            1e-3,
            77,
        )
        .unwrap();
        assert!(!table.undercut, "rows: {:?}", table.rows);

        // Zero perturbation scales reduce the probe to the recovery check.
        let zero_scales = vec![0.0; measures.len()];
        let probe = liminf_probe(
            &config.problem,
            &measures,
            &reference,
            &u_star,
            &zero_scales,
            1e-3,
            77,
        )
        .unwrap();
        let recovery =
            recovery_sequence_check(&config.problem, &measures, &reference, &u_star).unwrap();
        for (probe_row, recovery_row) in probe.rows.iter().zip(&recovery.rows) {
            assert_eq!(probe_row.value, recovery_row.value);
        }
    }
}
