//! JSON run-configuration schema.
//!
//! A [`RunConfig`] is the single file format the command-line front end
//! consumes: it names a system family from the registry, the initial-state
//! map, the cost, the parameter distribution, and the solver, plus the
//! optional sections the individual subcommands need (measure resolution,
//! sweep grid, checker settings). Parsing is strict (unknown fields are
//! rejected so typos fail loudly) and `parse -> serialise -> parse` is the
//! identity on the schema.
//!
//! The config owns the run seed: every random object a run builds
//! (empirical measures, multistart draws, checker samples) derives from it,
//! which is what makes rerunning a config byte-identical.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::comparison::StateModuli;
use crate::costs::{CoercivityWitness, CostSpec, InputPenalty};
use crate::ensemble::{InitialStateMap, SystemFamily};
use crate::error::Result;
use crate::gamma::GammaSweepConfig;
use crate::measures::{
    empirical_measure, quadrature_measure, DiscreteMeasure, ThetaDistribution,
};
use crate::problem::EnsembleProblem;
use crate::solvers::SolverConfig;
use crate::verify::CheckSettings;
use crate::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Sequence length used by the lower-semicontinuity checker when a config
/// does not say otherwise.
pub const DEFAULT_LSC_SEQ_LEN: usize = 40;

fn default_lsc_seq_len() -> usize {
    DEFAULT_LSC_SEQ_LEN
}

fn default_reference_nodes() -> usize {
    64
}

/// System section: a registry family name plus its flat parameter array.
/// `dims` is only consulted by families whose dimensions are not fixed
/// (`matrix_linear`); `moduli` are the declared comparison functions the
/// checkers certify.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub family: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<DimsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moduli: Option<StateModuli>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsConfig {
    pub state: usize,
    pub input: usize,
    pub theta: usize,
}

/// How the solve and rollout commands turn the theta distribution into a
/// concrete discrete measure. A finite distribution needs no section; the
/// other kinds must choose between sampling and quadrature explicitly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    /// The atoms of a finite theta distribution, used as-is.
    Finite,
    /// `k` i.i.d. draws from the theta distribution, seeded by the run.
    Empirical { k: usize },
    /// Tensor Gauss-Legendre quadrature of the theta distribution.
    Quadrature { nodes_per_dim: usize },
}

/// Sweep section, combined with the problem/solver/check sections into a
/// [`GammaSweepConfig`] by [`RunConfig::sweep_config`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub k_grid: Vec<usize>,
    pub n_seeds: usize,
    #[serde(default = "default_reference_nodes")]
    pub reference_nodes: usize,
    pub value_tol: f64,
    pub minimiser_tol: f64,
    #[serde(default = "default_lsc_seq_len")]
    pub lsc_seq_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemConfig,
    pub x0: InitialStateMap,
    pub cost: CostSpec,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coercivity: Option<CoercivityWitness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureConfig>,
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSettings>,
    /// When set, solve-like commands run the preflight checkers first and
    /// refuse to solve if any fails.
    #[serde(default)]
    pub require_checks: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// The spike penalty is a deliberately broken fixture for the
/// semicontinuity checker; accepting it in a run config would let a solve
/// start on a problem the theory says nothing about.
fn reject_spike(penalty: &InputPenalty) -> Result<()> {
    match penalty {
        InputPenalty::SpikeAtAnchor { .. } => Err(Error::input(
            "the spike-at-anchor penalty exists only to test the semicontinuity checker \
             and is not accepted in run configs",
        )),
        InputPenalty::Sum { terms } => terms.iter().try_for_each(reject_spike),
        _ => Ok(()),
    }
}

impl RunConfig {
    /// Parses and validates; serde's errors already carry line/column
    /// positions, so they are passed through verbatim.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::input(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("config serialises");
        out.push('\n');
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::input(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        reject_spike(self.cost.ell_u())?;
        let problem = self.problem()?;
        if let Some(theta) = &self.theta {
            theta.validate()?;
            crate::error::check_dim(
                "theta distribution",
                theta.dimension(),
                problem.theta_dim(),
            )?;
        }
        if let Some(measure) = &self.measure {
            if self.theta.is_none() {
                return Err(Error::input("a measure section needs a theta section"));
            }
            match measure {
                MeasureConfig::Empirical { k } if *k == 0 => {
                    return Err(Error::input("empirical measure needs k >= 1"));
                }
                MeasureConfig::Quadrature { nodes_per_dim } if *nodes_per_dim == 0 => {
                    return Err(Error::input("quadrature measure needs nodes_per_dim >= 1"));
                }
                _ => {}
            }
        }
        if let Some(check) = &self.check {
            check.validate()?;
            check.check_dims(problem.state_dim(), problem.input_dim(), problem.theta_dim())?;
        }
        if self.sweep.is_some() {
            // Full cross-section validation happens in the assembled value.
            self.sweep_config()?;
        }
        if self.require_checks && self.check.is_none() {
            return Err(Error::input("require_checks is set but there is no check section"));
        }
        Ok(())
    }

    /// Assembles the optimal-control problem this config describes.
    pub fn problem(&self) -> Result<EnsembleProblem> {
        let system = SystemFamily::from_registry(
            &self.system.family,
            &self.system.params,
            self.system.dims.map(|d| (d.state, d.input, d.theta)),
            self.system.moduli.clone(),
        )?;
        self.cost.validate()?;
        reject_spike(self.cost.ell_u())?;
        let problem =
            EnsembleProblem::new(system, self.x0.clone(), self.cost.clone(), self.horizon)?;
        match &self.coercivity {
            Some(witness) => problem.with_coercivity(witness.clone()),
            None => Ok(problem),
        }
    }

    /// The discrete measure a solve or rollout runs against. Finite
    /// distributions are their own measure; the continuous kinds need an
    /// explicit `measure` section saying how to discretise.
    pub fn resolve_measure(&self) -> Result<DiscreteMeasure> {
        let theta = self
            .theta
            .as_ref()
            .ok_or_else(|| Error::input("config has no theta section"))?;
        let finite_atoms = || match theta {
            ThetaDistribution::Finite { atoms, weights } => {
                DiscreteMeasure::new(atoms.clone(), weights.clone())
            }
            _ => Err(Error::input(
                "only a finite theta distribution can be used as a measure directly; \
                 add a measure section choosing empirical sampling or quadrature",
            )),
        };
        match &self.measure {
            None | Some(MeasureConfig::Finite) => finite_atoms(),
            Some(MeasureConfig::Empirical { k }) => empirical_measure(theta, *k, self.seed),
            Some(MeasureConfig::Quadrature { nodes_per_dim }) => {
                quadrature_measure(theta, *nodes_per_dim)
            }
        }
    }

    pub fn check_settings(&self) -> Result<&CheckSettings> {
        self.check
            .as_ref()
            .ok_or_else(|| Error::input("config has no check section"))
    }

    /// Sequence length for the semicontinuity checker: the sweep section's
    /// value when present, the default otherwise.
    pub fn lsc_seq_len(&self) -> usize {
        self.sweep
            .as_ref()
            .map_or(DEFAULT_LSC_SEQ_LEN, |s| s.lsc_seq_len)
    }

    pub fn sweep_config(&self) -> Result<GammaSweepConfig> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::input("config has no sweep section"))?;
        let theta = self
            .theta
            .as_ref()
            .ok_or_else(|| Error::input("a sweep needs a theta section"))?;
        let check = self
            .check
            .as_ref()
            .ok_or_else(|| Error::input("a sweep needs a check section for its preflight"))?;
        check.validate()?;
        Ok(GammaSweepConfig {
            problem: self.problem()?,
            dist: theta.clone(),
            k_grid: sweep.k_grid.clone(),
            n_seeds: sweep.n_seeds,
            reference_nodes: sweep.reference_nodes,
            solver: self.solver.clone(),
            value_tol: sweep.value_tol,
            minimiser_tol: sweep.minimiser_tol,
            base_seed: self.seed,
            check: check.clone(),
            lsc_seq_len: sweep.lsc_seq_len,
        })
    }
}
