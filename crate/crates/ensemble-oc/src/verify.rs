//! Sampling-based checkers for the standing regularity assumptions and the
//! propagated deviation bounds.
//!
//! Every checker draws seeded sample tuples, evaluates one inequality per
//! tuple, and emits a [`CheckReport`]. A report can only certify what
//! sampling can certify: `Fail` is conclusive and ships replayable
//! counterexamples, while `Pass` means "no violation found in n samples on
//! the given boxes" and nothing stronger.
//!
//! Samples are indexed, each index owns its own RNG stream, and violations
//! are merged in index order, so reports are identical across thread counts
//! and reruns.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::comparison::{
    propagate_cost_moduli, propagate_state_moduli, CostModuli, StateModuli,
};
use crate::costs::{stage_cost, CoercivityWitness, CostSpec, InputPenalty};
use crate::ensemble::{ControlSequence, InitialStateMap, SystemFamily};
use crate::error::{check_dim, Result};
use crate::exec;
use crate::problem::EnsembleProblem;
use crate::rng::{derive_seed, stream_rng};
use crate::spaces::SpaceDescriptor;

/// Absolute slack on inequality checks; absorbs floating-point noise in
/// exactly-tight cases such as linear systems at the Lipschitz boundary.
pub const INEQUALITY_SLACK: f64 = 1e-12;

/// Tolerance for the lower-semicontinuity probe.
pub const LSC_TOLERANCE: f64 = 1e-9;

/// Stored counterexamples are capped at this many; the total count is
/// always reported.
pub const MAX_STORED_VIOLATIONS: usize = 100;

/// Sentinel pair recorded when a sample cannot be evaluated at all: the
/// stored inequality `lhs > rhs` is then violated by construction, and
/// replaying the sample deterministically reproduces the same failure.
pub const EVALUATION_ERROR_LHS: f64 = f64::MAX;
pub const EVALUATION_ERROR_RHS: f64 = f64::MIN;

/// Axis-aligned sampling box, one `(lo, hi)` pair per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleBox(pub Vec<(f64, f64)>);

impl SampleBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        let sample_box = SampleBox(bounds);
        sample_box.validate()?;
        Ok(sample_box)
    }

    /// Deserialisation is transparent and skips [`SampleBox::new`], so
    /// parsed boxes must be validated explicitly.
    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(crate::Error::input("sampling box must have at least one coordinate"));
        }
        for (i, (lo, hi)) in self.0.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(crate::Error::input(format!(
                    "sampling box coordinate {i} has invalid bounds ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.0
            .iter()
            .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..=hi) })
            .collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.0.len()
            && point
                .iter()
                .zip(&self.0)
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

/// One replayable counterexample: named input vectors plus the two sides
/// of the violated inequality exactly as evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub sample_index: usize,
    pub inputs: Vec<(String, Vec<f64>)>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_id: String,
    pub samples_evaluated: usize,
    /// First violations in sample order, capped at
    /// [`MAX_STORED_VIOLATIONS`].
    pub violations: Vec<Violation>,
    pub total_violations: usize,
    pub status: CheckStatus,
    pub boxes: Vec<(String, SampleBox)>,
    pub seed: u64,
    pub note: String,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

/// Sample budget, seed, and the boxes every checker draws from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSettings {
    pub n_samples: usize,
    pub seed: u64,
    pub state_box: SampleBox,
    pub input_box: SampleBox,
    pub theta_box: SampleBox,
}

impl CheckSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(crate::Error::input("check settings need at least one sample"));
        }
        self.state_box.validate()?;
        self.input_box.validate()?;
        self.theta_box.validate()
    }

    fn boxes(&self) -> Vec<(String, SampleBox)> {
        vec![
            ("state".to_string(), self.state_box.clone()),
            ("input".to_string(), self.input_box.clone()),
            ("theta".to_string(), self.theta_box.clone()),
        ]
    }

    pub fn check_dims(&self, nx: usize, nu: usize, ntheta: usize) -> Result<()> {
        check_dim("state box", self.state_box.dimension(), nx)?;
        check_dim("input box", self.input_box.dimension(), nu)?;
        check_dim("theta box", self.theta_box.dimension(), ntheta)
    }
}

/// Runs `eval` over indexed per-sample RNG streams; violations come back
/// merged in sample order regardless of the execution backend.
fn run_samples<F>(n_samples: usize, seed: u64, eval: F) -> Vec<Violation>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Vec<Violation> + Sync + Send,
{
    let indices: Vec<usize> = (0..n_samples).collect();
    exec::ordered_map(&indices, |&i| {
        let mut rng = stream_rng(seed, i as u64);
        eval(i, &mut rng)
    })
    .into_iter()
    .flatten()
    .collect()
}

fn finish(
    check_id: &str,
    samples_evaluated: usize,
    mut violations: Vec<Violation>,
    boxes: Vec<(String, SampleBox)>,
    seed: u64,
    note: &str,
) -> CheckReport {
    let total_violations = violations.len();
    violations.truncate(MAX_STORED_VIOLATIONS);
    let status = if total_violations > 0 {
        CheckStatus::Fail
    } else if samples_evaluated == 0 {
        CheckStatus::Inconclusive
    } else {
        CheckStatus::Pass
    };
    let suffix = match status {
        CheckStatus::Pass => format!(
            " No violation found in {samples_evaluated} samples; sampling cannot prove the property."
        ),
        CheckStatus::Fail => format!(
            " {total_violations} violation(s) found; failure is conclusive."
        ),
        CheckStatus::Inconclusive => " No samples evaluated.".to_string(),
    };
    CheckReport {
        check_id: check_id.to_string(),
        samples_evaluated,
        violations,
        total_violations,
        status,
        boxes,
        seed,
        note: format!("{note}{suffix}"),
    }
}

fn error_violation(sample_index: usize, inputs: Vec<(String, Vec<f64>)>) -> Violation {
    Violation {
        sample_index,
        inputs,
        lhs: EVALUATION_ERROR_LHS,
        rhs: EVALUATION_ERROR_RHS,
    }
}

fn named(pairs: &[(&str, &[f64])]) -> Vec<(String, Vec<f64>)> {
    pairs
        .iter()
        .map(|(name, values)| (name.to_string(), values.to_vec()))
        .collect()
}

/// One-step continuity of the transition map:
/// `d_X(f(x,u,theta), f(x',u',theta)) <= alpha_x(d_X(x,x')) + alpha_u(d_U(u,u'))`
/// on random tuples from the boxes.
pub fn check_assumption1(
    system: &SystemFamily,
    moduli: &StateModuli,
    settings: &CheckSettings,
) -> Result<CheckReport> {
    settings.check_dims(
        system.state_space().dimension(),
        system.input_space().dimension(),
        system.theta_space().dimension(),
    )?;
    moduli.alpha_x.validate()?;
    moduli.alpha_u.validate()?;

    let violations = run_samples(settings.n_samples, settings.seed, |i, rng| {
        let x = settings.state_box.sample(rng);
        let x_prime = settings.state_box.sample(rng);
        let u = settings.input_box.sample(rng);
        let u_prime = settings.input_box.sample(rng);
        let theta = settings.theta_box.sample(rng);
        let inputs = named(&[
            ("x", &x),
            ("x_prime", &x_prime),
            ("u", &u),
            ("u_prime", &u_prime),
            ("theta", &theta),
        ]);
        let outcome = (|| -> Result<(f64, f64)> {
            let fx = system.transition(&x, &u, &theta)?;
            let fx_prime = system.transition(&x_prime, &u_prime, &theta)?;
            let lhs = system.state_space().distance(&fx, &fx_prime)?;
            let rhs = moduli
                .alpha_x
                .eval(system.state_space().distance(&x, &x_prime)?)?
                + moduli
                    .alpha_u
                    .eval(system.input_space().distance(&u, &u_prime)?)?;
            Ok((lhs, rhs))
        })();
        match outcome {
            Ok((lhs, rhs)) if lhs > rhs + INEQUALITY_SLACK => vec![Violation {
                sample_index: i,
                inputs,
                lhs,
                rhs,
            }],
            Ok(_) => vec![],
            Err(_) => vec![error_violation(i, inputs)],
        }
    });

    Ok(finish(
        "assumption1",
        settings.n_samples,
        violations,
        settings.boxes(),
        settings.seed,
        "One-step transition continuity against the declared state moduli.",
    ))
}

/// Continuity of the running and terminal costs:
/// `|l0(x,theta) - l0(x',theta)| <= gamma_x(d(x,x')) + gamma_u(d(u,u'))` and
/// `|F(x,theta) - F(x',theta)| <= gamma_N(d(x,x'))`, with Euclidean
/// distances on the box coordinates.
pub fn check_assumption2(
    cost: &CostSpec,
    moduli: &CostModuli,
    settings: &CheckSettings,
) -> Result<CheckReport> {
    cost.check_dims(
        settings.state_box.dimension(),
        settings.input_box.dimension(),
        settings.theta_box.dimension(),
    )?;
    moduli.gamma_x.validate()?;
    moduli.gamma_u.validate()?;
    moduli.gamma_n.validate()?;
    let state_space = SpaceDescriptor::euclidean(settings.state_box.dimension())?;
    let input_space = SpaceDescriptor::euclidean(settings.input_box.dimension())?;

    let violations = run_samples(settings.n_samples, settings.seed, |i, rng| {
        let x = settings.state_box.sample(rng);
        let x_prime = settings.state_box.sample(rng);
        let u = settings.input_box.sample(rng);
        let u_prime = settings.input_box.sample(rng);
        let theta = settings.theta_box.sample(rng);
        let mut found = Vec::new();

        let stage_inputs = named(&[
            ("x", &x),
            ("x_prime", &x_prime),
            ("u", &u),
            ("u_prime", &u_prime),
            ("theta", &theta),
        ]);
        let stage = (|| -> Result<(f64, f64)> {
            let lhs = (cost.ell0().eval(&x, &theta)? - cost.ell0().eval(&x_prime, &theta)?).abs();
            let rhs = moduli.gamma_x.eval(state_space.distance(&x, &x_prime)?)?
                + moduli.gamma_u.eval(input_space.distance(&u, &u_prime)?)?;
            Ok((lhs, rhs))
        })();
        match stage {
            Ok((lhs, rhs)) if lhs > rhs + INEQUALITY_SLACK => found.push(Violation {
                sample_index: i,
                inputs: stage_inputs,
                lhs,
                rhs,
            }),
            Ok(_) => {}
            Err(_) => found.push(error_violation(i, stage_inputs)),
        }

        let terminal_inputs = named(&[("x", &x), ("x_prime", &x_prime), ("theta", &theta)]);
        let terminal = (|| -> Result<(f64, f64)> {
            let lhs =
                (cost.terminal().eval(&x, &theta)? - cost.terminal().eval(&x_prime, &theta)?).abs();
            let rhs = moduli.gamma_n.eval(state_space.distance(&x, &x_prime)?)?;
            Ok((lhs, rhs))
        })();
        match terminal {
            Ok((lhs, rhs)) if lhs > rhs + INEQUALITY_SLACK => found.push(Violation {
                sample_index: i,
                inputs: terminal_inputs,
                lhs,
                rhs,
            }),
            Ok(_) => {}
            Err(_) => found.push(error_violation(i, terminal_inputs)),
        }
        found
    });

    Ok(finish(
        "assumption2",
        settings.n_samples,
        violations,
        settings.boxes(),
        settings.seed,
        "Stage and terminal cost continuity against the declared cost moduli; \
         violations with 5 named inputs are stage-cost, with 3 terminal-cost.",
    ))
}

/// Lower semicontinuity probe for the input penalty: for limit points `u`
/// (the penalty anchor first, then random draws) and approach sequences
/// `u_j = u + 2^{-j} dir`, checks
/// `ell_u(u) <= min over the deep tail of ell_u(u_j) + LSC_TOLERANCE`.
///
/// The tail is the last tenth of the sequence: a continuous penalty sampled
/// along a descent direction sits below its limit value by roughly
/// `slope * 2^-j`, so the liminf proxy must only look where the geometric
/// approach has converged past the tolerance.
///
/// A pass is sampling evidence only; a fail is a conclusive witness against
/// lower semicontinuity along the stored direction.
pub fn check_lsc(
    ell_u: &InputPenalty,
    input_box: &SampleBox,
    n_sequences: usize,
    seq_len: usize,
    seed: u64,
) -> Result<CheckReport> {
    ell_u.check_dims(input_box.dimension())?;
    if seq_len < 2 {
        return Err(crate::Error::input("seq_len must be at least 2"));
    }
    let dim = input_box.dimension();
    let anchor = ell_u.anchor_or_origin(dim);

    let violations = run_samples(n_sequences, seed, |i, rng| {
        let limit = if i == 0 {
            anchor.clone()
        } else {
            input_box.sample(rng)
        };
        let mut direction: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-9 {
            direction = vec![0.0; dim];
            direction[0] = 1.0;
        } else {
            for v in &mut direction {
                *v /= norm;
            }
        }
        let inputs = named(&[("limit", &limit), ("direction", &direction)]);
        let tail_start = seq_len - (seq_len / 10).max(1) + 1;
        let outcome = (|| -> Result<(f64, f64)> {
            let at_limit = ell_u.eval(&limit)?;
            let mut tail_min = f64::INFINITY;
            for j in 1..=seq_len {
                let scale = 0.5_f64.powi(j as i32);
                let point: Vec<f64> = limit
                    .iter()
                    .zip(&direction)
                    .map(|(l, d)| l + scale * d)
                    .collect();
                let value = ell_u.eval(&point)?;
                if j >= tail_start {
                    tail_min = tail_min.min(value);
                }
            }
            Ok((at_limit, tail_min))
        })();
        match outcome {
            Ok((lhs, rhs)) if lhs > rhs + LSC_TOLERANCE => vec![Violation {
                sample_index: i,
                inputs,
                lhs,
                rhs,
            }],
            Ok(_) => vec![],
            Err(_) => vec![error_violation(i, inputs)],
        }
    });

    Ok(finish(
        "lsc",
        n_sequences,
        violations,
        vec![("input".to_string(), input_box.clone())],
        seed,
        "Lower semicontinuity of the input penalty along geometric approach \
         sequences; sample 0 probes the penalty anchor.",
    ))
}

/// Pointwise coercivity `l(x,u,theta) >= r(d_U(u, anchor))` of the full
/// stage cost against the witness.
pub fn check_coercivity(
    problem: &EnsembleProblem,
    witness: &CoercivityWitness,
    settings: &CheckSettings,
) -> Result<CheckReport> {
    settings.check_dims(problem.state_dim(), problem.input_dim(), problem.theta_dim())?;
    witness.check_dims(problem.input_dim())?;

    let violations = run_samples(settings.n_samples, settings.seed, |i, rng| {
        let x = settings.state_box.sample(rng);
        let u = settings.input_box.sample(rng);
        let theta = settings.theta_box.sample(rng);
        let inputs = named(&[("x", &x), ("u", &u), ("theta", &theta)]);
        let outcome = (|| -> Result<(f64, f64)> {
            let lhs = stage_cost(problem.cost(), &x, &u, &theta)?;
            let distance = problem.system().input_space().distance(&u, &witness.anchor)?;
            let rhs = witness.stage_bound(distance)?;
            Ok((lhs, rhs))
        })();
        match outcome {
            Ok((lhs, rhs)) if lhs < rhs - INEQUALITY_SLACK => vec![Violation {
                sample_index: i,
                inputs,
                lhs,
                rhs,
            }],
            Ok(_) => vec![],
            Err(_) => vec![error_violation(i, inputs)],
        }
    });

    Ok(finish(
        "coercivity",
        settings.n_samples,
        violations,
        settings.boxes(),
        settings.seed,
        "Stage cost dominating the coercivity witness; here a violation \
         means lhs < rhs.",
    ))
}

fn inconclusive_precondition(
    check_id: &str,
    failed: &CheckReport,
    boxes: Vec<(String, SampleBox)>,
    seed: u64,
) -> CheckReport {
    CheckReport {
        check_id: check_id.to_string(),
        samples_evaluated: 0,
        violations: Vec::new(),
        total_violations: 0,
        status: CheckStatus::Inconclusive,
        boxes,
        seed,
        note: format!(
            "Precondition check {} failed on these boxes ({} violation(s)); \
             the propagated bound is only meaningful when it holds.",
            failed.check_id, failed.total_violations
        ),
    }
}

/// Propagated state deviation bound over `horizon` steps:
/// `d_X(s_u(M), s_v(M)) <= sum_m alpha^[m](d_U(u(m), v(m)))` for paired
/// rollouts from a shared sampled initial state.
///
/// Runs [`check_assumption1`] first and returns an inconclusive report if
/// it fails.
pub fn check_lemma2_bound(
    system: &SystemFamily,
    moduli: &StateModuli,
    horizon: usize,
    settings: &CheckSettings,
) -> Result<CheckReport> {
    if horizon == 0 {
        return Err(crate::Error::input("horizon must be at least 1"));
    }
    let precondition = check_assumption1(
        system,
        moduli,
        &CheckSettings {
            seed: derive_seed(settings.seed, 0xA55),
            ..settings.clone()
        },
    )?;
    if !precondition.passed() {
        return Ok(inconclusive_precondition(
            "lemma2_bound",
            &precondition,
            settings.boxes(),
            settings.seed,
        ));
    }
    let propagated = propagate_state_moduli(moduli, horizon)?;

    let violations = run_samples(settings.n_samples, settings.seed, |i, rng| {
        let x0 = settings.state_box.sample(rng);
        let theta = settings.theta_box.sample(rng);
        let draw_sequence = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..horizon).map(|_| settings.input_box.sample(rng)).collect()
        };
        let u_steps = draw_sequence(rng);
        let v_steps = draw_sequence(rng);
        let u_flat: Vec<f64> = u_steps.iter().flatten().copied().collect();
        let v_flat: Vec<f64> = v_steps.iter().flatten().copied().collect();
        let inputs = named(&[
            ("x0", &x0),
            ("theta", &theta),
            ("u", &u_flat),
            ("u_prime", &v_flat),
        ]);
        let outcome = (|| -> Result<(f64, f64)> {
            let x0_map = InitialStateMap::constant(x0.clone());
            let u = ControlSequence::new(u_steps.clone())?;
            let v = ControlSequence::new(v_steps.clone())?;
            let su = system.rollout(&x0_map, &u, &theta)?;
            let sv = system.rollout(&x0_map, &v, &theta)?;
            let lhs = system
                .state_space()
                .distance(su.final_state(), sv.final_state())?;
            let mut rhs = 0.0;
            for m in 0..horizon {
                let deviation = system.input_space().distance(u.step(m), v.step(m))?;
                rhs += propagated[m].eval(deviation)?;
            }
            Ok((lhs, rhs))
        })();
        match outcome {
            Ok((lhs, rhs)) if lhs > rhs + INEQUALITY_SLACK => vec![Violation {
                sample_index: i,
                inputs,
                lhs,
                rhs,
            }],
            Ok(_) => vec![],
            Err(_) => vec![error_violation(i, inputs)],
        }
    });

    Ok(finish(
        "lemma2_bound",
        settings.n_samples,
        violations,
        settings.boxes(),
        settings.seed,
        "Final-state deviation against the horizon-propagated moduli; \
         input sequences are stored stacked in step order.",
    ))
}

/// Propagated stage- and terminal-cost deviation bounds over `horizon`
/// steps. Runs [`check_assumption1`] and [`check_assumption2`] first and
/// returns an inconclusive report if either fails.
///
/// Violations labelled with a `("bound", [0.0])` entry are stage-cost,
/// `("bound", [1.0])` terminal-cost.
pub fn check_lemma3_bound(
    problem: &EnsembleProblem,
    state_moduli: &StateModuli,
    cost_moduli: &CostModuli,
    horizon: usize,
    settings: &CheckSettings,
) -> Result<CheckReport> {
    if horizon == 0 {
        return Err(crate::Error::input("horizon must be at least 1"));
    }
    let system = problem.system();
    let cost = problem.cost();
    let derived = CheckSettings {
        seed: derive_seed(settings.seed, 0xA55),
        ..settings.clone()
    };
    let pre1 = check_assumption1(system, state_moduli, &derived)?;
    if !pre1.passed() {
        return Ok(inconclusive_precondition(
            "lemma3_bound",
            &pre1,
            settings.boxes(),
            settings.seed,
        ));
    }
    let pre2 = check_assumption2(cost, cost_moduli, &derived)?;
    if !pre2.passed() {
        return Ok(inconclusive_precondition(
            "lemma3_bound",
            &pre2,
            settings.boxes(),
            settings.seed,
        ));
    }
    let propagated = propagate_cost_moduli(state_moduli, cost_moduli, horizon)?;

    let violations = run_samples(settings.n_samples, settings.seed, |i, rng| {
        let x0 = settings.state_box.sample(rng);
        let theta = settings.theta_box.sample(rng);
        let draw_sequence = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..horizon).map(|_| settings.input_box.sample(rng)).collect()
        };
        let u_steps = draw_sequence(rng);
        let v_steps = draw_sequence(rng);
        let u_flat: Vec<f64> = u_steps.iter().flatten().copied().collect();
        let v_flat: Vec<f64> = v_steps.iter().flatten().copied().collect();
        let base_inputs = |bound_tag: f64| {
            let mut inputs = named(&[
                ("x0", &x0),
                ("theta", &theta),
                ("u", &u_flat),
                ("u_prime", &v_flat),
            ]);
            inputs.push(("bound".to_string(), vec![bound_tag]));
            inputs
        };
        let outcome = (|| -> Result<[(f64, f64); 2]> {
            let x0_map = InitialStateMap::constant(x0.clone());
            let u = ControlSequence::new(u_steps.clone())?;
            let v = ControlSequence::new(v_steps.clone())?;
            let su = system.rollout(&x0_map, &u, &theta)?;
            let sv = system.rollout(&x0_map, &v, &theta)?;
            let deviations: Vec<f64> = (0..horizon)
                .map(|m| system.input_space().distance(u.step(m), v.step(m)))
                .collect::<Result<_>>()?;

            let stage_lhs = (cost.ell0().eval(su.state(horizon - 1), &theta)?
                - cost.ell0().eval(sv.state(horizon - 1), &theta)?)
            .abs();
            let mut stage_rhs = 0.0;
            for m in 0..horizon {
                stage_rhs += propagated.stage[m].eval(deviations[m])?;
            }

            let terminal_lhs = (cost.terminal().eval(su.final_state(), &theta)?
                - cost.terminal().eval(sv.final_state(), &theta)?)
            .abs();
            let mut terminal_rhs = 0.0;
            for m in 0..horizon {
                terminal_rhs += propagated.terminal[m].eval(deviations[m])?;
            }
            Ok([(stage_lhs, stage_rhs), (terminal_lhs, terminal_rhs)])
        })();
        match outcome {
            Ok(sides) => {
                let mut found = Vec::new();
                for (tag, (lhs, rhs)) in sides.into_iter().enumerate() {
                    if lhs > rhs + INEQUALITY_SLACK {
                        found.push(Violation {
                            sample_index: i,
                            inputs: base_inputs(tag as f64),
                            lhs,
                            rhs,
                        });
                    }
                }
                found
            }
            Err(_) => vec![error_violation(i, base_inputs(-1.0))],
        }
    });

    Ok(finish(
        "lemma3_bound",
        settings.n_samples,
        violations,
        settings.boxes(),
        settings.seed,
        "Stage and terminal cost deviation against the horizon-propagated \
         cost moduli.",
    ))
}
