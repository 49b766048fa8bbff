//! Parametrised discrete-time system families and trajectory rollout.
//!
//! A [`SystemFamily`] bundles a transition map `x_+ = f(x, u, theta)` from
//! the built-in registry with its state/input/parameter spaces and, when
//! available, declared one-step continuity moduli. The registry is closed
//! (no user callbacks): a compiled CLI cannot load untrusted functions, and
//! the shipped families are chosen so the continuity assumption holds
//! globally (linear families, pendulum) or on declared compact boxes
//! (logistic).
//!
//! States are never clamped; divergence surfaces as a numeric error rather
//! than silent saturation, so sweep statistics are never contaminated by
//! clipping.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::comparison::{ComparisonFunction, StateModuli};
use crate::error::{check_dim, Result};
use crate::spaces::SpaceDescriptor;
use crate::Error;

/// Transition map registry.
#[derive(Clone, Debug, PartialEq)]
pub enum FamilyKind {
    /// `f(x, u, theta) = theta * x + u`, all dimensions 1.
    ScalarLinear,
    /// `f(x, u, theta) = A(theta) x + B(theta) u` with `A`, `B` affine in
    /// theta: `a[0] + sum_j theta_j a[j+1]`, likewise `b`.
    MatrixLinear {
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
    },
    /// `f(x, u, theta) = theta * x * (1 - x) + u`, all dimensions 1.
    LogisticControl,
    /// Explicit Euler step of the damped pendulum with `theta = (mass,
    /// length)` and state `(angle, angular velocity)`:
    /// `x1_+ = x1 + dt x2`,
    /// `x2_+ = x2 + dt (-(g/L) sin x1 - d/(m L^2) x2 + u/(m L^2))`.
    PendulumEuler { dt: f64, damping: f64, gravity: f64 },
}

/// A system family together with its spaces and optional declared moduli.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemFamily {
    kind: FamilyKind,
    state_space: SpaceDescriptor,
    input_space: SpaceDescriptor,
    theta_space: SpaceDescriptor,
    declared_moduli: Option<StateModuli>,
}

/// Map from parameters to a state vector, used for initial states
/// `x0(theta)` and tracking references `x_ref(theta)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialStateMap {
    Constant { value: Vec<f64> },
    /// `x = matrix * theta + offset` (rows of `matrix` are state
    /// coordinates).
    Affine {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
}

impl InitialStateMap {
    pub fn constant(value: Vec<f64>) -> Self {
        InitialStateMap::Constant { value }
    }

    /// Checks the map produces `state_dim` vectors from `theta_dim` inputs
    /// without evaluating it.
    pub fn check_dims(&self, theta_dim: usize, state_dim: usize) -> Result<()> {
        match self {
            InitialStateMap::Constant { value } => {
                check_dim("constant initial state", value.len(), state_dim)
            }
            InitialStateMap::Affine { matrix, offset } => {
                check_dim("affine initial-state offset", offset.len(), state_dim)?;
                check_dim("affine initial-state matrix rows", matrix.len(), state_dim)?;
                for row in matrix {
                    check_dim("affine initial-state matrix columns", row.len(), theta_dim)?;
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, theta: &[f64], state_dim: usize) -> Result<Vec<f64>> {
        match self {
            InitialStateMap::Constant { value } => {
                check_dim("constant initial state", value.len(), state_dim)?;
                Ok(value.clone())
            }
            InitialStateMap::Affine { matrix, offset } => {
                check_dim("affine initial-state offset", offset.len(), state_dim)?;
                check_dim("affine initial-state matrix rows", matrix.len(), state_dim)?;
                let mut out = offset.clone();
                for (row, o) in matrix.iter().zip(out.iter_mut()) {
                    check_dim("affine initial-state matrix columns", row.len(), theta.len())?;
                    *o += row.iter().zip(theta).map(|(p, t)| p * t).sum::<f64>();
                }
                Ok(out)
            }
        }
    }
}

/// A length-N open-loop input sequence.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ControlSequence {
    steps: Vec<Vec<f64>>,
}

impl ControlSequence {
    pub fn new(steps: Vec<Vec<f64>>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::input("control sequence must have horizon >= 1"));
        }
        let dim = steps[0].len();
        if dim == 0 {
            return Err(Error::input("control entries must have dimension >= 1"));
        }
        for (n, s) in steps.iter().enumerate() {
            if s.len() != dim {
                return Err(Error::input(format!(
                    "control entry {n} has dimension {}, expected {dim}",
                    s.len()
                )));
            }
        }
        Ok(ControlSequence { steps })
    }

    /// All-zero sequence (the default anchor) of the given shape.
    pub fn zeros(horizon: usize, input_dim: usize) -> Result<Self> {
        Self::new(vec![vec![0.0; input_dim]; horizon])
    }

    /// Constant sequence repeating `value`.
    pub fn repeat(value: Vec<f64>, horizon: usize) -> Result<Self> {
        Self::new(vec![value; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn input_dim(&self) -> usize {
        self.steps[0].len()
    }

    pub fn step(&self, n: usize) -> &[f64] {
        &self.steps[n]
    }

    pub fn steps(&self) -> &[Vec<f64>] {
        &self.steps
    }

    /// Stacks the sequence into one vector `(u(0); ...; u(N-1))`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.steps.iter().flatten().copied().collect()
    }

    /// Inverse of [`ControlSequence::to_flat`].
    pub fn from_flat(flat: &[f64], input_dim: usize) -> Result<Self> {
        if input_dim == 0 || flat.is_empty() || flat.len() % input_dim != 0 {
            return Err(Error::input(format!(
                "flat control vector of length {} does not factor into entries of dimension {input_dim}",
                flat.len()
            )));
        }
        Self::new(flat.chunks(input_dim).map(|c| c.to_vec()).collect())
    }

    /// Product-metric distance `max_n d_U(u(n), v(n))`.
    pub fn sup_distance(&self, other: &Self, space: &SpaceDescriptor) -> Result<f64> {
        if self.horizon() != other.horizon() {
            return Err(Error::input(format!(
                "control sequences have horizons {} and {}",
                self.horizon(),
                other.horizon()
            )));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.steps.iter().zip(&other.steps) {
            worst = worst.max(space.distance(a, b)?);
        }
        Ok(worst)
    }
}

/// A rolled-out state trajectory `s(0..N)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n]
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectories are non-empty")
    }

    /// Number of transitions (`states` holds one more entry).
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }
}

impl SystemFamily {
    /// The scalar family `f(x, u, theta) = theta x + u`.
    pub fn scalar_linear(declared_moduli: Option<StateModuli>) -> Self {
        SystemFamily {
            kind: FamilyKind::ScalarLinear,
            state_space: SpaceDescriptor::euclidean(1).expect("dim 1"),
            input_space: SpaceDescriptor::euclidean(1).expect("dim 1"),
            theta_space: SpaceDescriptor::euclidean(1).expect("dim 1"),
            declared_moduli,
        }
    }

    /// The logistic family `f(x, u, theta) = theta x (1 - x) + u`.
    pub fn logistic(declared_moduli: Option<StateModuli>) -> Self {
        SystemFamily {
            kind: FamilyKind::LogisticControl,
            state_space: SpaceDescriptor::euclidean(1).expect("dim 1"),
            input_space: SpaceDescriptor::euclidean(1).expect("dim 1"),
            theta_space: SpaceDescriptor::euclidean(1).expect("dim 1"),
            declared_moduli,
        }
    }

    /// Matrix-linear family from affine matrix pencils: `a` holds
    /// `A_0, A_1, .., A_d` (state x state), `b` holds `B_0, .., B_d`
    /// (state x input), and `A(theta) = A_0 + sum_j theta_j A_{j+1}`.
    pub fn matrix_linear(
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        declared_moduli: Option<StateModuli>,
    ) -> Result<Self> {
        if a.is_empty() || b.is_empty() || a.len() != b.len() {
            return Err(Error::input(
                "matrix-linear family needs matching non-empty A and B pencils",
            ));
        }
        let nx = a[0].nrows();
        let nu = b[0].ncols();
        let ntheta = a.len() - 1;
        if nx == 0 || nu == 0 || ntheta == 0 {
            return Err(Error::input(
                "matrix-linear family needs state, input, and theta dimensions >= 1",
            ));
        }
        for m in &a {
            if m.nrows() != nx || m.ncols() != nx {
                return Err(Error::input("A pencil matrices must all be state x state"));
            }
        }
        for m in &b {
            if m.nrows() != nx || m.ncols() != nu {
                return Err(Error::input("B pencil matrices must all be state x input"));
            }
        }
        Ok(SystemFamily {
            kind: FamilyKind::MatrixLinear { a, b },
            state_space: SpaceDescriptor::euclidean(nx)?,
            input_space: SpaceDescriptor::euclidean(nu)?,
            theta_space: SpaceDescriptor::euclidean(ntheta)?,
            declared_moduli,
        })
    }

    /// Damped pendulum under explicit Euler with `theta = (mass, length)`.
    pub fn pendulum_euler(
        dt: f64,
        damping: f64,
        gravity: f64,
        declared_moduli: Option<StateModuli>,
    ) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::input(format!("pendulum step size must be positive, got {dt}")));
        }
        if !(damping >= 0.0) || !gravity.is_finite() || !damping.is_finite() {
            return Err(Error::input(
                "pendulum damping must be nonnegative and gravity finite",
            ));
        }
        Ok(SystemFamily {
            kind: FamilyKind::PendulumEuler { dt, damping, gravity },
            state_space: SpaceDescriptor::euclidean(2)?,
            input_space: SpaceDescriptor::euclidean(1)?,
            theta_space: SpaceDescriptor::euclidean(2)?,
            declared_moduli,
        })
    }

    /// Builds a registry family from its config name, flat parameter array,
    /// and dimensions. Layout for `matrix_linear` with dims `(nx, nu, d)`:
    /// `A_0..A_d` row-major (each `nx*nx`), then `B_0..B_d` (each `nx*nu`).
    /// `pendulum_euler` takes `[dt, damping, gravity]`; the scalar families
    /// take no parameters.
    pub fn from_registry(
        family_id: &str,
        params: &[f64],
        dims: Option<(usize, usize, usize)>,
        declared_moduli: Option<StateModuli>,
    ) -> Result<Self> {
        match family_id {
            "scalar_linear" => {
                if !params.is_empty() {
                    return Err(Error::input("scalar_linear takes no parameters"));
                }
                Ok(Self::scalar_linear(declared_moduli))
            }
            "logistic" => {
                if !params.is_empty() {
                    return Err(Error::input("logistic takes no parameters"));
                }
                Ok(Self::logistic(declared_moduli))
            }
            "pendulum_euler" => {
                if params.len() != 3 {
                    return Err(Error::input(
                        "pendulum_euler takes parameters [dt, damping, gravity]",
                    ));
                }
                Self::pendulum_euler(params[0], params[1], params[2], declared_moduli)
            }
            "matrix_linear" => {
                let (nx, nu, d) = dims.ok_or_else(|| {
                    Error::input("matrix_linear requires dims {state, input, theta}")
                })?;
                if nx == 0 || nu == 0 || d == 0 {
                    return Err(Error::input("matrix_linear dims must be >= 1"));
                }
                let expect = (d + 1) * (nx * nx + nx * nu);
                if params.len() != expect {
                    return Err(Error::input(format!(
                        "matrix_linear with dims ({nx},{nu},{d}) needs {expect} parameters, got {}",
                        params.len()
                    )));
                }
                let mut offset = 0;
                let mut a = Vec::with_capacity(d + 1);
                for _ in 0..=d {
                    a.push(DMatrix::from_row_slice(nx, nx, &params[offset..offset + nx * nx]));
                    offset += nx * nx;
                }
                let mut b = Vec::with_capacity(d + 1);
                for _ in 0..=d {
                    b.push(DMatrix::from_row_slice(nx, nu, &params[offset..offset + nx * nu]));
                    offset += nx * nu;
                }
                Self::matrix_linear(a, b, declared_moduli)
            }
            other => Err(Error::input(format!(
                "unknown system family {other:?}; registry: scalar_linear, matrix_linear, logistic, pendulum_euler"
            ))),
        }
    }

    /// Registry name of the family.
    pub fn family_id(&self) -> &'static str {
        match &self.kind {
            FamilyKind::ScalarLinear => "scalar_linear",
            FamilyKind::MatrixLinear { .. } => "matrix_linear",
            FamilyKind::LogisticControl => "logistic",
            FamilyKind::PendulumEuler { .. } => "pendulum_euler",
        }
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn state_space(&self) -> &SpaceDescriptor {
        &self.state_space
    }

    pub fn input_space(&self) -> &SpaceDescriptor {
        &self.input_space
    }

    pub fn theta_space(&self) -> &SpaceDescriptor {
        &self.theta_space
    }

    pub fn declared_moduli(&self) -> Option<&StateModuli> {
        self.declared_moduli.as_ref()
    }

    pub fn set_declared_moduli(&mut self, moduli: Option<StateModuli>) {
        self.declared_moduli = moduli;
    }

    /// Evaluates `A(theta)` and `B(theta)` for the matrix-linear family.
    pub fn linear_matrices(&self, theta: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        check_dim("theta", theta.len(), self.theta_space.dimension())?;
        match &self.kind {
            FamilyKind::ScalarLinear => Ok((
                DMatrix::from_element(1, 1, theta[0]),
                DMatrix::from_element(1, 1, 1.0),
            )),
            FamilyKind::MatrixLinear { a, b } => {
                let mut am = a[0].clone();
                let mut bm = b[0].clone();
                for (j, t) in theta.iter().enumerate() {
                    am += &a[j + 1] * *t;
                    bm += &b[j + 1] * *t;
                }
                Ok((am, bm))
            }
            _ => Err(Error::unsupported(format!(
                "family {} is not linear in the state and input",
                self.family_id()
            ))),
        }
    }

    /// One transition step `f(x, u, theta)`.
    pub fn transition(&self, x: &[f64], u: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        check_dim("state", x.len(), self.state_space.dimension())?;
        check_dim("input", u.len(), self.input_space.dimension())?;
        check_dim("theta", theta.len(), self.theta_space.dimension())?;
        let next = match &self.kind {
            FamilyKind::ScalarLinear => vec![theta[0] * x[0] + u[0]],
            FamilyKind::LogisticControl => vec![theta[0] * x[0] * (1.0 - x[0]) + u[0]],
            FamilyKind::MatrixLinear { a, b } => {
                let mut out = vec![0.0; x.len()];
                let d = theta.len();
                for i in 0..x.len() {
                    let mut acc = 0.0;
                    for k in 0..x.len() {
                        let mut aik = a[0][(i, k)];
                        for j in 0..d {
                            aik += theta[j] * a[j + 1][(i, k)];
                        }
                        acc += aik * x[k];
                    }
                    for k in 0..u.len() {
                        let mut bik = b[0][(i, k)];
                        for j in 0..d {
                            bik += theta[j] * b[j + 1][(i, k)];
                        }
                        acc += bik * u[k];
                    }
                    out[i] = acc;
                }
                out
            }
            FamilyKind::PendulumEuler { dt, damping, gravity } => {
                let (m, l) = (theta[0], theta[1]);
                let inertia = m * l * l;
                let accel = -(gravity / l) * x[0].sin() - damping / inertia * x[1]
                    + u[0] / inertia;
                vec![x[0] + dt * x[1], x[1] + dt * accel]
            }
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "family {} produced a non-finite state from x={x:?}, u={u:?}, theta={theta:?}",
                self.family_id()
            )));
        }
        Ok(next)
    }

    /// Rolls out the trajectory `s(0) = x0_map(theta)`,
    /// `s(n+1) = f(s(n), u(n), theta)`.
    pub fn rollout(
        &self,
        x0_map: &InitialStateMap,
        u: &ControlSequence,
        theta: &[f64],
    ) -> Result<Trajectory> {
        check_dim("input entries", u.input_dim(), self.input_space.dimension())?;
        let x0 = x0_map.eval(theta, self.state_space.dimension())?;
        let mut states = Vec::with_capacity(u.horizon() + 1);
        states.push(x0);
        for n in 0..u.horizon() {
            let next = self
                .transition(states.last().expect("non-empty"), u.step(n), theta)
                .map_err(|e| match e {
                    Error::Numeric(msg) => Error::numeric(format!("step {n}: {msg}")),
                    other => other,
                })?;
            states.push(next);
        }
        Ok(Trajectory { states })
    }

    /// Sound default moduli on a compact theta box (Euclidean spaces only).
    ///
    /// Linear families take the worst operator norm over the box corners
    /// (valid globally in `x`, `u`); the pendulum bounds its Jacobian
    /// entrywise using `|sin a - sin b| <= |a - b|` (also global); the
    /// logistic family additionally needs a state box because its Lipschitz
    /// constant grows with `|x|`, and the returned modulus is only valid
    /// while trajectories stay inside that box.
    pub fn default_moduli(
        &self,
        theta_box: &[[f64; 2]],
        state_box: Option<&[[f64; 2]]>,
    ) -> Result<StateModuli> {
        check_dim("theta box", theta_box.len(), self.theta_space.dimension())?;
        for [lo, hi] in theta_box {
            if !(lo <= hi) {
                return Err(Error::input(format!("empty theta box side [{lo}, {hi}]")));
            }
        }
        let floor = 1e-12;
        let (cx, cu) = match &self.kind {
            FamilyKind::ScalarLinear => {
                let t = theta_box[0][0].abs().max(theta_box[0][1].abs());
                (t, 1.0)
            }
            FamilyKind::LogisticControl => {
                let sb = state_box.ok_or_else(|| {
                    Error::input("logistic default moduli need a state box")
                })?;
                check_dim("state box", sb.len(), 1)?;
                let tmax = theta_box[0][0].abs().max(theta_box[0][1].abs());
                // d/dx [x(1-x)] = 1 - 2x; extremal at the box ends.
                let slope = (1.0 - 2.0 * sb[0][0]).abs().max((1.0 - 2.0 * sb[0][1]).abs());
                (tmax * slope, 1.0)
            }
            FamilyKind::MatrixLinear { .. } => {
                if theta_box.len() > 20 {
                    return Err(Error::input(
                        "default moduli enumerate box corners; theta dimension is limited to 20",
                    ));
                }
                let mut cx = 0.0f64;
                let mut cu = 0.0f64;
                for corner in box_corners(theta_box) {
                    let (am, bm) = self.linear_matrices(&corner)?;
                    cx = cx.max(operator_norm(&am));
                    cu = cu.max(operator_norm(&bm));
                }
                (cx, cu)
            }
            FamilyKind::PendulumEuler { dt, damping, gravity } => {
                let [mbox, lbox] = [theta_box[0], theta_box[1]];
                if mbox[0] <= 0.0 || lbox[0] <= 0.0 {
                    return Err(Error::input(
                        "pendulum default moduli need positive mass and length boxes",
                    ));
                }
                let inertia_min = mbox[0] * lbox[0] * lbox[0];
                let a21 = dt * gravity.abs() / lbox[0];
                let a22 = (1.0 - dt * damping / (mbox[0] * lbox[0] * lbox[0]))
                    .abs()
                    .max((1.0 - dt * damping / (mbox[1] * lbox[1] * lbox[1])).abs());
                let bound = DMatrix::from_row_slice(2, 2, &[1.0, *dt, a21, a22]);
                (operator_norm(&bound), dt / inertia_min)
            }
        };
        Ok(StateModuli {
            alpha_x: ComparisonFunction::power(cx.max(floor), 1.0)?,
            alpha_u: ComparisonFunction::power(cu.max(floor), 1.0)?,
        })
    }
}

/// All corners of a box, enumerated in a fixed order.
fn box_corners(bounds: &[[f64; 2]]) -> Vec<Vec<f64>> {
    let d = bounds.len();
    assert!(d <= 20, "corner enumeration limited to 20 dimensions");
    (0..1usize << d)
        .map(|mask| {
            (0..d)
                .map(|j| if mask >> j & 1 == 0 { bounds[j][0] } else { bounds[j][1] })
                .collect()
        })
        .collect()
}

/// Spectral norm via SVD.
fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(steps: &[&[f64]]) -> ControlSequence {
        ControlSequence::new(steps.iter().map(|s| s.to_vec()).collect()).unwrap()
    }

    #[test]
    fn scalar_linear_transition() {
        let sys = SystemFamily::scalar_linear(None);
        assert_eq!(sys.transition(&[1.0], &[0.0], &[0.5]).unwrap(), vec![0.5]);
        assert_eq!(sys.transition(&[1.0], &[1.0], &[0.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn logistic_fixed_point() {
        let sys = SystemFamily::logistic(None);
        assert_eq!(sys.transition(&[0.5], &[0.0], &[2.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn transition_checks_dimensions() {
        let sys = SystemFamily::scalar_linear(None);
        assert!(matches!(
            sys.transition(&[1.0, 2.0], &[0.0], &[0.5]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn rollout_geometric_decay() {
        let sys = SystemFamily::scalar_linear(None);
        let x0 = InitialStateMap::constant(vec![1.0]);
        let traj = sys.rollout(&x0, &seq(&[&[0.0], &[0.0]]), &[0.5]).unwrap();
        assert_eq!(traj.states(), &[vec![1.0], vec![0.5], vec![0.25]]);
    }

    #[test]
    fn rollout_with_zero_theta() {
        let sys = SystemFamily::scalar_linear(None);
        let x0 = InitialStateMap::constant(vec![1.0]);
        let traj = sys.rollout(&x0, &seq(&[&[1.0], &[0.0]]), &[0.0]).unwrap();
        assert_eq!(traj.states(), &[vec![1.0], vec![1.0], vec![0.0]]);
    }

    /// Two-step hand recursion re-derived through an independent
    /// single-step loop rather than the rollout method.
    #[test]
    fn rollout_matches_independent_single_step_loop() {
        let sys = SystemFamily::scalar_linear(None);
        let x0 = InitialStateMap::constant(vec![1.0]);
        let u = seq(&[&[1.0], &[-1.0]]);
        let traj = sys.rollout(&x0, &u, &[0.5]).unwrap();
        assert_eq!(traj.states(), &[vec![1.0], vec![1.5], vec![-0.25]]);

        let mut x = vec![1.0];
        let mut replay = vec![x.clone()];
        for n in 0..u.horizon() {
            x = sys.transition(&x, u.step(n), &[0.5]).unwrap();
            replay.push(x.clone());
        }
        assert_eq!(traj.states(), &replay[..]);
    }

    /// Replay invariant on a less trivial family.
    #[test]
    fn pendulum_rollout_replays_bit_exactly() {
        let sys = SystemFamily::pendulum_euler(0.05, 0.1, 9.81, None).unwrap();
        let x0 = InitialStateMap::constant(vec![0.3, -0.2]);
        let theta = [1.1, 0.9];
        let u = seq(&[&[0.4], &[-0.1], &[0.0], &[0.25]]);
        let traj = sys.rollout(&x0, &u, &theta).unwrap();
        assert_eq!(traj.horizon(), 4);
        for n in 0..u.horizon() {
            let step = sys.transition(traj.state(n), u.step(n), &theta).unwrap();
            assert_eq!(step, traj.state(n + 1).to_vec());
        }
    }

    #[test]
    fn horizon_additivity() {
        let sys = SystemFamily::logistic(None);
        let x0 = InitialStateMap::constant(vec![0.3]);
        let theta = [1.7];
        let u_full = seq(&[&[0.1], &[-0.05], &[0.02]]);
        let u_head = seq(&[&[0.1], &[-0.05]]);
        let full = sys.rollout(&x0, &u_full, &theta).unwrap();
        let head = sys.rollout(&x0, &u_head, &theta).unwrap();
        assert_eq!(&full.states()[..3], head.states());
        let last = sys
            .transition(head.final_state(), u_full.step(2), &theta)
            .unwrap();
        assert_eq!(full.final_state(), &last[..]);
    }

    #[test]
    fn divergence_is_a_numeric_error_with_step_index() {
        let sys = SystemFamily::logistic(None);
        let x0 = InitialStateMap::constant(vec![1e200]);
        // theta * x * (1 - x) overflows immediately.
        let err = sys.rollout(&x0, &seq(&[&[0.0], &[0.0]]), &[2.0]).unwrap_err();
        match err {
            Error::Numeric(msg) => assert!(msg.contains("step 0"), "message was: {msg}"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn affine_initial_state_map() {
        let map = InitialStateMap::Affine {
            matrix: vec![vec![1.0, 0.0], vec![0.5, -1.0]],
            offset: vec![0.0, 2.0],
        };
        assert_eq!(map.eval(&[3.0, 1.0], 2).unwrap(), vec![3.0, 2.5]);
    }

    #[test]
    fn matrix_linear_from_registry_round_trips_layout() {
        // nx=2, nu=1, d=1: A0, A1 (4 each), then B0, B1 (2 each).
        // All entries dyadic so the pencil sums are exact.
        let params = vec![
            0.5, 0.125, 0.0, 0.5, // A0
            0.25, 0.0, 0.0, 0.125, // A1
            1.0, 0.5, // B0
            0.0, 0.25, // B1
        ];
        let sys =
            SystemFamily::from_registry("matrix_linear", &params, Some((2, 1, 1)), None).unwrap();
        let theta = [2.0];
        // A(2) = [[1.0, 0.125], [0, 0.75]], B(2) = [[1.0], [1.0]].
        let next = sys.transition(&[1.0, 1.0], &[1.0], &theta).unwrap();
        assert_eq!(next, vec![2.125, 1.75]);
        let (am, bm) = sys.linear_matrices(&theta).unwrap();
        assert_eq!(am, DMatrix::from_row_slice(2, 2, &[1.0, 0.125, 0.0, 0.75]));
        assert_eq!(bm, DMatrix::from_row_slice(2, 1, &[1.0, 1.0]));
    }

    #[test]
    fn registry_rejects_unknown_family_and_bad_params() {
        assert!(SystemFamily::from_registry("van_der_pol", &[], None, None).is_err());
        assert!(SystemFamily::from_registry("scalar_linear", &[1.0], None, None).is_err());
        assert!(SystemFamily::from_registry("matrix_linear", &[1.0], Some((2, 1, 1)), None).is_err());
    }

    #[test]
    fn default_moduli_bound_one_step_deviations() {
        use crate::rng::stream_rng;
        use rand::Rng;

        let theta_box = [[-1.0, 1.0]];
        let sys = SystemFamily::scalar_linear(None);
        let moduli = sys.default_moduli(&theta_box, None).unwrap();
        let mut rng = stream_rng(11, 0);
        for _ in 0..1000 {
            let (x, xp): (f64, f64) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let (u, up): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let t = rng.gen_range(-1.0..1.0);
            let lhs = (sys.transition(&[x], &[u], &[t]).unwrap()[0]
                - sys.transition(&[xp], &[up], &[t]).unwrap()[0])
                .abs();
            let rhs = moduli.alpha_x.eval((x - xp).abs()).unwrap()
                + moduli.alpha_u.eval((u - up).abs()).unwrap();
            assert!(lhs <= rhs + 1e-12, "lhs={lhs} rhs={rhs}");
        }
    }

    #[test]
    fn pendulum_default_moduli_bound_one_step_deviations() {
        use crate::rng::stream_rng;
        use rand::Rng;

        let theta_box = [[0.8, 1.2], [0.8, 1.2]];
        let sys = SystemFamily::pendulum_euler(0.05, 0.1, 9.81, None).unwrap();
        let moduli = sys.default_moduli(&theta_box, None).unwrap();
        let space = SpaceDescriptor::euclidean(2).unwrap();
        let mut rng = stream_rng(12, 0);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let xp: Vec<f64> = (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let u = [rng.gen_range(-2.0..2.0)];
            let up = [rng.gen_range(-2.0..2.0)];
            let theta = [rng.gen_range(0.8..1.2), rng.gen_range(0.8..1.2)];
            let fa = sys.transition(&x, &u, &theta).unwrap();
            let fb = sys.transition(&xp, &up, &theta).unwrap();
            let lhs = space.distance(&fa, &fb).unwrap();
            let rhs = moduli
                .alpha_x
                .eval(space.distance(&x, &xp).unwrap())
                .unwrap()
                + moduli.alpha_u.eval((u[0] - up[0]).abs()).unwrap();
            assert!(lhs <= rhs + 1e-12, "lhs={lhs} rhs={rhs}");
        }
    }

    #[test]
    fn control_sequence_flat_round_trip() {
        let u = seq(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let flat = u.to_flat();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(ControlSequence::from_flat(&flat, 2).unwrap(), u);
        assert!(ControlSequence::from_flat(&flat, 4).is_err());
    }

    #[test]
    fn sup_distance_is_the_product_metric() {
        let space = SpaceDescriptor::euclidean(1).unwrap();
        let a = seq(&[&[0.0], &[1.0]]);
        let b = seq(&[&[0.5], &[3.0]]);
        assert_eq!(a.sup_distance(&b, &space).unwrap(), 2.0);
    }
}
