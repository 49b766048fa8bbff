//! Discrete measures on the parameter space.
//!
//! Everything downstream integrates against a [`DiscreteMeasure`]: a finite
//! list of atoms with nonnegative weights summing to one. Measures come from
//! three sources: seeded i.i.d. sampling of a [`ThetaDistribution`]
//! ([`empirical_measure`]), tensor-product Gauss-Legendre quadrature of a
//! density ([`quadrature_measure`], the reference for convergence
//! experiments), or explicit atom lists. One-dimensional measures compare
//! through [`wasserstein1_1d`]; higher-dimensional ones per marginal.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::rng::stream_rng;
use crate::Error;

/// Tolerance on the weight sum of a probability measure.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// A finitely supported probability measure on `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::input("a discrete measure needs at least one atom"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::input(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].len();
        if dim == 0 {
            return Err(Error::input("atoms must have dimension >= 1"));
        }
        for (i, a) in atoms.iter().enumerate() {
            if a.len() != dim {
                return Err(Error::input(format!(
                    "atom {i} has dimension {}, expected {dim}",
                    a.len()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("atom {i} has non-finite coordinates")));
            }
        }
        let mut sum = 0.0;
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::input(format!("weight {i} is {w}, must be >= 0")));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::input(format!(
                "weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOLERANCE:e}"
            )));
        }
        Ok(DiscreteMeasure { atoms, weights })
    }

    /// Point mass at a single atom.
    pub fn dirac(atom: Vec<f64>) -> Result<Self> {
        Self::new(vec![atom], vec![1.0])
    }

    /// Equal weights `1/k` on the given atoms.
    pub fn uniform_atoms(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let k = atoms.len();
        if k == 0 {
            return Err(Error::input("a discrete measure needs at least one atom"));
        }
        Self::new(atoms, vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dimension(&self) -> usize {
        self.atoms[0].len()
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Convex combination `lambda mu + (1 - lambda) nu` as an atom-union
    /// measure (atoms of `mu` first, then of `nu`).
    pub fn mix(lambda: f64, mu: &Self, nu: &Self) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::input(format!(
                "mixture coefficient must lie in [0, 1], got {lambda}"
            )));
        }
        if mu.dimension() != nu.dimension() {
            return Err(Error::input("mixture components have different dimensions"));
        }
        let mut atoms = mu.atoms.clone();
        atoms.extend(nu.atoms.iter().cloned());
        let mut weights: Vec<f64> = mu.weights.iter().map(|w| lambda * w).collect();
        weights.extend(nu.weights.iter().map(|w| (1.0 - lambda) * w));
        // Renormalise away the single rounding step so the constructor's
        // weight-sum check cannot trip on an exact-by-construction mixture.
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
        Self::new(atoms, weights)
    }

    /// Projection onto one coordinate (weights unchanged).
    pub fn marginal(&self, dim: usize) -> Result<Self> {
        if dim >= self.dimension() {
            return Err(Error::input(format!(
                "marginal dimension {dim} out of range for a {}-dimensional measure",
                self.dimension()
            )));
        }
        Self::new(
            self.atoms.iter().map(|a| vec![a[dim]]).collect(),
            self.weights.clone(),
        )
    }

    /// Writes `theta_1,..,theta_d,weight` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for d in 0..self.dimension() {
            if d > 0 {
                write!(out, ",")?;
            }
            write!(out, "theta_{}", d + 1)?;
        }
        writeln!(out, ",weight")?;
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            for v in a {
                write!(out, "{},", fmt_f64(*v))?;
            }
            writeln!(out, "{}", fmt_f64(*w))?;
        }
        Ok(())
    }
}

/// Shortest round-trip decimal for a float, with `-0` normalised to `0`.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

/// Parameter distribution registry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaDistribution {
    /// Uniform on an axis-aligned box; sides must be non-degenerate.
    Uniform {
        #[serde(rename = "box")]
        bounds: Vec<[f64; 2]>,
    },
    /// Gaussian `N(mean, cov)` conditioned on the box.
    TruncatedGaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
        #[serde(rename = "box")]
        bounds: Vec<[f64; 2]>,
    },
    /// Finitely supported distribution given by explicit atoms.
    Finite {
        atoms: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

impl ThetaDistribution {
    pub fn uniform(bounds: Vec<[f64; 2]>) -> Result<Self> {
        let d = ThetaDistribution::Uniform { bounds };
        d.validate()?;
        Ok(d)
    }

    pub fn finite(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let d = ThetaDistribution::Finite { atoms, weights };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ThetaDistribution::Uniform { bounds } => {
                if bounds.is_empty() {
                    return Err(Error::input("uniform distribution needs a non-empty box"));
                }
                for [lo, hi] in bounds {
                    if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
                        return Err(Error::input(format!(
                            "uniform box side [{lo}, {hi}] must satisfy lo < hi"
                        )));
                    }
                }
            }
            ThetaDistribution::TruncatedGaussian { mean, cov, bounds } => {
                let d = mean.len();
                if d == 0 {
                    return Err(Error::input("gaussian mean must have dimension >= 1"));
                }
                check_dim("gaussian box", bounds.len(), d)?;
                check_dim("covariance rows", cov.len(), d)?;
                for row in cov {
                    check_dim("covariance columns", row.len(), d)?;
                }
                for [lo, hi] in bounds {
                    if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
                        return Err(Error::input(format!(
                            "gaussian box side [{lo}, {hi}] must satisfy lo < hi"
                        )));
                    }
                }
                cholesky_of(cov)?;
            }
            ThetaDistribution::Finite { atoms, weights } => {
                DiscreteMeasure::new(atoms.clone(), weights.clone())?;
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match self {
            ThetaDistribution::Uniform { bounds } => bounds.len(),
            ThetaDistribution::TruncatedGaussian { mean, .. } => mean.len(),
            ThetaDistribution::Finite { atoms, .. } => atoms.first().map_or(0, |a| a.len()),
        }
    }

    /// A compact box containing the support.
    pub fn support_box(&self) -> Vec<[f64; 2]> {
        match self {
            ThetaDistribution::Uniform { bounds } => bounds.clone(),
            ThetaDistribution::TruncatedGaussian { bounds, .. } => bounds.clone(),
            ThetaDistribution::Finite { atoms, .. } => {
                let d = self.dimension();
                (0..d)
                    .map(|j| {
                        let lo = atoms.iter().map(|a| a[j]).fold(f64::INFINITY, f64::min);
                        let hi = atoms.iter().map(|a| a[j]).fold(f64::NEG_INFINITY, f64::max);
                        [lo, hi]
                    })
                    .collect()
            }
        }
    }
}

fn cholesky_of(cov: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = cov.len();
    let flat: Vec<f64> = cov.iter().flatten().copied().collect();
    let m = DMatrix::from_row_slice(d, d, &flat);
    if (&m - m.transpose()).amax() > 0.0 {
        return Err(Error::input("covariance matrix must be exactly symmetric"));
    }
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::input("covariance matrix must be positive definite"))
}

/// `k` i.i.d. draws with weights `1/k`, deterministic per
/// `(distribution, k, seed)`.
///
/// The generator stream index is `k` itself, so enlarging a sweep's size
/// grid never reshuffles the draws of the sizes already computed.
pub fn empirical_measure(dist: &ThetaDistribution, k: usize, seed: u64) -> Result<DiscreteMeasure> {
    dist.validate()?;
    if k == 0 {
        return Err(Error::input("empirical measure needs k >= 1"));
    }
    let mut rng = stream_rng(seed, k as u64);
    let mut atoms = Vec::with_capacity(k);
    match dist {
        ThetaDistribution::Uniform { bounds } => {
            for _ in 0..k {
                atoms.push(
                    bounds
                        .iter()
                        .map(|[lo, hi]| rng.gen_range(*lo..*hi))
                        .collect(),
                );
            }
        }
        ThetaDistribution::TruncatedGaussian { mean, cov, bounds } => {
            let l = cholesky_of(cov)?;
            let d = mean.len();
            for i in 0..k {
                let mut accepted = None;
                for _attempt in 0..10_000 {
                    let z: Vec<f64> = (0..d)
                        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .collect();
                    let mut theta = mean.clone();
                    for r in 0..d {
                        for c in 0..=r {
                            theta[r] += l[(r, c)] * z[c];
                        }
                    }
                    let inside = theta
                        .iter()
                        .zip(bounds)
                        .all(|(t, [lo, hi])| *t >= *lo && *t <= *hi);
                    if inside {
                        accepted = Some(theta);
                        break;
                    }
                }
                atoms.push(accepted.ok_or_else(|| {
                    Error::input(format!(
                        "rejection sampling for draw {i} found no point in the box after 10000 attempts; the box carries too little gaussian mass"
                    ))
                })?);
            }
        }
        ThetaDistribution::Finite { atoms: support, weights } => {
            let mut cdf = Vec::with_capacity(weights.len());
            let mut acc = 0.0;
            for w in weights {
                acc += w;
                cdf.push(acc);
            }
            for _ in 0..k {
                let r: f64 = rng.gen::<f64>() * acc;
                let idx = cdf.partition_point(|c| *c < r).min(support.len() - 1);
                atoms.push(support[idx].clone());
            }
        }
    }
    DiscreteMeasure::uniform_atoms(atoms)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre polynomial from the Chebyshev initial
/// guess; nodes are computed for one half and mirrored so symmetric pairs
/// are exact.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::input("quadrature needs at least one node"));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        // x starts near the (n-1-i)-th root counted from the left.
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
        nodes[i] = -x;
        weights[i] = w;
    }
    if n % 2 == 1 {
        // the middle node is exactly zero by symmetry
        let mid = n / 2;
        nodes[mid] = 0.0;
        let (_, dp) = legendre_with_derivative(n, 0.0);
        weights[mid] = 2.0 / (dp * dp);
    }
    Ok((nodes, weights))
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Tensor-product Gauss-Legendre reference measure for a density on a box.
///
/// Nodes are the mapped tensor grid; weights are the product quadrature
/// weights, multiplied by the density at the node for the gaussian kind, and
/// renormalised to sum to one. Finite distributions are their own reference.
pub fn quadrature_measure(dist: &ThetaDistribution, nodes_per_dim: usize) -> Result<DiscreteMeasure> {
    dist.validate()?;
    if nodes_per_dim == 0 {
        return Err(Error::input("quadrature needs at least one node per dimension"));
    }
    let bounds = match dist {
        ThetaDistribution::Uniform { bounds } => bounds,
        ThetaDistribution::TruncatedGaussian { bounds, .. } => bounds,
        ThetaDistribution::Finite { .. } => {
            return Err(Error::input(
                "a finite distribution is its own reference measure; use its atoms directly",
            ))
        }
    };
    let d = bounds.len();
    let node_count = (nodes_per_dim as f64).powi(d as i32);
    if node_count > 2e6 {
        return Err(Error::input(format!(
            "tensor grid would hold {node_count} nodes; reduce nodes_per_dim or the dimension"
        )));
    }
    let (base_nodes, base_weights) = gauss_legendre(nodes_per_dim)?;
    let mapped: Vec<(Vec<f64>, Vec<f64>)> = bounds
        .iter()
        .map(|[lo, hi]| {
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            (
                base_nodes.iter().map(|t| mid + half * t).collect(),
                base_weights.iter().map(|w| w * half).collect(),
            )
        })
        .collect();

    let total = (0..d).fold(1usize, |acc, _| acc * nodes_per_dim);
    let mut atoms = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut index = vec![0usize; d];
    loop {
        let atom: Vec<f64> = (0..d).map(|j| mapped[j].0[index[j]]).collect();
        let mut w: f64 = (0..d).map(|j| mapped[j].1[index[j]]).product();
        if let ThetaDistribution::TruncatedGaussian { mean, cov, .. } = dist {
            w *= gaussian_density(&atom, mean, cov)?;
        }
        atoms.push(atom);
        weights.push(w);
        // odometer increment over the tensor grid, last dimension fastest
        let mut j = d;
        loop {
            if j == 0 {
                break;
            }
            j -= 1;
            index[j] += 1;
            if index[j] < nodes_per_dim {
                break;
            }
            index[j] = 0;
        }
        if index.iter().all(|i| *i == 0) {
            break;
        }
    }
    let sum: f64 = weights.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::numeric(format!(
            "quadrature weights summed to {sum}; the density is degenerate on the box"
        )));
    }
    for w in &mut weights {
        *w /= sum;
    }
    DiscreteMeasure::new(atoms, weights)
}

fn gaussian_density(x: &[f64], mean: &[f64], cov: &[Vec<f64>]) -> Result<f64> {
    let l = cholesky_of(cov)?;
    let d = mean.len();
    // Solve L y = (x - mean) by forward substitution; the density needs
    // only the quadratic form and det(L) for normalisation (a constant
    // factor, which renormalisation cancels anyway).
    let mut y = vec![0.0; d];
    for r in 0..d {
        let mut acc = x[r] - mean[r];
        for c in 0..r {
            acc -= l[(r, c)] * y[c];
        }
        y[r] = acc / l[(r, r)];
    }
    let quad: f64 = y.iter().map(|v| v * v).sum();
    Ok((-0.5 * quad).exp())
}

/// Wasserstein-1 distance between one-dimensional discrete measures via the
/// merged-CDF integral.
pub fn wasserstein1_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.dimension() != 1 || nu.dimension() != 1 {
        return Err(Error::unsupported(
            "wasserstein1_1d is defined for one-dimensional measures; compare marginals individually",
        ));
    }
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(mu.len() + nu.len());
    for (a, w) in mu.atoms().iter().zip(mu.weights()) {
        events.push((a[0], *w));
    }
    for (a, w) in nu.atoms().iter().zip(nu.weights()) {
        events.push((a[0], -*w));
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("atoms are finite"));
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    for i in 0..events.len() - 1 {
        cdf_gap += events[i].1;
        let dx = events[i + 1].0 - events[i].0;
        if dx > 0.0 {
            total += cdf_gap.abs() * dx;
        }
    }
    Ok(total)
}

/// Tail-mass table: entry `(i, j)` is `sum_k w_k phi_k 1{phi_k > M_j}` for
/// the `i`-th measure's weighted values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailMassTable {
    pub thresholds: Vec<f64>,
    /// One row per input measure, one column per threshold.
    pub rows: Vec<Vec<f64>>,
    /// Whether the last row's entry at the largest threshold is <= epsilon.
    pub pass: bool,
    /// This table samples integrands; it cannot certify uniform
    /// integrability.
    pub note: &'static str,
}

/// Diagnostic for uniform integrability: how much weighted mass each
/// measure's integrand carries above each threshold.
///
/// `values[i]` holds `(weight, value)` pairs for measure `i`; thresholds
/// must be strictly increasing. `pass` reports whether the final measure's
/// tail at the largest threshold is at most `epsilon`.
pub fn tail_mass_diagnostic(
    values: &[Vec<(f64, f64)>],
    thresholds: &[f64],
    epsilon: f64,
) -> Result<TailMassTable> {
    if thresholds.is_empty() {
        return Err(Error::input("tail-mass diagnostic needs a non-empty threshold grid"));
    }
    if values.is_empty() {
        return Err(Error::input("tail-mass diagnostic needs at least one measure"));
    }
    for pair in thresholds.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(Error::input("thresholds must be strictly increasing"));
        }
    }
    let rows: Vec<Vec<f64>> = values
        .iter()
        .map(|vals| {
            thresholds
                .iter()
                .map(|m| {
                    vals.iter()
                        .filter(|(_, phi)| *phi > *m)
                        .map(|(w, phi)| w * phi)
                        .sum()
                })
                .collect()
        })
        .collect();
    let pass = *rows
        .last()
        .and_then(|r| r.last())
        .expect("non-empty by validation")
        <= epsilon;
    Ok(TailMassTable {
        thresholds: thresholds.to_vec(),
        rows,
        pass,
        note: "diagnostic, not certificate",
    })
}
