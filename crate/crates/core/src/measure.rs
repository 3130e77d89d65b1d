//! Particle ensembles, discrete measures and target distributions.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::points::Points;
use crate::rng;

/// Tolerance on the total weight of an [`Ensemble`].
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Capability {
    Score,
    UnnormLogDensity,
    Sample,
    Moments,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Capability::Score => "score",
            Capability::UnnormLogDensity => "unnormalized log-density",
            Capability::Sample => "sample",
            Capability::Moments => "moments",
        })
    }
}

/// Atoms with nonnegative masses; total mass need not be one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Points,
    masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Points, masses: Vec<f64>) -> Result<Self> {
        if atoms.len() != masses.len() {
            return Err(Error::InvalidInput(format!(
                "{} atoms but {} masses",
                atoms.len(),
                masses.len()
            )));
        }
        if let Some(i) = masses.iter().position(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "mass {} at atom {i} is not a finite nonnegative number",
                masses[i]
            )));
        }
        Ok(Self { atoms, masses })
    }

    /// Equal mass `1/M` on every atom.
    pub fn uniform(atoms: Points) -> Self {
        let m = atoms.len();
        let masses = vec![1.0 / m as f64; m];
        Self { atoms, masses }
    }

    /// The measure with no atoms.
    pub fn zero(dim: usize) -> Result<Self> {
        Ok(Self {
            atoms: Points::empty(dim)?,
            masses: Vec::new(),
        })
    }

    pub fn atoms(&self) -> &Points {
        &self.atoms
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn dim(&self) -> usize {
        self.atoms.dim()
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Masses rescaled to sum to one.
    pub fn normalized_masses(&self) -> Result<Vec<f64>> {
        let total = self.total_mass();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("measure has zero total mass".into()));
        }
        Ok(self.masses.iter().map(|m| m / total).collect())
    }

    pub fn normalized(&self) -> Result<Self> {
        Ok(Self {
            atoms: self.atoms.clone(),
            masses: self.normalized_masses()?,
        })
    }

    /// Weighted mean and covariance of the normalized measure.
    pub fn moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        weighted_moments(&self.atoms, &self.normalized_masses()?)
    }

    /// I.i.d. draws of atoms with probability proportional to mass.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Points> {
        let index = WeightedIndex::new(&self.masses)
            .map_err(|e| Error::InvalidInput(format!("cannot sample from measure: {e}")))?;
        let mut out = Points::empty(self.dim())?;
        for _ in 0..n {
            out.push(self.atoms.row(index.sample(rng)))?;
        }
        Ok(out)
    }

    /// Systematic resampling: `n` atoms chosen at the points `(u + i)/n` of
    /// the mass CDF, one uniform offset `u` per call. When `n` is a multiple
    /// of the atom count and masses are equal, every atom is picked equally
    /// often.
    pub fn systematic_sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Points> {
        let masses = self.normalized_masses()?;
        let u: f64 = rng.random();
        let mut out = Points::empty(self.dim())?;
        let mut cdf = masses[0];
        let mut j = 0;
        for i in 0..n {
            let p = (u + i as f64) / n as f64;
            while p >= cdf && j + 1 < masses.len() {
                j += 1;
                cdf += masses[j];
            }
            out.push(self.atoms.row(j))?;
        }
        Ok(out)
    }
}

/// A probability ensemble: particle positions and simplex weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    positions: Points,
    weights: Vec<f64>,
}

impl Ensemble {
    /// Weights must already lie on the simplex (to 1e-9); they are then
    /// renormalized exactly.
    pub fn new(positions: Points, weights: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidInput(
                "an ensemble needs at least one particle".into(),
            ));
        }
        if positions.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} particles but {} weights",
                positions.len(),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "weight {} of particle {i} is invalid",
                weights[i]
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let mut e = Self { positions, weights };
        e.renormalize();
        Ok(e)
    }

    pub fn uniform(positions: Points) -> Result<Self> {
        let n = positions.len();
        if n == 0 {
            return Err(Error::InvalidInput(
                "an ensemble needs at least one particle".into(),
            ));
        }
        Ok(Self {
            positions,
            weights: vec![1.0 / n as f64; n],
        })
    }

    /// Builds an ensemble from arbitrary nonnegative weights by normalizing.
    pub fn from_unnormalized(positions: Points, weights: Vec<f64>) -> Result<Self> {
        let m = DiscreteMeasure::new(positions, weights)?;
        let w = m.normalized_masses()?;
        Self::new(m.atoms, w)
    }

    pub fn positions(&self) -> &Points {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions.dim()
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights
            .iter()
            .all(|w| (w - u).abs() <= SIMPLEX_TOL * u.max(1.0))
    }

    pub fn to_measure(&self) -> DiscreteMeasure {
        DiscreteMeasure {
            atoms: self.positions.clone(),
            masses: self.weights.clone(),
        }
    }

    pub fn into_parts(self) -> (Points, Vec<f64>) {
        (self.positions, self.weights)
    }

    pub fn moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        weighted_moments(&self.positions, &self.weights)
    }

    pub(crate) fn from_parts_unchecked(positions: Points, weights: Vec<f64>) -> Self {
        let mut e = Self { positions, weights };
        e.renormalize();
        e
    }

    pub(crate) fn renormalize(&mut self) {
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
    }
}

fn weighted_moments(points: &Points, weights: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = points.dim();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("weights sum to zero".into()));
    }
    let mut mean = DVector::zeros(d);
    for (x, w) in points.rows().zip(weights) {
        for a in 0..d {
            mean[a] += w * x[a];
        }
    }
    mean /= total;
    let mut cov = DMatrix::zeros(d, d);
    for (x, w) in points.rows().zip(weights) {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += w * (x[a] - mean[a]) * (x[b] - mean[b]);
            }
        }
    }
    cov /= total;
    Ok((mean, cov))
}

/// A Gaussian `N(mean, covariance)` with cached Cholesky factor and precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidInput("gaussian mean is empty".into()));
        }
        if covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput(format!("covariance must be {d}x{d}")));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| covariance[i][j]);
        if cov.iter().chain(mean.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "gaussian parameters must be finite".into(),
            ));
        }
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * (1.0 + cov[(i, j)].abs()) {
                    return Err(Error::InvalidInput("covariance is not symmetric".into()));
                }
            }
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("covariance is not positive definite".into()))?;
        let precision = chol.inverse();
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            mean: DVector::from_vec(mean),
            covariance: cov,
            chol: l,
            precision,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    fn centered(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().zip(self.mean.iter()).map(|(a, m)| a - m))
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let c = self.centered(x);
        self.log_norm - 0.5 * c.dot(&(&self.precision * &c))
    }

    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        let c = self.centered(x);
        (-(&self.precision * c)).as_slice().to_vec()
    }

    /// Row-major `−Σ⁻¹`.
    pub fn score_jacobian(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                out[a * d + b] = -self.precision[(a, b)];
            }
        }
        out
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        (&self.mean + &self.chol * z).as_slice().to_vec()
    }
}

/// The distribution being approximated, with capability-based access.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Gaussian(Gaussian),
    Mixture {
        components: Vec<Gaussian>,
        weights: Vec<f64>,
    },
    Empirical(DiscreteMeasure),
}

const ANALYTIC_CAPABILITIES: &[Capability] = &[
    Capability::Score,
    Capability::UnnormLogDensity,
    Capability::Sample,
    Capability::Moments,
];
const EMPIRICAL_CAPABILITIES: &[Capability] = &[Capability::Sample, Capability::Moments];

impl Target {
    pub fn gaussian(mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        Ok(Target::Gaussian(Gaussian::new(mean, covariance)?))
    }

    pub fn mixture(components: Vec<(Vec<f64>, Vec<Vec<f64>>)>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(Error::InvalidInput(
                "mixture needs one weight per component".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidInput(
                "mixture weights must lie on the simplex".into(),
            ));
        }
        let components = components
            .into_iter()
            .map(|(m, c)| Gaussian::new(m, c))
            .collect::<Result<Vec<_>>>()?;
        let d = components[0].dim();
        for c in &components {
            check_dim(d, c.dim())?;
        }
        Ok(Target::Mixture {
            components,
            weights,
        })
    }

    pub fn empirical(measure: DiscreteMeasure) -> Self {
        Target::Empirical(measure)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Target::Gaussian(_) => "gaussian",
            Target::Mixture { .. } => "mixture",
            Target::Empirical(_) => "empirical",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Target::Gaussian(g) => g.dim(),
            Target::Mixture { components, .. } => components[0].dim(),
            Target::Empirical(m) => m.dim(),
        }
    }

    pub fn capabilities(&self) -> &'static [Capability] {
        match self {
            Target::Empirical(_) => EMPIRICAL_CAPABILITIES,
            _ => ANALYTIC_CAPABILITIES,
        }
    }

    pub fn has(&self, capability: Capability) -> bool {
        self.capabilities().contains(&capability)
    }

    pub fn require(&self, capability: Capability) -> Result<()> {
        if self.has(capability) {
            Ok(())
        } else {
            Err(Error::MissingCapability {
                capability,
                target: self.name(),
            })
        }
    }

    /// Log-density up to an additive constant (here: the normalized one).
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.require(Capability::UnnormLogDensity)?;
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            Target::Gaussian(g) => g.log_density(x),
            Target::Mixture {
                components,
                weights,
            } => {
                let logs: Vec<f64> = components
                    .iter()
                    .zip(weights)
                    .map(|(c, w)| w.ln() + c.log_density(x))
                    .collect();
                log_sum_exp(&logs)
            }
            Target::Empirical(_) => unreachable!(),
        })
    }

    /// `∇log π(x)`
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.require(Capability::Score)?;
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            Target::Gaussian(g) => g.score(x),
            Target::Mixture {
                components,
                weights,
            } => {
                let resp = responsibilities(components, weights, x);
                let mut out = vec![0.0; x.len()];
                for (c, r) in components.iter().zip(&resp) {
                    for (o, s) in out.iter_mut().zip(c.score(x)) {
                        *o += r * s;
                    }
                }
                out
            }
            Target::Empirical(_) => unreachable!(),
        })
    }

    /// Row-major Jacobian of the score (the Hessian of `log π`).
    pub fn score_jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.require(Capability::Score)?;
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            Target::Gaussian(g) => g.score_jacobian(),
            Target::Mixture {
                components,
                weights,
            } => {
                // Σ_k r_k (J_k + b_k b_kᵀ) − b bᵀ
                let d = x.len();
                let resp = responsibilities(components, weights, x);
                let mut jac = vec![0.0; d * d];
                let mut mean_score = vec![0.0; d];
                for (c, r) in components.iter().zip(&resp) {
                    let b = c.score(x);
                    let j = c.score_jacobian();
                    for a in 0..d {
                        mean_score[a] += r * b[a];
                        for e in 0..d {
                            jac[a * d + e] += r * (j[a * d + e] + b[a] * b[e]);
                        }
                    }
                }
                for a in 0..d {
                    for e in 0..d {
                        jac[a * d + e] -= mean_score[a] * mean_score[e];
                    }
                }
                jac
            }
            Target::Empirical(_) => unreachable!(),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Points> {
        match self {
            Target::Gaussian(g) => {
                let mut out = Points::empty(g.dim())?;
                for _ in 0..n {
                    out.push(&g.draw(rng))?;
                }
                Ok(out)
            }
            Target::Mixture {
                components,
                weights,
            } => {
                let index = WeightedIndex::new(weights)
                    .map_err(|e| Error::InvalidInput(format!("bad mixture weights: {e}")))?;
                let mut out = Points::empty(self.dim())?;
                for _ in 0..n {
                    let c = &components[index.sample(rng)];
                    out.push(&c.draw(rng))?;
                }
                Ok(out)
            }
            Target::Empirical(m) => m.sample(n, rng),
        }
    }

    /// Mean and covariance.
    pub fn moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        match self {
            Target::Gaussian(g) => Ok((g.mean.clone(), g.covariance.clone())),
            Target::Mixture {
                components,
                weights,
            } => {
                let d = self.dim();
                let mut mean = DVector::zeros(d);
                let mut second = DMatrix::zeros(d, d);
                for (c, w) in components.iter().zip(weights) {
                    mean += *w * &c.mean;
                    second += *w * (&c.covariance + &c.mean * c.mean.transpose());
                }
                let cov = second - &mean * mean.transpose();
                Ok((mean, cov))
            }
            Target::Empirical(m) => m.moments(),
        }
    }

    /// A discrete stand-in for the target: the measure itself for empirical
    /// targets, otherwise `m` seeded i.i.d. draws with equal mass.
    pub fn reference_measure(&self, m: usize, seed: u64) -> Result<DiscreteMeasure> {
        match self {
            Target::Empirical(measure) => measure.normalized(),
            _ => {
                if m == 0 {
                    return Err(Error::InvalidInput(
                        "reference sample size must be positive".into(),
                    ));
                }
                let mut rng = rng::stream(seed, rng::STREAM_REFERENCE);
                Ok(DiscreteMeasure::uniform(self.sample(m, &mut rng)?))
            }
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn responsibilities(components: &[Gaussian], weights: &[f64], x: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = components
        .iter()
        .zip(weights)
        .map(|(c, w)| w.ln() + c.log_density(x))
        .collect();
    let lse = log_sum_exp(&logs);
    logs.iter().map(|l| (l - lse).exp()).collect()
}

/// `n` i.i.d. draws from the target with weights `1/n`, deterministic in `seed`.
pub fn ensemble_from_sampler(target: &Target, n: usize, seed: u64) -> Result<Ensemble> {
    target.require(Capability::Sample)?;
    let mut rng = rng::stream(seed, rng::STREAM_INIT);
    Ensemble::uniform(target.sample(n, &mut rng)?)
}

/// μ and π masses on a shared set of atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRatioTable {
    atoms: Points,
    mu_masses: Vec<f64>,
    pi_masses: Vec<f64>,
}

impl DensityRatioTable {
    pub fn new(atoms: Points, mu_masses: Vec<f64>, pi_masses: Vec<f64>) -> Result<Self> {
        let mu = DiscreteMeasure::new(atoms, mu_masses)?;
        if pi_masses.len() != mu.len() {
            return Err(Error::InvalidInput(
                "mu and pi masses differ in length".into(),
            ));
        }
        if pi_masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidInput(
                "pi masses must be finite and nonnegative".into(),
            ));
        }
        for (i, (m, p)) in mu.masses.iter().zip(&pi_masses).enumerate() {
            if *p > 0.0 && *m <= 0.0 {
                return Err(Error::AbsoluteContinuity {
                    atom: i,
                    pi_mass: *p,
                });
            }
        }
        Ok(Self {
            atoms: mu.atoms,
            mu_masses: mu.masses,
            pi_masses,
        })
    }

    pub fn atoms(&self) -> &Points {
        &self.atoms
    }

    pub fn mu_masses(&self) -> &[f64] {
        &self.mu_masses
    }

    pub fn pi_masses(&self) -> &[f64] {
        &self.pi_masses
    }

    /// The dual force `1 − dπ/dμ` at every atom. Atoms where both masses
    /// vanish carry no μ-mass, so their value never enters an integral
    /// against μ; they get force 1.
    pub fn density_ratio(&self) -> Vec<f64> {
        self.mu_masses
            .iter()
            .zip(&self.pi_masses)
            .map(|(m, p)| if *m > 0.0 { 1.0 - p / m } else { 1.0 })
            .collect()
    }
}
