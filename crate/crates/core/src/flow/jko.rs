use crate::error::{check_dim, Error, Result};
use crate::kernel::{KernelSpec, PairKernel};
use crate::measure::DiscreteMeasure;
use crate::points::Points;

/// Stopping tolerance on the projected-gradient residual.
pub const JKO_TOL: f64 = 1e-8;
pub const JKO_MAX_ITER: usize = 100_000;
const POWER_ITERS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct JkoSolution {
    pub weights: Vec<f64>,
    pub iterations: usize,
    /// `‖w − P(w − ∇f̃(w))‖∞` at the returned weights, `f̃` being the
    /// objective divided by `1 + 1/η`.
    pub residual: f64,
}

/// One MMD–MMD proximal step on a fixed support:
///
/// `argmin_{w ∈ Δ} ½ MMD²(w, π̂) + 1/(2η) MMD²(w, prev)`.
///
/// Solved by accelerated projected gradient with adaptive restart.
pub fn jko_step(
    support: &Points,
    prev_weights: &[f64],
    target_samples: &DiscreteMeasure,
    k: &KernelSpec,
    eta: f64,
) -> Result<JkoSolution> {
    let problem = Problem::new(support, prev_weights, target_samples, k, eta)?;
    problem.solve()
}

/// The proximal objective itself, for diagnostics and comparisons.
pub fn jko_objective(
    support: &Points,
    weights: &[f64],
    prev_weights: &[f64],
    target_samples: &DiscreteMeasure,
    k: &KernelSpec,
    eta: f64,
) -> Result<f64> {
    let problem = Problem::new(support, prev_weights, target_samples, k, eta)?;
    check_dim(support.len(), weights.len())?;
    Ok(problem.objective(weights))
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

struct Problem {
    n: usize,
    gram: Vec<f64>,
    prev: Vec<f64>,
    /// `⟨k(xᵢ, ·), π̂⟩`
    target_embed: Vec<f64>,
    target_norm: f64,
    eta: f64,
}

impl Problem {
    fn new(
        support: &Points,
        prev: &[f64],
        target: &DiscreteMeasure,
        k: &KernelSpec,
        eta: f64,
    ) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "proximal parameter must be positive, got {eta}"
            )));
        }
        check_dim(support.dim(), target.dim())?;
        let n = support.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty support".into()));
        }
        check_dim(n, prev.len())?;
        if prev.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || (prev.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidInput(
                "previous weights must lie on the simplex".into(),
            ));
        }
        let v = target.normalized_masses()?;
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                gram[i * n + j] = k.value(support.row(i), support.row(j));
            }
        }
        let target_embed = (0..n)
            .map(|i| {
                target
                    .atoms()
                    .rows()
                    .zip(&v)
                    .map(|(y, m)| m * k.value(support.row(i), y))
                    .sum()
            })
            .collect();
        let mut target_norm = 0.0;
        for (yi, vi) in target.atoms().rows().zip(&v) {
            for (yj, vj) in target.atoms().rows().zip(&v) {
                target_norm += vi * vj * k.value(yi, yj);
            }
        }
        Ok(Self {
            n,
            gram,
            prev: prev.to_vec(),
            target_embed,
            target_norm,
            eta,
        })
    }

    fn gram_mul(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.gram[i * self.n + j] * w[j]).sum())
            .collect()
    }

    fn objective(&self, w: &[f64]) -> f64 {
        let kw = self.gram_mul(w);
        let kp = self.gram_mul(&self.prev);
        let wkw: f64 = w.iter().zip(&kw).map(|(a, b)| a * b).sum();
        let wb: f64 = w.iter().zip(&self.target_embed).map(|(a, b)| a * b).sum();
        let wkp: f64 = w.iter().zip(&kp).map(|(a, b)| a * b).sum();
        let pkp: f64 = self.prev.iter().zip(&kp).map(|(a, b)| a * b).sum();
        0.5 * (wkw - 2.0 * wb + self.target_norm) + (wkw - 2.0 * wkp + pkp) / (2.0 * self.eta)
    }

    /// Linear term `c` of the normalized gradient `K w − c`.
    fn linear_term(&self) -> Vec<f64> {
        let kp = self.gram_mul(&self.prev);
        let scale = 1.0 / (1.0 + self.eta);
        self.target_embed
            .iter()
            .zip(&kp)
            .map(|(b, q)| scale * (self.eta * b + q))
            .collect()
    }

    fn lipschitz(&self) -> f64 {
        let mut v = vec![1.0 / (self.n as f64).sqrt(); self.n];
        let mut lambda = 0.0;
        for _ in 0..POWER_ITERS {
            let kv = self.gram_mul(&v);
            let norm = kv.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            lambda = norm;
            v = kv.into_iter().map(|x| x / norm).collect();
        }
        let trace: f64 = (0..self.n).map(|i| self.gram[i * self.n + i]).sum();
        (1.05 * lambda).min(trace).max(f64::MIN_POSITIVE)
    }

    fn residual(&self, w: &[f64], c: &[f64]) -> f64 {
        let g = self.gram_mul(w);
        let step: Vec<f64> = w
            .iter()
            .zip(g.iter().zip(c))
            .map(|(wi, (gi, ci))| wi - (gi - ci))
            .collect();
        project_to_simplex(&step)
            .iter()
            .zip(w)
            .map(|(p, wi)| (p - wi).abs())
            .fold(0.0, f64::max)
    }

    fn solve(&self) -> Result<JkoSolution> {
        let c = self.linear_term();
        let inv_l = 1.0 / self.lipschitz();
        let mut x = project_to_simplex(&self.prev);
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut residual = f64::INFINITY;
        for it in 0..JKO_MAX_ITER {
            residual = self.residual(&x, &c);
            if residual < JKO_TOL {
                return Ok(JkoSolution {
                    weights: x,
                    iterations: it,
                    residual,
                });
            }
            let gy = self.gram_mul(&y);
            let trial: Vec<f64> = y
                .iter()
                .zip(gy.iter().zip(&c))
                .map(|(yi, (gi, ci))| yi - inv_l * (gi - ci))
                .collect();
            let x_new = project_to_simplex(&trial);
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            // restart momentum when it points uphill
            let uphill: f64 = y
                .iter()
                .zip(&x_new)
                .zip(&x)
                .map(|((yi, xn), xo)| (yi - xn) * (xn - xo))
                .sum();
            if uphill > 0.0 {
                t = 1.0;
                y = x_new.clone();
            } else {
                let m = (t - 1.0) / t_new;
                y = x_new
                    .iter()
                    .zip(&x)
                    .map(|(xn, xo)| xn + m * (xn - xo))
                    .collect();
                t = t_new;
            }
            x = x_new;
        }
        Err(Error::Convergence {
            iterations: JKO_MAX_ITER,
            residual,
        })
    }
}
