//! Radial kernels, their analytic derivatives, and the Langevin Stein kernel.
//!
//! Both kernel families are radial, `k(x, y) = φ(‖x − y‖²)`, so every
//! derivative is written in terms of the profile `φ` and its derivatives in
//! the squared distance `s`:
//!
//! - `∇₂k(x, y) = −2 φ'(s) (x − y)`
//! - `tr ∇₁∇₂k(x, y) = −4 φ''(s) s − 2 d φ'(s)`

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::measure::{Capability, Target};
use crate::points::{dot, sq_dist, Points};

/// A symmetric, bounded, positive-definite kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `exp(−‖x − y‖² / (2σ²))`
    Gaussian { sigma: f64 },
    /// `(c² + ‖x − y‖²)^(−β)`
    #[serde(alias = "imq")]
    InverseMultiquadric { c: f64, beta: f64 },
}

/// Anything that can be evaluated on a pair of points; the quadratic forms in
/// [`crate::discrepancy`] are generic over it.
pub trait PairKernel: Sync {
    /// Kernel value without dimension checks.
    fn value(&self, x: &[f64], y: &[f64]) -> f64;
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let k = KernelSpec::Gaussian { sigma };
        k.validate()?;
        Ok(k)
    }

    pub fn inverse_multiquadric(c: f64, beta: f64) -> Result<Self> {
        let k = KernelSpec::InverseMultiquadric { c, beta };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "gaussian bandwidth must be positive, got {sigma}"
                    )));
                }
            }
            KernelSpec::InverseMultiquadric { c, beta } => {
                if !(c.is_finite() && c > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "IMQ offset must be positive, got {c}"
                    )));
                }
                if !(beta > 0.0 && beta < 1.0) {
                    return Err(Error::InvalidInput(format!(
                        "IMQ exponent must lie in (0, 1), got {beta}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `[φ, φ', φ'', φ''']` at squared distance `s`.
    #[inline]
    fn profile(&self, s: f64) -> [f64; 4] {
        match *self {
            KernelSpec::Gaussian { sigma } => {
                let a = -0.5 / (sigma * sigma);
                let v = (a * s).exp();
                [v, a * v, a * a * v, a * a * a * v]
            }
            KernelSpec::InverseMultiquadric { c, beta } => {
                let u = c * c + s;
                let v = u.powf(-beta);
                let d1 = -beta * v / u;
                let d2 = -(beta + 1.0) * d1 / u;
                let d3 = -(beta + 2.0) * d2 / u;
                [v, d1, d2, d3]
            }
        }
    }

    /// Value on the diagonal, which is also the supremum of `|k|`.
    pub fn diagonal(&self) -> f64 {
        self.profile(0.0)[0]
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(x.len(), y.len())?;
        Ok(self.value(x, y))
    }

    /// Gradient in the second argument.
    pub fn grad2(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dim(x.len(), y.len())?;
        let mut out = vec![0.0; x.len()];
        self.add_grad2(x, y, 1.0, &mut out);
        Ok(out)
    }

    /// Gradient in the first argument.
    pub fn grad1(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dim(x.len(), y.len())?;
        let mut out = vec![0.0; x.len()];
        self.add_grad2(y, x, 1.0, &mut out);
        Ok(out)
    }

    /// `out += scale · ∇₂k(x, y)`
    #[inline]
    pub(crate) fn add_grad2(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        let s = sq_dist(x, y);
        let d1 = self.profile(s)[1];
        let f = -2.0 * d1 * scale;
        for ((o, xa), ya) in out.iter_mut().zip(x).zip(y) {
            *o += f * (xa - ya);
        }
    }

    /// `tr ∇₁∇₂k(x, y)`
    pub fn trace_cross_hessian(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(x.len(), y.len())?;
        let s = sq_dist(x, y);
        let p = self.profile(s);
        Ok(-4.0 * p[2] * s - 2.0 * x.len() as f64 * p[1])
    }

    /// Median of pairwise distances divided by √2, so that the Gaussian
    /// kernel reads `exp(−r² / median²)`. Never applied implicitly.
    pub fn median_heuristic(points: &Points) -> Result<f64> {
        let n = points.len();
        if n < 2 {
            return Err(Error::InvalidInput(
                "median heuristic needs two points".into(),
            ));
        }
        let mut d: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                d.push(sq_dist(points.row(i), points.row(j)).sqrt());
            }
        }
        d.sort_by(f64::total_cmp);
        let m = d.len();
        let median = if m % 2 == 1 {
            d[m / 2]
        } else {
            0.5 * (d[m / 2 - 1] + d[m / 2])
        };
        if median <= 0.0 {
            return Err(Error::InvalidInput("all points coincide".into()));
        }
        Ok(median / std::f64::consts::SQRT_2)
    }
}

impl PairKernel for KernelSpec {
    #[inline]
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.profile(sq_dist(x, y))[0]
    }
}

/// The Langevin Stein kernel of a base kernel and a target score `b = ∇log π`:
///
/// `s(x,y) = tr ∇₁∇₂k + ∇₁k·b(y) + ∇₂k·b(x) + k b(x)·b(y)`.
#[derive(Debug, Clone, Copy)]
pub struct SteinKernel<'a> {
    base: KernelSpec,
    target: &'a Target,
}

/// Score and score Jacobian of the target at one point, cached so that the
/// O(N²) pair loops only touch the target O(N) times.
#[derive(Debug, Clone)]
pub(crate) struct ScoreAt {
    pub score: Vec<f64>,
    /// Row-major `d×d`, entry `(a, b) = ∂b_a/∂x_b`.
    pub jacobian: Option<Vec<f64>>,
}

impl<'a> SteinKernel<'a> {
    pub fn new(base: KernelSpec, target: &'a Target) -> Result<Self> {
        base.validate()?;
        target.require(Capability::Score)?;
        Ok(Self { base, target })
    }

    pub fn base(&self) -> &KernelSpec {
        &self.base
    }

    pub fn target(&self) -> &Target {
        self.target
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), y.len())?;
        let bx = self.target.score(x)?;
        let by = self.target.score(y)?;
        Ok(self.value_with(x, &bx, y, &by))
    }

    /// `∇₂s(x, y)`; needs the score Jacobian at `y`.
    pub fn grad2(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), y.len())?;
        let bx = self.target.score(x)?;
        let at_y = self.score_at(y, true)?;
        let mut out = vec![0.0; x.len()];
        self.add_grad2_with(
            x,
            &bx,
            y,
            &at_y.score,
            at_y.jacobian.as_deref().unwrap(),
            1.0,
            &mut out,
        );
        Ok(out)
    }

    pub(crate) fn score_at(&self, x: &[f64], with_jacobian: bool) -> Result<ScoreAt> {
        let score = self.target.score(x)?;
        let jacobian = if with_jacobian {
            Some(self.target.score_jacobian(x)?)
        } else {
            None
        };
        Ok(ScoreAt { score, jacobian })
    }

    pub(crate) fn scores_for(&self, points: &Points, with_jacobian: bool) -> Result<Vec<ScoreAt>> {
        check_dim(self.dim(), points.dim())?;
        points
            .rows()
            .map(|x| self.score_at(x, with_jacobian))
            .collect()
    }

    #[inline]
    pub(crate) fn value_with(&self, x: &[f64], bx: &[f64], y: &[f64], by: &[f64]) -> f64 {
        let d = x.len() as f64;
        let s = sq_dist(x, y);
        let [phi, d1, d2, _] = self.base.profile(s);
        // r = x − y, Δb = b(x) − b(y)
        let r_db: f64 = x
            .iter()
            .zip(y)
            .zip(bx.iter().zip(by))
            .map(|((xa, ya), (bxa, bya))| (xa - ya) * (bxa - bya))
            .sum();
        -4.0 * d2 * s - 2.0 * d * d1 - 2.0 * d1 * r_db + phi * dot(bx, by)
    }

    /// `out += scale · ∇₂s(x, y)`
    #[allow(clippy::too_many_arguments)]
    #[inline]
    pub(crate) fn add_grad2_with(
        &self,
        x: &[f64],
        bx: &[f64],
        y: &[f64],
        by: &[f64],
        jy: &[f64],
        scale: f64,
        out: &mut [f64],
    ) {
        let dim = x.len();
        let d = dim as f64;
        let s = sq_dist(x, y);
        let [phi, d1, d2, d3] = self.base.profile(s);
        let mut r_db = 0.0;
        for a in 0..dim {
            r_db += (x[a] - y[a]) * (bx[a] - by[a]);
        }
        let bxby = dot(bx, by);
        // coefficient of r collected from every radial term
        let cr = 8.0 * (d3 * s + d2) + 4.0 * d * d2 + 4.0 * d2 * r_db - 2.0 * d1 * bxby;
        for b in 0..dim {
            // (Jᵀ r)_b and (Jᵀ b(x))_b
            let mut jt_r = 0.0;
            let mut jt_bx = 0.0;
            for a in 0..dim {
                let j_ab = jy[a * dim + b];
                jt_r += j_ab * (x[a] - y[a]);
                jt_bx += j_ab * bx[a];
            }
            let g = cr * (x[b] - y[b]) + 2.0 * d1 * ((bx[b] - by[b]) + jt_r) + phi * jt_bx;
            out[b] += scale * g;
        }
    }
}

impl PairKernel for SteinKernel<'_> {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let bx = self
            .target
            .score(x)
            .expect("stein kernel target exposes a score");
        let by = self
            .target
            .score(y)
            .expect("stein kernel target exposes a score");
        self.value_with(x, &bx, y, &by)
    }
}
