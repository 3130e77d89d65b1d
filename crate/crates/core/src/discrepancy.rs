//! Exact discrepancies between discrete measures, witness functions and the
//! per-step diagnostics recorded along a flow.
//!
//! All quadratic forms keep the diagonal (V-statistic form), which is the
//! exact value for discrete measures rather than an estimate.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::kernel::{KernelSpec, PairKernel, SteinKernel};
use crate::measure::{Capability, DensityRatioTable, DiscreteMeasure, Ensemble, Target};
use crate::points::Points;

/// Squared MMD: the quadratic form of `k` against the signed measure `a − b`.
///
/// Atoms shared by `a` and `b` (bitwise-equal coordinates) are merged before
/// the double sum, so cancellations happen in the masses rather than in the
/// kernel sums. The result is exactly symmetric in `a` and `b`.
pub fn mmd2<K: PairKernel>(k: &K, a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let (first, second) = if canonical_cmp(a, b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    };
    let (atoms, coef) = signed_difference(first, second);
    Ok(quadratic_form(k, &atoms, &coef))
}

/// Squared KSD `∑ᵢⱼ wᵢ wⱼ s(xᵢ, xⱼ)`.
pub fn ksd2(s: &SteinKernel<'_>, mu: &DiscreteMeasure) -> Result<f64> {
    let scores = s.scores_for(mu.atoms(), false)?;
    let atoms = mu.atoms();
    let w = mu.masses();
    let rows: Vec<f64> = (0..mu.len())
        .into_par_iter()
        .map(|i| {
            let xi = atoms.row(i);
            let bi = &scores[i].score;
            let mut acc = 0.0;
            for j in 0..atoms.len() {
                acc += w[j] * s.value_with(xi, bi, atoms.row(j), &scores[j].score);
            }
            w[i] * acc
        })
        .collect();
    Ok(rows.iter().sum())
}

/// `∫ k(x′, x) d(a − b)(x′)`
pub fn mmd_witness(
    k: &KernelSpec,
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    x: &[f64],
) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    check_dim(a.dim(), x.len())?;
    Ok(weighted_kernel_sum(k, a.atoms(), a.masses(), x)
        - weighted_kernel_sum(k, b.atoms(), b.masses(), x))
}

/// Gradient of [`mmd_witness`] in `x`: `∫ ∇₂k(x′, x) d(a − b)(x′)`.
pub fn mmd_witness_grad(
    k: &KernelSpec,
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    x: &[f64],
) -> Result<Vec<f64>> {
    check_dim(a.dim(), b.dim())?;
    check_dim(a.dim(), x.len())?;
    let mut out = vec![0.0; x.len()];
    for (y, m) in a.atoms().rows().zip(a.masses()) {
        k.add_grad2(y, x, *m, &mut out);
    }
    for (y, m) in b.atoms().rows().zip(b.masses()) {
        k.add_grad2(y, x, -*m, &mut out);
    }
    Ok(out)
}

/// The kernel-smoothed dual force `∑ⱼ μⱼ k(xⱼ, x) (1 − πⱼ/μⱼ)`.
pub fn kernelized_force(k: &KernelSpec, table: &DensityRatioTable, x: &[f64]) -> Result<f64> {
    check_dim(table.atoms().dim(), x.len())?;
    let force = table.density_ratio();
    Ok(table
        .atoms()
        .rows()
        .zip(table.mu_masses())
        .zip(&force)
        .map(|((y, m), f)| m * k.value(y, x) * f)
        .sum())
}

/// Euclidean norm of the mean difference and Frobenius norm of the
/// covariance difference between the ensemble and the target.
pub fn moment_error(e: &Ensemble, target: &Target) -> Result<(f64, f64)> {
    target.require(Capability::Moments)?;
    check_dim(target.dim(), e.dim())?;
    let (m_e, c_e) = e.moments()?;
    let (m_t, c_t) = target.moments()?;
    Ok(((m_e - m_t).norm(), (c_e - c_t).norm()))
}

/// Diagnostics for one recorded step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub time: f64,
    pub mmd2: f64,
    pub ksd2: Option<f64>,
    pub mean_err: f64,
    pub cov_err: f64,
}

impl MetricsRecord {
    pub const CSV_HEADER: &'static str = "step,time,mmd2,ksd2,mean_err,cov_err";

    /// One CSV line (no trailing newline); absent KSD is an empty field.
    pub fn to_csv_row(&self) -> String {
        let ksd2 = self.ksd2.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.step, self.time, self.mmd2, ksd2, self.mean_err, self.cov_err
        )
    }
}

fn weighted_kernel_sum(k: &KernelSpec, atoms: &Points, masses: &[f64], x: &[f64]) -> f64 {
    atoms
        .rows()
        .zip(masses)
        .map(|(y, m)| m * k.value(y, x))
        .sum()
}

/// `∑ᵢ cᵢ ∑ⱼ cⱼ k(xᵢ, xⱼ)`; rows are reduced in index order, so the result
/// does not depend on the thread count.
pub(crate) fn quadratic_form<K: PairKernel>(k: &K, atoms: &Points, coef: &[f64]) -> f64 {
    let rows: Vec<f64> = (0..coef.len())
        .into_par_iter()
        .map(|i| {
            let xi = atoms.row(i);
            let mut acc = 0.0;
            for (j, cj) in coef.iter().enumerate() {
                acc += cj * k.value(xi, atoms.row(j));
            }
            coef[i] * acc
        })
        .collect();
    rows.iter().sum()
}

fn atom_key(x: &[f64]) -> Vec<u64> {
    // + 0.0 folds −0.0 onto 0.0
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Total order on measures used to fix the operand order of [`mmd2`].
fn canonical_cmp(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Ordering {
    a.len()
        .cmp(&b.len())
        .then_with(|| cmp_bits(a.masses(), b.masses()))
        .then_with(|| cmp_bits(a.atoms().as_flat(), b.atoms().as_flat()))
}

fn cmp_bits(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .map(|v| v.to_bits())
        .cmp(b.iter().map(|v| v.to_bits()))
}

/// `first − second` on the union of their atoms, zero coefficients dropped.
fn signed_difference(first: &DiscreteMeasure, second: &DiscreteMeasure) -> (Points, Vec<f64>) {
    let dim = first.dim();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(first.len() + second.len());
    let mut flat: Vec<f64> = Vec::with_capacity((first.len() + second.len()) * dim);
    let mut coef: Vec<f64> = Vec::with_capacity(first.len() + second.len());
    let parts = [(first, 1.0), (second, -1.0)];
    for (measure, sign) in parts {
        for (x, m) in measure.atoms().rows().zip(measure.masses()) {
            let slot = *index.entry(atom_key(x)).or_insert_with(|| {
                flat.extend_from_slice(x);
                coef.push(0.0);
                coef.len() - 1
            });
            coef[slot] += sign * m;
        }
    }
    let keep: Vec<bool> = coef.iter().map(|c| *c != 0.0).collect();
    let mut atoms = Points::from_flat(flat, dim).expect("atoms of valid measures");
    atoms.retain_rows(&keep);
    coef.retain(|c| *c != 0.0);
    (atoms, coef)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn pts(v: &[f64]) -> Points {
        Points::from_scalars(v).unwrap()
    }

    fn dirac(x: f64) -> DiscreteMeasure {
        DiscreteMeasure::uniform(pts(&[x]))
    }

    fn random_measure(rng: &mut impl Rng, m: usize, d: usize) -> DiscreteMeasure {
        let atoms = Points::from_flat((0..m * d).map(|_| rng.random_range(-2.0..2.0)).collect(), d)
            .unwrap();
        let masses = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        DiscreteMeasure::new(atoms, masses).unwrap()
    }

    #[test]
    fn mmd2_examples() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let a = DiscreteMeasure::new(pts(&[0.0, 1.5]), vec![0.3, 0.7]).unwrap();
        assert_eq!(mmd2(&k, &a, &a).unwrap(), 0.0);
        assert_relative_eq!(
            mmd2(&k, &dirac(0.0), &dirac(1.0)).unwrap(),
            0.7869386805747332,
            max_relative = 1e-14
        );
        let swapped = DiscreteMeasure::new(pts(&[1.5, 0.0]), vec![0.7, 0.3]).unwrap();
        let b = dirac(0.4);
        assert_relative_eq!(
            mmd2(&k, &a, &b).unwrap(),
            mmd2(&k, &swapped, &b).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn mmd2_dimension_mismatch() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let a = DiscreteMeasure::uniform(Points::from_rows(&[[0.0, 1.0]]).unwrap());
        assert!(mmd2(&k, &a, &dirac(0.0)).is_err());
    }

    #[test]
    fn mmd2_linear_in_mixture() {
        // μ_t − π = e^{−t}(μ₀ − π) for μ_t = e^{−t}μ₀ + (1 − e^{−t})π
        let k = KernelSpec::inverse_multiquadric(1.0, 0.5).unwrap();
        let mut r = rng::stream(4, 0);
        let mu0 = random_measure(&mut r, 12, 2).normalized().unwrap();
        let pi = random_measure(&mut r, 9, 2).normalized().unwrap();
        let base = mmd2(&k, &mu0, &pi).unwrap();
        for t in [0.1f64, 0.5, 1.0, 2.0, 5.0] {
            let mut atoms = mu0.atoms().clone();
            atoms.extend_from(pi.atoms()).unwrap();
            let decay = (-t).exp();
            let mut masses: Vec<f64> = mu0.masses().iter().map(|m| decay * m).collect();
            masses.extend(pi.masses().iter().map(|m| -(-t).exp_m1() * m));
            let mut_ = DiscreteMeasure::new(atoms, masses).unwrap();
            assert_relative_eq!(
                mmd2(&k, &mut_, &pi).unwrap(),
                (-2.0 * t).exp() * base,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn ksd2_examples() {
        let t = Target::gaussian(vec![0.0], vec![vec![1.0]]).unwrap();
        let s = SteinKernel::new(KernelSpec::gaussian(1.0).unwrap(), &t).unwrap();
        assert_relative_eq!(ksd2(&s, &dirac(0.0)).unwrap(), 1.0, max_relative = 1e-15);

        // π-quadrature measure on a fine grid
        let n = 2001;
        let xs: Vec<f64> = (0..n)
            .map(|i| -10.0 + 20.0 * i as f64 / (n - 1) as f64)
            .collect();
        let dens: Vec<f64> = xs.iter().map(|x| (-0.5 * x * x).exp()).collect();
        let q = DiscreteMeasure::new(pts(&xs), dens)
            .unwrap()
            .normalized()
            .unwrap();
        assert!(ksd2(&s, &q).unwrap() < 1e-4);
    }

    #[test]
    fn ksd2_agrees_with_generic_quadratic_form() {
        let t = Target::gaussian(vec![0.5, -0.2], vec![vec![1.0, 0.3], vec![0.3, 2.0]]).unwrap();
        let s = SteinKernel::new(KernelSpec::inverse_multiquadric(1.0, 0.5).unwrap(), &t).unwrap();
        let mut r = rng::stream(8, 0);
        let mu = random_measure(&mut r, 15, 2).normalized().unwrap();
        let direct = ksd2(&s, &mu).unwrap();
        let generic = mmd2(&s, &mu, &DiscreteMeasure::zero(2).unwrap()).unwrap();
        assert!((direct - generic).abs() < 1e-12);
        assert!(direct > 0.0);
    }

    #[test]
    fn witness_examples() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert_relative_eq!(
            mmd_witness(&k, &dirac(0.0), &dirac(1.0), &[0.0]).unwrap(),
            0.3934693402873666,
            max_relative = 1e-14
        );
        let a = DiscreteMeasure::new(pts(&[0.0, 1.5]), vec![0.3, 0.7]).unwrap();
        for x in [-1.0, 0.0, 0.7, 3.0] {
            assert_eq!(mmd_witness(&k, &a, &a, &[x]).unwrap(), 0.0);
        }
    }

    #[test]
    fn witness_grad_matches_kernel_gradients() {
        let k = KernelSpec::gaussian(0.8).unwrap();
        let mut r = rng::stream(2, 0);
        let a = random_measure(&mut r, 6, 2);
        let b = random_measure(&mut r, 4, 2);
        let x = [0.3, -0.1];
        let mut manual = [0.0; 2];
        for (y, m) in a.atoms().rows().zip(a.masses()) {
            let g = k.grad2(y, &x).unwrap();
            manual[0] += m * g[0];
            manual[1] += m * g[1];
        }
        for (y, m) in b.atoms().rows().zip(b.masses()) {
            let g = k.grad2(y, &x).unwrap();
            manual[0] -= m * g[0];
            manual[1] -= m * g[1];
        }
        let g = mmd_witness_grad(&k, &a, &b, &x).unwrap();
        assert!((g[0] - manual[0]).abs() < 1e-10 && (g[1] - manual[1]).abs() < 1e-10);
        let fd = crate::oracle::finite_diff_grad(
            |p: &[f64]| mmd_witness(&k, &a, &b, p).unwrap(),
            &x,
            1e-5,
        );
        assert!((g[0] - fd[0]).abs() < 1e-8 && (g[1] - fd[1]).abs() < 1e-8);
    }

    #[test]
    fn moment_error_examples() {
        let t = Target::gaussian(vec![1.0, 2.0], vec![vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let e = Ensemble::uniform(Points::from_rows(&[[1.0, 2.0]]).unwrap()).unwrap();
        let (me, ce) = moment_error(&e, &t).unwrap();
        assert_eq!(me, 0.0);
        assert_relative_eq!(
            ce,
            (4.0f64 + 0.25 + 0.25 + 1.0).sqrt(),
            max_relative = 1e-15
        );

        let m = DiscreteMeasure::new(pts(&[0.0, 2.0]), vec![0.5, 0.5]).unwrap();
        let e = Ensemble::new(pts(&[0.0, 2.0]), vec![0.5, 0.5]).unwrap();
        assert_eq!(moment_error(&e, &Target::empirical(m)).unwrap(), (0.0, 0.0));
        let g = Target::gaussian(vec![1.0], vec![vec![1.0]]).unwrap();
        assert_eq!(moment_error(&e, &g).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn kernelized_force_equals_witness() {
        let k = KernelSpec::gaussian(0.7).unwrap();
        let atoms = pts(&[-1.0, 0.0, 0.5, 2.0]);
        let mu = vec![0.1, 0.2, 0.3, 0.4];
        let pi = vec![0.25, 0.0, 0.5, 0.25];
        let table = DensityRatioTable::new(atoms.clone(), mu.clone(), pi.clone()).unwrap();
        let a = DiscreteMeasure::new(atoms.clone(), mu).unwrap();
        let b = DiscreteMeasure::new(atoms, pi).unwrap();
        for x in [-2.0, -0.3, 0.4, 1.7] {
            let f = kernelized_force(&k, &table, &[x]).unwrap();
            let w = mmd_witness(&k, &a, &b, &[x]).unwrap();
            assert!((f - w).abs() < 1e-14);
        }
    }

    #[test]
    fn metrics_csv_row() {
        let r = MetricsRecord {
            step: 3,
            time: 0.30000000000000004,
            mmd2: 0.5,
            ksd2: None,
            mean_err: 1.0,
            cov_err: 0.25,
        };
        assert_eq!(r.to_csv_row(), "3,0.30000000000000004,0.5,,1,0.25");
        let r = MetricsRecord {
            ksd2: Some(2.0),
            ..r
        };
        assert_eq!(r.to_csv_row(), "3,0.30000000000000004,0.5,2,1,0.25");
    }

    proptest! {
        #[test]
        fn mmd2_symmetric_nonnegative_and_permutation_invariant(seed in 0u64..500, m in 1usize..8, n in 1usize..8) {
            let k = KernelSpec::gaussian(1.0).unwrap();
            let mut r = rng::stream(seed, 0);
            let a = random_measure(&mut r, m, 2);
            let b = random_measure(&mut r, n, 2);
            let ab = mmd2(&k, &a, &b).unwrap();
            prop_assert_eq!(ab, mmd2(&k, &b, &a).unwrap());
            prop_assert!(ab > 0.0);
            // reverse the atoms of a
            let rows: Vec<Vec<f64>> = a.atoms().rows().rev().map(|x| x.to_vec()).collect();
            let masses: Vec<f64> = a.masses().iter().rev().cloned().collect();
            let rev = DiscreteMeasure::new(Points::from_rows(&rows).unwrap(), masses).unwrap();
            let ab_rev = mmd2(&k, &rev, &b).unwrap();
            prop_assert!((ab - ab_rev).abs() <= 1e-13 * (1.0 + ab));
        }
    }
}
