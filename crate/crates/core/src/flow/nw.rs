use crate::error::{check_dim, Error, Result};
use crate::kernel::{KernelSpec, PairKernel};
use crate::measure::{DiscreteMeasure, Ensemble};

/// Value of the locally normalized (Nadaraya–Watson) witness at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NwEstimate {
    pub value: f64,
    /// Every kernel weight around the point underflowed; `value` is then 0.
    pub degenerate: bool,
}

/// Local-regression form of the dual force:
/// `f̂(x) = ∑ᵢ wᵢ k(yᵢ, x)/Z(x) − ∑ₗ vₗ k(zₗ, x)/Z(x)` with
/// `Z(x) = ∑ᵢ wᵢ k(yᵢ, x)` the μ-side kernel density. It is the MMD
/// witness divided by the positive factor `Z(x)`.
pub fn nw_witness(
    e: &Ensemble,
    target_samples: &DiscreteMeasure,
    k: &KernelSpec,
    x: &[f64],
) -> Result<NwEstimate> {
    check_dim(e.dim(), target_samples.dim())?;
    check_dim(e.dim(), x.len())?;
    if target_samples.is_empty() {
        return Err(Error::InvalidInput("target sample is empty".into()));
    }
    let v = target_samples.normalized_masses()?;
    let mu_kde: f64 = e
        .positions()
        .rows()
        .zip(e.weights())
        .map(|(y, w)| w * k.value(y, x))
        .sum();
    let pi_kde: f64 = target_samples
        .atoms()
        .rows()
        .zip(&v)
        .map(|(z, m)| m * k.value(z, x))
        .sum();
    if !(mu_kde >= f64::MIN_POSITIVE) {
        return Ok(NwEstimate {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(NwEstimate {
        value: (mu_kde - pi_kde) / mu_kde,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrepancy::mmd_witness;
    use crate::points::Points;

    fn pts(v: &[f64]) -> Points {
        Points::from_scalars(v).unwrap()
    }

    #[test]
    fn equal_samples_give_zero() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let e = Ensemble::uniform(pts(&[0.0, 1.0, 2.5])).unwrap();
        let t = DiscreteMeasure::uniform(pts(&[0.0, 1.0, 2.5]));
        for x in [-1.0, 0.5, 3.0] {
            assert_eq!(nw_witness(&e, &t, &k, &[x]).unwrap().value, 0.0);
        }
        let e1 = Ensemble::uniform(pts(&[0.7])).unwrap();
        let t1 = DiscreteMeasure::uniform(pts(&[0.7]));
        assert_eq!(nw_witness(&e1, &t1, &k, &[4.0]).unwrap().value, 0.0);
    }

    #[test]
    fn far_field_is_degenerate() {
        let k = KernelSpec::gaussian(0.1).unwrap();
        let e = Ensemble::uniform(pts(&[0.0])).unwrap();
        let t = DiscreteMeasure::uniform(pts(&[1.0]));
        let est = nw_witness(&e, &t, &k, &[1e3]).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn rescales_mmd_witness() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let e = Ensemble::new(pts(&[-1.0, 0.5]), vec![0.3, 0.7]).unwrap();
        let t = DiscreteMeasure::uniform(pts(&[0.0, 2.0]));
        let tn = t.normalized().unwrap();
        for x in [-2.0, 0.0, 1.0, 3.0] {
            let nw = nw_witness(&e, &t, &k, &[x]).unwrap().value;
            let w = mmd_witness(&k, &e.to_measure(), &tn, &[x]).unwrap();
            let z: f64 = 0.3 * k.value(&[-1.0], &[x]) + 0.7 * k.value(&[0.5], &[x]);
            assert!((nw * z - w).abs() < 1e-15);
        }
    }
}
