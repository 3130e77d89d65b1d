use crate::discrepancy::mmd_witness;
use crate::error::{check_dim, Result};
use crate::kernel::KernelSpec;
use crate::kernel::SteinKernel;
use crate::measure::{DiscreteMeasure, Ensemble};

use super::check_step_size;

/// Entropic mirror step on fixed atoms:
/// `wᵢ ← wᵢ exp(−τ f(xᵢ)) / Z` with `f` the MMD witness of `μ − π̂`.
pub fn mirror_step(
    e: &Ensemble,
    target_samples: &DiscreteMeasure,
    k: &KernelSpec,
    tau: f64,
) -> Result<Ensemble> {
    check_step_size(tau)?;
    check_dim(e.dim(), target_samples.dim())?;
    let pi = target_samples.normalized()?;
    let mu = e.to_measure();
    let witness: Vec<f64> = e
        .positions()
        .rows()
        .map(|x| mmd_witness(k, &mu, &pi, x))
        .collect::<Result<_>>()?;
    Ok(reweight(e, &witness, tau))
}

/// Mirror step driven by the Stein witness `∑ⱼ wⱼ s(·, xⱼ)`; only the
/// target score is needed.
pub fn mirror_step_stein(e: &Ensemble, s: &SteinKernel<'_>, tau: f64) -> Result<Ensemble> {
    check_step_size(tau)?;
    let x = e.positions();
    let w = e.weights();
    let scores = s.scores_for(x, false)?;
    let witness: Vec<f64> = (0..e.len())
        .map(|i| {
            (0..e.len())
                .map(|j| {
                    w[j] * s.value_with(x.row(i), &scores[i].score, x.row(j), &scores[j].score)
                })
                .sum()
        })
        .collect();
    Ok(reweight(e, &witness, tau))
}

fn reweight(e: &Ensemble, witness: &[f64], tau: f64) -> Ensemble {
    if tau == 0.0 {
        return e.clone();
    }
    // shift by the smallest witness on the support so that no factor overflows
    let floor = witness
        .iter()
        .zip(e.weights())
        .filter(|(_, w)| **w > 0.0)
        .map(|(f, _)| *f)
        .fold(f64::INFINITY, f64::min);
    let weights = e
        .weights()
        .iter()
        .zip(witness)
        .map(|(w, f)| {
            if *w > 0.0 {
                w * (-tau * (f - floor)).exp()
            } else {
                0.0
            }
        })
        .collect();
    Ensemble::from_parts_unchecked(e.positions().clone(), weights)
}
