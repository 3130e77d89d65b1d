use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::kernel::{KernelSpec, SteinKernel};
use crate::measure::{DiscreteMeasure, Ensemble};
use crate::points::Points;

use super::check_step_size;

/// One explicit step of the MMD particle flow:
/// `Xᵢ ← Xᵢ − τ (∑ⱼ ∇₂k(Xⱼ, Xᵢ)/N − ∑ⱼ vⱼ ∇₂k(Yⱼ, Xᵢ))`,
/// with `v` the normalized target masses (`1/M` for a plain sample).
pub fn mmd_wgf_step(
    e: &Ensemble,
    target_samples: &DiscreteMeasure,
    k: &KernelSpec,
    tau: f64,
) -> Result<Ensemble> {
    check_step_size(tau)?;
    if !e.is_uniform() {
        return Err(Error::Unsupported(
            "mmd_wgf transports uniformly weighted particles only".into(),
        ));
    }
    transport_mmd(e, target_samples, k, tau)
}

/// One explicit step of the KSD particle flow:
/// `Xᵢ ← Xᵢ − τ ∑ⱼ ∇₂s(Xⱼ, Xᵢ)/N`.
pub fn ksd_wgf_step(e: &Ensemble, s: &SteinKernel<'_>, tau: f64) -> Result<Ensemble> {
    check_step_size(tau)?;
    if !e.is_uniform() {
        return Err(Error::Unsupported(
            "ksd_wgf transports uniformly weighted particles only".into(),
        ));
    }
    transport_ksd(e, s, tau)
}

/// Weighted MMD transport: every particle moves by `−step` times the witness
/// gradient of `μ − π̂`, weights untouched.
pub(crate) fn transport_mmd(
    e: &Ensemble,
    target: &DiscreteMeasure,
    k: &KernelSpec,
    step: f64,
) -> Result<Ensemble> {
    check_dim(e.dim(), target.dim())?;
    let v = target.normalized_masses()?;
    let x = e.positions();
    let w = e.weights();
    let y = target.atoms();
    let moved = move_particles(x, step, |xi, out| {
        for (xj, wj) in x.rows().zip(w) {
            k.add_grad2(xj, xi, *wj, out);
        }
        for (yj, vj) in y.rows().zip(&v) {
            k.add_grad2(yj, xi, -*vj, out);
        }
    });
    Ok(Ensemble::from_parts_unchecked(moved, w.to_vec()))
}

/// Weighted Stein transport: velocity `∑ⱼ wⱼ ∇₂s(Xⱼ, ·)`.
pub(crate) fn transport_ksd(e: &Ensemble, s: &SteinKernel<'_>, step: f64) -> Result<Ensemble> {
    check_dim(s.dim(), e.dim())?;
    let x = e.positions();
    let w = e.weights();
    let scores = s.scores_for(x, true)?;
    let moved = move_particles_indexed(x, step, |i, xi, out| {
        let at_i = &scores[i];
        let jac = at_i.jacobian.as_deref().expect("jacobian requested");
        for (j, (xj, wj)) in x.rows().zip(w).enumerate() {
            s.add_grad2_with(xj, &scores[j].score, xi, &at_i.score, jac, *wj, out);
        }
    });
    Ok(Ensemble::from_parts_unchecked(moved, w.to_vec()))
}

fn move_particles<F>(x: &Points, step: f64, velocity: F) -> Points
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    move_particles_indexed(x, step, |_, xi, out| velocity(xi, out))
}

fn move_particles_indexed<F>(x: &Points, step: f64, velocity: F) -> Points
where
    F: Fn(usize, &[f64], &mut [f64]) + Sync,
{
    let d = x.dim();
    if step == 0.0 {
        return x.clone();
    }
    let mut flat = x.as_flat().to_vec();
    flat.par_chunks_mut(d).enumerate().for_each(|(i, row)| {
        let mut v = vec![0.0; d];
        velocity(i, x.row(i), &mut v);
        for (xa, va) in row.iter_mut().zip(&v) {
            *xa -= step * va;
        }
    });
    Points::from_flat(flat, d).expect("finite positions")
}
