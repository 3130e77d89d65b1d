use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::kernel::SteinKernel;
use crate::measure::{Capability, DiscreteMeasure, Ensemble, Target};

use super::transport::{transport_ksd, transport_mmd};
use super::{check_rates, check_step_size, FlowConfig};

/// Weights below `PRUNE_FACTOR / N` are dropped once the ensemble exceeds
/// its particle cap.
pub const PRUNE_FACTOR: f64 = 1e-8;

/// Exact solution of the birth–death flow `μ̇ = π − μ`:
/// `μ_t = e^{−t} μ₀ + (1 − e^{−t}) π̂`, on the atoms of `e0` followed by
/// the atoms of the normalized target.
pub fn fr_exact_solution(
    e0: &Ensemble,
    target_samples: &DiscreteMeasure,
    t: f64,
) -> Result<DiscreteMeasure> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "time must be nonnegative, got {t}"
        )));
    }
    check_dim(e0.dim(), target_samples.dim())?;
    let pi = target_samples.normalized_masses()?;
    let keep = (-t).exp();
    let born = -(-t).exp_m1();
    let mut atoms = e0.positions().clone();
    atoms.extend_from(target_samples.atoms())?;
    let mut masses: Vec<f64> = e0.weights().iter().map(|w| keep * w).collect();
    masses.extend(pi.iter().map(|p| born * p));
    DiscreteMeasure::new(atoms, masses)
}

/// One Lie-split step of the interaction-force transport flow: MMD transport
/// scaled by `α`, then the exact birth–death update over `τ` with rate `β`.
/// The born mass `1 − e^{−βτ}` goes to `cfg.injection` atoms picked from
/// `target_samples` by systematic resampling.
pub fn wfr_ift_step<R: Rng + ?Sized>(
    e: &Ensemble,
    target_samples: &DiscreteMeasure,
    cfg: &FlowConfig,
    rng: &mut R,
) -> Result<Ensemble> {
    check_wfr(cfg)?;
    let moved = transport_mmd(e, target_samples, &cfg.kernel, cfg.tau * cfg.alpha)?;
    if cfg.beta == 0.0 || cfg.tau == 0.0 {
        return Ok(moved);
    }
    let born = target_samples.systematic_sample(cfg.injection, rng)?;
    Ok(birth_death(moved, born, cfg))
}

/// One Lie-split step of the Stein WFR flow. The reaction draws fresh target
/// samples when the target can be sampled; with `score_only_reaction` (or no
/// sampler) it reweights the particles by self-normalized importance ratios
/// instead, which is an approximation.
pub fn wfr_ksd_step<R: Rng + ?Sized>(
    e: &Ensemble,
    s: &SteinKernel<'_>,
    target: &Target,
    cfg: &FlowConfig,
    rng: &mut R,
) -> Result<Ensemble> {
    check_rates(cfg.alpha, cfg.beta)?;
    check_step_size(cfg.tau)?;
    let moved = transport_ksd(e, s, cfg.tau * cfg.alpha)?;
    if cfg.beta == 0.0 || cfg.tau == 0.0 {
        return Ok(moved);
    }
    if cfg.score_only_reaction || !target.has(Capability::Sample) {
        target.require(Capability::UnnormLogDensity)?;
        return importance_reaction(moved, target, cfg.beta * cfg.tau);
    }
    if cfg.injection == 0 {
        return Err(Error::Config(
            "injection = 0 with beta > 0: reaction mass has nowhere to go".into(),
        ));
    }
    let born = target.sample(cfg.injection, rng)?;
    Ok(birth_death(moved, born, cfg))
}

fn check_wfr(cfg: &FlowConfig) -> Result<()> {
    check_rates(cfg.alpha, cfg.beta)?;
    check_step_size(cfg.tau)?;
    if cfg.beta > 0.0 && cfg.injection == 0 {
        return Err(Error::Config(
            "injection = 0 with beta > 0: reaction mass has nowhere to go".into(),
        ));
    }
    Ok(())
}

/// Exact reaction over one step: old weights times `e^{−βτ}`, the new atoms
/// share `1 − e^{−βτ}` equally.
fn birth_death(e: Ensemble, born: crate::points::Points, cfg: &FlowConfig) -> Ensemble {
    let rate = cfg.beta * cfg.tau;
    let keep = (-rate).exp();
    let each = -(-rate).exp_m1() / born.len() as f64;
    let (mut positions, mut weights) = e.into_parts();
    for w in &mut weights {
        *w *= keep;
    }
    positions
        .extend_from(&born)
        .expect("born atoms share the ensemble dimension");
    weights.extend(std::iter::repeat_n(each, born.len()));
    prune(
        Ensemble::from_parts_unchecked(positions, weights),
        cfg.max_particles,
    )
}

fn prune(e: Ensemble, cap: usize) -> Ensemble {
    let n = e.len();
    if n <= cap {
        return e;
    }
    let threshold = PRUNE_FACTOR / n as f64;
    let keep: Vec<bool> = e.weights().iter().map(|w| *w >= threshold).collect();
    if !keep.iter().any(|k| *k) {
        return e;
    }
    let (mut positions, weights) = e.into_parts();
    positions.retain_rows(&keep);
    let weights = weights
        .into_iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(w, _)| w)
        .collect();
    Ensemble::from_parts_unchecked(positions, weights)
}

/// `wᵢ ∝ wᵢ exp(ρ rᵢ)` with `rᵢ = pᵢ / wᵢ` and `pᵢ ∝ π̃(xᵢ)` the target
/// restricted to the particle atoms.
fn importance_reaction(e: Ensemble, target: &Target, rate: f64) -> Result<Ensemble> {
    let logp: Vec<f64> = e
        .positions()
        .rows()
        .map(|x| target.log_density(x))
        .collect::<Result<_>>()?;
    let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    let (positions, weights) = e.into_parts();
    let logw: Vec<f64> = weights
        .iter()
        .zip(&unnorm)
        .map(|(w, u)| {
            if *w > 0.0 {
                w.ln() + rate * (u / z) / w
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let new: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    Ok(Ensemble::from_parts_unchecked(positions, new))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrepancy::mmd2;
    use crate::flow::{mmd_wgf_step, FlowKind};
    use crate::kernel::KernelSpec;
    use crate::points::Points;
    use crate::rng;

    fn pts(v: &[f64]) -> Points {
        Points::from_scalars(v).unwrap()
    }

    fn wfr_cfg(alpha: f64, beta: f64, injection: usize) -> FlowConfig {
        FlowConfig {
            alpha,
            beta,
            injection,
            ..FlowConfig::new(
                FlowKind::WfrIft,
                KernelSpec::gaussian(1.0).unwrap(),
                0.1,
                10,
            )
        }
    }

    #[test]
    fn fr_exact_endpoints() {
        let e0 = Ensemble::new(pts(&[0.0, 1.0]), vec![0.25, 0.75]).unwrap();
        let t = DiscreteMeasure::new(pts(&[3.0, 4.0, 5.0]), vec![1.0, 1.0, 2.0]).unwrap();
        let at0 = fr_exact_solution(&e0, &t, 0.0).unwrap();
        assert_eq!(&at0.masses()[..2], e0.weights());
        assert!(at0.masses()[2..].iter().all(|m| *m == 0.0));
        let late = fr_exact_solution(&e0, &t, 50.0).unwrap();
        assert!(late.masses()[..2].iter().all(|m| *m < 1e-20));
        for (m, p) in late.masses()[2..].iter().zip([0.25, 0.25, 0.5]) {
            assert!((m - p).abs() < 1e-15);
        }
        assert!(fr_exact_solution(&e0, &t, -1.0).is_err());
    }

    #[test]
    fn fr_exact_mmd_decays_at_rate_two() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let e0 = Ensemble::uniform(pts(&[-1.0, 0.5, 2.0])).unwrap();
        let t = DiscreteMeasure::uniform(pts(&[0.0, 0.3, 1.1, -0.4]));
        let base = mmd2(&k, &e0.to_measure(), &t).unwrap();
        for time in [0.1f64, 0.5, 1.0, 2.0] {
            let m = fr_exact_solution(&e0, &t, time).unwrap();
            let v = mmd2(&k, &m, &t).unwrap();
            assert!((v / ((-2.0 * time).exp() * base) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn wfr_without_reaction_is_mmd_step() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        let e = Ensemble::uniform(pts(&[-1.0, 0.4, 1.3])).unwrap();
        let t = DiscreteMeasure::uniform(pts(&[0.0, 0.5]));
        let mut r = rng::stream(0, 0);
        let a = wfr_ift_step(&e, &t, &wfr_cfg(1.0, 0.0, 0), &mut r).unwrap();
        let b = mmd_wgf_step(&e, &t, &k, 0.1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pure_reaction_decays_original_weight() {
        let e = Ensemble::uniform(pts(&[5.0, 6.0])).unwrap();
        let t = DiscreteMeasure::uniform(pts(&[0.0, 0.5, 1.0]));
        let cfg = wfr_cfg(0.0, 0.7, 3);
        let mut r = rng::stream(1, 2);
        let mut cur = e.clone();
        for n in 1..=20 {
            cur = wfr_ift_step(&cur, &t, &cfg, &mut r).unwrap();
            assert!((cur.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(&cur.positions().as_flat()[..2], &[5.0, 6.0]);
            let original: f64 = cur.weights()[..2].iter().sum();
            assert!((original - (-0.7 * 0.1 * n as f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn reaction_without_injection_rejected() {
        let e = Ensemble::uniform(pts(&[0.0])).unwrap();
        let t = DiscreteMeasure::uniform(pts(&[1.0]));
        let err = wfr_ift_step(&e, &t, &wfr_cfg(1.0, 0.5, 0), &mut rng::stream(0, 0)).unwrap_err();
        assert!(err.to_string().contains("nowhere to go"));
    }

    #[test]
    fn pruning_caps_growth() {
        let e = Ensemble::uniform(pts(&[5.0])).unwrap();
        let t = DiscreteMeasure::uniform(pts(&[0.0, 1.0]));
        let cfg = FlowConfig {
            max_particles: 6,
            ..wfr_cfg(0.0, 40.0, 2)
        };
        let mut r = rng::stream(3, 0);
        let mut cur = e;
        for _ in 0..10 {
            cur = wfr_ift_step(&cur, &t, &cfg, &mut r).unwrap();
            assert!((cur.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(cur.len() <= 12, "{} particles", cur.len());
    }

    #[test]
    fn ksd_wfr_reductions() {
        let target = Target::gaussian(vec![0.0], vec![vec![1.0]]).unwrap();
        let s = SteinKernel::new(KernelSpec::gaussian(1.0).unwrap(), &target).unwrap();
        let e = Ensemble::uniform(pts(&[2.0, 3.0, -1.0])).unwrap();
        let mut r = rng::stream(0, 0);
        let cfg = FlowConfig {
            kind: FlowKind::WfrKsd,
            ..wfr_cfg(1.0, 0.0, 0)
        };
        let a = wfr_ksd_step(&e, &s, &target, &cfg, &mut r).unwrap();
        let b = crate::flow::ksd_wgf_step(&e, &s, 0.1).unwrap();
        assert_eq!(a, b);

        let cfg0 = FlowConfig {
            tau: 0.0,
            beta: 1.0,
            injection: 2,
            ..cfg.clone()
        };
        assert_eq!(wfr_ksd_step(&e, &s, &target, &cfg0, &mut r).unwrap(), e);

        let cfg = FlowConfig {
            kind: FlowKind::WfrKsd,
            ..wfr_cfg(0.0, 1.0, 4)
        };
        let mut cur = e.clone();
        for n in 1..=10 {
            cur = wfr_ksd_step(&cur, &s, &target, &cfg, &mut r).unwrap();
            let original: f64 = cur.weights()[..3].iter().sum();
            assert!((original - (-0.1 * n as f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn importance_reaction_moves_mass_toward_target() {
        let target = Target::gaussian(vec![0.0], vec![vec![1.0]]).unwrap();
        let s = SteinKernel::new(KernelSpec::gaussian(1.0).unwrap(), &target).unwrap();
        let e = Ensemble::uniform(pts(&[0.0, 3.0])).unwrap();
        let cfg = FlowConfig {
            kind: FlowKind::WfrKsd,
            score_only_reaction: true,
            ..wfr_cfg(0.0, 1.0, 0)
        };
        let out = wfr_ksd_step(&e, &s, &target, &cfg, &mut rng::stream(0, 0)).unwrap();
        assert!(out.weights()[0] > 0.5 && out.weights()[1] < 0.5);
        assert!((out.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
