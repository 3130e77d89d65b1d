use crate::discrepancy::{ksd2, mmd2, moment_error, MetricsRecord};
use crate::error::{check_dim, Result};
use crate::kernel::SteinKernel;
use crate::measure::{Capability, Ensemble, Target};
use crate::rng;

use super::jko::jko_step;
use super::mirror::mirror_step;
use super::reaction::{fr_exact_solution, wfr_ift_step, wfr_ksd_step};
use super::transport::{ksd_wgf_step, mmd_wgf_step};
use super::{FlowConfig, FlowKind};

/// Set when the Stein WFR reaction reweights by importance ratios instead of
/// injecting target samples.
pub const FLAG_SCORE_ONLY_REACTION: &str = "score_only_reaction";

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRun {
    pub records: Vec<MetricsRecord>,
    pub final_ensemble: Ensemble,
    /// Approximations used during the run.
    pub flags: Vec<String>,
}

/// Advances `init` for `cfg.steps` steps of `cfg.kind`, recording metrics
/// against a discrete reference of the target.
///
/// Analytic targets are represented by `cfg.reference_samples` seeded draws.
/// `mirror` and `jko` keep their atoms fixed; `jko` works on the initial
/// atoms together with the reference atoms.
pub fn run_flow(cfg: &FlowConfig, init: &Ensemble, target: &Target) -> Result<FlowRun> {
    cfg.validate_for(target)?;
    check_dim(target.dim(), init.dim())?;
    let reference = target.reference_measure(cfg.reference_samples, cfg.seed)?;
    let stein = if target.has(Capability::Score) {
        Some(SteinKernel::new(cfg.kernel, target)?)
    } else {
        None
    };
    let mut flags = Vec::new();
    if cfg.kind == FlowKind::WfrKsd
        && cfg.beta > 0.0
        && (cfg.score_only_reaction || !target.has(Capability::Sample))
    {
        flags.push(FLAG_SCORE_ONLY_REACTION.to_string());
    }
    let mut rng = rng::stream(cfg.seed, rng::STREAM_FLOW);
    let record = |step: usize, e: &Ensemble| -> Result<MetricsRecord> {
        let (mean_err, cov_err) = moment_error(e, target)?;
        let mu = e.to_measure();
        Ok(MetricsRecord {
            step,
            time: step as f64 * cfg.tau,
            mmd2: mmd2(&cfg.kernel, &mu, &reference)?,
            ksd2: stein.as_ref().map(|s| ksd2(s, &mu)).transpose()?,
            mean_err,
            cov_err,
        })
    };

    let mut current = match cfg.kind {
        FlowKind::Jko => {
            let mut support = init.positions().clone();
            support.extend_from(reference.atoms())?;
            let mut weights = init.weights().to_vec();
            weights.resize(support.len(), 0.0);
            Ensemble::new(support, weights)?
        }
        _ => init.clone(),
    };
    let mut records = vec![record(0, &current)?];
    for n in 1..=cfg.steps {
        current = match cfg.kind {
            FlowKind::MmdWgf => mmd_wgf_step(&current, &reference, &cfg.kernel, cfg.tau)?,
            FlowKind::KsdWgf => {
                ksd_wgf_step(&current, stein.as_ref().expect("score checked"), cfg.tau)?
            }
            FlowKind::FrExact => {
                let mu = fr_exact_solution(init, &reference, n as f64 * cfg.tau)?;
                let (atoms, masses) = (mu.atoms().clone(), mu.masses().to_vec());
                Ensemble::from_unnormalized(atoms, masses)?
            }
            FlowKind::WfrIft => wfr_ift_step(&current, &reference, cfg, &mut rng)?,
            FlowKind::WfrKsd => wfr_ksd_step(
                &current,
                stein.as_ref().expect("score checked"),
                target,
                cfg,
                &mut rng,
            )?,
            FlowKind::Mirror => mirror_step(&current, &reference, &cfg.kernel, cfg.tau)?,
            FlowKind::Jko => {
                let sol = jko_step(
                    current.positions(),
                    current.weights(),
                    &reference,
                    &cfg.kernel,
                    cfg.tau,
                )?;
                Ensemble::from_unnormalized(current.positions().clone(), sol.weights)?
            }
        };
        if n % cfg.record_every == 0 || n == cfg.steps {
            records.push(record(n, &current)?);
        }
    }
    Ok(FlowRun {
        records,
        final_ensemble: current,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::measure::{ensemble_from_sampler, DiscreteMeasure};
    use crate::points::Points;

    fn setup(kind: FlowKind) -> (FlowConfig, Ensemble, Target) {
        let target = Target::gaussian(vec![0.0], vec![vec![1.0]]).unwrap();
        let init = Ensemble::uniform(Points::from_scalars(&[1.0, 1.5, 2.0, 2.5]).unwrap()).unwrap();
        let mut cfg = FlowConfig::new(kind, KernelSpec::gaussian(1.0).unwrap(), 0.1, 3);
        cfg.reference_samples = 20;
        cfg.seed = 3;
        (cfg, init, target)
    }

    #[test]
    fn one_step_matches_manual_call() {
        let (mut cfg, init, target) = setup(FlowKind::MmdWgf);
        cfg.steps = 1;
        let run = run_flow(&cfg, &init, &target).unwrap();
        let reference = target.reference_measure(20, 3).unwrap();
        let manual = mmd_wgf_step(&init, &reference, &cfg.kernel, 0.1).unwrap();
        assert_eq!(run.final_ensemble, manual);
        assert_eq!(run.records.len(), 2);
        assert_eq!(
            run.records[1].mmd2,
            mmd2(&cfg.kernel, &manual.to_measure(), &reference).unwrap()
        );
    }

    #[test]
    fn fr_exact_records_follow_closed_form() {
        let (mut cfg, init, target) = setup(FlowKind::FrExact);
        cfg.steps = 5;
        let run = run_flow(&cfg, &init, &target).unwrap();
        let m0 = run.records[0].mmd2;
        for r in &run.records {
            let expected = (-2.0 * r.time).exp() * m0;
            assert!((r.mmd2 - expected).abs() <= 1e-10 * expected, "{r:?}");
        }
    }

    #[test]
    fn deterministic_for_every_kind() {
        for kind in [
            FlowKind::MmdWgf,
            FlowKind::KsdWgf,
            FlowKind::FrExact,
            FlowKind::WfrIft,
            FlowKind::WfrKsd,
            FlowKind::Mirror,
            FlowKind::Jko,
        ] {
            let (mut cfg, init, target) = setup(kind);
            cfg.beta = 0.5;
            cfg.injection = 3;
            let a = run_flow(&cfg, &init, &target).unwrap();
            let b = run_flow(&cfg, &init, &target).unwrap();
            assert_eq!(a, b, "{kind:?}");
            assert_eq!(a.records.len(), 4);
            let sum: f64 = a.final_ensemble.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(a.records.iter().all(|r| r.ksd2.is_some()));
        }
    }

    #[test]
    fn record_every_keeps_last_step() {
        let (mut cfg, init, target) = setup(FlowKind::MmdWgf);
        cfg.steps = 7;
        cfg.record_every = 3;
        let steps: Vec<usize> = run_flow(&cfg, &init, &target)
            .unwrap()
            .records
            .iter()
            .map(|r| r.step)
            .collect();
        assert_eq!(steps, vec![0, 3, 6, 7]);
    }

    #[test]
    fn score_only_flag_and_capability_errors() {
        let (mut cfg, init, target) = setup(FlowKind::WfrKsd);
        cfg.beta = 1.0;
        cfg.score_only_reaction = true;
        let run = run_flow(&cfg, &init, &target).unwrap();
        assert_eq!(run.flags, vec![FLAG_SCORE_ONLY_REACTION.to_string()]);

        let emp = Target::empirical(DiscreteMeasure::uniform(
            Points::from_scalars(&[0.0, 1.0]).unwrap(),
        ));
        let (cfg, init, _) = setup(FlowKind::KsdWgf);
        assert!(matches!(
            run_flow(&cfg, &init, &emp),
            Err(crate::error::Error::MissingCapability {
                capability: Capability::Score,
                ..
            })
        ));
        let sampled = ensemble_from_sampler(&emp, 4, 0).unwrap();
        assert_eq!(sampled.len(), 4);
    }
}
