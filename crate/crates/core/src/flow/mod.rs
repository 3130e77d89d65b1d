//! Particle integrators for the kernelized inclusive-KL flows.
//!
//! | kind | update |
//! |------|--------|
//! | `mmd_wgf` | transport along the MMD witness gradient |
//! | `ksd_wgf` | transport along the Stein-kernel witness gradient |
//! | `fr_exact` | closed-form birth–death mixture `e^{−t}μ₀ + (1 − e^{−t})π` |
//! | `wfr_ift` | transport then exact reaction, with target samples |
//! | `wfr_ksd` | Stein transport then reaction |
//! | `mirror` | entropic mirror step on fixed atoms |
//! | `jko` | MMD–MMD proximal step on fixed atoms |

mod jko;
mod mirror;
mod nw;
mod reaction;
mod runner;
mod transport;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::measure::{Capability, Target};

pub use jko::{jko_objective, jko_step, project_to_simplex, JkoSolution, JKO_MAX_ITER, JKO_TOL};
pub use mirror::{mirror_step, mirror_step_stein};
pub use nw::{nw_witness, NwEstimate};
pub use reaction::{fr_exact_solution, wfr_ift_step, wfr_ksd_step, PRUNE_FACTOR};
pub use runner::{run_flow, FlowRun, FLAG_SCORE_ONLY_REACTION};
pub use transport::{ksd_wgf_step, mmd_wgf_step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    MmdWgf,
    KsdWgf,
    FrExact,
    WfrIft,
    WfrKsd,
    Mirror,
    Jko,
}

impl FlowKind {
    pub fn is_wfr(self) -> bool {
        matches!(self, FlowKind::WfrIft | FlowKind::WfrKsd)
    }

    pub fn needs_score(self) -> bool {
        matches!(self, FlowKind::KsdWgf | FlowKind::WfrKsd)
    }
}

/// Parameters of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub kind: FlowKind,
    /// Step size; the proximal parameter η for `jko`, the time increment for `fr_exact`.
    pub tau: f64,
    /// Transport scale of the WFR flows.
    pub alpha: f64,
    /// Reaction (birth–death) rate of the WFR flows.
    pub beta: f64,
    pub steps: usize,
    pub kernel: KernelSpec,
    pub seed: u64,
    /// Target particles injected per reaction step.
    pub injection: usize,
    /// Particle count above which negligible weights are pruned.
    pub max_particles: usize,
    /// Size of the reference sample drawn from analytic targets.
    pub reference_samples: usize,
    /// Record metrics every this many steps (the last step is always recorded).
    pub record_every: usize,
    /// Use self-normalized importance weights instead of target samples in
    /// the `wfr_ksd` reaction.
    pub score_only_reaction: bool,
}

impl FlowConfig {
    pub fn new(kind: FlowKind, kernel: KernelSpec, tau: f64, steps: usize) -> Self {
        Self {
            kind,
            tau,
            alpha: 1.0,
            beta: 0.0,
            steps,
            kernel,
            seed: 0,
            injection: 0,
            max_particles: 5000,
            reference_samples: 500,
            record_every: 1,
            score_only_reaction: false,
        }
    }

    /// Cross-field constraints that do not depend on the target.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if self.reference_samples == 0 {
            return Err(Error::Config("reference_samples must be at least 1".into()));
        }
        if self.max_particles == 0 {
            return Err(Error::Config("max_particles must be at least 1".into()));
        }
        self.kernel
            .validate()
            .map_err(|e| Error::Config(format!("kernel: {e}")))?;
        if self.kind.is_wfr() {
            check_rates(self.alpha, self.beta)?;
            if self.beta > 0.0
                && self.injection == 0
                && !(self.kind == FlowKind::WfrKsd && self.score_only_reaction)
            {
                return Err(Error::Config(
                    "injection = 0 with beta > 0: reaction mass has nowhere to go".into(),
                ));
            }
        }
        Ok(())
    }

    /// Checks that `target` offers what this flow needs.
    pub fn validate_for(&self, target: &Target) -> Result<()> {
        self.validate()?;
        if self.kind.needs_score() {
            target.require(Capability::Score)?;
        } else {
            target.require(Capability::Sample)?;
        }
        if self.kind == FlowKind::WfrKsd && self.beta > 0.0 {
            if self.score_only_reaction {
                target.require(Capability::UnnormLogDensity)?;
            } else if !target.has(Capability::Sample) && !target.has(Capability::UnnormLogDensity) {
                return Err(Error::MissingCapability {
                    capability: Capability::Sample,
                    target: target.name(),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn check_rates(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0 && beta.is_finite() && beta >= 0.0) {
        return Err(Error::Config(format!(
            "alpha and beta must be nonnegative, got {alpha}, {beta}"
        )));
    }
    if alpha + beta <= 0.0 {
        return Err(Error::Config("alpha + beta must be positive".into()));
    }
    Ok(())
}

pub(crate) fn check_step_size(tau: f64) -> Result<()> {
    if tau.is_finite() && tau >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "step size must be finite and nonnegative, got {tau}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: FlowKind) -> FlowConfig {
        FlowConfig::new(kind, KernelSpec::gaussian(1.0).unwrap(), 0.1, 10)
    }

    #[test]
    fn rejects_bad_fields() {
        assert!(FlowConfig {
            tau: 0.0,
            ..cfg(FlowKind::MmdWgf)
        }
        .validate()
        .is_err());
        assert!(FlowConfig {
            steps: 0,
            ..cfg(FlowKind::MmdWgf)
        }
        .validate()
        .is_err());
        assert!(FlowConfig {
            alpha: 0.0,
            beta: 0.0,
            ..cfg(FlowKind::WfrIft)
        }
        .validate()
        .is_err());
        let err = FlowConfig {
            beta: 0.5,
            injection: 0,
            ..cfg(FlowKind::WfrIft)
        }
        .validate()
        .unwrap_err();
        assert!(err.to_string().contains("nowhere to go"));
        assert!(FlowConfig {
            beta: 0.5,
            injection: 4,
            ..cfg(FlowKind::WfrIft)
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn capability_checks() {
        let emp = Target::empirical(crate::measure::DiscreteMeasure::uniform(
            crate::points::Points::from_scalars(&[0.0]).unwrap(),
        ));
        assert!(matches!(
            cfg(FlowKind::KsdWgf).validate_for(&emp),
            Err(Error::MissingCapability {
                capability: Capability::Score,
                ..
            })
        ));
        assert!(cfg(FlowKind::MmdWgf).validate_for(&emp).is_ok());
    }
}
