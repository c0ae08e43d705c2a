use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::solve::{noise_stability_experiment, recover_from_gram, relative_error, NoiseRow, RecoveryOptions};
use crate::error::{Error, Result};
use crate::moments::second_moment;
use crate::priors::{LinearPrior, ParamSet, Prior, ReluPrior, SparsePrior};
use crate::real::task_rng;
use crate::repspec::{cryoem_k, DimensionGate, GateKind, RepSpec};

/// Prior families available in the cryo-EM toy model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Linear,
    Sparse,
    Relu,
}

impl PriorKind {
    /// Linear subspaces need `2M < K`; sparse and ReLU priors need `4M < K`.
    pub fn gate_kind(self) -> GateKind {
        match self {
            PriorKind::Linear => GateKind::Injectivity2M,
            PriorKind::Sparse | PriorKind::Relu => GateKind::Stability4M,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CryoOptions {
    pub recovery: RecoveryOptions,
    pub deltas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Run even when `R < 2L + 1`, with `K` computed from the spec.
    pub force: bool,
}

impl Default for CryoOptions {
    fn default() -> Self {
        Self {
            recovery: RecoveryOptions::default(),
            deltas: vec![0.0, 1e-3, 1e-2, 1e-1],
            trials: 3,
            seed: 0,
            force: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CryoReport {
    pub l: usize,
    pub r: usize,
    pub prior_kind: PriorKind,
    pub m: usize,
    pub ambient_dim: usize,
    pub k: u64,
    pub gate: DimensionGate,
    /// False when the gate fails; the experiment still runs.
    pub within_theory: bool,
    pub exact_relative_error: f64,
    pub exact_objective: f64,
    pub exact_converged: bool,
    pub noise_rows: Vec<NoiseRow>,
    pub noise_slope: f64,
}

/// Gram-level cryo-EM toy: a generic prior in `⊕ V_ℓ^R`, recovery from the
/// exact second moment and from perturbed ones.
pub fn cryoem_toy(l: usize, r: usize, prior_kind: PriorKind, m: usize, opts: &CryoOptions) -> Result<CryoReport> {
    let spec = RepSpec::cryoem(l, r)?;
    let k = match cryoem_k(l, r) {
        Ok(k) => k,
        Err(Error::CryoRegime { .. }) if opts.force => spec.effective_dim(),
        Err(e) => return Err(e),
    };
    let gate = DimensionGate::evaluate(prior_kind.gate_kind(), m as u64, k);
    let mut report = CryoReport {
        l,
        r,
        prior_kind,
        m,
        ambient_dim: spec.ambient_dim(),
        k,
        gate,
        within_theory: gate.passes,
        exact_relative_error: 0.0,
        exact_objective: 0.0,
        exact_converged: true,
        noise_rows: Vec::new(),
        noise_slope: f64::NAN,
    };
    if m == 0 {
        return Ok(report);
    }

    let mut rng = task_rng(opts.seed, 0);
    let d = spec.ambient_dim();
    let prior: Prior<f64> = match prior_kind {
        PriorKind::Linear => Prior::Linear(LinearPrior::generic(&spec, m, &mut rng)?),
        PriorKind::Sparse => Prior::Sparse(SparsePrior::generic(&spec, m, false, &mut rng)?),
        PriorKind::Relu => Prior::Relu(ReluPrior::generic(&spec, &[m, d, d], &mut rng)?),
    };
    let truth_params = prior.sample_params(&mut rng);
    let truth = prior.decode_signal(&truth_params);
    let g = second_moment(&truth);

    let exact = recover_from_gram(&g, &prior, &opts.recovery, None, &mut task_rng(opts.seed, 1))?;
    report.exact_relative_error = relative_error(&exact.estimate, &truth)?;
    report.exact_objective = exact.objective;
    report.exact_converged = exact.converged;

    if !opts.deltas.is_empty() && opts.trials > 0 {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
        let noise = noise_stability_experiment(&prior, &truth_params, &opts.deltas, opts.trials, &opts.recovery, &mut noise_rng)?;
        report.noise_rows = noise.rows;
        report.noise_slope = noise.slope;
    }
    Ok(report)
}
