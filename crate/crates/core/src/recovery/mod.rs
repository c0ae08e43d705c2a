//! Recovery pipelines: MRA simulation, moment extraction, Gram-level
//! recovery over priors and the associated experiments.

mod cryo;
mod fourier;
mod mra;
mod solve;

pub use cryo::{cryoem_toy, CryoOptions, CryoReport, PriorKind};
pub use fourier::{blocks_to_signal, circular_shift, real_fourier_basis, shift_in_fourier, signal_to_blocks};
pub use mra::*;
pub use solve::{
    gram_misfit, gram_misfit_gradient, noise_stability_experiment, perturb_gram, random_symmetric_tuple, recover_from_gram,
    relative_error, NoiseRow, NoiseStabilityReport, RecoveryOptions, RecoveryResult,
};
