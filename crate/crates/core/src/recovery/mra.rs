use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fourier::{blocks_to_signal, real_fourier_basis, shift_in_fourier};
use crate::error::{Error, Result};
use crate::moments::{second_moment, GramTuple};
use crate::real::{gaussian, task_rng, Real};
use crate::repspec::RepSpec;
use crate::signal::{haar_sample, Signal};

/// How group elements act on simulated observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupAction {
    /// Haar-random `h ∈ H` applied blockwise.
    BlockAction,
    /// Uniform circular shifts of a time-domain signal in `R^N`.
    ZnCirculant,
    /// No group action; for tests of the noise model alone.
    Identity,
}

/// Parameters of a multireference-alignment simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MraConfig {
    pub spec: RepSpec,
    pub group_action: GroupAction,
    pub n_samples: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl MraConfig {
    pub fn new(spec: RepSpec, group_action: GroupAction, n_samples: usize, noise_sigma: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            spec,
            group_action,
            n_samples,
            noise_sigma,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::OutOfRange("n_samples must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::OutOfRange(format!("noise sigma {}", self.noise_sigma)));
        }
        if self.group_action == GroupAction::ZnCirculant {
            let n = self.spec.ambient_dim();
            if self.spec != RepSpec::zn(n)? {
                return Err(Error::InvalidSpec(format!("circulant action needs the Z_{n} spec, got {}", self.spec)));
            }
        }
        Ok(())
    }
}

/// Running sum of `y yᵀ`. Partial accumulators merge associatively.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator<T: Real> {
    sum: DMatrix<T>,
    count: usize,
}

impl<T: Real> MomentAccumulator<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            sum: DMatrix::zeros(dim, dim),
            count: 0,
        }
    }

    pub fn push(&mut self, y: &DVector<T>) {
        self.sum.ger(T::one(), y, y, T::one());
        self.count += 1;
    }

    pub fn merge(mut self, other: &Self) -> Self {
        self.sum += &other.sum;
        self.count += other.count;
        self
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `(1/n) Σ y yᵀ`, symmetrized.
    pub fn mean(&self) -> DMatrix<T> {
        let m = &self.sum / T::lit(self.count.max(1) as f64);
        (&m + m.transpose()) * T::lit(0.5)
    }
}

/// Empirical second moment in the block basis and what is derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate<T: Real> {
    pub raw: DMatrix<T>,
    /// `raw − σ² I`.
    pub debiased: DMatrix<T>,
    /// Blockwise partial traces of `debiased` before PSD clamping.
    pub extracted_unclamped: Vec<DMatrix<T>>,
    pub extracted: GramTuple<T>,
}

/// Partial traces of the copy-pair sub-blocks of a moment matrix.
///
/// Entry `(i, j)` of block `ℓ` is the trace of the `N_ℓ × N_ℓ` sub-block
/// coupling copies `i` and `j`; cross-irreducible sub-blocks are ignored.
pub fn extract_gram_blocks<T: Real>(moment: &DMatrix<T>, spec: &RepSpec) -> Result<Vec<DMatrix<T>>> {
    let d = spec.ambient_dim();
    if moment.shape() != (d, d) {
        return Err(Error::ShapeMismatch(format!("moment {:?} for ambient dimension {d}", moment.shape())));
    }
    let sym = (moment + moment.transpose()) * T::lit(0.5);
    Ok(spec
        .blocks()
        .iter()
        .zip(spec.offsets())
        .map(|(b, o)| {
            let n = b.n_rows;
            DMatrix::from_fn(b.n_cols, b.n_cols, |i, j| {
                sym.view((o + i * n, o + j * n), (n, n)).trace()
            })
        })
        .collect())
}

/// [`extract_gram_blocks`] followed by PSD clamping.
pub fn extract_gram<T: Real>(moment: &DMatrix<T>, spec: &RepSpec) -> Result<GramTuple<T>> {
    GramTuple::project_psd(spec.clone(), extract_gram_blocks(moment, spec)?)
}

/// Exact `E[(g·x)(g·x)ᵀ]` in the block basis.
///
/// The circulant case averages over all `N` shifts; the block case uses
/// the Haar average `(XᵀX)_{ij} / N_ℓ · I` on each copy pair.
pub fn population_moment<T: Real>(x: &Signal<T>, action: GroupAction) -> Result<DMatrix<T>> {
    let spec = x.spec();
    let d = spec.ambient_dim();
    let v = x.to_flat();
    match action {
        GroupAction::Identity => Ok(&v * v.transpose()),
        GroupAction::ZnCirculant => {
            if spec != &RepSpec::zn(d)? {
                return Err(Error::InvalidSpec(format!("circulant action needs the Z_{d} spec")));
            }
            let mut acc = MomentAccumulator::new(d);
            for s in 0..d {
                acc.push(&shift_in_fourier(&v, s));
            }
            Ok(acc.mean())
        }
        GroupAction::BlockAction => {
            let g = second_moment(x);
            let mut m = DMatrix::zeros(d, d);
            for ((b, o), gb) in spec.blocks().iter().zip(spec.offsets()).zip(g.blocks()) {
                let n = b.n_rows;
                for i in 0..b.n_cols {
                    for j in 0..b.n_cols {
                        let val = gb[(i, j)] / T::lit(n as f64);
                        for t in 0..n {
                            m[(o + i * n + t, o + j * n + t)] = val;
                        }
                    }
                }
            }
            Ok(m)
        }
    }
}

/// Samples per parallel task in [`mra_simulate`].
const CHUNK: usize = 4096;

/// Draw `n` observations `y = g·x + ε`, `ε ~ N(0, σ² I)`, accumulate
/// `(1/n) Σ y yᵀ` in one pass, then debias and extract the Gram tuple.
///
/// Work is split into fixed-size chunks with per-chunk streams derived from
/// `cfg.seed`, so the result does not depend on the thread count.
pub fn mra_simulate<T: Real>(x: &Signal<T>, cfg: &MraConfig) -> Result<MomentEstimate<T>> {
    cfg.validate()?;
    if x.spec() != &cfg.spec {
        return Err(Error::ShapeMismatch(format!("signal spec {} vs config spec {}", x.spec(), cfg.spec)));
    }
    let d = cfg.spec.ambient_dim();
    let sigma = T::lit(cfg.noise_sigma);
    let time = match cfg.group_action {
        GroupAction::ZnCirculant => Some(blocks_to_signal(x)?),
        _ => None,
    };
    let flat = x.to_flat();
    let chunks = cfg.n_samples.div_ceil(CHUNK);
    let partials: Vec<MomentAccumulator<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = task_rng(cfg.seed, c as u64);
            let len = CHUNK.min(cfg.n_samples - c * CHUNK);
            let mut acc = MomentAccumulator::new(d);
            for _ in 0..len {
                let mut y = match cfg.group_action {
                    GroupAction::Identity => flat.clone(),
                    GroupAction::BlockAction => haar_sample(&cfg.spec, &mut rng)
                        .apply(x)
                        .expect("same spec")
                        .to_flat(),
                    GroupAction::ZnCirculant => {
                        let s = rng.random_range(0..d);
                        super::fourier::circular_shift(time.as_ref().expect("time signal"), s)
                    }
                };
                if cfg.noise_sigma > 0.0 {
                    add_noise(&mut y, sigma, &mut rng);
                }
                acc.push(&y);
            }
            acc
        })
        .collect();
    let total = partials
        .iter()
        .fold(MomentAccumulator::new(d), |acc, p| acc.merge(p));
    let mut raw = total.mean();
    if cfg.group_action == GroupAction::ZnCirculant {
        let b = real_fourier_basis::<T>(d)?;
        raw = &b * raw * b.transpose();
        raw = (&raw + raw.transpose()) * T::lit(0.5);
    }
    let debiased = &raw - DMatrix::identity(d, d) * (sigma * sigma);
    let extracted_unclamped = extract_gram_blocks(&debiased, &cfg.spec)?;
    let extracted = GramTuple::project_psd(cfg.spec.clone(), extracted_unclamped.clone())?;
    Ok(MomentEstimate {
        raw,
        debiased,
        extracted_unclamped,
        extracted,
    })
}

fn add_noise<T: Real>(y: &mut DVector<T>, sigma: T, rng: &mut dyn RngCore) {
    for v in y.iter_mut() {
        *v += sigma * gaussian::<T, _>(rng);
    }
}

/// Frobenius distance between raw blocks and a Gram tuple.
pub fn gram_error<T: Real>(blocks: &[DMatrix<T>], exact: &GramTuple<T>) -> T {
    blocks
        .iter()
        .zip(exact.blocks())
        .fold(T::zero(), |acc, (a, b)| acc + (a - b).norm_squared())
        .sqrt()
}

/// One `(σ, n)` cell of the sample-complexity grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleComplexityRow {
    pub sigma: f64,
    pub n: usize,
    pub trials: usize,
    /// Mean over trials of `‖extracted − XᵀX‖` (unclamped extraction).
    pub mean_error: f64,
    pub std_error: f64,
}

impl SampleComplexityRow {
    pub const CSV_HEADER: &'static str = "sigma,n,trials,mean_error,std_error";
}

/// Monte Carlo Gram-estimation error over a grid of noise levels and sample
/// sizes. Rows follow `sigmas × ns` in the given order.
pub fn sample_complexity_experiment<T: Real, R: RngCore>(
    x: &Signal<T>,
    action: GroupAction,
    sigmas: &[f64],
    ns: &[usize],
    trials: usize,
    rng: &mut R,
) -> Result<Vec<SampleComplexityRow>> {
    if trials == 0 {
        return Err(Error::OutOfRange("trials must be at least 1".into()));
    }
    let seed = rng.next_u64();
    let exact = second_moment(x);
    let cells: Vec<(f64, usize)> = sigmas.iter().flat_map(|&s| ns.iter().map(move |&n| (s, n))).collect();
    let errors: Vec<Result<f64>> = (0..cells.len() * trials)
        .into_par_iter()
        .map(|task| {
            let (sigma, n) = cells[task / trials];
            let cfg = MraConfig::new(x.spec().clone(), action, n, sigma, task_rng(seed, task as u64).next_u64())?;
            let est = mra_simulate(x, &cfg)?;
            Ok(gram_error(&est.extracted_unclamped, &exact).as_f64())
        })
        .collect();
    let errors = errors.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(cells
        .iter()
        .enumerate()
        .map(|(c, &(sigma, n))| {
            let e = &errors[c * trials..(c + 1) * trials];
            let mean = e.iter().sum::<f64>() / trials as f64;
            let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials.max(2) - 1) as f64;
            SampleComplexityRow {
                sigma,
                n,
                trials,
                mean_error: mean,
                std_error: var.sqrt(),
            }
        })
        .collect())
}
