use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{blocks_of, gram_vec, log_log_slope, sym_product};
use crate::metrics::d_sigma;
use crate::moments::{second_moment, sqrt_psd, GramTuple};
use crate::priors::{ParamSet, Prior};
use crate::real::{gaussian, task_rng, Real};
use crate::signal::Signal;

/// Multistart settings for [`recover_from_gram`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryOptions {
    pub restarts: usize,
    pub max_iters: usize,
    /// Converged when `F ≤ tol · ‖G‖²`.
    pub tol: f64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iters: 500,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryResult<T: Real> {
    pub estimate: Signal<T>,
    #[serde(skip)]
    pub params: DVector<T>,
    /// `d_σ(estimate, truth) / ‖truth‖`, when the truth is known.
    pub relative_error: Option<T>,
    /// Final `F = ‖XᵀX − G‖²`.
    pub objective: T,
    pub restarts_used: usize,
    pub converged: bool,
    /// Iterations of the restart that produced the estimate.
    pub iterations: usize,
}

fn target_vec<T: Real>(g: &GramTuple<T>) -> DVector<T> {
    let mut out = Vec::new();
    for b in g.blocks() {
        out.extend(b.iter().copied());
    }
    DVector::from_vec(out)
}

fn check_prior<T: Real>(g: &GramTuple<T>, prior: &dyn ParamSet<T>) -> Result<()> {
    if g.spec() != prior.spec() {
        return Err(Error::ShapeMismatch(format!("Gram spec {} vs prior spec {}", g.spec(), prior.spec())));
    }
    Ok(())
}

/// `F(θ) = Σ_ℓ ‖X_ℓᵀX_ℓ − G_ℓ‖²` for `X = X(θ)`.
pub fn gram_misfit<T: Real>(prior: &dyn ParamSet<T>, g: &GramTuple<T>, theta: &DVector<T>) -> T {
    (gram_vec(prior.spec(), &prior.decode(theta)) - target_vec(g)).norm_squared()
}

/// `∇F(θ) = Jᵀ ∇_X F` with the ambient gradient `4 X (XᵀX − G)` blockwise.
pub fn gram_misfit_gradient<T: Real>(prior: &dyn ParamSet<T>, g: &GramTuple<T>, theta: &DVector<T>) -> DVector<T> {
    let spec = prior.spec();
    let x = prior.decode(theta);
    let mut ambient = Vec::with_capacity(x.len());
    for (xb, gb) in blocks_of(spec, &x).zip(g.blocks()) {
        let r = xb.tr_mul(&xb) - gb;
        ambient.extend((xb * r * T::lit(4.0)).iter().copied());
    }
    prior.jacobian(theta).tr_mul(&DVector::from_vec(ambient))
}

struct Objective<'a, T: Real> {
    prior: &'a dyn ParamSet<T>,
    target: DVector<T>,
}

impl<T: Real> Objective<'_, T> {
    fn residual(&self, theta: &DVector<T>) -> DVector<T> {
        gram_vec(self.prior.spec(), &self.prior.decode(theta)) - &self.target
    }

    fn value(&self, theta: &DVector<T>) -> T {
        self.residual(theta).norm_squared()
    }

    /// `∂ vec(XᵀX) / ∂θ`.
    fn residual_jacobian(&self, theta: &DVector<T>) -> DMatrix<T> {
        let spec = self.prior.spec();
        let x = self.prior.decode(theta);
        let j = self.prior.jacobian(theta);
        let mut out = DMatrix::zeros(self.target.len(), j.ncols());
        for k in 0..j.ncols() {
            out.set_column(k, &sym_product(spec, &x, &j.column(k).into_owned()));
        }
        out
    }
}

/// Relative misfit below which gradient descent hands over to the
/// Levenberg–Marquardt polish.
const HANDOVER: f64 = 1e-4;

/// One restart: projected gradient descent with backtracking, then
/// Levenberg–Marquardt steps until the misfit stalls.
fn descend<T: Real>(obj: &Objective<'_, T>, mut theta: DVector<T>, max_iters: usize, g_norm_sq: T) -> (DVector<T>, T, usize) {
    let prior = obj.prior;
    prior.project(&mut theta);
    let mut f = obj.value(&theta);
    let floor = T::lit(1e-30) * g_norm_sq;
    let mut iters = 0;
    let mut step = T::one() / (T::one() + g_norm_sq.sqrt());
    let gd_budget = max_iters / 2;

    while iters < gd_budget && f > T::lit(HANDOVER) * g_norm_sq {
        iters += 1;
        let r = obj.residual(&theta);
        let grad = obj.residual_jacobian(&theta).tr_mul(&r) * T::lit(2.0);
        let mut accepted = false;
        step *= T::lit(2.0);
        for _ in 0..60 {
            let mut trial = &theta - &grad * step;
            prior.project(&mut trial);
            let ft = obj.value(&trial);
            let moved = (&trial - &theta).norm_squared();
            if ft <= f - T::lit(1e-4) * moved / step && ft < f {
                theta = trial;
                f = ft;
                accepted = true;
                break;
            }
            step *= T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }

    let mut lambda = T::lit(1e-3);
    while iters < max_iters && f > floor {
        iters += 1;
        let r = obj.residual(&theta);
        let j = obj.residual_jacobian(&theta);
        let a = j.tr_mul(&j);
        let rhs = -j.tr_mul(&r);
        let bump = T::lit(1e-12) * (T::one() + a.trace());
        let mut improved = false;
        while lambda < T::lit(1e12) {
            let mut m = a.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += lambda * (a[(i, i)] + bump);
            }
            if let Some(chol) = m.cholesky() {
                let mut trial = &theta + chol.solve(&rhs);
                prior.project(&mut trial);
                let ft = obj.value(&trial);
                if ft < f {
                    let gain = (f - ft) / f;
                    theta = trial;
                    f = ft;
                    lambda = (lambda / T::lit(3.0)).max(T::lit(1e-15));
                    improved = gain > T::lit(1e-12);
                    break;
                }
            }
            lambda *= T::lit(4.0);
        }
        if !improved {
            break;
        }
    }
    (theta, f, iters)
}

/// Gaussian start scaled to the energy `Σ tr G_ℓ` when the prior is a cone.
fn initial_params<T: Real>(prior: &Prior<T>, g: &GramTuple<T>, rng: &mut dyn RngCore) -> DVector<T> {
    let mut theta = prior.sample_params(rng);
    if prior.is_homogeneous() {
        let energy: T = g.blocks().iter().fold(T::zero(), |a, b| a + b.trace());
        let n = prior.decode(&theta).norm();
        if n > T::zero() && energy > T::zero() {
            theta *= energy.sqrt() / n;
        }
    }
    theta
}

/// Restarts evaluated together before checking for convergence.
const RESTART_BATCH: usize = 4;

/// Find `X` in the prior with `XᵀX ≈ G` by multistart descent on
/// `F(θ) = ‖X(θ)ᵀX(θ) − G‖²`.
///
/// Restarts run in fixed batches; the first converged restart in index order
/// wins, otherwise the one with the smallest misfit. `init` replaces the
/// first random start.
pub fn recover_from_gram<T: Real, R: RngCore>(
    g: &GramTuple<T>,
    prior: &Prior<T>,
    opts: &RecoveryOptions,
    init: Option<&DVector<T>>,
    rng: &mut R,
) -> Result<RecoveryResult<T>> {
    check_prior(g, prior)?;
    if opts.restarts == 0 {
        return Err(Error::OutOfRange("at least one restart is required".into()));
    }
    let g_norm_sq = g.norm() * g.norm();
    if g_norm_sq == T::zero() && prior.contains_zero() {
        let theta = DVector::zeros(prior.param_dim());
        return Ok(RecoveryResult {
            estimate: prior.decode_signal(&theta),
            params: theta,
            relative_error: None,
            objective: T::zero(),
            restarts_used: 0,
            converged: true,
            iterations: 0,
        });
    }
    let obj = Objective {
        prior,
        target: target_vec(g),
    };
    let threshold = T::lit(opts.tol) * g_norm_sq;
    let seed = rng.next_u64();
    let mut best: Option<(DVector<T>, T, usize, usize)> = None;
    let mut used = 0;
    for batch in (0..opts.restarts).step_by(RESTART_BATCH) {
        let end = (batch + RESTART_BATCH).min(opts.restarts);
        let runs: Vec<(DVector<T>, T, usize)> = (batch..end)
            .into_par_iter()
            .map(|i| {
                let start = match (i, init) {
                    (0, Some(t)) => t.clone(),
                    _ => initial_params(prior, g, &mut task_rng(seed, i as u64)),
                };
                descend(&obj, start, opts.max_iters, g_norm_sq)
            })
            .collect();
        let mut done = false;
        for (k, (theta, f, iters)) in runs.into_iter().enumerate() {
            let i = batch + k;
            if done {
                break;
            }
            used = i + 1;
            if best.as_ref().is_none_or(|b| f < b.1) {
                best = Some((theta, f, iters, i));
            }
            if f <= threshold {
                done = true;
            }
        }
        if done {
            break;
        }
    }
    let (theta, f, iters, _) = best.expect("at least one restart");
    Ok(RecoveryResult {
        estimate: prior.decode_signal(&theta),
        params: theta,
        relative_error: None,
        objective: f,
        restarts_used: used,
        converged: f <= threshold,
        iterations: iters,
    })
}

/// `d_σ(estimate, truth) / ‖truth‖`, or `d_σ` itself for a zero truth.
pub fn relative_error<T: Real>(estimate: &Signal<T>, truth: &Signal<T>) -> Result<T> {
    let ds = d_sigma(estimate, truth)?;
    let n = truth.norm();
    Ok(if n > T::zero() { ds / n } else { ds })
}

/// Random symmetric tuple with total Frobenius norm `delta`.
pub fn random_symmetric_tuple<T: Real>(g: &GramTuple<T>, delta: T, rng: &mut dyn RngCore) -> Vec<DMatrix<T>> {
    let mut blocks: Vec<DMatrix<T>> = g
        .blocks()
        .iter()
        .map(|b| {
            let m = DMatrix::from_fn(b.nrows(), b.ncols(), |_, _| gaussian::<T, _>(rng));
            (&m + m.transpose()) * T::lit(0.5)
        })
        .collect();
    let n = blocks.iter().fold(T::zero(), |a, b| a + b.norm_squared()).sqrt();
    for b in &mut blocks {
        *b *= delta / n;
    }
    blocks
}

/// `(√G + E)²`, PSD-projected, for a random symmetric `E` of norm `delta`.
pub fn perturb_gram<T: Real>(g: &GramTuple<T>, delta: T, rng: &mut dyn RngCore) -> Result<GramTuple<T>> {
    let root = sqrt_psd(g)?;
    let e = random_symmetric_tuple(g, delta, rng);
    let blocks = root
        .blocks()
        .iter()
        .zip(&e)
        .map(|(s, e)| {
            let p = s + e;
            &p * &p
        })
        .collect();
    GramTuple::project_psd(g.spec().clone(), blocks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseRow {
    pub delta: f64,
    pub trial: usize,
    pub relative_error: f64,
    pub objective: f64,
    pub converged: bool,
}

impl NoiseRow {
    pub const CSV_HEADER: &'static str = "delta,trial,relative_error,objective,converged";
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseStabilityReport {
    pub rows: Vec<NoiseRow>,
    /// `(δ, mean relative error)` in the order of the requested deltas.
    pub mean_errors: Vec<(f64, f64)>,
    /// Least-squares slope of log mean error against log δ over `δ > 0`.
    pub slope: f64,
}

/// Perturb `√G` by random symmetric tuples of norm `δ`, recover, and record
/// the relative error.
///
/// Besides the random restarts, each recovery gets one start at the truth,
/// so the smallest-misfit estimate approximates the global minimizer and the
/// error reflects the geometry of the inverse map rather than optimizer
/// luck.
pub fn noise_stability_experiment<T: Real, R: RngCore>(
    prior: &Prior<T>,
    truth_params: &DVector<T>,
    deltas: &[f64],
    trials: usize,
    opts: &RecoveryOptions,
    rng: &mut R,
) -> Result<NoiseStabilityReport> {
    let truth = prior.decode_signal(truth_params);
    let g = second_moment(&truth);
    let seed = rng.next_u64();
    let tasks: Vec<(usize, usize)> = (0..deltas.len()).flat_map(|d| (0..trials).map(move |t| (d, t))).collect();
    let rows: Vec<Result<NoiseRow>> = tasks
        .par_iter()
        .enumerate()
        .map(|(k, &(d, trial))| {
            let mut r = task_rng(seed, k as u64);
            let delta = deltas[d];
            let gt = if delta > 0.0 {
                perturb_gram(&g, T::lit(delta), &mut r)?
            } else {
                g.clone()
            };
            let res = recover_from_gram(&gt, prior, opts, Some(truth_params), &mut r)?;
            Ok(NoiseRow {
                delta,
                trial,
                relative_error: relative_error(&res.estimate, &truth)?.as_f64(),
                objective: res.objective.as_f64(),
                converged: res.converged,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mean_errors: Vec<(f64, f64)> = deltas
        .iter()
        .enumerate()
        .map(|(d, &delta)| {
            let e = &rows[d * trials..(d + 1) * trials];
            (delta, e.iter().map(|r| r.relative_error).sum::<f64>() / trials.max(1) as f64)
        })
        .collect();
    let fit: Vec<(f64, f64)> = mean_errors.iter().copied().filter(|&(d, e)| d > 0.0 && e > 0.0).collect();
    let slope = if fit.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = fit.into_iter().unzip();
        log_log_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    Ok(NoiseStabilityReport {
        rows,
        mean_errors,
        slope,
    })
}
