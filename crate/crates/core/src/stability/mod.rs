//! Empirical bi-Lipschitz constants, transversality searches, the exact
//! tangency constant `c`, and the two non-bi-Lipschitz examples.

mod counterexamples;
mod search;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

pub use counterexamples::{
    counterexample_affine_plane, counterexample_line_segment, plane_point, plane_prior, segment_prior, PlaneRow,
    PlaneTable, SegmentRow, SegmentTable,
};
pub use search::{
    hull_transversality_check, hull_transversality_check_with, transversality_search_linear,
    transversality_search_linear_with, transversality_search_set, transversality_search_set_with, SearchConfig,
    SearchStats, TransversalityVerdict, VerdictKind, Witness,
};

use crate::error::{Error, Result};
use crate::metrics::{d_sigma, gram_sqrt_dist};
use crate::priors::{AffineChart, ParamSet, Prior};
use crate::real::{task_rng, Real};
use crate::signal::Signal;

/// Pairs closer than this (relative to the larger norm) have no ratio.
pub const RATIO_FLOOR: f64 = 1e-12;

/// Pairs closer than this are left out of `c1_hat` and counted instead.
pub const DEGENERATE_FLOOR: f64 = 1e-6;

fn pair_scale<T: Real>(x: &Signal<T>, y: &Signal<T>) -> T {
    x.norm().max(y.norm())
}

/// `‖√XᵀX − √YᵀY‖ / d_σ(x, y)`. Fails with [`Error::AllDegenerate`] when
/// `d_σ` is below `1e−12` of the pair's scale.
pub fn lipschitz_ratio<T: Real>(x: &Signal<T>, y: &Signal<T>) -> Result<T> {
    let ds = d_sigma(x, y)?;
    if ds <= T::lit(RATIO_FLOOR) * pair_scale(x, y) {
        return Err(Error::AllDegenerate);
    }
    Ok(gram_sqrt_dist(x, y)? / ds)
}

/// Ratio that is `None` below the degenerate floor.
fn guarded_ratio<T: Real>(x: &Signal<T>, y: &Signal<T>, floor: f64) -> Option<T> {
    let ds = d_sigma(x, y).ok()?;
    if ds < T::lit(floor) * pair_scale(x, y) || ds == T::zero() {
        return None;
    }
    Some(gram_sqrt_dist(x, y).ok()? / ds)
}

/// Observed extremes of the Lipschitz ratio over a prior.
#[derive(Debug, Clone, Serialize)]
pub struct LipschitzEstimate<T: Real> {
    pub c1_hat: T,
    pub c2_hat: T,
    pub worst_pair: (Signal<T>, Signal<T>),
    pub n_pairs_evaluated: usize,
    pub n_degenerate_skipped: usize,
}

/// Number of worst pairs handed to the local refinement.
const REFINE_STARTS: usize = 4;

/// Sample `n_pairs` pairs from the prior, then refine the smallest ratios
/// by coordinate descent in the prior's parameters.
///
/// Pairs with `d_σ < 1e−6·scale` are skipped and counted. `refine_steps`
/// bounds the number of coordinate sweeps per refined pair.
pub fn estimate_lipschitz_bounds<T: Real, R: RngCore>(
    prior: &Prior<T>,
    n_pairs: usize,
    refine_steps: usize,
    rng: &mut R,
) -> Result<LipschitzEstimate<T>> {
    let seed = rng.next_u64();
    let samples: Vec<_> = (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let mut r = task_rng(seed, i as u64);
            let t1 = prior.sample_params(&mut r);
            let t2 = prior.sample_params(&mut r);
            let x = prior.decode_signal(&t1);
            let y = prior.decode_signal(&t2);
            let ratio = guarded_ratio(&x, &y, DEGENERATE_FLOOR);
            (t1, t2, ratio)
        })
        .collect();

    let mut skipped = 0;
    let mut evaluated = Vec::new();
    let mut c2 = T::zero();
    for (i, (t1, t2, r)) in samples.into_iter().enumerate() {
        match r {
            Some(r) => {
                c2 = c2.max(r);
                evaluated.push((r, i, t1, t2));
            }
            None => skipped += 1,
        }
    }
    if evaluated.is_empty() {
        return Err(Error::AllDegenerate);
    }
    let n_evaluated = evaluated.len();
    evaluated.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    evaluated.truncate(REFINE_STARTS);

    let refined: Vec<(T, DVector<T>, DVector<T>)> = evaluated
        .into_par_iter()
        .map(|(r, _, t1, t2)| refine_pair(prior, t1, t2, r, refine_steps))
        .collect();
    let (c1, t1, t2) = refined
        .into_iter()
        .reduce(|a, b| if b.0 < a.0 { b } else { a })
        .expect("at least one evaluated pair");

    Ok(LipschitzEstimate {
        c1_hat: c1,
        c2_hat: c2.max(c1),
        worst_pair: (prior.decode_signal(&t1), prior.decode_signal(&t2)),
        n_pairs_evaluated: n_evaluated,
        n_degenerate_skipped: skipped,
    })
}

/// Coordinate descent on the ratio over both parameter vectors with a
/// halving step.
fn refine_pair<T: Real>(
    prior: &Prior<T>,
    mut t1: DVector<T>,
    mut t2: DVector<T>,
    mut best: T,
    sweeps: usize,
) -> (T, DVector<T>, DVector<T>) {
    let n1 = t1.len();
    let n = n1 + t2.len();
    let eval = |a: &DVector<T>, b: &DVector<T>| {
        guarded_ratio(&prior.decode_signal(a), &prior.decode_signal(b), DEGENERATE_FLOOR)
    };
    let mut step = T::lit(0.1) * (T::one() + (t1.norm() + t2.norm()) / T::lit(n.max(1) as f64).sqrt());
    let min_step = T::lit(1e-10) * (T::one() + t1.norm() + t2.norm());
    for _ in 0..sweeps {
        let mut improved = false;
        for k in 0..n {
            for sign in [T::one(), -T::one()] {
                let (mut a, mut b) = (t1.clone(), t2.clone());
                if k < n1 {
                    a[k] += sign * step;
                    prior.project(&mut a);
                } else {
                    b[k - n1] += sign * step;
                    prior.project(&mut b);
                }
                if let Some(r) = eval(&a, &b) {
                    if r < best {
                        best = r;
                        t1 = a;
                        t2 = b;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            step *= T::lit(0.5);
            if step < min_step {
                break;
            }
        }
    }
    (best, t1, t2)
}

/// Matrix of `S ↦ X₀ᵀS + SᵀX₀` on the chart's orthonormal directions, one
/// column per direction.
pub fn tangency_operator<T: Real>(x0: &Signal<T>, chart: &AffineChart<T>) -> Result<DMatrix<T>> {
    if chart.spec() != x0.spec() {
        return Err(Error::ShapeMismatch(format!("chart spec {} vs signal spec {}", chart.spec(), x0.spec())));
    }
    let dirs = chart.directions();
    let rows: usize = x0.spec().blocks().iter().map(|b| b.n_cols * b.n_cols).sum();
    let mut m = DMatrix::zeros(rows, dirs.len());
    for (j, s) in dirs.iter().enumerate() {
        let mut r = 0;
        for (xb, sb) in x0.blocks().iter().zip(s.blocks()) {
            let p = xb.tr_mul(sb);
            let sym = &p + p.transpose();
            for v in sym.iter() {
                m[(r, j)] = *v;
                r += 1;
            }
        }
    }
    Ok(m)
}

/// `min ‖X₀ᵀS + SᵀX₀‖` over unit `S` in the chart's direction span, as the
/// smallest singular value of [`tangency_operator`].
pub fn c_constant<T: Real>(x0: &Signal<T>, chart: &AffineChart<T>) -> Result<T> {
    if chart.dim() == 0 {
        return Err(Error::EmptyChart);
    }
    let m = tangency_operator(x0, chart)?;
    if m.ncols() > m.nrows() {
        return Ok(T::zero());
    }
    Ok(m.singular_values().iter().fold(T::max_value().unwrap(), |a, &s| a.min(s)))
}
