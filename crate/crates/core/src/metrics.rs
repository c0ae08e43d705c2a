//! Distances on signals: the sign quotient `d_σ`, the orbit distance `d_H`,
//! the Gram surrogate `d_Gram`, and the distance between Gram square roots.

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::moments::{procrustes_align, second_moment, sqrt_moment};
use crate::real::Real;
use crate::signal::{check_same_spec, Signal};

/// `min(‖x + y‖, ‖x − y‖)`.
pub fn d_sigma<T: Real>(x: &Signal<T>, y: &Signal<T>) -> Result<T> {
    check_same_spec(x, y)?;
    Ok((x + y).norm().min((x - y).norm()))
}

/// `min_{h ∈ H} ‖x − h·y‖`, realized by blockwise Procrustes.
pub fn d_h<T: Real>(x: &Signal<T>, y: &Signal<T>) -> Result<T> {
    procrustes_align(x, y).map(|(_, r)| r)
}

/// `√‖XᵀX − YᵀY‖`.
pub fn d_gram<T: Real>(x: &Signal<T>, y: &Signal<T>) -> Result<T> {
    check_same_spec(x, y)?;
    let gx = second_moment(x);
    let gy = second_moment(y);
    Ok(gx.distance(&gy)?.sqrt())
}

/// `d_Gram` through the polarization form
/// `√(½‖(X−Y)ᵀ(X+Y) + (X+Y)ᵀ(X−Y)‖)`.
pub fn d_gram_polarized<T: Real>(x: &Signal<T>, y: &Signal<T>) -> Result<T> {
    check_same_spec(x, y)?;
    let diff = x - y;
    let sum = x + y;
    let total = diff
        .blocks()
        .iter()
        .zip(sum.blocks())
        .fold(T::zero(), |acc, (d, s)| {
            let p = d.tr_mul(s);
            acc + (&p + p.transpose()).norm_squared()
        });
    Ok((T::lit(0.5) * total.sqrt()).sqrt())
}

/// `‖√(XᵀX) − √(YᵀY)‖`.
pub fn gram_sqrt_dist<T: Real>(x: &Signal<T>, y: &Signal<T>) -> Result<T> {
    check_same_spec(x, y)?;
    sqrt_moment(x).distance(&sqrt_moment(y))
}

/// All distances for one pair, plus the `1`/`√2` sandwich check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport<T: Real> {
    pub d_sigma: T,
    pub d_h: T,
    pub d_gram: T,
    pub gram_sqrt_dist: T,
    pub derksen_ok: bool,
}

impl<T: Real> MetricReport<T> {
    pub const CSV_HEADER: [&'static str; 5] = ["d_sigma", "d_H", "d_gram", "gram_sqrt_dist", "derksen_ok"];
}

/// Compute every distance and check
/// `d_H − tol ≤ gram_sqrt_dist ≤ √2·d_H + tol` with `tol = 1e−8·(1 + ‖x‖ + ‖y‖)`.
pub fn metric_report<T: Real>(x: &Signal<T>, y: &Signal<T>) -> Result<MetricReport<T>> {
    let d_sigma = d_sigma(x, y)?;
    let d_h = d_h(x, y)?;
    let d_gram = d_gram(x, y)?;
    let gram_sqrt_dist = gram_sqrt_dist(x, y)?;
    let tol = T::lit(1e-8) * (T::one() + x.norm() + y.norm());
    let derksen_ok = d_h - tol <= gram_sqrt_dist && gram_sqrt_dist <= T::lit(2f64.sqrt()) * d_h + tol;
    Ok(MetricReport {
        d_sigma,
        d_h,
        d_gram,
        gram_sqrt_dist,
        derksen_ok,
    })
}

/// Uniform sample from the Frobenius ball `B_r(center)`.
pub fn sample_ball<T: Real, R: Rng + ?Sized>(center: &Signal<T>, r: T, rng: &mut R) -> Signal<T> {
    let dim = center.spec().ambient_dim();
    let dir = Signal::<T>::random(center.spec(), rng);
    let n = dir.norm();
    let u: f64 = rng.random();
    let radius = r * T::lit(u.powf(1.0 / dim as f64));
    if n == T::zero() {
        return center.clone();
    }
    center + &dir.scaled(radius / n)
}

/// Result of sampling `d_Gram² / d_H` over a ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowLipCheck<T: Real> {
    /// Largest observed `d_Gram(x, y)² / d_H(x, y)`.
    pub worst_ratio: T,
    /// The guaranteed constant `2(‖x₀‖ + r)`.
    pub bound: T,
    pub pairs_evaluated: usize,
    pub pairs_skipped: usize,
}

impl<T: Real> LowLipCheck<T> {
    pub fn holds(&self, tol: T) -> bool {
        self.worst_ratio <= self.bound + tol
    }
}

/// Sample `n_pairs` pairs in `B_r(x0)` and record the worst `d_Gram²/d_H`;
/// pairs with `d_H ≤ 1e−12` are skipped.
pub fn local_lowlip_check<T: Real, R: Rng + ?Sized>(
    x0: &Signal<T>,
    r: T,
    n_pairs: usize,
    rng: &mut R,
) -> LowLipCheck<T> {
    let mut worst = T::zero();
    let mut evaluated = 0;
    let mut skipped = 0;
    let floor = T::lit(1e-12);
    for _ in 0..n_pairs {
        let x = sample_ball(x0, r, rng);
        // Half of the pairs are drawn close together, where the ratio is largest.
        let y = if rng.random::<bool>() {
            sample_ball(x0, r, rng)
        } else {
            let step = r * T::lit(10f64.powf(-3.0 * rng.random::<f64>()));
            let mut y = sample_ball(&x, step, rng);
            let off = &y - x0;
            let n = off.norm();
            if n > r {
                y = x0 + &off.scaled(r / n);
            }
            y
        };
        let dh = d_h(&x, &y).expect("same spec");
        if dh <= floor {
            skipped += 1;
            continue;
        }
        let dg = d_gram(&x, &y).expect("same spec");
        worst = worst.max(dg * dg / dh);
        evaluated += 1;
    }
    LowLipCheck {
        worst_ratio: worst,
        bound: T::lit(2.0) * (x0.norm() + r),
        pairs_evaluated: evaluated,
        pairs_skipped: skipped,
    }
}
