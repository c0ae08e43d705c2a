use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{d_h, d_sigma};
use crate::priors::{AffinePrior, Prior};
use crate::real::Real;
use crate::repspec::RepSpec;
use crate::signal::Signal;

use super::lipschitz_ratio;

fn segment_spec() -> RepSpec {
    RepSpec::new(vec![(2, 1)]).expect("valid spec")
}

/// `{(1, y) : y ∈ [lo, hi]}` in `R²` under `O(2)`; unbounded when `bounds`
/// is `None`.
pub fn segment_prior<T: Real>(bounds: Option<(T, T)>) -> Prior<T> {
    let spec = segment_spec();
    let anchor = Signal::from_slice(&spec, &[T::one(), T::zero()]).expect("length 2");
    let dir = Signal::from_slice(&spec, &[T::zero(), T::one()]).expect("length 2");
    Prior::Affine(AffinePrior::new(&anchor, &[dir], bounds.map(|b| vec![b])).expect("one direction"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentRow<T: Real> {
    pub y: T,
    pub d_sigma: T,
    /// `‖(cos y − 1, sin y − y)‖`, the distance to `(1, 0)` rotated by `y`.
    pub d_h_bound: T,
    pub d_h: T,
    pub ratio: T,
    pub lipschitz_ratio: T,
}

impl<T: Real> SegmentRow<T> {
    pub const CSV_HEADER: &'static str = "y,d_sigma,d_h_bound,d_h,ratio,lipschitz_ratio";
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentTable<T: Real> {
    pub rows: Vec<SegmentRow<T>>,
    /// `d_H/d_σ` strictly decreases as `y` decreases.
    pub ratio_monotone: bool,
    /// `d_H ≤ 0.6·y²` on every row with `y ≤ 0.5`.
    pub quadratic_bound_holds: bool,
}

/// Pairs `(1, 0)`, `(1, y)` on the segment: both distances to the orbit
/// shrink like `y²` while `d_σ = y`.
pub fn counterexample_line_segment<T: Real>(ys: &[T]) -> Result<SegmentTable<T>> {
    let spec = segment_spec();
    let x = Signal::from_slice(&spec, &[T::one(), T::zero()])?;
    let mut rows = Vec::with_capacity(ys.len());
    for &y in ys {
        if !(y > T::zero() && y <= T::one()) {
            return Err(Error::OutOfRange(format!("segment offset {y} not in (0, 1]")));
        }
        let p = Signal::from_slice(&spec, &[T::one(), y])?;
        let ds = d_sigma(&x, &p)?;
        let dh = d_h(&x, &p)?;
        let bound = (y.cos() - T::one()).hypot(y.sin() - y);
        rows.push(SegmentRow {
            y,
            d_sigma: ds,
            d_h_bound: bound,
            d_h: dh,
            ratio: dh / ds,
            lipschitz_ratio: lipschitz_ratio(&x, &p)?,
        });
    }
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| b.y.partial_cmp(&a.y).unwrap());
    let ratio_monotone = sorted.windows(2).all(|w| w[1].y == w[0].y || w[1].ratio < w[0].ratio);
    let quadratic_bound_holds = rows
        .iter()
        .filter(|r| r.y <= T::lit(0.5))
        .all(|r| r.d_h <= T::lit(0.6) * r.y * r.y);
    Ok(SegmentTable {
        rows,
        ratio_monotone,
        quadratic_bound_holds,
    })
}

fn plane_spec() -> RepSpec {
    RepSpec::new(vec![(1, 1); 4]).expect("valid spec")
}

/// `v[s, t] = (s, t, s + 1, t + 1)` in `O(1)⁴`.
pub fn plane_point<T: Real>(s: T, t: T) -> Signal<T> {
    Signal::from_slice(&plane_spec(), &[s, t, s + T::one(), t + T::one()]).expect("length 4")
}

/// The plane `v[s, t]`, with `|s|, |t| ≤ bound` when given.
pub fn plane_prior<T: Real>(bound: Option<T>) -> Prior<T> {
    let spec = plane_spec();
    let o = T::zero();
    let i = T::one();
    let anchor = Signal::from_slice(&spec, &[o, o, i, i]).expect("length 4");
    let ds = Signal::from_slice(&spec, &[i, o, i, o]).expect("length 4");
    let dt = Signal::from_slice(&spec, &[o, i, o, i]).expect("length 4");
    let bounds = bound.map(|b| vec![(-b, b), (-b, b)]);
    Prior::Affine(AffinePrior::new(&anchor, &[ds, dt], bounds).expect("two directions"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaneRow<T: Real> {
    pub a: T,
    pub d_sigma: T,
    /// Minimum of `‖X − hY‖` over the 16 sign patterns.
    pub d_h: T,
    /// Procrustes value of `d_H`, for comparison.
    pub d_h_procrustes: T,
    pub ratio: T,
}

impl<T: Real> PlaneRow<T> {
    pub const CSV_HEADER: &'static str = "a,d_sigma,d_h,d_h_procrustes,ratio";
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaneTable<T: Real> {
    pub rows: Vec<PlaneRow<T>>,
    /// `d_σ = √8·a` within `1e−9`.
    pub d_sigma_matches: bool,
    /// `d_H = 2` within `1e−9`.
    pub d_h_is_two: bool,
    /// `ratio / a = √2` within `1e−9` on every row.
    pub ratio_linear: bool,
}

fn brute_force_sign_distance<T: Real>(x: &Signal<T>, y: &Signal<T>) -> T {
    let xv = x.to_flat();
    let yv = y.to_flat();
    let n = xv.len();
    (0..1u32 << n)
        .map(|mask| {
            (0..n)
                .map(|i| {
                    let s = if mask >> i & 1 == 1 { -T::one() } else { T::one() };
                    let d = xv[i] - s * yv[i];
                    d * d
                })
                .fold(T::zero(), |a, b| a + b)
                .sqrt()
        })
        .fold(T::max_value().unwrap(), |a, b| a.min(b))
}

/// Pairs `X_a = v[a, a]`, `Y_a = v[a, −a]` on the plane: `d_σ` grows like
/// `a` while `d_H` stays at 2.
pub fn counterexample_affine_plane<T: Real>(as_: &[T]) -> Result<PlaneTable<T>> {
    let tol = T::lit(1e-9);
    let mut rows = Vec::with_capacity(as_.len());
    for &a in as_ {
        if a.partial_cmp(&T::one()).is_none_or(|o| o.is_lt()) {
            return Err(Error::OutOfRange(format!("plane offset {a} must be at least 1")));
        }
        let x = plane_point(a, a);
        let y = plane_point(a, -a);
        let ds = d_sigma(&x, &y)?;
        let dh = brute_force_sign_distance(&x, &y);
        rows.push(PlaneRow {
            a,
            d_sigma: ds,
            d_h: dh,
            d_h_procrustes: d_h(&x, &y)?,
            ratio: ds / dh,
        });
    }
    let sqrt8 = T::lit(8.0).sqrt();
    Ok(PlaneTable {
        d_sigma_matches: rows.iter().all(|r| (r.d_sigma - sqrt8 * r.a).abs() <= tol * (T::one() + r.a)),
        d_h_is_two: rows.iter().all(|r| (r.d_h - T::lit(2.0)).abs() <= tol),
        ratio_linear: rows
            .iter()
            .all(|r| (r.ratio / r.a - T::lit(2.0).sqrt()).abs() <= tol),
        rows,
    })
}
