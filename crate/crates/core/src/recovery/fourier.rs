use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::repspec::RepSpec;
use crate::signal::Signal;

fn check_even(n: usize) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::OddOrder("real Fourier basis", n));
    }
    Ok(())
}

/// Orthonormal `N × N` matrix `B` whose rows follow [`RepSpec::zn`]: the
/// constant row, the alternating row, then `(cos, sin)` pairs for
/// frequencies `1..N/2`.
///
/// A circular shift by one acts on `Bx` as the identity on the constant
/// coordinate, `−1` on the alternating one, and a rotation by `2πk/N` on
/// pair `k`.
pub fn real_fourier_basis<T: Real>(n: usize) -> Result<DMatrix<T>> {
    check_even(n)?;
    let nf = n as f64;
    let mut b = DMatrix::zeros(n, n);
    let c0 = 1.0 / nf.sqrt();
    let c = (2.0 / nf).sqrt();
    for t in 0..n {
        b[(0, t)] = T::lit(c0);
        b[(1, t)] = T::lit(if t % 2 == 0 { c0 } else { -c0 });
        for k in 1..n / 2 {
            let ang = 2.0 * std::f64::consts::PI * (k * t % n) as f64 / nf;
            b[(2 * k, t)] = T::lit(c * ang.cos());
            b[(2 * k + 1, t)] = T::lit(c * ang.sin());
        }
    }
    Ok(b)
}

/// Circular shift `x(t) ↦ x(t − s)`.
pub fn circular_shift<T: Real>(x: &DVector<T>, s: usize) -> DVector<T> {
    let n = x.len();
    DVector::from_fn(n, |t, _| x[(t + n - s % n) % n])
}

/// Action of the shift by `s` on Fourier coordinates.
pub fn shift_in_fourier<T: Real>(coeffs: &DVector<T>, s: usize) -> DVector<T> {
    let n = coeffs.len();
    let mut out = coeffs.clone();
    if s % 2 == 1 {
        out[1] = -out[1];
    }
    for k in 1..n / 2 {
        let ang = T::lit(2.0 * std::f64::consts::PI * (k * s % n) as f64 / n as f64);
        let (c, si) = (coeffs[2 * k], coeffs[2 * k + 1]);
        out[2 * k] = ang.cos() * c - ang.sin() * si;
        out[2 * k + 1] = ang.sin() * c + ang.cos() * si;
    }
    out
}

/// Fourier coordinates of a time-domain signal as a `Z_N` signal.
pub fn signal_to_blocks<T: Real>(x_time: &DVector<T>) -> Result<Signal<T>> {
    let n = x_time.len();
    let spec = RepSpec::zn(n)?;
    let b = real_fourier_basis::<T>(n)?;
    Signal::from_flat(&spec, &(b * x_time))
}

/// Inverse of [`signal_to_blocks`].
pub fn blocks_to_signal<T: Real>(x: &Signal<T>) -> Result<DVector<T>> {
    let n = x.spec().ambient_dim();
    if x.spec() != &RepSpec::zn(n)? {
        return Err(Error::ShapeMismatch(format!("spec {} is not the Z_{n} decomposition", x.spec())));
    }
    let b = real_fourier_basis::<T>(n)?;
    Ok(b.transpose() * x.to_flat())
}
