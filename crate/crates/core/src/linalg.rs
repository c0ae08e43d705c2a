//! Small dense helpers shared by the prior and stability modules.

use nalgebra::{DMatrix, DVector};

use crate::real::Real;
use crate::repspec::RepSpec;

/// Orthonormal basis of the column space of `m`, dropping directions whose
/// singular value is below `rel_tol · σ_max`.
pub fn orthonormal_columns<T: Real>(m: &DMatrix<T>, rel_tol: f64) -> DMatrix<T> {
    let (rows, cols) = m.shape();
    if cols == 0 || rows == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("U requested");
    let smax = svd.singular_values.iter().fold(T::zero(), |a, &s| a.max(s));
    if smax == T::zero() {
        return DMatrix::zeros(rows, 0);
    }
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > T::lit(rel_tol) * smax)
        .map(|(i, _)| i)
        .collect();
    DMatrix::from_fn(rows, keep.len(), |r, c| u[(r, keep[c])])
}

/// `σ_max / σ_min` of the columns of `m` (infinite when rank deficient).
pub fn condition_number<T: Real>(m: &DMatrix<T>) -> f64 {
    let sv = m.singular_values();
    let smax = sv.iter().fold(T::zero(), |a, &s| a.max(s)).as_f64();
    let smin = sv.iter().fold(T::max_value().unwrap(), |a, &s| a.min(s)).as_f64();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Horizontal concatenation.
pub fn hcat<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Select columns by index.
pub fn select_columns<T: Real>(m: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

pub fn dvec_from_f64<T: Real>(v: &[f64]) -> DVector<T> {
    DVector::from_iterator(v.len(), v.iter().map(|&x| T::lit(x)))
}

/// Blocks of a flattened signal.
pub(crate) fn blocks_of<'a, T: Real>(spec: &'a RepSpec, v: &'a DVector<T>) -> impl Iterator<Item = DMatrix<T>> + 'a {
    spec.blocks()
        .iter()
        .zip(spec.offsets())
        .map(move |(b, o)| DMatrix::from_column_slice(b.n_rows, b.n_cols, &v.as_slice()[o..o + b.len()]))
}

/// Number of entries in a flattened Gram tuple, `Σ R_ℓ²`.
pub(crate) fn gram_len(spec: &RepSpec) -> usize {
    spec.blocks().iter().map(|b| b.n_cols * b.n_cols).sum()
}

/// Entries of `XᵀD + DᵀX` over all blocks, column-major per block.
pub(crate) fn sym_product<T: Real>(spec: &RepSpec, x: &DVector<T>, d: &DVector<T>) -> DVector<T> {
    let mut out = Vec::with_capacity(gram_len(spec));
    for (xb, db) in blocks_of(spec, x).zip(blocks_of(spec, d)) {
        let p = xb.tr_mul(&db);
        out.extend((&p + p.transpose()).iter().copied());
    }
    DVector::from_vec(out)
}

/// Entries of `XᵀX` over all blocks, column-major per block.
pub(crate) fn gram_vec<T: Real>(spec: &RepSpec, x: &DVector<T>) -> DVector<T> {
    let mut out = Vec::with_capacity(gram_len(spec));
    for xb in blocks_of(spec, x) {
        out.extend(xb.tr_mul(&xb).iter().copied());
    }
    DVector::from_vec(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_enumerate() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(3, 0), vec![Vec::<usize>::new()]);
        assert_eq!(combinations(5, 1).len(), 5);
        assert_eq!(binomial(6, 2), 15);
        assert_eq!(binomial(45, 8), 215_553_195);
        for (n, k) in [(6, 2), (8, 3), (7, 7)] {
            assert_eq!(combinations(n, k).len() as u128, binomial(n, k));
        }
    }

    #[test]
    fn orthonormal_drops_dependent_columns() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let q = orthonormal_columns(&m, 1e-10);
        assert_eq!(q.ncols(), 2);
        assert!((q.transpose() * &q - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 10.0, 100.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((log_log_slope(&xs, &ys) - 1.5).abs() < 1e-12);
    }
}
