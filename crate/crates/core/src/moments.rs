//! The second-moment map `X ↦ XᵀX` and the algebra around it: PSD square
//! roots, blockwise orthogonal Procrustes, and skew pairs.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::repspec::RepSpec;
use crate::signal::{
    blocks_to_row_major, check_same_spec, row_major_to_blocks, BlockOrthogonal, BlocksRepr, Signal,
};

/// Relative symmetry tolerance used when validating Gram blocks.
const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues above `-PSD_CLAMP_TOL · (‖G‖₂ + 1)` count as numerically zero.
pub const PSD_CLAMP_TOL: f64 = 1e-9;

fn tol_floor<T: Real>(tol: f64) -> T {
    T::lit(tol).max(T::eps() * T::lit(100.0))
}

fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// An L-tuple of symmetric PSD matrices, block ℓ of size `R_ℓ × R_ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramTuple<T: Real> {
    spec: RepSpec,
    blocks: Vec<DMatrix<T>>,
}

impl<T: Real> GramTuple<T> {
    /// Validate symmetry and positive semidefiniteness.
    pub fn new(spec: RepSpec, blocks: Vec<DMatrix<T>>) -> Result<Self> {
        check_gram_shapes(&spec, &blocks)?;
        for (i, b) in blocks.iter().enumerate() {
            let asym = (b - b.transpose()).norm();
            if asym > tol_floor::<T>(SYMMETRY_TOL) * (b.norm() + T::one()) {
                return Err(Error::OutOfRange(format!("Gram block {i} is not symmetric ({asym:e})")));
            }
            let eig = symmetrize(b).symmetric_eigenvalues();
            let (min, scale) = extremes(eig.as_slice());
            let threshold = tol_floor::<T>(PSD_CLAMP_TOL) * (scale + T::one());
            if min < -threshold {
                return Err(Error::NotPsd {
                    min_eigenvalue: min.as_f64(),
                    threshold: threshold.as_f64(),
                });
            }
        }
        Ok(Self { spec, blocks })
    }

    /// Symmetrize each block and clamp negative eigenvalues to zero.
    pub fn project_psd(spec: RepSpec, blocks: Vec<DMatrix<T>>) -> Result<Self> {
        check_gram_shapes(&spec, &blocks)?;
        let blocks = blocks
            .iter()
            .map(|b| {
                let eig = symmetrize(b).symmetric_eigen();
                let vals = eig.eigenvalues.map(|v| v.max(T::zero()));
                let v = &eig.eigenvectors;
                symmetrize(&(v * DMatrix::from_diagonal(&vals) * v.transpose()))
            })
            .collect();
        Ok(Self { spec, blocks })
    }

    pub fn zeros(spec: &RepSpec) -> Self {
        Self {
            spec: spec.clone(),
            blocks: spec.blocks().iter().map(|b| DMatrix::zeros(b.n_cols, b.n_cols)).collect(),
        }
    }

    pub fn spec(&self) -> &RepSpec {
        &self.spec
    }

    pub fn blocks(&self) -> &[DMatrix<T>] {
        &self.blocks
    }

    /// Frobenius norm of the block-diagonal aggregate.
    pub fn norm(&self) -> T {
        self.blocks.iter().fold(T::zero(), |acc, b| acc + b.norm_squared()).sqrt()
    }

    /// Frobenius distance between two tuples over the same spec.
    pub fn distance(&self, other: &Self) -> Result<T> {
        if self.spec != other.spec {
            return Err(Error::ShapeMismatch(format!("{} vs {}", self.spec, other.spec)));
        }
        Ok(self
            .blocks
            .iter()
            .zip(&other.blocks)
            .fold(T::zero(), |acc, (a, b)| acc + (a - b).norm_squared())
            .sqrt())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("gram tuple serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }
}

fn check_gram_shapes<T: Real>(spec: &RepSpec, blocks: &[DMatrix<T>]) -> Result<()> {
    if blocks.len() != spec.num_blocks() {
        return Err(Error::ShapeMismatch(format!(
            "{} Gram blocks for a spec with {}",
            blocks.len(),
            spec.num_blocks()
        )));
    }
    for (i, (b, s)) in blocks.iter().zip(spec.blocks()).enumerate() {
        if b.shape() != (s.n_cols, s.n_cols) {
            return Err(Error::ShapeMismatch(format!(
                "Gram block {i} is {:?}, expected ({}, {})",
                b.shape(),
                s.n_cols,
                s.n_cols
            )));
        }
    }
    Ok(())
}

/// (min eigenvalue, max |eigenvalue|)
fn extremes<T: Real>(vals: &[T]) -> (T, T) {
    vals.iter().fold((T::max_value().unwrap(), T::zero()), |(mn, sc), &v| {
        (mn.min(v), sc.max(v.abs()))
    })
}

impl<T: Real> Serialize for GramTuple<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        BlocksRepr {
            spec: self.spec.clone(),
            blocks: blocks_to_row_major(&self.blocks),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real> Deserialize<'de> for GramTuple<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = BlocksRepr::deserialize(deserializer)?;
        let shapes = repr.spec.blocks().iter().map(|b| (b.n_cols, b.n_cols));
        let blocks = row_major_to_blocks(shapes, &repr.blocks).map_err(serde::de::Error::custom)?;
        GramTuple::new(repr.spec, blocks).map_err(serde::de::Error::custom)
    }
}

/// `(X_1ᵀX_1, …, X_LᵀX_L)`, each block symmetrized.
pub fn second_moment<T: Real>(x: &Signal<T>) -> GramTuple<T> {
    GramTuple {
        spec: x.spec().clone(),
        blocks: x.blocks().iter().map(|b| symmetrize(&b.tr_mul(b))).collect(),
    }
}

/// Symmetric PSD square root of a single matrix.
pub fn sqrt_psd_matrix<T: Real>(g: &DMatrix<T>) -> Result<DMatrix<T>> {
    let eig = symmetrize(g).symmetric_eigen();
    let (min, scale) = extremes(eig.eigenvalues.as_slice());
    let threshold = tol_floor::<T>(PSD_CLAMP_TOL) * (scale + T::one());
    if min < -threshold {
        return Err(Error::NotPsd {
            min_eigenvalue: min.as_f64(),
            threshold: threshold.as_f64(),
        });
    }
    let roots = eig.eigenvalues.map(|v| v.max(T::zero()).sqrt());
    let v = &eig.eigenvectors;
    Ok(symmetrize(&(v * DMatrix::from_diagonal(&roots) * v.transpose())))
}

/// Blockwise PSD square root via symmetric eigendecomposition.
pub fn sqrt_psd<T: Real>(g: &GramTuple<T>) -> Result<GramTuple<T>> {
    let blocks = g.blocks.iter().map(sqrt_psd_matrix).collect::<Result<Vec<_>>>()?;
    Ok(GramTuple {
        spec: g.spec.clone(),
        blocks,
    })
}

/// `√(XᵀX)` blockwise.
pub fn sqrt_moment<T: Real>(x: &Signal<T>) -> GramTuple<T> {
    sqrt_psd(&second_moment(x)).expect("a Gram matrix is PSD")
}

/// `‖AᵀB + BᵀA‖` over the block-diagonal aggregate; zero iff every `A_ℓᵀB_ℓ`
/// is skew-symmetric.
pub fn skew_defect<T: Real>(a: &Signal<T>, b: &Signal<T>) -> Result<T> {
    check_same_spec(a, b)?;
    Ok(a.blocks()
        .iter()
        .zip(b.blocks())
        .fold(T::zero(), |acc, (x, y)| {
            let p = x.tr_mul(y);
            acc + (&p + p.transpose()).norm_squared()
        })
        .sqrt())
}

/// Certificate that `AᵀB` is skew: a rotation with `A − B ≈ R(A + B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewPairWitness<T: Real> {
    pub rotation: BlockOrthogonal<T>,
    /// `‖(A − B) − R(A + B)‖`.
    pub residual: T,
}

/// Accept `(a, b)` as a skew pair when `skew_defect(a, b) ≤ tol·‖a‖‖b‖` and
/// return the block rotation relating `a − b` to `a + b`.
pub fn skew_pair_witness<T: Real>(a: &Signal<T>, b: &Signal<T>, tol: T) -> Result<SkewPairWitness<T>> {
    let defect = skew_defect(a, b)?;
    let threshold = tol * a.norm() * b.norm();
    if defect > threshold {
        return Err(Error::NotSkewPair {
            defect: defect.as_f64(),
            threshold: threshold.as_f64(),
        });
    }
    let (rotation, residual) = procrustes_align(&(a - b), &(a + b))?;
    Ok(SkewPairWitness { rotation, residual })
}

/// Sum of singular values.
pub fn nuclear_norm<T: Real>(m: &DMatrix<T>) -> T {
    m.singular_values().iter().fold(T::zero(), |acc, &s| acc + s)
}

/// Orthogonal `Q` maximizing `tr(Qᵀ M)`, i.e. `U Vᵀ` from `M = U Σ Vᵀ`.
pub(crate) fn polar_factor<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("U requested");
    let v_t = svd.v_t.expect("Vᵀ requested");
    u * v_t
}

/// Orthogonal `Q` minimizing `‖X − QY‖` for `N × R` blocks.
///
/// When `N > R` the problem is reduced to `R × R` through full QR factors of
/// `X` and `Y`: `Q = Q_X diag(U Vᵀ, I) Q_Yᵀ` with `R_X R_Yᵀ = U Σ Vᵀ`. This
/// keeps the rank-deficient `N × N` product `XYᵀ` out of the SVD.
pub(crate) fn procrustes_block<T: Real>(x: &DMatrix<T>, y: &DMatrix<T>) -> DMatrix<T> {
    let (n, r) = x.shape();
    if n <= r {
        return polar_factor(&(x * y.transpose()));
    }
    let full_x = full_q(x);
    let full_y = full_q(y);
    let rx = (full_x.transpose() * x).rows(0, r).into_owned();
    let ry = (full_y.transpose() * y).rows(0, r).into_owned();
    let core = polar_factor(&(&rx * ry.transpose()));
    let mut mid = DMatrix::<T>::identity(n, n);
    mid.view_mut((0, 0), (r, r)).copy_from(&core);
    full_x * mid * full_y.transpose()
}

/// Full `N × N` orthogonal factor of a Householder QR.
fn full_q<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let (n, r) = m.shape();
    let mut padded = DMatrix::<T>::zeros(n, n);
    padded.view_mut((0, 0), (n, r)).copy_from(m);
    padded.qr().q()
}

/// Blockwise orthogonal Procrustes: `h_ℓ = U Vᵀ` from `X_ℓ Y_ℓᵀ = U Σ Vᵀ`.
///
/// Returns the minimizer of `‖x − h·y‖` over `H` together with that minimum.
pub fn procrustes_align<T: Real>(x: &Signal<T>, y: &Signal<T>) -> Result<(BlockOrthogonal<T>, T)> {
    check_same_spec(x, y)?;
    let mut blocks = Vec::with_capacity(x.blocks().len());
    let mut residual_sq = T::zero();
    for (xb, yb) in x.blocks().iter().zip(y.blocks()) {
        let q = procrustes_block(xb, yb);
        residual_sq += (xb - &q * yb).norm_squared();
        blocks.push(q);
    }
    Ok((BlockOrthogonal::from_blocks_unchecked(blocks), residual_sq.sqrt()))
}

/// Closed form of the Procrustes residual,
/// `√(Σ_ℓ ‖X_ℓ‖² + ‖Y_ℓ‖² − 2‖X_ℓY_ℓᵀ‖_*)`.
pub fn procrustes_residual_closed_form<T: Real>(x: &Signal<T>, y: &Signal<T>) -> Result<T> {
    check_same_spec(x, y)?;
    let total = x.blocks().iter().zip(y.blocks()).fold(T::zero(), |acc, (xb, yb)| {
        acc + xb.norm_squared() + yb.norm_squared() - T::lit(2.0) * nuclear_norm(&(xb * yb.transpose()))
    });
    Ok(total.max(T::zero()).sqrt())
}
