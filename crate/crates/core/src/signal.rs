//! Block-matrix signals and the ambiguity group `H = ∏ O(N_ℓ)`.
//!
//! Flattened coordinates concatenate the blocks in spec order and store each
//! block column-major, so column `i` of block ℓ (the i-th copy of the ℓ-th
//! irreducible) is a contiguous run of `N_ℓ` entries. The JSON form uses
//! row-major blocks instead; see [`Signal`]'s serde impls.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::real::{gaussian_matrix, Real};
use crate::repspec::RepSpec;

/// An element of `V`, stored as one `N_ℓ × R_ℓ` matrix per block.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T: Real> {
    spec: RepSpec,
    blocks: Vec<DMatrix<T>>,
}

pub(crate) fn check_same_spec<T: Real>(a: &Signal<T>, b: &Signal<T>) -> Result<()> {
    if a.spec != b.spec {
        return Err(Error::ShapeMismatch(format!("{} vs {}", a.spec, b.spec)));
    }
    Ok(())
}

impl<T: Real> Signal<T> {
    pub fn new(spec: RepSpec, blocks: Vec<DMatrix<T>>) -> Result<Self> {
        if blocks.len() != spec.num_blocks() {
            return Err(Error::ShapeMismatch(format!(
                "{} blocks for a spec with {}",
                blocks.len(),
                spec.num_blocks()
            )));
        }
        for (i, (m, s)) in blocks.iter().zip(spec.blocks()).enumerate() {
            if m.shape() != (s.n_rows, s.n_cols) {
                return Err(Error::ShapeMismatch(format!(
                    "block {i} is {:?}, expected ({}, {})",
                    m.shape(),
                    s.n_rows,
                    s.n_cols
                )));
            }
        }
        Ok(Self { spec, blocks })
    }

    pub fn zeros(spec: &RepSpec) -> Self {
        let blocks = spec
            .blocks()
            .iter()
            .map(|b| DMatrix::zeros(b.n_rows, b.n_cols))
            .collect();
        Self { spec: spec.clone(), blocks }
    }

    /// Standard Gaussian signal.
    pub fn random<R: Rng + ?Sized>(spec: &RepSpec, rng: &mut R) -> Self {
        let blocks = spec
            .blocks()
            .iter()
            .map(|b| gaussian_matrix(b.n_rows, b.n_cols, rng))
            .collect();
        Self { spec: spec.clone(), blocks }
    }

    /// Rebuild from flattened coordinates (block order, column-major).
    pub fn from_flat(spec: &RepSpec, flat: &DVector<T>) -> Result<Self> {
        Self::from_slice(spec, flat.as_slice())
    }

    pub fn from_slice(spec: &RepSpec, flat: &[T]) -> Result<Self> {
        if flat.len() != spec.ambient_dim() {
            return Err(Error::ShapeMismatch(format!(
                "vector of length {} for ambient dimension {}",
                flat.len(),
                spec.ambient_dim()
            )));
        }
        let mut offset = 0;
        let blocks = spec
            .blocks()
            .iter()
            .map(|b| {
                let m = DMatrix::from_column_slice(b.n_rows, b.n_cols, &flat[offset..offset + b.len()]);
                offset += b.len();
                m
            })
            .collect();
        Ok(Self { spec: spec.clone(), blocks })
    }

    pub fn to_flat(&self) -> DVector<T> {
        let mut out = Vec::with_capacity(self.spec.ambient_dim());
        for b in &self.blocks {
            out.extend_from_slice(b.as_slice());
        }
        DVector::from_vec(out)
    }

    pub fn spec(&self) -> &RepSpec {
        &self.spec
    }

    pub fn blocks(&self) -> &[DMatrix<T>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &DMatrix<T> {
        &self.blocks[i]
    }

    pub fn into_blocks(self) -> Vec<DMatrix<T>> {
        self.blocks
    }

    pub fn norm_squared(&self) -> T {
        self.blocks.iter().fold(T::zero(), |acc, b| acc + b.norm_squared())
    }

    /// Frobenius norm over all blocks.
    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    /// Euclidean inner product of the flattened coordinates.
    pub fn dot(&self, other: &Self) -> T {
        assert_eq!(self.spec, other.spec, "dot: spec mismatch");
        self.blocks
            .iter()
            .zip(&other.blocks)
            .fold(T::zero(), |acc, (a, b)| acc + a.dot(b))
    }

    pub fn scaled(&self, s: T) -> Self {
        self.map_blocks(|b| b * s)
    }

    /// Blockwise `f`, keeping the spec.
    pub fn map_blocks(&self, mut f: impl FnMut(&DMatrix<T>) -> DMatrix<T>) -> Self {
        Self {
            spec: self.spec.clone(),
            blocks: self.blocks.iter().map(&mut f).collect(),
        }
    }

    fn zip_blocks(&self, other: &Self, f: impl Fn(&DMatrix<T>, &DMatrix<T>) -> DMatrix<T>) -> Self {
        assert_eq!(self.spec, other.spec, "signal arithmetic: spec mismatch");
        Self {
            spec: self.spec.clone(),
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect(),
        }
    }

    /// Convert to another scalar type.
    pub fn cast<U: Real>(&self) -> Signal<U> {
        Signal {
            spec: self.spec.clone(),
            blocks: self.blocks.iter().map(|b| b.map(|v| U::lit(v.as_f64()))).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("signal serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }
}

impl<T: Real> Add for &Signal<T> {
    type Output = Signal<T>;
    fn add(self, rhs: Self) -> Signal<T> {
        self.zip_blocks(rhs, |a, b| a + b)
    }
}

impl<T: Real> Sub for &Signal<T> {
    type Output = Signal<T>;
    fn sub(self, rhs: Self) -> Signal<T> {
        self.zip_blocks(rhs, |a, b| a - b)
    }
}

impl<T: Real> Neg for &Signal<T> {
    type Output = Signal<T>;
    fn neg(self) -> Signal<T> {
        self.map_blocks(|b| -b)
    }
}

impl<T: Real> Mul<T> for &Signal<T> {
    type Output = Signal<T>;
    fn mul(self, rhs: T) -> Signal<T> {
        self.scaled(rhs)
    }
}

/// JSON form: `{"spec": {...}, "blocks": [[row-major entries], ...]}`.
#[derive(Serialize, Deserialize)]
pub(crate) struct BlocksRepr {
    pub spec: RepSpec,
    pub blocks: Vec<Vec<f64>>,
}

pub(crate) fn blocks_to_row_major<T: Real>(blocks: &[DMatrix<T>]) -> Vec<Vec<f64>> {
    blocks
        .iter()
        .map(|m| {
            let mut v = Vec::with_capacity(m.len());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    v.push(m[(i, j)].as_f64());
                }
            }
            v
        })
        .collect()
}

pub(crate) fn row_major_to_blocks<T: Real>(
    shapes: impl Iterator<Item = (usize, usize)>,
    data: &[Vec<f64>],
) -> Result<Vec<DMatrix<T>>> {
    let shapes: Vec<_> = shapes.collect();
    if shapes.len() != data.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} blocks for {} shapes",
            data.len(),
            shapes.len()
        )));
    }
    shapes
        .into_iter()
        .zip(data)
        .enumerate()
        .map(|(i, ((r, c), v))| {
            if v.len() != r * c {
                return Err(Error::ShapeMismatch(format!(
                    "block {i} has {} entries, expected {}",
                    v.len(),
                    r * c
                )));
            }
            Ok(DMatrix::from_row_iterator(r, c, v.iter().map(|&x| T::lit(x))))
        })
        .collect()
}

impl<T: Real> Serialize for Signal<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        BlocksRepr {
            spec: self.spec.clone(),
            blocks: blocks_to_row_major(&self.blocks),
        }
        .serialize(serializer)
    }
}

impl<'de, T: Real> Deserialize<'de> for Signal<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = BlocksRepr::deserialize(deserializer)?;
        let shapes = repr.spec.blocks().iter().map(|b| (b.n_rows, b.n_cols));
        let blocks = row_major_to_blocks(shapes, &repr.blocks).map_err(serde::de::Error::custom)?;
        Signal::new(repr.spec, blocks).map_err(serde::de::Error::custom)
    }
}

/// Orthogonality tolerance for an `n × n` block.
fn orthogonality_tol<T: Real>(n: usize) -> T {
    let base = T::lit(1e-10).max(T::eps() * T::lit(100.0));
    base * T::lit(n as f64)
}

/// An element of `H = ∏ O(N_ℓ)`, one orthogonal matrix per block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOrthogonal<T: Real> {
    blocks: Vec<DMatrix<T>>,
}

impl<T: Real> BlockOrthogonal<T> {
    /// Validate that each block is square orthogonal and matches `spec`.
    pub fn new(spec: &RepSpec, blocks: Vec<DMatrix<T>>) -> Result<Self> {
        if blocks.len() != spec.num_blocks() {
            return Err(Error::ShapeMismatch(format!(
                "{} group blocks for a spec with {}",
                blocks.len(),
                spec.num_blocks()
            )));
        }
        for (i, (q, s)) in blocks.iter().zip(spec.blocks()).enumerate() {
            let n = s.n_rows;
            if q.shape() != (n, n) {
                return Err(Error::ShapeMismatch(format!("group block {i} is {:?}, expected ({n}, {n})", q.shape())));
            }
            let defect = (q.transpose() * q - DMatrix::identity(n, n)).norm();
            if defect > orthogonality_tol::<T>(n) {
                return Err(Error::OutOfRange(format!("group block {i} is not orthogonal (defect {defect:e})")));
            }
        }
        Ok(Self { blocks })
    }

    pub(crate) fn from_blocks_unchecked(blocks: Vec<DMatrix<T>>) -> Self {
        Self { blocks }
    }

    pub fn identity(spec: &RepSpec) -> Self {
        Self {
            blocks: spec.blocks().iter().map(|b| DMatrix::identity(b.n_rows, b.n_rows)).collect(),
        }
    }

    /// `-I` in every block.
    pub fn neg_identity(spec: &RepSpec) -> Self {
        Self {
            blocks: spec.blocks().iter().map(|b| -DMatrix::identity(b.n_rows, b.n_rows)).collect(),
        }
    }

    pub fn blocks(&self) -> &[DMatrix<T>] {
        &self.blocks
    }

    pub fn inverse(&self) -> Self {
        Self {
            blocks: self.blocks.iter().map(|q| q.transpose()).collect(),
        }
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self {
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a * b).collect(),
        }
    }

    /// Largest `‖QᵀQ − I‖_F` over blocks.
    pub fn orthogonality_defect(&self) -> T {
        self.blocks.iter().fold(T::zero(), |acc, q| {
            let n = q.nrows();
            acc.max((q.transpose() * q - DMatrix::identity(n, n)).norm())
        })
    }

    /// Blockwise `Q_ℓ X_ℓ`.
    pub fn apply(&self, x: &Signal<T>) -> Result<Signal<T>> {
        if self.blocks.len() != x.spec().num_blocks()
            || self.blocks.iter().zip(x.blocks()).any(|(q, b)| q.ncols() != b.nrows())
        {
            return Err(Error::ShapeMismatch("group element does not match signal".into()));
        }
        Ok(Signal {
            spec: x.spec().clone(),
            blocks: self.blocks.iter().zip(x.blocks()).map(|(q, b)| q * b).collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&blocks_to_row_major(&self.blocks)).expect("serializes")
    }
}

impl<T: Real> Serialize for BlockOrthogonal<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        blocks_to_row_major(&self.blocks).serialize(serializer)
    }
}

/// Haar-distributed orthogonal `n × n` matrix: QR of a Gaussian matrix with
/// the columns of `Q` sign-corrected by `sign(diag R)`.
pub fn haar_orthogonal<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<T> {
    let g = gaussian_matrix::<T, R>(n, n, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Draw `h ∈ H` from the Haar measure, independently per block.
pub fn haar_sample<T: Real, R: Rng + ?Sized>(spec: &RepSpec, rng: &mut R) -> BlockOrthogonal<T> {
    BlockOrthogonal {
        blocks: spec.blocks().iter().map(|b| haar_orthogonal(b.n_rows, rng)).collect(),
    }
}

/// `h · x`.
pub fn apply_group<T: Real>(h: &BlockOrthogonal<T>, x: &Signal<T>) -> Result<Signal<T>> {
    h.apply(x)
}
