use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngCore};

use super::{AffineChart, ParamSet, RANK_TOL};
use crate::error::{Error, Result};
use crate::linalg::{binomial, combinations, orthonormal_columns, select_columns};
use crate::real::{gaussian, gaussian_matrix, Real};
use crate::repspec::RepSpec;
use crate::signal::haar_orthogonal;

/// Signals with at most `M` nonzero coefficients in a fixed dictionary.
///
/// Parameters are the full coefficient vector; `project` keeps the `M`
/// largest entries in magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePrior<T: Real> {
    spec: RepSpec,
    dictionary: DMatrix<T>,
    sparsity: usize,
    orthonormal: bool,
}

fn check_sparsity(spec: &RepSpec, m: usize) -> Result<()> {
    let d = spec.ambient_dim();
    if m == 0 || m > d {
        return Err(Error::OutOfRange(format!("sparsity {m} not in 1..={d}")));
    }
    Ok(())
}

impl<T: Real> SparsePrior<T> {
    /// Gaussian dictionary, Haar-orthogonal when `orthonormal` is set.
    pub fn generic<R: Rng + ?Sized>(spec: &RepSpec, m: usize, orthonormal: bool, rng: &mut R) -> Result<Self> {
        check_sparsity(spec, m)?;
        let d = spec.ambient_dim();
        let dictionary = if orthonormal {
            haar_orthogonal(d, rng)
        } else {
            gaussian_matrix(d, d, rng)
        };
        Self::with_dictionary(spec, m, dictionary)
    }

    /// Identity dictionary. Not generic.
    pub fn standard_basis(spec: &RepSpec, m: usize) -> Result<Self> {
        check_sparsity(spec, m)?;
        let d = spec.ambient_dim();
        Self::with_dictionary(spec, m, DMatrix::identity(d, d))
    }

    pub fn with_dictionary(spec: &RepSpec, m: usize, dictionary: DMatrix<T>) -> Result<Self> {
        check_sparsity(spec, m)?;
        let d = spec.ambient_dim();
        if dictionary.shape() != (d, d) {
            return Err(Error::ShapeMismatch(format!("dictionary {:?} for ambient {d}", dictionary.shape())));
        }
        if dictionary.rank(T::lit(RANK_TOL) * dictionary.norm()) < d {
            return Err(Error::SingularMap);
        }
        let gram = dictionary.transpose() * &dictionary;
        let orthonormal = (gram - DMatrix::identity(d, d)).amax() <= T::lit(1e-10);
        Ok(Self {
            spec: spec.clone(),
            dictionary,
            sparsity: m,
            orthonormal,
        })
    }

    pub fn spec(&self) -> &RepSpec {
        &self.spec
    }

    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    pub fn dictionary(&self) -> &DMatrix<T> {
        &self.dictionary
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// Dictionary coefficients of a flattened signal.
    pub fn coefficients(&self, x: &DVector<T>) -> DVector<T> {
        self.dictionary.clone().lu().solve(x).expect("dictionary is invertible")
    }

    /// Indices of the `M` largest coefficients, sorted.
    pub fn support_of(&self, theta: &DVector<T>) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..theta.len()).collect();
        idx.sort_by(|&a, &b| theta[b].abs().partial_cmp(&theta[a].abs()).unwrap_or(std::cmp::Ordering::Equal));
        idx.truncate(self.sparsity);
        idx.sort_unstable();
        idx
    }

    /// Subspace spanned by the dictionary atoms in `support`.
    pub fn support_chart(&self, support: &[usize]) -> AffineChart<T> {
        let d = self.spec.ambient_dim();
        AffineChart {
            spec: self.spec.clone(),
            anchor: DVector::zeros(d),
            directions: orthonormal_columns(&select_columns(&self.dictionary, support), RANK_TOL),
        }
    }

    /// Charts spanned by unions of two supports, over unordered pairs
    /// (including a support with itself).
    ///
    /// All pairs are enumerated when they fit in `budget`; otherwise `budget`
    /// random pairs are drawn.
    pub fn hull_pieces<R: RngCore + ?Sized>(&self, budget: usize, rng: &mut R) -> Vec<AffineChart<T>> {
        let d = self.spec.ambient_dim();
        let m = self.sparsity;
        let n_supports = binomial(d, m);
        let n_pairs = n_supports.saturating_mul(n_supports.saturating_add(1)) / 2;
        let union_chart = |a: &[usize], b: &[usize]| {
            let mut u: Vec<usize> = a.iter().chain(b).copied().collect();
            u.sort_unstable();
            u.dedup();
            self.support_chart(&u)
        };
        if n_pairs <= budget as u128 {
            let supports = combinations(d, m);
            let mut out = Vec::with_capacity(n_pairs as usize);
            for i in 0..supports.len() {
                for j in i..supports.len() {
                    out.push(union_chart(&supports[i], &supports[j]));
                }
            }
            out
        } else {
            (0..budget)
                .map(|_| {
                    let a = sample_indices(rng, d, m).into_vec();
                    let b = sample_indices(rng, d, m).into_vec();
                    union_chart(&a, &b)
                })
                .collect()
        }
    }

    pub(crate) fn transformed(&self, a: &DMatrix<T>) -> Self {
        Self::with_dictionary(&self.spec, self.sparsity, a * &self.dictionary).expect("invertible map preserves rank")
    }
}

impl<T: Real> ParamSet<T> for SparsePrior<T> {
    fn spec(&self) -> &RepSpec {
        &self.spec
    }

    fn param_dim(&self) -> usize {
        self.dictionary.ncols()
    }

    fn decode(&self, theta: &DVector<T>) -> DVector<T> {
        &self.dictionary * theta
    }

    fn jacobian(&self, _theta: &DVector<T>) -> DMatrix<T> {
        self.dictionary.clone()
    }

    fn project(&self, theta: &mut DVector<T>) {
        let keep = self.support_of(theta);
        for i in 0..theta.len() {
            if keep.binary_search(&i).is_err() {
                theta[i] = T::zero();
            }
        }
    }

    fn sample_params(&self, rng: &mut dyn RngCore) -> DVector<T> {
        let d = self.dictionary.ncols();
        let mut theta = DVector::zeros(d);
        for i in sample_indices(rng, d, self.sparsity).into_iter() {
            theta[i] = gaussian(rng);
        }
        theta
    }
}
