//! Structured signal sets ("priors") and their local affine geometry.
//!
//! Every prior is presented as a parametrized set: a parameter vector `θ`
//! decodes to a flattened signal, the Jacobian of that decoding gives the
//! local linear structure, and `project` maps an arbitrary parameter back
//! into the admissible domain. Recovery and the stability searches only use
//! this interface ([`ParamSet`]).

mod affine;
mod linear;
mod manifold;
mod relu;
mod sparse;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use affine::AffinePrior;
pub use linear::LinearPrior;
pub use manifold::{ManifoldFamily, ManifoldPrior, SmoothMap};
pub use relu::{AffineLayer, ReluPrior};
pub use sparse::SparsePrior;

use crate::error::{Error, Result};
use crate::linalg::{condition_number, hcat, orthonormal_columns};
use crate::real::{seeded_rng, Real};
use crate::repspec::RepSpec;
use crate::signal::Signal;

/// Relative singular-value cutoff used when orthonormalizing chart directions.
pub(crate) const RANK_TOL: f64 = 1e-10;

/// A set of signals described by a parameter vector.
pub trait ParamSet<T: Real>: Send + Sync {
    fn spec(&self) -> &RepSpec;

    fn param_dim(&self) -> usize;

    /// Flattened signal for parameters `theta`.
    fn decode(&self, theta: &DVector<T>) -> DVector<T>;

    /// `∂ decode / ∂ θ`, an `ambient_dim × param_dim` matrix.
    fn jacobian(&self, theta: &DVector<T>) -> DMatrix<T>;

    /// Map `theta` back into the admissible parameter domain.
    fn project(&self, _theta: &mut DVector<T>) {}

    /// Random admissible parameter.
    fn sample_params(&self, rng: &mut dyn RngCore) -> DVector<T>;

    fn decode_signal(&self, theta: &DVector<T>) -> Signal<T> {
        Signal::from_flat(self.spec(), &self.decode(theta)).expect("decode matches spec")
    }
}

/// An affine piece `anchor + span(directions)` with orthonormal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineChart<T: Real> {
    spec: RepSpec,
    anchor: DVector<T>,
    directions: DMatrix<T>,
}

impl<T: Real> AffineChart<T> {
    /// Build a chart, orthonormalizing the given direction columns.
    pub fn new(spec: &RepSpec, anchor: DVector<T>, directions: &DMatrix<T>) -> Result<Self> {
        let d = spec.ambient_dim();
        if anchor.len() != d || directions.nrows() != d {
            return Err(Error::ShapeMismatch(format!(
                "chart of dimension {} / {} in ambient {d}",
                anchor.len(),
                directions.nrows()
            )));
        }
        Ok(Self {
            spec: spec.clone(),
            anchor,
            directions: orthonormal_columns(directions, RANK_TOL),
        })
    }

    pub fn from_signals(anchor: &Signal<T>, directions: &[Signal<T>]) -> Result<Self> {
        let d = anchor.spec().ambient_dim();
        let mut m = DMatrix::zeros(d, directions.len());
        for (j, s) in directions.iter().enumerate() {
            if s.spec() != anchor.spec() {
                return Err(Error::ShapeMismatch("chart direction spec".into()));
            }
            m.set_column(j, &s.to_flat());
        }
        Self::new(anchor.spec(), anchor.to_flat(), &m)
    }

    pub fn anchor(&self) -> Signal<T> {
        Signal::from_flat(&self.spec, &self.anchor).expect("anchor matches spec")
    }

    pub fn anchor_flat(&self) -> &DVector<T> {
        &self.anchor
    }

    /// Orthonormal direction signals.
    pub fn directions(&self) -> Vec<Signal<T>> {
        self.directions
            .column_iter()
            .map(|c| Signal::from_slice(&self.spec, c.as_slice()).expect("direction matches spec"))
            .collect()
    }

    pub fn direction_matrix(&self) -> &DMatrix<T> {
        &self.directions
    }

    pub fn dim(&self) -> usize {
        self.directions.ncols()
    }

    /// `A + V` for another chart's direction space `V`.
    pub fn extended_by(&self, other: &AffineChart<T>) -> AffineChart<T> {
        AffineChart {
            spec: self.spec.clone(),
            anchor: self.anchor.clone(),
            directions: orthonormal_columns(&hcat(&self.directions, &other.directions), RANK_TOL),
        }
    }

    /// Whether the chart passes through the origin.
    pub fn is_linear(&self) -> bool {
        let resid = &self.anchor - &self.directions * (self.directions.transpose() * &self.anchor);
        resid.norm() <= T::lit(1e-12) * (T::one() + self.anchor.norm())
    }
}

impl<T: Real> ParamSet<T> for AffineChart<T> {
    fn spec(&self) -> &RepSpec {
        &self.spec
    }

    fn param_dim(&self) -> usize {
        self.directions.ncols()
    }

    fn decode(&self, theta: &DVector<T>) -> DVector<T> {
        &self.anchor + &self.directions * theta
    }

    fn jacobian(&self, _theta: &DVector<T>) -> DMatrix<T> {
        self.directions.clone()
    }

    fn sample_params(&self, rng: &mut dyn RngCore) -> DVector<T> {
        let scale = T::one().max(self.anchor.norm());
        gaussian_vector::<T>(self.param_dim(), rng) * scale
    }
}

pub(crate) fn gaussian_vector<T: Real>(n: usize, rng: &mut dyn RngCore) -> DVector<T> {
    DVector::from_fn(n, |_, _| crate::real::gaussian(rng))
}

/// The four prior families, plus bounded affine pieces used by the
/// counterexample geometries.
#[derive(Debug, Clone)]
pub enum Prior<T: Real> {
    Linear(LinearPrior<T>),
    Sparse(SparsePrior<T>),
    Relu(ReluPrior<T>),
    Manifold(ManifoldPrior<T>),
    Affine(AffinePrior<T>),
}

macro_rules! dispatch {
    ($self:expr, $p:ident => $body:expr) => {
        match $self {
            Prior::Linear($p) => $body,
            Prior::Sparse($p) => $body,
            Prior::Relu($p) => $body,
            Prior::Manifold($p) => $body,
            Prior::Affine($p) => $body,
        }
    };
}

impl<T: Real> ParamSet<T> for Prior<T> {
    fn spec(&self) -> &RepSpec {
        dispatch!(self, p => p.spec())
    }
    fn param_dim(&self) -> usize {
        dispatch!(self, p => p.param_dim())
    }
    fn decode(&self, theta: &DVector<T>) -> DVector<T> {
        dispatch!(self, p => p.decode(theta))
    }
    fn jacobian(&self, theta: &DVector<T>) -> DMatrix<T> {
        dispatch!(self, p => p.jacobian(theta))
    }
    fn project(&self, theta: &mut DVector<T>) {
        dispatch!(self, p => p.project(theta))
    }
    fn sample_params(&self, rng: &mut dyn RngCore) -> DVector<T> {
        dispatch!(self, p => p.sample_params(rng))
    }
}

impl<T: Real> Prior<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Prior::Linear(_) => "linear",
            Prior::Sparse(_) => "sparse",
            Prior::Relu(_) => "relu",
            Prior::Manifold(_) => "manifold",
            Prior::Affine(_) => "affine",
        }
    }

    /// Dimension `M` of the prior as a set.
    pub fn intrinsic_dim(&self) -> usize {
        match self {
            Prior::Linear(p) => p.dim(),
            Prior::Sparse(p) => p.sparsity(),
            Prior::Relu(p) => p.latent_dim(),
            Prior::Manifold(p) => p.intrinsic_dim(),
            Prior::Affine(p) => p.dim(),
        }
    }

    /// Whether the zero signal belongs to the prior.
    pub fn contains_zero(&self) -> bool {
        matches!(self, Prior::Linear(_) | Prior::Sparse(_))
    }

    /// Closed under every real scaling.
    pub fn is_homogeneous(&self) -> bool {
        match self {
            Prior::Linear(_) | Prior::Sparse(_) => true,
            Prior::Manifold(p) => p.homogeneous_flag(),
            Prior::Relu(_) | Prior::Affine(_) => false,
        }
    }
}

/// `n` independent samples from the prior.
pub fn sample_prior<T: Real, R: RngCore>(prior: &Prior<T>, n: usize, rng: &mut R) -> Vec<Signal<T>> {
    (0..n)
        .map(|_| {
            let theta = prior.sample_params(rng);
            prior.decode_signal(&theta)
        })
        .collect()
}

/// Local affine piece of the prior at parameter `theta`.
///
/// Linear and sparse priors return their (support) subspace through the
/// origin, ReLU priors the linear region of `theta`'s activation pattern,
/// manifolds the affine tangent space, and affine priors the full piece.
pub fn local_affine_chart<T: Real>(prior: &Prior<T>, theta: &DVector<T>) -> Result<AffineChart<T>> {
    match prior {
        Prior::Linear(p) => Ok(p.chart()),
        Prior::Sparse(p) => Ok(p.support_chart(&p.support_of(theta))),
        Prior::Relu(p) => p.chart_at(theta),
        Prior::Manifold(p) => p.chart_at(theta),
        Prior::Affine(p) => p.chart_at(theta),
    }
}

/// Affine pieces covering the hull set `∪_{i,j} (A_i + V_j)`.
///
/// `budget` caps the number of supports/patterns/points sampled and the number
/// of charts returned.
pub fn hull_pieces<T: Real, R: RngCore>(prior: &Prior<T>, budget: usize, rng: &mut R) -> Vec<AffineChart<T>> {
    match prior {
        Prior::Linear(p) => vec![p.chart()],
        Prior::Affine(p) => vec![p.hull_chart()],
        Prior::Sparse(p) => p.hull_pieces(budget, rng),
        Prior::Relu(p) => {
            let pieces = p.sampled_pieces(budget, rng);
            pair_extensions(&pieces, budget)
        }
        Prior::Manifold(p) => (0..budget.max(1))
            .filter_map(|_| {
                let theta = p.sample_params(rng);
                p.chart_at(&theta).ok()
            })
            .collect(),
    }
}

/// `A_i + V_j` over ordered pairs of pieces, truncated to `budget`.
fn pair_extensions<T: Real>(pieces: &[AffineChart<T>], budget: usize) -> Vec<AffineChart<T>> {
    let mut out = Vec::new();
    'outer: for a in pieces {
        for b in pieces {
            if out.len() >= budget.max(1) {
                break 'outer;
            }
            out.push(a.extended_by(b));
        }
    }
    out
}

/// Compose an invertible linear map `A` after the prior.
pub fn embed_generic<T: Real>(prior: &Prior<T>, a: &DMatrix<T>) -> Result<Prior<T>> {
    let d = prior.spec().ambient_dim();
    if a.shape() != (d, d) {
        return Err(Error::ShapeMismatch(format!("map is {:?}, ambient dimension {d}", a.shape())));
    }
    if !condition_number(a).is_finite() || condition_number(a) > 1e12 {
        return Err(Error::SingularMap);
    }
    Ok(match prior {
        Prior::Linear(p) => Prior::Linear(p.transformed(a)),
        Prior::Sparse(p) => Prior::Sparse(p.transformed(a)),
        Prior::Relu(p) => Prior::Relu(p.transformed(a)),
        Prior::Manifold(p) => Prior::Manifold(p.transformed(a)),
        Prior::Affine(p) => Prior::Affine(p.transformed(a)),
    })
}

/// Serializable recipe for a prior: kind, parameters and the RNG seed that
/// fixes its generic draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorDescription {
    Linear {
        spec: RepSpec,
        m: usize,
        seed: u64,
    },
    Sparse {
        spec: RepSpec,
        m: usize,
        #[serde(default)]
        orthonormal: bool,
        #[serde(default)]
        standard_basis: bool,
        seed: u64,
    },
    Relu {
        spec: RepSpec,
        layer_dims: Vec<usize>,
        seed: u64,
    },
    Sphere {
        spec: RepSpec,
        dim: usize,
        #[serde(default = "one")]
        radius: f64,
        #[serde(default)]
        generic_embed: bool,
        seed: u64,
    },
    Torus {
        spec: RepSpec,
        major: f64,
        minor: f64,
        #[serde(default)]
        generic_embed: bool,
        seed: u64,
    },
    Affine {
        spec: RepSpec,
        anchor: Vec<f64>,
        directions: Vec<Vec<f64>>,
        #[serde(default)]
        bounds: Option<Vec<[f64; 2]>>,
    },
}

fn one() -> f64 {
    1.0
}

impl PriorDescription {
    pub fn spec(&self) -> &RepSpec {
        match self {
            PriorDescription::Linear { spec, .. }
            | PriorDescription::Sparse { spec, .. }
            | PriorDescription::Relu { spec, .. }
            | PriorDescription::Sphere { spec, .. }
            | PriorDescription::Torus { spec, .. }
            | PriorDescription::Affine { spec, .. } => spec,
        }
    }

    /// Reconstruct the prior; identical descriptions give identical priors.
    pub fn build<T: Real>(&self) -> Result<Prior<T>> {
        match self {
            PriorDescription::Linear { spec, m, seed } => {
                Ok(Prior::Linear(LinearPrior::generic(spec, *m, &mut seeded_rng(*seed))?))
            }
            PriorDescription::Sparse {
                spec,
                m,
                orthonormal,
                standard_basis,
                seed,
            } => {
                let p = if *standard_basis {
                    SparsePrior::standard_basis(spec, *m)?
                } else {
                    SparsePrior::generic(spec, *m, *orthonormal, &mut seeded_rng(*seed))?
                };
                Ok(Prior::Sparse(p))
            }
            PriorDescription::Relu { spec, layer_dims, seed } => {
                Ok(Prior::Relu(ReluPrior::generic(spec, layer_dims, &mut seeded_rng(*seed))?))
            }
            PriorDescription::Sphere {
                spec,
                dim,
                radius,
                generic_embed,
                seed,
            } => {
                let p = ManifoldPrior::sphere(spec, *dim, T::lit(*radius))?;
                embed_if(p, *generic_embed, *seed)
            }
            PriorDescription::Torus {
                spec,
                major,
                minor,
                generic_embed,
                seed,
            } => {
                let p = ManifoldPrior::torus(spec, T::lit(*major), T::lit(*minor))?;
                embed_if(p, *generic_embed, *seed)
            }
            PriorDescription::Affine {
                spec,
                anchor,
                directions,
                bounds,
            } => {
                let anchor = Signal::from_slice(spec, &anchor.iter().map(|&v| T::lit(v)).collect::<Vec<_>>())?;
                let dirs = directions
                    .iter()
                    .map(|v| Signal::from_slice(spec, &v.iter().map(|&x| T::lit(x)).collect::<Vec<_>>()))
                    .collect::<Result<Vec<_>>>()?;
                let bounds = bounds
                    .as_ref()
                    .map(|b| b.iter().map(|[lo, hi]| (T::lit(*lo), T::lit(*hi))).collect());
                Ok(Prior::Affine(AffinePrior::new(&anchor, &dirs, bounds)?))
            }
        }
    }
}

fn embed_if<T: Real>(p: ManifoldPrior<T>, generic: bool, seed: u64) -> Result<Prior<T>> {
    let prior = Prior::Manifold(p);
    if !generic {
        return Ok(prior);
    }
    let d = prior.spec().ambient_dim();
    let a = crate::real::gaussian_matrix(d, d, &mut seeded_rng(seed));
    embed_generic(&prior, &a)
}

/// Whether `theta` sits on the boundary of a ReLU linear region.
pub fn is_activation_boundary<T: Real>(prior: &Prior<T>, theta: &DVector<T>) -> bool {
    matches!(local_affine_chart(prior, theta), Err(Error::ActivationBoundary { .. }))
}

#[cfg(test)]
mod tests;
