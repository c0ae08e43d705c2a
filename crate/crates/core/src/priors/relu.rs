use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use super::{AffineChart, ParamSet, RANK_TOL};
use crate::error::{Error, Result};
use crate::linalg::orthonormal_columns;
use crate::real::{gaussian_matrix, Real};
use crate::repspec::RepSpec;

/// Pre-activations closer to zero than this put a latent on a region boundary.
pub const BOUNDARY_TOL: f64 = 1e-10;

/// `h ↦ W h + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer<T: Real> {
    pub weight: DMatrix<T>,
    pub bias: DVector<T>,
}

impl<T: Real> AffineLayer<T> {
    pub fn new(weight: DMatrix<T>, bias: DVector<T>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::ShapeMismatch(format!(
                "layer weight {:?} with bias of length {}",
                weight.shape(),
                bias.len()
            )));
        }
        Ok(Self { weight, bias })
    }

    fn apply(&self, h: &DVector<T>) -> DVector<T> {
        &self.weight * h + &self.bias
    }
}

/// Image of the latent cube `[0,1]^M` under `A_L ∘ η ∘ … ∘ η ∘ A_1`, where
/// `η` is the entrywise ReLU and the final layer is square on `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluPrior<T: Real> {
    spec: RepSpec,
    layers: Vec<AffineLayer<T>>,
}

impl<T: Real> ReluPrior<T> {
    /// Gaussian weights and offsets. `layer_dims = [M, h_1, …, D, D]`.
    pub fn generic<R: Rng + ?Sized>(spec: &RepSpec, layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::ShapeMismatch(format!("layer dims {layer_dims:?}")));
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| AffineLayer {
                weight: gaussian_matrix(w[1], w[0], rng),
                bias: gaussian_matrix(w[1], 1, rng).column(0).into_owned(),
            })
            .collect();
        Self::from_layers(spec, layers)
    }

    pub fn from_layers(spec: &RepSpec, layers: Vec<AffineLayer<T>>) -> Result<Self> {
        let d = spec.ambient_dim();
        let last = layers
            .last()
            .ok_or_else(|| Error::ShapeMismatch("network has no layers".into()))?;
        if last.weight.shape() != (d, d) {
            return Err(Error::ShapeMismatch(format!(
                "final layer {:?} must be {d}x{d}",
                last.weight.shape()
            )));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[1].weight.ncols() != w[0].weight.nrows() {
                return Err(Error::ShapeMismatch(format!("layers {i} and {} do not compose", i + 1)));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.nrows() != l.bias.len() {
                return Err(Error::ShapeMismatch(format!("layer {i} bias length")));
            }
        }
        if last.weight.rank(T::lit(RANK_TOL) * last.weight.norm()) < d {
            return Err(Error::SingularMap);
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn spec(&self) -> &RepSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[AffineLayer<T>] {
        &self.layers
    }

    pub fn latent_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    /// Output and the pre-activations of every hidden layer.
    fn forward(&self, z: &DVector<T>) -> (DVector<T>, Vec<DVector<T>>) {
        let mut h = z.clone();
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let (last, hidden) = self.layers.split_last().expect("at least one layer");
        for layer in hidden {
            let a = layer.apply(&h);
            h = a.map(|v| v.max(T::zero()));
            pre.push(a);
        }
        (last.apply(&h), pre)
    }

    /// Activation pattern of `z`, one flag per hidden unit.
    pub fn pattern(&self, z: &DVector<T>) -> Vec<bool> {
        let (_, pre) = self.forward(z);
        pre.iter().flat_map(|a| a.iter().map(|&v| v > T::zero()).collect::<Vec<_>>()).collect()
    }

    /// Linear part of the network on the region containing `z`.
    fn masked_product(&self, pre: &[DVector<T>]) -> DMatrix<T> {
        let mut j = self.layers[0].weight.clone();
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            let mut masked = j;
            for (r, &v) in pre[i - 1].iter().enumerate() {
                if v <= T::zero() {
                    masked.row_mut(r).fill(T::zero());
                }
            }
            j = &layer.weight * masked;
        }
        j
    }

    /// Affine region through `z`; refused when `z` is on a region boundary.
    pub fn chart_at(&self, z: &DVector<T>) -> Result<AffineChart<T>> {
        let (out, pre) = self.forward(z);
        for (layer, a) in pre.iter().enumerate() {
            if let Some(unit) = a.iter().position(|v| v.abs() < T::lit(BOUNDARY_TOL)) {
                return Err(Error::ActivationBoundary { layer, unit });
            }
        }
        Ok(AffineChart {
            spec: self.spec.clone(),
            anchor: out,
            directions: orthonormal_columns(&self.masked_product(&pre), RANK_TOL),
        })
    }

    /// Charts of the distinct activation regions hit by `budget` uniform
    /// latent samples.
    pub fn sampled_pieces<R: RngCore + ?Sized>(&self, budget: usize, rng: &mut R) -> Vec<AffineChart<T>> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for _ in 0..budget.max(1) {
            let z = self.sample_params(&mut RngRef(rng));
            let pat = self.pattern(&z);
            if seen.contains(&pat) {
                continue;
            }
            if let Ok(chart) = self.chart_at(&z) {
                seen.insert(pat);
                out.push(chart);
            }
        }
        out
    }

    pub(crate) fn transformed(&self, a: &DMatrix<T>) -> Self {
        let mut layers = self.layers.clone();
        let last = layers.last_mut().expect("at least one layer");
        last.weight = a * &last.weight;
        last.bias = a * &last.bias;
        Self {
            spec: self.spec.clone(),
            layers,
        }
    }
}

/// Lets an unsized generator be passed where `&mut dyn RngCore` is expected.
struct RngRef<'a, R: RngCore + ?Sized>(&'a mut R);

impl<R: RngCore + ?Sized> RngCore for RngRef<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

impl<T: Real> ParamSet<T> for ReluPrior<T> {
    fn spec(&self) -> &RepSpec {
        &self.spec
    }

    fn param_dim(&self) -> usize {
        self.latent_dim()
    }

    fn decode(&self, theta: &DVector<T>) -> DVector<T> {
        self.forward(theta).0
    }

    fn jacobian(&self, theta: &DVector<T>) -> DMatrix<T> {
        let (_, pre) = self.forward(theta);
        self.masked_product(&pre)
    }

    fn project(&self, theta: &mut DVector<T>) {
        theta.apply(|v| *v = v.clamp(T::zero(), T::one()));
    }

    fn sample_params(&self, rng: &mut dyn RngCore) -> DVector<T> {
        DVector::from_fn(self.latent_dim(), |_, _| T::lit(rng.random::<f64>()))
    }
}
