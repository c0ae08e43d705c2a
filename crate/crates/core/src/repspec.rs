//! Block-shape bookkeeping for a representation `V = ⊕ V_ℓ^{R_ℓ}`.
//!
//! A [`RepSpec`] lists, in a fixed order, the pairs `(N_ℓ, R_ℓ)`: the
//! dimension of the ℓ-th irreducible and its multiplicity. Signals, Gram
//! tuples and group elements all index blocks positionally against it.
//!
//! Orbit and effective dimensions are exact combinatorial quantities and are
//! computed with rational arithmetic.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of one irreducible block: `n_rows = N_ℓ` (irrep dimension),
/// `n_cols = R_ℓ` (multiplicity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockShape {
    pub n_rows: usize,
    pub n_cols: usize,
}

impl BlockShape {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols }
    }

    pub fn len(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered list of irreducible block shapes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RepSpecRepr", into = "RepSpecRepr")]
pub struct RepSpec {
    blocks: Vec<BlockShape>,
}

#[derive(Serialize, Deserialize)]
struct RepSpecRepr {
    blocks: Vec<[usize; 2]>,
}

impl TryFrom<RepSpecRepr> for RepSpec {
    type Error = Error;

    fn try_from(repr: RepSpecRepr) -> Result<Self> {
        RepSpec::new(repr.blocks.into_iter().map(|[n, r]| (n, r)).collect())
    }
}

impl From<RepSpec> for RepSpecRepr {
    fn from(spec: RepSpec) -> Self {
        RepSpecRepr {
            blocks: spec.blocks.iter().map(|b| [b.n_rows, b.n_cols]).collect(),
        }
    }
}

/// Dimension of `O(n)`, i.e. `n(n-1)/2`.
pub fn dim_orthogonal_group(n: usize) -> u64 {
    let n = n as u64;
    n * n.saturating_sub(1) / 2
}

impl RepSpec {
    pub fn new(blocks: Vec<(usize, usize)>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidSpec("at least one block is required".into()));
        }
        if let Some((i, _)) = blocks.iter().enumerate().find(|(_, &(n, r))| n == 0 || r == 0) {
            return Err(Error::InvalidSpec(format!("block {i} has a zero dimension")));
        }
        Ok(Self {
            blocks: blocks.into_iter().map(|(n, r)| BlockShape::new(n, r)).collect(),
        })
    }

    /// Parse the JSON form `{"blocks": [[N1,R1], ...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    /// `Z_N` acting on `R^N` by circular shifts, `N` even: two one-dimensional
    /// irreducibles (constant, alternating) followed by `N/2 - 1` planar ones.
    pub fn zn(n: usize) -> Result<Self> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(Error::OddOrder("Z_N decomposition", n));
        }
        let mut blocks = vec![(1, 1), (1, 1)];
        blocks.extend(std::iter::repeat_n((2, 1), n / 2 - 1));
        Self::new(blocks)
    }

    /// `⊕_{ℓ=0}^{L} V_ℓ^R` with `dim V_ℓ = 2ℓ + 1` (SO(3) spherical harmonics).
    pub fn cryoem(l: usize, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidSpec("multiplicity R must be positive".into()));
        }
        Self::new((0..=l).map(|ell| (2 * ell + 1, r)).collect())
    }

    pub fn blocks(&self) -> &[BlockShape] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// `dim V = Σ N_ℓ R_ℓ`.
    pub fn ambient_dim(&self) -> usize {
        self.blocks.iter().map(BlockShape::len).sum()
    }

    /// Offsets of each block inside the flattened coordinate vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.blocks
            .iter()
            .map(|b| {
                let o = acc;
                acc += b.len();
                o
            })
            .collect()
    }

    /// `k_ℓ` for one block as an exact rational.
    pub fn block_orbit_dim(shape: BlockShape) -> Ratio<i64> {
        let n = shape.n_rows as i64;
        let r = shape.n_cols as i64;
        if n >= r {
            Ratio::from_integer(r) * (Ratio::from_integer(n) - Ratio::new(r, 2) - Ratio::new(1, 2))
        } else {
            Ratio::new(n * n - n, 2)
        }
    }

    /// Maximal orbit dimension `k(H)` of `H = ∏ O(N_ℓ)` acting on `V`.
    pub fn max_orbit_dim(&self) -> u64 {
        let total: Ratio<i64> = self.blocks.iter().map(|&b| Self::block_orbit_dim(b)).sum();
        assert!(total.is_integer(), "orbit dimension {total} is not an integer");
        *total.numer() as u64
    }

    /// Effective dimension `K = dim V - k(H)`.
    pub fn effective_dim(&self) -> u64 {
        self.ambient_dim() as u64 - self.max_orbit_dim()
    }
}

impl fmt::Display for RepSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "({},{})", b.n_rows, b.n_cols)?;
        }
        write!(f, "}}")
    }
}

/// Closed-form effective dimension for the cryo-EM representation,
/// `(L+1)(R(L+1) - L(4L+5)/6)`, valid when `R ≥ 2L + 1`.
pub fn cryoem_k(l: usize, r: usize) -> Result<u64> {
    if r < 2 * l + 1 {
        return Err(Error::CryoRegime { l, r });
    }
    let l = l as i64;
    let r = r as i64;
    let k = Ratio::from_integer(l + 1)
        * (Ratio::from_integer(r * (l + 1)) - Ratio::new(l * (4 * l + 5), 6));
    assert!(k.is_integer(), "closed-form K = {k} is not an integer");
    Ok(*k.numer() as u64)
}

/// Which dimension inequality a prior is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    /// `2M < K`: injectivity for generic priors, stability for generic subspaces.
    Injectivity2M,
    /// `4M < K`: stability for sparse (generic basis), ReLU and manifold priors.
    Stability4M,
    /// `4M + 2 < K`: stability for sparsity in a generic orthonormal basis.
    StabilityOrthonormal4MPlus2,
}

impl GateKind {
    pub const ALL: [GateKind; 3] = [
        GateKind::Injectivity2M,
        GateKind::Stability4M,
        GateKind::StabilityOrthonormal4MPlus2,
    ];

    /// Left-hand side of the inequality for prior dimension `m`.
    pub fn lhs(self, m: u64) -> u64 {
        match self {
            GateKind::Injectivity2M => 2 * m,
            GateKind::Stability4M => 4 * m,
            GateKind::StabilityOrthonormal4MPlus2 => 4 * m + 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            GateKind::Injectivity2M => "2M<K",
            GateKind::Stability4M => "4M<K",
            GateKind::StabilityOrthonormal4MPlus2 => "4M+2<K",
        }
    }
}

/// Outcome of a dimension gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionGate {
    pub gate_kind: GateKind,
    pub prior_dim: u64,
    pub k: u64,
    pub passes: bool,
}

impl DimensionGate {
    pub fn evaluate(gate_kind: GateKind, prior_dim: u64, k: u64) -> Self {
        Self {
            gate_kind,
            prior_dim,
            k,
            passes: gate_kind.lhs(prior_dim) < k,
        }
    }
}

/// Evaluate `gate_kind` for a prior of dimension `m` against `K(spec)`.
pub fn dimension_gate(m: u64, spec: &RepSpec, gate_kind: GateKind) -> DimensionGate {
    DimensionGate::evaluate(gate_kind, m, spec.effective_dim())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(blocks: &[(usize, usize)]) -> RepSpec {
        RepSpec::new(blocks.to_vec()).unwrap()
    }

    /// Per-block expansion written independently of `max_orbit_dim`.
    fn k_expanded(s: &RepSpec) -> u64 {
        s.blocks()
            .iter()
            .map(|b| {
                let (n, r) = (b.n_rows as u64, b.n_cols as u64);
                if n < r {
                    n * r - (n * n - n) / 2
                } else {
                    (r * r + r) / 2
                }
            })
            .sum()
    }

    #[test]
    fn ambient_dims() {
        assert_eq!(spec(&[(1, 1)]).ambient_dim(), 1);
        assert_eq!(RepSpec::zn(8).unwrap().ambient_dim(), 8);
        assert_eq!(spec(&[(1, 5), (3, 5), (5, 5)]).ambient_dim(), 45);
    }

    #[test]
    fn orbit_dims() {
        assert_eq!(spec(&[(1, 1)]).max_orbit_dim(), 0);
        assert_eq!(spec(&[(5, 2)]).max_orbit_dim(), 7);
        assert_eq!(
            spec(&[(5, 2)]).max_orbit_dim(),
            dim_orthogonal_group(5) - dim_orthogonal_group(3)
        );
        assert_eq!(spec(&[(2, 3)]).max_orbit_dim(), 1);
    }

    #[test]
    fn effective_dims() {
        assert_eq!(RepSpec::zn(8).unwrap().effective_dim(), 5);
        assert_eq!(spec(&[(7, 1)]).effective_dim(), 1);
        assert_eq!(spec(&[(1, 5), (3, 5), (5, 5)]).effective_dim(), 32);
        assert_eq!(RepSpec::zn(32).unwrap().effective_dim(), 17);
    }

    #[test]
    fn expanded_form_agrees() {
        for blocks in [
            vec![(1, 1)],
            vec![(5, 2), (2, 3)],
            vec![(1, 5), (3, 5), (5, 5)],
            vec![(4, 4), (3, 7), (9, 2)],
        ] {
            let s = RepSpec::new(blocks).unwrap();
            assert_eq!(s.effective_dim(), k_expanded(&s), "{s}");
        }
    }

    #[test]
    fn cryo_closed_form() {
        assert_eq!(cryoem_k(0, 1).unwrap(), 1);
        assert_eq!(cryoem_k(2, 5).unwrap(), 32);
        assert_eq!(cryoem_k(3, 7).unwrap(), 78);
        assert!(matches!(cryoem_k(2, 4), Err(Error::CryoRegime { .. })));
    }

    #[test]
    fn cryo_and_zn_constructors() {
        assert_eq!(RepSpec::cryoem(0, 1).unwrap(), spec(&[(1, 1)]));
        assert_eq!(RepSpec::cryoem(2, 5).unwrap(), spec(&[(1, 5), (3, 5), (5, 5)]));
        assert_eq!(RepSpec::cryoem(1, 3).unwrap(), spec(&[(1, 3), (3, 3)]));
        assert_eq!(RepSpec::zn(2).unwrap(), spec(&[(1, 1), (1, 1)]));
        assert_eq!(
            RepSpec::zn(8).unwrap(),
            spec(&[(1, 1), (1, 1), (2, 1), (2, 1), (2, 1)])
        );
        assert!(RepSpec::zn(7).is_err());
        assert!(RepSpec::zn(0).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(RepSpec::new(vec![]).is_err());
        assert!(RepSpec::new(vec![(0, 1)]).is_err());
        assert!(RepSpec::from_json(r#"{"blocks":[[2,0]]}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = spec(&[(1, 5), (3, 5)]);
        let text = s.to_json();
        assert_eq!(text, r#"{"blocks":[[1,5],[3,5]]}"#);
        assert_eq!(RepSpec::from_json(&text).unwrap(), s);
    }

    #[test]
    fn gates() {
        let z32 = RepSpec::zn(32).unwrap();
        assert!(dimension_gate(5, &z32, GateKind::Injectivity2M).passes);
        assert!(!dimension_gate(5, &z32, GateKind::Stability4M).passes);
        for kind in GateKind::ALL {
            assert!(dimension_gate(0, &z32, kind).passes);
        }
        // K = 2: 4M+2 < K fails even at M = 0.
        let k2 = RepSpec::zn(2).unwrap();
        assert!(!dimension_gate(0, &k2, GateKind::StabilityOrthonormal4MPlus2).passes);
    }
}
