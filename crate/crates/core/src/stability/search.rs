use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::linalg::{blocks_of, gram_len, sym_product};
use crate::metrics::d_sigma;
use crate::moments::procrustes_align;
use crate::priors::{hull_pieces, AffineChart, LinearPrior, ParamSet, Prior};
use crate::real::{task_rng, Real};
use crate::repspec::RepSpec;
use crate::signal::{BlockOrthogonal, Signal};

/// Thresholds for declaring a violation, all relative to
/// `scale = max(‖x‖, ‖y‖)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchConfig {
    /// Largest `d_H / scale` accepted as "same orbit".
    pub dh_tol: f64,
    /// Smallest `d_σ / scale` accepted as "not ±x".
    pub dsigma_floor: f64,
    /// Normalized skew defect below which a linear-search candidate is
    /// polished and verified.
    pub objective_tol: f64,
    /// Cap on hull pieces.
    pub max_pieces: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            dh_tol: 1e-7,
            dsigma_floor: 1e-3,
            objective_tol: 1e-14,
            max_pieces: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VerdictKind {
    ViolationFound,
    NoViolationFound,
}

/// Two prior elements in one orbit with `h·y ≈ x`.
#[derive(Debug, Clone, Serialize)]
pub struct Witness<T: Real> {
    pub x: Signal<T>,
    pub y: Signal<T>,
    pub h: BlockOrthogonal<T>,
    pub d_h: T,
    pub d_sigma: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchStats {
    pub budget_used: usize,
    /// Smallest normalized objective reached, `‖G_x − G_y‖² / (‖x+y‖²‖x−y‖²)`.
    pub best_objective: f64,
    pub starts: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransversalityVerdict<T: Real> {
    pub kind: VerdictKind,
    pub witness: Option<Witness<T>>,
    pub stats: SearchStats,
}

impl<T: Real> TransversalityVerdict<T> {
    pub fn is_violation(&self) -> bool {
        self.kind == VerdictKind::ViolationFound
    }
}

/// Accept `(x, y)` as a witness when the thresholds hold.
fn verify<T: Real>(x: &Signal<T>, y: &Signal<T>, cfg: &SearchConfig) -> Option<Witness<T>> {
    let scale = x.norm().max(y.norm());
    if scale == T::zero() {
        return None;
    }
    let ds = d_sigma(x, y).ok()?;
    let (h, dh) = procrustes_align(x, y).ok()?;
    (dh <= T::lit(cfg.dh_tol) * scale && ds >= T::lit(cfg.dsigma_floor) * scale).then(|| Witness {
        x: x.clone(),
        y: y.clone(),
        h,
        d_h: dh,
        d_sigma: ds,
    })
}

/// `x ∈ px`, `y ∈ py`, minimizing the normalized Gram mismatch
/// `r = vec(G_x − G_y) / (‖x+y‖‖x−y‖)` subject to a `d_σ` floor.
struct PairProblem<'a, T: Real> {
    px: &'a dyn ParamSet<T>,
    py: &'a dyn ParamSet<T>,
    spec: RepSpec,
    floor: T,
}

struct PairState<T: Real> {
    theta: DVector<T>,
    x: DVector<T>,
    y: DVector<T>,
    r: DVector<T>,
    phi: T,
}

impl<'a, T: Real> PairProblem<'a, T> {
    fn new(px: &'a dyn ParamSet<T>, py: &'a dyn ParamSet<T>, cfg: &SearchConfig) -> Self {
        Self {
            px,
            py,
            spec: px.spec().clone(),
            floor: T::lit(cfg.dsigma_floor),
        }
    }

    fn nx(&self) -> usize {
        self.px.param_dim()
    }

    fn split(&self, theta: &DVector<T>) -> (DVector<T>, DVector<T>) {
        let n = self.nx();
        (theta.rows(0, n).into_owned(), theta.rows(n, theta.len() - n).into_owned())
    }

    fn join(a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
        DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
    }

    fn project(&self, theta: &DVector<T>) -> DVector<T> {
        let (mut a, mut b) = self.split(theta);
        self.px.project(&mut a);
        self.py.project(&mut b);
        Self::join(&a, &b)
    }

    fn state(&self, theta: DVector<T>) -> Option<PairState<T>> {
        let (a, b) = self.split(&theta);
        let x = self.px.decode(&a);
        let y = self.py.decode(&b);
        let s = (&x + &y).norm();
        let d = (&x - &y).norm();
        let scale = x.norm().max(y.norm());
        if !scale.is_finite() || scale == T::zero() || s.min(d) < self.floor * scale {
            return None;
        }
        let mut g = Vec::with_capacity(gram_len(&self.spec));
        for (xb, yb) in blocks_of(&self.spec, &x).zip(blocks_of(&self.spec, &y)) {
            g.extend((xb.tr_mul(&xb) - yb.tr_mul(&yb)).iter().copied());
        }
        let r = DVector::from_vec(g) / (s * d);
        let phi = r.norm_squared();
        Some(PairState { theta, x, y, r, phi })
    }

    fn jacobian(&self, st: &PairState<T>) -> DMatrix<T> {
        let (a, b) = self.split(&st.theta);
        let jx = self.px.jacobian(&a);
        let jy = self.py.jacobian(&b);
        let sum = &st.x + &st.y;
        let diff = &st.x - &st.y;
        let s = sum.norm();
        let d = diff.norm();
        let n = s * d;
        let cols = jx.ncols() + jy.ncols();
        let mut j = DMatrix::zeros(st.r.len(), cols);
        for k in 0..cols {
            let (dg, dn) = if k < jx.ncols() {
                let dx = jx.column(k).into_owned();
                let dn = sum.dot(&dx) / s * d + diff.dot(&dx) / d * s;
                (sym_product(&self.spec, &st.x, &dx), dn)
            } else {
                let dy = jy.column(k - jx.ncols()).into_owned();
                let dn = sum.dot(&dy) / s * d - diff.dot(&dy) / d * s;
                (-sym_product(&self.spec, &st.y, &dy), dn)
            };
            j.set_column(k, &((dg - &st.r * dn) / n));
        }
        j
    }

    /// Levenberg–Marquardt on `r`; returns the final state and iterations used.
    fn descend(&self, mut st: PairState<T>, iters: usize) -> (PairState<T>, usize) {
        let mut lambda = T::lit(1e-3);
        let tiny = T::lit(1e-30);
        let mut used = 0;
        while used < iters && st.phi > tiny {
            used += 1;
            let j = self.jacobian(&st);
            let g = j.tr_mul(&st.r);
            let a = j.tr_mul(&j);
            let shift = a.diagonal().map(|v| v + T::lit(1e-12) * (T::one() + a.trace()));
            let mut m = a.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += lambda * shift[i];
            }
            let Some(step) = m.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= T::lit(10.0);
                continue;
            };
            let trial = self.project(&(&st.theta + step));
            match self.state(trial) {
                Some(next) if next.phi < st.phi => {
                    st = next;
                    lambda = (lambda / T::lit(3.0)).max(T::lit(1e-12));
                }
                _ => {
                    lambda *= T::lit(4.0);
                    if lambda > T::lit(1e14) {
                        break;
                    }
                }
            }
        }
        (st, used)
    }

    fn signals(&self, st: &PairState<T>) -> (Signal<T>, Signal<T>) {
        (
            Signal::from_flat(&self.spec, &st.x).expect("decode matches spec"),
            Signal::from_flat(&self.spec, &st.y).expect("decode matches spec"),
        )
    }

    fn random_state(&self, rng: &mut dyn RngCore) -> Option<PairState<T>> {
        (0..20).find_map(|_| {
            let a = self.px.sample_params(rng);
            let b = self.py.sample_params(rng);
            self.state(Self::join(&a, &b))
        })
    }
}

/// LM iterations given to each start.
const ITERS_PER_START: usize = 40;

/// Paired sampling, then descent from the best samples.
fn search_pair<T: Real>(
    px: &dyn ParamSet<T>,
    py: &dyn ParamSet<T>,
    budget: usize,
    seed: u64,
    cfg: &SearchConfig,
) -> (Option<Witness<T>>, SearchStats) {
    let problem = PairProblem::new(px, py, cfg);
    let budget = budget.max(2);
    let starts = (budget / (2 * ITERS_PER_START)).max(1);
    let n_samples = budget.saturating_sub(starts * ITERS_PER_START).max(starts);
    let iters = ((budget - n_samples.min(budget)) / starts).max(1);

    let mut samples: Vec<(usize, PairState<T>)> = (0..n_samples)
        .into_par_iter()
        .filter_map(|i| {
            let mut r = task_rng(seed, i as u64);
            problem.random_state(&mut r).map(|s| (i, s))
        })
        .collect();
    samples.sort_by(|a, b| a.1.phi.partial_cmp(&b.1.phi).unwrap().then(a.0.cmp(&b.0)));
    samples.truncate(starts);
    let n_starts = samples.len();

    let results: Vec<(Option<Witness<T>>, T, usize)> = samples
        .into_par_iter()
        .map(|(_, st)| {
            let (st, used) = problem.descend(st, iters);
            let (x, y) = problem.signals(&st);
            (verify(&x, &y, cfg), st.phi, used)
        })
        .collect();

    let mut best = f64::INFINITY;
    let mut used = n_samples;
    let mut witness = None;
    for (w, phi, u) in results {
        best = best.min(phi.as_f64());
        used += u;
        if witness.is_none() {
            witness = w;
        }
    }
    (
        witness,
        SearchStats {
            budget_used: used,
            best_objective: best,
            starts: n_starts,
        },
    )
}

fn verdict<T: Real>(witness: Option<Witness<T>>, stats: SearchStats) -> TransversalityVerdict<T> {
    TransversalityVerdict {
        kind: if witness.is_some() {
            VerdictKind::ViolationFound
        } else {
            VerdictKind::NoViolationFound
        },
        witness,
        stats,
    }
}

/// Search for a pair in a subspace with `XᵀY` skew in every block.
pub fn transversality_search_linear<T: Real, R: RngCore>(
    prior: &LinearPrior<T>,
    budget: usize,
    rng: &mut R,
) -> TransversalityVerdict<T> {
    transversality_search_linear_with(prior, budget, &SearchConfig::default(), rng)
}

/// Iterations per start of the linear search, and how many of them are
/// alternating eigenvector steps before the Levenberg–Marquardt polish.
const LINEAR_ITERS: usize = 50;
const ALTERNATING_ITERS: usize = 10;

/// Minimizes `f(a, b) = ‖AᵀB + BᵀA‖² / (‖a‖²‖b‖²)` over the subspace. For a
/// fixed `a` the minimum over `b` is the bottom eigenvector of a quadratic
/// form, so the search alternates between the two arguments from several
/// random starts. Each start is then mapped to `(a + b, a − b)` and polished
/// on the equivalent Gram mismatch; pairs reaching `objective_tol` are
/// verified by `d_H`.
pub fn transversality_search_linear_with<T: Real, R: RngCore>(
    prior: &LinearPrior<T>,
    budget: usize,
    cfg: &SearchConfig,
    rng: &mut R,
) -> TransversalityVerdict<T> {
    let seed = rng.next_u64();
    let spec = prior.spec().clone();
    let q = prior.basis();
    let m = prior.dim();
    let budget = budget.max(1);
    let starts = budget.div_ceil(LINEAR_ITERS).max(1);

    // Column j of the operator `b ↦ sym(Aᵀ B)` for `b = Q e_j`.
    let operator = |a: &DVector<T>| -> DMatrix<T> {
        let x = q * a;
        let mut op = DMatrix::zeros(gram_len(&spec), m);
        for j in 0..m {
            op.set_column(j, &sym_product(&spec, &x, &q.column(j).into_owned()));
        }
        op
    };
    let bottom = |op: &DMatrix<T>| -> (DVector<T>, T) {
        let eig = SymmetricEigen::new(op.tr_mul(op));
        let (i, v) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, T::max_value().unwrap()), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        (eig.eigenvectors.column(i).into_owned(), v.max(T::zero()))
    };

    let problem = PairProblem::new(prior, prior, cfg);
    let runs: Vec<(T, Option<Witness<T>>, usize)> = (0..starts)
        .into_par_iter()
        .map(|i| {
            let mut r = task_rng(seed, i as u64);
            let mut a = prior.sample_params(&mut r).normalize();
            let mut b = DVector::zeros(m);
            let mut f = T::max_value().unwrap();
            let iters = LINEAR_ITERS.min(budget - i * LINEAR_ITERS);
            let alternating = ALTERNATING_ITERS.min(iters).max(1);
            for it in 0..alternating {
                if it % 2 == 0 {
                    (b, f) = bottom(&operator(&a));
                } else {
                    (a, f) = bottom(&operator(&b));
                }
            }
            // (a + b, a − b) lie in one orbit when AᵀB is skew.
            let theta = PairProblem::<T>::join(&(&a + &b), &(&a - &b));
            let Some(st) = problem.state(theta) else {
                return (f / T::lit(4.0), None, alternating);
            };
            let (st, polish) = problem.descend(st, iters.saturating_sub(alternating));
            let witness = if st.phi <= T::lit(cfg.objective_tol / 4.0) {
                let (x, y) = problem.signals(&st);
                verify(&x, &y, cfg)
            } else {
                None
            };
            (st.phi, witness, alternating + polish)
        })
        .collect();

    let mut best = f64::INFINITY;
    let mut used = 0;
    let mut witness = None;
    for (phi, w, u) in runs {
        used += u;
        best = best.min(phi.as_f64());
        if witness.is_none() {
            witness = w;
        }
    }
    verdict(
        witness,
        SearchStats {
            budget_used: used,
            best_objective: best,
            starts,
        },
    )
}

/// Search for `x, y` in the prior with `d_H(x, y)` tiny and `d_σ(x, y)`
/// bounded below.
pub fn transversality_search_set<T: Real, R: RngCore>(
    prior: &Prior<T>,
    budget: usize,
    rng: &mut R,
) -> TransversalityVerdict<T> {
    transversality_search_set_with(prior, budget, &SearchConfig::default(), rng)
}

pub fn transversality_search_set_with<T: Real, R: RngCore>(
    prior: &Prior<T>,
    budget: usize,
    cfg: &SearchConfig,
    rng: &mut R,
) -> TransversalityVerdict<T> {
    let seed = rng.next_u64();
    let (w, stats) = search_pair(prior, prior, budget, seed, cfg);
    verdict(w, stats)
}

/// Transversality of the hull set: pairs of points drawn from pairs of hull
/// pieces (tangent charts for manifolds). Linear priors use the linear search.
pub fn hull_transversality_check<T: Real, R: RngCore>(
    prior: &Prior<T>,
    budget: usize,
    rng: &mut R,
) -> TransversalityVerdict<T> {
    hull_transversality_check_with(prior, budget, &SearchConfig::default(), rng)
}

/// Smallest per-pair budget in the hull check.
const MIN_PAIR_BUDGET: usize = 24;

pub fn hull_transversality_check_with<T: Real, R: RngCore>(
    prior: &Prior<T>,
    budget: usize,
    cfg: &SearchConfig,
    rng: &mut R,
) -> TransversalityVerdict<T> {
    if let Prior::Linear(p) = prior {
        return transversality_search_linear_with(p, budget, cfg, rng);
    }
    let pieces: Vec<AffineChart<T>> = hull_pieces(prior, cfg.max_pieces, rng);
    let seed = rng.next_u64();
    let mut pairs: Vec<(usize, usize)> = (0..pieces.len())
        .flat_map(|i| (i..pieces.len()).map(move |j| (i, j)))
        .collect();
    // Too many pairs for the budget: search a random subset.
    let max_pairs = (budget / MIN_PAIR_BUDGET).max(1);
    if pairs.len() > max_pairs {
        let mut keep = rand::seq::index::sample(rng, pairs.len(), max_pairs).into_vec();
        keep.sort_unstable();
        pairs = keep.into_iter().map(|k| pairs[k]).collect();
    }
    let per_pair = (budget / pairs.len().max(1)).max(MIN_PAIR_BUDGET);

    let results: Vec<(Option<Witness<T>>, SearchStats)> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let pair_seed = task_rng(seed, k as u64).next_u64();
            search_pair(&pieces[i], &pieces[j], per_pair, pair_seed, cfg)
        })
        .collect();

    let mut witness = None;
    let mut stats = SearchStats {
        budget_used: 0,
        best_objective: f64::INFINITY,
        starts: 0,
    };
    for (w, s) in results {
        stats.budget_used += s.budget_used;
        stats.best_objective = stats.best_objective.min(s.best_objective);
        stats.starts += s.starts;
        if witness.is_none() {
            witness = w;
        }
    }
    verdict(witness, stats)
}
