use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::*;
use crate::metrics::gram_sqrt_dist;
use crate::real::{gaussian_matrix, seeded_rng};

fn spec(blocks: &[(usize, usize)]) -> RepSpec {
    RepSpec::new(blocks.to_vec()).unwrap()
}

#[test]
fn linear_samples_lie_in_span() {
    let s = spec(&[(3, 2), (2, 2)]);
    let mut rng = seeded_rng(1);
    let p = LinearPrior::<f64>::generic(&s, 3, &mut rng).unwrap();
    let q = p.basis();
    assert!((q.transpose() * q - DMatrix::identity(3, 3)).amax() < 1e-10);
    for x in sample_prior(&Prior::Linear(p.clone()), 20, &mut rng) {
        assert!(p.residual(&x) < 1e-10);
    }
    let full = LinearPrior::<f64>::generic(&s, s.ambient_dim(), &mut rng).unwrap();
    assert!(full.residual(&Signal::random(&s, &mut rng)) < 1e-10);
    assert!(LinearPrior::<f64>::generic(&s, 0, &mut rng).is_err());
    assert!(LinearPrior::<f64>::generic(&s, s.ambient_dim() + 1, &mut rng).is_err());
}

#[test]
fn linear_rejects_ill_conditioned_basis() {
    let s = spec(&[(2, 1)]);
    let m = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 1e-9]);
    assert!(LinearPrior::<f64>::from_matrix(&s, &m).is_err());
}

#[test]
fn linear_chart_is_prior() {
    let s = spec(&[(4, 1)]);
    let mut rng = seeded_rng(2);
    let p = LinearPrior::<f64>::generic(&s, 2, &mut rng).unwrap();
    let prior = Prior::Linear(p.clone());
    let theta = prior.sample_params(&mut rng);
    let chart = local_affine_chart(&prior, &theta).unwrap();
    assert_eq!(chart.anchor_flat().norm(), 0.0);
    assert_eq!(chart.direction_matrix(), p.basis());
    let hull = hull_pieces(&prior, 10, &mut rng);
    assert_eq!(hull.len(), 1);
    assert_eq!(hull[0], chart);
}

#[test]
fn sparse_samples_have_small_support() {
    let s = spec(&[(6, 1)]);
    let mut rng = seeded_rng(3);
    let p = SparsePrior::<f64>::generic(&s, 2, false, &mut rng).unwrap();
    for _ in 0..50 {
        let theta = p.sample_params(&mut rng);
        let x = p.decode(&theta);
        let c = p.coefficients(&x);
        assert!(c.iter().filter(|v| v.abs() > 1e-9).count() <= 2);
    }
}

#[test]
fn sparse_orthonormal_dictionary() {
    let s = spec(&[(3, 2)]);
    let mut rng = seeded_rng(4);
    let p = SparsePrior::<f64>::generic(&s, 2, true, &mut rng).unwrap();
    assert!(p.is_orthonormal());
    let q = p.dictionary();
    assert!((q.transpose() * q - DMatrix::identity(6, 6)).amax() < 1e-10);
    let id = SparsePrior::<f64>::standard_basis(&s, 2).unwrap();
    assert_eq!(id.dictionary(), &DMatrix::identity(6, 6));
    assert!(SparsePrior::<f64>::standard_basis(&s, 7).is_err());
}

#[test]
fn sparse_projection_keeps_largest() {
    let s = spec(&[(4, 1)]);
    let p = SparsePrior::<f64>::standard_basis(&s, 2).unwrap();
    let mut theta = DVector::from_vec(vec![0.1, -3.0, 2.0, 0.5]);
    p.project(&mut theta);
    assert_eq!(theta.as_slice(), &[0.0, -3.0, 2.0, 0.0]);
    assert_eq!(p.support_of(&theta), vec![1, 2]);
}

#[test]
fn sparse_hull_enumerates_support_pairs() {
    let s = spec(&[(6, 1)]);
    let mut rng = seeded_rng(5);
    let prior = Prior::Sparse(SparsePrior::<f64>::generic(&s, 2, false, &mut rng).unwrap());
    let hull = hull_pieces(&prior, 1000, &mut rng);
    assert_eq!(hull.len(), 15 * 16 / 2);
    for c in &hull {
        assert!(c.dim() <= 4);
        assert!(c.dim() >= 2);
        assert_eq!(c.anchor_flat().norm(), 0.0);
    }
    let sampled = hull_pieces(&prior, 30, &mut rng);
    assert_eq!(sampled.len(), 30);
    assert!(sampled.iter().all(|c| c.dim() <= 4));
}

#[test]
fn circle_tangent() {
    let s = spec(&[(2, 1)]);
    let p = ManifoldPrior::<f64>::sphere(&s, 1, 1.0).unwrap();
    let chart = p.chart_at(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
    assert!((chart.anchor_flat() - DVector::from_vec(vec![1.0, 0.0])).norm() < 1e-14);
    assert_eq!(chart.dim(), 1);
    let d = chart.direction_matrix();
    assert!(d[(0, 0)].abs() < 1e-14);
    assert!((d[(1, 0)].abs() - 1.0).abs() < 1e-14);
}

#[test]
fn sphere_samples_have_constant_norm() {
    let s = spec(&[(2, 2)]);
    let mut rng = seeded_rng(6);
    let prior = Prior::Manifold(ManifoldPrior::<f64>::sphere(&s, 2, 1.5).unwrap());
    for x in sample_prior(&prior, 30, &mut rng) {
        assert!((x.norm() - 1.5).abs() < 1e-10);
    }
    assert!(ManifoldPrior::<f64>::sphere(&s, 4, 1.0).is_err());
    for c in hull_pieces(&prior, 5, &mut rng) {
        assert_eq!(c.dim(), 2);
        // tangent plane is orthogonal to the anchor
        assert!((c.direction_matrix().transpose() * c.anchor_flat()).norm() < 1e-10);
    }
}

fn first_order_error<P: ParamSet<f64>>(p: &P, theta: &DVector<f64>, dir: &DVector<f64>, h: f64) -> f64 {
    let x0 = p.decode(theta);
    let x1 = p.decode(&(theta + dir * h));
    (x1 - x0 - p.jacobian(theta) * dir * h).norm()
}

#[test]
fn manifolds_match_their_jacobians() {
    let s = spec(&[(3, 1), (2, 1)]);
    let mut rng = seeded_rng(7);
    let families = [
        ManifoldPrior::<f64>::sphere(&s, 3, 2.0).unwrap(),
        ManifoldPrior::<f64>::torus(&s, 2.0, 0.5).unwrap(),
    ];
    for p in families {
        for _ in 0..5 {
            let theta = p.sample_params(&mut rng);
            let dir = gaussian_vector::<f64>(theta.len(), &mut rng);
            let e1 = first_order_error(&p, &theta, &dir, 1e-5);
            let e2 = first_order_error(&p, &theta, &dir, 5e-6);
            assert!(e1 < 1e-8, "{e1}");
            // second order: halving the step quarters the error
            assert!(e2 < 0.3 * e1 + 1e-13, "{e1} {e2}");
        }
    }
}

#[test]
fn torus_is_well_situated() {
    let s = spec(&[(3, 1)]);
    let mut rng = seeded_rng(8);
    let prior = Prior::Manifold(ManifoldPrior::<f64>::torus(&s, 2.0, 0.5).unwrap());
    for x in sample_prior(&prior, 50, &mut rng) {
        assert!(x.norm() >= 1.5 - 1e-12);
    }
    let Prior::Manifold(p) = &prior else { unreachable!() };
    assert!(p.well_situated_flag());
    assert!(!prior.is_homogeneous());
}

#[test]
fn relu_all_active_chart_is_layer_product() {
    let s = spec(&[(2, 1)]);
    let w1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
    let w2 = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
    let b2 = DVector::from_vec(vec![0.3, -0.1]);
    let layers = vec![
        AffineLayer::new(w1.clone(), DVector::zeros(2)).unwrap(),
        AffineLayer::new(w2.clone(), b2.clone()).unwrap(),
    ];
    let p = ReluPrior::from_layers(&s, layers).unwrap();
    let z = DVector::from_vec(vec![0.4, 0.7]);
    assert_eq!(p.decode(&z), &w2 * (&w1 * &z) + &b2);
    assert_eq!(p.jacobian(&z), &w2 * &w1);
    let chart = p.chart_at(&z).unwrap();
    assert_eq!(chart.dim(), 2);
    let boundary = DVector::from_vec(vec![0.0, 0.0]);
    assert_eq!(p.chart_at(&boundary), Err(Error::ActivationBoundary { layer: 0, unit: 0 }));
    assert!(is_activation_boundary(&Prior::Relu(p), &boundary));
}

#[test]
fn relu_shape_checks() {
    let s = spec(&[(3, 1)]);
    let mut rng = seeded_rng(9);
    assert!(ReluPrior::<f64>::generic(&s, &[2, 4, 3], &mut rng).is_err());
    assert!(ReluPrior::<f64>::generic(&s, &[3], &mut rng).is_err());
    let p = ReluPrior::<f64>::generic(&s, &[2, 5, 3, 3], &mut rng).unwrap();
    assert_eq!(p.latent_dim(), 2);
    for x in sample_prior(&Prior::Relu(p), 10, &mut rng) {
        assert_eq!(x.spec(), &s);
    }
}

#[test]
fn relu_chart_is_exact_inside_region() {
    let s = spec(&[(2, 2)]);
    let mut rng = seeded_rng(10);
    let p = ReluPrior::<f64>::generic(&s, &[2, 8, 4, 4], &mut rng).unwrap();
    let mut checked = 0;
    for _ in 0..50 {
        let z = p.sample_params(&mut rng);
        let Ok(_) = p.chart_at(&z) else { continue };
        let pat = p.pattern(&z);
        let dz = gaussian_vector::<f64>(2, &mut rng) * 1e-6;
        let z2 = &z + &dz;
        if p.pattern(&z2) != pat {
            continue;
        }
        let lin = p.decode(&z) + p.jacobian(&z) * &dz;
        assert!((p.decode(&z2) - lin).norm() < 1e-9);
        checked += 1;
    }
    assert!(checked > 40);
    let prior = Prior::Relu(p);
    let pieces = hull_pieces(&prior, 20, &mut rng);
    assert!(!pieces.is_empty() && pieces.len() <= 20);
    assert!(pieces.iter().all(|c| c.dim() <= 4));
}

#[test]
fn embed_identity_and_scaling() {
    let s = spec(&[(2, 2)]);
    let mut rng = seeded_rng(11);
    let prior = Prior::Linear(LinearPrior::<f64>::generic(&s, 2, &mut rng).unwrap());
    let same = embed_generic(&prior, &DMatrix::identity(4, 4)).unwrap();
    let (Prior::Linear(a), Prior::Linear(b)) = (&prior, &same) else { unreachable!() };
    assert!((a.basis() * a.basis().transpose() - b.basis() * b.basis().transpose()).amax() < 1e-12);
    assert_eq!(embed_generic(&prior, &DMatrix::zeros(4, 4)).unwrap_err(), Error::SingularMap);
    assert!(embed_generic(&prior, &DMatrix::identity(3, 3)).is_err());

    let sphere = Prior::Manifold(ManifoldPrior::<f64>::sphere(&s, 2, 1.0).unwrap());
    let lam = -2.5;
    let scaled = embed_generic(&sphere, &(DMatrix::identity(4, 4) * lam)).unwrap();
    let theta = sphere.sample_params(&mut rng);
    let theta2 = sphere.sample_params(&mut rng);
    let x = sphere.decode_signal(&theta);
    let y = sphere.decode_signal(&theta2);
    let sx = scaled.decode_signal(&theta);
    let sy = scaled.decode_signal(&theta2);
    assert!(((&sx - &x.scaled(lam)).norm()) < 1e-12);
    let d0 = gram_sqrt_dist(&x, &y).unwrap();
    let d1 = gram_sqrt_dist(&sx, &sy).unwrap();
    assert!((d1 - lam.abs() * d0).abs() < 1e-10);
}

#[test]
fn embed_transforms_charts() {
    let s = spec(&[(3, 1)]);
    let mut rng = seeded_rng(12);
    let prior = Prior::Manifold(ManifoldPrior::<f64>::torus(&s, 2.0, 0.5).unwrap());
    let a = gaussian_matrix::<f64, _>(3, 3, &mut rng);
    let moved = embed_generic(&prior, &a).unwrap();
    let theta = prior.sample_params(&mut rng);
    let c0 = local_affine_chart(&prior, &theta).unwrap();
    let c1 = local_affine_chart(&moved, &theta).unwrap();
    assert!((c1.anchor_flat() - &a * c0.anchor_flat()).norm() < 1e-12);
    let expect = orthonormal_columns(&(&a * c0.direction_matrix()), RANK_TOL);
    let p0 = &expect * expect.transpose();
    let p1 = c1.direction_matrix() * c1.direction_matrix().transpose();
    assert!((p0 - p1).amax() < 1e-10);
    let Prior::Manifold(m) = &moved else { unreachable!() };
    assert!(m.well_situated_flag());
}

#[test]
fn embed_commutes_with_sampling() {
    let s = spec(&[(3, 1)]);
    let mut rng = seeded_rng(13);
    let prior = Prior::Sparse(SparsePrior::<f64>::generic(&s, 1, false, &mut rng).unwrap());
    let a = gaussian_matrix::<f64, _>(3, 3, &mut rng);
    let moved = embed_generic(&prior, &a).unwrap();
    let n = 20000;
    let second = |xs: Vec<Signal<f64>>| {
        let mut m = DMatrix::<f64>::zeros(3, 3);
        for x in &xs {
            let v = x.to_flat();
            m += &v * v.transpose();
        }
        m / xs.len() as f64
    };
    let lhs = second(sample_prior(&prior, n, &mut rng).iter().map(|x| Signal::from_flat(&s, &(&a * x.to_flat())).unwrap()).collect());
    let rhs = second(sample_prior(&moved, n, &mut rng));
    assert!((&lhs - &rhs).norm() <= 0.05 * rhs.norm(), "{lhs} {rhs}");
}

#[test]
fn affine_segment() {
    let s = spec(&[(2, 1)]);
    let anchor = Signal::from_slice(&s, &[1.0, 0.0]).unwrap();
    let dir = Signal::from_slice(&s, &[0.0, 1.0]).unwrap();
    let p = AffinePrior::new(&anchor, &[dir], Some(vec![(0.0, 1.0)])).unwrap();
    let mut t = DVector::from_vec(vec![3.0]);
    p.project(&mut t);
    assert_eq!(t[0], 1.0);
    assert_eq!(p.decode(&t).as_slice(), &[1.0, 1.0]);
    let prior = Prior::Affine(p);
    assert!(!prior.contains_zero());
    let mut rng = seeded_rng(14);
    let hull = hull_pieces(&prior, 4, &mut rng);
    assert_eq!(hull.len(), 1);
    assert!(!hull[0].is_linear());
}

#[test]
fn descriptions_round_trip() {
    let s = spec(&[(3, 1), (2, 2)]);
    let descs = vec![
        PriorDescription::Linear { spec: s.clone(), m: 2, seed: 1 },
        PriorDescription::Sparse {
            spec: s.clone(),
            m: 2,
            orthonormal: true,
            standard_basis: false,
            seed: 2,
        },
        PriorDescription::Relu {
            spec: s.clone(),
            layer_dims: vec![2, 4, 7, 7],
            seed: 3,
        },
        PriorDescription::Sphere {
            spec: s.clone(),
            dim: 2,
            radius: 1.0,
            generic_embed: true,
            seed: 4,
        },
        PriorDescription::Torus {
            spec: s.clone(),
            major: 2.0,
            minor: 1.0,
            generic_embed: false,
            seed: 5,
        },
    ];
    for d in descs {
        let text = serde_json::to_string(&d).unwrap();
        let back: PriorDescription = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
        let p1 = d.build::<f64>().unwrap();
        let p2 = back.build::<f64>().unwrap();
        let mut r1 = seeded_rng(99);
        let mut r2 = seeded_rng(99);
        let x1 = sample_prior(&p1, 3, &mut r1);
        let x2 = sample_prior(&p2, 3, &mut r2);
        assert_eq!(x1, x2);
    }
}

struct Parabola;

impl SmoothMap<f64> for Parabola {
    fn intrinsic_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn eval(&self, t: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![t[0], t[0] * t[0] + 1.0])
    }
    fn jacobian(&self, t: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[1.0, 2.0 * t[0]])
    }
    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        gaussian_vector(1, rng)
    }
}

#[test]
fn custom_manifold() {
    let s = spec(&[(2, 1)]);
    let p = ManifoldPrior::custom(&s, Arc::new(Parabola), false, false);
    let mut rng = seeded_rng(15);
    for _ in 0..5 {
        let t = p.sample_params(&mut rng);
        let dir = DVector::from_vec(vec![1.0]);
        assert!(first_order_error(&p, &t, &dir, 1e-5) < 1e-9);
    }
    assert_eq!(Prior::Manifold(p).intrinsic_dim(), 1);
}

#[test]
fn f32_priors() {
    let s = spec(&[(3, 1)]);
    let mut rng = seeded_rng(16);
    let prior = Prior::Linear(LinearPrior::<f32>::generic(&s, 2, &mut rng).unwrap());
    let xs = sample_prior(&prior, 3, &mut rng);
    assert_eq!(xs.len(), 3);
}
