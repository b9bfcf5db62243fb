mod common;

use apr_core::geom::{Correspondences, PointCloud, RigidTransform, Vector3};
use apr_core::loss::*;
use apr_core::model::{FeatureMap, OffsetSet};
use apr_core::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::oracle::{self, brute_chamfer, exhaustive_contrastive};

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    oracle::random_cloud(rng, n, 5.0)
}

#[test]
fn chamfer_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let a = random_cloud(&mut rng, 200);
        let b = random_cloud(&mut rng, 200);
        let c = chamfer(&a, &b).unwrap();
        let (expected, grad) = brute_chamfer(&a, &b);
        assert!((c.value - expected).abs() < 1e-12);
        for (g, e) in c.grad_a.iter().zip(&grad) {
            assert!((g - e).norm() < 1e-12);
        }
    }
}

#[test]
fn chamfer_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_cloud(&mut rng, 40);
    let b = random_cloud(&mut rng, 60);
    let base = chamfer(&a, &b).unwrap();
    let h = 1e-6;
    for i in 0..a.len() {
        for c in 0..3 {
            let shift = |s: f64| {
                let mut pts = a.points().to_vec();
                pts[i][c] += s;
                chamfer(&PointCloud::new(pts).unwrap(), &b).unwrap()
            };
            let (up, down) = (shift(h), shift(-h));
            assert_eq!(up.signature(), base.signature());
            assert_eq!(down.signature(), base.signature());
            let fd = (up.value - down.value) / (2.0 * h);
            assert!((fd - base.grad_a[i][c]).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }
}

#[test]
fn l2_reg_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let offs: Vec<_> = (0..30)
        .map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let o = OffsetSet::new(3, offs.clone()).unwrap();
    let (v, g) = l2_offset_reg(&o);
    let direct = offs.iter().map(|x| x.norm_squared()).sum::<f64>() / 30.0;
    assert!((v - direct).abs() < 1e-12);
    let h = 1e-6;
    for k in 0..30 {
        for c in 0..3 {
            let eval = |s: f64| {
                let mut w = offs.clone();
                w[k][c] += s;
                l2_offset_reg(&OffsetSet::new(3, w).unwrap()).0
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!((fd - g[k][c]).abs() / fd.abs().max(g[k][c].abs()).max(1e-12) < 1e-6);
        }
    }
}

fn fm(dim: usize, rows: &[Vec<f64>]) -> FeatureMap {
    FeatureMap::from_rows(dim, rows.concat()).unwrap()
}

#[test]
fn contrastive_inactive_hinges_give_zero() {
    // positives coincide, every other pair is ≥ m_n apart
    let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![2.0 * i as f64, 0.0]).collect();
    let a = fm(2, &rows);
    let corr = Correspondences::new((0..4).map(|i| (i, i)).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = hardest_contrastive(&a, &a, &corr, &LossConfig::default(), &mut rng).unwrap();
    assert_eq!(out.value, 0.0);
    assert!(out.grad_a.iter().chain(&out.grad_b).all(|g| *g == 0.0));
}

#[test]
fn contrastive_single_positive_hinge() {
    let cfg = LossConfig::default();
    let a = fm(2, &[vec![0.0, 0.0], vec![10.0, 0.0]]);
    let b = fm(2, &[vec![cfg.m_p + 0.2, 0.0], vec![-10.0, 0.0]]);
    let corr = Correspondences::new(vec![(0, 0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = hardest_contrastive(&a, &b, &corr, &cfg, &mut rng).unwrap();
    assert!((out.value - 0.04).abs() < 1e-12, "{}", out.value);
}

#[test]
fn contrastive_requires_positives() {
    let a = fm(2, &[vec![0.0, 0.0]]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = hardest_contrastive(&a, &a, &Correspondences::new(vec![]), &LossConfig::default(), &mut rng);
    assert!(matches!(r, Err(Error::NoPositives)));
}

#[test]
fn contrastive_matches_exhaustive_mining() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = LossConfig { n_pos_pairs: 100, n_neg_candidates: 100, ..LossConfig::default() };
    for _ in 0..20 {
        let a: Vec<Vec<f64>> = (0..10).map(|_| (0..4).map(|_| rng.random_range(-0.6..0.6)).collect()).collect();
        let b: Vec<Vec<f64>> = (0..10).map(|_| (0..4).map(|_| rng.random_range(-0.6..0.6)).collect()).collect();
        let mut pos: Vec<(usize, usize)> = (0..6).map(|i| (i, (i * 3) % 10)).collect();
        pos.push((2, 7));
        let corr = Correspondences::new(pos.clone());
        let out = hardest_contrastive(&fm(4, &a), &fm(4, &b), &corr, &cfg, &mut rng).unwrap();
        let r = exhaustive_contrastive(&a, &b, &pos, cfg.m_p, cfg.m_n);
        assert!((out.value - r.value).abs() < 1e-9);
        for i in 0..10 {
            for c in 0..4 {
                assert!((out.grad_a[i * 4 + c] - r.grad_a[i][c]).abs() < 1e-9);
                assert!((out.grad_b[i * 4 + c] - r.grad_b[i][c]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn contrastive_subsamples_positives_deterministically() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let f = fm(8, &rows);
    let corr = Correspondences::new((0..300).map(|i| (i, (i + 1) % 300)).collect());
    let cfg = LossConfig { n_pos_pairs: 64, n_neg_candidates: 32, ..LossConfig::default() };
    let run = |seed| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        hardest_contrastive(&f, &f, &corr, &cfg, &mut r).unwrap()
    };
    assert_eq!(run(9).value, run(9).value);
    assert_eq!(run(9).grad_a, run(9).grad_a);
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    m.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chamfer_symmetric_nonnegative(seed in any::<u64>(), na in 1usize..40, nb in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_cloud(&mut rng, na);
        let b = random_cloud(&mut rng, nb);
        let ab = chamfer(&a, &b).unwrap().value;
        prop_assert_eq!(ab, chamfer(&b, &a).unwrap().value);
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(chamfer(&a, &a).unwrap().value, 0.0);
    }

    #[test]
    fn chamfer_rigid_invariant(seed in any::<u64>(), angle in -3.1f64..3.1, tx in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_cloud(&mut rng, 50);
        let b = random_cloud(&mut rng, 30);
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0);
        let t = RigidTransform::from_axis_angle(&axis, angle, Vector3::new(tx, 2.0, -1.0));
        let ta = apr_core::geom::apply_transform(&a, &t);
        let tb = apr_core::geom::apply_transform(&b, &t);
        let d = chamfer(&a, &b).unwrap().value - chamfer(&ta, &tb).unwrap().value;
        prop_assert!(d.abs() < 1e-9);
    }

    #[test]
    fn report_total_recomputes(l_ml in 0.0f64..10.0, l_cd in 0.0f64..10.0, l_l2 in 0.0f64..10.0,
                               lambda1 in 0.0f64..5.0, lambda2 in 0.0f64..5.0) {
        let cfg = LossConfig { lambda1, lambda2, ..LossConfig::default() };
        let r = total_loss(l_ml, l_cd, l_l2, &cfg).unwrap();
        prop_assert!((r.total - (r.l_ml + lambda1 * r.l_cd + lambda2 * r.l_l2)).abs() < 1e-12);
    }

    #[test]
    fn contrastive_orthogonal_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 40;
        let a = FeatureMap::from_rows(6, (0..n * 6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let b = FeatureMap::from_rows(6, (0..n * 6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let corr = Correspondences::new((0..n).step_by(2).map(|i| (i, (i * 7) % n)).collect());
        let q = random_orthogonal(&mut rng, 6);
        let cfg = LossConfig { n_pos_pairs: 8, n_neg_candidates: 10, ..LossConfig::default() };
        let base = hardest_contrastive(&a, &b, &corr, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let rot = hardest_contrastive(&a.transform(&q).unwrap(), &b.transform(&q).unwrap(), &corr, &cfg,
                                      &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        prop_assert!((base.value - rot.value).abs() < 1e-9);
    }
}
