mod common;

use std::collections::HashSet;

use apr_core::geom::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::oracle::{brute_knn, brute_overlap, random_cloud, random_transform};

fn rotation(seed: u64) -> Matrix3<f64> {
    *random_transform(&mut ChaCha8Rng::seed_from_u64(seed)).rotation()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transforms_preserve_pairwise_distances(seed: u64, n in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_cloud(&mut rng, n, 10.0);
        let moved = apply_transform(&c, &random_transform(&mut rng));
        for i in 0..n {
            for j in i + 1..n {
                let before = (c[i] - c[j]).norm();
                let after = (moved[i] - moved[j]).norm();
                prop_assert!((before - after).abs() <= 1e-9 * before.max(1e-12));
            }
        }
    }

    #[test]
    fn kabsch_recovers_noiseless_transforms(seed: u64, n in 3usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_cloud(&mut rng, n, 10.0);
        let gt = random_transform(&mut rng);
        let b = apply_transform(&a, &gt);
        let est = kabsch(&Correspondences::new((0..n).map(|i| (i, i)).collect()), &a, &b).unwrap();
        prop_assert!(rre(est.rotation(), gt.rotation()) < 1e-6);
        prop_assert!(rte(est.translation(), gt.translation()) < 1e-8);
    }

    #[test]
    fn second_voxel_pass_keeps_cells_singly_occupied(seed: u64, n in 1usize..300, size in 0.2f64..3.0) {
        let c = random_cloud(&mut ChaCha8Rng::seed_from_u64(seed), n, 5.0);
        let once = voxel_downsample(&c, size);
        let twice = voxel_downsample(&once, size);
        prop_assert!(twice.len() <= once.len());
        let cell = |p: &Point3<f64>| ((p.x / size).floor() as i64, (p.y / size).floor() as i64, (p.z / size).floor() as i64);
        let cells: HashSet<_> = twice.points().iter().map(cell).collect();
        prop_assert_eq!(cells.len(), twice.len());
    }

    #[test]
    fn self_overlap_is_one(seed: u64, n in 1usize..100, tau in 1e-3f64..5.0) {
        let c = random_cloud(&mut ChaCha8Rng::seed_from_u64(seed), n, 10.0);
        prop_assert_eq!(overlap_ratio(&c, &c, &RigidTransform::identity(), tau).unwrap(), 1.0);
    }

    #[test]
    fn overlap_matches_double_loop(seed: u64, tau in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_cloud(&mut rng, 80, 6.0);
        let b = random_cloud(&mut rng, 60, 6.0);
        let gt = RigidTransform::from_yaw(0.3, Vector3::new(1.0, 0.0, 0.0));
        let got = overlap_ratio(&a, &b, &gt, tau).unwrap();
        prop_assert!((got - brute_overlap(&a, &b, &gt, tau)).abs() < 1e-12);
    }

    #[test]
    fn rre_is_symmetric(s1: u64, s2: u64) {
        let (r1, r2) = (rotation(s1), rotation(s2));
        prop_assert!((rre(&r1, &r2) - rre(&r2, &r1)).abs() < 1e-9);
    }

    #[test]
    fn neighbor_index_equals_brute_force(seed: u64, n in 1usize..200, k in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_cloud(&mut rng, n, 10.0);
        let index = NeighborIndex::build(&c).unwrap();
        for q in random_cloud(&mut rng, 20, 12.0).points() {
            let got: Vec<(usize, f64)> = index.knn(q, k).iter().map(|nb| (nb.index, nb.dist_sq)).collect();
            prop_assert_eq!(got, brute_knn(q, &c, k));
            prop_assert_eq!(index.nearest(q).index, brute_knn(q, &c, 1)[0].0);
        }
    }
}
