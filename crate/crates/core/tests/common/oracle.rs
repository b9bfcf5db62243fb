//! Brute-force references, deliberately naive.

use std::collections::BTreeMap;

use apr_core::geom::{Point3, PointCloud, RigidTransform, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, half: f64) -> PointCloud {
    let pts: Vec<[f64; 3]> = (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(-half..half)))
        .collect();
    PointCloud::from_xyz(&pts).unwrap()
}

pub fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
    let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let t = Vector3::from_fn(|_, _| rng.random_range(-20.0..20.0));
    RigidTransform::from_axis_angle(&axis, rng.random_range(-3.0..3.0), t)
}

/// Nearest point of `c` (lowest index on ties) and its squared distance.
pub fn brute_nn(p: &Point3<f64>, c: &PointCloud) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, q) in c.points().iter().enumerate() {
        let d = (p - q).norm_squared();
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// `k` nearest as `(index, squared distance)`, ordered by distance then index.
pub fn brute_knn(p: &Point3<f64>, c: &PointCloud, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = c.points().iter().enumerate().map(|(j, q)| (j, (p - q).norm_squared())).collect();
    all.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    all.truncate(k);
    all
}

/// Chamfer value and gradient w.r.t. `a` by double loops.
pub fn brute_chamfer(a: &PointCloud, b: &PointCloud) -> (f64, Vec<Vector3<f64>>) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut value = 0.0;
    let mut grad = vec![Vector3::zeros(); a.len()];
    let mut sum_ab = 0.0;
    for (i, p) in a.points().iter().enumerate() {
        let (j, d) = brute_nn(p, b);
        sum_ab += d;
        grad[i] += (p - b[j]) * (2.0 / na);
    }
    let mut sum_ba = 0.0;
    for q in b.points() {
        let (i, d) = brute_nn(q, a);
        sum_ba += d;
        grad[i] += (a[i] - q) * (2.0 / nb);
    }
    value += sum_ab / na + sum_ba / nb;
    (value, grad)
}

pub struct ContrastiveReference {
    pub value: f64,
    pub grad_a: Vec<Vec<f64>>,
    pub grad_b: Vec<Vec<f64>>,
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Hardest-contrastive loss with every positive used and every non-positive
/// point of the other side a candidate.
pub fn exhaustive_contrastive(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    pos: &[(usize, usize)],
    mp: f64,
    mn: f64,
) -> ContrastiveReference {
    let l = a[0].len();
    let mut ga = vec![vec![0.0; l]; a.len()];
    let mut gb = vec![vec![0.0; l]; b.len()];
    let np = pos.len() as f64;
    let mut lp = 0.0;
    for &(i, j) in pos {
        let d = dist(&a[i], &b[j]);
        if d > mp {
            lp += (d - mp).powi(2) / np;
            for c in 0..l {
                let u = (a[i][c] - b[j][c]) / d;
                ga[i][c] += 2.0 * (d - mp) * u / np;
                gb[j][c] -= 2.0 * (d - mp) * u / np;
            }
        }
    }
    let is_pos = |i: usize, j: usize| pos.contains(&(i, j));
    let mut hard_a = Vec::new();
    for &(i, _) in pos {
        let best = (0..b.len())
            .filter(|&k| !is_pos(i, k))
            .map(|k| (k, dist(&a[i], &b[k])))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        if let Some((k, d)) = best {
            hard_a.push((i, k, d));
        }
    }
    let mut hard_b = Vec::new();
    for &(_, j) in pos {
        let best = (0..a.len())
            .filter(|&k| !is_pos(k, j))
            .map(|k| (k, dist(&a[k], &b[j])))
            .min_by(|x, y| x.1.total_cmp(&y.1));
        if let Some((k, d)) = best {
            hard_b.push((k, j, d));
        }
    }
    let mut neg = 0.0;
    for hard in [&hard_a, &hard_b] {
        let nv = hard.len() as f64;
        for &(i, j, d) in hard.iter() {
            if d < mn {
                neg += 0.5 * (mn - d).powi(2) / nv;
                for c in 0..l {
                    let u = (a[i][c] - b[j][c]) / d;
                    ga[i][c] -= (mn - d) * u / nv;
                    gb[j][c] += (mn - d) * u / nv;
                }
            }
        }
    }
    ContrastiveReference {
        value: lp + neg,
        grad_a: ga,
        grad_b: gb,
    }
}

/// Centroid of every occupied cell, keyed by cell.
pub fn voxel_centroids(c: &PointCloud, size: f64) -> BTreeMap<(i64, i64, i64), Point3<f64>> {
    let mut cells: BTreeMap<(i64, i64, i64), (Vector3<f64>, usize)> = BTreeMap::new();
    for p in c.points() {
        let key = ((p.x / size).floor() as i64, (p.y / size).floor() as i64, (p.z / size).floor() as i64);
        let e = cells.entry(key).or_insert((Vector3::zeros(), 0));
        e.0 += p.coords;
        e.1 += 1;
    }
    cells.into_iter().map(|(k, (s, n))| (k, Point3::from(s / n as f64))).collect()
}

/// Symmetric overlap by double loops: the smaller of the two fractions of
/// points with a partner strictly closer than `tau` under `gt`.
pub fn brute_overlap(a: &PointCloud, b: &PointCloud, gt: &RigidTransform, tau: f64) -> f64 {
    let moved: Vec<Point3<f64>> = a.points().iter().map(|p| gt.apply(p)).collect();
    let t2 = tau * tau;
    let ab = moved.iter().filter(|p| b.points().iter().any(|q| (*p - q).norm_squared() < t2)).count();
    let ba = b.points().iter().filter(|q| moved.iter().any(|p| (p - *q).norm_squared() < t2)).count();
    (ab as f64 / a.len() as f64).min(ba as f64 / b.len() as f64)
}
