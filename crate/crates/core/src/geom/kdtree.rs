use nalgebra::Point3;

use super::PointCloud;
use crate::{Error, Result};

const LEAF_SIZE: usize = 8;

/// A query result: index into the indexed cloud and squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.dist_sq.sqrt()
    }

    /// Total order: nearer first, ties by lower index.
    fn precedes(&self, other: &Neighbor) -> bool {
        self.dist_sq < other.dist_sq || (self.dist_sq == other.dist_sq && self.index < other.index)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Exact kd-tree over a snapshot of a cloud. Read-only after build, so it can
/// be shared across threads.
///
/// Queries return exact neighbors with ties broken by the smallest point index.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<Point3<f64>>,
    // permutation of point indices; leaves own contiguous ranges of it
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl NeighborIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let points = cloud.points().to_vec();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build_node(&points, &mut order, 0, points.len(), &mut nodes);
        Ok(Self {
            points,
            order,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &Point3<f64> {
        &self.points[index]
    }

    pub fn nearest(&self, query: &Point3<f64>) -> Neighbor {
        let mut best = [Neighbor {
            index: usize::MAX,
            dist_sq: f64::INFINITY,
        }];
        let mut found = 0;
        self.search(0, query, &mut best, &mut found);
        best[0]
    }

    /// The `k` nearest points, sorted nearest first. Returns fewer than `k`
    /// only if the cloud is smaller than `k`.
    pub fn knn(&self, query: &Point3<f64>, k: usize) -> Vec<Neighbor> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut best = vec![
            Neighbor {
                index: usize::MAX,
                dist_sq: f64::INFINITY,
            };
            k
        ];
        let mut found = 0;
        self.search(0, query, &mut best, &mut found);
        best
    }

    fn search(&self, node: usize, q: &Point3<f64>, best: &mut [Neighbor], found: &mut usize) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[start..end] {
                    let cand = Neighbor {
                        index: idx,
                        dist_sq: (self.points[idx] - q).norm_squared(),
                    };
                    insert_sorted(best, found, cand);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best, found);
                let worst = best[best.len() - 1].dist_sq;
                // equal distances must still be visited for the index tie-break
                if *found < best.len() || diff * diff <= worst {
                    self.search(far, q, best, found);
                }
            }
        }
    }
}

fn insert_sorted(best: &mut [Neighbor], found: &mut usize, cand: Neighbor) {
    let k = best.len();
    if *found == k && !cand.precedes(&best[k - 1]) {
        return;
    }
    let mut pos = (*found).min(k - 1);
    if *found < k {
        *found += 1;
    }
    while pos > 0 && cand.precedes(&best[pos - 1]) {
        best[pos] = best[pos - 1];
        pos -= 1;
    }
    best[pos] = cand;
}

fn build_node(
    points: &[Point3<f64>],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in &order[start..end] {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    if hi[axis] - lo[axis] == 0.0 {
        // all points coincide
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mid = (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[order[start + mid]][axis];
    // left holds coords <= value, right holds coords >= value
    nodes.push(Node::Leaf { start, end });
    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn brute_knn(points: &[Point3<f64>], q: &Point3<f64>, k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> = points
            .iter()
            .enumerate()
            .map(|(index, p)| Neighbor {
                index,
                dist_sq: (p - q).norm_squared(),
            })
            .collect();
        all.sort_by(|a, b| a.dist_sq.total_cmp(&b.dist_sq).then(a.index.cmp(&b.index)));
        all.truncate(k);
        all
    }

    #[test]
    fn empty_cloud_rejected() {
        assert!(matches!(NeighborIndex::build(&PointCloud::empty()), Err(Error::EmptyCloud)));
    }

    #[test]
    fn single_point_answers_every_query() {
        let idx = NeighborIndex::build(&PointCloud::from_xyz(&[[1.0, 2.0, 3.0]]).unwrap()).unwrap();
        let n = idx.nearest(&Point3::new(-50.0, 7.0, 0.0));
        assert_eq!(n.index, 0);
        assert_eq!(idx.knn(&Point3::origin(), 5).len(), 1);
    }

    #[test]
    fn query_on_indexed_point_has_zero_distance() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [2.0, 0.5, -1.0]]).unwrap();
        let idx = NeighborIndex::build(&c).unwrap();
        let n = idx.nearest(&c[2]);
        assert_eq!((n.index, n.dist_sq), (2, 0.0));
    }

    #[test]
    fn ties_break_by_lowest_index() {
        // many duplicates across leaves
        let mut xyz = vec![[5.0, 5.0, 5.0]; 40];
        xyz.extend((0..40).map(|i| [i as f64, 0.0, 0.0]));
        let c = PointCloud::from_xyz(&xyz).unwrap();
        let idx = NeighborIndex::build(&c).unwrap();
        let got: Vec<usize> = idx.knn(&Point3::new(5.0, 5.0, 5.0), 3).iter().map(|n| n.index).collect();
        assert_eq!(got, vec![0, 1, 2]);
        // equidistant from x=1 and x=3
        let n = idx.nearest(&Point3::new(2.0, 0.0, 0.0));
        assert_eq!(n.index, 42);
        let two = idx.knn(&Point3::new(2.5, 0.0, 0.0), 2);
        assert_eq!((two[0].index, two[1].index), (42, 43));
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Point3<f64>> = (0..1000)
            .map(|_| Point3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(0.0..3.0)))
            .collect();
        let idx = NeighborIndex::build(&PointCloud::new(pts.clone()).unwrap()).unwrap();
        for _ in 0..100 {
            let q = Point3::new(rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0), rng.random_range(-1.0..4.0));
            assert_eq!(idx.nearest(&q), brute_knn(&pts, &q, 1)[0]);
            assert_eq!(idx.knn(&q, 7), brute_knn(&pts, &q, 7));
        }
    }
}
