use nalgebra::Point3;

use crate::{Error, Result};

/// An ordered set of 3D points in meters. Every coordinate is finite.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3<f64>>,
}

impl PointCloud {
    /// Builds a cloud, rejecting NaN or infinite coordinates.
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinitePoint(i));
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a cloud from `[x, y, z]` triples.
    pub fn from_xyz(xyz: &[[f64; 3]]) -> Result<Self> {
        Self::new(xyz.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect())
    }

    pub(crate) fn from_points_unchecked(points: Vec<Point3<f64>>) -> Self {
        debug_assert!(points.iter().all(|p| p.coords.iter().all(|c| c.is_finite())));
        Self { points }
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3<f64>> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Point3<f64>> {
        self.points.get(i)
    }

    /// Keeps the points at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        Self::from_points_unchecked(indices.iter().map(|&i| self.points[i]).collect())
    }

    /// Keeps points satisfying `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&Point3<f64>) -> bool) -> PointCloud {
        Self::from_points_unchecked(self.points.iter().copied().filter(|p| keep(p)).collect())
    }

    /// Concatenates clouds in order.
    pub fn concat<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>) -> PointCloud {
        let mut points = Vec::new();
        for c in clouds {
            points.extend_from_slice(&c.points);
        }
        Self::from_points_unchecked(points)
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.points.len() as f64))
    }
}

impl std::ops::Index<usize> for PointCloud {
    type Output = Point3<f64>;

    fn index(&self, i: usize) -> &Point3<f64> {
        &self.points[i]
    }
}

/// Index pairs `(a, b)` between two clouds, optionally weighted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Correspondences {
    pairs: Vec<(usize, usize)>,
    weights: Option<Vec<f64>>,
}

impl Correspondences {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Self {
            pairs,
            weights: None,
        }
    }

    /// Weighted correspondences. Weights must be nonnegative, finite and not all zero.
    pub fn weighted(pairs: Vec<(usize, usize)>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != pairs.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} pairs",
                weights.len(),
                pairs.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("weights must be finite and nonnegative".into()));
        }
        if !weights.is_empty() && weights.iter().all(|w| *w == 0.0) {
            return Err(Error::InvalidConfig("weights are all zero".into()));
        }
        Ok(Self {
            pairs,
            weights: Some(weights),
        })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Checks every index against the cloud sizes.
    pub fn validate(&self, len_a: usize, len_b: usize) -> Result<()> {
        match self.pairs.iter().find(|(a, b)| *a >= len_a || *b >= len_b) {
            Some((a, b)) => Err(Error::ShapeMismatch(format!(
                "correspondence ({a}, {b}) out of range for clouds of {len_a} and {len_b} points"
            ))),
            None => Ok(()),
        }
    }

    /// Swaps the roles of the two clouds.
    pub fn transposed(&self) -> Self {
        Self {
            pairs: self.pairs.iter().map(|&(a, b)| (b, a)).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn subset(&self, keep: &[usize]) -> Self {
        Self {
            pairs: keep.iter().map(|&k| self.pairs[k]).collect(),
            weights: self
                .weights
                .as_ref()
                .map(|w| keep.iter().map(|&k| w[k]).collect()),
        }
    }
}
