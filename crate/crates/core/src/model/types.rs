use nalgebra::{DMatrix, Point3, Vector3};

use crate::error::{Error, Result};
use crate::geom::PointCloud;

/// Per-point descriptors, one row per source point.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    /// Row-major `n × dim` values.
    pub fn from_rows(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map"));
        }
        Ok(Self { dim, data })
    }

    pub(crate) fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (n, dim) = m.shape();
        let mut data = Vec::with_capacity(n * dim);
        for r in 0..n {
            data.extend(m.row(r).iter());
        }
        Self { dim, data }
    }

    pub(crate) fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { dim: self.dim, data }
    }

    /// Applies `f ↦ Q·f` to every row, `Q` given as a `dim × dim` matrix.
    pub fn transform(&self, q: &DMatrix<f64>) -> Result<Self> {
        if q.shape() != (self.dim, self.dim) {
            return Err(Error::ShapeMismatch(format!(
                "transform {:?} for features of width {}",
                q.shape(),
                self.dim
            )));
        }
        Ok(Self::from_matrix(&(self.to_matrix() * q.transpose())))
    }
}

/// Squared Euclidean distance between two feature rows.
pub(crate) fn feature_dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `φ` offsets per source point.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSet {
    phi: usize,
    data: Vec<Vector3<f64>>,
}

impl OffsetSet {
    pub fn new(phi: usize, data: Vec<Vector3<f64>>) -> Result<Self> {
        if phi == 0 || data.len() % phi != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} offsets do not split into groups of {phi}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("offsets"));
        }
        Ok(Self { phi, data })
    }

    pub fn zeros(n: usize, phi: usize) -> Self {
        Self {
            phi,
            data: vec![Vector3::zeros(); n * phi],
        }
    }

    /// Rows of width `3φ` read as `φ` consecutive xyz segments.
    pub(crate) fn from_matrix(m: &DMatrix<f64>, phi: usize) -> Self {
        let n = m.nrows();
        let mut data = Vec::with_capacity(n * phi);
        for i in 0..n {
            for j in 0..phi {
                data.push(Vector3::new(m[(i, 3 * j)], m[(i, 3 * j + 1)], m[(i, 3 * j + 2)]));
            }
        }
        Self { phi, data }
    }

    pub fn phi(&self) -> usize {
        self.phi
    }

    /// Number of source points.
    pub fn len(&self) -> usize {
        self.data.len() / self.phi
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Vector3<f64> {
        self.data[i * self.phi + j]
    }

    /// All offsets, source-major.
    pub fn as_slice(&self) -> &[Vector3<f64>] {
        &self.data
    }
}

/// Fused reconstruction: point `(i, j)` is source point `i` plus its `j`-th offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedCloud {
    phi: usize,
    points: Vec<Point3<f64>>,
}

impl ReconstructedCloud {
    pub fn phi(&self) -> usize {
        self.phi
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(source index, slot)` of the flat point index.
    pub fn provenance(&self, flat: usize) -> (usize, usize) {
        (flat / self.phi, flat % self.phi)
    }

    pub fn to_cloud(&self) -> PointCloud {
        PointCloud::from_points_unchecked(self.points.clone())
    }
}

pub fn fuse(cloud: &PointCloud, offsets: &OffsetSet) -> Result<ReconstructedCloud> {
    if cloud.len() != offsets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} points but offsets for {}",
            cloud.len(),
            offsets.len()
        )));
    }
    let phi = offsets.phi();
    let mut points = Vec::with_capacity(cloud.len() * phi);
    for (i, p) in cloud.points().iter().enumerate() {
        for j in 0..phi {
            points.push(p + offsets.get(i, j));
        }
    }
    Ok(ReconstructedCloud { phi, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuse_single_point() {
        let c = PointCloud::from_xyz(&[[1.0, 1.0, 1.0]]).unwrap();
        let o = OffsetSet::new(1, vec![Vector3::new(0.1, 0.0, 0.0)]).unwrap();
        let r = fuse(&c, &o).unwrap();
        assert_eq!(r.points()[0], Point3::new(1.1, 1.0, 1.0));
    }

    #[test]
    fn zero_offsets_duplicate_points() {
        let c = PointCloud::from_xyz(&[[1.0, 2.0, 3.0], [-4.0, 0.5, 9.0]]).unwrap();
        let r = fuse(&c, &OffsetSet::zeros(2, 2)).unwrap();
        assert_eq!(r.len(), 4);
        for k in 0..4 {
            let (i, _) = r.provenance(k);
            assert_eq!(r.points()[k], c[i]);
        }
    }

    #[test]
    fn fuse_shape_mismatch() {
        let c = PointCloud::from_xyz(&[[0.0; 3]]).unwrap();
        assert!(matches!(
            fuse(&c, &OffsetSet::zeros(2, 1)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn feature_map_rejects_ragged() {
        assert!(FeatureMap::from_rows(3, vec![0.0; 7]).is_err());
        assert!(FeatureMap::from_rows(2, vec![f64::NAN, 0.0]).is_err());
    }
}
