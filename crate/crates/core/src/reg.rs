//! Online registration from features: mutual nearest-neighbor matching,
//! RANSAC over Kabsch hypotheses, and success criteria.

use std::io::{Read, Write};

use nalgebra::Point3;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{kabsch, kabsch_points, rre, rte, Correspondences, PointCloud, RigidTransform};
use crate::model::{feature_dist_sq, FeatureMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Criterion {
    pub name: &'static str,
    /// Degrees.
    pub max_rre: f64,
    /// Meters.
    pub max_rte: f64,
}

impl Criterion {
    pub const LOOSE: Criterion = Criterion { name: "loose", max_rre: 5.0, max_rte: 2.0 };
    pub const NORMAL: Criterion = Criterion { name: "normal", max_rre: 1.5, max_rte: 0.6 };
    pub const STRICT: Criterion = Criterion { name: "strict", max_rre: 0.5, max_rte: 0.3 };
    pub const ALL: [Criterion; 3] = [Self::LOOSE, Self::NORMAL, Self::STRICT];

    pub fn by_name(name: &str) -> Option<Criterion> {
        Self::ALL.into_iter().find(|c| c.name == name)
    }

    pub fn accepts(&self, rre: f64, rte: f64) -> bool {
        rre <= self.max_rre && rte <= self.max_rte
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub transform: RigidTransform,
    pub rre: f64,
    pub rte: f64,
    pub inlier_count: usize,
    /// Success under loose, normal, strict.
    pub success: [bool; 3],
}

impl RegistrationResult {
    pub fn succeeds(&self, c: &Criterion) -> bool {
        c.accepts(self.rre, self.rte)
    }
}

pub fn evaluate(estimate: &RigidTransform, gt: &RigidTransform, inlier_count: usize) -> RegistrationResult {
    let e_r = rre(estimate.rotation(), gt.rotation());
    let e_t = rte(estimate.translation(), gt.translation());
    RegistrationResult {
        transform: estimate.clone(),
        rre: e_r,
        rte: e_t,
        inlier_count,
        success: Criterion::ALL.map(|c| c.accepts(e_r, e_t)),
    }
}

pub fn registration_recall(results: &[RegistrationResult], c: &Criterion) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let hits = results.iter().filter(|r| r.succeeds(c)).count();
    Ok(hits as f64 / results.len() as f64)
}

fn nearest_rows(query: &FeatureMap, target: &FeatureMap) -> Vec<usize> {
    (0..query.len())
        .into_par_iter()
        .map(|i| {
            let q = query.row(i);
            let mut best = (0, f64::INFINITY);
            for j in 0..target.len() {
                let d = feature_dist_sq(q, target.row(j));
                if d < best.1 {
                    best = (j, d);
                }
            }
            best.0
        })
        .collect()
}

/// Mutual nearest neighbors in feature space, sorted by the A index.
pub fn match_features(fa: &FeatureMap, fb: &FeatureMap) -> Result<Correspondences> {
    if fa.is_empty() || fb.is_empty() {
        return Err(Error::EmptyFeatureMap);
    }
    if fa.dim() != fb.dim() {
        return Err(Error::ShapeMismatch(format!("feature widths {} and {}", fa.dim(), fb.dim())));
    }
    let ab = nearest_rows(fa, fb);
    let ba = nearest_rows(fb, fa);
    let pairs = ab
        .iter()
        .enumerate()
        .filter(|&(i, &j)| ba[j] == i)
        .map(|(i, &j)| (i, j))
        .collect();
    Ok(Correspondences::new(pairs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Residual bound for an inlier, meters.
    pub inlier_threshold: f64,
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 50_000,
            inlier_threshold: 0.3,
            sample_size: 3,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || !(self.inlier_threshold > 0.0) || self.sample_size < 3 {
            return Err(Error::InvalidConfig(
                "RANSAC needs iterations ≥ 1, threshold > 0, sample size ≥ 3".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome {
    pub transform: RigidTransform,
    pub inlier_count: usize,
    /// Indices into the correspondence list.
    pub inliers: Vec<usize>,
}

fn inliers_of(t: &RigidTransform, src: &[Point3<f64>], dst: &[Point3<f64>], thr_sq: f64) -> Vec<usize> {
    (0..src.len())
        .filter(|&k| (t.apply(&src[k]) - dst[k]).norm_squared() < thr_sq)
        .collect()
}

/// Best-of-`iterations` minimal-sample Kabsch fits scored by inlier count,
/// refit on the winning inlier set. Hypothesis `h` draws from stream `h` of
/// the seeded generator, so the result does not depend on thread scheduling.
pub fn ransac_register(
    corr: &Correspondences,
    a: &PointCloud,
    b: &PointCloud,
    cfg: &RansacConfig,
) -> Result<RansacOutcome> {
    cfg.validate()?;
    if corr.len() < cfg.sample_size {
        return Err(Error::TooFewCorrespondences {
            needed: cfg.sample_size,
            got: corr.len(),
        });
    }
    corr.validate(a.len(), b.len())?;
    let src: Vec<Point3<f64>> = corr.pairs().iter().map(|&(i, _)| a[i]).collect();
    let dst: Vec<Point3<f64>> = corr.pairs().iter().map(|&(_, j)| b[j]).collect();
    let thr_sq = cfg.inlier_threshold * cfg.inlier_threshold;

    let score = |h: usize| -> Option<(usize, usize, RigidTransform)> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(h as u64);
        let pick = sample(&mut rng, src.len(), cfg.sample_size);
        let s: Vec<_> = pick.iter().map(|k| src[k]).collect();
        let d: Vec<_> = pick.iter().map(|k| dst[k]).collect();
        let t = kabsch_points(&s, &d, None).ok()?;
        let count = (0..src.len())
            .filter(|&k| (t.apply(&src[k]) - dst[k]).norm_squared() < thr_sq)
            .count();
        Some((count, h, t))
    };
    let better = |x: &(usize, usize, RigidTransform), y: &(usize, usize, RigidTransform)| {
        x.0 > y.0 || (x.0 == y.0 && x.1 < y.1)
    };
    let best = (0..cfg.iterations)
        .into_par_iter()
        .filter_map(score)
        .reduce_with(|x, y| if better(&y, &x) { y } else { x })
        .ok_or(Error::DegenerateGeometry("every RANSAC sample was degenerate"))?;

    let hypothesis = best.2;
    let inliers = inliers_of(&hypothesis, &src, &dst, thr_sq);
    let transform = if inliers.len() >= 3 {
        let refit = kabsch(&corr.subset(&inliers), a, b);
        refit.unwrap_or(hypothesis)
    } else {
        hypothesis
    };
    Ok(RansacOutcome {
        transform,
        inlier_count: inliers.len(),
        inliers,
    })
}

/// One exported registration record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub overlap: f64,
    pub rre: f64,
    pub rte: f64,
    pub inliers: usize,
    pub loose: bool,
    pub normal: bool,
    pub strict: bool,
}

impl PairRecord {
    pub fn new(i: usize, j: usize, distance: f64, overlap: f64, r: &RegistrationResult) -> Self {
        Self {
            i,
            j,
            distance,
            overlap,
            rre: r.rre,
            rte: r.rte,
            inliers: r.inlier_count,
            loose: r.success[0],
            normal: r.success[1],
            strict: r.success[2],
        }
    }

    pub fn succeeds(&self, c: &Criterion) -> bool {
        c.accepts(self.rre, self.rte)
    }
}

pub fn write_records<W: Write>(out: W, records: &[PairRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::MalformedFile(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::MalformedFile(e.to_string()))?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<PairRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::MalformedFile(e.to_string())))
        .collect()
}

/// Per-criterion summary; means are NaN when there is nothing to average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub criterion: String,
    pub max_rre: f64,
    pub max_rte: f64,
    pub pairs: usize,
    pub successes: usize,
    pub recall: f64,
    pub mean_rre_success: f64,
    pub mean_rte_success: f64,
    pub mean_rre_all: f64,
    pub mean_rte_all: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn summarize(records: &[PairRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::EmptyResults);
    }
    Ok(Criterion::ALL
        .iter()
        .map(|c| {
            let ok: Vec<&PairRecord> = records.iter().filter(|r| r.succeeds(c)).collect();
            SummaryRow {
                criterion: c.name.to_string(),
                max_rre: c.max_rre,
                max_rte: c.max_rte,
                pairs: records.len(),
                successes: ok.len(),
                recall: ok.len() as f64 / records.len() as f64,
                mean_rre_success: mean(ok.iter().map(|r| r.rre)),
                mean_rte_success: mean(ok.iter().map(|r| r.rte)),
                mean_rre_all: mean(records.iter().map(|r| r.rre)),
                mean_rte_all: mean(records.iter().map(|r| r.rte)),
            }
        })
        .collect())
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::MalformedFile(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::MalformedFile(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vector3;

    fn with_errors(rre_deg: f64, rte_m: f64) -> RegistrationResult {
        let gt = RigidTransform::identity();
        let est = RigidTransform::from_axis_angle(
            &Vector3::z(),
            rre_deg.to_radians(),
            Vector3::new(rte_m, 0.0, 0.0),
        );
        evaluate(&est, &gt, 0)
    }

    #[test]
    fn criteria_examples() {
        let r = evaluate(&RigidTransform::identity(), &RigidTransform::identity(), 5);
        assert_eq!((r.rre, r.rte, r.success), (0.0, 0.0, [true; 3]));
        assert_eq!(with_errors(1.0, 0.5).success, [true, true, false]);
        assert_eq!(with_errors(1.0, 0.7).success, [true, false, false]);
    }

    #[test]
    fn recall_counts() {
        let ok = with_errors(0.1, 0.1);
        let bad = with_errors(10.0, 5.0);
        let c = Criterion::LOOSE;
        assert_eq!(registration_recall(&[ok.clone(), ok.clone()], &c).unwrap(), 1.0);
        let mixed = [ok, bad.clone(), bad.clone(), bad];
        assert_eq!(registration_recall(&mixed, &c).unwrap(), 0.25);
        assert!(matches!(registration_recall(&[], &c), Err(Error::EmptyResults)));
    }

    #[test]
    fn identical_distinct_features_match_identity() {
        let f = FeatureMap::from_rows(2, (0..20).map(|v| v as f64 * 0.37).collect()).unwrap();
        let m = match_features(&f, &f).unwrap();
        assert_eq!(m.pairs(), (0..10).map(|i| (i, i)).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn records_round_trip() {
        let r = PairRecord::new(3, 9, 12.5, 0.25, &with_errors(1.0, 0.5));
        let mut buf = Vec::new();
        write_records(&mut buf, std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,j,distance,overlap,rre,rte,inliers,loose,normal,strict\n"));
        assert_eq!(read_records(buf.as_slice()).unwrap(), vec![r]);
    }
}
