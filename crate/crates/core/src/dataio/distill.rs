use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sequence::relative_pose;
use super::FrameSequence;
use crate::geom::{NeighborIndex, RigidTransform};
use crate::geom::overlap_ratio_indexed;
use crate::{Error, Result};

/// Distance bin `[d1, d2]` between LiDAR centers plus an overlap ceiling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSpec {
    pub d1: f64,
    /// May be `f64::INFINITY`.
    pub d2: f64,
    pub overlap_max: f64,
}

impl PairSpec {
    pub fn new(d1: f64, d2: f64, overlap_max: f64) -> Result<Self> {
        let spec = Self { d1, d2, overlap_max };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d1 >= 0.0 && self.d1 < self.d2) || self.d2.is_nan() {
            return Err(Error::InvalidConfig(format!("distance bin [{}, {}] is invalid", self.d1, self.d2)));
        }
        if !(self.overlap_max > 0.0 && self.overlap_max <= 1.0) {
            return Err(Error::InvalidConfig(format!("overlap_max {} not in (0, 1]", self.overlap_max)));
        }
        Ok(())
    }

    pub fn contains_distance(&self, d: f64) -> bool {
        self.d1 <= d && d <= self.d2
    }
}

/// Where pairs come from: temporally separated frames of one vehicle, or
/// frames of two vehicles.
#[derive(Debug, Clone, Copy)]
pub enum PairSource<'a> {
    Single(&'a FrameSequence),
    Cross(&'a FrameSequence, &'a FrameSequence),
}

impl<'a> PairSource<'a> {
    pub fn first(&self) -> &'a FrameSequence {
        match *self {
            PairSource::Single(s) | PairSource::Cross(s, _) => s,
        }
    }

    pub fn second(&self) -> &'a FrameSequence {
        match *self {
            PairSource::Single(s) | PairSource::Cross(_, s) => s,
        }
    }

    /// Ground truth mapping frame `i` of the first sequence into frame `j`
    /// of the second.
    pub fn gt_transform(&self, i: usize, j: usize) -> RigidTransform {
        relative_pose(&self.first().frames()[i].pose, &self.second().frames()[j].pose)
    }

    pub fn center_distance(&self, i: usize, j: usize) -> f64 {
        (self.first().frames()[i].origin() - self.second().frames()[j].origin()).norm()
    }
}

/// A registration pair `(i, j)` with its sensor distance and overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistilledPair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub overlap: f64,
}

/// Keeps pairs whose LiDAR-center distance lies in `[d1, d2]` and whose
/// symmetric overlap (radius `tau`) is at most `overlap_max`.
///
/// For a single sequence only `i < j` is emitted; the predicates are
/// symmetric so `(j, i)` qualifies exactly when `(i, j)` does.
pub fn distill_pairs(source: PairSource<'_>, spec: &PairSpec, tau: f64) -> Result<Vec<DistilledPair>> {
    spec.validate()?;
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig("overlap radius must be positive".into()));
    }
    let (a, b) = (source.first(), source.second());
    let single = matches!(source, PairSource::Single(_));
    let candidates: Vec<(usize, usize, f64)> = (0..a.len())
        .flat_map(|i| {
            let start = if single { i + 1 } else { 0 };
            (start..b.len()).map(move |j| (i, j))
        })
        .map(|(i, j)| (i, j, source.center_distance(i, j)))
        .filter(|&(_, _, d)| spec.contains_distance(d))
        .collect();

    let index_of = |seq: &FrameSequence, used: Vec<bool>| -> Vec<Option<NeighborIndex>> {
        seq.frames()
            .par_iter()
            .zip(used)
            .map(|(f, u)| if u { NeighborIndex::build(&f.cloud).ok() } else { None })
            .collect()
    };
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    for &(i, j, _) in &candidates {
        used_a[i] = true;
        used_b[j] = true;
    }
    let idx_a = if single {
        let merged = used_a.iter().zip(&used_b).map(|(x, y)| *x || *y).collect();
        index_of(a, merged)
    } else {
        index_of(a, used_a)
    };
    let idx_b_owned;
    let idx_b = if single {
        &idx_a
    } else {
        idx_b_owned = index_of(b, used_b);
        &idx_b_owned
    };

    Ok(candidates
        .par_iter()
        .filter_map(|&(i, j, distance)| {
            // empty frames cannot overlap anything
            let (ia, ib) = (idx_a[i].as_ref()?, idx_b[j].as_ref()?);
            let overlap = overlap_ratio_indexed(
                &a.frames()[i].cloud,
                ia,
                &b.frames()[j].cloud,
                ib,
                &source.gt_transform(i, j),
                tau,
            );
            (overlap <= spec.overlap_max).then_some(DistilledPair {
                i,
                j,
                distance,
                overlap,
            })
        })
        .collect())
}

/// Fails unless every pair indexes frames that exist in `source`.
pub fn check_pairs(source: PairSource<'_>, pairs: &[DistilledPair]) -> Result<()> {
    let (na, nb) = (source.first().len(), source.second().len());
    match pairs.iter().find(|p| p.i >= na || p.j >= nb) {
        Some(p) => Err(Error::InvalidConfig(format!(
            "pair ({}, {}) is out of range for sequences of {na} and {nb} frames",
            p.i, p.j
        ))),
        None => Ok(()),
    }
}

/// CSV with header `i,j,distance,overlap`.
pub fn write_pair_list<W: Write>(out: W, pairs: &[DistilledPair]) -> Result<()> {
    let err = |e: csv::Error| Error::MalformedFile(e.to_string());
    // explicit header so an empty list still reads back
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["i", "j", "distance", "overlap"]).map_err(err)?;
    for p in pairs {
        w.serialize(p).map_err(err)?;
    }
    w.flush().map_err(|e| Error::MalformedFile(e.to_string()))
}

pub fn read_pair_list<R: Read>(input: R) -> Result<Vec<DistilledPair>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers().map_err(|e| Error::MalformedFile(format!("pair list: {e}")))?;
    if headers != vec!["i", "j", "distance", "overlap"] {
        return Err(Error::MalformedFile(format!("pair list header {headers:?}")));
    }
    let mut pairs = Vec::new();
    for (n, row) in reader.deserialize::<DistilledPair>().enumerate() {
        let p = row.map_err(|e| Error::MalformedFile(format!("pair list row {}: {e}", n + 1)))?;
        if !(p.distance.is_finite() && p.distance >= 0.0 && (0.0..=1.0).contains(&p.overlap)) {
            return Err(Error::MalformedFile(format!("pair list row {}: distance or overlap out of range", n + 1)));
        }
        pairs.push(p);
    }
    Ok(pairs)
}
