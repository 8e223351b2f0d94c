//! Compact domains, deterministic sample sets, image bounds and sampled
//! sup-norm distances.
//!
//! Every compact set in the library is an axis-aligned box. Suprema are
//! estimated on finite sample sets; the estimates are lower bounds of the
//! true suprema.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{check_dim, distance, VectorMap};
use crate::rng::SplitMix64;

/// Default cap on the number of points a lattice may contain.
pub const DEFAULT_POINT_CAP: usize = 1 << 22;

/// Axis-aligned compact box `[lo_1, hi_1] x ... x [lo_m, hi_m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::InvalidArgument("box must have at least one axis".into()));
        }
        check_dim(lo.len(), hi.len())?;
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("box bounds".into()));
        }
        if let Some(axis) = (0..lo.len()).find(|&j| lo[j] > hi[j]) {
            return Err(Error::InvertedBounds {
                axis,
                lo: lo[axis],
                hi: hi[axis],
            });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn diagonal(&self) -> f64 {
        distance(&self.lo, &self.hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Largest Euclidean norm attained on the box (attained at a corner).
    pub fn sup_norm(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| a.abs().max(b.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    /// The box grown by `pad` on every side.
    pub fn expanded(&self, pad: f64) -> Self {
        Self {
            lo: self.lo.iter().map(|v| v - pad).collect(),
            hi: self.hi.iter().map(|v| v + pad).collect(),
        }
    }

    /// Smallest box containing every point. Points must be nonempty and finite.
    pub fn bounding(points: &[Vec<f64>]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot bound an empty point list".into()))?;
        let mut lo = first.clone();
        let mut hi = first.clone();
        for (s, p) in points.iter().enumerate() {
            check_dim(lo.len(), p.len())?;
            for (j, &v) in p.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteImage {
                        sample: s,
                        coordinate: j,
                    });
                }
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        Ok(Self { lo, hi })
    }
}

/// Shorthand for [`AxisBox::new`].
pub fn make_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<AxisBox> {
    AxisBox::new(lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Lattice { per_axis: usize },
    Random { seed: u64 },
    Union(Vec<Provenance>),
}

/// Ordered, nonempty list of points drawn from a box.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    points: Vec<Vec<f64>>,
    provenance: Provenance,
}

impl SampleSet {
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Wraps an explicit point list (used for image clouds and tests).
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("sample set must be nonempty".into()));
        }
        let d = points[0].len();
        for p in &points {
            check_dim(d, p.len())?;
        }
        Ok(Self {
            points,
            provenance: Provenance::Union(Vec::new()),
        })
    }

    /// Concatenation, preserving order.
    pub fn union(&self, other: &SampleSet) -> SampleSet {
        let mut points = self.points.clone();
        points.extend(other.points.iter().cloned());
        SampleSet {
            points,
            provenance: Provenance::Union(vec![self.provenance.clone(), other.provenance.clone()]),
        }
    }
}

/// `per_axis^m` points on a uniform lattice, first coordinate varying slowest.
/// A single node per axis sits at the box midpoint.
pub fn lattice_samples(region: &AxisBox, per_axis: usize, cap: usize) -> Result<SampleSet> {
    if per_axis == 0 {
        return Err(Error::InvalidArgument("per_axis must be at least 1".into()));
    }
    let m = region.dim();
    let requested = (per_axis as u128).checked_pow(m as u32).unwrap_or(u128::MAX);
    if requested > cap as u128 {
        return Err(Error::BudgetExceeded { requested, cap });
    }
    let nodes: Vec<Vec<f64>> = (0..m)
        .map(|j| axis_nodes(region.lo[j], region.hi[j], per_axis))
        .collect();
    let total = requested as usize;
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; m];
    for _ in 0..total {
        points.push((0..m).map(|j| nodes[j][idx[j]]).collect());
        for j in (0..m).rev() {
            idx[j] += 1;
            if idx[j] < per_axis {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(SampleSet {
        points,
        provenance: Provenance::Lattice { per_axis },
    })
}

/// Equally spaced nodes on `[lo, hi]` including both endpoints.
pub(crate) fn axis_nodes(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let last = (count - 1) as f64;
    (0..count)
        .map(|k| {
            if k + 1 == count {
                hi
            } else {
                (lo + (hi - lo) * (k as f64 / last)).min(hi)
            }
        })
        .collect()
}

/// `count` points drawn uniformly from the box with SplitMix64 seeded by `seed`.
pub fn random_samples(region: &AxisBox, count: usize, seed: u64) -> Result<SampleSet> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let points = (0..count)
        .map(|_| {
            region
                .lo
                .iter()
                .zip(&region.hi)
                .map(|(&a, &b)| rng.uniform(a, b))
                .collect()
        })
        .collect();
    Ok(SampleSet {
        points,
        provenance: Provenance::Random { seed },
    })
}

/// Padded bounding box of a sampled image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageBounds {
    #[serde(rename = "box")]
    pub region: AxisBox,
    pub pad: f64,
}

/// Evaluates `f` on every sample in parallel, preserving sample order.
pub fn eval_all<M: VectorMap + ?Sized>(f: &M, samples: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    samples.par_iter().map(|x| f.eval(x)).collect()
}

pub fn image_bounds<M: VectorMap + ?Sized>(f: &M, samples: &SampleSet, pad: f64) -> Result<ImageBounds> {
    if pad.is_nan() || pad < 0.0 || !pad.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "pad must be finite and >= 0, got {pad}"
        )));
    }
    let images = eval_all(f, samples.points())?;
    image_bounds_of_points(&images, pad)
}

pub(crate) fn image_bounds_of_points(images: &[Vec<f64>], pad: f64) -> Result<ImageBounds> {
    let tight = AxisBox::bounding(images)?;
    Ok(ImageBounds {
        region: tight.expanded(pad),
        pad,
    })
}

/// Order-insensitive parallel max of a fallible per-item score (0 for empty input).
pub fn par_max<T, F>(items: &[T], score: F) -> Result<f64>
where
    T: Sync,
    F: Fn(&T) -> Result<f64> + Sync + Send,
{
    items.par_iter().map(score).try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Max over samples of the Euclidean distance between `a(x)` and `b(x)`.
pub fn sup_distance<A, B>(a: &A, b: &B, samples: &SampleSet) -> Result<f64>
where
    A: VectorMap + ?Sized,
    B: VectorMap + ?Sized,
{
    check_dim(a.dim_out(), b.dim_out())?;
    par_max(samples.points(), |x| {
        let ya = a.eval(x)?;
        let yb = b.eval(x)?;
        check_dim(ya.len(), yb.len())?;
        Ok(distance(&ya, &yb))
    })
}
