//! Random tanh features with ridge-regularized least-squares output weights.
//!
//! Feature `j` is `tanh(w_j . x + b_j)`. Directions are uniform on the unit
//! sphere, scaled per axis by the box half-width and by a magnitude drawn
//! uniformly from `[0, scale]`; each hyperplane passes through a uniform
//! point of the box. A constant feature is always appended. Features are
//! drawn from one SplitMix64 stream, so the first `k` features of a larger
//! model coincide with a `k`-feature model.

use rayon::prelude::*;

use super::linalg::cholesky_solve;
use super::{FitReport, ModuleFunction, ModuleParams};
use crate::error::{Error, Result};
use crate::geometry::{par_max, AxisBox};
use crate::map::{check_dim, distance};
use crate::rng::SplitMix64;

pub const DEFAULT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureLimits {
    pub start_features: usize,
    pub max_features: usize,
    /// Upper bound of the per-feature slope magnitude, in box half-widths.
    pub scale: f64,
}

impl Default for FeatureLimits {
    fn default() -> Self {
        Self {
            start_features: 32,
            max_features: 512,
            scale: 12.0,
        }
    }
}

pub type Pair = (Vec<f64>, Vec<f64>);

/// Draws `count` feature directions and offsets for `region`.
pub fn draw_features(region: &AxisBox, count: usize, scale: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m = region.dim();
    let half: Vec<f64> = region
        .lo()
        .iter()
        .zip(region.hi())
        .map(|(a, b)| 0.5 * (b - a))
        .collect();
    let mut rng = SplitMix64::new(seed);
    let mut directions = Vec::with_capacity(count);
    let mut offsets = Vec::with_capacity(count);
    for _ in 0..count {
        let mut u: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
        let len = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let magnitude = scale * rng.next_f64();
        for (j, v) in u.iter_mut().enumerate() {
            *v = if half[j] > 0.0 {
                *v / len * magnitude / half[j]
            } else {
                0.0
            };
        }
        let b = -(0..m)
            .map(|j| u[j] * rng.uniform(region.lo()[j], region.hi()[j]))
            .sum::<f64>();
        directions.push(u);
        offsets.push(b);
    }
    (directions, offsets)
}

fn feature_row(directions: &[Vec<f64>], offsets: &[f64], x: &[f64]) -> Vec<f64> {
    let mut row: Vec<f64> = directions
        .iter()
        .zip(offsets)
        .map(|(w, b)| (w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b).tanh())
        .collect();
    row.push(1.0);
    row
}

pub(super) fn eval_features(
    directions: &[Vec<f64>],
    offsets: &[f64],
    weights: &[f64],
    dim_out: usize,
    x: &[f64],
) -> Vec<f64> {
    let row = feature_row(directions, offsets, x);
    let mut out = vec![0.0; dim_out];
    for (i, phi) in row.iter().enumerate() {
        for k in 0..dim_out {
            out[k] += phi * weights[i * dim_out + k];
        }
    }
    out
}

/// Solves the ridge problem for a fixed feature set. Weights are row-major,
/// `(features + 1) x dim_out`, the last row multiplying the constant feature.
pub fn solve_output_weights(
    directions: &[Vec<f64>],
    offsets: &[f64],
    train: &[Pair],
    dim_out: usize,
    ridge: f64,
) -> Result<Vec<f64>> {
    let p = directions.len() + 1;
    let rows: Vec<Vec<f64>> = train
        .par_iter()
        .map(|(x, _)| feature_row(directions, offsets, x))
        .collect();

    // Gram matrix and right-hand side accumulated in sample order.
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p * dim_out];
    gram.par_chunks_mut(p).enumerate().for_each(|(i, out)| {
        for row in &rows {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate().skip(i) {
                *o += ri * row[j];
            }
        }
    });
    for i in 0..p {
        for j in 0..i {
            gram[i * p + j] = gram[j * p + i];
        }
        gram[i * p + i] += ridge;
    }
    for (row, (_, y)) in rows.iter().zip(train) {
        for i in 0..p {
            for k in 0..dim_out {
                rhs[i * dim_out + k] += row[i] * y[k];
            }
        }
    }
    cholesky_solve(&mut gram, p, &rhs, dim_out)
}

/// Doubles the feature count until the held-out sup-error drops below
/// `0.9 * tolerance`. An empty `holdout` validates on `train`.
pub fn fit_random_features(
    train: &[Pair],
    holdout: &[Pair],
    region: &AxisBox,
    tolerance: f64,
    limits: &FeatureLimits,
    seed: u64,
    ridge: f64,
) -> Result<(ModuleFunction, FitReport)> {
    let first = train
        .first()
        .ok_or_else(|| Error::InvalidArgument("need at least one training pair".into()))?;
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument("ridge must be non-negative".into()));
    }
    let dim_in = region.dim();
    let dim_out = first.1.len();
    for (x, y) in train.iter().chain(holdout) {
        check_dim(dim_in, x.len())?;
        check_dim(dim_out, y.len())?;
    }
    let validation = if holdout.is_empty() { train } else { holdout };
    let goal = 0.9 * tolerance;

    let (all_dirs, all_offsets) = draw_features(region, limits.max_features.max(1), limits.scale, seed);
    let mut count = limits.start_features.clamp(1, limits.max_features.max(1));
    let mut attempts = 0;
    let mut best = f64::INFINITY;
    let mut best_size = 0;
    loop {
        attempts += 1;
        let directions = all_dirs[..count].to_vec();
        let offsets = all_offsets[..count].to_vec();
        let weights = solve_output_weights(&directions, &offsets, train, dim_out, ridge)?;
        let module = ModuleFunction::new(
            region.clone(),
            dim_out,
            ModuleParams::RandomFeatures {
                directions,
                offsets,
                weights,
                ridge,
            },
        );
        let err = par_max(validation, |(x, y)| Ok(distance(&module.evaluate(x)?, y)))?;
        if err < goal {
            return Ok((
                module,
                FitReport {
                    achieved_error: err,
                    size: count,
                    attempts,
                },
            ));
        }
        if err < best {
            best = err;
            best_size = count;
        }
        if count >= limits.max_features {
            break;
        }
        count = (2 * count).min(limits.max_features);
    }
    Err(Error::ToleranceUnreachable {
        tolerance,
        best_error: best,
        size: best_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{lattice_samples, make_box};

    fn pairs(region: &AxisBox, n: usize, f: impl Fn(f64) -> f64) -> Vec<Pair> {
        lattice_samples(region, n, 1 << 20)
            .unwrap()
            .points()
            .iter()
            .map(|x| (x.clone(), vec![f(x[0])]))
            .collect()
    }

    #[test]
    fn zero_function_gives_zero_weights() {
        let b = make_box(vec![0.0], vec![1.0]).unwrap();
        let train = pairs(&b, 50, |_| 0.0);
        let (m, r) = fit_random_features(&train, &[], &b, 0.1, &FeatureLimits::default(), 5, DEFAULT_RIDGE).unwrap();
        assert_eq!(r.achieved_error, 0.0);
        match &m.params {
            ModuleParams::RandomFeatures { weights, .. } => assert!(weights.iter().all(|w| *w == 0.0)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn identity_on_symmetric_interval() {
        let b = make_box(vec![-1.0], vec![1.0]).unwrap();
        let train = pairs(&b, 100, |x| x);
        let (m, r) = fit_random_features(&train, &[], &b, 0.05, &FeatureLimits::default(), 3, DEFAULT_RIDGE).unwrap();
        assert!(r.achieved_error < 0.05);
        // independent 10^3-point validation grid
        let worst = (0..1000)
            .map(|k| {
                let x = -1.0 + 2.0 * k as f64 / 999.0;
                (m.evaluate(&[x]).unwrap()[0] - x).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 0.05, "worst {worst}");
    }

    #[test]
    fn duplicated_points_without_ridge_are_singular() {
        let b = make_box(vec![0.0], vec![1.0]).unwrap();
        let train = vec![(vec![0.5], vec![1.0]), (vec![0.5], vec![1.0])];
        let err = fit_random_features(&train, &[], &b, 1e-12, &FeatureLimits::default(), 1, 0.0).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { .. }));
    }

    #[test]
    fn fits_are_bit_deterministic() {
        let b = make_box(vec![0.0], vec![1.0]).unwrap();
        let train = pairs(&b, 200, |x| (6.0 * x).sin());
        let limits = FeatureLimits::default();
        let a = fit_random_features(&train, &[], &b, 0.01, &limits, 9, DEFAULT_RIDGE).unwrap();
        let c = fit_random_features(&train, &[], &b, 0.01, &limits, 9, DEFAULT_RIDGE).unwrap();
        assert_eq!(a.0, c.0);
        assert_eq!(a.1, c.1);
    }

    #[test]
    fn nested_feature_draws() {
        let b = make_box(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let (d8, o8) = draw_features(&b, 8, 6.0, 4);
        let (d16, o16) = draw_features(&b, 16, 6.0, 4);
        assert_eq!(&d16[..8], &d8[..]);
        assert_eq!(&o16[..8], &o8[..]);
    }
}
