//! Piecewise-multilinear interpolation on a uniform lattice.

use rayon::prelude::*;

use super::{FitReport, ModuleFunction, ModuleParams};
use crate::error::{Error, Result};
use crate::geometry::{axis_nodes, lattice_samples, par_max, AxisBox};
use crate::map::{check_dim, distance, VectorMap};

/// Node positions within this distance (in cell units) of a node snap onto it.
const NODE_SNAP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridLimits {
    pub max_per_axis: usize,
    pub validation_per_axis: usize,
    pub point_cap: usize,
}

impl Default for GridLimits {
    fn default() -> Self {
        Self {
            max_per_axis: 1025,
            validation_per_axis: 65,
            point_cap: crate::geometry::DEFAULT_POINT_CAP,
        }
    }
}

/// Samples `target` on a `per_axis`-node lattice of `region`.
pub fn grid_interpolant<M: VectorMap + ?Sized>(
    target: &M,
    region: &AxisBox,
    per_axis: usize,
    point_cap: usize,
) -> Result<ModuleFunction> {
    check_dim(region.dim(), target.dim_in())?;
    if per_axis < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 nodes per axis".into()));
    }
    let nodes = lattice_samples(region, per_axis, point_cap)?;
    let rows: Vec<Vec<f64>> = nodes
        .points()
        .par_iter()
        .map(|x| target.eval(x))
        .collect::<Result<_>>()?;
    let dim_out = target.dim_out();
    let mut values = Vec::with_capacity(rows.len() * dim_out);
    for r in rows {
        check_dim(dim_out, r.len())?;
        values.extend(r);
    }
    Ok(ModuleFunction::new(
        region.clone(),
        dim_out,
        ModuleParams::GridInterpolant {
            nodes_per_axis: vec![per_axis; region.dim()],
            values,
        },
    ))
}

/// Doubles the per-axis node count (3, 5, 9, 17, ...) until the sampled
/// sup-error on the validation lattice drops below `0.9 * tolerance`.
pub fn fit_grid_interpolant<M: VectorMap + ?Sized>(
    target: &M,
    region: &AxisBox,
    tolerance: f64,
    limits: &GridLimits,
) -> Result<(ModuleFunction, FitReport)> {
    fit_grid_with(target, region, tolerance, limits, |module, per_axis| {
        let check_per_axis = limits.validation_per_axis.max(4 * (per_axis - 1) + 1);
        let validation = lattice_samples(region, check_per_axis, limits.point_cap)?;
        par_max(validation.points(), |x| {
            Ok(distance(&module.evaluate(x)?, &target.eval(x)?))
        })
    })
}

/// Same doubling, but the error is checked on `(z, y)` anchor pairs instead
/// of a lattice. Suits targets that are only meaningful near the anchors.
pub fn fit_grid_to_anchors<M: VectorMap + ?Sized>(
    target: &M,
    region: &AxisBox,
    tolerance: f64,
    limits: &GridLimits,
    anchors: &[(Vec<f64>, Vec<f64>)],
) -> Result<(ModuleFunction, FitReport)> {
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("anchor check needs at least one anchor".into()));
    }
    fit_grid_with(target, region, tolerance, limits, |module, _| {
        par_max(anchors, |(z, y)| Ok(distance(&module.evaluate(z)?, y)))
    })
}

fn fit_grid_with<M, E>(
    target: &M,
    region: &AxisBox,
    tolerance: f64,
    limits: &GridLimits,
    check: E,
) -> Result<(ModuleFunction, FitReport)>
where
    M: VectorMap + ?Sized,
    E: Fn(&ModuleFunction, usize) -> Result<f64>,
{
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let goal = 0.9 * tolerance;
    let mut per_axis = 3usize;
    let mut attempts = 0;
    let mut best = f64::INFINITY;
    let mut best_size = 0;
    while per_axis <= limits.max_per_axis.max(2) {
        attempts += 1;
        let module = grid_interpolant(target, region, per_axis, limits.point_cap)?;
        let err = check(&module, per_axis)?;
        let size = module.size();
        if err < goal {
            return Ok((
                module,
                FitReport {
                    achieved_error: err,
                    size,
                    attempts,
                },
            ));
        }
        if err < best {
            best = err;
            best_size = size;
        }
        per_axis = 2 * per_axis - 1;
    }
    Err(Error::ToleranceUnreachable {
        tolerance,
        best_error: best,
        size: best_size,
    })
}

/// Multilinear interpolation with coordinates clamped into `region`.
pub(super) fn eval_grid(
    region: &AxisBox,
    nodes_per_axis: &[usize],
    values: &[f64],
    dim_out: usize,
    x: &[f64],
) -> Vec<f64> {
    let m = region.dim();
    let mut base = vec![0usize; m];
    let mut frac = vec![0.0f64; m];
    for j in 0..m {
        let n = nodes_per_axis[j];
        let (lo, hi) = (region.lo()[j], region.hi()[j]);
        if n < 2 || hi <= lo {
            continue;
        }
        let last = (n - 1) as f64;
        let mut s = (x[j].clamp(lo, hi) - lo) / (hi - lo) * last;
        let r = s.round();
        if (s - r).abs() <= NODE_SNAP {
            s = r;
        }
        let cell = (s.floor() as usize).min(n - 2);
        base[j] = cell;
        frac[j] = s - cell as f64;
    }

    let mut strides = vec![1usize; m];
    for j in (0..m.saturating_sub(1)).rev() {
        strides[j] = strides[j + 1] * nodes_per_axis[j + 1];
    }

    let mut out = vec![0.0; dim_out];
    for corner in 0..(1usize << m) {
        let mut w = 1.0;
        let mut flat = 0;
        for j in 0..m {
            let upper = corner >> (m - 1 - j) & 1 == 1;
            let f = frac[j];
            if upper {
                if f == 0.0 {
                    w = 0.0;
                    break;
                }
                w *= f;
                flat += (base[j] + 1) * strides[j];
            } else {
                w *= 1.0 - f;
                flat += base[j] * strides[j];
            }
        }
        if w == 0.0 {
            continue;
        }
        let v = &values[flat * dim_out..(flat + 1) * dim_out];
        for k in 0..dim_out {
            out[k] += w * v[k];
        }
    }
    out
}

/// Uniform node coordinates along each axis (exposed for tests).
pub fn grid_nodes(region: &AxisBox, per_axis: usize) -> Vec<Vec<f64>> {
    (0..region.dim())
        .map(|j| axis_nodes(region.lo()[j], region.hi()[j], per_axis))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_box;
    use crate::map::FnMap;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn unit() -> AxisBox {
        make_box(vec![0.0], vec![1.0]).unwrap()
    }

    /// Brute-force max |interp - x^2| on `count` evenly spaced points.
    fn brute_force_square_error(module: &ModuleFunction, count: usize) -> f64 {
        (0..count)
            .map(|k| {
                let x = k as f64 / (count - 1) as f64;
                (module.evaluate(&[x]).unwrap()[0] - x * x).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_fits_exactly_with_three_nodes() {
        let id = FnMap::new(1, 1, |x: &[f64]| x.to_vec());
        let (m, r) = fit_grid_interpolant(&id, &unit(), 1e-6, &GridLimits::default()).unwrap();
        assert_eq!(r.size, 3);
        assert_eq!(r.attempts, 1);
        assert!(r.achieved_error <= 1e-12);
        assert!((m.evaluate(&[0.3]).unwrap()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn square_to_one_percent() {
        // Brute-force scans: 5 nodes leave 0.015625 (above 0.9 * 0.01), 9 nodes leave 0.00390625.
        let sq = FnMap::new(1, 1, |x: &[f64]| vec![x[0] * x[0]]);
        let five = grid_interpolant(&sq, &unit(), 5, 1 << 20).unwrap();
        assert!((brute_force_square_error(&five, 10_001) - 0.015625).abs() < 1e-12);

        let (m, r) = fit_grid_interpolant(&sq, &unit(), 0.01, &GridLimits::default()).unwrap();
        assert_eq!(r.size, 9);
        assert_eq!(r.attempts, 3);
        let scan = brute_force_square_error(&m, 10_001);
        assert!((scan - 0.00390625).abs() < 1e-12);
        assert!((r.achieved_error - scan).abs() < 1e-12);
    }

    #[test]
    fn fast_oscillation_is_unreachable() {
        let f = FnMap::new(1, 1, |x: &[f64]| vec![(50.0 * x[0]).sin()]);
        let limits = GridLimits {
            max_per_axis: 5,
            ..GridLimits::default()
        };
        let err = fit_grid_interpolant(&f, &unit(), 1e-9, &limits).unwrap_err();
        match err {
            Error::ToleranceUnreachable { best_error, .. } => assert!(best_error > 1e-3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clamps_outside_the_box() {
        let sq = FnMap::new(1, 1, |x: &[f64]| vec![x[0] * x[0]]);
        let m = grid_interpolant(&sq, &unit(), 9, 1 << 20).unwrap();
        assert_eq!(m.evaluate(&[2.0]).unwrap(), m.evaluate(&[1.0]).unwrap());
        assert_eq!(m.evaluate(&[-3.0]).unwrap(), m.evaluate(&[0.0]).unwrap());
    }

    #[test]
    fn reproduces_node_values_in_2d() {
        let b = make_box(vec![-1.0, 0.5], vec![2.0, 3.0]).unwrap();
        let f = FnMap::new(2, 2, |x: &[f64]| vec![(3.0 * x[0]).sin() * x[1], x[0].exp()]);
        let m = grid_interpolant(&f, &b, 7, 1 << 20).unwrap();
        let nodes = grid_nodes(&b, 7);
        for &a in &nodes[0] {
            for &c in &nodes[1] {
                let got = m.evaluate(&[a, c]).unwrap();
                let want = f.eval(&[a, c]).unwrap();
                assert!(distance(&got, &want) <= 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_axis_is_constant() {
        let b = make_box(vec![0.0, 2.0], vec![1.0, 2.0]).unwrap();
        let f = FnMap::new(2, 1, |x: &[f64]| vec![x[0] + x[1]]);
        let m = grid_interpolant(&f, &b, 3, 1 << 20).unwrap();
        assert!((m.evaluate(&[0.25, 5.0]).unwrap()[0] - 2.25).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn affine_targets_are_reproduced(
            a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
            n in 2usize..9, seed in any::<u64>(),
        ) {
            let region = make_box(vec![-1.0, 0.0], vec![1.0, 2.5]).unwrap();
            let f = FnMap::new(2, 1, move |x: &[f64]| vec![a * x[0] + b * x[1] + c]);
            let m = grid_interpolant(&f, &region, n, 1 << 20).unwrap();
            let mut rng = SplitMix64::new(seed);
            for _ in 0..50 {
                let x = [rng.uniform(-1.0, 1.0), rng.uniform(0.0, 2.5)];
                let got = m.evaluate(&x).unwrap()[0];
                prop_assert!((got - f.eval(&x).unwrap()[0]).abs() < 1e-10);
            }
        }
    }
}
