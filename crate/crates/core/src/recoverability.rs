//! Target recoverability as a separation margin, and its repair.
//!
//! A map `g` keeps the targets of `f` recoverable when it never merges two
//! points that `f` separates. On a finite [`PairSet`] of pairs that are at
//! least `1/n_sep` apart and whose targets differ by at least `gamma`, the
//! margin is `min ||g(x1) - g(x2)||`; recoverability holds at level `tau`
//! when the margin is at least `tau`.
//!
//! Repair adds `lambda * psi` with `psi(x) = (x, 0, ..., 0) / L`,
//! `L = sup ||x|| + 1`. Since `||psi|| <= 1` the perturbation is at most
//! `lambda`, and a pair merged by `g` is separated by at least
//! `lambda / (L * n_sep)` afterwards.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{eval_all, SampleSet};
use crate::map::{check_dim, distance, VectorMap};
use crate::rng::SplitMix64;

/// Point sets larger than this are subsampled before enumerating pairs.
pub const MAX_PAIR_POINTS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pairs: Vec<(Vec<f64>, Vec<f64>)>,
    n_sep: u32,
    gamma: f64,
}

impl PairSet {
    /// Builds a pair set, checking both separation conditions against `f`.
    pub fn from_pairs<F: VectorMap + ?Sized>(
        pairs: Vec<(Vec<f64>, Vec<f64>)>,
        n_sep: u32,
        gamma: f64,
        f: &F,
    ) -> Result<Self> {
        validate_thresholds(n_sep, gamma)?;
        let sep = 1.0 / n_sep as f64;
        for (a, b) in &pairs {
            if distance(a, b) < sep {
                return Err(Error::InvalidArgument(format!("pair closer than 1/{n_sep}")));
            }
            if distance(&f.eval(a)?, &f.eval(b)?) < gamma {
                return Err(Error::InvalidArgument(format!(
                    "pair targets closer than gamma = {gamma}"
                )));
            }
        }
        Ok(Self { pairs, n_sep, gamma })
    }

    /// Pairs carried through a map; separation is not re-checked.
    pub(crate) fn transported(pairs: Vec<(Vec<f64>, Vec<f64>)>, n_sep: u32, gamma: f64) -> Self {
        Self { pairs, n_sep, gamma }
    }

    pub fn pairs(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.pairs
    }

    pub fn n_sep(&self) -> u32 {
        self.n_sep
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Smallest input distance over the stored pairs.
    pub fn min_separation(&self) -> f64 {
        self.pairs
            .iter()
            .map(|(a, b)| distance(a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn validate_thresholds(n_sep: u32, gamma: f64) -> Result<()> {
    if n_sep == 0 {
        return Err(Error::InvalidArgument("n_sep must be positive".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument("gamma must be positive".into()));
    }
    Ok(())
}

/// Uniform (seeded reservoir) sample of at most `max_pairs` pairs from
/// `samples x samples` with `||x1 - x2|| >= 1/n_sep` and `||f(x1) - f(x2)|| >= gamma`.
pub fn sample_separated_pairs<F: VectorMap + ?Sized>(
    samples: &SampleSet,
    f: &F,
    n_sep: u32,
    gamma: f64,
    max_pairs: usize,
    seed: u64,
) -> Result<PairSet> {
    validate_thresholds(n_sep, gamma)?;
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    if max_pairs == 0 {
        return Err(Error::InvalidArgument("max_pairs must be positive".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let points: Vec<Vec<f64>> = if samples.len() > MAX_PAIR_POINTS {
        // partial Fisher-Yates, then restore sample order
        let mut idx: Vec<usize> = (0..samples.len()).collect();
        for i in 0..MAX_PAIR_POINTS {
            let j = i + rng.below((idx.len() - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(MAX_PAIR_POINTS);
        idx.sort_unstable();
        idx.into_iter().map(|i| samples.points()[i].clone()).collect()
    } else {
        samples.points().to_vec()
    };
    let values = eval_all(f, &points)?;
    let sep = 1.0 / n_sep as f64;

    let mut reservoir: Vec<(usize, usize)> = Vec::with_capacity(max_pairs);
    let mut seen: u64 = 0;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            if distance(&points[i], &points[j]) < sep || distance(&values[i], &values[j]) < gamma {
                continue;
            }
            if reservoir.len() < max_pairs {
                reservoir.push((i, j));
            } else {
                let r = rng.below(seen + 1) as usize;
                if r < max_pairs {
                    reservoir[r] = (i, j);
                }
            }
            seen += 1;
        }
    }
    if reservoir.is_empty() {
        return Err(Error::NoPairsFound { n_sep, gamma });
    }
    Ok(PairSet {
        pairs: reservoir
            .into_iter()
            .map(|(i, j)| (points[i].clone(), points[j].clone()))
            .collect(),
        n_sep,
        gamma,
    })
}

/// `min ||g(x1) - g(x2)||` over the pair set.
pub fn tr_margin<G: VectorMap + ?Sized>(g: &G, pairs: &PairSet) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairSet);
    }
    pairs
        .pairs
        .par_iter()
        .map(|(a, b)| Ok(distance(&g.eval(a)?, &g.eval(b)?)))
        .try_reduce(|| f64::INFINITY, |p, q| Ok(p.min(q)))
}

/// `(x, 0, ..., 0) / l_norm` in `out_dim` coordinates.
pub fn psi_embed(point: &[f64], l_norm: f64, out_dim: usize) -> Result<Vec<f64>> {
    if !(l_norm > 0.0) {
        return Err(Error::InvalidArgument("l_norm must be positive".into()));
    }
    if out_dim < point.len() {
        return Err(Error::InvalidArgument(format!(
            "out_dim {out_dim} smaller than input dimension {}",
            point.len()
        )));
    }
    let mut v: Vec<f64> = point.iter().map(|x| x / l_norm).collect();
    v.resize(out_dim, 0.0);
    Ok(v)
}

/// `G_lambda = g + lambda * psi`.
#[derive(Debug, Clone)]
pub struct Perturbed<G> {
    pub base: G,
    pub lambda: f64,
    pub l_norm: f64,
}

impl<G: VectorMap> VectorMap for Perturbed<G> {
    fn dim_in(&self) -> usize {
        self.base.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.base.dim_out()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.base.eval(x)?;
        let psi = psi_embed(x, self.l_norm, y.len())?;
        for (a, p) in y.iter_mut().zip(psi) {
            *a += self.lambda * p;
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderStep {
    pub lambda: f64,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct RepairResult<G> {
    pub repaired: Perturbed<G>,
    pub lambda0: f64,
    pub l_norm: f64,
    pub margin_before: f64,
    pub margin_after: f64,
    pub ladder: Vec<LadderStep>,
}

/// Searches `lambda` over `delta/2, delta/4, ..., delta/2^ladder_steps` and
/// keeps the largest margin that reaches `tau` (ties go to the larger
/// `lambda`).
pub fn repair<G: VectorMap>(
    g: G,
    pairs: &PairSet,
    domain_sup_norm: f64,
    delta: f64,
    tau: f64,
    ladder_steps: u32,
) -> Result<RepairResult<G>> {
    if !(delta > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidArgument("delta and tau must be positive".into()));
    }
    if !(domain_sup_norm >= 0.0) {
        return Err(Error::InvalidArgument("domain_sup_norm must be non-negative".into()));
    }
    if ladder_steps == 0 {
        return Err(Error::InvalidArgument("ladder_steps must be positive".into()));
    }
    check_dim(g.dim_out().max(g.dim_in()), g.dim_out())?;
    let l_norm = domain_sup_norm + 1.0;
    let margin_before = tr_margin(&g, pairs)?;

    let mut ladder = Vec::with_capacity(ladder_steps as usize);
    let mut lambda = delta;
    for _ in 0..ladder_steps {
        lambda *= 0.5;
        let candidate = Perturbed {
            base: &g,
            lambda,
            l_norm,
        };
        ladder.push(LadderStep {
            lambda,
            margin: tr_margin(&candidate, pairs)?,
        });
    }
    let best = ladder
        .iter()
        .copied()
        .filter(|s| s.margin >= tau)
        .fold(None::<LadderStep>, |acc, s| match acc {
            Some(a) if a.margin >= s.margin => Some(a),
            _ => Some(s),
        });
    let Some(best) = best else {
        let best_margin = ladder.iter().map(|s| s.margin).fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::RepairFailure { best_margin, tau });
    };
    Ok(RepairResult {
        repaired: Perturbed {
            base: g,
            lambda: best.lambda,
            l_norm,
        },
        lambda0: best.lambda,
        l_norm,
        margin_before,
        margin_after: best.margin,
        ladder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{lattice_samples, make_box, random_samples, sup_distance, DEFAULT_POINT_CAP};
    use crate::map::FnMap;
    use proptest::prelude::*;

    fn unit_lattice(n: usize) -> SampleSet {
        lattice_samples(&make_box(vec![0.0], vec![1.0]).unwrap(), n, DEFAULT_POINT_CAP).unwrap()
    }

    fn identity() -> FnMap<impl Fn(&[f64]) -> Vec<f64> + Sync> {
        FnMap::new(1, 1, |x: &[f64]| x.to_vec())
    }

    #[test]
    fn constant_target_has_no_pairs() {
        let c = FnMap::new(1, 1, |_: &[f64]| vec![2.0]);
        assert!(matches!(
            sample_separated_pairs(&unit_lattice(11), &c, 4, 1e-6, 100, 1),
            Err(Error::NoPairsFound { .. })
        ));
    }

    #[test]
    fn identity_on_three_points() {
        let ps = sample_separated_pairs(&unit_lattice(3), &identity(), 2, 0.4, 10, 1).unwrap();
        let allowed = [(0.0, 0.5), (0.0, 1.0), (0.5, 1.0)];
        assert_eq!(ps.len(), 3);
        for (a, b) in ps.pairs() {
            assert!(allowed.contains(&(a[0], b[0])));
        }
    }

    #[test]
    fn separation_unattainable_on_small_box() {
        let s = lattice_samples(&make_box(vec![0.0], vec![0.5]).unwrap(), 11, DEFAULT_POINT_CAP).unwrap();
        assert!(matches!(
            sample_separated_pairs(&s, &identity(), 1, 1e-6, 100, 1),
            Err(Error::NoPairsFound { .. })
        ));
    }

    #[test]
    fn pair_sampling_is_seeded() {
        let s = unit_lattice(101);
        let f = FnMap::new(1, 1, |x: &[f64]| vec![(7.0 * x[0]).sin()]);
        let a = sample_separated_pairs(&s, &f, 4, 1e-3, 50, 9).unwrap();
        let b = sample_separated_pairs(&s, &f, 4, 1e-3, 50, 9).unwrap();
        let c = sample_separated_pairs(&s, &f, 4, 1e-3, 50, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 50);
    }

    #[test]
    fn margin_examples() {
        let ps = sample_separated_pairs(&unit_lattice(3), &identity(), 2, 0.4, 10, 1).unwrap();
        let c = FnMap::new(1, 1, |_: &[f64]| vec![1.0]);
        assert_eq!(tr_margin(&c, &ps).unwrap(), 0.0);
        assert_eq!(tr_margin(&identity(), &ps).unwrap(), 0.5);

        let s = lattice_samples(&make_box(vec![-1.0], vec![1.0]).unwrap(), 3, DEFAULT_POINT_CAP).unwrap();
        let ps = sample_separated_pairs(&s, &identity(), 1, 0.5, 10, 1).unwrap();
        assert!(ps.pairs().iter().any(|(a, b)| a[0] == -1.0 && b[0] == 1.0));
        let sq = FnMap::new(1, 1, |x: &[f64]| vec![x[0] * x[0]]);
        assert_eq!(tr_margin(&sq, &ps).unwrap(), 0.0);
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi_embed(&[0.0, 0.0], 3.0, 2).unwrap(), vec![0.0, 0.0]);
        let l = 2f64.sqrt() + 1.0;
        let v = psi_embed(&[1.0, 1.0], l, 2).unwrap();
        assert!((v[0] - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!((v[1] - 0.41421356237309503).abs() < 1e-15);
        assert_eq!(psi_embed(&[0.5], 2.0, 3).unwrap(), vec![0.25, 0.0, 0.0]);
        assert!(psi_embed(&[0.5, 0.5], 2.0, 1).is_err());
    }

    #[test]
    fn repair_of_zero_map_hits_case_one_bound() {
        let two = SampleSet::from_points(vec![vec![0.0], vec![1.0]]).unwrap();
        let ps = sample_separated_pairs(&two, &identity(), 1, 0.5, 10, 0).unwrap();
        let zero = FnMap::new(1, 1, |_: &[f64]| vec![0.0]);
        let r = repair(&zero, &ps, 1.0, 0.1, 0.01, 10).unwrap();
        assert_eq!(r.l_norm, 2.0);
        assert_eq!(r.lambda0, 0.05);
        assert_eq!(r.margin_before, 0.0);
        assert!((r.margin_after - 0.025).abs() < 1e-12);
        let cloud = unit_lattice(1001);
        assert!(sup_distance(&r.repaired, &zero, &cloud).unwrap() <= r.lambda0);
    }

    #[test]
    fn repair_never_shrinks_identity_separation() {
        let ps = sample_separated_pairs(&unit_lattice(21), &identity(), 4, 1e-6, 100, 2).unwrap();
        let r = repair(identity(), &ps, 1.0, 0.2, 1e-9, 8).unwrap();
        assert!(r.margin_after >= 1e-9);
        assert!(r.margin_after >= r.margin_before);
    }

    #[test]
    fn unreachable_tau_fails() {
        let two = SampleSet::from_points(vec![vec![0.0], vec![1.0]]).unwrap();
        let ps = sample_separated_pairs(&two, &identity(), 1, 0.5, 10, 0).unwrap();
        let zero = FnMap::new(1, 1, |_: &[f64]| vec![0.0]);
        match repair(&zero, &ps, 1.0, 1e-6, 1.0, 20) {
            Err(Error::RepairFailure { best_margin, .. }) => assert!(best_margin < 1e-6),
            Err(other) => panic!("unexpected {other:?}"),
            Ok(_) => panic!("repair should fail"),
        }
    }

    #[test]
    fn target_passes_its_own_pair_set() {
        let f = FnMap::new(1, 1, |x: &[f64]| vec![(9.0 * x[0]).cos()]);
        let s = random_samples(&make_box(vec![0.0], vec![1.0]).unwrap(), 300, 4).unwrap();
        let ps = sample_separated_pairs(&s, &f, 4, 1e-3, 500, 4).unwrap();
        assert!(tr_margin(&f, &ps).unwrap() >= ps.gamma());
    }

    proptest! {
        #[test]
        fn case_one_lower_bound_on_collisions(
            lambda in 1e-6f64..1.0,
            a in 0.0f64..0.4, b in 0.6f64..1.0,
        ) {
            // g collides a and b exactly; separation after perturbation is lambda * |a - b| / L.
            let g = FnMap::new(1, 1, |_: &[f64]| vec![0.3]);
            let l_norm = 2.0;
            let pert = Perturbed { base: &g, lambda, l_norm };
            let gap = distance(&pert.eval(&[a]).unwrap(), &pert.eval(&[b]).unwrap());
            prop_assert!((gap - lambda * (b - a) / l_norm).abs() < 1e-12);
            prop_assert!(gap >= lambda / (l_norm * 5.0) - 1e-12);
        }

        #[test]
        fn perturbation_is_bounded_by_lambda(lambda in 0.0f64..1.0, seed in any::<u64>()) {
            let region = make_box(vec![-2.0, 0.5], vec![1.0, 3.0]).unwrap();
            let s = random_samples(&region, 200, seed).unwrap();
            let g = FnMap::new(2, 3, |x: &[f64]| vec![x[0] * x[1], x[0].sin(), 1.0]);
            let pert = Perturbed { base: &g, lambda, l_norm: region.sup_norm() + 1.0 };
            prop_assert!(sup_distance(&pert, &g, &s).unwrap() <= lambda);
        }

        #[test]
        fn margin_is_lipschitz_in_the_map(shift in -0.5f64..0.5, amp in 0.0f64..0.3, seed in any::<u64>()) {
            let s = random_samples(&make_box(vec![0.0], vec![1.0]).unwrap(), 60, seed).unwrap();
            let f = FnMap::new(1, 1, |x: &[f64]| vec![(5.0 * x[0]).sin()]);
            let ps = sample_separated_pairs(&s, &f, 4, 1e-3, 200, seed).unwrap();
            let g2 = FnMap::new(1, 1, move |x: &[f64]| vec![(5.0 * x[0]).sin() + shift + amp * (40.0 * x[0]).cos()]);
            let gap = sup_distance(&f, &g2, &s).unwrap();
            let diff = (tr_margin(&f, &ps).unwrap() - tr_margin(&g2, &ps).unwrap()).abs();
            prop_assert!(diff <= 2.0 * gap + 1e-12);
        }
    }
}
