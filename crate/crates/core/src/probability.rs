//! Posterior approximation through centered logits and softmax.
//!
//! The logits `z_k = log p_k - mean(log p)` of a positive posterior are
//! approximated by a cascade to tolerance `delta = eps / L`, where `L` is an
//! empirical Lipschitz constant of softmax on the logit box. Logits are read
//! from the first `n` coordinates of a cascade of width `max(d, n)`.

use serde::{Deserialize, Serialize};

use crate::cascade::{build_cascade, evaluate_cascade, Cascade, CascadeConfig, LayerTrace};
use crate::error::{Error, Result};
use crate::geometry::{eval_all, lattice_samples, par_max, random_samples, AxisBox, SampleSet};
use crate::map::{check_dim, distance, VectorMap};
use crate::rng::SplitMix64;
use crate::target::TargetFunction;

/// Smallest admissible class probability.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
/// Posteriors whose sum is off by at most this much are renormalized.
pub const RENORMALIZE_WINDOW: f64 = 1e-6;
pub const LIPSCHITZ_SAFETY: f64 = 1.1;
pub const LIPSCHITZ_MIN: f64 = 1e-3;
pub const DEFAULT_LIPSCHITZ_PAIRS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorBody {
    /// One expression per class probability.
    Probabilities(TargetFunction),
    /// One expression per class logit, passed through softmax.
    Logits(TargetFunction),
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorTarget {
    dim_in: usize,
    n_classes: usize,
    body: PosteriorBody,
}

impl PosteriorTarget {
    pub fn new(body: PosteriorBody, dim_in: usize, n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidArgument("a posterior needs at least 2 classes".into()));
        }
        if dim_in == 0 {
            return Err(Error::InvalidArgument("dim_in must be positive".into()));
        }
        if let PosteriorBody::Probabilities(t) | PosteriorBody::Logits(t) = &body {
            check_dim(dim_in, t.dim_in())?;
            check_dim(n_classes, t.dim_out())?;
        }
        Ok(Self {
            dim_in,
            n_classes,
            body,
        })
    }

    pub fn probabilities(target: TargetFunction) -> Result<Self> {
        let (d, n) = (target.dim_in(), target.dim_out());
        Self::new(PosteriorBody::Probabilities(target), d, n)
    }

    pub fn logits(target: TargetFunction) -> Result<Self> {
        let (d, n) = (target.dim_in(), target.dim_out());
        Self::new(PosteriorBody::Logits(target), d, n)
    }

    pub fn uniform(dim_in: usize, n_classes: usize) -> Result<Self> {
        Self::new(PosteriorBody::Uniform, dim_in, n_classes)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn body(&self) -> &PosteriorBody {
        &self.body
    }

    pub fn id(&self) -> String {
        match &self.body {
            PosteriorBody::Probabilities(t) => format!("probs{}", t.id()),
            PosteriorBody::Logits(t) => format!("logits{}", t.id()),
            PosteriorBody::Uniform => format!("uniform({})", self.n_classes),
        }
    }

    /// Class probabilities at `x`, validated and renormalized.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim_in, x.len())?;
        let p = match &self.body {
            PosteriorBody::Uniform => return Ok(vec![1.0 / self.n_classes as f64; self.n_classes]),
            PosteriorBody::Logits(t) => return Ok(softmax(&t.eval(x)?)),
            PosteriorBody::Probabilities(t) => t.eval(x)?,
        };
        normalize_posterior(p)
    }
}

/// Checks positivity and renormalizes a sum within [`RENORMALIZE_WINDOW`] of 1.
pub fn normalize_posterior(mut p: Vec<f64>) -> Result<Vec<f64>> {
    for (class, &value) in p.iter().enumerate() {
        if !(value >= PROBABILITY_FLOOR) {
            return Err(Error::NonPositiveProbability { class, value });
        }
    }
    let sum: f64 = p.iter().sum();
    if !((sum - 1.0).abs() <= RENORMALIZE_WINDOW) {
        return Err(Error::InvalidPosterior { sum });
    }
    for v in &mut p {
        *v /= sum;
    }
    Ok(p)
}

impl VectorMap for PosteriorTarget {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.n_classes
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(x)
    }
}

/// `x -> logits_from_posterior(p(x))`.
pub struct LogitTarget<'a>(pub &'a PosteriorTarget);

impl VectorMap for LogitTarget<'_> {
    fn dim_in(&self) -> usize {
        self.0.dim_in
    }
    fn dim_out(&self) -> usize {
        self.0.n_classes
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        logits_from_posterior(&self.0.evaluate(x)?, self.0.n_classes)
    }
}

pub fn logits_from_posterior(p: &[f64], n: usize) -> Result<Vec<f64>> {
    check_dim(n, p.len())?;
    for (class, &value) in p.iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositiveProbability { class, value });
        }
    }
    let logs: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let mean = logs.iter().sum::<f64>() / n as f64;
    Ok(logs.into_iter().map(|l| l - mean).collect())
}

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `||softmax(a) - softmax(b)|| / ||a - b||`, or `None` for identical inputs.
pub fn softmax_ratio(a: &[f64], b: &[f64]) -> Option<f64> {
    let dz = distance(a, b);
    if dz == 0.0 {
        return None;
    }
    Some(distance(&softmax(a), &softmax(b)) / dz)
}

/// Largest sampled ratio times [`LIPSCHITZ_SAFETY`], floored at [`LIPSCHITZ_MIN`].
///
/// Even-numbered pairs are two independent uniform points of `bounds`; odd
/// ones pair a uniform point with a nearby point, which probes the local slope.
pub fn estimate_softmax_lipschitz(bounds: &AxisBox, count: usize, seed: u64) -> Result<f64> {
    if count < 2 {
        return Err(Error::InvalidArgument("need at least 2 sample pairs".into()));
    }
    let n = bounds.dim();
    let step = 1e-3 * bounds.diagonal();
    let mut rng = SplitMix64::new(seed);
    let mut pairs = Vec::with_capacity(count);
    let draw =
        |rng: &mut SplitMix64| -> Vec<f64> { (0..n).map(|j| rng.uniform(bounds.lo()[j], bounds.hi()[j])).collect() };
    for k in 0..count {
        let a = draw(&mut rng);
        let b = if k % 2 == 0 {
            draw(&mut rng)
        } else {
            let u: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let len = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            (0..n)
                .map(|j| (a[j] + step * u[j] / len).clamp(bounds.lo()[j], bounds.hi()[j]))
                .collect()
        };
        pairs.push((a, b));
    }
    let best = par_max(&pairs, |(a, b)| Ok(softmax_ratio(a, b).unwrap_or(0.0)))?;
    Ok((LIPSCHITZ_SAFETY * best).max(LIPSCHITZ_MIN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierCascade {
    pub logit_cascade: Cascade,
    pub n_classes: usize,
    pub logit_box: AxisBox,
    pub lipschitz_used: f64,
    pub delta_used: f64,
    pub eps: f64,
}

impl ClassifierCascade {
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = evaluate_cascade(&self.logit_cascade, x, None)?;
        z.truncate(self.n_classes);
        Ok(z)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn traces(&self) -> &[LayerTrace] {
        &self.logit_cascade.traces
    }
}

/// Builds the logit cascade for `posterior` to tolerance `eps / L`.
pub fn build_classifier(
    posterior: &PosteriorTarget,
    domain: &AxisBox,
    eps: f64,
    cfg: &CascadeConfig,
    lipschitz_pairs: usize,
    seed: u64,
) -> Result<ClassifierCascade> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    check_dim(domain.dim(), posterior.dim_in)?;
    let d = domain.dim();
    let logit_target = LogitTarget(posterior);

    let mut probe = lattice_samples(domain, cfg.sampling.per_axis(d), cfg.sampling.max_points)?;
    let extra = cfg.sampling.random_count(d);
    if extra > 0 {
        probe = probe.union(&random_samples(domain, extra, SplitMix64::derive(seed, 5).next_u64())?);
    }
    let z = eval_all(&logit_target, probe.points())?;
    let tight = AxisBox::bounding(&z)?;
    let logit_box = tight.expanded(cfg.sampling.pad_for(tight.diagonal()));

    let lipschitz = estimate_softmax_lipschitz(&logit_box, lipschitz_pairs, SplitMix64::derive(seed, 6).next_u64())?;
    let delta = eps / lipschitz;
    let logit_cascade = build_cascade(&logit_target, &posterior.id(), domain, delta, cfg, seed)?;
    Ok(ClassifierCascade {
        logit_cascade,
        n_classes: posterior.n_classes,
        logit_box,
        lipschitz_used: lipschitz,
        delta_used: delta,
        eps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierError {
    pub p_error: f64,
    pub logit_error: f64,
}

/// Sampled sup-norms of the probability and logit errors.
pub fn classifier_error(
    classifier: &ClassifierCascade,
    posterior: &PosteriorTarget,
    samples: &SampleSet,
) -> Result<ClassifierError> {
    let n = classifier.n_classes;
    check_dim(n, posterior.n_classes)?;
    let errors: Vec<(f64, f64)> = samples
        .points()
        .iter()
        .map(|x| {
            let z_hat = classifier.logits(x)?;
            let p = posterior.evaluate(x)?;
            let z = logits_from_posterior(&p, n)?;
            Ok((distance(&softmax(&z_hat), &p), distance(&z_hat, &z)))
        })
        .collect::<Result<_>>()?;
    Ok(ClassifierError {
        p_error: errors.iter().map(|e| e.0).fold(0.0, f64::max),
        logit_error: errors.iter().map(|e| e.1).fold(0.0, f64::max),
    })
}
