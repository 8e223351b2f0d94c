//! Layer-by-layer cascade construction with geometric error budgets.
//!
//! Layer 1 fits the (zero-padded) target on the domain. Layer `i + 1` fits
//! the continuation `h_i`, estimated from anchors `(phi_i(x), f(x))`, on the
//! padded image box of `phi_i`. Every layer is checked for recoverability and
//! repaired when a margin falls below `tau`.

use serde::{Deserialize, Serialize};

use crate::approx::{
    fit_grid_interpolant, fit_grid_to_anchors, fit_random_features, FeatureLimits, FitReport, GridLimits,
    ModuleFunction, Perturbation, DEFAULT_RIDGE,
};
use crate::continuation::{ContinuationFn, DEFAULT_K_NEIGHBORS};
use crate::error::{Error, Result};
use crate::geometry::{eval_all, lattice_samples, par_max, random_samples, AxisBox, SampleSet, DEFAULT_POINT_CAP};
use crate::map::{check_dim, distance, Padded, VectorMap};
use crate::recoverability::{repair, sample_separated_pairs, tr_margin, PairSet};
use crate::rng::SplitMix64;

/// Anchors closer than this in the image must share their target value.
pub const FIBER_RADIUS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSchedule {
    pub eps1: f64,
    pub factor: f64,
}

impl Default for ErrorSchedule {
    fn default() -> Self {
        Self { eps1: 1.0, factor: 0.5 }
    }
}

impl ErrorSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0) || !self.eps1.is_finite() {
            return Err(Error::InvalidArgument("eps1 must be positive".into()));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::InvalidArgument("factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// `eps1 * factor^(i-1)`.
pub fn error_schedule(schedule: &ErrorSchedule, i: usize) -> f64 {
    assert!(i >= 1, "layers are numbered from 1");
    schedule.eps1 * schedule.factor.powi(i as i32 - 1)
}

/// `ceil(log2(eps1 / eps)) + 1`, and 1 when `eps >= eps1`.
pub fn depth_for_tolerance(eps1: f64, eps: f64) -> usize {
    assert!(eps1 > 0.0 && eps > 0.0, "tolerances must be positive");
    if eps >= eps1 {
        return 1;
    }
    (eps1 / eps).log2().ceil() as usize + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Grid {
        #[serde(default = "default_max_per_axis")]
        max_per_axis: usize,
        #[serde(default = "default_validation_per_axis")]
        validation_per_axis: usize,
    },
    RandomFeatures {
        #[serde(default = "default_start_features")]
        start_features: usize,
        #[serde(default = "default_max_features")]
        max_features: usize,
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
}

fn default_max_per_axis() -> usize {
    GridLimits::default().max_per_axis
}
fn default_validation_per_axis() -> usize {
    GridLimits::default().validation_per_axis
}
fn default_start_features() -> usize {
    FeatureLimits::default().start_features
}
fn default_max_features() -> usize {
    FeatureLimits::default().max_features
}
fn default_scale() -> f64 {
    FeatureLimits::default().scale
}
fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig::Grid {
            max_per_axis: default_max_per_axis(),
            validation_per_axis: default_validation_per_axis(),
        }
    }
}

impl FamilyConfig {
    pub fn random_features() -> Self {
        FamilyConfig::RandomFeatures {
            start_features: default_start_features(),
            max_features: default_max_features(),
            scale: default_scale(),
            ridge: default_ridge(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Lattice nodes per axis of the working set; see [`default_lattice_per_axis`].
    #[serde(default)]
    pub lattice_per_axis: Option<usize>,
    /// Random points in the working set; defaults to the lattice size.
    #[serde(default)]
    pub random_count: Option<usize>,
    #[serde(default = "default_pad_fraction")]
    pub pad_fraction: f64,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
    #[serde(default = "default_k")]
    pub k_neighbors: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_pad_fraction() -> f64 {
    0.05
}
fn default_max_points() -> usize {
    DEFAULT_POINT_CAP
}
fn default_k() -> usize {
    DEFAULT_K_NEIGHBORS
}
fn default_retries() -> u32 {
    3
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            lattice_per_axis: None,
            random_count: None,
            pad_fraction: default_pad_fraction(),
            max_points: default_max_points(),
            k_neighbors: default_k(),
            retries: default_retries(),
        }
    }
}

/// Roughly 1024 lattice points in any dimension.
pub fn default_lattice_per_axis(dim: usize) -> usize {
    (1024f64.powf(1.0 / dim.max(1) as f64)).ceil() as usize + 1
}

impl SamplingConfig {
    pub fn per_axis(&self, dim: usize) -> usize {
        self.lattice_per_axis.unwrap_or_else(|| default_lattice_per_axis(dim))
    }

    pub fn random_count(&self, dim: usize) -> usize {
        self.random_count
            .unwrap_or_else(|| self.per_axis(dim).saturating_pow(dim as u32))
    }

    /// Absolute pad for a box with the given diagonal.
    pub fn pad_for(&self, diagonal: f64) -> f64 {
        if diagonal > 0.0 {
            self.pad_fraction * diagonal
        } else {
            self.pad_fraction
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrConfig {
    #[serde(default = "default_n_sep")]
    pub n_sep: u32,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_max_pairs")]
    pub max_pairs: usize,
    /// Repair step; capped at a tenth of the layer budget.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_ladder_steps")]
    pub ladder_steps: u32,
    /// Fiber consistency bound for anchors; defaults to `gamma`.
    #[serde(default)]
    pub fiber_bound: Option<f64>,
}

fn default_n_sep() -> u32 {
    10
}
fn default_gamma() -> f64 {
    1e-6
}
fn default_tau() -> f64 {
    1e-9
}
fn default_max_pairs() -> usize {
    500
}
fn default_ladder_steps() -> u32 {
    20
}

impl Default for TrConfig {
    fn default() -> Self {
        Self {
            n_sep: default_n_sep(),
            gamma: default_gamma(),
            tau: default_tau(),
            max_pairs: default_max_pairs(),
            delta: None,
            ladder_steps: default_ladder_steps(),
            fiber_bound: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CascadeConfig {
    pub schedule: ErrorSchedule,
    /// Depth cap is `depth_slack * depth_for_tolerance(eps1, eps)`.
    pub depth_slack: u32,
    /// Stop once the measured error is below `eps`, even if `eps_N >= eps`.
    pub early_exit: bool,
    pub family: FamilyConfig,
    pub sampling: SamplingConfig,
    pub tr: TrConfig,
}

impl CascadeConfig {
    pub fn new(family: FamilyConfig) -> Self {
        Self {
            depth_slack: 2,
            family,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairStage {
    /// Pairs drawn on the layer's own input samples.
    Local,
    /// Domain pairs carried through the previous layers.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairRecord {
    pub stage: RepairStage,
    pub lambda: f64,
    pub margin_before: f64,
    pub margin_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    pub layer: usize,
    pub epsilon: f64,
    /// Sup error of `phi_i` against the target on the working samples.
    pub measured_error: f64,
    /// Same, on an independent random set twice the working size.
    pub validation_error: f64,
    /// Domain pair margin of `phi_i`; `None` when the target has no separated pairs.
    pub tr_margin: Option<f64>,
    pub image_box: AxisBox,
    pub fit: FitReport,
    pub retries: u32,
    pub working_points: usize,
    pub repairs: Vec<RepairRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    pub target_id: String,
    pub domain: AxisBox,
    pub width: usize,
    /// Rebuilds with a tightened first layer before this cascade succeeded.
    #[serde(default)]
    pub restarts: u32,
    pub modules: Vec<ModuleFunction>,
    pub traces: Vec<LayerTrace>,
}

impl Cascade {
    pub fn depth(&self) -> usize {
        self.modules.len()
    }

    pub fn final_error(&self) -> f64 {
        self.traces.last().map_or(f64::NAN, |t| t.measured_error)
    }
}

/// Composes the first `upto_layer` modules (all of them by default).
pub fn evaluate_cascade(cascade: &Cascade, point: &[f64], upto_layer: Option<usize>) -> Result<Vec<f64>> {
    check_dim(cascade.domain.dim(), point.len())?;
    let depth = cascade.depth();
    let upto = upto_layer.unwrap_or(depth);
    if upto == 0 || upto > depth {
        return Err(Error::LayerOutOfRange { layer: upto, depth });
    }
    let mut z = point.to_vec();
    for m in &cascade.modules[..upto] {
        z = m.evaluate(&z)?;
    }
    Ok(z)
}

impl VectorMap for Cascade {
    fn dim_in(&self) -> usize {
        self.domain.dim()
    }
    fn dim_out(&self) -> usize {
        self.width
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        evaluate_cascade(self, x, None)
    }
}

/// Prefix `phi_upto` of a cascade as a map.
pub struct CascadePrefix<'a> {
    pub cascade: &'a Cascade,
    pub upto: usize,
}

impl VectorMap for CascadePrefix<'_> {
    fn dim_in(&self) -> usize {
        self.cascade.domain.dim()
    }
    fn dim_out(&self) -> usize {
        self.cascade.width
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        evaluate_cascade(self.cascade, x, Some(self.upto))
    }
}

pub const CSV_HEADER: &str = "layer,epsilon_i,measured_error,tr_margin,image_lo,image_hi,fit_size,fit_attempts";

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";")
}

/// One header line plus one row per layer; vectors are `;`-separated and a
/// missing margin is written as `inf`.
pub fn traces_csv(traces: &[LayerTrace]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for t in traces {
        let margin = t.tr_margin.map_or("inf".to_string(), |m| format!("{m:?}"));
        out.push_str(&format!(
            "{},{:?},{:?},{},{},{},{},{}\n",
            t.layer,
            t.epsilon,
            t.measured_error,
            margin,
            join(t.image_box.lo()),
            join(t.image_box.hi()),
            t.fit.size,
            t.fit.attempts
        ));
    }
    out
}

/// Working and validation samples at a densification level, with target values.
struct Samples {
    w: Vec<Vec<f64>>,
    fw: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    fv: Vec<Vec<f64>>,
}

fn draw_samples<T: VectorMap + ?Sized>(
    target: &T,
    domain: &AxisBox,
    sampling: &SamplingConfig,
    level: u32,
    seed: u64,
) -> Result<Samples> {
    let d = domain.dim();
    let growth = 2f64.powf(level as f64 / d as f64);
    let per_axis = ((sampling.per_axis(d) as f64) * growth).ceil() as usize;
    let random = sampling.random_count(d).saturating_mul(1 << level);
    let lattice = lattice_samples(domain, per_axis, sampling.max_points)?;
    let mut w = lattice.points().to_vec();
    if random > 0 {
        let extra = random_samples(domain, random, SplitMix64::derive(seed, 10 + level as u64).next_u64())?;
        w.extend(extra.points().iter().cloned());
    }
    if w.len() > sampling.max_points {
        return Err(Error::BudgetExceeded {
            requested: w.len() as u128,
            cap: sampling.max_points,
        });
    }
    let v = random_samples(
        domain,
        2 * w.len(),
        SplitMix64::derive(seed, 20 + level as u64).next_u64(),
    )?
    .points()
    .to_vec();
    let fw = eval_all(target, &w)?;
    let fv = eval_all(target, &v)?;
    Ok(Samples { w, fw, v, fv })
}

fn push_through(modules: &[ModuleFunction], points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut z = points.to_vec();
    for m in modules {
        z = eval_all(m, &z)?;
    }
    Ok(z)
}

fn sup_error(images: &[Vec<f64>], values: &[Vec<f64>]) -> Result<f64> {
    let idx: Vec<usize> = (0..images.len()).collect();
    par_max(&idx, |&k| Ok(distance(&images[k], &values[k])))
}

struct Layer {
    module: ModuleFunction,
    fit: FitReport,
    repairs: Vec<RepairRecord>,
}

struct LayerInput<'a> {
    layer: usize,
    tolerance: f64,
    budget: f64,
    /// Fit box: the domain for layer 1, the padded image box after that.
    region: &'a AxisBox,
    zw: &'a [Vec<f64>],
    fw: &'a [Vec<f64>],
    zv: &'a [Vec<f64>],
    fv: &'a [Vec<f64>],
    /// Global pairs transported to this layer's input space.
    carried: Option<&'a PairSet>,
    seed: u64,
}

fn fit_layer<T: VectorMap>(target: &T, input: &LayerInput, cfg: &CascadeConfig) -> Result<Layer> {
    let width = target.dim_out();
    let tr = &cfg.tr;
    let fiber_bound = tr.fiber_bound.unwrap_or(tr.gamma);

    // Continuation h with f = h . phi on the anchors; layer 1 uses the target itself.
    let continuation = if input.layer == 1 {
        None
    } else {
        let h = ContinuationFn::new(
            input.zw.to_vec(),
            input.fw.to_vec(),
            cfg.sampling.k_neighbors.min(input.zw.len()),
        )?;
        if let Some(c) = h.fiber_conflict(FIBER_RADIUS, fiber_bound) {
            return Err(Error::ContinuationFailure {
                layer: input.layer,
                reason: format!(
                    "anchors {} and {} coincide within {:e} but their targets differ by {:e}",
                    c.first, c.second, c.z_gap, c.y_gap
                ),
            });
        }
        Some(h)
    };
    let local_target: &dyn VectorMap = match &continuation {
        Some(h) => h,
        None => target,
    };

    let (module, fit) = match cfg.family {
        FamilyConfig::Grid {
            max_per_axis,
            validation_per_axis,
        } => {
            let limits = GridLimits {
                max_per_axis,
                validation_per_axis,
                point_cap: cfg.sampling.max_points,
            };
            if continuation.is_some() {
                let anchors: Vec<_> = input
                    .zw
                    .iter()
                    .chain(input.zv)
                    .cloned()
                    .zip(input.fw.iter().chain(input.fv).cloned())
                    .collect();
                fit_grid_to_anchors(local_target, input.region, input.tolerance, &limits, &anchors)?
            } else {
                fit_grid_interpolant(local_target, input.region, input.tolerance, &limits)?
            }
        }
        FamilyConfig::RandomFeatures {
            start_features,
            max_features,
            scale,
            ridge,
        } => {
            let limits = FeatureLimits {
                start_features,
                max_features,
                scale,
            };
            let train: Vec<_> = input.zw.iter().cloned().zip(input.fw.iter().cloned()).collect();
            let holdout: Vec<_> = input.zv.iter().cloned().zip(input.fv.iter().cloned()).collect();
            fit_random_features(
                &train,
                &holdout,
                input.region,
                input.tolerance,
                &limits,
                input.seed,
                ridge,
            )?
        }
    };
    check_dim(width, module.dim_out)?;

    let delta = tr.delta.unwrap_or(f64::INFINITY).min(0.1 * input.budget);
    let sup_norm = input.region.sup_norm();
    let mut module = module;
    let mut repairs = Vec::new();
    let mut apply_repair = |module: &mut ModuleFunction, pairs: &PairSet, stage| -> Result<()> {
        let r = repair(&*module, pairs, sup_norm, delta, tr.tau, tr.ladder_steps)?;
        repairs.push(RepairRecord {
            stage,
            lambda: r.lambda0,
            margin_before: r.margin_before,
            margin_after: r.margin_after,
        });
        *module = module.with_perturbation(Perturbation {
            lambda: r.lambda0,
            l_norm: r.l_norm,
        })?;
        Ok(())
    };

    let points = SampleSet::from_points(input.zw.to_vec())?;
    let pair_seed = SplitMix64::derive(input.seed, 1).next_u64();
    match sample_separated_pairs(&points, local_target, tr.n_sep, tr.gamma, tr.max_pairs, pair_seed) {
        Ok(local) => {
            if tr_margin(&module, &local)? < tr.tau {
                apply_repair(&mut module, &local, RepairStage::Local)?;
            }
        }
        Err(Error::NoPairsFound { .. }) => {}
        Err(e) => return Err(e),
    }
    if let Some(carried) = input.carried {
        if tr_margin(&module, carried)? < tr.tau {
            apply_repair(&mut module, carried, RepairStage::Global)?;
        }
    }
    Ok(Layer { module, fit, repairs })
}

/// Builds `H_1, ..., H_N` for `target` (zero-padded to `max(d, m)`) on `domain`.
///
/// With width 1 a non-injective target leaves folds in `phi_1` that no later
/// layer can undo, so a failure past layer 1 restarts the build with layer 1
/// fitted to the last scheduled budget, halved on each further restart
/// (at most `sampling.retries` restarts).
pub fn build_cascade<T: VectorMap + ?Sized>(
    target: &T,
    target_id: &str,
    domain: &AxisBox,
    eps: f64,
    cfg: &CascadeConfig,
    seed: u64,
) -> Result<Cascade> {
    check_dim(domain.dim(), target.dim_in())?;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    cfg.schedule.validate()?;
    if cfg.depth_slack == 0 {
        return Err(Error::InvalidArgument("depth_slack must be positive".into()));
    }
    let width = domain.dim().max(target.dim_out());
    let padded = Padded { inner: target, width };
    let last_budget = error_schedule(&cfg.schedule, depth_for_tolerance(cfg.schedule.eps1, eps));
    let mut restart = 0u32;
    loop {
        let first_tolerance = (restart > 0).then(|| last_budget * 0.5f64.powi(restart as i32 - 1));
        match build_attempt(&padded, domain, eps, cfg, seed, first_tolerance) {
            Ok((modules, traces)) => {
                return Ok(Cascade {
                    target_id: target_id.to_string(),
                    domain: domain.clone(),
                    width,
                    restarts: restart,
                    modules,
                    traces,
                })
            }
            Err((layer, e)) => {
                let restartable = matches!(
                    e,
                    Error::ToleranceUnreachable { .. } | Error::ContinuationFailure { .. }
                );
                if layer < 2 || !restartable || restart >= cfg.sampling.retries {
                    return Err(e);
                }
                restart += 1;
            }
        }
    }
}

type Attempt = std::result::Result<(Vec<ModuleFunction>, Vec<LayerTrace>), (usize, Error)>;

fn build_attempt<T: VectorMap>(
    padded: &T,
    domain: &AxisBox,
    eps: f64,
    cfg: &CascadeConfig,
    seed: u64,
    first_tolerance: Option<f64>,
) -> Attempt {
    let at = |layer: usize| move |e: Error| (layer, e);
    let cap = cfg.depth_slack as usize * depth_for_tolerance(cfg.schedule.eps1, eps);

    let mut level = 0u32;
    let mut samples = draw_samples(padded, domain, &cfg.sampling, level, seed).map_err(at(1))?;

    let global_seed = SplitMix64::derive(seed, 3).next_u64();
    let w0 = SampleSet::from_points(samples.w.clone()).map_err(at(1))?;
    let global = match sample_separated_pairs(&w0, padded, cfg.tr.n_sep, cfg.tr.gamma, cfg.tr.max_pairs, global_seed) {
        Ok(p) => Some(p),
        Err(Error::NoPairsFound { .. }) => None,
        Err(e) => return Err((1, e)),
    };

    let mut modules: Vec<ModuleFunction> = Vec::new();
    let mut traces: Vec<LayerTrace> = Vec::new();
    let mut zw = samples.w.clone();
    let mut zv = samples.v.clone();
    let mut region = domain.clone();
    let mut carried = global.clone();

    for i in 1.. {
        if i > cap {
            return Err((i, Error::DepthCapExceeded { cap, eps }));
        }
        let budget = error_schedule(&cfg.schedule, i);
        let mut retry = 0u32;
        let (layer, new_zw, new_zv, measured, validation) = loop {
            let input = LayerInput {
                layer: i,
                tolerance: match first_tolerance {
                    Some(t) if i == 1 => t.min(budget),
                    _ => budget,
                } * 0.5f64.powi(retry as i32),
                budget,
                region: &region,
                zw: &zw,
                fw: &samples.fw,
                zv: &zv,
                fv: &samples.fv,
                carried: carried.as_ref(),
                seed: SplitMix64::derive(seed, 100 + 16 * i as u64 + retry as u64).next_u64(),
            };
            let step = || -> Result<_> {
                let layer = fit_layer(padded, &input, cfg)?;
                let new_zw = eval_all(&layer.module, &zw)?;
                let new_zv = eval_all(&layer.module, &zv)?;
                let measured = sup_error(&new_zw, &samples.fw)?;
                let validation = sup_error(&new_zv, &samples.fv)?;
                Ok((layer, new_zw, new_zv, measured, validation))
            };
            let (layer, new_zw, new_zv, measured, validation) = step().map_err(at(i))?;
            if measured < budget && validation < budget {
                break (layer, new_zw, new_zv, measured, validation);
            }
            if retry >= cfg.sampling.retries {
                return Err((
                    i,
                    Error::ContinuationFailure {
                        layer: i,
                        reason: format!(
                            "composite error {:e} (validation {:e}) not below budget {:e} after {} retries",
                            measured, validation, budget, retry
                        ),
                    },
                ));
            }
            retry += 1;
            level += 1;
            let redraw = || -> Result<_> {
                let samples = draw_samples(padded, domain, &cfg.sampling, level, seed)?;
                let zw = push_through(&modules, &samples.w)?;
                let zv = push_through(&modules, &samples.v)?;
                Ok((samples, zw, zv))
            };
            (samples, zw, zv) = redraw().map_err(at(i))?;
        };

        let mut image_points = new_zw.clone();
        image_points.extend(new_zv.iter().cloned());
        let tight = AxisBox::bounding(&image_points).map_err(at(i))?;
        let image_box = tight.expanded(cfg.sampling.pad_for(tight.diagonal()));

        carried = match &carried {
            Some(p) => {
                let moved = p
                    .pairs()
                    .iter()
                    .map(|(a, b)| Ok((layer.module.evaluate(a)?, layer.module.evaluate(b)?)))
                    .collect::<Result<Vec<_>>>()
                    .map_err(at(i))?;
                Some(PairSet::transported(moved, p.n_sep(), p.gamma()))
            }
            None => None,
        };
        let margin = carried.as_ref().map(|p| {
            p.pairs()
                .iter()
                .map(|(a, b)| distance(a, b))
                .fold(f64::INFINITY, f64::min)
        });

        traces.push(LayerTrace {
            layer: i,
            epsilon: budget,
            measured_error: measured,
            validation_error: validation,
            tr_margin: margin,
            image_box: image_box.clone(),
            fit: layer.fit,
            retries: retry,
            working_points: samples.w.len(),
            repairs: layer.repairs,
        });
        modules.push(layer.module);
        zw = new_zw;
        zv = new_zv;
        region = image_box;

        if measured < eps && (cfg.early_exit || budget < eps) {
            break;
        }
    }

    Ok((modules, traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_box;
    use crate::target::builtin_target;
    use proptest::prelude::*;

    #[test]
    fn schedule_examples() {
        let s = ErrorSchedule::default();
        assert_eq!(error_schedule(&s, 1), 1.0);
        assert_eq!(error_schedule(&s, 4), 0.125);
        let half = ErrorSchedule { eps1: 0.5, factor: 0.5 };
        assert_eq!(error_schedule(&half, 3), 0.125);
    }

    #[test]
    fn depth_examples() {
        assert_eq!(depth_for_tolerance(1.0, 0.1), 5);
        assert_eq!(depth_for_tolerance(1.0, 0.01), 8);
        assert_eq!(depth_for_tolerance(1.0, 2.0), 1);
        assert_eq!(depth_for_tolerance(1.0, 1.0), 1);
    }

    fn unit() -> AxisBox {
        make_box(vec![0.0], vec![1.0]).unwrap()
    }

    #[test]
    fn identity_stops_after_one_layer_with_early_exit() {
        let f = builtin_target("identity", 1).unwrap();
        let mut cfg = CascadeConfig::new(FamilyConfig::default());
        cfg.early_exit = true;
        let c = build_cascade(&f, "identity", &unit(), 0.5, &cfg, 1).unwrap();
        assert_eq!(c.depth(), 1);
        assert!(c.final_error() <= 1e-10);
        let x = [0.37];
        assert_eq!(
            evaluate_cascade(&c, &x, None).unwrap(),
            crate::approx::evaluate_module(&c.modules[0], &x).unwrap()
        );
    }

    #[test]
    fn budget_rule_builds_until_eps_n_is_below_eps() {
        let f = builtin_target("identity", 1).unwrap();
        let cfg = CascadeConfig::new(FamilyConfig::default());
        let c = build_cascade(&f, "identity", &unit(), 0.3, &cfg, 1).unwrap();
        assert_eq!(c.depth(), 3);
        assert!(c.traces.last().unwrap().epsilon < 0.3);
    }

    #[test]
    fn loose_tolerance_gives_single_layer() {
        let f = builtin_target("sine_wave", 1).unwrap();
        let cfg = CascadeConfig::new(FamilyConfig::default());
        let c = build_cascade(&f, "sine_wave", &unit(), 10.0, &cfg, 1).unwrap();
        assert_eq!(c.depth(), 1);
    }

    #[test]
    fn layer_range_is_checked() {
        let f = builtin_target("identity", 1).unwrap();
        let cfg = CascadeConfig::new(FamilyConfig::default());
        let c = build_cascade(&f, "identity", &unit(), 0.3, &cfg, 1).unwrap();
        assert!(matches!(
            evaluate_cascade(&c, &[0.5], Some(0)),
            Err(Error::LayerOutOfRange { layer: 0, depth: 3 })
        ));
        assert!(matches!(
            evaluate_cascade(&c, &[0.5], Some(4)),
            Err(Error::LayerOutOfRange { .. })
        ));
        assert!(matches!(
            evaluate_cascade(&c, &[0.5, 0.5], None),
            Err(Error::DimensionMismatch { .. })
        ));
        let fold = c.modules.iter().fold(vec![0.5], |z, m| m.evaluate(&z).unwrap());
        assert_eq!(evaluate_cascade(&c, &[0.5], Some(3)).unwrap(), fold);
    }

    #[test]
    fn depth_cap_is_enforced() {
        let f = builtin_target("sine_wave", 1).unwrap();
        let mut cfg = CascadeConfig::new(FamilyConfig::default());
        cfg.schedule.factor = 0.99;
        cfg.depth_slack = 1;
        assert!(matches!(
            build_cascade(&f, "sine_wave", &unit(), 0.1, &cfg, 1),
            Err(Error::DepthCapExceeded { cap: 5, .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let f = builtin_target("identity", 1).unwrap();
        let cfg = CascadeConfig::new(FamilyConfig::default());
        let c = build_cascade(&f, "identity", &unit(), 0.3, &cfg, 1).unwrap();
        let csv = traces_csv(&c.traces);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("1,1.0,"));
        assert_eq!(lines[1].split(',').count(), 8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn budgets_strictly_decrease(eps1 in 1e-3f64..10.0, factor in 0.05f64..0.95, i in 1usize..40) {
            let s = ErrorSchedule { eps1, factor };
            prop_assert!(error_schedule(&s, i + 1) < error_schedule(&s, i));
        }

        #[test]
        fn depth_formula_reaches_tolerance(eps1 in 1e-3f64..10.0, ratio in 1.0001f64..1e6) {
            let eps = eps1 / ratio;
            let n = depth_for_tolerance(eps1, eps);
            let s = ErrorSchedule { eps1, factor: 0.5 };
            prop_assert!(error_schedule(&s, n) <= eps * (1.0 + 1e-12));
            prop_assert!(n == 1 || error_schedule(&s, n - 1) > eps);
        }
    }
}
