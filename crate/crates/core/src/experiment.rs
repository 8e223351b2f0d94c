//! Runs one configured experiment and assembles its report.

use std::time::Instant;

use crate::cascade::{build_cascade, depth_for_tolerance};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::geometry::{lattice_samples, random_samples, sup_distance, AxisBox, SampleSet};
use crate::map::{FnMap, Padded, VectorMap};
use crate::probability::{build_classifier, classifier_error};
use crate::recoverability::{repair, sample_separated_pairs, tr_margin};
use crate::report::{ApproximationSummary, ClassificationSummary, Outcome, RepairSummary, Report, Timing, VERSION};
use crate::rng::SplitMix64;
use crate::target::parse_target;

/// Default repair step of the repair demo when `tr.delta` is unset.
pub const DEMO_DELTA: f64 = 0.1;

fn eval_set(domain: &AxisBox, count: usize, seed: u64) -> Result<SampleSet> {
    random_samples(domain, count, SplitMix64::derive(seed, 7).next_u64())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let mut config = config.clone();
    config.fill_defaults();
    let start = Instant::now();
    let domain = config.domain_box()?;
    let (target_id, result) = match config.kind {
        ExperimentKind::Approximate => approximate(&config, &domain)?,
        ExperimentKind::Classify => classify(&config, &domain)?,
        ExperimentKind::RepairDemo => repair_demo(&config, &domain)?,
    };
    Ok(Report {
        version: VERSION.to_string(),
        kind: config.kind,
        target_id,
        config,
        result,
        timing: Some(Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
        }),
    })
}

fn required_eps(config: &ExperimentConfig) -> Result<f64> {
    config.eps.ok_or_else(|| Error::MissingField("eps".into()))
}

fn approximate(config: &ExperimentConfig, domain: &AxisBox) -> Result<(String, Outcome)> {
    let eps = required_eps(config)?;
    let target = config.target_function()?;
    let cascade = build_cascade(
        &target,
        &target.id(),
        domain,
        eps,
        &config.cascade_config(),
        config.seed,
    )?;
    let padded = Padded {
        inner: &target,
        width: cascade.width,
    };
    let eval_error = sup_distance(&cascade, &padded, &eval_set(domain, config.eval_points, config.seed)?)?;
    let last = cascade.traces.last().expect("cascades have at least one layer");
    let summary = ApproximationSummary {
        depth: cascade.depth(),
        depth_formula: depth_for_tolerance(config.schedule.eps1, eps),
        final_epsilon: last.epsilon,
        final_error: last.measured_error,
        final_validation_error: last.validation_error,
        eval_error,
        min_tr_margin: cascade.traces.iter().filter_map(|t| t.tr_margin).reduce(f64::min),
    };
    Ok((target.id(), Outcome::Approximation { summary, cascade }))
}

fn classify(config: &ExperimentConfig, domain: &AxisBox) -> Result<(String, Outcome)> {
    let eps = required_eps(config)?;
    let posterior = config.posterior()?;
    let classifier = build_classifier(
        &posterior,
        domain,
        eps,
        &config.cascade_config(),
        config.lipschitz_pairs,
        config.seed,
    )?;
    let errors = classifier_error(
        &classifier,
        &posterior,
        &eval_set(domain, config.eval_points, config.seed)?,
    )?;
    let summary = ClassificationSummary {
        n_classes: classifier.n_classes,
        lipschitz_used: classifier.lipschitz_used,
        delta_used: classifier.delta_used,
        depth: classifier.logit_cascade.depth(),
        errors,
        bound: classifier.lipschitz_used * errors.logit_error,
    };
    Ok((
        posterior.id(),
        Outcome::Classification {
            summary,
            cascade: classifier.logit_cascade,
        },
    ))
}

fn repair_demo(config: &ExperimentConfig, domain: &AxisBox) -> Result<(String, Outcome)> {
    let target = config.target_function()?;
    let d = domain.dim();
    let width = d.max(target.dim_out());
    let map: Box<dyn VectorMap> = match &config.demo_map {
        Some(exprs) => {
            let g = parse_target(exprs, d)?;
            if g.dim_out() < d {
                return Err(Error::ValidationError(format!(
                    "demo_map needs at least {d} outputs to carry the embedding"
                )));
            }
            Box::new(g)
        }
        None => Box::new(FnMap::new(d, width, move |_: &[f64]| vec![0.0; width])),
    };

    let per_axis = config.sampling.per_axis(d);
    let lattice = lattice_samples(domain, per_axis, config.sampling.max_points)?;
    let pair_seed = SplitMix64::derive(config.seed, 3).next_u64();
    let pairs = sample_separated_pairs(
        &lattice,
        &target,
        config.tr.n_sep,
        config.tr.gamma,
        config.tr.max_pairs,
        pair_seed,
    )?;
    let delta = config.tr.delta.unwrap_or(DEMO_DELTA);
    let before = tr_margin(&map, &pairs)?;
    let repaired = repair(
        &map,
        &pairs,
        domain.sup_norm(),
        delta,
        config.tr.tau,
        config.tr.ladder_steps,
    )?;
    let probe = lattice.union(&eval_set(domain, config.eval_points, config.seed)?);
    let sup_perturbation = sup_distance(&repaired.repaired, &map, &probe)?;
    let min_sep = pairs.min_separation();
    let summary = RepairSummary {
        n_pairs: pairs.len(),
        min_pair_separation: min_sep,
        l_norm: repaired.l_norm,
        delta,
        lambda0: repaired.lambda0,
        margin_before: before,
        margin_after: repaired.margin_after,
        case_one_bound: repaired.lambda0 * min_sep / repaired.l_norm,
        sup_perturbation,
        ladder: repaired.ladder,
    };
    Ok((target.id(), Outcome::Repair { summary }))
}
