//! Experiment configuration files.
//!
//! A config is one JSON object:
//!
//! ```json
//! {
//!   "kind": "approximate",
//!   "domain": { "lo": [0.0], "hi": [1.0] },
//!   "target": { "builtin": "sine_wave" },
//!   "eps": 0.01,
//!   "schedule": { "eps1": 1.0, "factor": 0.5, "depth_slack": 2, "early_exit": false },
//!   "family": { "kind": "grid", "max_per_axis": 1025, "validation_per_axis": 65 },
//!   "sampling": { "lattice_per_axis": 1025, "random_count": 1025 },
//!   "tr": { "n_sep": 10, "gamma": 1e-6, "tau": 1e-9, "max_pairs": 500, "ladder_steps": 20 },
//!   "seed": 7,
//!   "output": { "json": "report.json", "csv": "layers.csv" }
//! }
//! ```
//!
//! `target` holds exactly one of `exprs` (list of expressions in `x1..xd`),
//! `builtin` (name), or `posterior` (`probs`, `logits`, or `uniform: n`).
//! Classification requires a posterior; the other kinds reject it.
//! `repair_demo` reads an optional `demo_map` (expressions for the map to
//! repair, default the zero map) and does not need `eps`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cascade::{CascadeConfig, ErrorSchedule, FamilyConfig, SamplingConfig, TrConfig};
use crate::error::{Error, Result};
use crate::geometry::{make_box, AxisBox};
use crate::probability::{PosteriorTarget, DEFAULT_LIPSCHITZ_PAIRS};
use crate::target::{builtin_target, parse_target, Builtin, TargetFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Approximate,
    Classify,
    RepairDemo,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Approximate => "approximate",
            ExperimentKind::Classify => "classify",
            ExperimentKind::RepairDemo => "repair_demo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exprs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<PosteriorSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default = "one")]
    pub eps1: f64,
    #[serde(default = "half")]
    pub factor: f64,
    #[serde(default = "two")]
    pub depth_slack: u32,
    #[serde(default)]
    pub early_exit: bool,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn two() -> u32 {
    2
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            eps1: 1.0,
            factor: 0.5,
            depth_slack: 2,
            early_exit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

fn default_lipschitz_pairs() -> usize {
    DEFAULT_LIPSCHITZ_PAIRS
}
fn default_eval_points() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub domain: DomainSpec,
    pub target: TargetSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo_map: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub tr: TrConfig,
    /// Sample pairs for the softmax Lipschitz estimate.
    #[serde(default = "default_lipschitz_pairs")]
    pub lipschitz_pairs: usize,
    /// Fresh random points for the final error report.
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Reads, validates, and default-fills a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let value: Value = serde_json::from_str(text).map_err(parse_error)?;
    let Value::Object(map) = &value else {
        return Err(Error::ValidationError("config must be a JSON object".into()));
    };
    for field in ["kind", "domain", "target"] {
        if !map.contains_key(field) {
            return Err(Error::MissingField(field.into()));
        }
    }
    let mut cfg: ExperimentConfig = serde_json::from_str(text).map_err(parse_error)?;
    cfg.validate()?;
    cfg.fill_defaults();
    Ok(cfg)
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::ParseError {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::ValidationError(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive")))
    }
}

impl ExperimentConfig {
    pub fn domain_box(&self) -> Result<AxisBox> {
        make_box(self.domain.lo.clone(), self.domain.hi.clone()).map_err(|e| invalid(format!("domain: {e}")))
    }

    pub fn dim(&self) -> usize {
        self.domain.lo.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.domain_box()?;
        match (self.kind, self.eps) {
            (_, Some(eps)) => positive("eps", eps)?,
            (ExperimentKind::RepairDemo, None) => {}
            (_, None) => return Err(Error::MissingField("eps".into())),
        }
        let t = &self.target;
        let chosen = [t.exprs.is_some(), t.builtin.is_some(), t.posterior.is_some()]
            .iter()
            .filter(|b| **b)
            .count();
        if chosen != 1 {
            return Err(invalid("target must set exactly one of exprs, builtin, posterior"));
        }
        if (self.kind == ExperimentKind::Classify) != t.posterior.is_some() {
            return Err(invalid(
                "target.posterior is required for classify and only allowed there",
            ));
        }
        if let Some(p) = &t.posterior {
            let set = [p.probs.is_some(), p.logits.is_some(), p.uniform.is_some()]
                .iter()
                .filter(|b| **b)
                .count();
            if set != 1 {
                return Err(invalid(
                    "target.posterior must set exactly one of probs, logits, uniform",
                ));
            }
        }
        if self.demo_map.is_some() && self.kind != ExperimentKind::RepairDemo {
            return Err(invalid("demo_map is only used by repair_demo"));
        }
        // Surface parse errors of expressions during validation.
        if t.posterior.is_some() {
            self.posterior()?;
        } else {
            self.target_function()?;
        }
        if let Some(exprs) = &self.demo_map {
            parse_target(exprs, self.dim())?;
        }

        let s = &self.schedule;
        positive("schedule.eps1", s.eps1)?;
        if !(s.factor > 0.0 && s.factor < 1.0) {
            return Err(invalid("schedule.factor must lie in (0, 1)"));
        }
        if s.depth_slack == 0 {
            return Err(invalid("schedule.depth_slack must be positive"));
        }
        match self.family {
            FamilyConfig::Grid {
                max_per_axis,
                validation_per_axis,
            } => {
                if max_per_axis < 3 {
                    return Err(invalid("family.max_per_axis must be at least 3"));
                }
                if validation_per_axis < 2 {
                    return Err(invalid("family.validation_per_axis must be at least 2"));
                }
            }
            FamilyConfig::RandomFeatures {
                start_features,
                max_features,
                scale,
                ridge,
            } => {
                if start_features == 0 || max_features < start_features {
                    return Err(invalid("family needs 0 < start_features <= max_features"));
                }
                positive("family.scale", scale)?;
                if !(ridge >= 0.0) || !ridge.is_finite() {
                    return Err(invalid("family.ridge must be non-negative"));
                }
            }
        }
        let sm = &self.sampling;
        if sm.lattice_per_axis == Some(0) {
            return Err(invalid("sampling.lattice_per_axis must be positive"));
        }
        if !(sm.pad_fraction >= 0.0) || !sm.pad_fraction.is_finite() {
            return Err(invalid("sampling.pad_fraction must be non-negative"));
        }
        if sm.k_neighbors == 0 {
            return Err(invalid("sampling.k_neighbors must be positive"));
        }
        if sm.max_points == 0 {
            return Err(invalid("sampling.max_points must be positive"));
        }
        let tr = &self.tr;
        if tr.n_sep == 0 {
            return Err(invalid("tr.n_sep must be positive"));
        }
        positive("tr.gamma", tr.gamma)?;
        positive("tr.tau", tr.tau)?;
        if tr.max_pairs == 0 {
            return Err(invalid("tr.max_pairs must be positive"));
        }
        if let Some(d) = tr.delta {
            positive("tr.delta", d)?;
        }
        if let Some(b) = tr.fiber_bound {
            positive("tr.fiber_bound", b)?;
        }
        if tr.ladder_steps == 0 {
            return Err(invalid("tr.ladder_steps must be positive"));
        }
        if self.lipschitz_pairs < 2 {
            return Err(invalid("lipschitz_pairs must be at least 2"));
        }
        if self.eval_points == 0 {
            return Err(invalid("eval_points must be positive"));
        }
        Ok(())
    }

    /// Replaces dimension-dependent defaults by their values.
    pub fn fill_defaults(&mut self) {
        let d = self.dim();
        self.sampling.lattice_per_axis = Some(self.sampling.per_axis(d));
        self.sampling.random_count = Some(self.sampling.random_count(d));
    }

    pub fn cascade_config(&self) -> CascadeConfig {
        CascadeConfig {
            schedule: ErrorSchedule {
                eps1: self.schedule.eps1,
                factor: self.schedule.factor,
            },
            depth_slack: self.schedule.depth_slack,
            early_exit: self.schedule.early_exit,
            family: self.family,
            sampling: self.sampling,
            tr: self.tr,
        }
    }

    /// Target of `approximate` and `repair_demo`.
    pub fn target_function(&self) -> Result<TargetFunction> {
        let d = self.dim();
        match (&self.target.exprs, &self.target.builtin) {
            (Some(exprs), None) => parse_target(exprs, d),
            (None, Some(name)) => {
                if Builtin::from_name(name).is_none() {
                    return Err(invalid(format!(
                        "target.builtin must be one of {}",
                        Builtin::NAMES.join(", ")
                    )));
                }
                builtin_target(name, d)
            }
            _ => Err(invalid("target must set exprs or builtin")),
        }
    }

    pub fn posterior(&self) -> Result<PosteriorTarget> {
        let d = self.dim();
        let p = self
            .target
            .posterior
            .as_ref()
            .ok_or_else(|| invalid("target.posterior is missing"))?;
        if let Some(exprs) = &p.probs {
            PosteriorTarget::probabilities(parse_target(exprs, d)?)
        } else if let Some(exprs) = &p.logits {
            PosteriorTarget::logits(parse_target(exprs, d)?)
        } else if let Some(n) = p.uniform {
            PosteriorTarget::uniform(d, n).map_err(|_| invalid("target.posterior.uniform must be at least 2"))
        } else {
            Err(invalid("target.posterior must set probs, logits, or uniform"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"kind": "approximate", "domain": {"lo": [0], "hi": [1]},
        "target": {"builtin": "identity"}, "eps": 0.5}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.schedule, ScheduleSpec::default());
        assert_eq!(c.tr.gamma, 1e-6);
        assert_eq!(c.tr.tau, 1e-9);
        assert_eq!(c.sampling.pad_fraction, 0.05);
        assert_eq!(c.sampling.lattice_per_axis, Some(1025));
        assert_eq!(c.sampling.random_count, Some(1025));
        assert_eq!(c.family, FamilyConfig::default());
    }

    #[test]
    fn missing_and_invalid_fields() {
        let no_kind = r#"{"domain": {"lo": [0], "hi": [1]}, "target": {"builtin": "identity"}, "eps": 0.5}"#;
        assert!(matches!(parse_config(no_kind), Err(Error::MissingField(f)) if f == "kind"));
        let no_eps = r#"{"kind": "approximate", "domain": {"lo": [0], "hi": [1]}, "target": {"builtin": "identity"}}"#;
        assert!(matches!(parse_config(no_eps), Err(Error::MissingField(f)) if f == "eps"));
        let neg = MINIMAL.replace("0.5}", "-1}");
        match parse_config(&neg) {
            Err(Error::ValidationError(m)) => assert_eq!(m, "eps must be positive"),
            other => panic!("unexpected {other:?}"),
        }
        let inverted = MINIMAL.replace(r#""lo": [0], "hi": [1]"#, r#""lo": [1], "hi": [0]"#);
        assert!(matches!(parse_config(&inverted), Err(Error::ValidationError(m)) if m.starts_with("domain")));
        let two_targets = MINIMAL.replace(
            r#"{"builtin": "identity"}"#,
            r#"{"builtin": "identity", "exprs": ["x1"]}"#,
        );
        assert!(matches!(parse_config(&two_targets), Err(Error::ValidationError(_))));
    }

    #[test]
    fn parse_errors_carry_location() {
        match parse_config("{\n  \"kind\": approximate\n}") {
            Err(Error::ParseError { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
        let unknown = MINIMAL.replace("\"eps\"", "\"epsilon\": 1, \"eps\"");
        assert!(matches!(parse_config(&unknown), Err(Error::ParseError { .. })));
    }

    #[test]
    fn expression_errors_surface_at_load() {
        let bad = MINIMAL.replace(r#"{"builtin": "identity"}"#, r#"{"exprs": ["x1 +"]}"#);
        assert!(matches!(parse_config(&bad), Err(Error::Syntax(_))));
        let unknown = MINIMAL.replace("identity", "spiral");
        assert!(matches!(parse_config(&unknown), Err(Error::ValidationError(_))));
    }

    #[test]
    fn kind_specific_targets() {
        let classify = r#"{"kind": "classify", "domain": {"lo": [0], "hi": [1]},
            "target": {"posterior": {"uniform": 3}}, "eps": 0.1}"#;
        let c = parse_config(classify).unwrap();
        assert_eq!(c.posterior().unwrap().n_classes(), 3);
        let wrong = classify.replace("classify", "approximate");
        assert!(parse_config(&wrong).is_err());
        let demo = r#"{"kind": "repair_demo", "domain": {"lo": [0], "hi": [1]},
            "target": {"builtin": "identity"}}"#;
        assert!(parse_config(demo).unwrap().eps.is_none());
    }
}
