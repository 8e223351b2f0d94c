//! Deterministic report serialization.
//!
//! Floats are written in scientific notation with 17 significant digits
//! (`{:.16e}`), which round-trips every `f64`; non-finite values become
//! `null`. Struct fields keep declaration order.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::cascade::{traces_csv, Cascade, LayerTrace};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::probability::ClassifierError;
use crate::recoverability::LadderStep;

pub const VERSION: &str = concat!("uamlab ", env!("CARGO_PKG_VERSION"));

pub struct ReportFormatter {
    pretty: PrettyFormatter<'static>,
}

impl Default for ReportFormatter {
    fn default() -> Self {
        Self {
            pretty: PrettyFormatter::with_indent(b"  "),
        }
    }
}

fn write_float<W: ?Sized + Write>(w: &mut W, v: f64) -> io::Result<()> {
    if v.is_finite() {
        write!(w, "{v:.16e}")
    } else {
        w.write_all(b"null")
    }
}

impl Formatter for ReportFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write_float(w, v)
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write_float(w, v as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(w)
    }
}

/// Pretty JSON with the report float format and a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ReportFormatter::default());
    value.serialize(&mut ser).expect("report values serialize infallibly");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproximationSummary {
    pub depth: usize,
    pub depth_formula: usize,
    pub final_epsilon: f64,
    pub final_error: f64,
    pub final_validation_error: f64,
    /// Sup error of the full cascade on `eval_points` fresh random points.
    pub eval_error: f64,
    pub min_tr_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationSummary {
    pub n_classes: usize,
    pub lipschitz_used: f64,
    pub delta_used: f64,
    pub depth: usize,
    #[serde(flatten)]
    pub errors: ClassifierError,
    /// `lipschitz_used * logit_error`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepairSummary {
    pub n_pairs: usize,
    pub min_pair_separation: f64,
    pub l_norm: f64,
    pub delta: f64,
    pub lambda0: f64,
    pub margin_before: f64,
    pub margin_after: f64,
    pub case_one_bound: f64,
    pub sup_perturbation: f64,
    pub ladder: Vec<LadderStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Outcome {
    Approximation {
        summary: ApproximationSummary,
        cascade: Cascade,
    },
    Classification {
        summary: ClassificationSummary,
        cascade: Cascade,
    },
    Repair {
        summary: RepairSummary,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub version: String,
    pub kind: ExperimentKind,
    pub target_id: String,
    pub config: ExperimentConfig,
    pub result: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl Report {
    pub fn traces(&self) -> &[LayerTrace] {
        match &self.result {
            Outcome::Approximation { cascade, .. } | Outcome::Classification { cascade, .. } => &cascade.traces,
            Outcome::Repair { .. } => &[],
        }
    }

    /// JSON text; `with_timing = false` gives the deterministic part.
    pub fn to_json(&self, with_timing: bool) -> String {
        if with_timing {
            to_json_string(self)
        } else {
            let mut stripped = self.clone();
            stripped.timing = None;
            to_json_string(&stripped)
        }
    }

    pub fn to_csv(&self) -> String {
        traces_csv(self.traces())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the JSON report and, when requested, the layer-trace CSV.
pub fn write_report(report: &Report, out_json: impl AsRef<Path>, out_csv: Option<&Path>) -> Result<()> {
    write_file(out_json.as_ref(), &report.to_json(true))?;
    if let Some(csv) = out_csv {
        write_file(csv, &report.to_csv())?;
    }
    Ok(())
}
