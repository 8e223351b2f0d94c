//! Function classes with a fit-to-tolerance operation.
//!
//! Two families are provided: a deterministic piecewise-multilinear grid
//! interpolant and seeded random tanh features with ridge regression. A
//! fitted module is a [`ModuleFunction`], optionally carrying the additive
//! recoverability perturbation `lambda * psi` applied by repair.

mod features;
mod grid;
mod linalg;

use serde::{Deserialize, Serialize};

pub use features::{draw_features, fit_random_features, solve_output_weights, FeatureLimits, Pair, DEFAULT_RIDGE};
pub use grid::{fit_grid_interpolant, fit_grid_to_anchors, grid_interpolant, grid_nodes, GridLimits};

use crate::error::{Error, Result};
use crate::geometry::AxisBox;
use crate::map::{check_dim, VectorMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModuleParams {
    /// Node values are row-major over the lattice (first axis slowest) with
    /// the output coordinate fastest.
    GridInterpolant {
        nodes_per_axis: Vec<usize>,
        values: Vec<f64>,
    },
    /// `weights` is `(directions.len() + 1) x dim_out`, row-major; the last
    /// row multiplies the constant feature.
    RandomFeatures {
        directions: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        weights: Vec<f64>,
        ridge: f64,
    },
}

/// Additive term `lambda * psi(z)` with `psi(z) = (z, 0, ..., 0) / l_norm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub lambda: f64,
    pub l_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleFunction {
    pub fit_box: AxisBox,
    pub dim_out: usize,
    pub params: ModuleParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub achieved_error: f64,
    pub size: usize,
    pub attempts: usize,
}

impl ModuleFunction {
    pub fn new(fit_box: AxisBox, dim_out: usize, params: ModuleParams) -> Self {
        Self {
            fit_box,
            dim_out,
            params,
            perturbation: None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.params {
            ModuleParams::GridInterpolant { .. } => "grid_interpolant",
            ModuleParams::RandomFeatures { .. } => "random_features",
        }
    }

    /// Node count or feature count.
    pub fn size(&self) -> usize {
        match &self.params {
            ModuleParams::GridInterpolant { nodes_per_axis, .. } => nodes_per_axis.iter().product(),
            ModuleParams::RandomFeatures { directions, .. } => directions.len(),
        }
    }

    /// Returns a copy with `lambda * psi` added to the output.
    pub fn with_perturbation(&self, perturbation: Perturbation) -> Result<Self> {
        if self.dim_out < self.fit_box.dim() {
            return Err(Error::InvalidArgument(
                "perturbation needs output width >= input width".into(),
            ));
        }
        let mut m = self.clone();
        m.perturbation = Some(perturbation);
        Ok(m)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.fit_box.dim(), x.len())?;
        let mut y = match &self.params {
            ModuleParams::GridInterpolant { nodes_per_axis, values } => {
                grid::eval_grid(&self.fit_box, nodes_per_axis, values, self.dim_out, x)
            }
            ModuleParams::RandomFeatures {
                directions,
                offsets,
                weights,
                ..
            } => features::eval_features(directions, offsets, weights, self.dim_out, x),
        };
        if let Some(p) = self.perturbation {
            for (yk, xk) in y.iter_mut().zip(x) {
                *yk += p.lambda * (xk / p.l_norm);
            }
        }
        Ok(y)
    }
}

pub fn evaluate_module(module: &ModuleFunction, point: &[f64]) -> Result<Vec<f64>> {
    module.evaluate(point)
}

impl VectorMap for ModuleFunction {
    fn dim_in(&self) -> usize {
        self.fit_box.dim()
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(x)
    }
}
