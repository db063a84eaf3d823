//! JSON run configuration.
//!
//! The schema is strict: unknown keys anywhere are errors, so typos in
//! scientific runs fail loudly instead of silently falling back to defaults.
//! Every numeric field is validated against the library preconditions before
//! any computation starts.

use serde::{Deserialize, Serialize};
use warpcell::model::{
    DiffeoLaw, PeriodicMatrixField, PeriodicScalarField, ShapeFn, SourceTerm, XDist,
};

/// Top-level configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    /// Command-specific block; validated by the selected subcommand.
    #[serde(default)]
    pub experiment: serde_json::Value,
    /// Output directory; overridden by `--out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub a_per: FieldSpec,
    pub f: SourceSpec,
    pub diffeo: DiffeoSpec,
}

/// Periodic coefficient. Scalar kinds (`constant`, `piecewise`) serve the 1D
/// commands; all kinds serve the 2D commands as isotropic matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    Piecewise {
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
    /// `a(x_axis) · Id`.
    Laminate {
        #[serde(default)]
        axis: usize,
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
    /// Half-cell checkerboard of two values.
    Checkerboard {
        values: [f64; 2],
    },
    Identity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Constant { value: f64 },
    Sine { amplitude: f64 },
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffeoSpec {
    /// Amplitude in `[0, 1)`; `0` is the identity deformation.
    pub m: f64,
    #[serde(default = "default_x_dist")]
    pub x_dist: XDistSpec,
    #[serde(default = "default_shape")]
    pub g_per: ShapeSpec,
}

fn default_x_dist() -> XDistSpec {
    XDistSpec::UniformSym
}

fn default_shape() -> ShapeSpec {
    ShapeSpec::Sine
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XDistSpec {
    UniformSym,
    UniformPos,
    TwoPoint,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeSpec {
    Sine,
    Haar,
}

impl RunConfig {
    pub fn from_file(path: &std::path::Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config: {e}"))
    }
}

impl ModelConfig {
    pub fn law(&self) -> Result<DiffeoLaw, String> {
        let x = match self.diffeo.x_dist {
            XDistSpec::UniformSym => XDist::UniformSym,
            XDistSpec::UniformPos => XDist::UniformPos,
            XDistSpec::TwoPoint => XDist::TwoPoint,
        };
        let shape = match self.diffeo.g_per {
            ShapeSpec::Sine => ShapeFn::Sine,
            ShapeSpec::Haar => ShapeFn::Haar,
        };
        DiffeoLaw::new(self.diffeo.m, x, shape).map_err(|e| e.to_string())
    }

    pub fn scalar_field(&self) -> Result<PeriodicScalarField, String> {
        match &self.a_per {
            FieldSpec::Constant { value } => {
                PeriodicScalarField::constant(*value).map_err(|e| e.to_string())
            }
            FieldSpec::Piecewise { breaks, values }
            | FieldSpec::Laminate { breaks, values, .. } => {
                PeriodicScalarField::piecewise(breaks.clone(), values.clone())
                    .map_err(|e| e.to_string())
            }
            other => Err(format!(
                "coefficient kind {other:?} is not usable as a 1D scalar field"
            )),
        }
    }

    pub fn matrix_field(&self) -> Result<PeriodicMatrixField, String> {
        match &self.a_per {
            FieldSpec::Identity => Ok(PeriodicMatrixField::identity()),
            FieldSpec::Constant { value } => PeriodicMatrixField::laminate(
                0,
                PeriodicScalarField::constant(*value).map_err(|e| e.to_string())?,
            )
            .map_err(|e| e.to_string()),
            FieldSpec::Piecewise { breaks, values } => PeriodicMatrixField::laminate(
                0,
                PeriodicScalarField::piecewise(breaks.clone(), values.clone())
                    .map_err(|e| e.to_string())?,
            )
            .map_err(|e| e.to_string()),
            FieldSpec::Laminate {
                axis,
                breaks,
                values,
            } => PeriodicMatrixField::laminate(
                *axis,
                PeriodicScalarField::piecewise(breaks.clone(), values.clone())
                    .map_err(|e| e.to_string())?,
            )
            .map_err(|e| e.to_string()),
            FieldSpec::Checkerboard { values } => {
                PeriodicMatrixField::checkerboard(values[0], values[1]).map_err(|e| e.to_string())
            }
        }
    }

    pub fn source(&self) -> Result<SourceTerm, String> {
        match &self.f {
            SourceSpec::Constant { value } => Ok(SourceTerm::constant(*value)),
            SourceSpec::Sine { amplitude } => Ok(SourceTerm::sine(*amplitude)),
            SourceSpec::Piecewise { breaks, values } => {
                SourceTerm::piecewise(breaks.clone(), values.clone()).map_err(|e| e.to_string())
            }
        }
    }
}

/// Parses a command's experiment block strictly from the config value.
pub fn experiment<T: for<'de> Deserialize<'de> + Default>(
    value: &serde_json::Value,
) -> Result<T, String> {
    if value.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(value.clone()).map_err(|e| format!("invalid experiment block: {e}"))
}

// Per-command experiment blocks.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualMcExperiment {
    pub eps_list: Vec<f64>,
    pub samples: usize,
    pub grid_points: usize,
    /// Probe abscissa for the CLT/variance checks.
    pub probe_x: f64,
    /// Also accumulate the H¹ corrector error per realization.
    pub with_h1: bool,
}

impl Default for ResidualMcExperiment {
    fn default() -> Self {
        ResidualMcExperiment {
            eps_list: vec![1.0 / 25.0, 1.0 / 50.0, 1.0 / 100.0, 1.0 / 200.0, 1.0 / 400.0],
            samples: 2000,
            grid_points: 101,
            probe_x: 0.5,
            with_h1: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitCheckExperiment {
    pub eps: f64,
    pub samples: usize,
    pub x: f64,
}

impl Default for LimitCheckExperiment {
    fn default() -> Self {
        LimitCheckExperiment {
            eps: 1.0 / 400.0,
            samples: 20_000,
            x: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentCheckExperiment {
    pub p_list: Vec<u32>,
    pub eps_list: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub samples: usize,
}

impl Default for MomentCheckExperiment {
    fn default() -> Self {
        MomentCheckExperiment {
            p_list: vec![1, 2],
            eps_list: vec![1.0 / 25.0, 1.0 / 50.0, 1.0 / 100.0, 1.0 / 200.0, 1.0 / 400.0],
            alpha: 0.0,
            beta: 1.0,
            samples: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectorNdExperiment {
    pub d: usize,
    pub n_cells: usize,
    pub refine: usize,
    pub tol: f64,
    pub dump_field: bool,
}

impl Default for CorrectorNdExperiment {
    fn default() -> Self {
        CorrectorNdExperiment {
            d: 2,
            n_cells: 4,
            refine: 8,
            tol: 1e-10,
            dump_field: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceExperiment {
    pub d: usize,
    pub n_list: Vec<usize>,
    pub samples: usize,
    pub refine: usize,
    pub tol: f64,
}

impl Default for ConvergenceExperiment {
    fn default() -> Self {
        ConvergenceExperiment {
            d: 2,
            n_list: vec![2, 4, 8, 16],
            samples: 32,
            refine: 8,
            tol: 1e-10,
        }
    }
}
