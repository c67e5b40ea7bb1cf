//! Run configuration: a TOML schema covering the model, the discretization,
//! the initial state, the Newton solver and the output options, plus the
//! validation that turns a parsed file into ready-to-use objects.
//!
//! Parse errors (malformed TOML, unknown keys, wrong shapes) surface as
//! [`Error::ParseError`] and carry line/column information; a well-formed
//! file that violates an invariant surfaces as [`Error::ValidationError`]
//! naming the offending key.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fespace::{build_space, FeField, FeSpace};
use crate::integrator::NewtonSettings;
use crate::mesh::{mesh_width, Mesh};
use crate::model::{ModelInputs, ModelParams};
use crate::projections::{h1_project, TimeGrid};

/// Default time-step factor: `tau = 0.16 · h` unless the file says otherwise.
pub const DEFAULT_TAU_FACTOR: f64 = 0.16;

/// The canonical benchmark configuration shipped with the crate
/// (`configs/reference.toml`).
pub const REFERENCE_CONFIG: &str = include_str!("../configs/reference.toml");

/// How the initial phase field is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// The benchmark profile `0.2·sin(4πx)·sin(2πy) + 0.2`.
    Reference,
    /// `amplitude · sin(2π·freq_x·x) · sin(2π·freq_y·y) + offset`.
    Separable {
        amplitude: f64,
        freq_x: f64,
        freq_y: f64,
        offset: f64,
    },
    /// Nodal coefficients from a two-column CSV (`dof_index,value`), the
    /// format the trajectory writer emits.
    Coefficients(PathBuf),
}

impl InitialCondition {
    /// Instantiate the field on a space. Analytic profiles enter through the
    /// H¹-elliptic projection (the discrete initial state the error analysis
    /// is formulated for); coefficient files must match the space's dof count
    /// exactly.
    pub fn build(&self, space: &Arc<FeSpace>) -> Result<FeField> {
        match self {
            // The benchmark profile is the separable field with these
            // parameters; sharing the code path keeps the two bit-identical.
            InitialCondition::Reference => InitialCondition::Separable {
                amplitude: 0.2,
                freq_x: 2.0,
                freq_y: 1.0,
                offset: 0.2,
            }
            .build(space),
            InitialCondition::Separable {
                amplitude,
                freq_x,
                freq_y,
                offset,
            } => {
                use std::f64::consts::PI;
                let (a, fx, fy, c) = (*amplitude, *freq_x, *freq_y, *offset);
                let (wx, wy) = (2.0 * PI * fx, 2.0 * PI * fy);
                h1_project(
                    space,
                    |x, y| a * (wx * x).sin() * (wy * y).sin() + c,
                    |x, y| {
                        (
                            a * wx * (wx * x).cos() * (wy * y).sin(),
                            a * wy * (wx * x).sin() * (wy * y).cos(),
                        )
                    },
                )
            }
            InitialCondition::Coefficients(path) => read_coefficients(path, space),
        }
    }
}

pub(crate) fn read_coefficients(path: &Path, space: &Arc<FeSpace>) -> Result<FeField> {
    let bad = |reason: String| Error::ValidationError {
        key: "initial.coefficients_path".into(),
        reason: format!("{}: {reason}", path.display()),
    };
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let mut coeffs = vec![f64::NAN; space.dof_count];
    let mut filled = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let first = parts.next().unwrap_or("").trim();
        // Tolerate a header row (`dof_index,value`).
        let Ok(idx) = first.parse::<usize>() else {
            if lineno == 0 {
                continue;
            }
            return Err(bad(format!("line {}: expected a dof index", lineno + 1)));
        };
        let value = parts
            .next()
            .map(str::trim)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| bad(format!("line {}: expected `index,value`", lineno + 1)))?;
        if !value.is_finite() {
            return Err(bad(format!("line {}: coefficient is not finite", lineno + 1)));
        }
        if idx >= space.dof_count {
            return Err(bad(format!(
                "line {}: dof index {idx} out of range for {} dofs",
                lineno + 1,
                space.dof_count
            )));
        }
        if !coeffs[idx].is_nan() {
            return Err(bad(format!("line {}: duplicate dof index {idx}", lineno + 1)));
        }
        coeffs[idx] = value;
        filled += 1;
    }
    if filled != space.dof_count {
        return Err(bad(format!(
            "file provides {filled} coefficients but the level-{} space has {}",
            space.mesh.level, space.dof_count
        )));
    }
    Ok(space.field_from_coeffs(coeffs))
}

/// What the run writes besides the always-on diagnostics trace.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    /// Times at which sampled snapshots are emitted; validated to lie on the
    /// time grid.
    pub snapshot_times: Vec<f64>,
    /// Node indices corresponding to `snapshot_times`.
    pub snapshot_nodes: Vec<usize>,
    /// Snapshots are sampled on an `m × m` uniform grid.
    pub sample_grid: usize,
    /// Write per-node coefficient files (`phi_*.csv`, `mu_*.csv`).
    pub write_fields: bool,
    /// Write the mesh tables alongside the trajectory.
    pub write_mesh: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            snapshot_times: Vec::new(),
            snapshot_nodes: Vec::new(),
            sample_grid: 64,
            write_fields: true,
            write_mesh: false,
        }
    }
}

/// A fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelParams,
    /// Mesh refinement level `k` (the grid has `8·2^k` cells per side).
    pub level: u32,
    pub grid: TimeGrid,
    pub initial: InitialCondition,
    pub solver: NewtonSettings,
    pub output: OutputSettings,
}

impl RunConfig {
    /// Parse and validate a TOML string.
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::ParseError(e.to_string()))?;
        raw.validate()
    }

    /// The benchmark configuration (quartic double-well, degenerate mobility,
    /// level 0, `T = 0.16`).
    pub fn reference() -> RunConfig {
        RunConfig::from_toml_str(REFERENCE_CONFIG).expect("shipped reference config is valid")
    }

    /// Build the finite-element space for the configured level.
    pub fn space(&self) -> Result<Arc<FeSpace>> {
        Ok(build_space(Mesh::build_uniform(self.level)?))
    }

    /// Instantiate the configured initial condition on a space.
    pub fn initial_field(&self, space: &Arc<FeSpace>) -> Result<FeField> {
        self.initial.build(space)
    }

    /// Canonical TOML echo of the validated configuration. Reparsing the echo
    /// reproduces the configuration; runs embed it in their output headers so
    /// results stay attributable.
    pub fn echo_toml(&self) -> String {
        let inputs = self.model.to_inputs();
        let initial = match &self.initial {
            InitialCondition::Reference => EchoInitial {
                preset: Some("reference"),
                ..EchoInitial::default()
            },
            InitialCondition::Separable {
                amplitude,
                freq_x,
                freq_y,
                offset,
            } => EchoInitial {
                amplitude: Some(*amplitude),
                freq_x: Some(*freq_x),
                freq_y: Some(*freq_y),
                offset: Some(*offset),
                ..EchoInitial::default()
            },
            InitialCondition::Coefficients(path) => EchoInitial {
                coefficients_path: Some(path.to_string_lossy().into_owned()),
                ..EchoInitial::default()
            },
        };
        let echo = Echo {
            model: EchoModel {
                gamma: inputs.gamma,
                potential: inputs.f_coeffs,
                mobility: inputs.b_coeffs.clone(),
                mobility_floor: inputs.b_floor,
                admissible_range: [inputs.admissible_range.0, inputs.admissible_range.1],
            },
            discretization: EchoDiscretization {
                level: self.level,
                t_final: self.grid.t_end(),
                tau: self.grid.tau,
            },
            initial,
            solver: EchoSolver {
                newton_tol: self.solver.tol,
                max_iter: self.solver.max_iter,
            },
            output: EchoOutput {
                snapshot_times: self.output.snapshot_times.clone(),
                sample_grid: self.output.sample_grid,
                write_fields: self.output.write_fields,
                write_mesh: self.output.write_mesh,
            },
        };
        toml::to_string(&echo).expect("echo schema serializes")
    }
}

/// Parse and validate a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ParseError(format!("{}: {e}", path.display())))?;
    RunConfig::from_toml_str(&text)
}

fn missing(key: &str) -> Error {
    Error::ValidationError {
        key: key.into(),
        reason: "required key is missing".into(),
    }
}

// ---------------------------------------------------------------------------
// Raw (serde) layer: everything optional, validated by hand so errors name
// the key instead of aborting at the first missing field.
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<RawModel>,
    discretization: Option<RawDiscretization>,
    initial: Option<RawInitial>,
    solver: Option<RawSolver>,
    output: Option<RawOutput>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    gamma: Option<f64>,
    potential: Option<RawPotential>,
    mobility: Option<Vec<f64>>,
    mobility_floor: Option<f64>,
    admissible_range: Option<[f64; 2]>,
}

/// The quartic potential, either as ascending coefficients `[c0..c4]` or in
/// the factored double-well form `scale·(s−root)²·(s+root)²`.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawPotential {
    Coefficients(Vec<f64>),
    Factored(FactoredPotential),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FactoredPotential {
    scale: f64,
    root: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiscretization {
    level: Option<u32>,
    #[serde(rename = "T")]
    t_final: Option<f64>,
    tau: Option<f64>,
    tau_factor: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    preset: Option<String>,
    amplitude: Option<f64>,
    freq_x: Option<f64>,
    freq_y: Option<f64>,
    offset: Option<f64>,
    coefficients_path: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    newton_tol: Option<f64>,
    max_iter: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    snapshot_times: Option<Vec<f64>>,
    sample_grid: Option<usize>,
    write_fields: Option<bool>,
    write_mesh: Option<bool>,
}

impl RawConfig {
    fn validate(self) -> Result<RunConfig> {
        let model = self.model.ok_or_else(|| missing("model"))?.validate()?;
        let disc = self.discretization.ok_or_else(|| missing("discretization"))?;
        let (level, grid) = disc.validate()?;
        let initial = self.initial.map_or(Ok(InitialCondition::Reference), RawInitial::validate)?;
        let solver = self.solver.map_or(Ok(NewtonSettings::default()), RawSolver::validate)?;
        let output = self
            .output
            .map_or(Ok(OutputSettings::default()), |o| o.validate(&grid))?;
        Ok(RunConfig {
            model,
            level,
            grid,
            initial,
            solver,
            output,
        })
    }
}

impl RawModel {
    fn validate(self) -> Result<ModelParams> {
        let gamma = self.gamma.ok_or_else(|| missing("model.gamma"))?;
        let f_coeffs = match self.potential.ok_or_else(|| missing("model.potential"))? {
            RawPotential::Coefficients(v) => {
                <[f64; 5]>::try_from(v.as_slice()).map_err(|_| Error::ValidationError {
                    key: "model.potential".into(),
                    reason: format!(
                        "expected 5 ascending coefficients (constant through quartic), got {}",
                        v.len()
                    ),
                })?
            }
            RawPotential::Factored(f) => ModelInputs::factored_potential(f.scale, f.root),
        };
        let b_coeffs = self.mobility.ok_or_else(|| missing("model.mobility"))?;
        let range = self
            .admissible_range
            .ok_or_else(|| missing("model.admissible_range"))?;
        if !(range[0] < range[1]) {
            return Err(Error::ValidationError {
                key: "model.admissible_range".into(),
                reason: format!("range [{}, {}] is empty", range[0], range[1]),
            });
        }
        ModelInputs {
            gamma,
            f_coeffs,
            b_coeffs,
            b_floor: self.mobility_floor.unwrap_or(0.0),
            admissible_range: (range[0], range[1]),
        }
        .validate()
    }
}

impl RawDiscretization {
    fn validate(self) -> Result<(u32, TimeGrid)> {
        let level = self.level.ok_or_else(|| missing("discretization.level"))?;
        if level > crate::mesh::MAX_LEVEL {
            return Err(Error::LevelTooLarge {
                level,
                max: crate::mesh::MAX_LEVEL,
            });
        }
        let t_final = self.t_final.ok_or_else(|| missing("discretization.T"))?;
        let tau = match (self.tau, self.tau_factor) {
            (Some(_), Some(_)) => {
                return Err(Error::ValidationError {
                    key: "discretization.tau".into(),
                    reason: "specify either tau or tau_factor, not both".into(),
                })
            }
            (Some(tau), None) => tau,
            (None, factor) => {
                let factor = factor.unwrap_or(DEFAULT_TAU_FACTOR);
                if !(factor > 0.0) || !factor.is_finite() {
                    return Err(Error::ValidationError {
                        key: "discretization.tau_factor".into(),
                        reason: format!("must be positive and finite, got {factor}"),
                    });
                }
                factor * mesh_width(level)
            }
        };
        let grid = TimeGrid::from_final_time(t_final, tau).map_err(|e| match e {
            Error::ValidationError { key, reason } => Error::ValidationError {
                key: if key == "t_final" {
                    "discretization.T".into()
                } else {
                    format!("discretization.{key}")
                },
                reason,
            },
            other => other,
        })?;
        Ok((level, grid))
    }
}

impl RawInitial {
    fn validate(self) -> Result<InitialCondition> {
        let has_separable = self.amplitude.is_some()
            || self.freq_x.is_some()
            || self.freq_y.is_some()
            || self.offset.is_some();
        match (self.preset, self.coefficients_path, has_separable) {
            (Some(p), None, false) => {
                if p == "reference" {
                    Ok(InitialCondition::Reference)
                } else {
                    Err(Error::ValidationError {
                        key: "initial.preset".into(),
                        reason: format!("unknown preset `{p}` (available: \"reference\")"),
                    })
                }
            }
            (None, Some(path), false) => Ok(InitialCondition::Coefficients(PathBuf::from(path))),
            (None, None, true) => {
                let amplitude = self.amplitude.ok_or_else(|| missing("initial.amplitude"))?;
                let freq_x = self.freq_x.ok_or_else(|| missing("initial.freq_x"))?;
                let freq_y = self.freq_y.ok_or_else(|| missing("initial.freq_y"))?;
                for (key, f) in [("initial.freq_x", freq_x), ("initial.freq_y", freq_y)] {
                    if f.fract() != 0.0 || !f.is_finite() {
                        return Err(Error::ValidationError {
                            key: key.into(),
                            reason: format!(
                                "frequency must be a whole number of periods on the unit square, got {f}"
                            ),
                        });
                    }
                }
                Ok(InitialCondition::Separable {
                    amplitude,
                    freq_x,
                    freq_y,
                    offset: self.offset.unwrap_or(0.0),
                })
            }
            (None, None, false) => Ok(InitialCondition::Reference),
            _ => Err(Error::ValidationError {
                key: "initial".into(),
                reason: "give exactly one of preset, amplitude/freq_x/freq_y[/offset], \
                         or coefficients_path"
                    .into(),
            }),
        }
    }
}

impl RawSolver {
    fn validate(self) -> Result<NewtonSettings> {
        let defaults = NewtonSettings::default();
        let tol = self.newton_tol.unwrap_or(defaults.tol);
        if !(tol > 0.0) || !tol.is_finite() {
            return Err(Error::ValidationError {
                key: "solver.newton_tol".into(),
                reason: format!("must be positive and finite, got {tol}"),
            });
        }
        let max_iter = self.max_iter.unwrap_or(defaults.max_iter);
        if max_iter == 0 {
            return Err(Error::ValidationError {
                key: "solver.max_iter".into(),
                reason: "must be at least 1".into(),
            });
        }
        Ok(NewtonSettings { tol, max_iter })
    }
}

impl RawOutput {
    fn validate(self, grid: &TimeGrid) -> Result<OutputSettings> {
        let defaults = OutputSettings::default();
        let sample_grid = self.sample_grid.unwrap_or(defaults.sample_grid);
        if sample_grid == 0 {
            return Err(Error::ValidationError {
                key: "output.sample_grid".into(),
                reason: "must be at least 1".into(),
            });
        }
        let snapshot_times = self.snapshot_times.unwrap_or_default();
        let mut snapshot_nodes = Vec::with_capacity(snapshot_times.len());
        for &t in &snapshot_times {
            let n = (t / grid.tau).round();
            let on_grid =
                n >= 0.0 && n <= grid.n_steps as f64 && (t - n * grid.tau).abs() <= 1e-9;
            if !on_grid {
                return Err(Error::ValidationError {
                    key: "output.snapshot_times".into(),
                    reason: format!(
                        "time {t} does not lie on the grid (tau = {}, T = {})",
                        grid.tau,
                        grid.t_end()
                    ),
                });
            }
            snapshot_nodes.push(n as usize);
        }
        Ok(OutputSettings {
            snapshot_times,
            snapshot_nodes,
            sample_grid,
            write_fields: self.write_fields.unwrap_or(defaults.write_fields),
            write_mesh: self.write_mesh.unwrap_or(defaults.write_mesh),
        })
    }
}

// ---------------------------------------------------------------------------
// Echo layer: the canonical serialization of a validated configuration.
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Echo {
    model: EchoModel,
    discretization: EchoDiscretization,
    initial: EchoInitial,
    solver: EchoSolver,
    output: EchoOutput,
}

#[derive(Serialize)]
struct EchoModel {
    gamma: f64,
    potential: [f64; 5],
    mobility: Vec<f64>,
    mobility_floor: f64,
    admissible_range: [f64; 2],
}

#[derive(Serialize)]
struct EchoDiscretization {
    level: u32,
    #[serde(rename = "T")]
    t_final: f64,
    tau: f64,
}

#[derive(Serialize, Default)]
struct EchoInitial {
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    freq_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    freq_y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offset: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coefficients_path: Option<String>,
}

#[derive(Serialize)]
struct EchoSolver {
    newton_tol: f64,
    max_iter: usize,
}

#[derive(Serialize)]
struct EchoOutput {
    snapshot_times: Vec<f64>,
    sample_grid: usize,
    write_fields: bool,
    write_mesh: bool,
}
