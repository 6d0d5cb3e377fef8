//! Experiment configuration: a flat JSON document describing grid,
//! problem data, control, and numerics. Unknown keys are rejected so a
//! typo never silently runs the wrong experiment.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rdsteer_core::dynamics::{ControlSchedule, Nonlinearity};
use rdsteer_core::field::{Grid, ScalarField};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    pub lengths: Vec<f64>,
}

/// Reaction nonlinearity: `kind` with Lipschitz constant `l`; `c` is the
/// slope of the linear kind (defaults to `-l`, the dissipative choice).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySpec {
    pub kind: String,
    #[serde(default, rename = "L")]
    pub l: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

/// Builtin field vocabulary, or a CSV file in the on-disk field format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    /// Product of `sin(k_i pi x_i / len_i)` scaled by `amplitude`.
    Eigenmode {
        k: Vec<usize>,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Product of `x(len-x)/...` polynomial bumps, optionally modulated by
    /// `(1 + cos(m_i pi x_i / len_i))` per axis.
    ProductBump {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        modulation: Option<Vec<u32>>,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `amplitude/2 * (1 + cos(pi s))` inside `|s| < 1` with
    /// `s = (x - center)/width`, zero outside; product over axes.
    RaisedCosine {
        center: Vec<f64>,
        width: Vec<f64>,
        amplitude: f64,
    },
    Csv {
        path: String,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// One interval over the whole horizon with this profile.
    Static {
        field: FieldSpec,
    },
    /// The log-ratio profile `ln(target/initial)/T`; requires the target
    /// to sit below the initial state pointwise.
    LogRatio,
    /// Explicit breakpoints from 0 to the horizon, one profile each.
    Piecewise {
        breakpoints: Vec<f64>,
        fields: Vec<FieldSpec>,
    },
    /// Placeholder for configs consumed by the synthesize subcommand,
    /// which builds its own schedule.
    Synthesized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    #[serde(rename = "T")]
    T,
    Dt,
    N,
    Eps,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Run the canned randomized battery instead of the configured
    /// problem.
    #[serde(default)]
    pub suite: bool,
    /// Corrupt the trace before checking: "scaled_tail" or
    /// "negative_dip". The run must then fail.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub falsify: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub nonlinearity: NonlinearitySpec,
    pub initial: FieldSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<FieldSpec>,
    pub control: ControlSpec,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Times at which simulate writes state snapshots.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<f64>,
    /// Modal table size for oracle comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    /// Acceptance tolerance for the oracle discrepancy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySpec>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let file = File::open(path).map_err(|e| {
            CliError::Config(format!("cannot open config {}: {e}", path.display()))
        })?;
        let config: ExperimentConfig = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((config, base))
    }

    pub fn grid(&self) -> Result<Grid<f64>, CliError> {
        if self.grid.lengths.len() != self.grid.dim {
            return Err(CliError::Config(format!(
                "grid dim {} with {} lengths",
                self.grid.dim,
                self.grid.lengths.len()
            )));
        }
        Grid::new(self.grid.dim, self.grid.n, &self.grid.lengths).map_err(CliError::from)
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity<f64>, CliError> {
        let spec = &self.nonlinearity;
        match spec.kind.as_str() {
            "zero" => Ok(Nonlinearity::zero()),
            "linear" => {
                let slope = spec.c.unwrap_or(-spec.l);
                Nonlinearity::linear(slope, spec.l).map_err(CliError::from)
            }
            "scaled_sine" => Nonlinearity::scaled_sine(spec.l).map_err(CliError::from),
            "saturating" => Nonlinearity::saturating(spec.l).map_err(CliError::from),
            other => Err(CliError::Config(format!("unknown nonlinearity kind {other:?}"))),
        }
    }

    pub fn initial_field(&self, grid: Grid<f64>, base: &Path) -> Result<ScalarField<f64>, CliError> {
        resolve_field(&self.initial, grid, base)
    }

    pub fn target_field(
        &self,
        grid: Grid<f64>,
        base: &Path,
    ) -> Result<ScalarField<f64>, CliError> {
        let spec = self
            .target
            .as_ref()
            .ok_or_else(|| CliError::Config("config has no target field".into()))?;
        resolve_field(spec, grid, base)
    }

    /// Materializes the configured control into a schedule over the horizon.
    pub fn schedule(
        &self,
        grid: Grid<f64>,
        base: &Path,
    ) -> Result<ControlSchedule<f64>, CliError> {
        let horizon = self.horizon;
        match &self.control {
            ControlSpec::Zero => {
                ControlSchedule::constant(grid, 0.0, horizon).map_err(CliError::from)
            }
            ControlSpec::Constant { value } => {
                ControlSchedule::constant(grid, *value, horizon).map_err(CliError::from)
            }
            ControlSpec::Static { field } => {
                let v = resolve_field(field, grid, base)?;
                ControlSchedule::single(v, horizon).map_err(CliError::from)
            }
            ControlSpec::LogRatio => {
                let u0 = self.initial_field(grid, base)?;
                let ustar = self.target_field(grid, base)?;
                let v = rdsteer_core::synthesis::log_ratio_control(&u0, &ustar, horizon)
                    .map_err(CliError::precondition)?;
                ControlSchedule::single(v, horizon).map_err(CliError::from)
            }
            ControlSpec::Piecewise {
                breakpoints,
                fields,
            } => {
                let resolved: Result<Vec<_>, _> = fields
                    .iter()
                    .map(|f| resolve_field(f, grid, base))
                    .collect();
                let schedule = ControlSchedule::new(breakpoints.clone(), resolved?)
                    .map_err(CliError::from)?;
                if (schedule.horizon() - horizon).abs() > 1e-9 * horizon.max(1.0) {
                    return Err(CliError::Config(format!(
                        "piecewise control ends at {} but T = {horizon}",
                        schedule.horizon()
                    )));
                }
                Ok(schedule)
            }
            ControlSpec::Synthesized => Err(CliError::Config(
                "control kind \"synthesized\" has no explicit schedule; use the synthesize subcommand".into(),
            )),
        }
    }
}

fn resolve_field(
    spec: &FieldSpec,
    grid: Grid<f64>,
    base: &Path,
) -> Result<ScalarField<f64>, CliError> {
    let pi = std::f64::consts::PI;
    match spec {
        FieldSpec::Zero => Ok(ScalarField::zeros(grid)),
        FieldSpec::Eigenmode { k, amplitude } => {
            if k.len() != grid.dim() {
                return Err(CliError::Config(format!(
                    "eigenmode has {} mode numbers on a {}d grid",
                    k.len(),
                    grid.dim()
                )));
            }
            if k.iter().any(|&ki| ki == 0 || ki > grid.n()) {
                return Err(CliError::Config("eigenmode index out of range".into()));
            }
            let (kx, ky) = (k[0] as f64, k.get(1).copied().unwrap_or(1) as f64);
            let (lx, amp) = (grid.length(0), *amplitude);
            if grid.dim() == 1 {
                Ok(ScalarField::sample(grid, move |x, _| {
                    amp * (kx * pi * x / lx).sin()
                }))
            } else {
                let ly = grid.length(1);
                Ok(ScalarField::sample(grid, move |x, y| {
                    amp * (kx * pi * x / lx).sin() * (ky * pi * y / ly).sin()
                }))
            }
        }
        FieldSpec::ProductBump {
            modulation,
            amplitude,
        } => {
            if let Some(m) = modulation {
                if m.len() != grid.dim() {
                    return Err(CliError::Config(format!(
                        "product_bump has {} modulation entries on a {}d grid",
                        m.len(),
                        grid.dim()
                    )));
                }
            }
            let m: Vec<f64> = modulation
                .clone()
                .unwrap_or_default()
                .iter()
                .map(|&v| v as f64)
                .collect();
            let dim = grid.dim();
            let (lx, amp) = (grid.length(0), *amplitude);
            let ly = if dim == 2 { grid.length(1) } else { 1.0 };
            let axis = move |x: f64, len: f64, mi: f64| {
                let bump = x * (len - x) / (len * len);
                if mi > 0.0 {
                    bump * (1.0 + (mi * pi * x / len).cos())
                } else {
                    bump
                }
            };
            let m0 = m.first().copied().unwrap_or(0.0);
            let m1 = m.get(1).copied().unwrap_or(0.0);
            if dim == 1 {
                Ok(ScalarField::sample(grid, move |x, _| amp * axis(x, lx, m0)))
            } else {
                Ok(ScalarField::sample(grid, move |x, y| {
                    amp * axis(x, lx, m0) * axis(y, ly, m1)
                }))
            }
        }
        FieldSpec::RaisedCosine {
            center,
            width,
            amplitude,
        } => {
            if center.len() != grid.dim() || width.len() != grid.dim() {
                return Err(CliError::Config(
                    "raised_cosine center/width length must match the grid dimension".into(),
                ));
            }
            if width.iter().any(|&w| w <= 0.0) {
                return Err(CliError::Config("raised_cosine width must be positive".into()));
            }
            let (c0, w0, amp) = (center[0], width[0], *amplitude);
            let (c1, w1) = (
                center.get(1).copied().unwrap_or(0.0),
                width.get(1).copied().unwrap_or(1.0),
            );
            let dim = grid.dim();
            let axis = move |x: f64, c: f64, w: f64| {
                let s = (x - c) / w;
                if s.abs() < 1.0 {
                    0.5 * (1.0 + (pi * s).cos())
                } else {
                    0.0
                }
            };
            if dim == 1 {
                Ok(ScalarField::sample(grid, move |x, _| amp * axis(x, c0, w0)))
            } else {
                Ok(ScalarField::sample(grid, move |x, y| {
                    amp * axis(x, c0, w0) * axis(y, c1, w1)
                }))
            }
        }
        FieldSpec::Csv { path } => {
            let full = base.join(path);
            let file = File::open(&full).map_err(|e| {
                CliError::Config(format!("cannot open field csv {}: {e}", full.display()))
            })?;
            let field = ScalarField::read_csv(BufReader::new(file)).map_err(CliError::from)?;
            if field.grid() != &grid {
                return Err(CliError::Config(format!(
                    "field csv {} does not match the configured grid",
                    full.display()
                )));
            }
            Ok(field)
        }
    }
}
