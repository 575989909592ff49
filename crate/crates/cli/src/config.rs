//! Run configuration: a single JSON document describing model, reference,
//! gains, integration settings, actuator limits and output paths.

use std::path::{Path, PathBuf};

use phtrack::controller::{ActuatorLimits, ControllerState, Gains, SaturatedGains, UnsaturatedGains};
use phtrack::model::{pera_model, ConstantInertiaModel, MechModel, PeraParams, PhState};
use phtrack::simulation::{ControlMode, Integrator, SimConfig};
use phtrack::trajectory::{approach_blend, circle_trajectory, constant_setpoint, Trajectory};
use phtrack::{Matrix, Vector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub trajectory: TrajectorySpec,
    pub gains: GainSpec,
    pub sim: SimSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Pera(#[serde(default)] PeraParamSpec),
    ConstantInertia { mass: MatrixSpec, gravity: Vec<f64> },
}

/// Mirror of [`PeraParams`]; omitted fields take the built-in values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeraParamSpec {
    pub g: f64,
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

impl Default for PeraParamSpec {
    fn default() -> Self {
        let p = PeraParams::default();
        Self {
            g: p.g,
            l1: p.l1,
            l2: p.l2,
            m1: p.m1,
            m2: p.m2,
            i1: p.i1,
            i2: p.i2,
            i3: p.i3,
        }
    }
}

impl From<PeraParamSpec> for PeraParams {
    fn from(s: PeraParamSpec) -> Self {
        PeraParams {
            g: s.g,
            l1: s.l1,
            l2: s.l2,
            m1: s.m1,
            m2: s.m2,
            i1: s.i1,
            i2: s.i2,
            i3: s.i3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// End-effector circle of the PERA arm.
    Circle {
        radius: f64,
        period: f64,
        /// Smooth approach from the initial configuration `sim.q0`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        blend: Option<BlendSpec>,
    },
    Setpoint { target: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendSpec {
    /// Ramp duration; half the circle period when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_ramp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    Diag(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn to_matrix(&self, field: &str) -> Result<Matrix, CliError> {
        match self {
            MatrixSpec::Diag(d) => Ok(Matrix::from_diagonal(&Vector::from_column_slice(d))),
            MatrixSpec::Full(rows) => {
                let n = rows.len();
                if let Some(bad) = rows.iter().position(|r| r.len() != n) {
                    return Err(CliError::Config(format!(
                        "{field}: row {} has {} entries, expected {n}",
                        bad + 1,
                        rows[bad].len()
                    )));
                }
                Ok(Matrix::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }

    fn from_matrix(m: &Matrix) -> Self {
        let diagonal = Matrix::from_diagonal(&m.diagonal());
        if m == &diagonal {
            MatrixSpec::Diag(m.diagonal().iter().copied().collect())
        } else {
            MatrixSpec::Full(m.row_iter().map(|r| r.iter().copied().collect()).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GainSpec {
    /// `"pera-sim"` or `"pera-exp"`.
    Preset(String),
    Saturated {
        alpha: Vec<f64>,
        beta: Vec<f64>,
        kc: MatrixSpec,
        rc: MatrixSpec,
    },
    Unsaturated {
        ki: MatrixSpec,
        kc: MatrixSpec,
        rc: MatrixSpec,
    },
}

impl GainSpec {
    pub fn from_saturated(g: &SaturatedGains) -> Self {
        GainSpec::Saturated {
            alpha: g.alpha().iter().copied().collect(),
            beta: g.beta().iter().copied().collect(),
            kc: MatrixSpec::from_matrix(g.kc()),
            rc: MatrixSpec::from_matrix(g.rc()),
        }
    }

    pub fn build(&self) -> Result<Gains, CliError> {
        let gains = match self {
            GainSpec::Preset(name) => match name.as_str() {
                "pera-sim" => SaturatedGains::pera_simulation().into(),
                "pera-exp" => SaturatedGains::pera_experiment().into(),
                other => {
                    return Err(CliError::Config(format!(
                        "gains.preset: unknown preset `{other}` (expected `pera-sim` or `pera-exp`)"
                    )))
                }
            },
            GainSpec::Saturated { alpha, beta, kc, rc } => SaturatedGains::new(
                Vector::from_column_slice(alpha),
                Vector::from_column_slice(beta),
                kc.to_matrix("gains.saturated.kc")?,
                rc.to_matrix("gains.saturated.rc")?,
            )
            .map_err(|e| CliError::Config(format!("gains.saturated: {e}")))?
            .into(),
            GainSpec::Unsaturated { ki, kc, rc } => UnsaturatedGains::new(
                ki.to_matrix("gains.unsaturated.ki")?,
                kc.to_matrix("gains.unsaturated.kc")?,
                rc.to_matrix("gains.unsaturated.rc")?,
            )
            .map_err(|e| CliError::Config(format!("gains.unsaturated: {e}")))?
            .into(),
        };
        Ok(gains)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_integrator")]
    pub integrator: String,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Initial configuration; zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<Vec<f64>>,
    /// Initial momentum; zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<f64>>,
    /// Initial controller state; zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xc0: Option<Vec<f64>>,
    #[serde(default)]
    pub control: ControlSpec,
    /// Start of the window for the settled error; `0.75 t_end` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_settle: Option<f64>,
}

fn default_integrator() -> String {
    "rk4".into()
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    #[default]
    Continuous,
    /// Control recomputed at `hz` and held in between.
    Zoh { hz: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for the files below; the working directory when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub trace: PathBuf,
    pub metrics: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            trace: "trace.csv".into(),
            metrics: "metrics.txt".into(),
        }
    }
}

/// Everything a run needs, validated and instantiated.
pub struct Prepared {
    pub model: Box<dyn MechModel>,
    pub trajectory: Box<dyn Trajectory>,
    pub gains: Gains,
    pub sim: SimConfig,
    pub limits: Option<ActuatorLimits>,
    pub t_settle: f64,
}

fn vector(field: &str, v: &Option<Vec<f64>>, n: usize) -> Result<Vector, CliError> {
    match v {
        None => Ok(Vector::zeros(n)),
        Some(v) if v.len() == n => Ok(Vector::from_column_slice(v)),
        Some(v) => Err(CliError::Config(format!(
            "{field}: expected {n} entries, got {}",
            v.len()
        ))),
    }
}

impl RunConfig {
    /// Parses a JSON document; errors carry line and column.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Pretty-printed canonical form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    /// SHA-256 over the compact canonical form, hex encoded.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("configs always serialize");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }

    pub fn build_model(&self) -> Result<Box<dyn MechModel>, CliError> {
        match &self.model {
            ModelSpec::Pera(p) => Ok(Box::new(
                pera_model((*p).into()).map_err(|e| CliError::Config(format!("model.pera: {e}")))?,
            )),
            ModelSpec::ConstantInertia { mass, gravity } => Ok(Box::new(
                ConstantInertiaModel::new(
                    mass.to_matrix("model.constant_inertia.mass")?,
                    Vector::from_column_slice(gravity),
                )
                .map_err(|e| CliError::Config(format!("model.constant_inertia: {e}")))?,
            )),
        }
    }

    pub fn prepare(&self) -> Result<Prepared, CliError> {
        let model = self.build_model()?;
        let n = model.dof();
        let s = &self.sim;
        let q0 = vector("sim.q0", &s.q0, n)?;
        let p0 = vector("sim.p0", &s.p0, n)?;
        let xc0 = vector("sim.xc0", &s.xc0, n)?;

        let trajectory: Box<dyn Trajectory> = match &self.trajectory {
            TrajectorySpec::Circle { radius, period, blend } => {
                let l2 = match &self.model {
                    ModelSpec::Pera(p) => p.l2,
                    _ => {
                        return Err(CliError::Config(
                            "trajectory.circle: the circle reference needs the pera model".into(),
                        ))
                    }
                };
                let circle = circle_trajectory(*radius, *period, l2)
                    .map_err(|e| CliError::Config(format!("trajectory.circle: {e}")))?;
                match blend {
                    None => Box::new(circle),
                    Some(b) => Box::new(
                        approach_blend(circle, b.t_ramp.unwrap_or(0.5 * period), q0.clone())
                            .map_err(|e| CliError::Config(format!("trajectory.circle.blend: {e}")))?,
                    ),
                }
            }
            TrajectorySpec::Setpoint { target } => {
                if target.len() != n {
                    return Err(CliError::Config(format!(
                        "trajectory.setpoint.target: expected {n} entries, got {}",
                        target.len()
                    )));
                }
                Box::new(
                    constant_setpoint(Vector::from_column_slice(target))
                        .map_err(|e| CliError::Config(format!("trajectory.setpoint: {e}")))?,
                )
            }
        };

        let gains = self.gains.build()?;
        if gains.dim() != n {
            return Err(CliError::Config(format!(
                "gains: dimension {} does not match the model ({n})",
                gains.dim()
            )));
        }

        let integrator = match s.integrator.as_str() {
            "rk4" => Integrator::Rk4,
            "heun" => Integrator::Heun,
            other => {
                return Err(CliError::Config(format!(
                    "sim.integrator: unknown integrator `{other}` (expected `rk4` or `heun`)"
                )))
            }
        };
        let control_mode = match s.control {
            ControlSpec::Continuous => ControlMode::Continuous,
            ControlSpec::Zoh { hz } => {
                let steps = 1.0 / (hz * s.dt);
                let rounded = steps.round();
                if !(hz > 0.0) || rounded < 1.0 || (steps - rounded).abs() > 1e-9 * rounded {
                    return Err(CliError::Config(format!(
                        "sim.control.zoh.hz: the hold period 1/{hz} s must be a whole number of steps of dt = {}",
                        s.dt
                    )));
                }
                ControlMode::ZeroOrderHold {
                    period_steps: rounded as usize,
                }
            }
        };
        let mut sim = SimConfig::new(PhState::new(q0, p0), s.t_end);
        sim.dt = s.dt;
        sim.integrator = integrator;
        sim.record_stride = s.record_stride;
        sim.control_mode = control_mode;
        sim.init_controller = ControllerState { x_c: xc0 };
        sim.validate(n).map_err(|e| CliError::Config(format!("sim: {e}")))?;
        sim.init
            .validate(model.as_ref())
            .map_err(|e| CliError::Config(format!("sim: {e}")))?;

        let t_settle = s.t_settle.unwrap_or(0.75 * s.t_end);
        if !(0.0..=s.t_end).contains(&t_settle) {
            return Err(CliError::Config(format!(
                "sim.t_settle: {t_settle} is outside [0, t_end = {}]",
                s.t_end
            )));
        }

        let limits = match (&self.limits, &self.model) {
            (Some(l), _) => {
                if l.min.len() != n || l.max.len() != n {
                    return Err(CliError::Config(format!("limits: expected {n} entries in min and max")));
                }
                Some(
                    ActuatorLimits::new(Vector::from_column_slice(&l.min), Vector::from_column_slice(&l.max))
                        .map_err(|e| CliError::Config(format!("limits: {e}")))?,
                )
            }
            (None, ModelSpec::Pera(_)) => Some(ActuatorLimits::pera()),
            (None, _) => None,
        };

        Ok(Prepared {
            model,
            trajectory,
            gains,
            sim,
            limits,
            t_settle,
        })
    }
}

/// Bundled configurations.
pub const PRESETS: &[(&str, &str)] = &[
    ("pera-sim", include_str!("../presets/pera-sim.json")),
    ("pera-exp", include_str!("../presets/pera-exp.json")),
    ("setpoint-trivial", include_str!("../presets/setpoint-trivial.json")),
];

pub fn preset(name: &str) -> Result<RunConfig, CliError> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        let names: Vec<_> = PRESETS.iter().map(|(n, _)| *n).collect();
        CliError::Config(format!("unknown preset `{name}` (available: {})", names.join(", ")))
    })?;
    RunConfig::parse(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_prepare() {
        for (name, _) in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.prepare().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn round_trip_is_canonical() {
        for (name, _) in PRESETS {
            let cfg = preset(name).unwrap();
            let again = RunConfig::parse(&cfg.to_json()).unwrap();
            assert_eq!(cfg, again, "{name}");
            assert_eq!(cfg.to_json(), again.to_json());
            assert_eq!(cfg.hash(), again.hash());
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(PRESETS[0].1).unwrap();
        v["sim"]["dtt"] = 1e-3.into();
        let err = RunConfig::parse(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("dtt"), "{err}");
    }

    #[test]
    fn errors_report_the_position() {
        let err = RunConfig::parse("{\n  \"model\": {\"pera\": {}},\n  \"trajectory\": 3\n}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn zoh_period_must_divide_into_steps() {
        let mut cfg = preset("pera-sim").unwrap();
        cfg.sim.control = ControlSpec::Zoh { hz: 300.0 };
        assert!(cfg.prepare().is_err());
        cfg.sim.control = ControlSpec::Zoh { hz: 500.0 };
        let p = cfg.prepare().unwrap();
        assert_eq!(p.sim.control_mode, ControlMode::ZeroOrderHold { period_steps: 2 });
    }

    #[test]
    fn matrices_keep_their_shape() {
        let full = MatrixSpec::Full(vec![vec![2.0, 0.5], vec![0.5, 1.0]]);
        let m = full.to_matrix("m").unwrap();
        assert_eq!(MatrixSpec::from_matrix(&m), full);
        assert!(MatrixSpec::Full(vec![vec![1.0], vec![0.0, 1.0]]).to_matrix("m").is_err());
    }
}
