//! Closed-loop simulation of plant plus dynamic extension.
//!
//! The augmented state is `(q, p, x_c, w)` where `w = ∫ uᵀq̇ dt` is the energy
//! supplied through the input port; it is integrated alongside the plant so
//! the passivity balance `H(t) - H(0) = w(t)` can be audited.

mod integrator;
mod monitor;

use std::io::{self, Write};

pub use integrator::{step, Integrator};
pub use monitor::{
    boundedness, dissipation_check, ln_cosh, lyapunov, lyapunov_quadratic, lyapunov_rate,
    lyapunov_saturated, metrics, Boundedness, DissipationReport, Metrics, MonitorTolerances,
    RateBreach, StepBreach, RK4_SLACK_COEFF,
};

use crate::controller::{control_with_feedforward, feedforward_terms, ControlOutput, ControllerState, Gains};
use crate::error::{ensure_dim, Error, Result};
use crate::model::{hamiltonian, open_loop_rhs, MechModel, PhState};
use crate::plvcc::factorize;
use crate::trajectory::{Trajectory, TrajectorySample};
use crate::Vector;

/// What drives the plant input.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// Position-only tracking law.
    Tracking(Gains),
    /// Feedforward `u_d(t)` alone, open loop.
    Feedforward,
    /// `u ≡ 0`.
    Disabled,
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::Tracking(g) => g.profile(),
            Profile::Feedforward => "feedforward",
            Profile::Disabled => "disabled",
        }
    }

    pub fn gains(&self) -> Option<&Gains> {
        match self {
            Profile::Tracking(g) => Some(g),
            _ => None,
        }
    }
}

/// How the control input is applied between integrator stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControlMode {
    /// Evaluated at every Runge-Kutta stage.
    #[default]
    Continuous,
    /// Evaluated every `period_steps` integration steps and held in between.
    ZeroOrderHold { period_steps: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub integrator: Integrator,
    pub init: PhState,
    pub init_controller: ControllerState,
    pub record_stride: usize,
    pub control_mode: ControlMode,
    pub tolerances: MonitorTolerances,
    /// Replace the momentum read-out (and its logged columns) with NaN.
    /// The control law never reads it, so the closed loop is unaffected.
    pub corrupt_momentum_readout: bool,
}

impl SimConfig {
    /// Defaults: RK4, `dt = 1e-3`, record every step, continuous control,
    /// `x_c(0) = 0`.
    pub fn new(init: PhState, t_end: f64) -> Self {
        let n = init.q.len();
        Self {
            dt: 1e-3,
            t_end,
            integrator: Integrator::Rk4,
            init,
            init_controller: ControllerState::zeros(n),
            record_stride: 1,
            control_mode: ControlMode::Continuous,
            tolerances: MonitorTolerances::default(),
            corrupt_momentum_readout: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > self.dt) || !self.t_end.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "t_end must exceed dt (t_end = {}, dt = {})",
                self.t_end, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter("record_stride must be at least 1".into()));
        }
        if let ControlMode::ZeroOrderHold { period_steps: 0 } = self.control_mode {
            return Err(Error::InvalidParameter("zero-order-hold period must be at least one step".into()));
        }
        ensure_dim("initial q", n, self.init.q.len())?;
        ensure_dim("initial p", n, self.init.p.len())?;
        ensure_dim("initial x_c", n, self.init_controller.x_c.len())?;
        Ok(())
    }

    /// Number of integration steps, `round(t_end / dt)`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// One recorded sample of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub q: Vector,
    /// Logged momentum (NaN when the read-out is corrupted).
    pub p: Vector,
    pub x_c: Vector,
    pub q_d: Vector,
    pub qd_dot: Vector,
    pub control: ControlOutput,
    pub q_tilde: Vector,
    /// `P̃ = Ψᵀ(q) p - Ψ⁻¹(q_d) q̇_d`
    pub p_tilde: Vector,
    pub z: Vector,
    /// Closed-loop storage `H̃` for tracking runs, plant Hamiltonian otherwise.
    pub h_lyap: f64,
    /// Analytic `dH̃/dt = -(∂H̃/∂x_c)ᵀ R_c (∂H̃/∂x_c)`; zero without a controller.
    pub h_lyap_rate: f64,
    /// Plant Hamiltonian `H(q, p)`.
    pub energy: f64,
    /// Energy supplied through the port, `∫ uᵀq̇ dt`.
    pub work: f64,
    /// Frobenius norms of `dΨ/dt` and `dΨ⁻¹/dt` along the motion.
    pub psi_rate: f64,
    pub psi_inv_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub model: String,
    pub profile: Profile,
    pub label: String,
    pub config_hash: Option<String>,
    pub dt: f64,
    pub integrator: Integrator,
    pub record_stride: usize,
    pub control_mode: ControlMode,
    pub tolerances: MonitorTolerances,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub meta: TraceMeta,
    pub rows: Vec<TraceRow>,
}

impl SimTrace {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.q.len())
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// CSV column names for `n` degrees of freedom.
    pub fn csv_header(n: usize) -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        for prefix in ["q", "p", "xc", "qd", "u", "uff", "qt"] {
            cols.extend((1..=n).map(|i| format!("{prefix}{i}")));
        }
        cols.push("Hlyap".to_string());
        cols
    }

    /// Writes the trace as CSV. Floats use the shortest representation that
    /// round-trips exactly.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.dim();
        writeln!(w, "{}", Self::csv_header(n).join(","))?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            push_float(&mut line, row.t);
            for v in [
                &row.q,
                &row.p,
                &row.x_c,
                &row.q_d,
                &row.control.u,
                &row.control.u_ff,
                &row.q_tilde,
            ] {
                for x in v.iter() {
                    line.push(',');
                    push_float(&mut line, *x);
                }
            }
            line.push(',');
            push_float(&mut line, row.h_lyap);
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn push_float(buf: &mut String, x: f64) {
    use std::fmt::Write as _;
    write!(buf, "{x:e}").expect("writing to a String cannot fail");
}

/// Position read-out handed to the control law. The momentum is carried for
/// logging only.
struct SensorReadout {
    q: Vector,
    p: Vector,
}

struct Layout {
    n: usize,
}

impl Layout {
    fn len(&self) -> usize {
        3 * self.n + 1
    }
    fn q(&self, y: &Vector) -> Vector {
        y.rows(0, self.n).into_owned()
    }
    fn p(&self, y: &Vector) -> Vector {
        y.rows(self.n, self.n).into_owned()
    }
    fn x_c(&self, y: &Vector) -> Vector {
        y.rows(2 * self.n, self.n).into_owned()
    }
    fn work(&self, y: &Vector) -> f64 {
        y[3 * self.n]
    }
    fn pack(&self, q: &Vector, p: &Vector, x_c: &Vector, w: f64) -> Vector {
        let mut y = Vector::zeros(self.len());
        y.rows_mut(0, self.n).copy_from(q);
        y.rows_mut(self.n, self.n).copy_from(p);
        y.rows_mut(2 * self.n, self.n).copy_from(x_c);
        y[3 * self.n] = w;
        y
    }
}

struct ClosedLoop<'a> {
    model: &'a dyn MechModel,
    profile: &'a Profile,
    traj: &'a dyn Trajectory,
    layout: Layout,
    corrupt_readout: bool,
}

struct Evaluation {
    derivative: Vector,
    control: ControlOutput,
    sample: TrajectorySample,
}

impl ClosedLoop<'_> {
    fn readout(&self, y: &Vector) -> SensorReadout {
        let p = if self.corrupt_readout {
            Vector::from_element(self.layout.n, f64::NAN)
        } else {
            self.layout.p(y)
        };
        SensorReadout { q: self.layout.q(y), p }
    }

    fn command(&self, t: f64, y: &Vector) -> Result<(ControlOutput, TrajectorySample)> {
        let n = self.layout.n;
        let sample = self.traj.sample(t);
        let readout = self.readout(y);
        let control = match self.profile {
            Profile::Tracking(gains) => {
                let ff = feedforward_terms(self.model, &sample)?;
                let cs = ControllerState { x_c: self.layout.x_c(y) };
                control_with_feedforward(self.model, gains, &readout.q, &cs, &sample, &ff)?
            }
            Profile::Feedforward => {
                let ff = feedforward_terms(self.model, &sample)?;
                ControlOutput {
                    u: ff.total(),
                    u_ff: ff.dynamic(),
                    u_grav: ff.gravity.clone(),
                    u_hat: Vector::zeros(n),
                }
            }
            Profile::Disabled => ControlOutput {
                u: Vector::zeros(n),
                u_ff: Vector::zeros(n),
                u_grav: Vector::zeros(n),
                u_hat: Vector::zeros(n),
            },
        };
        Ok((control, sample))
    }

    fn derivative(&self, y: &Vector, control: &ControlOutput, sample: &TrajectorySample) -> Result<Vector> {
        let l = &self.layout;
        let state = PhState::new(l.q(y), l.p(y));
        let (q_dot, p_dot) = open_loop_rhs(self.model, &state, &control.u)?;
        let xc_dot = match self.profile {
            Profile::Tracking(gains) => {
                let cs = ControllerState { x_c: l.x_c(y) };
                gains.extension_rhs(&(&state.q - &sample.q_d), &cs)
            }
            _ => Vector::zeros(l.n),
        };
        let w_dot = control.u.dot(&q_dot);
        Ok(l.pack(&q_dot, &p_dot, &xc_dot, w_dot))
    }

    fn evaluate(&self, t: f64, y: &Vector, held: Option<&ControlOutput>) -> Result<Evaluation> {
        let (control, sample) = match held {
            Some(c) => (c.clone(), self.traj.sample(t)),
            None => self.command(t, y)?,
        };
        let derivative = self.derivative(y, &control, &sample)?;
        Ok(Evaluation {
            derivative,
            control,
            sample,
        })
    }

    fn record(&self, t: f64, y: &Vector, eval: &Evaluation) -> Result<TraceRow> {
        let l = &self.layout;
        let q = l.q(y);
        let p = l.p(y);
        let x_c = l.x_c(y);
        let sample = &eval.sample;
        let q_tilde = &q - &sample.q_d;
        let frame = factorize(self.model, &q)?;
        let frame_d = factorize(self.model, &sample.q_d)?;
        let p_tilde = frame.to_transformed(&p) - &frame_d.psi_inv * &sample.qd_dot;
        let cs = ControllerState { x_c: x_c.clone() };
        let z = cs.z(&q_tilde);
        let energy = hamiltonian(self.model, &PhState::new(q.clone(), p.clone()))?;
        let (h_lyap, h_lyap_rate) = match self.profile {
            Profile::Tracking(g) => (
                lyapunov(g, &q_tilde, &p_tilde, &x_c),
                lyapunov_rate(g, &q_tilde, &x_c),
            ),
            _ => (energy, 0.0),
        };
        let q_dot = &frame.psi * frame.to_transformed(&p);
        let mut psi_rate = crate::Matrix::zeros(l.n, l.n);
        let mut psi_inv_rate = crate::Matrix::zeros(l.n, l.n);
        for m in 0..l.n {
            psi_rate += frame.psi_partial(m) * q_dot[m];
            psi_inv_rate += frame.psi_inv_partial(m) * q_dot[m];
        }
        Ok(TraceRow {
            t,
            p: self.readout(y).p,
            q,
            x_c,
            q_d: sample.q_d.clone(),
            qd_dot: sample.qd_dot.clone(),
            control: eval.control.clone(),
            q_tilde,
            p_tilde,
            z,
            h_lyap,
            h_lyap_rate,
            energy,
            work: l.work(y),
            psi_rate: psi_rate.norm(),
            psi_inv_rate: psi_inv_rate.norm(),
        })
    }
}

/// Integrates the closed loop and records every `record_stride`-th step plus
/// the final state.
pub fn simulate(
    model: &dyn MechModel,
    profile: &Profile,
    traj: &dyn Trajectory,
    cfg: &SimConfig,
) -> Result<SimTrace> {
    let n = model.dof();
    cfg.validate(n)?;
    cfg.init.validate(model)?;
    ensure_dim("trajectory", n, traj.dim())?;
    if let Some(g) = profile.gains() {
        ensure_dim("gains", n, g.dim())?;
    }

    let lp = ClosedLoop {
        model,
        profile,
        traj,
        layout: Layout { n },
        corrupt_readout: cfg.corrupt_momentum_readout,
    };
    let steps = cfg.steps();
    let mut y = lp.layout.pack(&cfg.init.q, &cfg.init.p, &cfg.init_controller.x_c, 0.0);
    let mut rows = Vec::with_capacity(steps / cfg.record_stride + 2);
    let mut held: Option<ControlOutput> = None;

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        if let ControlMode::ZeroOrderHold { period_steps } = cfg.control_mode {
            if k % period_steps == 0 {
                held = Some(lp.command(t, &y).map_err(|e| diverged(t, e))?.0);
            }
        }
        let eval = lp.evaluate(t, &y, held.as_ref()).map_err(|e| diverged(t, e))?;
        if k % cfg.record_stride == 0 || k == steps {
            rows.push(lp.record(t, &y, &eval).map_err(|e| diverged(t, e))?);
        }
        if k == steps {
            break;
        }
        let held_now = held.clone();
        let mut rhs = |tt: f64, yy: &Vector| -> Result<Vector> {
            Ok(lp.evaluate(tt, yy, held_now.as_ref())?.derivative)
        };
        y = cfg
            .integrator
            .advance(&mut rhs, t, &y, cfg.dt, Some(eval.derivative))
            .map_err(|e| diverged(t, e))?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                t: t + cfg.dt,
                reason: "non-finite state".into(),
            });
        }
    }

    Ok(SimTrace {
        meta: TraceMeta {
            model: model.name().to_string(),
            profile: profile.clone(),
            label: profile.name().to_string(),
            config_hash: None,
            dt: cfg.dt,
            integrator: cfg.integrator,
            record_stride: cfg.record_stride,
            control_mode: cfg.control_mode,
            tolerances: cfg.tolerances.clone(),
        },
        rows,
    })
}

fn diverged(t: f64, e: Error) -> Error {
    match e {
        Error::NonFinite(reason) => Error::Diverged { t, reason },
        other => other,
    }
}

/// Sup-norm deviation from the reference when the plant is driven open loop
/// by `input(sample)` from the matched state `(q_d(0), M(q_d(0)) q̇_d(0))`.
pub fn open_loop_tracking_error<F>(
    model: &dyn MechModel,
    traj: &dyn Trajectory,
    horizon: f64,
    dt: f64,
    integrator: Integrator,
    input: F,
) -> Result<f64>
where
    F: Fn(&TrajectorySample) -> Result<Vector>,
{
    let n = model.dof();
    ensure_dim("trajectory", n, traj.dim())?;
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidParameter("horizon and dt must be positive".into()));
    }
    let s0 = traj.sample(0.0);
    let p0 = model.mass_matrix(&s0.q_d) * &s0.qd_dot;
    let mut y = Vector::zeros(2 * n);
    y.rows_mut(0, n).copy_from(&s0.q_d);
    y.rows_mut(n, n).copy_from(&p0);
    let mut rhs = |t: f64, yy: &Vector| -> Result<Vector> {
        let u = input(&traj.sample(t))?;
        let state = PhState::new(yy.rows(0, n).into_owned(), yy.rows(n, n).into_owned());
        let (qd, pd) = open_loop_rhs(model, &state, &u)?;
        let mut out = Vector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&qd);
        out.rows_mut(n, n).copy_from(&pd);
        Ok(out)
    };
    let steps = (horizon / dt).round() as usize;
    let mut worst = 0.0f64;
    for k in 0..steps {
        let t = k as f64 * dt;
        y = integrator.advance(&mut rhs, t, &y, dt, None)?;
        let err = (y.rows(0, n) - traj.sample(t + dt).q_d).amax();
        if !err.is_finite() {
            return Err(Error::Diverged {
                t: t + dt,
                reason: "open-loop state left the finite range".into(),
            });
        }
        worst = worst.max(err);
    }
    Ok(worst)
}
