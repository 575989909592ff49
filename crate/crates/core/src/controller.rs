//! Position-only tracking controllers.
//!
//! The tracking law is split into gravity compensation at the measured
//! configuration, a stabilizer acting on `z = q̃ + x_c`, and a feedforward
//! evaluated entirely along the reference:
//!
//! ```text
//! u = ∂V/∂q(q) + û(z) + (u_d - ∂V/∂q(q_d))
//! ```
//!
//! `x_c` is the state of a dynamic extension that injects damping without
//! velocity measurements. None of the functions here accept plant momenta.

use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::model::{min_eigenvalue, potential_gradient, MechModel};
use crate::plvcc::factorize;
use crate::trajectory::{Trajectory, TrajectorySample};
use crate::{Matrix, Vector};

fn check_spd(name: &str, m: &Matrix, n: usize, require_symmetric: bool) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidParameter(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    ensure_finite(name, m.as_slice())?;
    if require_symmetric && (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::InvalidParameter(format!("{name} must be symmetric")));
    }
    let min_eig = min_eigenvalue(m);
    if !(min_eig > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive definite (smallest eigenvalue of the symmetric part {min_eig:e})"
        )));
    }
    Ok(())
}

/// Gains of the saturated stabilizer `û = -Σ eᵢ αᵢ tanh(βᵢ zᵢ)` and its
/// dynamic extension `ẋ_c = -R_c(Σ eᵢ αᵢ tanh(βᵢ zᵢ) + K_c x_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturatedGains {
    alpha: Vector,
    beta: Vector,
    kc: Matrix,
    rc: Matrix,
}

impl SaturatedGains {
    /// `K_c` must be symmetric positive definite; `R_c` needs a positive
    /// definite symmetric part.
    pub fn new(alpha: Vector, beta: Vector, kc: Matrix, rc: Matrix) -> Result<Self> {
        let n = alpha.len();
        if n == 0 {
            return Err(Error::InvalidParameter("gain vectors must not be empty".into()));
        }
        ensure_dim("beta", n, beta.len())?;
        for (name, v) in [("alpha", &alpha), ("beta", &beta)] {
            if let Some(bad) = v.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} entries must be positive, got {bad}"
                )));
            }
        }
        check_spd("K_c", &kc, n, true)?;
        check_spd("R_c", &rc, n, false)?;
        Ok(Self { alpha, beta, kc, rc })
    }

    pub fn diagonal(alpha: &[f64], beta: &[f64], kc: &[f64], rc: &[f64]) -> Result<Self> {
        Self::new(
            Vector::from_column_slice(alpha),
            Vector::from_column_slice(beta),
            Matrix::from_diagonal(&Vector::from_column_slice(kc)),
            Matrix::from_diagonal(&Vector::from_column_slice(rc)),
        )
    }

    /// Gains used for the PERA simulation study.
    pub fn pera_simulation() -> Self {
        Self::diagonal(&[11.0, 1.7, 6.0], &[40.0, 30.0, 30.0], &[1.0, 2.0, 0.1], &[0.4, 0.11, 0.5])
            .expect("preset gains are valid")
    }

    /// Gains used on the PERA hardware.
    pub fn pera_experiment() -> Self {
        Self::diagonal(
            &[11.0, 2.0, 6.0],
            &[400.0, 100.0, 120.0],
            &[30.0, 20.0, 200.0],
            &[1e-4, 0.1e-4, 4500e-4],
        )
        .expect("preset gains are valid")
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }
    pub fn alpha(&self) -> &Vector {
        &self.alpha
    }
    pub fn beta(&self) -> &Vector {
        &self.beta
    }
    pub fn kc(&self) -> &Matrix {
        &self.kc
    }
    pub fn rc(&self) -> &Matrix {
        &self.rc
    }

    /// Same gains with `α` replaced.
    pub fn with_alpha(&self, alpha: Vector) -> Result<Self> {
        Self::new(alpha, self.beta.clone(), self.kc.clone(), self.rc.clone())
    }

    /// `Σ eᵢ αᵢ tanh(βᵢ zᵢ)`, which is also `∂H̃_sat/∂q̃`.
    pub fn saturation(&self, z: &Vector) -> Vector {
        Vector::from_fn(z.len(), |i, _| self.alpha[i] * (self.beta[i] * z[i]).tanh())
    }

    /// `K_I = diag(αᵢ βᵢ)`: the unsaturated gains with the same slope at the origin.
    pub fn small_signal(&self) -> UnsaturatedGains {
        UnsaturatedGains {
            ki: Matrix::from_diagonal(&self.alpha.component_mul(&self.beta)),
            kc: self.kc.clone(),
            rc: self.rc.clone(),
        }
    }
}

/// Gains of the linear stabilizer `û = -K_I z` with
/// `ẋ_c = -R_c(K_I z + K_c x_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnsaturatedGains {
    ki: Matrix,
    kc: Matrix,
    rc: Matrix,
}

impl UnsaturatedGains {
    pub fn new(ki: Matrix, kc: Matrix, rc: Matrix) -> Result<Self> {
        let n = ki.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter("gain matrices must not be empty".into()));
        }
        check_spd("K_I", &ki, n, true)?;
        check_spd("K_c", &kc, n, true)?;
        check_spd("R_c", &rc, n, false)?;
        Ok(Self { ki, kc, rc })
    }

    pub fn dim(&self) -> usize {
        self.ki.nrows()
    }
    pub fn ki(&self) -> &Matrix {
        &self.ki
    }
    pub fn kc(&self) -> &Matrix {
        &self.kc
    }
    pub fn rc(&self) -> &Matrix {
        &self.rc
    }
}

/// Either stabilizer family.
#[derive(Debug, Clone, PartialEq)]
pub enum Gains {
    Saturated(SaturatedGains),
    Unsaturated(UnsaturatedGains),
}

impl Gains {
    pub fn dim(&self) -> usize {
        match self {
            Gains::Saturated(g) => g.dim(),
            Gains::Unsaturated(g) => g.dim(),
        }
    }

    pub fn profile(&self) -> &'static str {
        match self {
            Gains::Saturated(_) => "saturated",
            Gains::Unsaturated(_) => "unsaturated",
        }
    }

    pub fn kc(&self) -> &Matrix {
        match self {
            Gains::Saturated(g) => g.kc(),
            Gains::Unsaturated(g) => g.kc(),
        }
    }

    pub fn rc(&self) -> &Matrix {
        match self {
            Gains::Saturated(g) => g.rc(),
            Gains::Unsaturated(g) => g.rc(),
        }
    }

    /// Gradient of the closed-loop storage with respect to `q̃` (equivalently `z`).
    pub fn storage_gradient(&self, z: &Vector) -> Vector {
        match self {
            Gains::Saturated(g) => g.saturation(z),
            Gains::Unsaturated(g) => &g.ki * z,
        }
    }

    /// Stabilizing input `û(z)`.
    pub fn stabilizer(&self, z: &Vector) -> Vector {
        -self.storage_gradient(z)
    }

    /// `∂H̃/∂x_c = ∂H̃/∂q̃ + K_c x_c`.
    pub fn extension_gradient(&self, q_tilde: &Vector, cs: &ControllerState) -> Vector {
        let z = cs.z(q_tilde);
        self.storage_gradient(&z) + self.kc() * &cs.x_c
    }

    /// `ẋ_c = -R_c ∂H̃/∂x_c`.
    pub fn extension_rhs(&self, q_tilde: &Vector, cs: &ControllerState) -> Vector {
        -(self.rc() * self.extension_gradient(q_tilde, cs))
    }
}

impl From<SaturatedGains> for Gains {
    fn from(g: SaturatedGains) -> Self {
        Gains::Saturated(g)
    }
}

impl From<UnsaturatedGains> for Gains {
    fn from(g: UnsaturatedGains) -> Self {
        Gains::Unsaturated(g)
    }
}

/// Dynamic-extension state.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub x_c: Vector,
}

impl ControllerState {
    pub fn zeros(n: usize) -> Self {
        Self { x_c: Vector::zeros(n) }
    }

    /// `z = q̃ + x_c`.
    pub fn z(&self, q_tilde: &Vector) -> Vector {
        q_tilde + &self.x_c
    }
}

/// Control command and its decomposition `u = u_grav + u_hat + u_ff`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: Vector,
    /// `u_d - ∂V/∂q(q_d)`
    pub u_ff: Vector,
    /// `∂V/∂q(q)`
    pub u_grav: Vector,
    pub u_hat: Vector,
}

/// `P_d = Ψ⁻¹(q_d) q̇_d`.
pub fn desired_momentum(model: &dyn MechModel, sample: &TrajectorySample) -> Result<Vector> {
    ensure_dim("desired momentum", model.dof(), sample.q_d.len())?;
    let frame = factorize(model, &sample.q_d)?;
    Ok(&frame.psi_inv * &sample.qd_dot)
}

/// The three contributions to `u_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardTerms {
    /// `Ψ⁻ᵀ(q_d) d/dt(Ψ⁻¹(q_d) q̇_d)`
    pub inertial: Vector,
    /// `-Ψ⁻ᵀ(q_d) J_d P_d`
    pub gyroscopic: Vector,
    /// `∂V/∂q(q_d)`
    pub gravity: Vector,
}

impl FeedforwardTerms {
    pub fn total(&self) -> Vector {
        &self.inertial + &self.gyroscopic + &self.gravity
    }

    /// Feedforward part of the tracking law, `u_d - ∂V/∂q(q_d)`.
    pub fn dynamic(&self) -> Vector {
        &self.inertial + &self.gyroscopic
    }
}

pub fn feedforward_terms(model: &dyn MechModel, sample: &TrajectorySample) -> Result<FeedforwardTerms> {
    let n = model.dof();
    ensure_dim("feedforward q_d", n, sample.q_d.len())?;
    ensure_dim("feedforward q̇_d", n, sample.qd_dot.len())?;
    ensure_dim("feedforward q̈_d", n, sample.qd_ddot.len())?;
    if !sample.is_finite() {
        return Err(Error::NonFinite(format!("trajectory sample at t = {}", sample.t)));
    }
    let frame = factorize(model, &sample.q_d)?;
    let p_d = &frame.psi_inv * &sample.qd_dot;

    // d/dt(Ψ⁻¹ q̇_d) = Σ_k (∂Ψ⁻¹/∂q_k) q̇_d,k q̇_d + Ψ⁻¹ q̈_d
    let mut p_d_dot = &frame.psi_inv * &sample.qd_ddot;
    for k in 0..n {
        let rate = sample.qd_dot[k];
        if rate != 0.0 {
            p_d_dot += frame.psi_inv_partial(k) * &sample.qd_dot * rate;
        }
    }
    let jd = frame.gyroscopic_matrix_desired(&model.mass_matrix(&sample.q_d), &sample.qd_dot);

    Ok(FeedforwardTerms {
        inertial: frame.psi_inv.tr_mul(&p_d_dot),
        gyroscopic: -frame.psi_inv.tr_mul(&(jd * p_d)),
        gravity: potential_gradient(model, &sample.q_d)?,
    })
}

/// `u_d`, the input that makes the reference an exact solution of the plant.
pub fn feedforward(model: &dyn MechModel, sample: &TrajectorySample) -> Result<Vector> {
    Ok(feedforward_terms(model, sample)?.total())
}

pub fn controller_rhs_saturated(g: &SaturatedGains, q_tilde: &Vector, cs: &ControllerState) -> Vector {
    let z = cs.z(q_tilde);
    -(g.rc() * (g.saturation(&z) + g.kc() * &cs.x_c))
}

pub fn controller_rhs_unsaturated(g: &UnsaturatedGains, q_tilde: &Vector, cs: &ControllerState) -> Vector {
    let z = cs.z(q_tilde);
    -(g.rc() * (g.ki() * z + g.kc() * &cs.x_c))
}

/// Tracking law for either stabilizer family, with the feedforward supplied.
///
/// Only the measured configuration `q` enters: the signature carries no
/// momentum or velocity of the plant.
pub fn control_with_feedforward(
    model: &dyn MechModel,
    gains: &Gains,
    q: &Vector,
    cs: &ControllerState,
    sample: &TrajectorySample,
    ff: &FeedforwardTerms,
) -> Result<ControlOutput> {
    let n = model.dof();
    ensure_dim("measured q", n, q.len())?;
    ensure_dim("controller state", n, cs.x_c.len())?;
    ensure_dim("gains", n, gains.dim())?;
    ensure_finite("measured q", q.as_slice())?;
    ensure_finite("controller state", cs.x_c.as_slice())?;
    let q_tilde = q - &sample.q_d;
    let u_hat = gains.stabilizer(&cs.z(&q_tilde));
    let u_grav = potential_gradient(model, q)?;
    let u_ff = ff.dynamic();
    Ok(ControlOutput {
        u: &u_grav + &u_hat + &u_ff,
        u_ff,
        u_grav,
        u_hat,
    })
}

pub fn control(
    model: &dyn MechModel,
    gains: &Gains,
    q: &Vector,
    cs: &ControllerState,
    sample: &TrajectorySample,
) -> Result<ControlOutput> {
    let ff = feedforward_terms(model, sample)?;
    control_with_feedforward(model, gains, q, cs, sample, &ff)
}

/// Saturated tracking law `u = ∂V/∂q(q) - Σ eᵢ αᵢ tanh(βᵢ zᵢ) + u_d - ∂V/∂q(q_d)`.
pub fn control_saturated(
    model: &dyn MechModel,
    g: &SaturatedGains,
    q: &Vector,
    cs: &ControllerState,
    sample: &TrajectorySample,
) -> Result<ControlOutput> {
    control(model, &Gains::Saturated(g.clone()), q, cs, sample)
}

/// Unsaturated tracking law with `û = -K_I z`.
pub fn control_unsaturated(
    model: &dyn MechModel,
    g: &UnsaturatedGains,
    q: &Vector,
    cs: &ControllerState,
    sample: &TrajectorySample,
) -> Result<ControlOutput> {
    control(model, &Gains::Unsaturated(g.clone()), q, cs, sample)
}

/// Admissible actuator interval `[min_i, max_i]` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorLimits {
    pub min: Vector,
    pub max: Vector,
}

impl ActuatorLimits {
    pub fn new(min: Vector, max: Vector) -> Result<Self> {
        ensure_dim("actuator limits", min.len(), max.len())?;
        for i in 0..min.len() {
            if !(min[i] < max[i]) {
                return Err(Error::InvalidParameter(format!(
                    "actuator limit on axis {} must satisfy min < max (got [{}, {}])",
                    i + 1,
                    min[i],
                    max[i]
                )));
            }
        }
        Ok(Self { min, max })
    }

    pub fn symmetric(bound: &[f64]) -> Result<Self> {
        let max = Vector::from_column_slice(bound);
        Self::new(-&max, max)
    }

    /// Motor limits of the PERA shoulder pitch, shoulder yaw and elbow pitch.
    pub fn pera() -> Self {
        Self::symmetric(&[18.77, 3.32, 7.72]).expect("valid limits")
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Whether the symmetric interval `[-b_i, b_i]` lies inside the limits.
    pub fn admits_symmetric(&self, i: usize, b: f64) -> bool {
        -b >= self.min[i] && b <= self.max[i]
    }
}

/// Box of configurations scanned for the gravity supremum.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigurationBox {
    pub lower: Vector,
    pub upper: Vector,
    pub points_per_axis: usize,
}

impl ConfigurationBox {
    /// Full revolution `[-π, π]` on every axis.
    pub fn full_revolution(n: usize, points_per_axis: usize) -> Self {
        Self {
            lower: Vector::from_element(n, -std::f64::consts::PI),
            upper: Vector::from_element(n, std::f64::consts::PI),
            points_per_axis,
        }
    }

    fn for_each_point(&self, mut f: impl FnMut(&Vector) -> Result<()>) -> Result<()> {
        let n = self.lower.len();
        let k = self.points_per_axis.max(2);
        let total = k.checked_pow(n as u32).ok_or_else(|| {
            Error::InvalidParameter("configuration grid too large".into())
        })?;
        let mut q = Vector::zeros(n);
        for idx in 0..total {
            let mut rem = idx;
            for axis in 0..n {
                let step = rem % k;
                rem /= k;
                let s = step as f64 / (k - 1) as f64;
                q[axis] = self.lower[axis] + s * (self.upper[axis] - self.lower[axis]);
            }
            f(&q)?;
        }
        Ok(())
    }
}

/// Certified per-axis bound on `|u_i(t)|` for the saturated law:
/// `B_i = sup_t |u_d,i - ∂V/∂q_i(q_d)| + sup_q |∂V/∂q_i(q)| + α_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturationBudget {
    pub bound: Vector,
    pub feedforward_sup: Vector,
    pub gravity_sup: Vector,
    /// Axes whose bound leaves the actuator interval.
    pub exceeds: Vec<bool>,
}

impl SaturationBudget {
    pub fn within_limits(&self) -> bool {
        !self.exceeds.iter().any(|e| *e)
    }

    /// First axis (0-based) whose bound leaves the actuator interval.
    pub fn binding_axis(&self) -> Option<usize> {
        self.exceeds.iter().position(|e| *e)
    }
}

/// Sampling resolution for [`saturation_budget`].
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSampling {
    pub horizon: f64,
    pub time_samples: usize,
    pub gravity_box: ConfigurationBox,
}

pub fn saturation_budget(
    model: &dyn MechModel,
    g: &SaturatedGains,
    traj: &dyn Trajectory,
    sampling: &BudgetSampling,
    limits: &ActuatorLimits,
) -> Result<SaturationBudget> {
    let n = model.dof();
    ensure_dim("budget gains", n, g.dim())?;
    ensure_dim("budget limits", n, limits.dim())?;
    ensure_dim("budget trajectory", n, traj.dim())?;
    ensure_dim("budget box", n, sampling.gravity_box.lower.len())?;
    if sampling.time_samples == 0 || !(sampling.horizon >= 0.0) {
        return Err(Error::InvalidParameter(
            "budget sampling needs time_samples > 0 and horizon ≥ 0".into(),
        ));
    }

    let mut ff_sup = Vector::zeros(n);
    for k in 0..=sampling.time_samples {
        let t = sampling.horizon * k as f64 / sampling.time_samples as f64;
        let dynamic = feedforward_terms(model, &traj.sample(t))?.dynamic();
        ensure_finite("sampled feedforward", dynamic.as_slice())?;
        ff_sup = ff_sup.zip_map(&dynamic, |m, v| m.max(v.abs()));
    }

    let mut grav_sup = Vector::zeros(n);
    sampling.gravity_box.for_each_point(|q| {
        let grad = potential_gradient(model, q)?;
        grav_sup = grav_sup.zip_map(&grad, |m, v| m.max(v.abs()));
        Ok(())
    })?;

    let bound = &ff_sup + &grav_sup + g.alpha();
    let exceeds = (0..n).map(|i| !limits.admits_symmetric(i, bound[i])).collect();
    Ok(SaturationBudget {
        bound,
        feedforward_sup: ff_sup,
        gravity_sup: grav_sup,
        exceeds,
    })
}
