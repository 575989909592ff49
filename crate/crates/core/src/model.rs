//! Mechanical systems in port-Hamiltonian form.
//!
//! A model supplies the inertia matrix `M(q)` and the potential `V(q)`; the
//! Hamiltonian is `H(q, p) = ½ pᵀM⁻¹(q)p + V(q)` and the open-loop dynamics are
//! `q̇ = ∂H/∂p`, `ṗ = -∂H/∂q + u`.

use nalgebra::{Cholesky, Dyn, SymmetricEigen};

use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::{Matrix, Vector};

/// Evaluatable description of an `n`-DoF fully actuated mechanical system.
///
/// Implementations must be pure functions of `q`; a model is shared
/// read-only between concurrent simulations.
pub trait MechModel: Send + Sync {
    /// Number of degrees of freedom.
    fn dof(&self) -> usize;

    fn name(&self) -> &str;

    /// Inertia matrix `M(q)`, symmetric positive definite.
    fn mass_matrix(&self, q: &Vector) -> Matrix;

    /// Potential energy `V(q)`.
    fn potential(&self, q: &Vector) -> f64;

    /// Analytic `∂V/∂q`. When `None` a central-difference gradient is used.
    fn grad_potential(&self, _q: &Vector) -> Option<Vector> {
        None
    }

    /// Analytic partial derivatives `∂M/∂q_k`, `k = 1..n`. When `None` the
    /// kinetic gradient and the factor Jacobians fall back to finite differences.
    fn mass_matrix_partials(&self, _q: &Vector) -> Option<Vec<Matrix>> {
        None
    }

    /// Named scalar parameters, for reports.
    fn params(&self) -> Vec<(&'static str, f64)> {
        Vec::new()
    }
}

/// Canonical state `(q, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhState {
    pub q: Vector,
    pub p: Vector,
}

impl PhState {
    pub fn new(q: Vector, p: Vector) -> Self {
        Self { q, p }
    }

    pub fn at_rest(q: Vector) -> Self {
        let n = q.len();
        Self {
            q,
            p: Vector::zeros(n),
        }
    }

    pub fn validate(&self, model: &dyn MechModel) -> Result<()> {
        ensure_dim("state q", model.dof(), self.q.len())?;
        ensure_dim("state p", model.dof(), self.p.len())?;
        ensure_finite("state q", self.q.as_slice())?;
        ensure_finite("state p", self.p.as_slice())
    }
}

/// Relative central-difference step used for configuration derivatives.
pub fn fd_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

/// Central-difference gradient of a scalar field with a fixed step `h`.
pub fn fd_gradient<F>(f: F, q: &Vector, h: f64) -> Result<Vector>
where
    F: Fn(&Vector) -> f64,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut grad = Vector::zeros(q.len());
    let mut probe = q.clone();
    for k in 0..q.len() {
        probe[k] = q[k] + h;
        let fp = f(&probe);
        probe[k] = q[k] - h;
        let fm = f(&probe);
        probe[k] = q[k];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!(
                "scalar field near q = {:?} along axis {k}",
                q.as_slice()
            )));
        }
        grad[k] = (fp - fm) / (2.0 * h);
    }
    Ok(grad)
}

/// Cholesky factor of `M(q)`, reporting the smallest eigenvalue on failure.
pub(crate) fn mass_cholesky(model: &dyn MechModel, q: &Vector) -> Result<Cholesky<f64, Dyn>> {
    let m = model.mass_matrix(q);
    ensure_finite("mass matrix", m.as_slice())?;
    match Cholesky::new(m.clone()) {
        Some(c) => Ok(c),
        None => Err(Error::NotPositiveDefinite {
            q: q.as_slice().to_vec(),
            min_eigenvalue: min_eigenvalue(&m),
        }),
    }
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `∂V/∂q`, analytic when the model provides it.
pub fn potential_gradient(model: &dyn MechModel, q: &Vector) -> Result<Vector> {
    ensure_dim("potential gradient", model.dof(), q.len())?;
    if let Some(g) = model.grad_potential(q) {
        ensure_finite("potential gradient", g.as_slice())?;
        return Ok(g);
    }
    let mut grad = Vector::zeros(q.len());
    let mut probe = q.clone();
    for k in 0..q.len() {
        let h = fd_step(q[k]);
        probe[k] = q[k] + h;
        let fp = model.potential(&probe);
        probe[k] = q[k] - h;
        let fm = model.potential(&probe);
        probe[k] = q[k];
        grad[k] = (fp - fm) / (2.0 * h);
    }
    ensure_finite("potential gradient", grad.as_slice())?;
    Ok(grad)
}

/// `H(q, p) = ½ pᵀM⁻¹(q)p + V(q)`.
pub fn hamiltonian(model: &dyn MechModel, s: &PhState) -> Result<f64> {
    s.validate(model)?;
    let chol = mass_cholesky(model, &s.q)?;
    let v = chol.solve(&s.p);
    Ok(0.5 * s.p.dot(&v) + model.potential(&s.q))
}

/// Configuration gradient of the kinetic energy `½ pᵀM⁻¹(q)p` at fixed `p`.
pub fn kinetic_gradient(model: &dyn MechModel, q: &Vector, p: &Vector) -> Result<Vector> {
    let n = model.dof();
    if let Some(partials) = model.mass_matrix_partials(q) {
        ensure_dim("mass matrix partials", n, partials.len())?;
        // ∂/∂q_k (½ pᵀM⁻¹p) = -½ vᵀ (∂M/∂q_k) v with v = M⁻¹p
        let v = mass_cholesky(model, q)?.solve(p);
        return Ok(Vector::from_iterator(
            n,
            partials.iter().map(|dm| -0.5 * v.dot(&(dm * &v))),
        ));
    }
    let mut grad = Vector::zeros(n);
    let mut probe = q.clone();
    for k in 0..n {
        let h = fd_step(q[k]);
        probe[k] = q[k] + h;
        let kp = 0.5 * p.dot(&mass_cholesky(model, &probe)?.solve(p));
        probe[k] = q[k] - h;
        let km = 0.5 * p.dot(&mass_cholesky(model, &probe)?.solve(p));
        probe[k] = q[k];
        grad[k] = (kp - km) / (2.0 * h);
    }
    Ok(grad)
}

/// Open-loop vector field: `q̇ = M⁻¹(q)p`, `ṗ = -∂H/∂q(q, p) + u`.
pub fn open_loop_rhs(model: &dyn MechModel, s: &PhState, u: &Vector) -> Result<(Vector, Vector)> {
    s.validate(model)?;
    ensure_dim("input u", model.dof(), u.len())?;
    ensure_finite("input u", u.as_slice())?;
    let chol = mass_cholesky(model, &s.q)?;
    let q_dot = chol.solve(&s.p);
    let dh_dq = potential_gradient(model, &s.q)? + kinetic_gradient(model, &s.q, &s.p)?;
    let p_dot = u - dh_dq;
    Ok((q_dot, p_dot))
}

/// Physical parameters of the reduced (shoulder pitch, shoulder yaw, elbow
/// pitch) PERA arm, SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeraParams {
    pub g: f64,
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

impl Default for PeraParams {
    fn default() -> Self {
        Self {
            g: 9.81,
            l1: 0.32,
            l2: 0.48,
            m1: 2.9,
            m2: 1.0,
            i1: 0.03,
            i2: 4e-3,
            i3: 0.02,
        }
    }
}

impl PeraParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "PERA parameter {name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn named(&self) -> [(&'static str, f64); 8] {
        [
            ("g", self.g),
            ("L1", self.l1),
            ("L2", self.l2),
            ("m1", self.m1),
            ("m2", self.m2),
            ("I1", self.i1),
            ("I2", self.i2),
            ("I3", self.i3),
        ]
    }

    /// `a = (m₁ + m₂) L₁²`
    pub fn a(&self) -> f64 {
        (self.m1 + self.m2) * self.l1 * self.l1
    }

    /// Amplitude of the shoulder-pitch gravity term, `(m₁/3 + m₂) g L₁`.
    pub fn shoulder_gravity(&self) -> f64 {
        (self.m1 / 3.0 + self.m2) * self.g * self.l1
    }

    /// Amplitude of the forearm gravity term, `(1/3) m₂ g L₂`.
    pub fn forearm_gravity(&self) -> f64 {
        self.m2 * self.g * self.l2 / 3.0
    }
}

/// Reduced 3-DoF PERA arm.
#[derive(Debug, Clone, Default)]
pub struct PeraModel {
    params: PeraParams,
}

/// Builds the PERA model after validating the parameters.
pub fn pera_model(params: PeraParams) -> Result<PeraModel> {
    params.validate()?;
    Ok(PeraModel { params })
}

impl PeraModel {
    pub fn params_struct(&self) -> &PeraParams {
        &self.params
    }
}

impl MechModel for PeraModel {
    fn dof(&self) -> usize {
        3
    }

    fn name(&self) -> &str {
        "pera"
    }

    fn mass_matrix(&self, q: &Vector) -> Matrix {
        let p = &self.params;
        let (s1, c1) = q[0].sin_cos();
        let m11 = p.i1 + p.i2 + p.i3 + p.a() * s1 * s1;
        let m13 = p.i3 * c1;
        Matrix::from_row_slice(
            3,
            3,
            &[m11, 0.0, m13, 0.0, p.i2 + p.i3 + p.a(), 0.0, m13, 0.0, p.i3],
        )
    }

    fn potential(&self, q: &Vector) -> f64 {
        let p = &self.params;
        let (s1, c1) = q[0].sin_cos();
        let (s3, c3) = q[2].sin_cos();
        let b = q[1].cos() * s1 * s3 - c1 * c3;
        -p.shoulder_gravity() * c1 + p.forearm_gravity() * b
    }

    fn grad_potential(&self, q: &Vector) -> Option<Vector> {
        let p = &self.params;
        let (s1, c1) = q[0].sin_cos();
        let (s2, c2) = q[1].sin_cos();
        let (s3, c3) = q[2].sin_cos();
        let k1 = p.shoulder_gravity();
        let k2 = p.forearm_gravity();
        Some(Vector::from_column_slice(&[
            k1 * s1 + k2 * (c2 * c1 * s3 + s1 * c3),
            -k2 * s2 * s1 * s3,
            k2 * (c2 * s1 * c3 + c1 * s3),
        ]))
    }

    fn mass_matrix_partials(&self, q: &Vector) -> Option<Vec<Matrix>> {
        let p = &self.params;
        let (s1, c1) = q[0].sin_cos();
        let d11 = 2.0 * p.a() * s1 * c1;
        let d13 = -p.i3 * s1;
        let dq1 = Matrix::from_row_slice(3, 3, &[d11, 0.0, d13, 0.0, 0.0, 0.0, d13, 0.0, 0.0]);
        Some(vec![dq1, Matrix::zeros(3, 3), Matrix::zeros(3, 3)])
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        self.params.named().to_vec()
    }
}

/// Constant inertia with independent pendulum-like gravity on every axis,
/// `V(q) = Σ kᵢ (1 - cos qᵢ)`.
///
/// With constant `M` the factor `Ψ` is constant, all Lie brackets vanish and
/// the tracking error dynamics are exactly port-Hamiltonian; handy as a
/// reference plant.
#[derive(Debug, Clone)]
pub struct ConstantInertiaModel {
    mass: Matrix,
    gravity: Vector,
}

impl ConstantInertiaModel {
    pub fn new(mass: Matrix, gravity: Vector) -> Result<Self> {
        let n = mass.nrows();
        ensure_dim("constant inertia (columns)", n, mass.ncols())?;
        ensure_dim("gravity amplitudes", n, gravity.len())?;
        ensure_finite("constant inertia", mass.as_slice())?;
        ensure_finite("gravity amplitudes", gravity.as_slice())?;
        if (&mass - mass.transpose()).amax() > 1e-12 * mass.amax().max(1.0) {
            return Err(Error::InvalidParameter("inertia matrix is not symmetric".into()));
        }
        let min_eig = min_eigenvalue(&mass);
        if !(min_eig > 0.0) {
            return Err(Error::NotPositiveDefinite {
                q: vec![],
                min_eigenvalue: min_eig,
            });
        }
        Ok(Self { mass, gravity })
    }

    /// Identity inertia, no gravity.
    pub fn free(n: usize) -> Self {
        Self {
            mass: Matrix::identity(n, n),
            gravity: Vector::zeros(n),
        }
    }
}

impl MechModel for ConstantInertiaModel {
    fn dof(&self) -> usize {
        self.mass.nrows()
    }

    fn name(&self) -> &str {
        "constant-inertia"
    }

    fn mass_matrix(&self, _q: &Vector) -> Matrix {
        self.mass.clone()
    }

    fn potential(&self, q: &Vector) -> f64 {
        q.iter()
            .zip(self.gravity.iter())
            .map(|(qi, k)| k * (1.0 - qi.cos()))
            .sum()
    }

    fn grad_potential(&self, q: &Vector) -> Option<Vector> {
        Some(q.zip_map(&self.gravity, |qi, k| k * qi.sin()))
    }

    fn mass_matrix_partials(&self, _q: &Vector) -> Option<Vec<Matrix>> {
        let n = self.dof();
        Some(vec![Matrix::zeros(n, n); n])
    }
}
