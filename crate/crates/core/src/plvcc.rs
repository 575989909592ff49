//! Momentum change of coordinates `P = Ψᵀ(q) p` with `M⁻¹(q) = Ψ(q)Ψᵀ(q)`.
//!
//! In the new coordinates the kinetic energy is `½ PᵀP` and the dynamics read
//!
//! ```text
//! q̇ = Ψ(q) P
//! Ṗ = -Ψᵀ(q) ∂V/∂q + J(q, P) P + Ψᵀ(q) u
//! ```
//!
//! with the skew-symmetric gyroscopic matrix
//! `J_ij(q, P) = -Pᵀ Ψ⁻¹(q) [Ψ_i, Ψ_j](q)` built from Lie brackets of the
//! columns of `Ψ`.
//!
//! The factor is fixed to `Ψ = L⁻ᵀ` where `M = LLᵀ` is the lower Cholesky
//! factorization, so `Ψ` is upper triangular with a positive diagonal and
//! `Ψ⁻¹ = Lᵀ`.

use nalgebra::{Cholesky, Dyn};

use crate::error::{ensure_dim, Error, Result};
use crate::model::{fd_step, mass_cholesky, potential_gradient, MechModel};
use crate::{Matrix, Vector};

/// How the configuration derivatives of `Ψ` are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianSource {
    /// Differentiate the Cholesky factor analytically when the model provides
    /// `∂M/∂q`, otherwise fall back to central differences.
    #[default]
    Auto,
    /// Always use central differences on `Ψ(·)`.
    FiniteDifference,
}

/// Everything needed at one configuration: `Ψ`, `Ψ⁻¹` and the Jacobians of
/// the columns of `Ψ` seen as vector fields.
#[derive(Debug, Clone)]
pub struct PlvccFrame {
    pub q: Vector,
    pub psi: Matrix,
    pub psi_inv: Matrix,
    /// `col_jacobians[k]` is `∂Ψ_k/∂q`: column `m` holds `∂Ψ_k/∂q_m`.
    pub col_jacobians: Vec<Matrix>,
}

fn factor_from_cholesky(chol: &Cholesky<f64, Dyn>) -> (Matrix, Matrix) {
    let l = chol.l();
    let n = l.nrows();
    let l_inv = l
        .solve_lower_triangular(&Matrix::identity(n, n))
        .expect("Cholesky factor has a positive diagonal");
    (l_inv.transpose(), l.transpose())
}

/// `Ψ(q)` alone.
pub fn psi(model: &dyn MechModel, q: &Vector) -> Result<Matrix> {
    Ok(factor_from_cholesky(&mass_cholesky(model, q)?).0)
}

/// Factorizes `M⁻¹(q)` with the default Jacobian source.
pub fn factorize(model: &dyn MechModel, q: &Vector) -> Result<PlvccFrame> {
    factorize_with(model, q, JacobianSource::Auto)
}

pub fn factorize_with(
    model: &dyn MechModel,
    q: &Vector,
    source: JacobianSource,
) -> Result<PlvccFrame> {
    let n = model.dof();
    ensure_dim("factorize", n, q.len())?;
    let chol = mass_cholesky(model, q)?;
    let (psi, psi_inv) = factor_from_cholesky(&chol);

    let analytic = match source {
        JacobianSource::Auto => model.mass_matrix_partials(q),
        JacobianSource::FiniteDifference => None,
    };
    let psi_partials = match analytic {
        Some(dm) => {
            ensure_dim("mass matrix partials", n, dm.len())?;
            let l = chol.l();
            dm.iter()
                .map(|dm_k| cholesky_factor_partial(&l, &psi, dm_k))
                .collect::<Vec<_>>()
        }
        None => {
            let mut probe = q.clone();
            let mut out = Vec::with_capacity(n);
            for m in 0..n {
                let h = fd_step(q[m]);
                probe[m] = q[m] + h;
                let plus = self::psi(model, &probe)?;
                probe[m] = q[m] - h;
                let minus = self::psi(model, &probe)?;
                probe[m] = q[m];
                out.push((plus - minus) / (2.0 * h));
            }
            out
        }
    };

    let col_jacobians = (0..n)
        .map(|k| Matrix::from_fn(n, n, |row, m| psi_partials[m][(row, k)]))
        .collect();

    Ok(PlvccFrame {
        q: q.clone(),
        psi,
        psi_inv,
        col_jacobians,
    })
}

/// `∂Ψ/∂q_k` from `∂M/∂q_k` through the derivative of the Cholesky factor:
/// `dL = L Φ(L⁻¹ dM L⁻ᵀ)` with `Φ` taking the lower triangle and halving
/// the diagonal, then `dΨ = -Ψ dLᵀ Ψ`.
fn cholesky_factor_partial(l: &Matrix, psi: &Matrix, dm: &Matrix) -> Matrix {
    // L⁻¹ = Ψᵀ
    let x = psi.transpose() * dm * psi;
    let n = x.nrows();
    let phi = Matrix::from_fn(n, n, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => x[(i, j)],
        std::cmp::Ordering::Equal => 0.5 * x[(i, j)],
        std::cmp::Ordering::Less => 0.0,
    });
    let dl = l * phi;
    -(psi * dl.transpose() * psi)
}

impl PlvccFrame {
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Column `k` of `Ψ`.
    pub fn column(&self, k: usize) -> Vector {
        self.psi.column(k).into_owned()
    }

    /// `∂Ψ/∂q_m`, assembled from the column Jacobians.
    pub fn psi_partial(&self, m: usize) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, n, |row, k| self.col_jacobians[k][(row, m)])
    }

    /// `∂Ψ⁻¹/∂q_m = -Ψ⁻¹ (∂Ψ/∂q_m) Ψ⁻¹`.
    pub fn psi_inv_partial(&self, m: usize) -> Matrix {
        -(&self.psi_inv * self.psi_partial(m) * &self.psi_inv)
    }

    /// `P = Ψᵀ p`.
    pub fn to_transformed(&self, p: &Vector) -> Vector {
        self.psi.tr_mul(p)
    }

    /// `p = Ψ⁻ᵀ P`.
    pub fn to_canonical(&self, big_p: &Vector) -> Vector {
        self.psi_inv.tr_mul(big_p)
    }

    /// `[Ψ_i, Ψ_j] = (∂Ψ_j/∂q) Ψ_i - (∂Ψ_i/∂q) Ψ_j` (0-based indices).
    pub fn lie_bracket(&self, i: usize, j: usize) -> Result<Vector> {
        let n = self.dim();
        for index in [i, j] {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, dim: n });
            }
        }
        if i == j {
            return Ok(Vector::zeros(n));
        }
        Ok(&self.col_jacobians[j] * self.psi.column(i) - &self.col_jacobians[i] * self.psi.column(j))
    }

    fn brackets(&self) -> Vec<Vec<Vector>> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| self.lie_bracket(i, j).expect("indices in range"))
                    .collect()
            })
            .collect()
    }

    /// `J_ij(q, P) = -Pᵀ Ψ⁻¹ [Ψ_i, Ψ_j]`.
    pub fn gyroscopic_matrix(&self, big_p: &Vector) -> Matrix {
        // Pᵀ Ψ⁻¹ x = (Ψ⁻ᵀ P)ᵀ x
        let w = self.psi_inv.tr_mul(big_p);
        self.contract_brackets(&w)
    }

    /// `J_d,ij = -q̇_dᵀ M(q_d) [Ψ_i, Ψ_j](q_d)` with this frame taken at `q_d`.
    pub fn gyroscopic_matrix_desired(&self, mass: &Matrix, qd_dot: &Vector) -> Matrix {
        let w = mass.tr_mul(qd_dot);
        self.contract_brackets(&w)
    }

    fn contract_brackets(&self, w: &Vector) -> Matrix {
        let n = self.dim();
        let brackets = self.brackets();
        Matrix::from_fn(n, n, |i, j| -w.dot(&brackets[i][j]))
    }
}

/// Free-function form of [`PlvccFrame::lie_bracket`].
pub fn lie_bracket(frame: &PlvccFrame, i: usize, j: usize) -> Result<Vector> {
    frame.lie_bracket(i, j)
}

/// `P = Ψᵀ(q) p`.
pub fn transform_momentum(frame: &PlvccFrame, p: &Vector) -> Result<Vector> {
    ensure_dim("transform_momentum", frame.dim(), p.len())?;
    Ok(frame.to_transformed(p))
}

/// `p = Ψ⁻ᵀ(q) P`.
pub fn inverse_transform_momentum(frame: &PlvccFrame, big_p: &Vector) -> Result<Vector> {
    ensure_dim("inverse_transform_momentum", frame.dim(), big_p.len())?;
    Ok(frame.to_canonical(big_p))
}

pub fn gyroscopic_matrix(frame: &PlvccFrame, big_p: &Vector) -> Result<Matrix> {
    ensure_dim("gyroscopic_matrix", frame.dim(), big_p.len())?;
    Ok(frame.gyroscopic_matrix(big_p))
}

/// `J_d(t)` evaluated along the reference `(q_d, q̇_d)`.
pub fn gyroscopic_matrix_desired(
    model: &dyn MechModel,
    q_d: &Vector,
    qd_dot: &Vector,
) -> Result<Matrix> {
    ensure_dim("gyroscopic_matrix_desired", model.dof(), qd_dot.len())?;
    let frame = factorize(model, q_d)?;
    Ok(frame.gyroscopic_matrix_desired(&model.mass_matrix(q_d), qd_dot))
}

/// Vector field in transformed coordinates `(q, P)`.
pub fn transformed_rhs(
    model: &dyn MechModel,
    q: &Vector,
    big_p: &Vector,
    u: &Vector,
) -> Result<(Vector, Vector)> {
    let n = model.dof();
    ensure_dim("transformed_rhs P", n, big_p.len())?;
    ensure_dim("transformed_rhs u", n, u.len())?;
    let frame = factorize(model, q)?;
    let grad_v = potential_gradient(model, q)?;
    let q_dot = &frame.psi * big_p;
    let p_dot = frame.psi.tr_mul(&(u - grad_v)) + frame.gyroscopic_matrix(big_p) * big_p;
    Ok((q_dot, p_dot))
}
