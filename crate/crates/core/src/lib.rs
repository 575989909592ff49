//! Position-only, saturated passivity-based trajectory tracking for fully
//! actuated port-Hamiltonian mechanical systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: the mechanical model abstraction `H(q, p) = ½ pᵀM⁻¹(q)p + V(q)`,
//!   its open-loop vector field and the reduced 3-DoF PERA arm.
//! * [`plvcc`]: the momentum change of coordinates `P = Ψᵀ(q) p` with
//!   `M⁻¹ = ΨΨᵀ`, Lie brackets of the columns of `Ψ` and the gyroscopic matrices.
//! * [`trajectory`]: smooth reference generators with analytic derivatives.
//! * [`controller`]: feedforward, dynamic extension and the saturated /
//!   unsaturated stabilizers composed into the tracking law.
//! * [`simulation`]: fixed-step integration of the closed loop, Lyapunov
//!   monitoring and run metrics.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod model;
pub mod plvcc;
pub mod simulation;
pub mod trajectory;

pub use error::{Error, Result};

/// Dynamically sized column vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
/// Dynamically sized matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
