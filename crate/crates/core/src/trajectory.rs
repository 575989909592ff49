//! Reference trajectories with analytic first and second derivatives.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use crate::error::{ensure_finite, Error, Result};
use crate::Vector;

/// One sample `(t, q_d, q̇_d, q̈_d)` of a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub q_d: Vector,
    pub qd_dot: Vector,
    pub qd_ddot: Vector,
}

impl TrajectorySample {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.q_d.iter().all(|v| v.is_finite())
            && self.qd_dot.iter().all(|v| v.is_finite())
            && self.qd_ddot.iter().all(|v| v.is_finite())
    }
}

/// A smooth, bounded reference `t ↦ (q_d, q̇_d, q̈_d)`, pure in `t`.
pub trait Trajectory: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, t: f64) -> TrajectorySample;
}

impl<T: Trajectory + ?Sized> Trajectory for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn sample(&self, t: f64) -> TrajectorySample {
        (**self).sample(t)
    }
}

impl<T: Trajectory + ?Sized> Trajectory for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn sample(&self, t: f64) -> TrajectorySample {
        (**self).sample(t)
    }
}

/// Joint-space parameterization of a circle traced by the PERA end effector:
///
/// ```text
/// q_d(t) = [0, A sin(ωt), π/2 - A cos(ωt)],  A = asin(r / L₂), ω = 2π / T
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct CircleTrajectory {
    amplitude: f64,
    omega: f64,
    period: f64,
}

pub fn circle_trajectory(radius: f64, period: f64, l2: f64) -> Result<CircleTrajectory> {
    ensure_finite("circle parameters", &[radius, period, l2])?;
    if !(radius > 0.0) || radius >= l2 {
        return Err(Error::InvalidParameter(format!(
            "circle radius must satisfy 0 < r < L2 (r = {radius}, L2 = {l2})"
        )));
    }
    if !(period > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "circle period must be positive, got {period}"
        )));
    }
    Ok(CircleTrajectory {
        amplitude: (radius / l2).asin(),
        omega: 2.0 * PI / period,
        period,
    })
}

impl CircleTrajectory {
    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }
}

impl Trajectory for CircleTrajectory {
    fn dim(&self) -> usize {
        3
    }

    fn sample(&self, t: f64) -> TrajectorySample {
        let a = self.amplitude;
        let w = self.omega;
        // reduce the phase so that sample(t) == sample(t + T) bit for bit
        let phase = w * t.rem_euclid(self.period);
        let (s, c) = phase.sin_cos();
        TrajectorySample {
            t,
            q_d: Vector::from_column_slice(&[0.0, a * s, FRAC_PI_2 - a * c]),
            qd_dot: Vector::from_column_slice(&[0.0, a * w * c, a * w * s]),
            qd_ddot: Vector::from_column_slice(&[0.0, -a * w * w * s, a * w * w * c]),
        }
    }
}

/// Constant reference `q_d ≡ q*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantSetpoint {
    target: Vector,
}

pub fn constant_setpoint(target: Vector) -> Result<ConstantSetpoint> {
    ensure_finite("set-point", target.as_slice())?;
    Ok(ConstantSetpoint { target })
}

impl Trajectory for ConstantSetpoint {
    fn dim(&self) -> usize {
        self.target.len()
    }

    fn sample(&self, t: f64) -> TrajectorySample {
        let n = self.target.len();
        TrajectorySample {
            t,
            q_d: self.target.clone(),
            qd_dot: Vector::zeros(n),
            qd_ddot: Vector::zeros(n),
        }
    }
}

/// C² quintic smoothstep `6x⁵ - 15x⁴ + 10x³` clamped to `[0, 1]`, with its
/// first and second derivatives.
pub fn smoothstep(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let x2 = x * x;
        let x3 = x2 * x;
        (
            x3 * (10.0 + x * (-15.0 + 6.0 * x)),
            30.0 * x2 * (1.0 - x) * (1.0 - x),
            60.0 * x * (1.0 - x) * (1.0 - 2.0 * x),
        )
    }
}

/// Drives the reference from a start configuration `q0` onto an inner
/// reference: `q_d(t) = q0 + s(t / t_ramp) (inner(t) - q0)`.
///
/// Identical to the inner reference for `t ≥ t_ramp`.
#[derive(Debug, Clone)]
pub struct ApproachBlend<T> {
    inner: T,
    t_ramp: f64,
    q0: Vector,
}

pub fn approach_blend<T: Trajectory>(inner: T, t_ramp: f64, q0: Vector) -> Result<ApproachBlend<T>> {
    if !(t_ramp > 0.0) || !t_ramp.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "blend ramp time must be positive, got {t_ramp}"
        )));
    }
    if q0.len() != inner.dim() {
        return Err(Error::DimensionMismatch {
            context: "blend start configuration",
            expected: inner.dim(),
            got: q0.len(),
        });
    }
    ensure_finite("blend start configuration", q0.as_slice())?;
    Ok(ApproachBlend { inner, t_ramp, q0 })
}

impl<T: Trajectory> Trajectory for ApproachBlend<T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn sample(&self, t: f64) -> TrajectorySample {
        let inner = self.inner.sample(t);
        if t >= self.t_ramp {
            return inner;
        }
        let (s, ds, dds) = smoothstep(t / self.t_ramp);
        let ds = ds / self.t_ramp;
        let dds = dds / (self.t_ramp * self.t_ramp);
        let gap = &inner.q_d - &self.q0;
        TrajectorySample {
            t,
            q_d: &self.q0 + &gap * s,
            qd_dot: &gap * ds + &inner.qd_dot * s,
            qd_ddot: &gap * dds + &inner.qd_dot * (2.0 * ds) + &inner.qd_ddot * s,
        }
    }
}

/// Per-axis suprema of `|q_d|`, `|q̇_d|`, `|q̈_d|` over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBounds {
    pub position: Vector,
    pub velocity: Vector,
    pub acceleration: Vector,
}

/// Dense sampling of a reference on `[0, horizon]` with `samples + 1` points.
pub fn sampled_bounds(traj: &dyn Trajectory, horizon: f64, samples: usize) -> Result<TrajectoryBounds> {
    if samples == 0 || !(horizon >= 0.0) {
        return Err(Error::InvalidParameter("bounds need samples > 0 and horizon ≥ 0".into()));
    }
    let n = traj.dim();
    let mut b = TrajectoryBounds {
        position: Vector::zeros(n),
        velocity: Vector::zeros(n),
        acceleration: Vector::zeros(n),
    };
    for k in 0..=samples {
        let s = traj.sample(horizon * k as f64 / samples as f64);
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("trajectory sample at t = {}", s.t)));
        }
        b.position = b.position.zip_map(&s.q_d, |m, v| m.max(v.abs()));
        b.velocity = b.velocity.zip_map(&s.qd_dot, |m, v| m.max(v.abs()));
        b.acceleration = b.acceleration.zip_map(&s.qd_ddot, |m, v| m.max(v.abs()));
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_circle() -> CircleTrajectory {
        circle_trajectory(0.2, 10.0, 0.48).unwrap()
    }

    #[test]
    fn circle_start_point() {
        let s = reference_circle().sample(0.0);
        assert_eq!(s.q_d[0], 0.0);
        assert_eq!(s.q_d[1], 0.0);
        assert!((s.q_d[2] - 1.141020895490369).abs() < 1e-12);
    }

    #[test]
    fn circle_quarter_period() {
        let c = reference_circle();
        let s = c.sample(2.5);
        assert!((s.q_d[1] - (0.2f64 / 0.48).asin()).abs() < 1e-15);
        assert!((s.q_d[2] - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn circle_is_periodic() {
        let c = reference_circle();
        // t + T is exactly representable for these
        for &t in &[0.0, 0.375, 3.25, 9.5] {
            assert_eq!(c.sample(t).q_d, c.sample(t + 10.0).q_d);
            assert_eq!(c.sample(t).qd_ddot, c.sample(t + 10.0).qd_ddot);
        }
    }

    #[test]
    fn circle_rejects_radius_beyond_forearm() {
        assert!(circle_trajectory(0.48, 10.0, 0.48).is_err());
        assert!(circle_trajectory(0.2, 0.0, 0.48).is_err());
        assert!(circle_trajectory(-0.1, 1.0, 0.48).is_err());
    }

    #[test]
    fn setpoint_is_constant() {
        let q = Vector::from_column_slice(&[0.1, -0.2]);
        let sp = constant_setpoint(q.clone()).unwrap();
        let s = sp.sample(123.0);
        assert_eq!(s.q_d, q);
        assert_eq!(s.qd_dot.amax(), 0.0);
        assert_eq!(s.qd_ddot.amax(), 0.0);
    }

    #[test]
    fn blend_endpoints() {
        let q0 = Vector::zeros(3);
        let b = approach_blend(reference_circle(), 5.0, q0.clone()).unwrap();
        let s = b.sample(0.0);
        assert_eq!(s.q_d, q0);
        assert_eq!(s.qd_dot.amax(), 0.0);
        for &t in &[5.0, 6.1, 17.0] {
            assert_eq!(b.sample(t), reference_circle().sample(t));
        }
        assert!(approach_blend(reference_circle(), 0.0, q0.clone()).is_err());
        assert!(approach_blend(reference_circle(), 1.0, Vector::zeros(2)).is_err());
    }

    #[test]
    fn smoothstep_shape() {
        assert_eq!(smoothstep(0.0), (0.0, 0.0, 0.0));
        assert_eq!(smoothstep(1.0), (1.0, 0.0, 0.0));
        let (s, _, _) = smoothstep(0.5);
        assert!((s - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bounds_are_finite() {
        let b = sampled_bounds(&reference_circle(), 100.0, 10_000).unwrap();
        let a = (0.2f64 / 0.48).asin();
        let w = 2.0 * PI / 10.0;
        assert!((b.velocity[1] - a * w).abs() < 1e-6);
        assert!((b.acceleration[2] - a * w * w).abs() < 1e-6);
    }
}
