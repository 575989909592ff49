//! Fixed-step explicit Runge-Kutta steppers.

use crate::error::{Error, Result};
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Classic fourth-order Runge-Kutta.
    #[default]
    Rk4,
    /// Second-order Heun (explicit trapezoid).
    Heun,
}

impl Integrator {
    pub fn order(self) -> i32 {
        match self {
            Integrator::Rk4 => 4,
            Integrator::Heun => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Integrator::Rk4 => "rk4",
            Integrator::Heun => "heun",
        }
    }

    /// Advances `state` from `t` to `t + dt`. `k1`, when given, must equal
    /// `rhs(t, state)`; it lets callers reuse an evaluation they already made.
    pub fn advance<F>(self, rhs: &mut F, t: f64, state: &Vector, dt: f64, k1: Option<Vector>) -> Result<Vector>
    where
        F: FnMut(f64, &Vector) -> Result<Vector>,
    {
        let mut eval = |tt: f64, y: &Vector| -> Result<Vector> {
            let d = rhs(tt, y)?;
            if d.iter().all(|v| v.is_finite()) {
                Ok(d)
            } else {
                Err(Error::NonFinite(format!(
                    "state derivative in {} step at t = {tt} (dt = {dt})",
                    self.name()
                )))
            }
        };
        let k1 = match k1 {
            Some(k) => k,
            None => eval(t, state)?,
        };
        match self {
            Integrator::Rk4 => {
                let h2 = 0.5 * dt;
                let k2 = eval(t + h2, &(state + &k1 * h2))?;
                let k3 = eval(t + h2, &(state + &k2 * h2))?;
                let k4 = eval(t + dt, &(state + &k3 * dt))?;
                Ok(state + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
            }
            Integrator::Heun => {
                let k2 = eval(t + dt, &(state + &k1 * dt))?;
                Ok(state + (k1 + k2) * (0.5 * dt))
            }
        }
    }
}

/// One step of `ẋ = rhs(t, x)`.
pub fn step<F>(rhs: &mut F, state: &Vector, t: f64, dt: f64, integrator: Integrator) -> Result<Vector>
where
    F: FnMut(f64, &Vector) -> Result<Vector>,
{
    integrator.advance(rhs, t, state, dt, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_keeps_state() {
        let x = Vector::from_column_slice(&[1.0, -2.0, 3.5]);
        for method in [Integrator::Rk4, Integrator::Heun] {
            let y = step(&mut |_, s: &Vector| Ok(Vector::zeros(s.len())), &x, 0.0, 0.1, method).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn exponential_decay_single_step() {
        let x = Vector::from_element(1, 1.0);
        let y = step(&mut |_, s: &Vector| Ok(-s), &x, 0.0, 0.1, Integrator::Rk4).unwrap();
        let err = (y[0] - (-0.1f64).exp()).abs();
        // local error of RK4 on ẋ = -x is h⁵/120 + O(h⁶)
        assert!(err < 1e-7, "err = {err}");
        assert!(err > 1e-8);
    }

    #[test]
    fn non_finite_derivative_aborts() {
        let x = Vector::from_element(1, 1.0);
        let err = step(&mut |_, _s: &Vector| Ok(Vector::from_element(1, f64::NAN)), &x, 2.0, 0.1, Integrator::Rk4)
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(msg) if msg.contains("t = 2")));
    }

    #[test]
    fn harmonic_oscillator_energy() {
        // ẋ = v, v̇ = -x: RK4 energy defect per step is h⁶/72
        for &dt in &[0.1f64, 0.05, 0.025] {
            let mut y = Vector::from_column_slice(&[1.0, 0.0]);
            let steps = (1.0 / dt).round() as usize;
            for k in 0..steps {
                y = step(
                    &mut |_, s: &Vector| Ok(Vector::from_column_slice(&[s[1], -s[0]])),
                    &y,
                    k as f64 * dt,
                    dt,
                    Integrator::Rk4,
                )
                .unwrap();
            }
            let drift = (0.5 * y.dot(&y) - 0.5).abs();
            let predicted = 0.5 * steps as f64 * dt.powi(6) / 72.0;
            assert!((drift - predicted).abs() < 0.05 * predicted, "dt {dt}: {drift} vs {predicted}");
            assert!(drift < dt.powi(4));
        }
    }
}
