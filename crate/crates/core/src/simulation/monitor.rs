//! Lyapunov monitoring and run metrics.

use super::{Profile, SimTrace};
use crate::controller::{ActuatorLimits, ControllerState, Gains, SaturatedGains, UnsaturatedGains};
use crate::error::{Error, Result};
use crate::Vector;

/// Constant `C` of the integrator slack `C·dtᵖ`. The per-step energy defect of
/// RK4 on the unit harmonic oscillator is `dt⁶/72 ≤ dt⁴` for `dt ≤ 1`.
pub const RK4_SLACK_COEFF: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorTolerances {
    /// Relative part `r` of the tolerance `r·(1 + H̃)`.
    pub relative: f64,
    /// `C` in the slack `C·dtᵖ`, `p` the integrator order.
    pub slack_coeff: f64,
    /// Allowed positive value of the analytic rate.
    pub rate: f64,
}

impl Default for MonitorTolerances {
    fn default() -> Self {
        Self {
            relative: 1e-8,
            slack_coeff: RK4_SLACK_COEFF,
            rate: 1e-9,
        }
    }
}

/// `ln cosh x` without overflow or cancellation near zero.
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    if a > 20.0 {
        a - std::f64::consts::LN_2 + (-2.0 * a).exp().ln_1p()
    } else {
        let s = (0.5 * a).sinh();
        (2.0 * s * s).ln_1p()
    }
}

/// `H̃_sat = Σ (αᵢ/βᵢ) ln cosh(βᵢ zᵢ) + ½ P̃ᵀP̃ + ½ x_cᵀ K_c x_c`.
pub fn lyapunov_saturated(g: &SaturatedGains, q_tilde: &Vector, p_tilde: &Vector, x_c: &Vector) -> f64 {
    let z = q_tilde + x_c;
    let potential: f64 = (0..z.len())
        .map(|i| g.alpha()[i] / g.beta()[i] * ln_cosh(g.beta()[i] * z[i]))
        .sum();
    potential + 0.5 * p_tilde.dot(p_tilde) + 0.5 * x_c.dot(&(g.kc() * x_c))
}

/// `H̃_d = ½ zᵀK_I z + ½ P̃ᵀP̃ + ½ x_cᵀ K_c x_c`.
pub fn lyapunov_quadratic(g: &UnsaturatedGains, q_tilde: &Vector, p_tilde: &Vector, x_c: &Vector) -> f64 {
    let z = q_tilde + x_c;
    0.5 * z.dot(&(g.ki() * &z)) + 0.5 * p_tilde.dot(p_tilde) + 0.5 * x_c.dot(&(g.kc() * x_c))
}

pub fn lyapunov(gains: &Gains, q_tilde: &Vector, p_tilde: &Vector, x_c: &Vector) -> f64 {
    match gains {
        Gains::Saturated(g) => lyapunov_saturated(g, q_tilde, p_tilde, x_c),
        Gains::Unsaturated(g) => lyapunov_quadratic(g, q_tilde, p_tilde, x_c),
    }
}

/// `dH̃/dt = -(∂H̃/∂x_c)ᵀ R_c (∂H̃/∂x_c)`.
pub fn lyapunov_rate(gains: &Gains, q_tilde: &Vector, x_c: &Vector) -> f64 {
    let grad = gains.extension_gradient(q_tilde, &ControllerState { x_c: x_c.clone() });
    -grad.dot(&(gains.rc() * &grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateBreach {
    pub t: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepBreach {
    pub t: f64,
    pub increase: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DissipationReport {
    /// Samples where the analytic rate exceeds its tolerance.
    pub rate_breaches: Vec<RateBreach>,
    /// Consecutive samples where `H̃` grew by more than the tolerance.
    pub increase_breaches: Vec<StepBreach>,
    pub max_rate: f64,
    pub max_increase: f64,
}

impl DissipationReport {
    pub fn violations(&self) -> usize {
        self.rate_breaches.len() + self.increase_breaches.len()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }
}

/// Checks that the recorded storage never increases (up to
/// `r·(1 + H̃_k) + C·dtᵖ`) and that the analytic rate stays non-positive.
pub fn dissipation_check(trace: &SimTrace, gains: &Gains) -> Result<DissipationReport> {
    match &trace.meta.profile {
        Profile::Tracking(g) if g == gains => {}
        other => {
            return Err(Error::ProfileMismatch {
                trace: other.name().to_string(),
                given: gains.profile().to_string(),
            })
        }
    }
    if trace.rows.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let tol = &trace.meta.tolerances;
    let slack = tol.slack_coeff * trace.meta.dt.powi(trace.meta.integrator.order());
    let mut report = DissipationReport {
        max_rate: f64::NEG_INFINITY,
        max_increase: f64::NEG_INFINITY,
        ..Default::default()
    };
    for row in &trace.rows {
        let rate = lyapunov_rate(gains, &row.q_tilde, &row.x_c);
        report.max_rate = report.max_rate.max(rate);
        if rate > tol.rate {
            report.rate_breaches.push(RateBreach { t: row.t, rate });
        }
    }
    for pair in trace.rows.windows(2) {
        let increase = pair[1].h_lyap - pair[0].h_lyap;
        let tolerance = tol.relative * (1.0 + pair[0].h_lyap) + slack;
        report.max_increase = report.max_increase.max(increase);
        if increase > tolerance {
            report.increase_breaches.push(StepBreach {
                t: pair[1].t,
                increase,
                tolerance,
            });
        }
    }
    Ok(report)
}

/// Run summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// `max_i sup_{t ≥ t_settle} |q̃_i(t)|`
    pub settled_error: f64,
    pub settled_error_per_axis: Vector,
    /// `sup_t |u_i(t)|`
    pub peak_control: Vector,
    /// `sup_t |û_i(t)|`
    pub peak_stabilizer: Vector,
    /// Dissipation-monitor breaches (zero for runs without a controller).
    pub lyap_violations: usize,
    /// `sup_t |H(t) - H(0) - ∫ uᵀq̇|`, the passivity balance defect.
    pub energy_drift: f64,
    /// Axes whose recorded input left the actuator interval.
    pub limit_exceeded: Vec<bool>,
}

pub fn metrics(trace: &SimTrace, t_settle: f64, limits: Option<&ActuatorLimits>) -> Result<Metrics> {
    let first = trace.rows.first().ok_or(Error::EmptyTrace)?;
    let last_t = trace.rows.last().map(|r| r.t).unwrap_or(first.t);
    if !(t_settle <= last_t) {
        return Err(Error::InvalidParameter(format!(
            "settling time {t_settle} lies beyond the end of the trace ({last_t})"
        )));
    }
    let n = first.q.len();
    if let Some(l) = limits {
        if l.dim() != n {
            return Err(Error::DimensionMismatch {
                context: "metrics limits",
                expected: n,
                got: l.dim(),
            });
        }
    }
    let mut settled = Vector::zeros(n);
    let mut peak = Vector::zeros(n);
    let mut peak_hat = Vector::zeros(n);
    let mut drift = 0.0f64;
    let mut exceeded = vec![false; n];
    for row in &trace.rows {
        if row.t >= t_settle {
            settled = settled.zip_map(&row.q_tilde, |m, v| m.max(v.abs()));
        }
        peak = peak.zip_map(&row.control.u, |m, v| m.max(v.abs()));
        peak_hat = peak_hat.zip_map(&row.control.u_hat, |m, v| m.max(v.abs()));
        drift = drift.max((row.energy - first.energy - row.work).abs());
        if let Some(l) = limits {
            for (i, e) in exceeded.iter_mut().enumerate() {
                let u = row.control.u[i];
                if u < l.min[i] || u > l.max[i] {
                    *e = true;
                }
            }
        }
    }
    let lyap_violations = match &trace.meta.profile {
        Profile::Tracking(g) => dissipation_check(trace, g)?.violations(),
        _ => 0,
    };
    Ok(Metrics {
        settled_error: settled.amax(),
        settled_error_per_axis: settled,
        peak_control: peak,
        peak_stabilizer: peak_hat,
        lyap_violations,
        energy_drift: drift,
        limit_exceeded: exceeded,
    })
}

/// Suprema over a trace of the quantities whose boundedness the convergence
/// argument relies on.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundedness {
    pub q: f64,
    pub p_tilde: f64,
    pub x_c: f64,
    pub psi_rate: f64,
    pub psi_inv_rate: f64,
}

impl Boundedness {
    pub fn all_below(&self, cap: f64) -> bool {
        [self.q, self.p_tilde, self.x_c, self.psi_rate, self.psi_inv_rate]
            .iter()
            .all(|v| v.is_finite() && *v < cap)
    }
}

pub fn boundedness(trace: &SimTrace) -> Result<Boundedness> {
    if trace.rows.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut b = Boundedness {
        q: 0.0,
        p_tilde: 0.0,
        x_c: 0.0,
        psi_rate: 0.0,
        psi_inv_rate: 0.0,
    };
    for r in &trace.rows {
        b.q = b.q.max(r.q.norm());
        b.p_tilde = b.p_tilde.max(r.p_tilde.norm());
        b.x_c = b.x_c.max(r.x_c.norm());
        b.psi_rate = b.psi_rate.max(r.psi_rate);
        b.psi_inv_rate = b.psi_inv_rate.max(r.psi_inv_rate);
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v3(a: f64, b: f64, c: f64) -> Vector {
        Vector::from_column_slice(&[a, b, c])
    }

    #[test]
    fn ln_cosh_accuracy() {
        assert_eq!(ln_cosh(0.0), 0.0);
        assert!((ln_cosh(1e-8) - 5e-17).abs() < 1e-30);
        assert!((ln_cosh(0.7) - 0.7f64.cosh().ln()).abs() < 1e-15);
        assert!((ln_cosh(-3.0) - 3.0f64.cosh().ln()).abs() < 1e-14);
        assert!((ln_cosh(25.0) - 25.0f64.cosh().ln()).abs() < 1e-13);
        assert!(ln_cosh(1e4).is_finite());
    }

    #[test]
    fn saturated_storage_examples() {
        let g = SaturatedGains::pera_simulation();
        let zero = Vector::zeros(3);
        assert_eq!(lyapunov_saturated(&g, &zero, &zero, &zero), 0.0);

        // βz large: (α/β) ln cosh(βz) ≈ α(|z| - ln2/β)
        let z = 2.0;
        let h = lyapunov_saturated(&g, &v3(z, 0.0, 0.0), &zero, &zero);
        let asym = 11.0 * (z - std::f64::consts::LN_2 / 40.0);
        assert!(((h - asym) / asym).abs() < 1e-6);
    }

    #[test]
    fn quadratic_storage_examples() {
        let g = SaturatedGains::pera_simulation().small_signal();
        let zero = Vector::zeros(3);
        assert_eq!(lyapunov_quadratic(&g, &zero, &zero, &zero), 0.0);
        let pt = v3(0.3, -0.4, 1.2);
        assert!((lyapunov_quadratic(&g, &zero, &pt, &zero) - 0.5 * pt.dot(&pt)).abs() < 1e-15);
        let qt = v3(0.01, 0.2, -0.1);
        let xc = v3(-0.3, 0.05, 0.02);
        let h1 = lyapunov_quadratic(&g, &qt, &pt, &xc);
        let h2 = lyapunov_quadratic(&g, &(&qt * 2.0), &(&pt * 2.0), &(&xc * 2.0));
        assert!((h2 - 4.0 * h1).abs() < 1e-12 * h2);
    }

    #[test]
    fn rate_is_non_positive() {
        let g: Gains = SaturatedGains::pera_simulation().into();
        for k in 0..50 {
            let s = k as f64 * 0.37;
            let qt = v3(s.sin(), (2.0 * s).cos(), 0.1 * s);
            let xc = v3(-s.cos(), 0.3, (s * 0.5).sin());
            assert!(lyapunov_rate(&g, &qt, &xc) <= 0.0);
        }
    }
}
