//! Built-in property suite for the library, runnable from the command line.

use std::f64::consts::PI;
use std::fmt::Write as _;

use phtrack::controller::{feedforward_terms, Gains, SaturatedGains};
use phtrack::model::{fd_gradient, hamiltonian, ConstantInertiaModel, MechModel, PeraModel, PhState};
use phtrack::plvcc::{factorize, factorize_with, JacobianSource};
use phtrack::simulation::{dissipation_check, open_loop_tracking_error, simulate, Integrator, Profile, SimConfig};
use phtrack::trajectory::{approach_blend, circle_trajectory, constant_setpoint, Trajectory};
use phtrack::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deliberate defects, to show that the checks catch them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Negates the largest upper-triangular entry of `J` before the
    /// skew-symmetry check.
    FlipGyroscopicEntry,
    /// Leaves the `J_d` term out of the feedforward.
    DropFeedforwardGyroscopic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<26} {:>12} {:>12}  result  note", "check", "value", "tolerance").unwrap();
        for c in &self.checks {
            writeln!(
                out,
                "{:<26} {:>12.3e} {:>12.1e}  {:<6}  {}",
                c.name,
                c.value,
                c.tolerance,
                if c.passed { "PASS" } else { "FAIL" },
                c.note
            )
            .unwrap();
        }
        writeln!(
            out,
            "{} of {} checks passed",
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len()
        )
        .unwrap();
        out
    }
}

struct Effort {
    samples: usize,
    feasibility_dt: f64,
    lyapunov_horizon: f64,
    conservation_horizon: f64,
}

fn check(name: &'static str, value: f64, tolerance: f64, note: impl Into<String>) -> CheckResult {
    CheckResult {
        name,
        value,
        tolerance,
        passed: value.is_finite() && value <= tolerance,
        note: note.into(),
    }
}

fn failed(name: &'static str, tolerance: f64, err: impl std::fmt::Display) -> CheckResult {
    CheckResult {
        name,
        value: f64::NAN,
        tolerance,
        passed: false,
        note: format!("error: {err}"),
    }
}

fn random_configurations(seed: u64, count: usize) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Vector::from_fn(3, |_, _| rng.random_range(-PI..PI)))
        .collect()
}

type Outcome = phtrack::Result<(f64, String)>;

fn factorization(model: &PeraModel, qs: &[Vector]) -> Outcome {
    let mut worst = 0.0f64;
    for q in qs {
        let f = factorize(model, q)?;
        let m_inv = model.mass_matrix(q).try_inverse().unwrap_or_else(|| Matrix::from_element(3, 3, f64::NAN));
        worst = worst
            .max((&f.psi * f.psi.transpose() - &m_inv).norm() / m_inv.norm())
            .max((&f.psi * &f.psi_inv - Matrix::identity(3, 3)).amax());
    }
    Ok((worst, format!("{} configurations", qs.len())))
}

fn skew_symmetry(model: &PeraModel, qs: &[Vector], fault: Fault) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for q in qs {
        let f = factorize(model, q)?;
        let big_p = Vector::from_fn(3, |_, _| rng.random_range(-10.0..10.0));
        let mut j = f.gyroscopic_matrix(&big_p);
        if fault == Fault::FlipGyroscopicEntry {
            let (r, c) = [(0, 1), (0, 2), (1, 2)]
                .into_iter()
                .max_by(|a, b| j[*a].abs().total_cmp(&j[*b].abs()))
                .expect("three candidates");
            j[(r, c)] = -j[(r, c)];
        }
        worst = worst.max((&j + j.transpose()).norm() / (1.0 + big_p.norm()));
    }
    Ok((worst, "‖J+Jᵀ‖/(1+‖P‖)".into()))
}

fn bracket_antisymmetry(model: &PeraModel, qs: &[Vector]) -> Outcome {
    let mut worst = 0.0f64;
    for q in qs {
        let f = factorize(model, q)?;
        for i in 0..3 {
            for k in 0..3 {
                worst = worst.max((f.lie_bracket(i, k)? + f.lie_bracket(k, i)?).amax());
            }
        }
    }
    Ok((worst, "|[Ψi,Ψj]+[Ψj,Ψi]|".into()))
}

fn feasibility(model: &PeraModel, dt: f64, fault: Fault) -> Outcome {
    let circle = circle_trajectory(0.2, 10.0, model.params_struct().l2)?;
    // the blend leaves the vertical plane, where the reference gyroscopic term is active
    let blend = approach_blend(circle.clone(), 5.0, Vector::from_column_slice(&[0.5, 0.0, 0.0]))?;
    let input = |s: &_| -> phtrack::Result<Vector> {
        let ff = feedforward_terms(model, s)?;
        Ok(match fault {
            Fault::DropFeedforwardGyroscopic => &ff.inertial + &ff.gravity,
            _ => ff.total(),
        })
    };
    let a = open_loop_tracking_error(model, &circle, 10.0, dt, Integrator::Rk4, input)?;
    let b = open_loop_tracking_error(model, &blend, 10.0, dt, Integrator::Rk4, input)?;
    Ok((a.max(b), format!("circle {a:.2e}, blended approach {b:.2e} rad")))
}

fn lyapunov(model: &PeraModel, horizon: f64) -> Outcome {
    let gains: Gains = SaturatedGains::pera_simulation().into();
    let blend = approach_blend(circle_trajectory(0.2, 10.0, 0.48)?, 5.0, Vector::zeros(3))?;
    let mut cfg = SimConfig::new(PhState::at_rest(Vector::zeros(3)), horizon);
    cfg.record_stride = 10;
    let a = dissipation_check(&simulate(model, &Profile::Tracking(gains.clone()), &blend, &cfg)?, &gains)?;

    let rigid = ConstantInertiaModel::new(
        Matrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5]),
        Vector::from_column_slice(&[3.0, 1.0, 0.5]),
    )?;
    let circle = circle_trajectory(0.2, 10.0, 0.48)?;
    let mut cfg = SimConfig::new(
        PhState::new(Vector::from_column_slice(&[0.4, -0.3, 0.6]), Vector::from_column_slice(&[0.2, 0.0, -0.1])),
        horizon.min(10.0),
    );
    cfg.record_stride = 5;
    let b = dissipation_check(&simulate(&rigid, &Profile::Tracking(gains.clone()), &circle, &cfg)?, &gains)?;
    let violations = (a.violations() + b.violations()) as f64;
    Ok((
        violations,
        format!(
            "violations; max increase {:.1e}, max rate {:.1e}",
            a.max_increase.max(b.max_increase),
            a.max_rate.max(b.max_rate)
        ),
    ))
}

fn conservation(model: &PeraModel, horizon: f64) -> Outcome {
    let init = PhState::new(
        Vector::from_column_slice(&[0.4, -0.3, 1.2]),
        Vector::from_column_slice(&[0.05, -0.02, 0.03]),
    );
    let h0 = hamiltonian(model, &init)?;
    let mut cfg = SimConfig::new(init, horizon);
    cfg.dt = 1e-4;
    cfg.record_stride = 10;
    let trace = simulate(model, &Profile::Disabled, &constant_setpoint(Vector::zeros(3))?, &cfg)?;
    let drift = trace.rows.iter().map(|r| (r.energy - h0).abs()).fold(0.0, f64::max);
    Ok((drift, format!("|H(t)−H(0)| over {horizon} s, u ≡ 0")))
}

fn derivative_consistency(model: &PeraModel, qs: &[Vector]) -> Outcome {
    let mut worst = 0.0f64;
    let circle = circle_trajectory(0.2, 10.0, 0.48)?;
    let blend = approach_blend(circle.clone(), 5.0, Vector::from_column_slice(&[0.5, -0.2, 0.3]))?;
    let h = 1e-5;
    for traj in [&circle as &dyn Trajectory, &blend] {
        for k in 0..50 {
            let t = 0.013 + 0.2 * k as f64;
            let (a, b, s) = (traj.sample(t - h), traj.sample(t + h), traj.sample(t));
            worst = worst
                .max(((&b.q_d - &a.q_d) / (2.0 * h) - &s.qd_dot).amax())
                .max(((&b.qd_dot - &a.qd_dot) / (2.0 * h) - &s.qd_ddot).amax());
        }
    }
    for q in qs.iter().take(50) {
        let analytic = model.grad_potential(q).expect("the arm has an analytic gradient");
        let numeric = fd_gradient(|x| model.potential(x), q, 1e-6)?;
        worst = worst.max((analytic - numeric).amax());
        let a = factorize_with(model, q, JacobianSource::Auto)?;
        let b = factorize_with(model, q, JacobianSource::FiniteDifference)?;
        for k in 0..3 {
            worst = worst.max((&a.col_jacobians[k] - &b.col_jacobians[k]).amax());
        }
    }
    Ok((worst, "references, ∂V/∂q and ∂Ψ/∂q vs central differences".into()))
}

/// Runs every check. `fast` trims sample counts and horizons.
pub fn run_checks(fast: bool, fault: Fault) -> VerifyReport {
    let effort = if fast {
        Effort {
            samples: 200,
            feasibility_dt: 1e-3,
            lyapunov_horizon: 10.0,
            conservation_horizon: 2.0,
        }
    } else {
        Effort {
            samples: 1000,
            feasibility_dt: 1e-4,
            lyapunov_horizon: 40.0,
            conservation_horizon: 10.0,
        }
    };
    let model = PeraModel::default();
    let qs = random_configurations(5, effort.samples);
    let rows: Vec<(&'static str, f64, Outcome)> = vec![
        ("factorization", 1e-10, factorization(&model, &qs)),
        ("skew-symmetry", 1e-6, skew_symmetry(&model, &qs, fault)),
        ("bracket antisymmetry", 1e-8, bracket_antisymmetry(&model, &qs)),
        ("feasibility residual", 1e-3, feasibility(&model, effort.feasibility_dt, fault)),
        ("Lyapunov monotonicity", 0.0, lyapunov(&model, effort.lyapunov_horizon)),
        ("energy conservation", 1e-6, conservation(&model, effort.conservation_horizon)),
        ("derivative consistency", 1e-5, derivative_consistency(&model, &qs)),
    ];
    VerifyReport {
        checks: rows
            .into_iter()
            .map(|(name, tol, outcome)| match outcome {
                Ok((value, note)) => check(name, value, tol, note),
                Err(e) => failed(name, tol, e),
            })
            .collect(),
    }
}
