use phtrack::controller::{feedforward, feedforward_terms, saturation_budget, ActuatorLimits, BudgetSampling, ConfigurationBox, SaturatedGains};
use phtrack::model::PeraModel;
use phtrack::plvcc::gyroscopic_matrix_desired;
use phtrack::trajectory::{approach_blend, circle_trajectory, Trajectory, TrajectorySample};
use phtrack::Vector;
use proptest::prelude::*;

fn v3(a: f64, b: f64, c: f64) -> Vector {
    Vector::from_column_slice(&[a, b, c])
}

fn assert_close(got: &Vector, expected: &Vector, tol: f64) {
    assert!(
        (got - expected).amax() < tol,
        "got {got:?}, expected {expected:?}"
    );
}

// Values from an independent Euler-Lagrange evaluation
// u = M q̈ + Ṁ q̇ - ½ q̇ᵀ ∂M/∂q q̇ + ∂V/∂q, with ∂M/∂q by differences.
#[test]
fn feedforward_matches_euler_lagrange_on_the_circle() {
    let model = PeraModel::default();
    let circle = circle_trajectory(0.2, 10.0, 0.48).unwrap();
    for (t, expected) in [
        (0.0, v3(1.43025292, 0.0, 1.43025292)),
        (1.3, v3(1.43136416, -0.05236245, 1.50448347)),
        (7.7, v3(1.42742031, 0.07126447, 1.56774879)),
    ] {
        let u = feedforward(&model, &circle.sample(t)).unwrap();
        assert_close(&u, &expected, 1e-7);
    }
}

#[test]
fn feedforward_matches_euler_lagrange_off_axis() {
    let model = PeraModel::default();
    let sample = TrajectorySample {
        t: 0.0,
        q_d: v3(0.7, -0.4, 1.2),
        qd_dot: v3(0.5, -0.3, 0.8),
        qd_ddot: v3(0.1, 0.2, -0.3),
    };
    let u = feedforward(&model, &sample).unwrap();
    assert_close(&u, &v3(5.4408111, 0.45167715, 1.44869771), 1e-7);
}

#[test]
fn feedforward_parts_add_up() {
    let model = PeraModel::default();
    let sample = circle_trajectory(0.2, 10.0, 0.48).unwrap().sample(3.3);
    let parts = feedforward_terms(&model, &sample).unwrap();
    assert_close(&(parts.dynamic() + &parts.gravity), &parts.total(), 1e-15);
    assert_close(&(&parts.inertial + &parts.gyroscopic), &parts.dynamic(), 1e-15);
}

#[test]
fn gyroscopic_reference_matrix_vanishes_in_the_vertical_plane() {
    // the circle keeps q1 = 0 where every ∂M/∂q vanishes
    let model = PeraModel::default();
    let circle = circle_trajectory(0.2, 10.0, 0.48).unwrap();
    let s = circle.sample(4.1);
    let jd = gyroscopic_matrix_desired(&model, &s.q_d, &s.qd_dot).unwrap();
    assert!(jd.amax() < 1e-12);
    let jd = gyroscopic_matrix_desired(&model, &v3(0.6, 0.1, 1.0), &v3(0.3, -0.2, 0.4)).unwrap();
    assert!(jd.amax() > 1e-3);
}

fn check_derivatives(traj: &dyn Trajectory, t: f64) {
    let h = 1e-5;
    let a = traj.sample(t - h);
    let b = traj.sample(t + h);
    let s = traj.sample(t);
    let vel = (&b.q_d - &a.q_d) / (2.0 * h);
    let acc = (&b.qd_dot - &a.qd_dot) / (2.0 * h);
    assert!((vel - &s.qd_dot).amax() < 1e-6, "velocity at t = {t}");
    assert!((acc - &s.qd_ddot).amax() < 1e-5, "acceleration at t = {t}");
}

proptest! {
    #[test]
    fn circle_derivatives_are_consistent(t in 0.0..50.0f64) {
        check_derivatives(&circle_trajectory(0.2, 10.0, 0.48).unwrap(), t);
    }

    #[test]
    fn blend_derivatives_are_consistent(t in 1e-3..20.0f64, a in -1.0..1.0f64, b in -1.0..1.0f64) {
        let blend = approach_blend(circle_trajectory(0.2, 10.0, 0.48).unwrap(), 5.0, v3(a, b, 0.3)).unwrap();
        check_derivatives(&blend, t);
    }
}

#[test]
fn simulation_gains_overrun_the_second_axis_budget() {
    let model = PeraModel::default();
    let circle = circle_trajectory(0.2, 10.0, 0.48).unwrap();
    let sampling = BudgetSampling {
        horizon: 10.0,
        time_samples: 2000,
        gravity_box: ConfigurationBox::full_revolution(3, 41),
    };
    let b = saturation_budget(
        &model,
        &SaturatedGains::pera_simulation(),
        &circle,
        &sampling,
        &ActuatorLimits::pera(),
    )
    .unwrap();
    assert_close(&b.gravity_sup, &v3(7.74336, 1.5696, 1.5696), 1e-9);
    assert_eq!(b.exceeds, vec![false, true, false]);
    assert_eq!(b.binding_axis(), Some(1));
    assert!(b.bound[0] < 18.77 && b.bound[2] < 7.72);
}
