//! The plants against second implementations written from product-to-sum identities.

use proptest::prelude::*;
use safeguard_core::plants::{robot_step, vehicle_step, Plant, PlantParams, PlantRegistry, RobotPlant, VehiclePlant};

/// Bicycle step with `cos θ cos δ` and `sin θ cos δ` expanded into sums of angles.
fn bicycle_by_identities(x: &[f64], u: &[f64], l: f64, dt: f64) -> [f64; 3] {
    let (th, v, d) = (x[2], u[0], u[1]);
    let cc = 0.5 * ((th - d).cos() + (th + d).cos());
    let sc = 0.5 * ((th + d).sin() + (th - d).sin());
    [x[0] + v * dt * cc, x[1] + v * dt * sc, th + v * dt * d.sin() / l]
}

#[test]
fn straight_and_turning_examples() {
    let p = VehiclePlant::default();
    let s = vehicle_step(&[0.0, 0.0, 0.0], &[5.0, 0.0], &p);
    assert!((s[0] - 0.5).abs() < 1e-15 && s[1].abs() < 1e-15 && s[2].abs() < 1e-15);
    let t = vehicle_step(&[0.0, 0.0, 0.0], &[5.0, 0.6], &p);
    assert!((t[0] - 0.412_667_8).abs() < 1e-7);
    assert!((t[2] - 0.1 * 0.6f64.sin()).abs() < 1e-12);
    let q = vehicle_step(&[1.0, 2.0, std::f64::consts::FRAC_PI_2], &[2.0, 0.0], &p);
    assert!((q[0] - 1.0).abs() < 1e-12 && (q[1] - 2.2).abs() < 1e-12);
}

#[test]
fn registry_builds_configured_plants() {
    let reg = PlantRegistry::with_builtin();
    let params = PlantParams {
        wheelbase: Some(2.5),
        dt: Some(0.2),
    };
    let v = reg.create("vehicle", &params).unwrap();
    let got = v.step(&[0.0, 0.0, 0.3], &[3.0, 0.2]);
    let want = bicycle_by_identities(&[0.0, 0.0, 0.3], &[3.0, 0.2], 2.5, 0.2);
    for i in 0..3 {
        assert!((got[i] - want[i]).abs() < 1e-12);
    }
    let r = reg.create("robot", &PlantParams::default()).unwrap();
    assert_eq!(r.step(&[1.0, 2.0], &[0.25, -0.25]), vec![1.25, 1.75]);
    assert!(r.adds_process_noise() && !v.adds_process_noise());
}

proptest! {
    #[test]
    fn vehicle_matches_identity_form(
        px in -10.0f64..10.0, py in -10.0f64..10.0, th in -3.0f64..3.0,
        v in 0.0f64..6.0, d in -0.6f64..0.6,
        l in 1.0f64..6.0, dt in 0.01f64..0.2,
    ) {
        let p = VehiclePlant::new(l, dt).unwrap();
        let got = vehicle_step(&[px, py, th], &[v, d], &p);
        let want = bicycle_by_identities(&[px, py, th], &[v, d], l, dt);
        for i in 0..3 {
            prop_assert!((got[i] - want[i]).abs() < 1e-12, "{i}: {} vs {}", got[i], want[i]);
        }
    }

    #[test]
    fn robot_adds_command_and_noise(x in prop::collection::vec(-5.0f64..5.0, 2), u in prop::collection::vec(-0.3f64..0.3, 2), w in prop::collection::vec(-0.05f64..0.05, 2)) {
        let next = robot_step(&x, &u, &w);
        for i in 0..2 {
            prop_assert_eq!(next[i], x[i] + u[i] + w[i]);
        }
        let plain = RobotPlant.step(&x, &u);
        for i in 0..2 {
            prop_assert_eq!(plain[i], x[i] + u[i]);
        }
    }
}
