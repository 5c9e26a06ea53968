use linksynth::kinematics::{self, solve_position, sweep_path, Branch, Vec2, Violation, ROCKER_PIVOT};
use linksynth::{Error, Linkage};
use proptest::prelude::*;
use std::f64::consts::TAU;

fn any_lengths() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.05..0.95f64, 0.05..2.0f64, 0.05..3.0f64)
}

fn valid_linkage() -> impl Strategy<Value = Linkage> {
    (any_lengths(), -0.5..2.5f64, -1.5..1.5f64)
        .prop_map(|((l2, l3, l4), x, y)| Linkage::new(l2, l3, l4, x, y))
        .prop_filter("crank-rocker", |l| l.is_valid_crank_rocker())
}

/// Grashof crank-rocker condition written out directly over the four links.
fn oracle_valid(l2: f64, l3: f64, l4: f64) -> bool {
    let links = [1.0, l2, l3, l4];
    let longest = links.iter().copied().fold(f64::MIN, f64::max);
    let others: f64 = links.iter().sum::<f64>() - l2 - longest;
    l2 < 1.0 && l2 < l3 && l2 < l4 && l2 + longest < others
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn validity_matches_grashof_oracle((l2, l3, l4) in any_lengths(), x in -0.5..2.5f64, y in -1.5..1.5f64) {
        let l = Linkage::new(l2, l3, l4, x, y);
        prop_assert_eq!(l.is_valid_crank_rocker(), oracle_valid(l2, l3, l4));
    }

    #[test]
    fn offsets_do_not_change_validity((l2, l3, l4) in any_lengths(), a in -0.5..2.5f64, b in -1.5..1.5f64, c in -0.5..2.5f64, d in -1.5..1.5f64) {
        let first = Linkage::new(l2, l3, l4, a, b).is_valid_crank_rocker();
        prop_assert_eq!(first, Linkage::new(l2, l3, l4, c, d).is_valid_crank_rocker());
    }

    #[test]
    fn loop_closes_at_every_angle(l in valid_linkage(), theta in 0.0..TAU) {
        for branch in [Branch::Open, Branch::Crossed] {
            let s = solve_position(&l, theta, branch).unwrap();
            prop_assert!(((s.c - s.b).norm() - l.l3).abs() < 1e-9);
            prop_assert!(((s.c - ROCKER_PIVOT).norm() - l.l4).abs() < 1e-9);
            prop_assert!((s.b.norm() - l.l2).abs() < 1e-12);
        }
    }

    #[test]
    fn end_effector_is_rigid_on_coupler(l in valid_linkage(), theta in 0.0..TAU) {
        let s = solve_position(&l, theta, Branch::Open).unwrap();
        let offset = (l.ee_x * l.ee_x + l.ee_y * l.ee_y).sqrt();
        prop_assert!(((s.ee - s.b).norm() - offset).abs() < 1e-9);
        let to_c = (l.ee_x - l.l3).hypot(l.ee_y);
        prop_assert!(((s.ee - s.c).norm() - to_c).abs() < 1e-9);
    }

    #[test]
    fn zero_offset_traces_the_crank_circle(l in valid_linkage()) {
        let l = Linkage { ee_x: 0.0, ee_y: 0.0, ..l };
        let path = sweep_path(&l, 90, Branch::Open).unwrap();
        for p in &path.points {
            prop_assert!((p.norm() - l.l2).abs() < 1e-12);
        }
    }

    #[test]
    fn doubling_resolution_keeps_points(l in valid_linkage(), n in 8usize..200) {
        let coarse = sweep_path(&l, n, Branch::Open).unwrap();
        let fine = sweep_path(&l, 2 * n, Branch::Open).unwrap();
        for (i, p) in coarse.points.iter().enumerate() {
            prop_assert_eq!(*p, fine.points[2 * i]);
        }
    }

    #[test]
    fn sweep_stays_on_one_branch(l in valid_linkage()) {
        let path = sweep_path(&l, 360, Branch::Open).unwrap();
        for (k, c) in path.joints.iter().enumerate() {
            let b = Vec2::new(l.l2 * path.theta[k].cos(), l.l2 * path.theta[k].sin());
            let side = (ROCKER_PIVOT - b).cross(*c - b);
            prop_assert!(side >= -1e-9, "joint {k} left the open branch");
        }
    }
}

#[test]
fn invalid_linkages_name_their_violation() {
    let not_shortest = Linkage::new(0.9, 0.5, 1.5, 0.0, 0.0);
    assert_eq!(kinematics::crank_rocker_violation(&not_shortest), Some(Violation::CrankNotShortest));
    let loose = Linkage::new(0.4, 0.5, 3.0, 0.0, 0.0);
    assert!(matches!(kinematics::crank_rocker_violation(&loose), Some(Violation::GrashofSum)));
    assert!(matches!(linksynth::evaluate(&loose, 90), Err(Error::InvalidLinkage(_))));
}

#[test]
fn too_few_steps_is_rejected() {
    let l = Linkage::new(0.3, 1.0, 1.0, 0.5, 0.2);
    assert!(matches!(sweep_path(&l, 4, Branch::Open), Err(Error::TooFewSteps { .. })));
}

#[test]
fn joint_steps_shrink_with_resolution() {
    let max_step = |l: &Linkage, n: usize| {
        let path = sweep_path(l, n, Branch::Open).unwrap();
        (0..n).map(|i| path.joints[i].distance(path.joints[(i + 1) % n])).fold(0.0, f64::max)
    };
    for l in [Linkage::new(0.5, 1.2, 1.0, 1.0, 0.3), Linkage::new(0.2, 0.9, 0.8, -0.3, 0.7)] {
        assert!(max_step(&l, 3600) < max_step(&l, 360) / 4.0);
    }
}
