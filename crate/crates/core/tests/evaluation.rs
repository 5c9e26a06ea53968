use linksynth::dataset::Interval;
use linksynth::evaluation::{field_stddev, mae, r_squared, rmse, similarity_metric, Metrics};
use linksynth::{evaluate, ConditionPair, LengthRanges, Linkage, Normalizer};
use proptest::prelude::*;

fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..80).prop_flat_map(|n| (prop::collection::vec(-10.0..10.0f64, n), prop::collection::vec(-10.0..10.0f64, n)))
}

fn normalizer() -> Normalizer {
    Normalizer::new(&LengthRanges::default(), [Interval::new(0.05, 3.5), Interval::new(0.0, 1.9)])
}

proptest! {
    #[test]
    fn rmse_bounds_mae((a, b) in pairs()) {
        let (r, m) = (rmse(&a, &b), mae(&a, &b));
        prop_assert!(r + 1e-12 >= m);
        // and never exceeds sqrt(n) times it
        prop_assert!(r <= m * (a.len() as f64).sqrt() + 1e-12);
    }

    #[test]
    fn r_squared_is_at_most_one((a, b) in pairs()) {
        if let Ok(r2) = r_squared(&a, &b) {
            prop_assert!(r2 <= 1.0);
        }
        if a.len() > 1 && a.iter().any(|x| *x != a[0]) {
            prop_assert!((r_squared(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn metric_oracles() {
    let t = [1.0, 2.0, 3.0, 4.0];
    let a = [1.5, 2.0, 2.0, 4.0];
    assert!((rmse(&t, &a) - (1.25f64 / 4.0).sqrt()).abs() < 1e-15);
    assert!((mae(&t, &a) - 0.375).abs() < 1e-15);
    assert!((r_squared(&t, &a).unwrap() - (1.0 - 1.25 / 5.0)).abs() < 1e-15);
    assert!(r_squared(&[2.0; 3], &[1.0, 2.0, 3.0]).is_err());
    assert!(rmse(&[], &[]).is_nan());
}

#[test]
fn compute_skips_invalid_samples_and_counts_them() {
    let n = normalizer();
    let good = Linkage::new(0.3, 1.0, 1.0, 0.5, 0.2);
    let bad = Linkage::new(0.9, 0.2, 0.2, 0.0, 0.0);
    let c = evaluate(&good, 90).unwrap();
    let targets = [[c.d_max + 0.1, c.eta_min], [1.0, 1.0], [c.d_max, c.eta_min - 0.2]];
    let linkages = [good, bad, good];
    let actual = [Some(c), None, Some(c)];
    let m = Metrics::compute(&n, &targets, &linkages, &actual);
    assert_eq!((m.n_total, m.n_valid), (3, 2));
    assert!((m.invalid_rate - 1.0 / 3.0).abs() < 1e-15);
    assert!((m.mae_d - 0.05).abs() < 1e-12);
    assert!((m.mae_eta - 0.1).abs() < 1e-12);
    // pooled over both conditions
    assert!((m.mae - 0.075).abs() < 1e-12);
    assert!(m.rmse >= m.mae);
}

#[test]
fn all_invalid_gives_undefined_errors_not_zero() {
    let n = normalizer();
    let l = Linkage::new(0.9, 0.2, 0.2, 0.0, 0.0);
    let m = Metrics::compute(&n, &[[1.0, 1.0]; 4], &[l; 4], &[None::<ConditionPair>; 4]);
    assert_eq!(m.invalid_rate, 1.0);
    assert!(m.rmse.is_nan() && m.mae.is_nan());
    assert!(m.r2_d.is_none());
}

#[test]
fn similarity_and_spread_oracles() {
    let n = normalizer();
    let a = Linkage::new(0.5, 1.0, 1.5, 1.0, 0.0);
    let same = vec![a; 5];
    assert_eq!(similarity_metric(&n, &same), 0.0);
    assert_eq!(field_stddev(&same), [0.0; 5]);
    let b = Linkage { ee_x: a.ee_x + 0.3, ..a };
    // 0.3 raw is 0.1 of the ee_x range, and each point's nearest neighbour is the other
    assert!((similarity_metric(&n, &[a, b]) + 0.1).abs() < 1e-12);
    let s = field_stddev(&[a, b]);
    assert!((s[3] - 0.15).abs() < 1e-12 && s[0] == 0.0);
    let m = Metrics::compute(&n, &[[1.0, 1.0]; 5], &same, &[None; 5]);
    assert!(m.mode_collapse);
}
