use lsa_lab::schedules::{tail_sum_sq, validate_a5, weighted_sum_bounds, weighted_sum_identity, StepSchedule};
use proptest::prelude::*;

fn poly(c: f64, n0: f64, t: f64) -> StepSchedule {
    StepSchedule::Polynomial { c, n0, t }
}

fn any_schedule() -> impl Strategy<Value = StepSchedule> {
    prop_oneof![
        (0.001f64..0.9).prop_map(|alpha| StepSchedule::Constant { alpha }),
        (0.01f64..5.0, 10.0f64..500.0, 0.3f64..=1.0).prop_map(|(c, n0, t)| poly(c.min(0.9 * n0.powf(t)), n0, t)),
        prop::collection::vec(0.001f64..0.9, 1..200).prop_map(|mut v| {
            v.sort_by(|a, b| b.total_cmp(a));
            StepSchedule::Explicit { values: v }
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn polynomial_steps_are_positive_and_non_increasing(c in 1e-3f64..100.0, n0 in 0.0f64..1e4, t in 0.01f64..=1.0) {
        let s = poly(c, n0, t);
        let mut prev = s.alpha(1);
        for k in 1..2000u64 {
            let a = s.alpha(k);
            prop_assert!(a > 0.0 && a <= prev);
            prev = a;
        }
    }

    #[test]
    fn weighted_identity_telescopes(s in any_schedule(), n in 0u64..3000) {
        let r = weighted_sum_identity(&s, 1.0, n).unwrap();
        prop_assert!(r.gap <= 1e-12 * r.rhs.abs().max(1.0), "gap {}", r.gap);
    }

    #[test]
    fn tail_sum_matches_brute_force(c in 0.1f64..4.0, n0 in 1.0f64..200.0, t in 0.6f64..=1.0, n in 0u64..500) {
        let s = poly(c, n0, t);
        let v = tail_sum_sq(&s, n).unwrap();
        let head: f64 = (n..n + 200_000).map(|k| s.alpha(k).powi(2)).sum();
        // remainder beyond the brute-force range by the integral bound
        let x = (n + 200_000) as f64 + n0;
        let rest = c * c * x.powf(1.0 - 2.0 * t) / (2.0 * t - 1.0);
        prop_assert!(v.value >= head - 1e-12 * v.value);
        prop_assert!(v.value <= head + rest + 1e-12 * v.value + c * c * x.powf(-2.0 * t));
    }
}

#[test]
fn tail_sum_scaling_limit() {
    for (c, n0, t) in [(1.0, 10.0, 1.0), (0.5, 100.0, 0.75), (2.0, 1.0, 0.6)] {
        let s = poly(c, n0, t);
        let n = 100_000u64;
        let v = tail_sum_sq(&s, n).unwrap().value * (n as f64 + n0).powf(2.0 * t - 1.0);
        let limit = c * c / (2.0 * t - 1.0);
        assert!((v / limit - 1.0).abs() <= 0.01, "t={t}: {v} vs {limit}");
    }
}

#[test]
fn minimal_c_alpha_decreases_with_n0() {
    let mut prev = f64::INFINITY;
    for n0 in [1.0, 5.0, 20.0, 100.0, 1000.0] {
        let r = validate_a5(&poly(1.0, n0, 1.0), 1.0, 5000).unwrap();
        assert!(r.minimal_c_alpha < prev);
        prev = r.minimal_c_alpha;
    }
}

#[test]
fn geometric_weighted_sum() {
    let s = StepSchedule::Constant { alpha: 0.05 };
    let r = weighted_sum_bounds(&s, 1.0, 2.0, None, 2000).unwrap();
    assert!(r.holds);
    let n = 2000;
    let lhs: f64 = (1..=n).map(|k| 0.05f64.powi(2) * 0.95f64.powi(n - k)).sum();
    assert!(lhs <= 0.05 * (1.0 - 0.95f64.powi(n)) + 1e-15);
}

#[test]
fn weighted_bounds_on_documented_hypotheses() {
    assert!(weighted_sum_bounds(&poly(4.0, 20.0, 1.0), 1.0, 1.5, None, 10_000).unwrap().holds);
    assert!(weighted_sum_bounds(&poly(2.0, 100.0, 0.75), 1.0, 2.0, Some(1.0), 10_000).unwrap().holds);
}
