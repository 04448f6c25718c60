use proptest::prelude::*;

use rcsp::planner::{cvar_via_threshold, empirical_cvar, empirical_cvar_ceil, sample_max, sample_mean};
use rcsp::stats::{check_prop_c2, check_prop_c3, cvar_bound, cvar_oracle, objective_radius, paired_bootstrap};

#[test]
fn risk_bound_scales_with_its_range() {
    let one = check_prop_c2(40, 0.5, 0.5, 3, 400, 11, 1.0).unwrap();
    let two = check_prop_c2(40, 0.5, 0.5, 3, 400, 11, 2.0).unwrap();
    assert!(one.max_error > 0.0);
    assert_eq!(one.violating_trials, two.violating_trials);
    assert!((two.bound - 2.0 * one.bound).abs() < 1e-12);
    assert!((two.max_error - 2.0 * one.max_error).abs() < 1e-9);
}

#[test]
fn bound_checks_are_seed_deterministic() {
    let a = check_prop_c2(200, 0.2, 0.05, 5, 100, 7, 1.0).unwrap();
    let b = check_prop_c2(200, 0.2, 0.05, 5, 100, 7, 1.0).unwrap();
    assert_eq!(a, b);
    let c = check_prop_c3(200, 0.25, 0.05, 1.0, 5, 100, 7).unwrap();
    let d = check_prop_c3(200, 0.25, 0.05, 1.0, 5, 100, 7).unwrap();
    assert_eq!(c, d);
    assert_ne!(a.max_error, check_prop_c2(200, 0.2, 0.05, 5, 100, 8, 1.0).unwrap().max_error);
}

#[test]
fn huge_samples_never_violate() {
    let r = check_prop_c2(200_000, 0.25, 0.05, 2, 20, 1, 1.0).unwrap();
    assert_eq!(r.violations, 0);
}

#[test]
fn closed_form_radii() {
    let b = cvar_bound(1000, 0.1, 0.05, 25, 1.0);
    assert!((b - 10.0 * ((1000.0f64).ln() / 2000.0).sqrt()).abs() < 1e-12);
    // without the risk term only the Hoeffding part is left
    let e = objective_radius(500, 0.25, 0.05, 0.0, 10, 1.0, 1.0);
    assert!((e - ((800.0f64).ln() / 1000.0).sqrt()).abs() < 1e-12);
}

#[test]
fn regret_check_without_risk_weight() {
    let r = check_prop_c3(300, 0.5, 0.05, 0.0, 6, 300, 2).unwrap();
    assert!(r.pass);
    assert!(r.max_error >= 0.0);
}

#[test]
fn bootstrap_fixed_cases() {
    let equal = paired_bootstrap(&[(0.4, 0.4); 7], 1000, 0.95, 0).unwrap();
    assert_eq!((equal.mean_advantage, equal.lower, equal.upper), (0.0, 0.0, 0.0));
    assert_eq!(equal.p_nonpositive, 1.0);
    let shifted = paired_bootstrap(&[(1.0, 0.5), (0.75, 0.25), (0.5, 0.0)], 1000, 0.95, 0).unwrap();
    assert_eq!((shifted.lower, shifted.upper), (0.5, 0.5));
    assert_eq!(shifted.p_nonpositive, 0.0);
    let again = paired_bootstrap(&[(1.0, 0.5), (0.2, 0.25), (0.5, 0.0)], 1000, 0.95, 3).unwrap();
    assert_eq!(again, paired_bootstrap(&[(1.0, 0.5), (0.2, 0.25), (0.5, 0.0)], 1000, 0.95, 3).unwrap());
    assert!(paired_bootstrap(&[], 1000, 0.95, 0).is_err());
    assert!(paired_bootstrap(&[(1.0, 0.0)], 999, 0.95, 0).is_err());
}

fn risks() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        proptest::collection::vec(0.0..1.0f64, 1..120),
        proptest::collection::vec((0..5u8).prop_map(|k| k as f64 / 4.0), 1..120),
    ]
}

proptest! {
    #[test]
    fn estimators_match_the_oracle(xs in risks(), alpha in 0.01..=1.0f64) {
        let o = cvar_oracle(&xs, alpha).unwrap();
        prop_assert!((empirical_cvar(&xs, alpha).unwrap() - o).abs() < 1e-9);
        prop_assert!((cvar_via_threshold(&xs, alpha).unwrap() - o).abs() < 1e-9);
    }

    #[test]
    fn cvar_sits_between_mean_and_max(xs in risks(), alpha in 0.01..=1.0f64) {
        let c = empirical_cvar(&xs, alpha).unwrap();
        prop_assert!(sample_mean(&xs) <= c && c <= sample_max(&xs));
        let k = empirical_cvar_ceil(&xs, alpha).unwrap();
        prop_assert!(k <= sample_max(&xs) + 1e-12);
    }

    #[test]
    fn cvar_is_monotone_in_alpha(xs in risks(), a in 0.01..1.0f64, b in 0.01..1.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(empirical_cvar(&xs, hi).unwrap() <= empirical_cvar(&xs, lo).unwrap() + 1e-12);
    }

    #[test]
    fn cvar_is_translation_equivariant(xs in risks(), alpha in 0.01..=1.0f64, c in -2.0..2.0f64) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let d = empirical_cvar(&shifted, alpha).unwrap() - empirical_cvar(&xs, alpha).unwrap();
        prop_assert!((d - c).abs() < 1e-9);
    }
}
