mod common;

use common::{check_trace, random_trace, OracleRelay, F0};
use freqsim::grid::BusId;
use freqsim::protection::{
    estimate_bus_frequency, ufls_step, FrequencyEstimator, UflsRelayState, UflsScheme,
};
use proptest::prelude::*;

#[test]
fn thousand_random_traces_match_oracle() {
    let scheme = UflsScheme::default();
    for seed in 0..1000u64 {
        let dt = [0.01, 0.005, 0.02][seed as usize % 3];
        let trace = random_trace(seed, 2000);
        if let Err(e) = check_trace(&scheme, &trace, dt) {
            panic!("seed {seed} dt {dt}: {e}");
        }
    }
}

#[test]
fn oracle_boundaries() {
    let o = OracleRelay::new(0.15, 0.01);
    assert_eq!(o.target(F0 - 1.0), 0.0);
    assert_eq!(o.target((F0 - 1.0f64).next_down()), 0.05);
    assert_eq!(o.target(F0 - 1.2), 0.15);
    assert_eq!(o.target(F0 - 2.0), 0.50);
    assert_eq!(o.target(F0 - 5.0), 0.50);
}

#[test]
fn delay_in_steps_for_each_dt() {
    let scheme = UflsScheme::default();
    for (dt, needed) in [(0.01, 15), (0.005, 30), (0.02, 8), (0.05, 3)] {
        let mut r = UflsRelayState::new(BusId(4));
        for k in 1..=needed {
            r = ufls_step(&r, &scheme, F0 - 1.1, F0, dt);
            let expect = if k == needed { 0.05 } else { 0.0 };
            assert_eq!(r.level, expect, "dt {dt} step {k}");
        }
    }
}

#[test]
fn interrupted_target_restarts_timer() {
    let scheme = UflsScheme::default();
    let mut r = UflsRelayState::new(BusId(4));
    for _ in 0..14 {
        r = ufls_step(&r, &scheme, F0 - 1.1, F0, 0.01);
    }
    r = ufls_step(&r, &scheme, F0 - 1.3, F0, 0.01);
    assert_eq!(r.level, 0.0);
    for _ in 0..13 {
        r = ufls_step(&r, &scheme, F0 - 1.3, F0, 0.01);
    }
    assert_eq!(r.level, 0.0);
    r = ufls_step(&r, &scheme, F0 - 1.3, F0, 0.01);
    assert_eq!(r.level, 0.15);
}

#[test]
fn staircase_is_monotone_under_falling_frequency() {
    let scheme = UflsScheme::default();
    let mut r = UflsRelayState::new(BusId(4));
    let mut last = 0.0;
    for k in 0..3000 {
        let f = F0 - 2.2 * k as f64 / 3000.0;
        r = ufls_step(&r, &scheme, f, F0, 0.01);
        assert!(r.level >= last);
        last = r.level;
    }
    assert_eq!(last, 0.50);
}

#[test]
fn estimator_tracks_constant_and_ramp() {
    let dt = 0.01;
    let mut e = FrequencyEstimator::new(F0, FrequencyEstimator::DEFAULT_TAU);
    for _ in 0..50 {
        assert_eq!(estimate_bus_frequency(&mut e, -0.3, dt), F0);
    }
    for df in [-1.3, 0.4] {
        let mut e = FrequencyEstimator::new(F0, 0.05);
        let w = std::f64::consts::TAU * df;
        let mut f = F0;
        for k in 0..300 {
            f = estimate_bus_frequency(&mut e, 0.2 + w * k as f64 * dt, dt);
        }
        assert!((f - (F0 + df)).abs() < 1e-9, "{f}");
    }
}

#[test]
fn estimator_step_response_is_first_order() {
    let dt = 0.001;
    let tau = 0.05;
    let mut e = FrequencyEstimator::new(F0, tau);
    estimate_bus_frequency(&mut e, 0.0, dt);
    let w = -std::f64::consts::TAU;
    for k in 1..=50 {
        let f = estimate_bus_frequency(&mut e, w * k as f64 * dt, dt);
        let exact = F0 - (1.0 - (-(k as f64) * dt / tau).exp());
        assert!((f - exact).abs() < 1e-9, "step {k}: {f} vs {exact}");
    }
}

#[test]
fn estimator_attenuates_fast_noise() {
    let dt = 0.01;
    let mut e = FrequencyEstimator::new(F0, 0.05);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        // ±1 mrad alternating jitter is a 50 Hz oscillation of the raw rate.
        let jitter = if k % 2 == 0 { 1e-3 } else { -1e-3 };
        let f = estimate_bus_frequency(&mut e, jitter, dt);
        if k > 100 {
            worst = worst.max((f - F0).abs());
        }
    }
    let raw = 2e-3 / dt / std::f64::consts::TAU;
    assert!(worst < 0.2 * raw, "{worst} vs raw {raw}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn any_trace_matches_oracle(
        trace in proptest::collection::vec(F0 - 2.6..F0 + 0.2, 1..400),
        dt in prop_oneof![Just(0.01), Just(0.005), Just(0.02)],
    ) {
        let mut t = Vec::new();
        for f in trace {
            t.extend(std::iter::repeat_n(f, 10));
        }
        prop_assert_eq!(check_trace(&UflsScheme::default(), &t, dt), Ok(()));
    }
}
