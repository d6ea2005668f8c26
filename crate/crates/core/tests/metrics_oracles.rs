mod common;

use common::pulse_trajectory;
use freqsim::grid::BusId;
use freqsim::metrics::{
    compare_cases, compute_metrics, export_results, metrics_to_json, parse_metrics_json,
    read_metrics_file, MetricsError,
};
use freqsim::sim::RunEvent;
use proptest::prelude::*;
use std::path::Path;

const H: f64 = 0.1;

#[test]
fn two_pulse_rectangles() {
    // 100 MW and 300 MW buses; 10% for 20 s on bus 0, 50% for 5 s on bus 1,
    // overlapping by 2 s.
    let expected = [100.0, 300.0];
    let tr = pulse_trajectory(H, 501, &expected, &[(0, 100, 300, 0.1), (1, 280, 330, 0.5)]);
    let m = compute_metrics(&tr).unwrap();
    let energy_mws = 10.0 * 20.0 + 150.0 * 5.0;
    assert!((m.eens_mwh - energy_mws / 3600.0).abs() < 1e-12);
    // union of [10, 30) and [28, 33)
    assert!((m.t_ls_s - 23.0).abs() < 1e-9);
    assert!((m.r_ls - 160.0 / 400.0).abs() < 1e-12);
    assert_eq!(m.events.len(), 1);
    assert_eq!(m.events[0].trigger_s, 10.0);
    assert_eq!(m.events[0].clear_s, Some(33.0));
    assert_eq!(m.events[0].peak_fraction, 0.5);
}

#[test]
fn separate_pulses_are_separate_events() {
    let tr = pulse_trajectory(H, 300, &[50.0], &[(0, 10, 20, 0.05), (0, 100, 300, 0.15)]);
    let m = compute_metrics(&tr).unwrap();
    assert_eq!(m.events.len(), 2);
    assert_eq!(m.events[1].clear_s, None);
    // the last sample contributes no duration
    assert!((m.t_ls_s - (10.0 + 199.0) * H).abs() < 1e-9);
}

#[test]
fn r_ls_equals_common_staircase_level() {
    for level in [0.05, 0.15, 0.25, 0.35, 0.45, 0.5] {
        let pulses: Vec<_> = (0..4).map(|b| (b, 5, 50, level)).collect();
        let tr = pulse_trajectory(H, 100, &[10.0, 20.0, 30.0, 40.0], &pulses);
        let m = compute_metrics(&tr).unwrap();
        assert!((m.r_ls - level).abs() < 1e-12);
    }
}

#[test]
fn ragged_channels_are_reported() {
    let mut tr = pulse_trajectory(H, 10, &[10.0, 20.0], &[]);
    tr.samples[4].served_mw.pop();
    match compute_metrics(&tr) {
        Err(MetricsError::Ragged { index, channel, .. }) => {
            assert_eq!(index, 4);
            assert_eq!(channel, "served-load");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn export_is_byte_deterministic_and_round_trips() {
    let tr = pulse_trajectory(H, 200, &[100.0, 300.0], &[(0, 10, 150, 0.15)]);
    let m = compute_metrics(&tr).unwrap();
    let events = vec![
        RunEvent::Trip {
            time_s: 1.0,
            generator: "G4".into(),
        },
        RunEvent::Relay {
            time_s: 1.15,
            bus: BusId(1),
            old_level: 0.0,
            new_level: 0.15,
        },
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = export_results("X", &tr, &m, &events, a.path()).unwrap();
    let pb = export_results("X", &tr, &m, &events, b.path()).unwrap();
    for (x, y) in [
        (&pa.trajectory, &pb.trajectory),
        (&pa.metrics, &pb.metrics),
        (&pa.events, &pb.events),
    ] {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let doc = read_metrics_file(&pa.metrics).unwrap();
    assert_eq!(doc.metrics, m);
    assert_eq!(doc.scenario.as_deref(), Some("X"));
    let ev = std::fs::read_to_string(&pa.events).unwrap();
    assert_eq!(ev.lines().count(), 3);
    assert!(ev.contains("1.15,relay,,1,0,0.15"));
}

#[test]
fn missing_key_is_named() {
    let m = compute_metrics(&pulse_trajectory(H, 10, &[1.0], &[])).unwrap();
    let text = metrics_to_json("X", &m).replace("\"t_ls_s\"", "\"t_ls\"");
    match parse_metrics_json(&text, Path::new("m.json")) {
        Err(MetricsError::MissingKey { key }) => assert_eq!(key, "t_ls_s"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn comparison_of_identical_runs() {
    let tr = pulse_trajectory(H, 100, &[10.0], &[(0, 10, 50, 0.05)]);
    let m = compute_metrics(&tr).unwrap();
    let c = compare_cases(&m, &m);
    assert_eq!(c.eens_ratio, Some(1.0));
    assert_eq!(c.eens_reduction_pct, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn energy_and_duration_are_additive(
        n in 3usize..400,
        cut in 0.0f64..1.0,
        pulses in proptest::collection::vec((0usize..3, 0usize..400, 1usize..100, 0.05f64..0.5), 0..6),
    ) {
        let pulses: Vec<_> = pulses.into_iter().map(|(b, s, len, f)| (b, s, s + len, f)).collect();
        let tr = pulse_trajectory(H, n, &[100.0, 40.0, 250.0], &pulses);
        let k = 1 + ((n - 2) as f64 * cut) as usize;
        let whole = compute_metrics(&tr).unwrap();
        let left = compute_metrics(&tr.slice(0, k)).unwrap();
        let right = compute_metrics(&tr.slice(k, n - 1)).unwrap();
        prop_assert!((whole.eens_mwh - left.eens_mwh - right.eens_mwh).abs() < 1e-9);
        prop_assert!((whole.t_ls_s - left.t_ls_s - right.t_ls_s).abs() < 1e-9);
        prop_assert!(whole.r_ls == left.r_ls.max(right.r_ls));
        prop_assert!(whole.eens_mwh >= 0.0 && (0.0..=1.0).contains(&whole.r_ls));
    }
}
