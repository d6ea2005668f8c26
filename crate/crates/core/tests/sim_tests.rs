use freqsim::grid::{BusId, BusSpec, GeneratorKind, GeneratorSpec, GridModel, LineSpec};
use freqsim::machine::{HydroParams, SteamParams};
use freqsim::protection::UflsScheme;
use freqsim::scenario::{CaseMode, Scenario};
use freqsim::sim::{run_scenario, RunEvent, Simulation, TripOutcome};

fn quiet(name: &str, case: CaseMode, duration_s: f64) -> Scenario {
    let mut sc = Scenario::new(name, case);
    sc.duration_s = duration_s;
    sc.profiles.stochastic = false;
    sc
}

#[test]
fn undisturbed_forecast_is_an_equilibrium() {
    let model = GridModel::ieee39();
    for case in [CaseMode::A, CaseMode::B] {
        let mut sc = quiet("eq", case, 600.0);
        sc.dispatch.error = freqsim::scenario::ErrorModel::Ideal;
        let r = run_scenario(&model, &sc).unwrap();
        assert!(
            r.stats.max_abs_dw < 1e-6,
            "{case:?}: {}",
            r.stats.max_abs_dw
        );
        assert!(r.events.is_empty());
        assert!(r.stats.max_balance_residual < 1e-9);
    }
}

#[test]
fn halving_the_step_keeps_the_nadir() {
    let model = GridModel::ieee39();
    let mut nadirs = Vec::new();
    for dt in [0.01, 0.005] {
        let mut sc = Scenario::new("half", CaseMode::B)
            .with_event(10.0, "G4")
            .with_event(10.0, "G5");
        sc.duration_s = 40.0;
        sc.dt_s = dt;
        sc.seed = 3;
        nadirs.push(run_scenario(&model, &sc).unwrap().stats.coi_nadir_hz);
    }
    assert!((nadirs[0] - nadirs[1]).abs() < 1e-3, "{nadirs:?}");
}

fn two_bus(h: f64, d: f64, k_g: f64, t_ch: f64) -> GridModel {
    let steam = SteamParams {
        k_g,
        t_sr: 1e-6,
        t_sm: 1e-6,
        valve_rate_open: 1e6,
        valve_rate_close: -1e6,
        valve_max: 10.0,
        valve_min: 0.0,
        t_ch,
        t_rh: 1e-6,
        t_co: 1e-6,
        f_hp: 1.0,
        f_ip: 0.0,
        f_lpa: 0.0,
        f_lpb: 0.0,
    };
    let gen = |name: &str| GeneratorSpec {
        name: name.into(),
        kind: GeneratorKind::Thermal,
        rating_mva: 500.0,
        inertia_h: h,
        damping: d,
        coupling_x: 0.3,
        steam: steam.clone(),
        hydro: HydroParams::default(),
    };
    let buses = vec![
        BusSpec {
            id: BusId(1),
            generator: Some(gen("A")),
            wind_mw: None,
            load_mw: Some(400.0),
            dispatched: false,
        },
        BusSpec {
            id: BusId(2),
            generator: Some(gen("B")),
            wind_mw: None,
            load_mw: None,
            dispatched: false,
        },
    ];
    let lines = vec![LineSpec {
        from: BusId(1),
        to: BusId(2),
        susceptance: 50.0,
    }];
    GridModel::new(buses, lines, 100.0, 60.0, BusId(1)).unwrap()
}

/// Speed deviation of one machine with a single-lag governor after a
/// power step, from the closed-form solution of
/// `2H x' = y − ΔP − D x`, `T y' = −K x − y`.
fn closed_form_dw(h: f64, d: f64, k: f64, t: f64, dp: f64, time: f64) -> f64 {
    let a = 2.0 * h * t;
    let b = 2.0 * h + d * t;
    let c = d + k;
    let disc = b * b - 4.0 * a * c;
    assert!(disc < 0.0, "oracle assumes an underdamped pair");
    let alpha = -b / (2.0 * a);
    let beta = (-disc).sqrt() / (2.0 * a);
    let x_ss = -dp / c;
    let amp_c = -x_ss;
    let x0_dot = -dp / (2.0 * h);
    let amp_s = (x0_dot - alpha * amp_c) / beta;
    x_ss + (alpha * time).exp() * (amp_c * (beta * time).cos() + amp_s * (beta * time).sin())
}

#[test]
fn single_machine_nadir_matches_closed_form() {
    let (h, d, k, t) = (5.0, 1.0, 20.0, 0.5);
    let model = two_bus(h, d, k, t);
    let mut sc = quiet("sme", CaseMode::A, 12.0).with_event(1.0, "B");
    sc.dt_s = 0.001;
    sc.output_interval_s = 0.01;
    sc.ufls.enabled = false;
    let r = run_scenario(&model, &sc).unwrap();

    // The survivor picks up the other machine's 200 MW on its 500 MVA base.
    let dp = 200.0 / 500.0;
    let oracle_nadir = (0..=11_000)
        .map(|i| closed_form_dw(h, d, k, t, dp, i as f64 * 1e-3))
        .fold(f64::INFINITY, f64::min);
    let sim_nadir = r.stats.coi_nadir_hz / 60.0 - 1.0;
    assert!(
        (sim_nadir / oracle_nadir - 1.0).abs() < 0.01,
        "sim {sim_nadir} oracle {oracle_nadir}"
    );
    // trajectory agreement, not just the extremum
    for s in r.trajectory.samples.iter().filter(|s| s.time_s > 1.0) {
        let x = closed_form_dw(h, d, k, t, dp, s.time_s - 1.0);
        assert!((s.coi_hz / 60.0 - 1.0 - x).abs() < 0.01 * oracle_nadir.abs());
    }
    let last = r.trajectory.samples.last().unwrap();
    // governor picks up K / (K + D) of the step, damping the rest
    let pm_ss = 200.0 + 200.0 * k / (k + d);
    assert!(
        (last.gen_pm_mw[0] - pm_ss).abs() < 0.5,
        "{}",
        last.gen_pm_mw[0]
    );
}

#[test]
fn contingency_ratings() {
    let model = GridModel::ieee39();
    let total: f64 = model.generators().map(|(_, g)| g.rating_mva).sum();
    let sc = quiet("c", CaseMode::A, 10.0);
    for (pair, lost) in [(["G4", "G5"], 1520.0), (["G4", "G6"], 2000.0)] {
        let mut sim = Simulation::new(&model, &sc).unwrap();
        assert_eq!(sim.connected_rating_mva(), total);
        for g in pair {
            assert_eq!(sim.apply_contingency(g).unwrap(), TripOutcome::Tripped);
        }
        assert_eq!(sim.connected_rating_mva(), total - lost);
    }
}

#[test]
fn repeated_trip_is_ignored() {
    let model = GridModel::ieee39();
    let sc = quiet("t", CaseMode::A, 10.0)
        .with_event(2.0, "G4")
        .with_event(3.0, "G4");
    let r = run_scenario(&model, &sc).unwrap();
    let kinds: Vec<_> = r
        .events
        .iter()
        .filter(|e| !matches!(e, RunEvent::Relay { .. }))
        .collect();
    assert!(matches!(kinds[0], RunEvent::Trip { generator, .. } if generator == "G4"));
    assert!(matches!(kinds[1], RunEvent::TripIgnored { time_s, .. } if *time_s == 3.0));
    assert_eq!(kinds.len(), 2);
}

#[test]
fn unknown_generator_is_rejected() {
    let model = GridModel::ieee39();
    let sc = quiet("u", CaseMode::A, 10.0).with_event(1.0, "G42");
    assert!(Simulation::new(&model, &sc).is_err());
}

#[test]
fn runs_are_deterministic_and_cases_share_inputs() {
    let model = GridModel::ieee39();
    let mk = |case| {
        let mut sc = Scenario::new("d", case)
            .with_event(5.0, "G4")
            .with_event(5.0, "G6");
        sc.duration_s = 30.0;
        sc.seed = 11;
        sc
    };
    let a1 = run_scenario(&model, &mk(CaseMode::A)).unwrap();
    let a2 = run_scenario(&model, &mk(CaseMode::A)).unwrap();
    assert_eq!(a1.trajectory, a2.trajectory);
    assert_eq!(a1.events, a2.events);
    let b = run_scenario(&model, &mk(CaseMode::B)).unwrap();
    assert_eq!(a1.stats.profile_digest, b.stats.profile_digest);
    assert_eq!(
        a1.trajectory.samples[0].wind_mw,
        b.trajectory.samples[0].wind_mw
    );
    for r in [&a1, &b] {
        assert!(r.stats.max_nodal_residual < 1e-9);
        assert!(r.stats.max_balance_residual < 1e-9);
        assert!(r.trajectory.samples.iter().all(|s| s.coi_hz.is_finite()));
    }
}

#[test]
fn disabled_ufls_never_sheds() {
    let model = GridModel::ieee39();
    let mut sc = Scenario::new("n", CaseMode::A)
        .with_event(5.0, "G4")
        .with_event(5.0, "G6");
    sc.duration_s = 30.0;
    sc.ufls = UflsScheme {
        enabled: false,
        ..UflsScheme::default()
    };
    let r = run_scenario(&model, &sc).unwrap();
    assert!(r
        .events
        .iter()
        .all(|e| !matches!(e, RunEvent::Relay { .. })));
    assert!(r
        .trajectory
        .samples
        .iter()
        .all(|s| s.shed_level.iter().all(|&l| l == 0.0)));
}
