use freqsim::dispatch::{battery_series, sample_error, ErrorCdf, ErrorSampler};
use freqsim::grid::GridModel;
use freqsim::rng::{stream_rng, Stream};
use freqsim::scenario::{build_profiles, CaseMode, ErrorModel, Scenario};
use freqsim::sim::Simulation;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Kolmogorov–Smirnov statistic of `samples` against `cdf`.
fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Independent evaluation of a piecewise-linear CDF from its breakpoints.
fn oracle_cdf(points: &[(f64, f64)], x: f64) -> f64 {
    if x < points[0].0 {
        return 0.0;
    }
    for w in points.windows(2) {
        let ((x0, f0), (x1, f1)) = (w[0], w[1]);
        if x <= x1 {
            return f0 + (f1 - f0) * (x - x0) / (x1 - x0);
        }
    }
    1.0
}

#[test]
fn sampling_passes_ks_test() {
    let points = vec![
        (-0.1, 0.0),
        (-0.02, 0.3),
        (0.0, 0.5),
        (0.05, 0.9),
        (0.2, 1.0),
    ];
    let cdf = ErrorCdf::new(points.clone()).unwrap();
    let n = 20_000;
    // Critical value at alpha = 0.001.
    let critical = 1.949 / (n as f64).sqrt();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs: Vec<f64> = (0..n).map(|_| sample_error(&cdf, &mut rng)).collect();
        let d = ks_statistic(&mut xs, |x| oracle_cdf(&points, x));
        assert!(d < critical, "seed {seed}: D = {d}");
    }
}

#[test]
fn placeholder_is_symmetric_with_zero_mean() {
    let cdf = ErrorCdf::placeholder();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 100_000;
    let mean = (0..n).map(|_| sample_error(&cdf, &mut rng)).sum::<f64>() / n as f64;
    // Triangular on ±0.05 has standard deviation 0.05 / √6.
    let se = 0.05 / 6f64.sqrt() / (n as f64).sqrt();
    assert!(mean.abs() < 4.0 * se, "mean {mean}");
    let pts: Vec<(f64, f64)> = cdf.breakpoints().collect();
    for (e, f) in &pts {
        assert!((cdf.cdf(-e) - (1.0 - f)).abs() < 1e-12);
    }
}

#[test]
fn ideal_cdf_is_a_point_mass_at_zero() {
    let cdf = ErrorCdf::ideal();
    assert!(cdf.is_degenerate());
    let mut s = ErrorSampler::new(cdf, stream_rng(1, Stream::DispatchError, 2), 1);
    assert!(s.series(100).iter().all(|&e| e == 0.0));
}

#[test]
fn sampler_hold_interval() {
    let mut s = ErrorSampler::new(
        ErrorCdf::placeholder(),
        stream_rng(3, Stream::DispatchError, 4),
        5,
    );
    let xs = s.series(23);
    for chunk in xs.chunks(5) {
        assert!(chunk.iter().all(|&e| e == chunk[0]));
    }
    assert_ne!(xs[0], xs[5]);
}

#[test]
fn bad_cdf_documents_are_rejected() {
    assert!(ErrorCdf::new(vec![]).is_err());
    assert!(ErrorCdf::new(vec![(0.0, 0.2), (0.0, 1.0)]).is_err());
    assert!(ErrorCdf::new(vec![(0.0, 0.5), (0.1, 0.4), (0.2, 1.0)]).is_err());
    assert!(ErrorCdf::new(vec![(0.0, 0.0), (0.1, 0.9)]).is_err());
    let err = ErrorCdf::from_csv("epsilon,p\n0,0\nx,1\n".as_bytes()).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
}

fn ideal_case_b(seed: u64) -> Scenario {
    let mut sc = Scenario::new("identity", CaseMode::B);
    sc.seed = seed;
    sc.duration_s = 300.0;
    sc.dispatch.error = ErrorModel::Ideal;
    sc
}

#[test]
fn dispatch_identity_on_profiles() {
    let model = GridModel::ieee39();
    for seed in [1, 2, 3] {
        let sc = ideal_case_b(seed);
        let p = build_profiles(&model, &sc).unwrap();
        assert_eq!(p.battery.len(), 21);
        for (bus, b) in &p.battery {
            let spec = model.bus(*bus).unwrap();
            let w = p.wind.iter().find(|s| s.bus == *bus);
            let l = p.load.iter().find(|s| s.bus == *bus);
            let schedule = spec.wind_mw.unwrap_or(0.0) - spec.load_mw.unwrap_or(0.0);
            for k in 0..b.realized_mw.len() {
                let net = w.map_or(0.0, |s| s.values_mw[k]) - l.map_or(0.0, |s| s.values_mw[k])
                    + b.realized_mw[k];
                assert!((net - schedule).abs() < 1e-9, "bus {bus} second {k}");
            }
        }
    }
}

#[test]
fn dispatch_identity_in_network_injections() {
    let model = GridModel::ieee39();
    let sc = ideal_case_b(5);
    let mut sim = Simulation::new(&model, &sc).unwrap();
    for k in 0..300 {
        let inj = sim.net_injections_mw(k);
        for (i, b) in model.buses.iter().enumerate() {
            let schedule = b.wind_mw.unwrap_or(0.0) - b.load_mw.unwrap_or(0.0);
            assert!((inj[i] - schedule).abs() < 1e-9, "bus {} second {k}", b.id);
        }
    }
}

#[test]
fn case_a_has_no_batteries_and_shares_realizations() {
    let model = GridModel::ieee39();
    let mut a = ideal_case_b(8);
    a.case = CaseMode::A;
    let pa = build_profiles(&model, &a).unwrap();
    let pb = build_profiles(&model, &ideal_case_b(8)).unwrap();
    assert!(pa.battery.is_empty());
    assert_eq!(pa.digest, pb.digest);
    assert_eq!(pa.wind, pb.wind);
    assert_eq!(pa.load, pb.load);
    let pc = build_profiles(&model, &ideal_case_b(9)).unwrap();
    assert_ne!(pa.digest, pc.digest);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn realized_battery_is_scaled_ideal(
        w_b in 0.0f64..500.0,
        l_b in 0.0f64..500.0,
        wind in proptest::collection::vec(0.0f64..500.0, 1..50),
        eps in -0.2f64..0.2,
        cap in proptest::option::of(1.0f64..100.0),
    ) {
        let load: Vec<f64> = wind.iter().map(|w| 0.5 * w + 10.0).collect();
        let errors = vec![eps; wind.len()];
        let s = battery_series(w_b, l_b, Some(&wind), Some(&load), errors, cap);
        prop_assert_eq!(s.schedule_mw, w_b - l_b);
        for k in 0..wind.len() {
            let ideal = (w_b - l_b) - (wind[k] - load[k]);
            prop_assert!((s.ideal_mw[k] - ideal).abs() < 1e-9);
            let mut b = ideal * (1.0 + eps);
            if let Some(c) = cap {
                b = b.clamp(-c, c);
                prop_assert!(s.realized_mw[k].abs() <= c);
            }
            prop_assert!((s.realized_mw[k] - b).abs() < 1e-9);
        }
    }
}
