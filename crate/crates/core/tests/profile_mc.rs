use freqsim::grid::BusId;
use freqsim::profile::{
    read_minute_csv, resample, resample_wind, scale_wind, write_second_csv, MinuteSeries,
    NoiseParams, ProfileError,
};
use proptest::prelude::*;

fn noise(sigma: f64, seed: u64) -> NoiseParams {
    NoiseParams { sigma, seed }
}

#[test]
fn zero_sigma_interpolates_between_minutes() {
    let xs = vec![0.2, 0.9, 0.4, 0.4, 1.0, 0.0];
    let x = MinuteSeries::unit(xs.clone()).unwrap();
    let p = resample_wind(&x, &noise(0.0, 99)).unwrap();
    assert_eq!(p.values.len(), 60 * (xs.len() - 1) + 1);
    for (t, w) in xs.windows(2).enumerate() {
        for s in 0..60 {
            let expected = w[0] + (w[1] - w[0]) * s as f64 / 60.0;
            assert!((p.values[60 * t + s] - expected).abs() < 1e-12);
        }
        // the increments telescope onto the next minute value
        let sum: f64 = p.increments[60 * t..60 * (t + 1)].iter().sum();
        assert!((w[0] + sum - w[1]).abs() < 1e-12);
    }
    assert_eq!(*p.values.last().unwrap(), 0.0);
}

#[test]
fn minute_boundaries_are_pinned_with_noise() {
    let xs = vec![0.5, 0.6, 0.55, 0.7];
    let x = MinuteSeries::unit(xs.clone()).unwrap();
    for seed in 0..20 {
        let p = resample_wind(&x, &noise(0.01, seed)).unwrap();
        for (t, v) in xs.iter().enumerate() {
            assert_eq!(p.values[60 * t], *v);
        }
    }
}

#[test]
fn mean_increment_monte_carlo() {
    let xs = vec![0.3, 0.6, 0.5, 0.5, 0.8];
    let x = MinuteSeries::unit(xs.clone()).unwrap();
    let sigma = 0.002;
    let seeds = 1000u64;
    let intervals = xs.len() - 1;
    let mut sums = vec![0.0; intervals];
    for seed in 0..seeds {
        let p = resample(&x, &noise(sigma, seed)).unwrap();
        for (t, sum) in sums.iter_mut().enumerate() {
            *sum += p.increments[60 * t..60 * (t + 1)].iter().sum::<f64>();
        }
    }
    let n = (seeds * 60) as f64;
    let se = sigma / n.sqrt();
    for t in 0..intervals {
        let mean = sums[t] / n;
        let expected = (xs[t + 1] - xs[t]) / 60.0;
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "interval {t}: {mean} vs {expected} (se {se})"
        );
    }
}

#[test]
fn increments_have_requested_spread() {
    let x = MinuteSeries::unit(vec![0.5; 101]).unwrap();
    let p = resample(&x, &noise(0.002, 5)).unwrap();
    let n = p.increments.len() as f64;
    let var = p.increments.iter().map(|d| d * d).sum::<f64>() / n;
    let sd = var.sqrt();
    // 6000 draws: the sample standard deviation is within a few percent.
    assert!((sd / 0.002 - 1.0).abs() < 0.05, "sd {sd}");
}

#[test]
fn same_seed_is_bit_identical_and_seeds_differ() {
    let x = MinuteSeries::unit(vec![0.4, 0.7, 0.6]).unwrap();
    let a = resample_wind(&x, &noise(0.003, 42)).unwrap();
    let b = resample_wind(&x, &noise(0.003, 42)).unwrap();
    assert_eq!(
        a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    let c = resample_wind(&x, &noise(0.003, 43)).unwrap();
    assert_ne!(a.values, c.values);
}

#[test]
fn unit_wind_scales_to_rating() {
    let x = MinuteSeries::unit(vec![1.0; 4]).unwrap();
    let p = resample_wind(&x, &noise(0.0, 0)).unwrap();
    let s = scale_wind(&p.values, 300.0, BusId(2)).unwrap();
    assert!(s.values_mw.iter().all(|&v| v == 300.0));
    assert_eq!(s.baseline_mw, 300.0);
    assert!(matches!(
        scale_wind(&p.values, 0.0, BusId(2)),
        Err(ProfileError::NonPositiveRating(_))
    ));
}

#[test]
fn short_series_is_rejected() {
    let x = MinuteSeries::unit(vec![0.5]).unwrap();
    assert!(matches!(
        resample(&x, &noise(0.0, 0)),
        Err(ProfileError::InsufficientData(1))
    ));
    let x = MinuteSeries::unit(vec![0.5, 0.6]).unwrap();
    assert!(resample(&x, &noise(-1.0, 0)).is_err());
    assert!(MinuteSeries::unit(vec![0.5, 1.2]).is_err());
}

#[test]
fn csv_reading_and_line_numbers() {
    let doc = "time,value\n0,0.5\n60,0.6\n120,0.7\n";
    let x = read_minute_csv(doc.as_bytes(), 1.0).unwrap();
    assert_eq!(x.values(), &[0.5, 0.6, 0.7]);

    let bad = "time,value\n0,0.5\n60,abc\n";
    match read_minute_csv(bad.as_bytes(), 1.0) {
        Err(ProfileError::Csv { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
    let gap = "0,0.5\n60,0.6\n150,0.7\n";
    match read_minute_csv(gap.as_bytes(), 1.0) {
        Err(ProfileError::Csv { line, message }) => {
            assert_eq!(line, 3);
            assert!(message.contains("60 s"));
        }
        other => panic!("unexpected {other:?}"),
    }
    let range = "0,0.5\n60,1.5\n";
    match read_minute_csv(range.as_bytes(), 1.0) {
        Err(ProfileError::Csv { line, .. }) => assert_eq!(line, 2),
        other => panic!("unexpected {other:?}"),
    }
    let fields = "0,0.5,9\n";
    assert!(matches!(
        read_minute_csv(fields.as_bytes(), 1.0),
        Err(ProfileError::Csv { line: 1, .. })
    ));
}

#[test]
fn second_csv_layout() {
    let mut out = Vec::new();
    write_second_csv(&[1.0, 2.5], "wind_mw", &mut out).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "time_s,wind_mw\n0,1\n1,2.5\n"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn wind_stays_within_rating(
        xs in proptest::collection::vec(0.0f64..=1.0, 2..8),
        sigma in 0.0f64..0.05,
        seed in any::<u64>(),
        rating in 1.0f64..600.0,
    ) {
        let x = MinuteSeries::unit(xs).unwrap();
        let p = resample_wind(&x, &noise(sigma, seed)).unwrap();
        let s = scale_wind(&p.values, rating, BusId(1)).unwrap();
        for v in s.values_mw {
            prop_assert!((0.0..=rating).contains(&v));
        }
    }
}
