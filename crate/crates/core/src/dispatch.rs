//! Dispatched-by-design buses: a battery absorbs the deviation of the local
//! wind and load from their forecasts so that the bus follows its schedule,
//! up to a multiplicative tracking error drawn from an empirical CDF.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Battery injection that restores the scheduled net injection `W_b − L_b`.
#[inline]
pub fn ideal_battery_injection(w_b: f64, l_b: f64, w_ts: f64, l_ts: f64) -> f64 {
    (w_b - l_b) - (w_ts - l_ts)
}

/// Realized injection under a relative tracking error.
#[inline]
pub fn perturb_injection(b_star: f64, eps: f64) -> f64 {
    b_star * (1.0 + eps)
}

#[derive(Debug, thiserror::Error)]
pub enum CdfError {
    #[error("CDF needs at least one breakpoint")]
    Empty,
    #[error("breakpoint {index}: epsilon must be strictly increasing")]
    EpsilonNotIncreasing { index: usize },
    #[error("breakpoint {index}: probability must be nondecreasing within [0, 1]")]
    ProbabilityNotMonotone { index: usize },
    #[error("last cumulative probability must be 1, got {0}")]
    DoesNotReachOne(f64),
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Piecewise-linear CDF of the relative tracking error `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCdf {
    eps: Vec<f64>,
    prob: Vec<f64>,
}

impl ErrorCdf {
    /// Breakpoints `(ε_k, F_k)`. A first probability above zero is a point
    /// mass at the first breakpoint.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, CdfError> {
        if points.is_empty() {
            return Err(CdfError::Empty);
        }
        for (index, w) in points.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(CdfError::EpsilonNotIncreasing { index: index + 1 });
            }
            if !(w[1].1 >= w[0].1) {
                return Err(CdfError::ProbabilityNotMonotone { index: index + 1 });
            }
        }
        for (index, &(e, f)) in points.iter().enumerate() {
            if !e.is_finite() || !(0.0..=1.0).contains(&f) {
                return Err(CdfError::ProbabilityNotMonotone { index });
            }
        }
        let last = points[points.len() - 1].1;
        if last != 1.0 {
            return Err(CdfError::DoesNotReachOne(last));
        }
        let (eps, prob) = points.into_iter().unzip();
        Ok(Self { eps, prob })
    }

    /// Perfect tracking: `ε ≡ 0`.
    pub fn ideal() -> Self {
        Self {
            eps: vec![0.0],
            prob: vec![1.0],
        }
    }

    /// Zero-mean triangular error on ±5%. A stand-in for measured tracking
    /// statistics, not derived from any field data.
    pub fn placeholder() -> Self {
        Self::new(vec![
            (-0.05, 0.0),
            (-0.025, 0.125),
            (0.0, 0.5),
            (0.025, 0.875),
            (0.05, 1.0),
        ])
        .expect("placeholder breakpoints are valid")
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.eps.iter().copied().zip(self.prob.iter().copied())
    }

    pub fn is_degenerate(&self) -> bool {
        self.eps.len() == 1
    }

    /// `F(ε)` with linear interpolation.
    pub fn cdf(&self, e: f64) -> f64 {
        if e < self.eps[0] {
            return 0.0;
        }
        let k = self.eps.partition_point(|&x| x <= e);
        if k >= self.eps.len() {
            return 1.0;
        }
        let (e0, e1) = (self.eps[k - 1], self.eps[k]);
        let (f0, f1) = (self.prob[k - 1], self.prob[k]);
        f0 + (f1 - f0) * (e - e0) / (e1 - e0)
    }

    /// Inverse CDF with linear interpolation between breakpoints.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        if u <= self.prob[0] {
            return self.eps[0];
        }
        // First breakpoint whose probability reaches u.
        let k = self.prob.partition_point(|&f| f < u);
        let k = k.min(self.eps.len() - 1);
        let (f0, f1) = (self.prob[k - 1], self.prob[k]);
        let (e0, e1) = (self.eps[k - 1], self.eps[k]);
        if f1 == f0 {
            return e1;
        }
        e0 + (e1 - e0) * (u - f0) / (f1 - f0)
    }

    /// Two-column CSV `epsilon,cumulative_probability`; header optional.
    pub fn from_csv(reader: impl Read) -> Result<Self, CdfError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut points = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CdfError::Csv {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(k as u64 + 1);
            if rec.len() != 2 {
                return Err(CdfError::Csv {
                    line,
                    message: format!("expected 2 fields, got {}", rec.len()),
                });
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(e), Ok(f)) => points.push((e, f)),
                _ if k == 0 => continue,
                _ => {
                    return Err(CdfError::Csv {
                        line,
                        message: "fields must be numbers".into(),
                    })
                }
            }
        }
        Self::new(points)
    }

    pub fn from_csv_file(path: impl AsRef<Path>) -> Result<Self, CdfError> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|source| CdfError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv(f)
    }
}

/// Inverse-transform sample of the tracking error.
pub fn sample_error(cdf: &ErrorCdf, rng: &mut impl Rng) -> f64 {
    if cdf.is_degenerate() {
        return cdf.eps[0];
    }
    cdf.quantile(rng.random::<f64>())
}

/// Per-bus error stream; a fresh sample is drawn every `hold` seconds.
#[derive(Debug, Clone)]
pub struct ErrorSampler {
    cdf: ErrorCdf,
    rng: ChaCha8Rng,
    hold: usize,
}

impl ErrorSampler {
    pub fn new(cdf: ErrorCdf, rng: ChaCha8Rng, hold_s: usize) -> Self {
        Self {
            cdf,
            rng,
            hold: hold_s.max(1),
        }
    }

    /// `len` per-second samples.
    pub fn series(&mut self, len: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(len);
        let mut current = 0.0;
        for k in 0..len {
            if k % self.hold == 0 {
                current = sample_error(&self.cdf, &mut self.rng);
            }
            out.push(current);
        }
        out
    }
}

/// Battery series at one dispatched bus.
#[derive(Debug, Clone, PartialEq)]
pub struct BatterySeries {
    /// Scheduled net injection `W_b − L_b`, MW.
    pub schedule_mw: f64,
    /// Ideal compensation `B*`, MW.
    pub ideal_mw: Vec<f64>,
    /// Tracking errors `ε`.
    pub errors: Vec<f64>,
    /// Realized injection `B = B* (1 + ε)`, MW, after the optional cap.
    pub realized_mw: Vec<f64>,
}

/// Compute the battery series from forecasts and realized wind/load series.
/// Missing wind means zero forecast and zero realization.
pub fn battery_series(
    w_b: f64,
    l_b: f64,
    wind: Option<&[f64]>,
    load: Option<&[f64]>,
    errors: Vec<f64>,
    power_cap_mw: Option<f64>,
) -> BatterySeries {
    let len = errors.len();
    let mut ideal_mw = Vec::with_capacity(len);
    let mut realized_mw = Vec::with_capacity(len);
    for (k, &eps) in errors.iter().enumerate() {
        let w = wind.map_or(0.0, |s| s[k]);
        let l = load.map_or(0.0, |s| s[k]);
        let b_star = ideal_battery_injection(w_b, l_b, w, l);
        let mut b = perturb_injection(b_star, eps);
        if let Some(cap) = power_cap_mw {
            b = b.clamp(-cap, cap);
        }
        ideal_mw.push(b_star);
        realized_mw.push(b);
    }
    BatterySeries {
        schedule_mw: w_b - l_b,
        ideal_mw,
        errors,
        realized_mw,
    }
}
