//! Second-resolution wind and load series synthesized from minute data.
//!
//! Within minute `t` the per-second increments are Gaussian with mean
//! `(x[t+1] − x[t]) / 60`; the path restarts at `x[t]` each minute so the
//! series always passes through the minute values. With `σ = 0` this is
//! linear interpolation between minute samples.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::grid::BusId;

pub const SECONDS_PER_MINUTE: usize = 60;

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("need at least 2 minute samples, got {0}")]
    InsufficientData(usize),
    #[error("minute sample {index} = {value} outside [0, {upper}]")]
    OutOfRange {
        index: usize,
        value: f64,
        upper: f64,
    },
    #[error("noise standard deviation must be >= 0, got {0}")]
    NegativeSigma(f64),
    #[error("rating must be > 0, got {0}")]
    NonPositiveRating(f64),
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Minute-resolution per-unit samples bounded to `[0, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinuteSeries {
    values: Vec<f64>,
    upper: f64,
}

impl MinuteSeries {
    /// Wind-style series, values in `[0, 1]`.
    pub fn unit(values: Vec<f64>) -> Result<Self, ProfileError> {
        Self::bounded(values, 1.0)
    }

    /// Series bounded to `[0, upper]`; use `f64::INFINITY` for load factors.
    pub fn bounded(values: Vec<f64>, upper: f64) -> Result<Self, ProfileError> {
        for (index, &value) in values.iter().enumerate() {
            if !(value >= 0.0 && value <= upper) {
                return Err(ProfileError::OutOfRange {
                    index,
                    value,
                    upper,
                });
            }
        }
        Ok(Self { values, upper })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Standard deviation of each per-second increment, p.u.
    pub sigma: f64,
    pub seed: u64,
}

/// Resampled per-unit path together with the increments that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitProfile {
    /// `60 (T − 1) + 1` samples at 1 s.
    pub values: Vec<f64>,
    /// 60 increments per minute interval, in draw order.
    pub increments: Vec<f64>,
}

/// Oversample a minute series to 1 s resolution with Gaussian increments.
///
/// Sample `60 t + s` (for `s` in `0..60`) is `x[t]` plus the cumulative sum
/// of the first `s` increments of minute `t`, clamped to the series bounds.
/// The 60th cumulative point lands on the next minute boundary, which is
/// pinned to `x[t+1]`.
pub fn resample(x: &MinuteSeries, p: &NoiseParams) -> Result<UnitProfile, ProfileError> {
    let t_len = x.len();
    if t_len < 2 {
        return Err(ProfileError::InsufficientData(t_len));
    }
    if !(p.sigma >= 0.0) {
        return Err(ProfileError::NegativeSigma(p.sigma));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let xs = x.values();
    let mut values = Vec::with_capacity((t_len - 1) * SECONDS_PER_MINUTE + 1);
    let mut increments = Vec::with_capacity((t_len - 1) * SECONDS_PER_MINUTE);
    for t in 0..t_len - 1 {
        let mean = (xs[t + 1] - xs[t]) / SECONDS_PER_MINUTE as f64;
        let start = increments.len();
        draw_increments(&mut rng, mean, p.sigma, &mut increments);
        let mut acc = xs[t];
        values.push(acc);
        for d in &increments[start..start + SECONDS_PER_MINUTE - 1] {
            acc += d;
            values.push(acc.clamp(0.0, x.upper()));
        }
    }
    values.push(xs[t_len - 1]);
    Ok(UnitProfile { values, increments })
}

/// Resample a wind minute series; values are clamped to `[0, 1]`.
pub fn resample_wind(x: &MinuteSeries, p: &NoiseParams) -> Result<UnitProfile, ProfileError> {
    if x.upper() > 1.0 {
        let x = MinuteSeries::unit(x.values().to_vec())?;
        return resample(&x, p);
    }
    resample(x, p)
}

fn draw_increments(rng: &mut ChaCha8Rng, mean: f64, sigma: f64, out: &mut Vec<f64>) {
    if sigma == 0.0 {
        out.extend(std::iter::repeat_n(mean, SECONDS_PER_MINUTE));
        return;
    }
    let normal = Normal::new(mean, sigma).expect("sigma is finite and positive");
    out.extend((0..SECONDS_PER_MINUTE).map(|_| normal.sample(rng)));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Wind,
    Load,
    Battery,
}

/// A 1 s power series at one bus, MW, with its forecast baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondSeries {
    pub bus: BusId,
    pub kind: SeriesKind,
    pub baseline_mw: f64,
    pub values_mw: Vec<f64>,
}

impl SecondSeries {
    /// Value in effect at time `t` (zero-order hold, clamped at the ends).
    pub fn at(&self, t: f64) -> f64 {
        let k = (t.max(0.0).floor() as usize).min(self.values_mw.len().saturating_sub(1));
        self.values_mw[k]
    }
}

/// `W = W_b · ω` pointwise.
pub fn scale_wind(unit: &[f64], w_b: f64, bus: BusId) -> Result<SecondSeries, ProfileError> {
    scale(unit, w_b, bus, SeriesKind::Wind)
}

/// `L = L_b · l` pointwise.
pub fn make_load_profile(unit: &[f64], l_b: f64, bus: BusId) -> Result<SecondSeries, ProfileError> {
    scale(unit, l_b, bus, SeriesKind::Load)
}

fn scale(
    unit: &[f64],
    base: f64,
    bus: BusId,
    kind: SeriesKind,
) -> Result<SecondSeries, ProfileError> {
    if !(base > 0.0) {
        return Err(ProfileError::NonPositiveRating(base));
    }
    Ok(SecondSeries {
        bus,
        kind,
        baseline_mw: base,
        values_mw: unit.iter().map(|v| base * v).collect(),
    })
}

/// Bounded random walk used as a stand-in for measured minute data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinuteWalk {
    pub start: f64,
    /// Standard deviation of the minute-to-minute step, p.u.
    pub step_sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

impl MinuteWalk {
    pub const WIND: Self = Self {
        start: 0.8,
        step_sigma: 0.02,
        lo: 0.5,
        hi: 1.0,
    };
    pub const LOAD: Self = Self {
        start: 1.0,
        step_sigma: 0.005,
        lo: 0.95,
        hi: 1.05,
    };

    /// `len` samples; steps that leave `[lo, hi]` are reflected back.
    pub fn generate(&self, len: usize, rng: &mut impl Rng) -> Vec<f64> {
        let normal = Normal::new(0.0, self.step_sigma.max(0.0)).expect("finite sigma");
        let mut x = self.start.clamp(self.lo, self.hi);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(x);
            let mut next = x + if self.step_sigma > 0.0 {
                normal.sample(rng)
            } else {
                0.0
            };
            if next > self.hi {
                next = 2.0 * self.hi - next;
            }
            if next < self.lo {
                next = 2.0 * self.lo - next;
            }
            x = next.clamp(self.lo, self.hi);
        }
        out
    }
}

/// Read `timestamp,value` rows at 60 s. A header row is allowed. Numeric
/// timestamps (seconds) must be spaced 60 s apart.
pub fn read_minute_csv(reader: impl Read, upper: f64) -> Result<MinuteSeries, ProfileError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut values = Vec::new();
    let mut prev_ts: Option<f64> = None;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ProfileError::Csv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(k as u64 + 1);
        if rec.len() != 2 {
            return Err(ProfileError::Csv {
                line,
                message: format!("expected 2 fields (timestamp, value), got {}", rec.len()),
            });
        }
        let value = match rec[1].parse::<f64>() {
            Ok(v) => v,
            Err(_) if k == 0 => continue,
            Err(_) => {
                return Err(ProfileError::Csv {
                    line,
                    message: format!("value {:?} is not a number", &rec[1]),
                })
            }
        };
        if let Ok(ts) = rec[0].parse::<f64>() {
            if let Some(p) = prev_ts {
                if (ts - p - 60.0).abs() > 1e-6 {
                    return Err(ProfileError::Csv {
                        line,
                        message: format!("timestamp step {} s, expected 60 s", ts - p),
                    });
                }
            }
            prev_ts = Some(ts);
        }
        if !(value >= 0.0 && value <= upper) {
            return Err(ProfileError::Csv {
                line,
                message: format!("value {value} outside [0, {upper}]"),
            });
        }
        values.push(value);
    }
    MinuteSeries::bounded(values, upper)
}

pub fn read_minute_csv_file(
    path: impl AsRef<Path>,
    upper: f64,
) -> Result<MinuteSeries, ProfileError> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|source| ProfileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_minute_csv(f, upper)
}

/// Write `time_s,value` rows at 1 s.
pub fn write_second_csv(values: &[f64], header: &str, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "time_s,{header}")?;
    for (k, v) in values.iter().enumerate() {
        writeln!(w, "{k},{v}")?;
    }
    Ok(())
}
