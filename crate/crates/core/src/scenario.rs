//! Scenario documents and the stochastic inputs they generate.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dispatch::{battery_series, BatterySeries, CdfError, ErrorCdf, ErrorSampler};
use crate::grid::{BusId, GridModel};
use crate::profile::{
    make_load_profile, read_minute_csv_file, resample, resample_wind, scale_wind, MinuteSeries,
    MinuteWalk, NoiseParams, ProfileError, SecondSeries, SeriesKind, SECONDS_PER_MINUTE,
};
use crate::protection::UflsScheme;
use crate::rng::{derive_seed, stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseMode {
    /// Wind and load buses are stochastic.
    A,
    /// Buses flagged dispatched follow their schedule through a battery.
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContingencyEvent {
    pub time_s: f64,
    pub generator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvProfile {
    pub bus: u32,
    pub kind: SeriesKind,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    /// When false, wind and load sit at their forecasts for the whole run.
    pub stochastic: bool,
    /// Per-second increment standard deviation for wind, p.u. of rating.
    pub wind_sigma: f64,
    /// Per-second increment standard deviation for load, p.u. of forecast.
    pub load_sigma: f64,
    pub wind_minutes: MinuteWalk,
    pub load_minutes: MinuteWalk,
    /// Measured minute series replacing the synthetic walk at given buses.
    pub csv: Vec<CsvProfile>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            stochastic: true,
            wind_sigma: 0.002,
            load_sigma: 0.001,
            wind_minutes: MinuteWalk::WIND,
            load_minutes: MinuteWalk::LOAD,
            csv: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorModel {
    Ideal,
    Placeholder,
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispatchConfig {
    pub error: ErrorModel,
    /// Seconds each tracking-error sample is held.
    pub hold_s: usize,
    pub power_cap_mw: Option<f64>,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        Self {
            error: ErrorModel::Placeholder,
            hold_s: 1,
            power_cap_mw: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Pairing key; case A and B runs with the same group are compared.
    #[serde(default)]
    pub group: Option<String>,
    pub case: CaseMode,
    #[serde(default, rename = "event")]
    pub events: Vec<ContingencyEvent>,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_interval")]
    pub output_interval_s: f64,
    #[serde(default = "default_estimator_tau")]
    pub estimator_tau_s: f64,
    #[serde(default)]
    pub profiles: ProfileConfig,
    #[serde(default)]
    pub dispatch: DispatchConfig,
    #[serde(default)]
    pub ufls: UflsScheme,
}

fn default_duration() -> f64 {
    600.0
}
fn default_dt() -> f64 {
    0.01
}
fn default_output_interval() -> f64 {
    0.1
}
fn default_estimator_tau() -> f64 {
    0.05
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("failed to read scenario {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse scenario: {0}")]
    Parse(String),
    #[error("scenario {name}: {message}")]
    Invalid { name: String, message: String },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Cdf(#[from] CdfError),
}

impl Scenario {
    pub fn new(name: impl Into<String>, case: CaseMode) -> Self {
        Self {
            name: name.into(),
            group: None,
            case,
            events: Vec::new(),
            duration_s: default_duration(),
            dt_s: default_dt(),
            seed: 0,
            output_interval_s: default_output_interval(),
            estimator_tau_s: default_estimator_tau(),
            profiles: ProfileConfig::default(),
            dispatch: DispatchConfig::default(),
            ufls: UflsScheme::default(),
        }
    }

    pub fn from_toml(doc: &str) -> Result<Self, ScenarioError> {
        toml::from_str(doc).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Load a scenario file; relative CSV paths resolve against its directory.
    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut sc = Self::from_toml(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for c in &mut sc.profiles.csv {
            if c.path.is_relative() {
                c.path = dir.join(&c.path);
            }
        }
        if let ErrorModel::Csv(p) = &mut sc.dispatch.error {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(sc)
    }

    pub fn with_event(mut self, time_s: f64, generator: &str) -> Self {
        self.events.push(ContingencyEvent {
            time_s,
            generator: generator.to_string(),
        });
        self
    }

    pub fn steps(&self) -> usize {
        (self.duration_s / self.dt_s).round() as usize
    }

    pub fn record_every(&self) -> usize {
        ((self.output_interval_s / self.dt_s).round() as usize).max(1)
    }

    /// Number of 1 s profile samples needed to cover the run.
    pub fn profile_len(&self) -> usize {
        self.duration_s.ceil() as usize + 1
    }

    pub fn validate(&self, model: &GridModel) -> Result<(), ScenarioError> {
        let bad = |message: String| ScenarioError::Invalid {
            name: self.name.clone(),
            message,
        };
        if !(self.dt_s > 0.0) || !(self.duration_s > 0.0) {
            return Err(bad(format!(
                "dt_s and duration_s must be positive (got {}, {})",
                self.dt_s, self.duration_s
            )));
        }
        let ratio = self.duration_s / self.dt_s;
        if (ratio - ratio.round()).abs() > 1e-6 {
            return Err(bad("duration_s must be a whole number of steps".into()));
        }
        let rec = self.output_interval_s / self.dt_s;
        if !(self.output_interval_s > 0.0) || (rec - rec.round()).abs() > 1e-6 {
            return Err(bad(
                "output_interval_s must be a positive multiple of dt_s".into()
            ));
        }
        if !(self.estimator_tau_s >= 0.0) {
            return Err(bad("estimator_tau_s must be >= 0".into()));
        }
        for e in &self.events {
            if !(0.0..=self.duration_s).contains(&e.time_s) {
                return Err(bad(format!(
                    "event at {} s is outside [0, {}]",
                    e.time_s, self.duration_s
                )));
            }
            if model.generator_by_name(&e.generator).is_none() {
                return Err(bad(format!("unknown generator {}", e.generator)));
            }
        }
        for c in &self.profiles.csv {
            let bus = model
                .bus(BusId(c.bus))
                .ok_or_else(|| bad(format!("CSV profile for unknown bus {}", c.bus)))?;
            let ok = match c.kind {
                SeriesKind::Wind => bus.wind_mw.is_some(),
                SeriesKind::Load => bus.load_mw.is_some(),
                SeriesKind::Battery => false,
            };
            if !ok {
                return Err(bad(format!("bus {} has no {:?} element", c.bus, c.kind)));
            }
        }
        if !(self.profiles.wind_sigma >= 0.0 && self.profiles.load_sigma >= 0.0) {
            return Err(bad("profile sigmas must be >= 0".into()));
        }
        self.ufls.validate().map_err(bad)?;
        Ok(())
    }
}

/// Realized 1 s inputs of one scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioProfiles {
    pub wind: Vec<SecondSeries>,
    pub load: Vec<SecondSeries>,
    /// Battery series per dispatched bus; empty in case A.
    pub battery: Vec<(BusId, BatterySeries)>,
    /// SHA-256 over the wind and load realizations.
    pub digest: String,
}

fn minutes_for(len_s: usize) -> usize {
    len_s.div_ceil(SECONDS_PER_MINUTE) + 1
}

fn unit_path(
    sc: &Scenario,
    bus: BusId,
    kind: SeriesKind,
    len: usize,
) -> Result<Vec<f64>, ScenarioError> {
    let p = &sc.profiles;
    if !p.stochastic {
        return Ok(vec![1.0; len]);
    }
    let (walk, sigma, minute_stream, second_stream, upper) = match kind {
        SeriesKind::Wind => (
            p.wind_minutes,
            p.wind_sigma,
            Stream::WindMinutes,
            Stream::WindSeconds,
            1.0,
        ),
        _ => (
            p.load_minutes,
            p.load_sigma,
            Stream::LoadMinutes,
            Stream::LoadSeconds,
            f64::INFINITY,
        ),
    };
    let csv = p.csv.iter().find(|c| c.bus == bus.0 && c.kind == kind);
    let minutes = match csv {
        Some(c) => read_minute_csv_file(&c.path, upper)?,
        None => {
            let mut rng = stream_rng(sc.seed, minute_stream, bus.0);
            MinuteSeries::bounded(walk.generate(minutes_for(len), &mut rng), upper)?
        }
    };
    let noise = NoiseParams {
        sigma,
        seed: derive_seed(sc.seed, second_stream, bus.0),
    };
    let mut unit = match kind {
        SeriesKind::Wind => resample_wind(&minutes, &noise)?.values,
        _ => resample(&minutes, &noise)?.values,
    };
    if unit.len() < len {
        return Err(ScenarioError::Invalid {
            name: sc.name.clone(),
            message: format!(
                "{:?} profile at bus {bus} covers {} s, run needs {len} s",
                kind,
                unit.len()
            ),
        });
    }
    unit.truncate(len);
    Ok(unit)
}

/// Generate wind, load and (in case B) battery series for a scenario.
///
/// Wind and load depend only on the master seed, never on the case, so A/B
/// runs with the same seed see identical realizations.
pub fn build_profiles(model: &GridModel, sc: &Scenario) -> Result<ScenarioProfiles, ScenarioError> {
    let len = sc.profile_len();
    let mut wind = Vec::new();
    let mut load = Vec::new();
    let mut hasher = Sha256::new();
    for b in &model.buses {
        if let Some(w_b) = b.wind_mw {
            let s = scale_wind(&unit_path(sc, b.id, SeriesKind::Wind, len)?, w_b, b.id)?;
            hasher.update(b"W");
            hasher.update(b.id.0.to_le_bytes());
            s.values_mw
                .iter()
                .for_each(|v| hasher.update(v.to_le_bytes()));
            wind.push(s);
        }
        if let Some(l_b) = b.load_mw {
            let s = make_load_profile(&unit_path(sc, b.id, SeriesKind::Load, len)?, l_b, b.id)?;
            hasher.update(b"L");
            hasher.update(b.id.0.to_le_bytes());
            s.values_mw
                .iter()
                .for_each(|v| hasher.update(v.to_le_bytes()));
            load.push(s);
        }
    }
    let digest = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();

    let mut battery = Vec::new();
    if sc.case == CaseMode::B {
        let cdf = match &sc.dispatch.error {
            ErrorModel::Ideal => ErrorCdf::ideal(),
            ErrorModel::Placeholder => ErrorCdf::placeholder(),
            ErrorModel::Csv(path) => ErrorCdf::from_csv_file(path)?,
        };
        for b in model.buses.iter().filter(|b| b.dispatched) {
            let w = wind.iter().find(|s| s.bus == b.id);
            let l = load.iter().find(|s| s.bus == b.id);
            let mut sampler = ErrorSampler::new(
                cdf.clone(),
                stream_rng(sc.seed, Stream::DispatchError, b.id.0),
                sc.dispatch.hold_s,
            );
            let series = battery_series(
                b.wind_mw.unwrap_or(0.0),
                b.load_mw.unwrap_or(0.0),
                w.map(|s| s.values_mw.as_slice()),
                l.map(|s| s.values_mw.as_slice()),
                sampler.series(len),
                sc.dispatch.power_cap_mw,
            );
            battery.push((b.id, series));
        }
    }
    Ok(ScenarioProfiles {
        wind,
        load,
        battery,
        digest,
    })
}
