//! Load-shedding reliability metrics, case comparison and result export.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::sim::{RunEvent, Trajectory};

/// Version of the metrics JSON layout.
pub const SCHEMA_VERSION: u32 = 1;

const REQUIRED_KEYS: [&str; 5] = ["schema_version", "r_ls", "t_ls_s", "eens_mwh", "events"];

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("trajectory has no {0} channel")]
    MissingChannel(&'static str),
    #[error("sample {index} has {found} {channel} values, expected {expected}")]
    Ragged {
        index: usize,
        channel: &'static str,
        found: usize,
        expected: usize,
    },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {message}", path.display())]
    Json { path: PathBuf, message: String },
    #[error("metrics document is missing key `{key}`")]
    MissingKey { key: &'static str },
    #[error("metrics schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u64, expected: u32 },
}

/// One contiguous shedding episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShedEvent {
    pub trigger_s: f64,
    /// First time with no load shed again; `None` if still shedding at the
    /// end of the record.
    pub clear_s: Option<f64>,
    pub peak_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Largest shed fraction of the expected load.
    pub r_ls: f64,
    /// Total time with any load shed, s.
    pub t_ls_s: f64,
    /// Energy not served, MWh.
    pub eens_mwh: f64,
    pub events: Vec<ShedEvent>,
}

impl Metrics {
    pub fn zero() -> Self {
        Self {
            r_ls: 0.0,
            t_ls_s: 0.0,
            eens_mwh: 0.0,
            events: Vec::new(),
        }
    }
}

fn check_shape(tr: &Trajectory) -> Result<(), MetricsError> {
    let n = tr.load_buses.len();
    if n == 0 {
        return Err(MetricsError::MissingChannel("expected-load"));
    }
    for (index, s) in tr.samples.iter().enumerate() {
        for (channel, len) in [
            ("expected-load", s.expected_mw.len()),
            ("served-load", s.served_mw.len()),
            ("shed-level", s.shed_level.len()),
        ] {
            if len != n {
                return Err(MetricsError::Ragged {
                    index,
                    channel,
                    found: len,
                    expected: n,
                });
            }
        }
    }
    Ok(())
}

fn shed_mw(s: &crate::sim::Sample) -> f64 {
    s.expected_mw
        .iter()
        .zip(&s.served_mw)
        .map(|(e, v)| (e - v).max(0.0))
        .sum()
}

/// Reliability metrics of one trajectory.
///
/// A sample with a nonzero shed level stands for the interval up to the
/// next sample, so the final sample contributes no duration. The energy is
/// the trapezoid integral of the shed power over the sample grid.
pub fn compute_metrics(tr: &Trajectory) -> Result<Metrics, MetricsError> {
    check_shape(tr)?;
    let h = tr.interval_s;
    let n = tr.samples.len();
    let mut m = Metrics::zero();

    let shed: Vec<f64> = tr.samples.iter().map(shed_mw).collect();
    let mut energy_mws = 0.0;
    for w in shed.windows(2) {
        energy_mws += 0.5 * (w[0] + w[1]) * h;
    }
    m.eens_mwh = energy_mws / 3600.0;

    let mut count = 0usize;
    let mut open: Option<ShedEvent> = None;
    for (k, s) in tr.samples.iter().enumerate() {
        let expected: f64 = s.expected_mw.iter().sum();
        if expected > 0.0 {
            m.r_ls = m.r_ls.max(shed[k] / expected);
        }
        let active = s.shed_level.iter().any(|&l| l > 0.0);
        if active && k + 1 < n {
            count += 1;
        }
        let frac = s.shed_level.iter().copied().fold(0.0, f64::max);
        match (&mut open, active) {
            (None, true) => {
                open = Some(ShedEvent {
                    trigger_s: s.time_s,
                    clear_s: None,
                    peak_fraction: frac,
                })
            }
            (Some(ev), true) => ev.peak_fraction = ev.peak_fraction.max(frac),
            (Some(ev), false) => {
                ev.clear_s = Some(s.time_s);
                m.events.extend(open.take());
            }
            (None, false) => {}
        }
    }
    m.events.extend(open);
    m.t_ls_s = count as f64 * h;
    Ok(m)
}

/// Side-by-side view of a seed-paired case A and case B run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub a: Metrics,
    pub b: Metrics,
    /// EENS of A over EENS of B; `None` when B has no energy not served.
    pub eens_ratio: Option<f64>,
    pub eens_reduction_pct: f64,
    pub t_ls_ratio: Option<f64>,
    pub t_ls_reduction_pct: f64,
    pub r_ls_reduction_pct: f64,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    if a == b {
        Some(1.0)
    } else if b > 0.0 {
        Some(a / b)
    } else {
        None
    }
}

fn reduction_pct(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else if a > 0.0 {
        100.0 * (a - b) / a
    } else {
        f64::NEG_INFINITY
    }
}

pub fn compare_cases(a: &Metrics, b: &Metrics) -> Comparison {
    Comparison {
        a: a.clone(),
        b: b.clone(),
        eens_ratio: ratio(a.eens_mwh, b.eens_mwh),
        eens_reduction_pct: reduction_pct(a.eens_mwh, b.eens_mwh),
        t_ls_ratio: ratio(a.t_ls_s, b.t_ls_s),
        t_ls_reduction_pct: reduction_pct(a.t_ls_s, b.t_ls_s),
        r_ls_reduction_pct: reduction_pct(a.r_ls, b.r_ls),
    }
}

fn ratio_phrase(r: Option<f64>) -> String {
    match r {
        None => "B has none".to_string(),
        Some(r) if (r - 1.0).abs() < 0.05 => format!("{r:.2}x, about equal"),
        Some(r) if r >= 1.5 => format!("{r:.2}x, around {} times larger in A", r.round()),
        Some(r) if r > 1.0 => format!("{r:.2}x, larger in A"),
        Some(r) if r > 2.0 / 3.0 => format!("{r:.2}x, larger in B"),
        Some(r) => format!("{r:.2}x, around {} times larger in B", (1.0 / r).round()),
    }
}

impl Comparison {
    /// Plain-text report.
    pub fn render_text(&self, label: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{label}");
        let _ = writeln!(
            out,
            "{:<8}{:>10}{:>12}{:>14}",
            "case", "R_ls", "T_ls [s]", "EENS [MWh]"
        );
        for (name, m) in [("A", &self.a), ("B", &self.b)] {
            let _ = writeln!(
                out,
                "{:<8}{:>9.1}%{:>12.1}{:>14.3}",
                name,
                100.0 * m.r_ls,
                m.t_ls_s,
                m.eens_mwh
            );
        }
        let _ = writeln!(
            out,
            "EENS A/B: {} ({:.1}% reduction)",
            ratio_phrase(self.eens_ratio),
            self.eens_reduction_pct
        );
        let _ = writeln!(
            out,
            "T_ls A/B: {} ({:.1}% shorter)",
            ratio_phrase(self.t_ls_ratio),
            self.t_ls_reduction_pct
        );
        out
    }

    pub fn csv_header() -> &'static str {
        "label,r_ls_a,r_ls_b,t_ls_a_s,t_ls_b_s,eens_a_mwh,eens_b_mwh,eens_ratio,eens_reduction_pct,t_ls_reduction_pct"
    }

    pub fn csv_row(&self, label: &str) -> String {
        let r = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{label},{},{},{},{},{},{},{},{},{}",
            self.a.r_ls,
            self.b.r_ls,
            self.a.t_ls_s,
            self.b.t_ls_s,
            self.a.eens_mwh,
            self.b.eens_mwh,
            r(self.eens_ratio),
            self.eens_reduction_pct,
            self.t_ls_reduction_pct
        )
    }
}

/// One line of a multi-scenario summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub group: Option<String>,
    pub case: String,
    pub metrics: Metrics,
}

/// Table with one row per scenario, ordered by case then group.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut sorted: Vec<&SummaryRow> = rows.iter().collect();
    sorted.sort_by(|x, y| (&x.case, &x.group, &x.scenario).cmp(&(&y.case, &y.group, &y.scenario)));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6}{:<12}{:<14}{:>10}{:>12}{:>14}",
        "case", "group", "scenario", "R_ls", "T_ls [s]", "EENS [MWh]"
    );
    for r in sorted {
        let _ = writeln!(
            out,
            "{:<6}{:<12}{:<14}{:>9.1}%{:>12.1}{:>14.3}",
            r.case,
            r.group.as_deref().unwrap_or("-"),
            r.scenario,
            100.0 * r.metrics.r_ls,
            r.metrics.t_ls_s,
            r.metrics.eens_mwh
        );
    }
    out
}

/// Metrics JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub schema_version: u32,
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(flatten)]
    pub metrics: Metrics,
}

pub fn metrics_to_json(scenario: &str, m: &Metrics) -> String {
    let doc = MetricsDocument {
        schema_version: SCHEMA_VERSION,
        scenario: Some(scenario.to_string()),
        metrics: m.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("metrics serialize");
    s.push('\n');
    s
}

/// Parse a metrics document, naming the first missing key.
pub fn parse_metrics_json(text: &str, path: &Path) -> Result<MetricsDocument, MetricsError> {
    let json_err = |e: serde_json::Error| MetricsError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
    for key in REQUIRED_KEYS {
        if value.get(key).is_none() {
            return Err(MetricsError::MissingKey { key });
        }
    }
    let found = value["schema_version"].as_u64().unwrap_or(0);
    if found != u64::from(SCHEMA_VERSION) {
        return Err(MetricsError::SchemaVersion {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    serde_json::from_value(value).map_err(json_err)
}

pub fn read_metrics_file(path: impl AsRef<Path>) -> Result<MetricsDocument, MetricsError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_metrics_json(&text, path)
}

/// Write the trajectory as CSV, one row per sample.
pub fn write_trajectory_csv<W: Write>(tr: &Trajectory, w: W) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["time_s".to_string(), "coi_hz".to_string()];
    header.extend(tr.bus_ids.iter().map(|b| format!("f_bus{}", b.0)));
    for g in &tr.gen_names {
        for q in ["delta", "dw", "pm_mw", "pe_mw"] {
            header.push(format!("{q}_{g}"));
        }
    }
    for b in &tr.load_buses {
        for q in ["expected_mw", "served_mw", "shed"] {
            header.push(format!("{q}_bus{}", b.0));
        }
    }
    header.extend(tr.wind_buses.iter().map(|b| format!("wind_mw_bus{}", b.0)));
    header.extend(
        tr.battery_buses
            .iter()
            .map(|b| format!("battery_mw_bus{}", b.0)),
    );
    out.write_record(&header)?;

    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for s in &tr.samples {
        row.clear();
        row.push(s.time_s.to_string());
        row.push(s.coi_hz.to_string());
        row.extend(s.bus_hz.iter().map(f64::to_string));
        for k in 0..tr.gen_names.len() {
            for v in [s.gen_delta[k], s.gen_dw[k], s.gen_pm_mw[k], s.gen_pe_mw[k]] {
                row.push(v.to_string());
            }
        }
        for k in 0..tr.load_buses.len() {
            for v in [s.expected_mw[k], s.served_mw[k], s.shed_level[k]] {
                row.push(v.to_string());
            }
        }
        row.extend(s.wind_mw.iter().map(f64::to_string));
        row.extend(s.battery_mw.iter().map(f64::to_string));
        out.write_record(&row)?;
    }
    out.flush()
}

pub fn write_events_csv<W: Write>(events: &[RunEvent], w: W) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "time_s",
        "kind",
        "generator",
        "bus",
        "old_level",
        "new_level",
    ])?;
    for e in events {
        let t = e.time_s().to_string();
        let rec: [String; 6] = match e {
            RunEvent::Trip { generator, .. } => [
                t,
                "trip".into(),
                generator.clone(),
                String::new(),
                String::new(),
                String::new(),
            ],
            RunEvent::TripIgnored { generator, .. } => [
                t,
                "trip_ignored".into(),
                generator.clone(),
                String::new(),
                String::new(),
                String::new(),
            ],
            RunEvent::Relay {
                bus,
                old_level,
                new_level,
                ..
            } => [
                t,
                "relay".into(),
                String::new(),
                bus.0.to_string(),
                old_level.to_string(),
                new_level.to_string(),
            ],
        };
        out.write_record(&rec)?;
    }
    out.flush()
}

/// Paths written by [`export_results`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportPaths {
    pub trajectory: PathBuf,
    pub metrics: PathBuf,
    pub events: PathBuf,
}

/// Write `trajectory.csv`, `metrics.json` and `events.csv` into `dir`.
pub fn export_results(
    scenario: &str,
    tr: &Trajectory,
    m: &Metrics,
    events: &[RunEvent],
    dir: &Path,
) -> Result<ExportPaths, MetricsError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| MetricsError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let paths = ExportPaths {
        trajectory: dir.join("trajectory.csv"),
        metrics: dir.join("metrics.json"),
        events: dir.join("events.csv"),
    };
    let open = |p: &Path| {
        fs::File::create(p)
            .map(io::BufWriter::new)
            .map_err(io_err(p))
    };
    write_trajectory_csv(tr, open(&paths.trajectory)?).map_err(io_err(&paths.trajectory))?;
    write_events_csv(events, open(&paths.events)?).map_err(io_err(&paths.events))?;
    fs::write(&paths.metrics, metrics_to_json(scenario, m)).map_err(io_err(&paths.metrics))?;
    Ok(paths)
}
