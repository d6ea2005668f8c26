//! Manifest-driven batch execution of scenarios.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::grid::{load_grid_file, GridError, GridModel};
use crate::metrics::{
    compare_cases, compute_metrics, export_results, render_summary, Comparison, ExportPaths,
    Metrics, MetricsError, SummaryRow,
};
use crate::scenario::{CaseMode, Scenario, ScenarioError};
use crate::sim::{run_scenario, SimError};

/// Output directory when neither the manifest nor the caller names one.
pub const DEFAULT_OUTPUT_DIR: &str = "results";

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error("failed to read manifest {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse manifest {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("manifest lists no scenarios")]
    NoScenarios,
    #[error("duplicate scenario name `{0}`")]
    DuplicateName(String),
    #[error("jobs must be at least 1")]
    ZeroJobs,
    #[error("grid {}: {source}", path.display())]
    Grid { path: PathBuf, source: GridError },
    #[error("scenario {}: {source}", path.display())]
    Scenario {
        path: PathBuf,
        source: ScenarioError,
    },
    #[error("failed to write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

impl BatchError {
    /// Whether the error was found before any simulation ran.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Self::Write { .. } | Self::Pool(_))
    }
}

/// Per-scenario failure inside a batch.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub grid: PathBuf,
    pub scenarios: Vec<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Overrides every scenario's seed when present.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunManifest {
    /// Read a manifest; relative paths resolve against its directory.
    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, BatchError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| BatchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut m: Self = toml::from_str(&text).map_err(|e| BatchError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut m.grid);
        m.scenarios.iter_mut().for_each(fix);
        if let Some(p) = m.output_dir.as_mut() {
            fix(p);
        }
        Ok(m)
    }
}

/// Everything needed to run, checked up front.
#[derive(Debug, Clone)]
pub struct PreparedBatch {
    pub model: GridModel,
    pub scenarios: Vec<Scenario>,
    pub output_dir: PathBuf,
    pub jobs: usize,
}

/// Load and validate the grid and every scenario without simulating.
pub fn prepare(manifest: &RunManifest) -> Result<PreparedBatch, BatchError> {
    if manifest.scenarios.is_empty() {
        return Err(BatchError::NoScenarios);
    }
    let jobs = manifest.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    if jobs == 0 {
        return Err(BatchError::ZeroJobs);
    }
    let model = load_grid_file(&manifest.grid).map_err(|source| BatchError::Grid {
        path: manifest.grid.clone(),
        source,
    })?;
    let mut scenarios = Vec::with_capacity(manifest.scenarios.len());
    let mut names = BTreeMap::new();
    for path in &manifest.scenarios {
        let wrap = |source| BatchError::Scenario {
            path: path.clone(),
            source,
        };
        let mut sc = Scenario::load_file(path).map_err(wrap)?;
        if let Some(seed) = manifest.seed {
            sc.seed = seed;
        }
        sc.validate(&model).map_err(wrap)?;
        if names.insert(sc.name.clone(), ()).is_some() {
            return Err(BatchError::DuplicateName(sc.name));
        }
        scenarios.push(sc);
    }
    Ok(PreparedBatch {
        model,
        scenarios,
        output_dir: manifest
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        jobs,
    })
}

#[derive(Debug)]
pub struct ScenarioOutcome {
    pub scenario: Scenario,
    pub result: Result<(Metrics, ExportPaths), RunError>,
}

#[derive(Debug)]
pub struct BatchReport {
    pub outcomes: Vec<ScenarioOutcome>,
    /// Case A / case B pairs sharing a group, keyed by group.
    pub comparisons: BTreeMap<String, Comparison>,
    pub summary_text: String,
}

impl BatchReport {
    pub fn failures(&self) -> impl Iterator<Item = (&str, &RunError)> {
        self.outcomes.iter().filter_map(|o| match &o.result {
            Err(e) => Some((o.scenario.name.as_str(), e)),
            Ok(_) => None,
        })
    }
}

fn case_label(c: CaseMode) -> &'static str {
    match c {
        CaseMode::A => "A",
        CaseMode::B => "B",
    }
}

fn run_one(
    model: &GridModel,
    sc: &Scenario,
    out: &Path,
) -> Result<(Metrics, ExportPaths), RunError> {
    let r = run_scenario(model, sc)?;
    let m = compute_metrics(&r.trajectory)?;
    let paths = export_results(&sc.name, &r.trajectory, &m, &r.events, &out.join(&sc.name))?;
    log::info!(
        "{}: R_ls {:.3}, T_ls {:.1} s, EENS {:.3} MWh",
        sc.name,
        m.r_ls,
        m.t_ls_s,
        m.eens_mwh
    );
    Ok((m, paths))
}

/// Pair case A and B metrics by group.
pub fn pair_by_group(rows: &[SummaryRow]) -> BTreeMap<String, Comparison> {
    let mut a = BTreeMap::new();
    let mut b = BTreeMap::new();
    for r in rows {
        if let Some(g) = &r.group {
            match r.case.as_str() {
                "A" => a.insert(g.clone(), &r.metrics),
                _ => b.insert(g.clone(), &r.metrics),
            };
        }
    }
    a.into_iter()
        .filter_map(|(g, ma)| b.get(&g).map(|mb| (g, compare_cases(ma, mb))))
        .collect()
}

/// Run every scenario on a bounded pool and write the combined summary.
pub fn run_batch(batch: &PreparedBatch) -> Result<BatchReport, BatchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(batch.jobs)
        .build()
        .map_err(|e| BatchError::Pool(e.to_string()))?;
    let results: Vec<_> = pool.install(|| {
        batch
            .scenarios
            .par_iter()
            .map(|sc| run_one(&batch.model, sc, &batch.output_dir))
            .collect()
    });
    let outcomes: Vec<ScenarioOutcome> = batch
        .scenarios
        .iter()
        .cloned()
        .zip(results)
        .map(|(scenario, result)| ScenarioOutcome { scenario, result })
        .collect();

    let rows: Vec<SummaryRow> = outcomes
        .iter()
        .filter_map(|o| {
            o.result.as_ref().ok().map(|(m, _)| SummaryRow {
                scenario: o.scenario.name.clone(),
                group: o.scenario.group.clone(),
                case: case_label(o.scenario.case).to_string(),
                metrics: m.clone(),
            })
        })
        .collect();
    let comparisons = pair_by_group(&rows);

    let mut text = render_summary(&rows);
    let mut csv = String::from("scenario,group,case,r_ls,t_ls_s,eens_mwh\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.scenario,
            r.group.as_deref().unwrap_or(""),
            r.case,
            r.metrics.r_ls,
            r.metrics.t_ls_s,
            r.metrics.eens_mwh
        ));
    }
    let mut cmp_csv = format!("{}\n", Comparison::csv_header());
    for (g, c) in &comparisons {
        text.push('\n');
        text.push_str(&c.render_text(g));
        cmp_csv.push_str(&c.csv_row(g));
        cmp_csv.push('\n');
    }
    for o in &outcomes {
        if let Err(e) = &o.result {
            text.push_str(&format!("\nFAILED {}: {e}\n", o.scenario.name));
        }
    }

    let write = |name: &str, body: &str| {
        let path = batch.output_dir.join(name);
        fs::create_dir_all(&batch.output_dir)
            .and_then(|_| fs::write(&path, body))
            .map_err(|source| BatchError::Write { path, source })
    };
    write("summary.txt", &text)?;
    write("summary.csv", &csv)?;
    write("comparison.csv", &cmp_csv)?;

    Ok(BatchReport {
        outcomes,
        comparisons,
        summary_text: text,
    })
}
