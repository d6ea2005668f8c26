use std::fs;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use freqsim::batch::{prepare, run_batch, RunManifest};
use freqsim::grid::{load_grid_file, GridModel};
use freqsim::metrics::{compare_cases, read_metrics_file};
use freqsim::profile::{
    make_load_profile, read_minute_csv_file, resample, resample_wind, scale_wind, write_second_csv,
    MinuteSeries, MinuteWalk, NoiseParams,
};
use freqsim::rng::{stream_rng, Stream};
use freqsim::scenario::{build_profiles, Scenario};

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "freqsim",
    version,
    about = "Grid frequency simulation with dispatched-by-design buses"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a manifest and write artifacts plus a summary.
    Run {
        manifest: PathBuf,
        /// Output directory; overrides the manifest.
        #[arg(short, long, env = "FREQSIM_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        /// Worker threads; overrides the manifest.
        #[arg(short, long)]
        jobs: Option<usize>,
        /// Master seed applied to every scenario.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a manifest, or a grid config with optional scenarios, without running.
    Validate {
        #[arg(long, conflicts_with_all = ["grid", "scenario"])]
        manifest: Option<PathBuf>,
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        scenario: Vec<PathBuf>,
    },
    /// Write second-resolution profile CSVs.
    SynthProfiles(SynthArgs),
    /// Compare case A and case B metrics files.
    Compare {
        case_a: PathBuf,
        case_b: PathBuf,
        #[arg(long, default_value = "comparison")]
        label: String,
        /// Emit CSV instead of the text table.
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Wind,
    Load,
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Per-unit minute series CSV; without it a synthetic walk is used.
    #[arg(long, conflicts_with_all = ["grid", "scenario"])]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "wind")]
    kind: Kind,
    /// Forecast baseline (wind-farm rating or load forecast), MW.
    #[arg(long, default_value_t = 1.0)]
    rating_mw: f64,
    /// Standard deviation of each 1 s increment, p.u.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bus id used for the random stream and the column header.
    #[arg(long, default_value_t = 1)]
    bus: u32,
    /// Length of the synthetic minute series.
    #[arg(long, default_value_t = 11)]
    minutes: usize,
    /// Output file; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write every profile of a scenario instead (needs --scenario).
    #[arg(long, requires = "scenario")]
    grid: Option<PathBuf>,
    #[arg(long, requires = "grid")]
    scenario: Option<PathBuf>,
    /// Directory for per-bus files in scenario mode.
    #[arg(long, default_value = "profiles")]
    out_dir: PathBuf,
}

/// Error tagged with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn validation(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        error: error.into(),
    }
}

fn runtime(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        error: error.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            manifest,
            output_dir,
            jobs,
            seed,
        } => cmd_run(&manifest, output_dir, jobs, seed),
        Command::Validate {
            manifest,
            grid,
            scenario,
        } => cmd_validate(manifest, grid, &scenario).map_err(validation),
        Command::SynthProfiles(args) => cmd_synth(&args),
        Command::Compare {
            case_a,
            case_b,
            label,
            csv,
        } => cmd_compare(&case_a, &case_b, &label, csv).map_err(validation),
    }
}

fn cmd_run(
    path: &Path,
    output_dir: Option<PathBuf>,
    jobs: Option<usize>,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let mut manifest = RunManifest::load_file(path).map_err(validation)?;
    if output_dir.is_some() {
        manifest.output_dir = output_dir;
    }
    if jobs.is_some() {
        manifest.jobs = jobs;
    }
    if seed.is_some() {
        manifest.seed = seed;
    }
    let batch = prepare(&manifest).map_err(validation)?;
    let report = run_batch(&batch).map_err(runtime)?;
    print!("{}", report.summary_text);
    let failed: Vec<String> = report
        .failures()
        .map(|(n, e)| format!("{n}: {e}"))
        .collect();
    if !failed.is_empty() {
        return Err(runtime(anyhow::anyhow!(
            "{} scenario(s) failed: {}",
            failed.len(),
            failed.join("; ")
        )));
    }
    Ok(())
}

fn cmd_validate(
    manifest: Option<PathBuf>,
    grid: Option<PathBuf>,
    scenarios: &[PathBuf],
) -> Result<()> {
    if let Some(m) = manifest {
        let batch = prepare(&RunManifest::load_file(&m)?)?;
        println!(
            "ok: {} buses, {} scenarios",
            batch.model.buses.len(),
            batch.scenarios.len()
        );
        return Ok(());
    }
    let Some(grid) = grid else {
        bail!("pass --manifest or --grid");
    };
    let model = load_grid_file(&grid)?;
    for s in scenarios {
        Scenario::load_file(s)?
            .validate(&model)
            .with_context(|| format!("scenario {}", s.display()))?;
    }
    println!(
        "ok: {} buses, {} generators, {} scenarios",
        model.buses.len(),
        model.generators().count(),
        scenarios.len()
    );
    Ok(())
}

fn cmd_compare(a: &Path, b: &Path, label: &str, csv: bool) -> Result<()> {
    let ma = read_metrics_file(a)?;
    let mb = read_metrics_file(b)?;
    let c = compare_cases(&ma.metrics, &mb.metrics);
    if csv {
        println!("{}", freqsim::metrics::Comparison::csv_header());
        println!("{}", c.csv_row(label));
    } else {
        print!("{}", c.render_text(label));
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Failure> {
    if let (Some(grid), Some(scenario)) = (&args.grid, &args.scenario) {
        let model = load_grid_file(grid).map_err(validation)?;
        let sc = Scenario::load_file(scenario).map_err(validation)?;
        return write_scenario_profiles(&model, &sc, &args.out_dir).map_err(runtime);
    }
    let (upper, walk, stream, default_sigma) = match args.kind {
        Kind::Wind => (1.0, MinuteWalk::WIND, Stream::WindMinutes, 0.002),
        Kind::Load => (f64::INFINITY, MinuteWalk::LOAD, Stream::LoadMinutes, 0.001),
    };
    let minutes = match &args.input {
        Some(p) => read_minute_csv_file(p, upper).map_err(validation)?,
        None => {
            let mut rng = stream_rng(args.seed, stream, args.bus);
            MinuteSeries::bounded(walk.generate(args.minutes, &mut rng), upper)
                .map_err(validation)?
        }
    };
    let noise = NoiseParams {
        sigma: args.sigma.unwrap_or(default_sigma),
        seed: args.seed,
    };
    let bus = freqsim::grid::BusId(args.bus);
    let series = match args.kind {
        Kind::Wind => {
            resample_wind(&minutes, &noise).and_then(|u| scale_wind(&u.values, args.rating_mw, bus))
        }
        Kind::Load => resample(&minutes, &noise)
            .and_then(|u| make_load_profile(&u.values, args.rating_mw, bus)),
    }
    .map_err(validation)?;
    let header = format!(
        "{}_mw_bus{}",
        match args.kind {
            Kind::Wind => "wind",
            Kind::Load => "load",
        },
        args.bus
    );
    let written = match &args.output {
        Some(p) => fs::File::create(p)
            .and_then(|f| write_second_csv(&series.values_mw, &header, BufWriter::new(f)))
            .with_context(|| format!("writing {}", p.display())),
        None => write_second_csv(&series.values_mw, &header, io::stdout().lock())
            .context("writing to standard output"),
    };
    written.map_err(runtime)
}

fn write_scenario_profiles(model: &GridModel, sc: &Scenario, dir: &Path) -> Result<()> {
    sc.validate(model)?;
    let p = build_profiles(model, sc)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let write = |name: String, values: &[f64]| -> Result<()> {
        let path = dir.join(format!("{name}.csv"));
        let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_second_csv(values, &format!("{name}_mw"), BufWriter::new(f))
            .with_context(|| format!("writing {}", path.display()))
    };
    for s in &p.wind {
        write(format!("wind_bus{}", s.bus.0), &s.values_mw)?;
    }
    for s in &p.load {
        write(format!("load_bus{}", s.bus.0), &s.values_mw)?;
    }
    for (bus, b) in &p.battery {
        write(format!("battery_bus{}", bus.0), &b.realized_mw)?;
    }
    println!("profile digest {}", p.digest);
    Ok(())
}
