//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage/config/shape errors, 2 IO errors,
//! 3 numerical failures. Errors are printed as one `error: ...` line on
//! stderr.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use retinex_unfold::trace::write_trace;
use retinex_unfold::{
    parse_config, read_image, render_config, run_pipeline, tune_params_report, write_image, Error,
    IoSettings, MetricsReport, MultiChannelImage, OutputMode, SolverConfig,
};

pub const THREADS_ENV: &str = "UNFOLDIR_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "retinex-unfold", version, about = "Retinex restoration of poorly lit images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Restore an image.
    Enhance {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        trace_dir: Option<PathBuf>,
    },
    /// Write the final reflectance and illumination.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_reflectance: PathBuf,
        #[arg(long)]
        out_illumination: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Compare a restored image with its reference.
    Eval {
        #[arg(long)]
        restored: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Dump every stage of a run.
    Trace {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Tune solver weights on a set of images.
    Tune {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        config_in: Option<PathBuf>,
        #[arg(long)]
        config_out: PathBuf,
        #[arg(long, default_value_t = 40)]
        budget: usize,
    },
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long, value_parser = ["reflectance", "relit"])]
    output_mode: Option<String>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Solver(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Solver(e) => exit_code(e),
        }
    }

    fn message(&self) -> String {
        let raw = match self {
            Failure::Usage(m) => m.clone(),
            Failure::Solver(e) => e.to_string(),
        };
        raw.split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

/// Maps a solver error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig { .. } | Error::ShapeMismatch { .. } | Error::TooSmall(_) => EXIT_USAGE,
        Error::Image(_) => EXIT_IO,
        Error::Numerical { .. } | Error::NotConverged { .. } => EXIT_NUMERICAL,
    }
}

fn load_config(path: Option<&Path>) -> Result<(SolverConfig, IoSettings), Failure> {
    match path {
        None => Ok((SolverConfig::default(), IoSettings::default())),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Image(retinex_unfold::ImageIoError::Io(e)))?;
            Ok(parse_config(&text)?)
        }
    }
}

impl SolverArgs {
    fn resolve(&self) -> Result<(SolverConfig, IoSettings), Failure> {
        let (mut cfg, io) = load_config(self.config.as_deref())?;
        if let Some(k) = self.stages {
            cfg.stages = k;
        }
        if let Some(m) = &self.output_mode {
            cfg.output_mode = m.parse::<OutputMode>()?;
        }
        cfg.validate()?;
        Ok((cfg, io))
    }
}

fn pick(flag: Option<PathBuf>, from_config: Option<PathBuf>, name: &str) -> Result<PathBuf, Failure> {
    flag.or(from_config)
        .ok_or_else(|| Failure::Usage(format!("missing --{name} (or `{name}` in the config file)")))
}

fn log_run(res: &retinex_unfold::PipelineResult) {
    for t in &res.traces {
        log::info!(
            "stage {}: energy {:.6e}, cg iterations {:?}",
            t.stage_index,
            t.energy,
            t.cg_reports.iter().map(|r| r.iterations).collect::<Vec<_>>()
        );
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Enhance {
            input,
            output,
            solver,
            trace_dir,
        } => {
            let (cfg, io) = solver.resolve()?;
            let input = pick(input, io.input, "input")?;
            let output = pick(output, io.output, "output")?;
            let img = read_image(&input)?;
            let res = run_pipeline(&img, &cfg)?;
            log_run(&res);
            write_image(&res.output, &output)?;
            if let Some(dir) = trace_dir.or(io.trace_dir) {
                write_trace(&res, dir)?;
            }
        }
        Command::Decompose {
            input,
            out_reflectance,
            out_illumination,
            solver,
        } => {
            let (cfg, _) = solver.resolve()?;
            let img = read_image(&input)?;
            let res = run_pipeline(&img, &cfg)?;
            log_run(&res);
            write_image(&res.final_pair.reflectance, &out_reflectance)?;
            write_image(&MultiChannelImage::from(res.final_pair.illumination.clone()), &out_illumination)?;
        }
        Command::Eval {
            restored,
            reference,
        } => {
            let start = Instant::now();
            let a = read_image(&restored)?;
            let b = read_image(&reference)?;
            let mut report = MetricsReport::compare(&a, &b)?;
            report.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
            print!("{}", report.render());
        }
        Command::Trace {
            input,
            trace_dir,
            solver,
        } => {
            let (cfg, io) = solver.resolve()?;
            let input = pick(input, io.input, "input")?;
            let dir = pick(trace_dir, io.trace_dir, "trace_dir")?;
            let img = read_image(&input)?;
            let res = run_pipeline(&img, &cfg)?;
            log_run(&res);
            write_trace(&res, dir)?;
        }
        Command::Tune {
            inputs,
            config_in,
            config_out,
            budget,
        } => {
            let (cfg, _) = load_config(config_in.as_deref())?;
            let images = inputs.iter().map(read_image).collect::<Result<Vec<_>, _>>()?;
            let outcome = tune_params_report(&images, &cfg, budget)?;
            log::info!(
                "tune: objective {:.6e} -> {:.6e} in {} evaluations",
                outcome.initial_objective,
                outcome.objective,
                outcome.evaluations
            );
            std::fs::write(&config_out, render_config(&outcome.config))
                .map_err(|e| Error::Image(retinex_unfold::ImageIoError::Io(e)))?;
            println!(
                "objective_initial={:.12e}\nobjective={:.12e}\nevaluations={}",
                outcome.initial_objective, outcome.objective, outcome.evaluations
            );
        }
    }
    Ok(())
}

fn configure_threads() -> Result<(), Failure> {
    let Some(raw) = std::env::var_os(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .to_str()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV} must be a non-negative integer")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `argv` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let first = e.to_string().lines().next().unwrap_or("usage error").to_string();
            eprintln!("{}", first.trim());
            return EXIT_USAGE;
        }
    };
    match configure_threads().and_then(|_| execute(cli)) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}
