use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use covcurrents::cli::{self, ManifoldSpec, RunOptions};
use covcurrents::Mode;

#[derive(Parser)]
#[command(name = "covcurrents", version, about = "Verification suites for higher covariant derivatives and point-supported currents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rational,
    Float,
}

#[derive(Subcommand)]
enum Command {
    /// Run a suite over the probe points of a spec file.
    Run {
        spec: PathBuf,
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = 1)]
        degree: usize,
        #[arg(long, value_enum, default_value = "float")]
        mode: ModeArg,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON report path; a CSV summary is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// List suite names, descriptions and anchors.
    ListSuites,
    /// Print a spec for a random polynomial metric with unit determinant.
    Generate {
        #[arg(long, default_value_t = 2)]
        dimension: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        degree: usize,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match args.command {
        Command::ListSuites => {
            print!("{}", cli::suite_listing());
            ExitCode::SUCCESS
        }
        Command::Generate { dimension, seed, degree } => {
            print!("{}", cli::random_metric_spec(dimension, seed, degree));
            ExitCode::SUCCESS
        }
        Command::Run {
            spec,
            suite,
            order,
            degree,
            mode,
            tol,
            seed,
            out,
            jobs,
        } => {
            let parsed = match ManifoldSpec::load(&spec) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(cli::error_exit_code(&e) as u8);
                }
            };
            let opts = RunOptions {
                suite,
                order,
                degree,
                mode: match mode {
                    ModeArg::Rational => Mode::Rational,
                    ModeArg::Float => Mode::Float,
                },
                tol,
                seed,
                jobs,
            };
            let label = spec.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let report = match cli::run(&parsed, &label, &opts) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(3);
                }
            };
            match &out {
                Some(path) => {
                    let written = std::fs::write(path, report.to_json())
                        .and_then(|_| std::fs::write(path.with_extension("csv"), report.to_csv()));
                    if let Err(e) = written {
                        eprintln!("error: {}: {e}", path.display());
                        return ExitCode::from(3);
                    }
                }
                None => print!("{}", report.to_json()),
            }
            for c in report.checks.iter().filter(|c| matches!(c.status, cli::Status::Fail | cli::Status::Error)) {
                eprintln!(
                    "{:?} {} {} at {:?}: residual {:?} {}",
                    c.status,
                    c.suite,
                    c.id,
                    c.probe,
                    c.residual,
                    c.message.as_deref().unwrap_or("")
                );
            }
            let s = &report.summary;
            eprintln!(
                "{}: {} checks, {} passed, {} failed, {} skipped, {} errors",
                report.suite, s.total, s.passed, s.failed, s.skipped, s.errors
            );
            ExitCode::from(report.exit_code() as u8)
        }
    }
}
