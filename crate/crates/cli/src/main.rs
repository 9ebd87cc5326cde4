use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isofuse_cli::commands::{self, side_path, Family, Format, ModelArgs, StudyArgs, Weighting};
use isofuse_cli::{ingest_csv, CliError};

/// Joint monotone regression of several groups with test-driven borrowing.
#[derive(Parser)]
#[command(name = "isofuse", version, about)]
struct Cli {
    /// Worker threads for the pairwise tests and replications
    /// (falls back to ISOFUSE_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,

    /// Output file; stdout when absent.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit every group jointly from a CSV file.
    Fit {
        input: PathBuf,
        #[command(flatten)]
        model: ModelOpts,
        /// Also fit each group decreasing and report both residual sums.
        #[arg(long)]
        check_monotone_fit: bool,
    },
    /// Test whether two groups agree at one design point.
    Test {
        input: PathBuf,
        #[arg(long, num_args = 2, value_names = ["A", "B"], required = true)]
        groups: Vec<String>,
        /// Coordinates of the point, comma separated.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        point: Vec<f64>,
        #[command(flatten)]
        model: ModelOpts,
    },
    /// Run a simulation study.
    Simulate {
        study: String,
        #[command(flatten)]
        opts: StudyOpts,
    },
    /// Run an LR quantile study.
    Quantiles {
        study: String,
        #[command(flatten)]
        opts: StudyOpts,
    },
}

#[derive(Args)]
struct ModelOpts {
    #[arg(long, value_enum, default_value = "gaussian")]
    family: Family,
    /// Known Gaussian variance; estimated per group when absent.
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_sweeps: usize,
    /// Cap every borrowing weight at 1/(K-1).
    #[arg(long)]
    cap_weights: bool,
    /// Data weights of binomial rows in the joint fit.
    #[arg(long, value_enum, default_value = "trials")]
    binomial_weighting: Weighting,
}

#[derive(Args)]
struct StudyOpts {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Reduced replication counts.
    #[arg(long)]
    fast: bool,
    #[arg(long)]
    cap_weights: bool,
    /// Skip the reversed-order refit of every replication.
    #[arg(long)]
    skip_order_check: bool,
}

impl From<ModelOpts> for ModelArgs {
    fn from(o: ModelOpts) -> Self {
        ModelArgs {
            family: o.family,
            sigma2: o.sigma2,
            alpha: o.alpha,
            tol: o.tol,
            max_sweeps: o.max_sweeps,
            cap_weights: o.cap_weights,
            weighting: o.binomial_weighting,
        }
    }
}

impl From<StudyOpts> for StudyArgs {
    fn from(o: StudyOpts) -> Self {
        StudyArgs {
            n: o.n,
            alpha: o.alpha,
            reps: o.reps,
            seed: o.seed,
            fast: o.fast,
            cap_weights: o.cap_weights,
            skip_order_check: o.skip_order_check,
        }
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    let threads = match threads {
        Some(t) => Some(t),
        None => match std::env::var("ISOFUSE_THREADS") {
            Ok(v) => Some(v.parse().map_err(|_| CliError::Config(format!("ISOFUSE_THREADS='{v}' is not a number")))?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8, CliError> {
    configure_threads(cli.threads)?;
    let out = cli.output.as_deref();
    match cli.command {
        Command::Fit { input, model, check_monotone_fit } => {
            let data = ingest_csv(&input)?;
            let report = commands::fit(&data, &model.into(), check_monotone_fit)?;
            match cli.format {
                Format::Json => emit(out, &report.to_json())?,
                Format::Csv => emit(out, &report.values_csv())?,
            }
            if let Some(main) = out {
                std::fs::write(side_path(main, "weights.csv"), report.weights_csv())?;
                std::fs::write(side_path(main, "lr.csv"), report.lr_csv())?;
                if let Some(steps) = report.steps_csv() {
                    std::fs::write(side_path(main, "steps.csv"), steps)?;
                }
            }
            if let Some(checks) = &report.monotone_check {
                for c in checks {
                    eprintln!(
                        "group {}: increasing fit RSS {:.6}, decreasing fit RSS {:.6}{}",
                        c.group,
                        c.rss_increasing,
                        c.rss_decreasing,
                        if c.rss_decreasing < c.rss_increasing { " (data look decreasing; negate the covariates)" } else { "" }
                    );
                }
            }
            if !report.converged {
                eprintln!("warning: no convergence after {} sweeps (last change {:e})", report.sweeps, report.last_change);
                return Ok(3);
            }
        }
        Command::Test { input, groups, point, model } => {
            let data = ingest_csv(&input)?;
            let report = commands::test(&data, &model.into(), &groups[0], &groups[1], &point)?;
            match cli.format {
                Format::Json => emit(out, &report.to_json())?,
                Format::Csv => emit(out, &report.to_csv())?,
            }
        }
        Command::Simulate { study, opts } => {
            let report = commands::simulate(&study, &opts.into())?;
            emit(out, &if cli.format == Format::Json { report.to_json() } else { report.to_csv() })?;
        }
        Command::Quantiles { study, opts } => {
            let report = commands::quantiles(&study, &opts.into())?;
            emit(out, &if cli.format == Format::Json { report.to_json() } else { report.to_csv() })?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
