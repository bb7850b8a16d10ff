//! `snls`: run simulations, ensembles and verification suites from JSON configs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use snls_core::config::{Scheme, SimConfig};
use snls_core::exponents::parse_rational;
use snls_core::io::{self, RunWriter};
use snls_core::montecarlo::{self, chebyshev_check};
use snls_core::solver::Problem;
use snls_core::verify;
use snls_core::Error;

#[derive(Parser)]
#[command(name = "snls", version, about = "Stochastic NLS simulator with nonlinear multiplicative noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the exponent bookkeeping for one (d, α, γ) or a CSV table of them.
    Exponents {
        #[arg(long)]
        d: Option<u32>,
        /// Rational, e.g. `7/3`.
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long)]
        gamma: Option<String>,
        /// CSV with columns d,alpha,gamma.
        #[arg(long, conflicts_with_all = ["d", "alpha", "gamma"])]
        table: Option<PathBuf>,
    },
    /// Solve a single path.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        path_index: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write plot.svg.
        #[arg(long)]
        plot: bool,
    },
    /// Monte Carlo over paths, optionally sweeping truncation levels.
    Ensemble {
        config: PathBuf,
        #[arg(long)]
        paths: usize,
        /// Comma-separated truncation levels, e.g. `4,8,16`.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plot: bool,
    },
    /// Run a built-in verification suite.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        /// Write the JSON report here as well.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoContraction { .. } | Error::MaxItersExceeded { .. } => 3,
        Error::Io(_) => 4,
        _ => 2,
    }
}

fn report_error(e: &Error) -> ExitCode {
    let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    eprintln!("{body}");
    ExitCode::from(exit_code(e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => report_error(&e),
    }
}

fn load(path: &Path, seed: Option<u64>) -> snls_core::Result<SimConfig> {
    let mut config = SimConfig::load(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn run(command: Command) -> snls_core::Result<ExitCode> {
    match command {
        Command::Exponents { d, alpha, gamma, table } => {
            let cases = match (table, d, alpha, gamma) {
                (Some(path), ..) => io::parse_exponent_table(&std::fs::read_to_string(path)?)?,
                (None, Some(d), Some(a), Some(g)) => vec![(d, parse_rational(&a)?, parse_rational(&g)?)],
                _ => return Err(Error::Config("give either --table or all of --d, --alpha, --gamma".into())),
            };
            let rows = cases
                .into_iter()
                .map(|(d, a, g)| io::exponent_row(d, a, g))
                .collect::<snls_core::Result<Vec<_>>>()?;
            let csv = io::exponent_table_csv(&rows)?;
            print!("{}", String::from_utf8_lossy(&csv));
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { config, scheme, seed, path_index, out, plot } => {
            let mut config = load(&config, seed)?;
            if let Some(s) = scheme {
                config.scheme = s;
            }
            let problem = Problem::new(&config)?;
            let path = problem.sample_path(path_index)?;
            let report = problem.solve(&path, true)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let mut writer = RunWriter::create(&out)?;
            writer.write("trajectory.csv", &io::trajectory_csv(&report.trajectory)?)?;
            writer.write("report.json", &io::report_json(&report, &config, path_index)?)?;
            if plot {
                writer.write("plot.svg", io::trajectory_svg(&report.trajectory, "mass and Z").as_bytes())?;
            }
            writer.finish("simulate", &config)?;
            println!("tau = {}  final mass = {:.12e}", report.tau, report.trajectory.running_mass().last().unwrap());
            Ok(ExitCode::SUCCESS)
        }
        Command::Ensemble { config, paths, levels, seed, out, plot } => {
            let config = load(&config, seed)?;
            if paths == 0 {
                return Err(Error::Config("--paths must be positive".into()));
            }
            let mut writer = RunWriter::create(&out)?;
            if levels.is_empty() {
                let summary = montecarlo::run_ensemble(&config, paths, config.seed)?;
                let mut text = serde_json::to_vec_pretty(&summary)?;
                text.push(b'\n');
                writer.write("summary.json", &text)?;
                println!(
                    "E|u|_Y = {:.6e} ± {:.1e}  P(tau = T) = {:.3}  failures = {}",
                    summary.mean_yt_norm.mean,
                    summary.mean_yt_norm.stderr,
                    summary.tau_equals_t_frequency.mean,
                    summary.failures.len()
                );
            } else {
                let table = montecarlo::truncation_uniformity_study(&config, &levels, paths, config.seed)?;
                let chebyshev = chebyshev_check(table.summaries.last().expect("levels non-empty"), &levels);
                let body = serde_json::json!({ "uniformity": table, "chebyshev": chebyshev });
                let mut text = serde_json::to_vec_pretty(&body)?;
                text.push(b'\n');
                writer.write("summary.json", &text)?;
                writer.write("levels.csv", &io::uniformity_csv(&table)?)?;
                if plot {
                    writer.write("levels.svg", io::uniformity_svg(&table).as_bytes())?;
                }
                for r in &table.rows {
                    println!(
                        "n = {}  E|u_n|_Y = {:.6e} ± {:.1e}  P(tau_n = T) = {:.3}",
                        r.level, r.mean_yt_norm.mean, r.mean_yt_norm.stderr, r.tau_equals_t_frequency.mean
                    );
                }
                println!("max/min = {:.4}", table.max_min_ratio);
            }
            writer.finish("ensemble", &config)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { suite, json } => {
            let reports = verify::run_suite(&suite)?;
            for r in &reports {
                for c in &r.checks {
                    println!("[{}] {} {}: {}", if c.passed { "PASS" } else { "FAIL" }, r.suite, c.name, c.detail);
                }
            }
            if let Some(path) = json {
                let mut text = serde_json::to_vec_pretty(&reports)?;
                text.push(b'\n');
                std::fs::write(path, text)?;
            }
            Ok(if reports.iter().all(|r| r.passed) { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
