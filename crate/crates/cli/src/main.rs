use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use darcy_rb::estimators::EstimatorKind;
use darcy_rb_cli::commands::{self, OfflineArgs};
use darcy_rb_cli::params::PointSource;
use darcy_rb_cli::{report, CliError};

#[derive(Parser)]
#[command(name = "darcy-rb", version, about = "Certified reduced-basis pipeline for compressible Darcy flow")]
struct Cli {
    /// Worker threads for per-parameter work (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Points {
    /// Parameter `kappa1,kappa2` in m²; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    xi: Vec<String>,
    /// CSV with `kappa1` and `kappa2` columns.
    #[arg(long)]
    xi_file: Option<PathBuf>,
    /// Log-spaced `n × n` grid over the parameter box.
    #[arg(long)]
    grid: Option<usize>,
}

impl Points {
    fn source(&self) -> PointSource {
        PointSource { xi: self.xi.clone(), xi_file: self.xi_file.clone(), grid: self.grid }
    }
}

fn parse_estimator(s: &str) -> Result<EstimatorKind, String> {
    EstimatorKind::parse(s)
        .ok_or_else(|| format!("unknown estimator {s:?}; expected one of {}", EstimatorKind::ALL.map(|k| k.name()).join(", ")))
}

#[derive(Subcommand)]
enum Cmd {
    /// EIM, SCM and POD-greedy; writes the model archive and a per-round CSV.
    Offline {
        #[arg(long)]
        config: PathBuf,
        /// Archive path.
        #[arg(long)]
        out: PathBuf,
        /// Per-round CSV (default: `<out>.rounds.csv`).
        #[arg(long)]
        rounds: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long, value_parser = parse_estimator)]
        estimator: Option<EstimatorKind>,
        /// Also record the max true errors over the training set each round.
        #[arg(long)]
        track_errors: bool,
    },
    /// Certified reduced outputs; defaults to the archived test sample.
    Online {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        points: Points,
        /// Output time step (default: final step).
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Compares against high-fidelity solves; exit code 3 on any bound violation.
    Validate {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        points: Points,
    },
    /// Turns round logs and validation tables into `greedy_curves.csv` and `effectivity.csv`.
    Report {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    }
    match cli.cmd {
        Cmd::Offline { config, out, rounds, seed_override, estimator, track_errors } => {
            let s = commands::offline(&OfflineArgs { config, out: out.clone(), rounds, seed_override, estimator, track_errors })?;
            println!(
                "offline: N = {}, EIM terms {}, SCM points {}, {} rounds, N_pr = {}, N_du = {}, stop {}",
                s.n, s.eim_terms, s.scm_points, s.rounds, s.n_pr, s.n_du, s.stop
            );
            println!("wrote {} and {}", out.display(), s.rounds_csv.display());
        }
        Cmd::Online { archive, out, points, horizon } => {
            let n = commands::online(&archive, &points.source(), horizon, &out)?;
            println!("online: {n} evaluations written to {}", out.display());
        }
        Cmd::Validate { archive, out, points } => match commands::validate(&archive, &points.source(), &out) {
            Ok(s) => {
                let eff = s.max_eff_plain.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
                println!("validate: {} points, 0 violations, max plain-output effectivity {eff}; wrote {}", s.points, out.display());
            }
            Err(e @ CliError::Unreliable(_)) => {
                eprintln!("validate: wrote {}", out.display());
                return Err(e);
            }
            Err(e) => return Err(e),
        },
        Cmd::Report { out, inputs } => {
            let s = report::report(&inputs, &out)?;
            for p in s.curves.iter().chain(&s.effectivity) {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
