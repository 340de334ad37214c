use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cocd::harness::{
    budget_error_study, compare_budget_matched, load_config, run_experiment, sweep, verify_suite, DataSpec,
    ExperimentConfig, ObjectiveSpec, SweepAxis, CSV_HEADER,
};
use cocd::Error;

#[derive(Parser)]
#[command(name = "cocd", version, about = "Zeroth-order optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output CSV path (sweeps and studies derive one file per run from it).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Verification cadence in steps; 0 disables it.
    #[arg(long, global = true)]
    verify_every: Option<u64>,

    /// Treat the first line of a CSV dataset as a header.
    #[arg(long, global = true)]
    header: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run { config: PathBuf },
    /// Vary one optimizer knob.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Budget-matched comparison of several methods.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Mean staleness error against the compute budget.
    BoundCheck {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        budgets: Vec<usize>,
    },
    /// Built-in invariant checks.
    Verify,
    /// Print the metrics CSV header.
    Header,
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Evaluation { .. } | Error::NonFinite { .. } | Error::Unstable(_) | Error::Io { .. } => {
                Failure::Runtime(e)
            }
            _ => Failure::Config(e),
        }
    }
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig, Failure> {
    let mut c = load_config(path).map_err(Failure::Config)?;
    if let Some(seed) = cli.seed {
        c.seed = seed;
    }
    if let Some(k) = cli.verify_every {
        c.verify_every = k;
    }
    if cli.out.is_some() {
        c.output = cli.out.clone();
    }
    if cli.header {
        if let ObjectiveSpec::Mlp {
            data: DataSpec::Csv { header, .. },
            ..
        } = &mut c.objective
        {
            *header = true;
        }
    }
    c.resolve().map_err(Failure::Config)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { config } => {
            let c = load(cli, config)?;
            eprint!("{}", c.echo());
            let r = run_experiment(&c)?;
            println!(
                "steps={} final_loss={:?} validation_loss={:?} queries={} oracle_queries={} wall_time={:.3}s",
                r.steps(),
                r.final_train_loss.unwrap_or(f64::NAN),
                r.final_validation_loss.unwrap_or(f64::NAN),
                r.ledger.queries,
                r.ledger.oracle_queries,
                r.wall_time_secs
            );
        }
        Command::Sweep { config, axis, values } => {
            let c = load(cli, config)?;
            let axis: SweepAxis = axis.parse()?;
            let s = sweep(&c, axis, values)?;
            for (label, r) in s.labels().iter().zip(&s.records) {
                println!("{label}: final_loss={:?}", r.final_train_loss.unwrap_or(f64::NAN));
            }
            if let Some(out) = &c.output {
                s.write_csv(&out.with_file_name(format!("sweep_{}.csv", axis.name())))?;
            }
        }
        Command::Compare { configs } => {
            let cs = configs.iter().map(|p| load(cli, p)).collect::<Result<Vec<_>, _>>()?;
            let mut cs = cs;
            for c in &mut cs {
                c.output = None;
            }
            let cmp = compare_budget_matched(&cs)?;
            println!("queries per step: {}", cmp.queries_per_step);
            for (label, r) in cmp.labels.iter().zip(&cmp.records) {
                println!("{label}: final_loss={:?}", r.final_train_loss.unwrap_or(f64::NAN));
            }
            if let Some(out) = &cli.out {
                cmp.write_csv(out)?;
            }
        }
        Command::BoundCheck { config, budgets } => {
            let c = load(cli, config)?;
            let study = budget_error_study(&c, budgets)?;
            for p in &study.points {
                println!(
                    "B={} log2B={} mean_error={:?}{}",
                    p.budget,
                    p.log2_budget,
                    p.mean_error,
                    if p.fitted { "" } else { " (excluded from fit)" }
                );
            }
            println!("slope={:?} intercept={:?} r2={:?}", study.slope, study.intercept, study.r_squared);
            if let Some(out) = &c.output {
                study.write_csv(&out.with_file_name("bound_check.csv"))?;
            }
        }
        Command::Verify => {
            let checks = verify_suite();
            let mut failed = 0;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(Failure::Runtime(Error::Precondition(format!("{failed} checks failed"))));
            }
        }
        Command::Header => println!("{CSV_HEADER}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
