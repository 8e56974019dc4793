use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mfdyn::error::Error;
use mfdyn::io::{self, ConfigDocument, Format, Table};
use mfdyn::pipeline::{self, RunOptions, Stage};
use mfdyn::tolerances::Tolerances;

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "mfdyn", version, about = "Mean-field dissipative chain dynamics: macroscopic, quasi-local and fluctuation flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model (or the model of a run configuration) for consistency.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run pipeline stages and write their artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// comma-separated subset of macro,quasilocal,meso,hybrid,oracle,example, or "all"
        #[arg(long, default_value = "macro")]
        stages: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        tol_ode: Option<f64>,
        #[arg(long)]
        tol_rank: Option<f64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Compare two tables column by column.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        /// compare only the columns present in both files
        #[arg(long)]
        common: bool,
        /// report defects without a pass/fail verdict
        #[arg(long)]
        informational: bool,
    },
    /// Write the reference qubit configuration and run every stage on it.
    Example {
        #[arg(long, default_value = "example-out")]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::InvalidDimension(_) | Error::InvalidModel(_) | Error::InvalidState(_) | Error::Schema(_) | Error::Parse(_) => {
            EXIT_VALIDATION
        }
        _ => EXIT_NUMERICAL,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e))
}

fn validate(config: PathBuf) -> ExitCode {
    let (spec, tol) = match io::load_any(&config) {
        Ok(ConfigDocument::Model(s)) => (s, Tolerances::default()),
        Ok(ConfigDocument::Run(c, s)) => (s, c.tolerances),
        Err(e) => return fail(&e),
    };
    let outcome = pipeline::validate(&spec, &tol);
    println!("{}", serde_json::to_string_pretty(&outcome).unwrap_or_default());
    if outcome.passed {
        println!("validation passed");
        ExitCode::SUCCESS
    } else {
        for v in &outcome.violations {
            eprintln!("violation: {v}");
        }
        ExitCode::from(EXIT_VALIDATION)
    }
}

fn run_stages(mut cfg: io::RunConfig, spec: mfdyn::algebra::ModelSpec, opts: RunOptions) -> ExitCode {
    let check = pipeline::validate(&spec, &cfg.tolerances);
    if !check.passed {
        for v in &check.violations {
            eprintln!("violation: {v}");
        }
        return ExitCode::from(EXIT_VALIDATION);
    }
    cfg.output.dir = opts.out_dir.clone();
    match pipeline::run(&cfg, spec, &opts) {
        Ok(summary) => {
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e.error))
        }
    }
}

fn compare(a: PathBuf, b: PathBuf, tolerance: f64, common: bool, informational: bool) -> ExitCode {
    let ta = match Table::read(&a) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    let tb = match Table::read(&b) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    let rep = match io::compare_tables(&ta, &tb, common) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    println!("rows compared: {}", rep.rows_compared);
    for (c, d) in &rep.per_column {
        println!("{c}: {}", io::fmt_f64(*d));
    }
    println!("max defect: {}", io::fmt_f64(rep.max_defect));
    if informational {
        return ExitCode::SUCCESS;
    }
    if rep.max_defect <= tolerance {
        println!("PASS (tolerance {})", io::fmt_f64(tolerance));
        ExitCode::SUCCESS
    } else {
        println!("FAIL (tolerance {})", io::fmt_f64(tolerance));
        ExitCode::from(EXIT_VALIDATION)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_VALIDATION) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Validate { config } => validate(config),
        Command::Run { config, stages, out, format, tol_ode, tol_rank, workers } => {
            let (mut cfg, spec) = match io::load_run_config(&config) {
                Ok(x) => x,
                Err(e) => return fail(&e),
            };
            let parsed = Stage::parse_list(&stages).and_then(|s| {
                let f = format.as_deref().map(Format::parse).transpose()?;
                Ok((s, f))
            });
            let (stages, format) = match parsed {
                Ok(x) => x,
                Err(e) => return fail(&e),
            };
            if let Some(t) = tol_ode {
                cfg.tolerances.ode_rtol = t;
                cfg.tolerances.ode_atol = t * 1e-2;
            }
            if let Some(t) = tol_rank {
                cfg.tolerances.rank = t;
            }
            if let Err(e) = cfg.tolerances.check() {
                return fail(&Error::Schema(e));
            }
            let opts = RunOptions {
                stages,
                out_dir: out.unwrap_or_else(|| cfg.output.dir.clone()),
                format: format.unwrap_or(cfg.output.format),
                workers,
            };
            run_stages(cfg, spec, opts)
        }
        Command::Compare { a, b, tolerance, common, informational } => compare(a, b, tolerance, common, informational),
        Command::Example { out, format, workers } => {
            let format = match Format::parse(&format) {
                Ok(f) => f,
                Err(e) => return fail(&e),
            };
            let (path, _) = match pipeline::write_example_config(&out, format) {
                Ok(x) => x,
                Err(e) => return fail(&e),
            };
            let (cfg, spec) = match io::load_run_config(&path) {
                Ok(x) => x,
                Err(e) => return fail(&e),
            };
            println!("wrote {}", path.display());
            let opts = RunOptions { stages: Stage::ALL.to_vec(), out_dir: out, format, workers };
            run_stages(cfg, spec, opts)
        }
    }
}
