//! Experiment runner: generate instances, run solvers (optionally against
//! the exact oracles), and emit CSV rows plus solution artifacts.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lecam::instance::{
    generate_instance, run_batch, Family, InstanceFile, ParamsSpec, ProblemKind, CSV_HEADER,
};
use lecam::Error;

#[derive(Parser)]
#[command(name = "lecam", version, about = "Stochastic combinatorial optimization solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Instance file(s); several run as a batch on the worker pool
    /// (LECAM_WORKERS).
    #[arg(long, required = true, num_args = 1..)]
    instance: Vec<PathBuf>,
    /// Also run the exact oracle and report the gap.
    #[arg(long)]
    oracle: bool,
    /// Override the Monte Carlo sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Override the instance seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for per-run CSV and solution artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file with a full parameter block overriding the embedded one.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic instance file.
    Generate {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "grid-bernoulli")]
        family: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run instances, dispatching on their embedded kind.
    Run(RunArgs),
    /// Run instances, requiring the given kind.
    Eum(RunArgs),
    Sbp(RunArgs),
    Sk(RunArgs),
    Gensk(RunArgs),
    Bosp(RunArgs),
    Sku(RunArgs),
    /// Run only the oracle side of each instance.
    Oracle(RunArgs),
}

fn parse_kind(s: &str) -> Result<ProblemKind, Error> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::Schema(format!("unknown kind {s:?}")))
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Infeasible(_) => ExitCode::from(2),
        Error::ResourceCap { .. } => ExitCode::from(3),
        Error::Schema(_) => ExitCode::from(4),
        _ => ExitCode::from(1),
    }
}

fn load_instances(args: &RunArgs, expect: Option<ProblemKind>) -> Result<Vec<InstanceFile>, Error> {
    let mut instances = Vec::new();
    for path in &args.instance {
        let mut inst = InstanceFile::load(path)?;
        if let Some(kind) = expect {
            if inst.kind != kind {
                return Err(Error::Schema(format!(
                    "instance {} has kind {}, expected {}",
                    inst.id, inst.kind, kind
                )));
            }
        }
        if let Some(params_path) = &args.params {
            let text = std::fs::read_to_string(params_path)?;
            let params: ParamsSpec =
                serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
            inst.params = params;
        }
        if let Some(samples) = args.samples {
            inst.params.mc_samples = samples;
        }
        if let Some(seed) = args.seed {
            inst.seed = seed;
        }
        instances.push(inst);
    }
    Ok(instances)
}

fn run_command(args: &RunArgs, expect: Option<ProblemKind>, with_oracle: bool) -> ExitCode {
    let instances = match load_instances(args, expect) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let results = run_batch(&instances, with_oracle, args.out.as_deref());
    println!("{CSV_HEADER}");
    let mut code = ExitCode::SUCCESS;
    for res in results {
        match res {
            Ok(outcome) => println!("{}", outcome.report.csv_line()),
            Err(e) => {
                eprintln!("error: {e}");
                code = exit_code_for(&e);
            }
        }
    }
    code
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            kind,
            n,
            family,
            seed,
            out,
        } => {
            let kind = match parse_kind(&kind) {
                Ok(k) => k,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit_code_for(&e);
                }
            };
            let family: Family = match family.parse() {
                Ok(f) => f,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit_code_for(&e);
                }
            };
            let inst = generate_instance(kind, n, family, seed);
            let json = inst.to_json();
            match out {
                Some(path) => {
                    if let Err(e) = lecam::instance::write_atomic(&path, &json) {
                        eprintln!("error: {e}");
                        return exit_code_for(&e);
                    }
                }
                None => println!("{json}"),
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => run_command(&args, None, args.oracle),
        Command::Eum(args) => run_command(&args, Some(ProblemKind::Eum), args.oracle),
        Command::Sbp(args) => run_command(&args, Some(ProblemKind::Sbp), args.oracle),
        Command::Sk(args) => run_command(&args, Some(ProblemKind::Sk), args.oracle),
        Command::Gensk(args) => run_command(&args, Some(ProblemKind::Gensk), args.oracle),
        Command::Bosp(args) => run_command(&args, Some(ProblemKind::Bosp), args.oracle),
        Command::Sku(args) => run_command(&args, Some(ProblemKind::Sku), args.oracle),
        Command::Oracle(args) => run_command(&args, None, true),
    }
}
