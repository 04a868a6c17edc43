//! `rdcss`: existence queries, spread tables, requirement-driven
//! construction, simulation and fraction ranking for two-level designs
//! with several stages of randomization.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rdcss_core::Error;

#[derive(Parser, Debug)]
#[command(name = "rdcss", version, about = "Disjoint randomization defining contrast subspaces")]
struct Cli {
    /// Worker threads; 1 runs everything sequentially. Results do not
    /// depend on this value.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Report whether disjoint stages of the given sizes can exist.
    Exists(ExistsArgs),
    /// Build a design meeting the stage requirements and write it out.
    Construct(ConstructArgs),
    /// Print a spread as a grid, one column per member.
    Spread(SpreadArgs),
    /// Relabel a spread so chosen members contain required effects.
    Transform(TransformArgs),
    /// Simulate responses for a stored design.
    Simulate(SimulateArgs),
    /// Inspect a regular fraction: defining words, resolution, clear effects.
    Fraction(FractionArgs),
    /// Order candidate fractions by a ranking criterion.
    Rank(RankArgs),
}

#[derive(Args, Debug)]
struct ExistsArgs {
    #[arg(long)]
    p: usize,
    /// Common stage dimension.
    #[arg(long, conflicts_with = "stages")]
    t: Option<usize>,
    /// Comma-separated stage dimensions, e.g. `3,3,3`.
    #[arg(long, value_delimiter = ',')]
    stages: Vec<usize>,
}

#[derive(Args, Debug)]
pub struct StageArgs {
    /// Stage requirement: `"ABC,BDE,CEF;exact"` or `"A,B;dim=3"`.
    /// Repeat once per stage, in stage order.
    #[arg(long = "stage", required = true)]
    pub stages: Vec<String>,
    /// Stop after this many candidates (exit code 4 if reached).
    #[arg(long)]
    pub budget: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CodingArg {
    Binary,
    Pm1,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CriterionArg {
    Wlp,
    Clear,
}

#[derive(Args, Debug)]
pub struct ConstructArgs {
    /// Number of factors of a full factorial.
    #[arg(long, conflicts_with = "r", required_unless_present = "r")]
    pub p: Option<usize>,
    /// Total factors of a 2^(r-s) fraction.
    #[arg(long, requires = "s")]
    pub r: Option<usize>,
    /// Number of added factors.
    #[arg(long, requires = "r")]
    pub s: Option<usize>,
    #[command(flatten)]
    pub stage: StageArgs,
    /// Explicit generator for an added factor, e.g. `G=ABCD`.
    #[arg(long = "gen")]
    pub gens: Vec<String>,
    /// Ranking used when generators are chosen automatically.
    #[arg(long, value_enum, default_value = "wlp")]
    pub criterion: CriterionArg,
    #[arg(long, value_enum, default_value = "binary")]
    pub coding: CodingArg,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Search even when the existence results rule the request out.
    #[arg(long = "try")]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct SpreadArgs {
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub t: usize,
    /// Primitive polynomial as hex bits, e.g. `0x43` for x^6+x+1.
    #[arg(long)]
    pub poly: Option<String>,
    /// Build a partial spread when t does not divide p.
    #[arg(long)]
    pub partial: bool,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    #[command(flatten)]
    pub spread: SpreadArgs,
    #[command(flatten)]
    pub stage: StageArgs,
    /// Also count feasible candidates over the whole template.
    #[arg(long)]
    pub census: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Design JSON written by `construct`.
    #[arg(long)]
    pub design: PathBuf,
    /// Replication error variance.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Stage variances, one per stage, comma-separated; 1 each if omitted.
    #[arg(long, value_delimiter = ',')]
    pub stage_var: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, env = "RDCSS_SEED", default_value_t = 1)]
    pub seed: u64,
    /// Nonzero effect, e.g. `A=2.5`; repeatable.
    #[arg(long = "effect")]
    pub effects: Vec<String>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct FractionArgs {
    /// Fraction JSON: {"factors": 8, "basic": 6, "generators": {"G": "ABCD"}}.
    #[arg(long, conflicts_with_all = ["factors", "basic", "gens"])]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub factors: Option<usize>,
    #[arg(long)]
    pub basic: Option<usize>,
    #[arg(long = "gen")]
    pub gens: Vec<String>,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    /// Fraction JSON files.
    #[arg(long = "spec")]
    pub specs: Vec<PathBuf>,
    #[arg(long)]
    pub factors: Option<usize>,
    #[arg(long)]
    pub basic: Option<usize>,
    /// One candidate per flag: `"G=ABCD,H=ABEF"`.
    #[arg(long = "gens")]
    pub candidates: Vec<String>,
    #[arg(long, value_enum, default_value = "wlp")]
    pub criterion: CriterionArg,
}

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum Failure {
    Invalid(anyhow::Error),
    Infeasible(anyhow::Error),
    Budget(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Budget(_) => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible(_) => Failure::Infeasible(e.into()),
            Error::BudgetExhausted(_) => Failure::Budget(e.into()),
            other => Failure::Invalid(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Invalid(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Invalid(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Invalid(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Invalid(e.into())
    }
}

pub type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = match cli.jobs {
        Some(0) => {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        Some(1) => rdcss_core::Exec::Sequential,
        Some(n) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: cannot start {n} workers: {e}");
                return ExitCode::from(2);
            }
            rdcss_core::Exec::Parallel
        }
        None => rdcss_core::Exec::Parallel,
    };
    let result = match cli.command {
        Command::Exists(a) => commands::exists(a.p, a.t, &a.stages),
        Command::Construct(a) => commands::construct(&a, exec),
        Command::Spread(a) => commands::spread(&a),
        Command::Transform(a) => commands::transform(&a, exec),
        Command::Simulate(a) => commands::simulate(&a, exec),
        Command::Fraction(a) => commands::fraction(&a),
        Command::Rank(a) => commands::rank(&a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Invalid(e) | Failure::Infeasible(e) | Failure::Budget(e)) = &f;
            let closed_pipe = e
                .downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe);
            if closed_pipe {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
