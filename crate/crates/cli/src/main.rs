//! `dualtree`: run dual-tree searches over CSV datasets.

mod config;
mod error;
mod task;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dualtree::spacetree::validate_tree;
use dualtree::{SpaceTree, TreeKind};

use crate::config::{DataArgs, RunArgs};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "dualtree", version, about = "Tree-independent dual-tree algorithms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one task and write its CSV output.
    Run(RunArgs),
    /// Run a task under every bound mode (neighbor tasks) or every tree and
    /// traversal (other tasks) and print a statistics table.
    Bench(BenchArgs),
    /// Write a seeded random dataset as CSV.
    Generate(GenerateArgs),
    /// Build a tree and check its structural invariants.
    ValidateTree(ValidateArgs),
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Repetitions per configuration; the fastest wall time is reported.
    #[arg(long, default_value_t = 3)]
    repeat: usize,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Number of points.
    n: usize,
    /// Dimension.
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Draw points around this many Gaussian clusters instead of uniformly.
    #[arg(long)]
    clusters: Option<usize>,
    /// Standard deviation of each cluster.
    #[arg(long, default_value_t = 0.05)]
    spread: f64,
    /// Output path; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Tree kind: kd or cover.
    #[arg(long, default_value = "kd")]
    tree: TreeKind,
    #[arg(long, default_value_t = dualtree::spacetree::DEFAULT_LEAF_SIZE)]
    leaf_size: usize,
    /// Print one line per node.
    #[arg(long)]
    dump: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => task::run(&args),
        Command::Bench(args) => task::bench(&args.run, args.repeat),
        Command::Generate(args) => generate(&args),
        Command::ValidateTree(args) => validate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dualtree: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let data = config::generate_dataset(args.n, args.d, args.seed, args.clusters, args.spread)?;
    let mut out = task::open_output(args.output.as_deref())?;
    for p in data.points() {
        let row: Vec<String> = p.iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn validate(args: &ValidateArgs) -> Result<(), CliError> {
    let data = args.data.load_single()?;
    let config = config::tree_config(args.tree, args.leaf_size)?;
    let tree = SpaceTree::build(&data, &config)?;
    if args.dump {
        print!("{}", tree.dump());
    }
    let problems = validate_tree(&tree, &data);
    if problems.is_empty() {
        println!("ok: {} tree over {} points, {} nodes, height {}", args.tree, data.len(), tree.len(), tree.height());
        Ok(())
    } else {
        for p in &problems {
            println!("{p}");
        }
        Err(CliError::Verify(format!("{} invariant violations", problems.len())))
    }
}
