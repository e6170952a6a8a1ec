use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tans_core::pipeline::{
    parse_seed_list, run_dir_for, write_report, LlmBackendKind, Pipeline, PipelineConfig, Protocol,
};

#[derive(Parser)]
#[command(name = "tans", version, about = "Generate topology-aware node descriptions and evaluate them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute node properties for every dataset.
    Props(RunArgs),
    /// Build prompts and generate node descriptions.
    Synth(RunArgs),
    /// Encode node descriptions into feature matrices.
    Embed(RunArgs),
    /// Build every configured feature matrix, baselines included.
    Features(RunArgs),
    /// Train and evaluate on each dataset separately.
    Train(RunArgs),
    /// Train on a source graph and evaluate on a target graph.
    Da(RunArgs),
    /// Pretrain on a source graph, finetune and evaluate on a target graph.
    Pt(RunArgs),
    /// Summarize one or more run directories.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Remote,
    Mock,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Seeds such as `0..30` or `0,1,2`.
    #[arg(long)]
    seed_list: Option<String>,
    /// LLM backend.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Leave neighbor texts out of the prompts.
    #[arg(long)]
    no_neighbors: bool,
    /// Leave each node's own text out of its prompt.
    #[arg(long)]
    no_node_text: bool,
    /// Run every stage on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories to aggregate.
    run_dirs: Vec<PathBuf>,
    /// Locate the run directory from a config instead.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where report.md and report.csv go; defaults to the first run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self, protocol: Option<Protocol>) -> Result<PipelineConfig> {
        let mut cfg =
            PipelineConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(s) = &self.seed_list {
            cfg.seeds = parse_seed_list(s)?;
        }
        if let Some(b) = self.backend {
            cfg.llm.backend = match b {
                BackendArg::Remote => LlmBackendKind::Remote,
                BackendArg::Mock => LlmBackendKind::Mock,
            };
        }
        if self.no_neighbors {
            cfg.prompt.include_neighbor_text = false;
        }
        if self.no_node_text {
            cfg.prompt.include_node_text = false;
        }
        if self.sequential {
            cfg.parallel = false;
        }
        if let Some(p) = protocol {
            cfg.protocol = p;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let (args, protocol) = match &cli.command {
        Command::Report(r) => return report(r),
        Command::Train(a) => (a, Some(Protocol::Single)),
        Command::Da(a) => (a, Some(Protocol::Da)),
        Command::Pt(a) => (a, Some(Protocol::Pt)),
        Command::Props(a) | Command::Synth(a) | Command::Embed(a) | Command::Features(a) => (a, None),
    };
    let mut p = Pipeline::open(args.load(protocol)?)?;
    match cli.command {
        Command::Props(_) => p.run_props()?,
        Command::Synth(_) => p.run_synth()?,
        Command::Embed(_) => p.run_embed()?,
        Command::Features(_) => p.run_features()?,
        _ => {
            p.run_protocol()?;
            print!("{}", std::fs::read_to_string(p.run_dir().join("report.md"))?);
        }
    }
    println!("{}", p.run_dir().display());
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let mut dirs = args.run_dirs.clone();
    if let Some(c) = &args.config {
        dirs.push(run_dir_for(&PipelineConfig::load(c)?)?);
    }
    if dirs.is_empty() {
        bail!("give at least one run directory or --config");
    }
    let out = args.out.clone().unwrap_or_else(|| dirs[0].clone());
    write_report(&dirs, &out)?;
    print!("{}", std::fs::read_to_string(out.join("report.md"))?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
