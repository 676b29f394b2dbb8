use std::path::PathBuf;
use std::process::ExitCode;

use cahn_lab::{emit_report, execute, summary_text, Format, LabError, LabResult, RunRecord};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cahn-lab", version, about = "Volume-constrained Allen-Cahn laboratory")]
struct Cli {
    /// TOML run configuration (built-in defaults when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for stochastic experiments (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for independent tasks.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output forms, comma separated.
    #[arg(long, global = true, value_delimiter = ',', default_values = ["table", "doc"])]
    format: Vec<FormatArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Doc,
    Plots,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Table => Format::Table,
            FormatArg::Doc => Format::Doc,
            FormatArg::Plots => Format::Plots,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve once from a configured initial field.
    Solve,
    /// Sweep eps and track the smallest singular value.
    Sweep,
    /// List the degenerate eps of the constant solution.
    DegenerateEps,
    /// Finite-difference check of the derivative formulas.
    CheckCalculus,
    /// Probe density, openness and symmetry breaking.
    ProbeGeneric,
    /// Multistart census of solutions.
    Census,
    /// Independent 1D collocation oracle.
    Oracle1d,
    /// Re-emit a stored result document.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::DegenerateEps => "degenerate-eps",
            Command::CheckCalculus => "check-calculus",
            Command::ProbeGeneric => "probe-generic",
            Command::Census => "census",
            Command::Oracle1d => "oracle1d",
            Command::Report => "report",
        }
    }
}

fn out_dir(cli: &Cli, record: Option<&RunRecord>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| record.and_then(|r| r.config.output.dir.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(cli.command.name()))
}

fn main_inner(cli: &Cli) -> LabResult<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
    }
    let formats: Vec<Format> = cli.format.iter().map(|&f| f.into()).collect();
    let record = match cli.command {
        Command::Report => {
            let dir = cli
                .out
                .clone()
                .ok_or_else(|| LabError::Config("`report` needs --out <dir> holding result.json".into()))?;
            RunRecord::load(&dir.join("result.json"))?
        }
        _ => execute(cli.command.name(), cli.config.as_deref(), cli.seed)?,
    };
    let dir = out_dir(cli, Some(&record));
    let written = emit_report(&record, &dir, &formats)?;
    print!("{}", summary_text(&record, 40));
    if let Some(t) = record.timing {
        println!("wall time {t:.2} s");
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(record.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
