//! `wavegrf` command-line entry point.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wavegrf::Error;
use wavegrf_cli::commands;
use wavegrf_cli::config::RunConfig;
use wavegrf_cli::output::{Context, ErrorRecord};

#[derive(Parser)]
#[command(name = "wavegrf", version, about = "Wavelet-based Gaussian random fields on closed curves")]
struct Cli {
    /// TOML configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true, env = "WAVEGRF_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Condition numbers and compression rates over the level range.
    Tables,
    /// Per-level decay of the diagonal in wavelet coordinates.
    Decay,
    /// A-priori against a-posteriori compression over correlation lengths.
    Corrlen,
    /// Contour square-root error against the number of nodes.
    SqrtBench,
    /// Draw field samples.
    Sample,
    /// Multilevel Monte Carlo covariance estimation.
    Mlmc,
    /// Posterior mean from box observations.
    Krige,
    /// Dump the taper pattern.
    Pattern,
    /// Dump the refinement filters.
    FiltersDump,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Tables => "tables",
            Command::Decay => "decay",
            Command::Corrlen => "corrlen",
            Command::SqrtBench => "sqrt-bench",
            Command::Sample => "sample",
            Command::Mlmc => "mlmc",
            Command::Krige => "krige",
            Command::Pattern => "pattern",
            Command::FiltersDump => "filters-dump",
        }
    }
}

fn run(cli: &Cli) -> wavegrf::Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidParameter("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_toml(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let setup = config.setup()?;
    let ctx = Context::new(cli.command.name(), config, &cli.out)?;
    match cli.command {
        Command::Tables => commands::tables(&ctx, &setup),
        Command::Decay => commands::decay(&ctx, &setup),
        Command::Corrlen => commands::corrlen(&ctx, &setup),
        Command::SqrtBench => commands::sqrt_bench(&ctx, &setup),
        Command::Sample => commands::sample(&ctx, &setup),
        Command::Mlmc => commands::mlmc(&ctx, &setup),
        Command::Krige => commands::krige(&ctx, &setup),
        Command::Pattern => commands::pattern(&ctx, &setup),
        Command::FiltersDump => commands::filters_dump(&ctx, &setup),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = if e.is_numerical() { (3, "numerical") } else { (2, "input") };
            let record = ErrorRecord { status: "error", kind, exit_code: code, message: e.to_string() };
            let json = record.to_json();
            eprint!("{json}");
            if fs::create_dir_all(&cli.out).is_ok() {
                let _ = fs::write(cli.out.join("error.json"), &json);
            }
            ExitCode::from(code as u8)
        }
    }
}
