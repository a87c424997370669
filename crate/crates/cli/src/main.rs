use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pvae::hypdist::Family;
use pvae::radsample::RadiusSampler;

mod commands;
mod config;
mod svg;

use commands::Unstable;

#[derive(Debug, Parser)]
#[command(name = "pvae", version, about = "Poincaré-ball VAE experiments")]
struct Cli {
    /// Print the default experiment configuration and exit.
    #[arg(long)]
    dump_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the branching-diffusion dataset as CSV.
    SynthGen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model; writes checkpoint, metrics, report and provenance.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset CSV, or a directory holding MNIST IDX files.
        #[arg(long)]
        data: PathBuf,
        /// Output directory (default: the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the weights of an existing checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate -L_IWAE on every split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "K")]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write posterior means and dispersions for every observation.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render 2-D embeddings as SVG.
    Plot {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw from a hyperbolic normal.
    Sample {
        /// JSON object `{"mu": [...], "sigma": s, "c": c}`, inline or as a file path.
        #[arg(long)]
        params: String,
        #[arg(long)]
        n: usize,
        #[arg(long, value_parser = parse_enum::<Family>)]
        family: Family,
        /// Samples CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Density heatmap SVG (2-D only).
        #[arg(long)]
        heatmap: Option<PathBuf>,
        /// Heatmap cells per side.
        #[arg(long, default_value_t = 100)]
        grid: usize,
        #[arg(long, value_parser = parse_enum::<RadiusSampler>, default_value = "ars")]
        sampler: RadiusSampler,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.dump_defaults {
        println!("{}", serde_json::to_string_pretty(&config::ExperimentConfig::default())?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        anyhow::bail!("no command given; see --help");
    };
    match command {
        Command::SynthGen { config, out, seed } => commands::synth_gen(config.as_deref(), &out, seed),
        Command::Train { config, data, out, resume, seed } => {
            commands::train(config.as_deref(), &data, out.as_deref(), resume.as_deref(), seed)
        }
        Command::Eval { checkpoint, data, k, seed } => commands::eval(&checkpoint, &data, k, seed),
        Command::Embed { checkpoint, data, out } => commands::embed(&checkpoint, &data, &out),
        Command::Plot { embeddings, out } => commands::plot(&embeddings, &out),
        Command::Sample { params, n, family, out, heatmap, grid, sampler, seed } => {
            commands::sample(&params, n, family, out.as_deref(), heatmap.as_deref(), grid, sampler, seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Unstable>() => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
