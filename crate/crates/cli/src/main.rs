use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use unmix_cli::{cmd_report, cmd_synth, cmd_unmix};

/// Hyperspectral unmixing workbench: synthetic scenes, solver runs, reports.
#[derive(Parser)]
#[command(name = "unmix", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene directory from a JSON configuration.
    Synth {
        /// Scene configuration (JSON).
        config: PathBuf,
        /// Output scene directory.
        out_dir: PathBuf,
        /// Override the configuration seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a solver (ae-red, plain-ae, or fcls) on a scene directory.
    Unmix {
        /// Scene directory produced by `synth` (or hand-assembled).
        scene_dir: PathBuf,
        /// Run configuration (JSON) selecting the method and parameters.
        run_config: PathBuf,
        /// Output run directory.
        out_dir: PathBuf,
        /// Override the configuration seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Cap worker threads (also honors UNMIX_THREADS).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Compare one or more run directories: table, report.csv, abundance PNGs.
    Report {
        /// Run directories to summarize.
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Where report.csv and the PNG maps go.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Synth { config, out_dir, seed } => cmd_synth(&config, &out_dir, seed),
        Command::Unmix { scene_dir, run_config, out_dir, seed, threads } => {
            cmd_unmix(&scene_dir, &run_config, &out_dir, seed, threads)
        }
        Command::Report { run_dirs, out } => {
            let refs: Vec<&std::path::Path> = run_dirs.iter().map(|p| p.as_path()).collect();
            cmd_report(&refs, &out)
        }
    };
    ExitCode::from(code as u8)
}
