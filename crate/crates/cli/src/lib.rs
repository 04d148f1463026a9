//! `jumpdiff` command line: corpus generation, forward corruption, training,
//! synthesis and evaluation, each fully determined by its seed and config.

mod commands;
mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use jumpdiff::reverse::{Allocation, Mode, Solver};

pub use config::RunConfig;

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for usage and validation errors.
pub const EXIT_INVALID: i32 = 1;
/// Exit status for runtime failures.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "jumpdiff",
    version,
    about = "Jump-diffusion experiments on synthetic spectrogram corpora"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus (JDSP files plus manifest.json).
    GenCorpus {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        num_utterances: Option<usize>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        silence_prob: Option<f64>,
    },
    /// Forward-corrupt every utterance to one diffusion time.
    Corrupt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        t: f64,
    },
    /// Train the location and content networks.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Synthesize every utterance of a corpus from its phone sequence.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        /// Directory holding location.jdmp and content.jdmp.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        solver: Option<Solver>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        alloc: Option<Allocation>,
        /// Re-score slots before every single insertion.
        #[arg(long)]
        sequential: bool,
        /// Target length is round(ground-truth length / speed).
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, value_enum, default_value_t = LocationChoice::Model)]
        location: LocationChoice,
        #[arg(long, value_enum, default_value_t = ContentChoice::Model)]
        content: ContentChoice,
        /// Only the first N utterances.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Score synthesized utterances against the corpus or another synthesis.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        synth: PathBuf,
        /// Align against this synthesis directory instead of the ground truth.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Silence energy threshold; defaults to half the corpus median.
        #[arg(long)]
        threshold: Option<f64>,
        /// Also write DTW cost heatmaps as PGM images.
        #[arg(long)]
        heatmaps: bool,
    },
    /// Run quick built-in consistency checks.
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum LocationChoice {
    Model,
    Uniform,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum ContentChoice {
    Model,
    Prior,
}

/// Run the command line with `args` (including the program name) and return
/// the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    let mut out = std::io::stdout().lock();
    match commands::dispatch(cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_INVALID
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
