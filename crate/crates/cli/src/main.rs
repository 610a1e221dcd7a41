mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Feature-conditioned bubble image synthesis.
#[derive(Parser, Debug)]
#[command(name = "bubforge", version)]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Worker threads (scene-level parallelism in `synth`).
    #[arg(long, global = true, env = "BUBFORGE_THREADS", default_value_t = 1)]
    threads: usize,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic training corpus into a .bdb file.
    Corpus(CorpusArgs),
    /// Cut single-bubble patches out of real images into a training .bdb file.
    Extract(ExtractArgs),
    /// Train a model on a corpus.
    Train(TrainArgs),
    /// Generate a bubble database with a trained model.
    Gendb(GendbArgs),
    /// Synthesize labelled scenes from a flow spec and a database.
    Synth(SynthArgs),
    /// Measure how well a model follows one conditioning component.
    Eval(EvalArgs),
    /// Print the feature vector of a bubble image.
    Features(FeaturesArgs),
    /// Compare analytic and numeric gradients on a small 64-bit model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct CorpusArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 32)]
    side: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file with sampling ranges.
    #[arg(long)]
    ranges: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Directory of .pgm images.
    #[arg(long)]
    images: PathBuf,
    /// JSON file with pipeline settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Patch side of the records.
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// JSON file with training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GendbArgs {
    #[arg(long)]
    model: PathBuf,
    /// Database whose feature vectors are interpolated for conditioning.
    #[arg(long)]
    pool: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    flow: PathBuf,
    #[arg(long)]
    db: PathBuf,
    /// Number of scenes; scene i uses seed + i.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Overrides the seed of the flow spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the bubble count of the flow spec.
    #[arg(long)]
    bubbles: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Database supplying the feature pool.
    #[arg(long)]
    pool: PathBuf,
    /// Component to sweep: E, phi, psi or m.
    #[arg(long)]
    sweep: String,
    #[arg(long, default_value_t = 10)]
    points: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[arg(long)]
    image: PathBuf,
    /// Foreground mask (.pbm); segmented automatically when absent.
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file with model settings; a tiny model when absent.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Problems with the request itself rather than with running it.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Usage(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    use bubforge::Error as E;
    if err.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    match err.downcast_ref::<E>() {
        Some(E::InvalidArgument(_) | E::Unsatisfiable(_) | E::OffManifold(_) | E::Shape(_)) => 1,
        _ => 2,
    }
}

/// The error and its causes, skipping causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = err.to_string();
    let mut last = out.clone();
    for cause in err.chain().skip(1) {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            out += ": ";
            out += &msg;
        }
        last = msg;
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(1);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(2);
    }

    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
