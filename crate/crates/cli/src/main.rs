mod commands;
mod settings;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "gridloop",
    version,
    about = "Loop-closure detection over superpixel-grid intensity descriptors"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
pub struct GlobalOpts {
    /// Flat key=value config file; CLI flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Segmentation scale in pixels.
    #[arg(long, global = true)]
    sp: Option<usize>,
    /// First-image gate threshold of the node selector, in [0, 1].
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Average gate threshold of the node selector.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Retrieval mode: exhaustive | nodes.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Recent frames excluded from loop candidacy.
    #[arg(long = "temporal-gap", global = true)]
    temporal_gap: Option<usize>,
    /// Ranked candidate list length.
    #[arg(long = "top-n", global = true)]
    top_n: Option<usize>,
    /// Similarity the best candidate must reach to count as a match.
    #[arg(long = "accept-threshold", global = true)]
    accept_threshold: Option<f64>,
    /// PRT time weight.
    #[arg(long, global = true)]
    omega: Option<f64>,
    /// Directory all outputs are written to.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for fixture generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Segment one image and write the label map and center table.
    Segment {
        /// Image file to segment.
        image: PathBuf,
    },
    /// Run loop-closure detection over an image sequence directory.
    Detect {
        /// Sequence directory (numeric-stem PNG/JPEG files).
        root: PathBuf,
    },
    /// Evaluate a detection log against ground truth.
    Eval {
        /// Detection log written by `detect`.
        log: PathBuf,
        /// Ground truth: .csv pair list or .txt 0/1 matrix.
        gt: PathBuf,
        /// Frame-distance tolerance for counting a retrieval as correct.
        #[arg(long)]
        tolerance: Option<u32>,
    },
    /// Run detect+eval across a list of parameter values.
    Sweep {
        /// Sequence directory.
        root: PathBuf,
        /// Ground-truth file.
        #[arg(long)]
        gt: PathBuf,
        /// Parameter to sweep: sp | beta.
        #[arg(long)]
        param: String,
        /// Comma-separated parameter values.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
        /// Frame-distance tolerance for counting a retrieval as correct.
        #[arg(long)]
        tolerance: Option<u32>,
    },
    /// Generate a deterministic synthetic sequence plus ground truth.
    Fixture {
        /// Base frames before any revisits.
        #[arg(long, default_value_t = 20)]
        frames: usize,
        /// Revisit frames appended after the base frames.
        #[arg(long, default_value_t = 0)]
        revisits: usize,
        /// Max absolute per-pixel noise on revisits and group members.
        #[arg(long, default_value_t = 0)]
        noise: u8,
        #[arg(long, default_value_t = 64)]
        width: u32,
        #[arg(long, default_value_t = 64)]
        height: u32,
        /// Consecutive frames sharing one scene.
        #[arg(long = "group-size", default_value_t = 1)]
        group_size: usize,
    },
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let settings = settings::resolve(&cli.global)?;
    match cli.command {
        Command::Segment { image } => commands::segment_image(&settings, &image),
        Command::Detect { root } => commands::detect(&settings, &root).map(|_| ()),
        Command::Eval { log, gt, tolerance } => commands::eval(&settings, &log, &gt, tolerance),
        Command::Sweep {
            root,
            gt,
            param,
            values,
            tolerance,
        } => commands::sweep(&settings, &root, &gt, &param, &values, tolerance),
        Command::Fixture {
            frames,
            revisits,
            noise,
            width,
            height,
            group_size,
        } => commands::fixture(&settings, frames, revisits, noise, width, height, group_size),
    }
}
