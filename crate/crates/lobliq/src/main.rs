//! Command-line front end. All real work lives in the library; this file
//! only parses flags, builds a manifest and maps failures to stage-tagged
//! exit codes.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lobliq::pipeline::{self, GenSpec, Overrides, Preset, RunManifest, Scope};

#[derive(Parser)]
#[command(name = "lobliq", version, about = "Order-book replay and liquidity analytics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic order-message stream.
    Generate(GenArgs),
    /// Detect large price fluctuations and write events.csv.
    Detect(AnalyzeArgs),
    /// Event-conditioned relative flow curves and response fits.
    Flows(AnalyzeArgs),
    /// Liquidity snapshots and average book profiles.
    Liquidity(AnalyzeArgs),
    /// Clouds, power-law fits, the δ scan and imbalance conditionals.
    Fit(AnalyzeArgs),
    /// The full pipeline: every artifact plus summary.json.
    Run(AnalyzeArgs),
}

#[derive(Args)]
struct GenArgs {
    /// TOML generation spec; omit for the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the spec's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of trading days.
    #[arg(long)]
    days: Option<u32>,
    #[arg(long, default_value = "messages.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input message files, repeatable; concatenated in order.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    /// Detection preset: large_scale, short_scale or custom.
    #[arg(long, default_value = "large_scale")]
    preset: Preset,
    /// Window length Δt in seconds.
    #[arg(long = "delta-t")]
    delta_t: Option<f64>,
    /// Absolute log-return threshold x.
    #[arg(long)]
    abs_threshold: Option<f64>,
    /// Local volatility multiplier n.
    #[arg(long)]
    vol_multiplier: Option<f64>,
    /// Declustering gap in seconds.
    #[arg(long = "min-gap")]
    min_gap: Option<f64>,
    /// Volatility bucket width in seconds.
    #[arg(long = "bucket-width")]
    bucket_width: Option<f64>,
    /// Liquidity decay scale δ in ticks.
    #[arg(long)]
    delta: Option<f64>,
    /// Book profile depth N in ticks.
    #[arg(long = "depth-n")]
    depth_n: Option<usize>,
    /// Bin count for binned statistics.
    #[arg(long)]
    bins: Option<usize>,
    /// Output directory for the report bundle.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 picks the library default. Output bytes do not
    /// depend on this.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

fn seconds_to_us(s: f64) -> i64 {
    (s * 1e6).round() as i64
}

impl AnalyzeArgs {
    fn manifest(&self) -> RunManifest {
        let mut m = RunManifest::new(self.input.clone(), self.out.clone());
        m.preset = self.preset;
        m.workers = self.workers;
        m.overrides = Overrides {
            delta_t_us: self.delta_t.map(seconds_to_us),
            abs_threshold: self.abs_threshold,
            vol_multiplier: self.vol_multiplier,
            min_gap_us: self.min_gap.map(seconds_to_us),
            bucket_width_us: self.bucket_width.map(seconds_to_us),
            delta: self.delta,
            depth_n: self.depth_n,
            bins: self.bins,
        };
        m
    }
}

fn analyze(args: &AnalyzeArgs, scope: Scope) -> ExitCode {
    match pipeline::run_scoped(&args.manifest(), scope) {
        Ok(summary) => {
            println!(
                "ok: {} messages, {} windows, {}+/{}- events -> {}",
                summary.n_messages,
                summary.n_windows,
                summary.n_events_positive,
                summary.n_events_negative,
                args.out.display()
            );
            for note in &summary.skipped {
                eprintln!("skipped: {note}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn generate(args: &GenArgs) -> ExitCode {
    let spec = match &args.config {
        Some(path) => match GenSpec::load(path) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
        },
        None => GenSpec::default(),
    };
    let mut spec = spec;
    if let Some(seed) = args.seed {
        spec.generator.seed = seed;
    }
    if let Some(days) = args.days {
        spec.generator.days = days;
    }
    match pipeline::cmd_generate(&spec, &args.out) {
        Ok(n) => {
            println!("ok: {n} messages -> {}", args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Generate(args) => generate(&args),
        Cmd::Detect(args) => analyze(&args, Scope::Detect),
        Cmd::Flows(args) => analyze(&args, Scope::Flows),
        Cmd::Liquidity(args) => analyze(&args, Scope::Liquidity),
        Cmd::Fit(args) => analyze(&args, Scope::Fit),
        Cmd::Run(args) => analyze(&args, Scope::Full),
    }
}
