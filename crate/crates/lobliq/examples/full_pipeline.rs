//! End-to-end run: generate a stream to disk, then let the pipeline replay
//! it, detect events, and write the full report bundle (flow curves,
//! liquidity snapshots, fits, summary). The bundle is byte-deterministic:
//! a single-threaded rerun produces identical files.
//!
//! Run with `cargo run --example full_pipeline`.

use lobliq::pipeline::{self, GenSpec, RunManifest};
use lobliq::synth::{Episode, EpisodeKind, GeneratorConfig};
use lobliq::Side;

const S: i64 = 1_000_000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = tempfile::tempdir()?;
    let input = root.path().join("messages.csv");

    // The same job a TOML spec file would describe for the CLI.
    let episodes: Vec<Episode> = [(0u32, 39_600i64), (1, 36_000)]
        .iter()
        .map(|&(day, start_s)| Episode {
            day,
            start_tod_us: start_s * S,
            duration_us: 900 * S,
            kind: EpisodeKind::MoFlowImbalance,
            side: Side::Buy,
            intensity: 8.0,
        })
        .collect();
    let spec = GenSpec {
        generator: GeneratorConfig { seed: 21, days: 2, episodes, ..GeneratorConfig::default() },
        plant: None,
    };
    let n = pipeline::cmd_generate(&spec, &input)?;
    println!("generated {n} messages into {}", input.display());

    let out_dir = root.path().join("report");
    let manifest = RunManifest::new(vec![input.clone()], out_dir.clone());
    let summary = pipeline::run_pipeline(&manifest)?;

    println!("\nrun summary (config {}):", summary.config_hash);
    println!("  {} messages -> {} frames over {} days", summary.n_messages, summary.n_frames, summary.n_days);
    println!(
        "  events: {} positive, {} negative; {} windows",
        summary.n_events_positive, summary.n_events_negative, summary.n_windows
    );
    if let Some(sigma) = summary.sigma_pool {
        println!("  pooled sigma {sigma:.5}");
    }
    if let Some(norm) = summary.norm {
        println!("  depth norm {norm:.1}");
    }
    if let Some(fit) = &summary.power_law {
        println!("  power law: K {:.4}, alpha {:.3}, r2 {:.3}", fit.k, fit.alpha, fit.r_squared);
    }
    for r in &summary.response {
        println!("  response {}: a = {:.3} ({:.3})", r.condition, r.a, r.se_a);
    }
    for s in &summary.skipped {
        println!("  skipped: {s}");
    }

    let mut names: Vec<String> = std::fs::read_dir(&out_dir)?
        .map(|e| Ok(e?.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, std::io::Error>>()?;
    names.sort();
    println!("\nreport bundle:");
    for name in &names {
        let len = std::fs::metadata(out_dir.join(name))?.len();
        println!("  {name} ({len} bytes)");
    }

    // Worker count is not part of the configuration: rerunning on one
    // thread yields the same bundle byte for byte.
    let rerun_dir = root.path().join("rerun");
    let rerun = RunManifest { out_dir: rerun_dir.clone(), workers: 1, ..manifest };
    pipeline::run_pipeline(&rerun)?;
    let identical = names.iter().all(|name| {
        let a = std::fs::read(out_dir.join(name)).unwrap_or_default();
        let b = std::fs::read(rerun_dir.join(name)).unwrap_or_default();
        !a.is_empty() && a == b
    });
    println!("\nsingle-threaded rerun is byte-identical: {identical}");
    Ok(())
}
