//! Generates a synthetic message stream with a market-order flow-imbalance
//! episode and writes it in the message CSV format.
//!
//! Run with `cargo run --example generate_stream`.

use lobliq::ingest::{self, SessionConfig};
use lobliq::synth::{self, Episode, EpisodeKind, GeneratorConfig};
use lobliq::{OpKind, Side};

const S: i64 = 1_000_000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Two short sessions (10:00-12:00, first 10 minutes discarded) keep the
    // stream small enough to eyeball; day 0 carries a buy-pressure episode.
    let cfg = GeneratorConfig {
        seed: 7,
        days: 2,
        session: SessionConfig {
            session_open_us: 36_000 * S,
            session_close_us: 43_200 * S,
            open_skip_us: 600 * S,
            ..SessionConfig::default()
        },
        episodes: vec![Episode {
            day: 0,
            start_tod_us: 39_600 * S,
            duration_us: 900 * S,
            kind: EpisodeKind::MoFlowImbalance,
            side: Side::Buy,
            intensity: 6.0,
        }],
        ..GeneratorConfig::default()
    };

    let events = synth::generate(&cfg)?;
    println!("generated {} messages over {} days (seed {})", events.len(), cfg.days, cfg.seed);

    let mut limits = 0u64;
    let mut markets = 0u64;
    let mut cancels = 0u64;
    for ev in &events {
        match ev.op {
            OpKind::Limit => limits += 1,
            OpKind::Market => markets += 1,
            OpKind::Cancel => cancels += 1,
        }
    }
    println!("  limit orders:  {limits}");
    println!("  market orders: {markets}");
    println!("  cancellations: {cancels}");

    // The on-disk format is a plain CSV; the first lines look like this.
    let mut bytes = Vec::new();
    ingest::serialize_messages(&events, &mut bytes)?;
    let text = String::from_utf8(bytes)?;
    println!("\nfirst messages as serialized:");
    for line in text.lines().take(8) {
        println!("  {line}");
    }

    let out = std::env::temp_dir().join("lobliq_generate_stream.csv");
    std::fs::write(&out, &text)?;
    println!("\nfull stream written to {}", out.display());

    // Same seed, same stream: generation is deterministic.
    let again = synth::generate(&cfg)?;
    println!("regeneration with the same seed is identical: {}", again == events);
    Ok(())
}
