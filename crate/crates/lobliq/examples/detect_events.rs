//! Detects large price fluctuations with the dual filter: a window return
//! must beat an absolute threshold and a multiple of the time-of-day
//! volatility. Overlapping triggers are collapsed and nearby events
//! declustered.
//!
//! Run with `cargo run --example detect_events`.

use lobliq::synth::{self, Episode, EpisodeKind, GeneratorConfig};
use lobliq::{ingest, DetectParams, Side};

const S: i64 = 1_000_000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Buy-pressure episodes push the price up hard enough to trigger the
    // large-scale detector; the rest of the stream is baseline flow.
    let episodes: Vec<Episode> = [(0u32, 39_600i64), (1, 36_000), (2, 48_600)]
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
    let cfg = GeneratorConfig { seed: 21, days: 3, episodes, ..GeneratorConfig::default() };
    let events = synth::generate(&cfg)?;
    let log = ingest::replay(&events, &cfg.session, 100)?;
    println!("replayed {} frames over {} days", log.frames.len(), log.days.len());

    // 15-minute windows, 0.5 % absolute threshold, 3 sigma, 5-minute
    // volatility buckets.
    let params = DetectParams::large_scale();
    let (profile, detected) = lobliq::detect::detect(&log, &params)?;

    println!(
        "\nvolatility profile: {} buckets of {} s (stat {:?})",
        profile.n_buckets(),
        params.bucket_width_us / S,
        profile.stat
    );
    let borrowed = profile.borrowed_from.iter().filter(|b| b.is_some()).count();
    println!("  sigma range {:.5} .. {:.5}, {} empty buckets borrowed a neighbour's sigma",
        profile.sigma.iter().cloned().fold(f64::INFINITY, f64::min),
        profile.sigma.iter().cloned().fold(0.0f64, f64::max),
        borrowed
    );

    println!("\n{} events after declustering (gap > {} s):", detected.len(), params.min_gap_us / S);
    for ev in &detected {
        let tod_s = log.session.time_of_day(ev.window_start_us) / S;
        println!(
            "  day {} at {:02}:{:02}:{:02}  sign {:+}  return {:+.5}  (frame {})",
            ev.day,
            tod_s / 3600,
            (tod_s % 3600) / 60,
            tod_s % 60,
            ev.sign,
            ev.log_return,
            ev.trigger_frame
        );
    }

    // The tighter short-scale preset picks up smaller, faster moves.
    let (_p, short) = lobliq::detect::detect(&log, &DetectParams::short_scale())?;
    println!("\nshort-scale preset (1-minute windows) finds {} events", short.len());
    Ok(())
}
