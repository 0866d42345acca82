//! Volume profiles and exponentially weighted liquidity: averages the
//! near-best book shape, computes the depth norm, and tracks the
//! liquidity of both sides (and their imbalance) across tiling windows.
//!
//! Run with `cargo run --example liquidity_profiles`.

use lobliq::ingest::{self, SessionConfig};
use lobliq::liquidity::{self, NormSampling, ProfileConditioning};
use lobliq::synth::{self, GeneratorConfig};
use lobliq::{windows, Side};

const S: i64 = 1_000_000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let session = SessionConfig {
        session_open_us: 32_400 * S,
        session_close_us: 43_200 * S,
        open_skip_us: 600 * S,
        ..SessionConfig::default()
    };
    let cfg = GeneratorConfig { seed: 5, days: 2, session, ..GeneratorConfig::default() };
    let events = synth::generate(&cfg)?;
    let depth_n = 50;
    let log = ingest::replay(&events, &cfg.session, depth_n)?;

    // Average shape of the ask ladder over every book state, by tick
    // distance from the best.
    let avg = liquidity::average_profile(&log, Side::Sell, depth_n, ProfileConditioning::Unconditional)?;
    println!("mean ask profile over {} states (first 10 ticks):", avg.n_samples);
    for d in 0..10 {
        println!("  distance {:>2}: {:8.1} +- {:.1}", d + 1, avg.mean[d], avg.se[d]);
    }

    // The depth norm <V_N> makes liquidities dimensionless and comparable
    // across datasets.
    let norm = liquidity::compute_norm(&log, depth_n, NormSampling::PerOperation)?;
    println!("\ndepth norm <V_{depth_n}> = {norm:.1} (per-operation sampling)");
    let wall = liquidity::compute_norm(&log, depth_n, NormSampling::WallClock { interval_us: 60 * S })?;
    println!("same norm on a 60 s wall-clock grid: {wall:.1}");

    // Exponential weighting with decay length delta concentrates the
    // measure near the spread; larger delta reaches deeper into the book.
    let frame = log.frames.len() / 2;
    let book = log.book_at(frame);
    println!("\nliquidity at frame {frame} for a range of decay lengths:");
    println!("  delta     L_bid     L_ask   imbalance");
    for delta in [1.0, 2.0, 5.0, 10.0, 20.0] {
        let snap = liquidity::snapshot_from_book(&book, log.frames[frame].timestamp_us(), delta, depth_n, norm)?;
        println!(
            "  {:>5.0}  {:>8.4}  {:>8.4}  {:>+9.4}",
            delta,
            snap.l_bid,
            snap.l_ask,
            snap.imbalance.unwrap_or(f64::NAN)
        );
    }

    // One snapshot per tiling window start; this is the per-window state
    // every conditional analysis keys on.
    let tiled = windows::tile_windows(&log, 300 * S)?;
    let snaps = liquidity::window_snapshots(&log, &tiled, 5.0, depth_n, norm)?;
    let defined = snaps.iter().flatten().count();
    println!("\n{} of {} five-minute windows have a snapshot state", defined, tiled.len());
    let (mut sum, mut min, mut max) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    for snap in snaps.iter().flatten() {
        let imb = snap.imbalance.unwrap_or(0.0);
        sum += imb;
        min = min.min(imb);
        max = max.max(imb);
    }
    println!(
        "window imbalance: mean {:+.4}, range {:+.3} .. {:+.3}",
        sum / defined as f64,
        min,
        max
    );
    Ok(())
}
