//! Fits the return-versus-liquidity power law |r| = K L^-alpha and scans
//! the liquidity decay length: the stream below is generated with returns
//! planted as a power law of L(delta = 5), and the scan over a delta grid
//! recovers that scale as the best-explaining one.
//!
//! Run with `cargo run --example power_law_scan`.

use lobliq::ingest::{self, SessionConfig};
use lobliq::synth::{self, GeneratorConfig, PlantParams, ReturnRule};
use lobliq::{stats, windows, Side};

const S: i64 = 1_000_000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rule = ReturnRule::PowerLaw { k: 0.002, alpha: 1.0, noise: 0.05 };
    let plant = PlantParams {
        depth_n: 30,
        shape_lead_us: S,
        amp_range: (200.0, 1_200.0),
        tau_range: (1.0, 15.0),
        ..PlantParams::default()
    };
    let cfg = GeneratorConfig {
        seed: 9_005,
        days: 4,
        session: SessionConfig {
            session_open_us: 28_800 * S,
            session_close_us: 36_000 * S,
            open_skip_us: 600 * S,
            ..SessionConfig::default()
        },
        lo_rate: 0.6,
        mo_rate: 0.1,
        cancel_rate: 0.2,
        ..GeneratorConfig::default()
    };
    println!("planting |r| = {} * L(delta = {})^-{} on every 30 s window...", 0.002, plant.delta, 1.0);
    let events = synth::plant_return_rule(&cfg, &rule, &plant)?;
    let log = ingest::replay(&events, &cfg.session, plant.depth_n)?;

    // One (ask profile, window return) pair per tiling window.
    let tiled = windows::tile_windows(&log, plant.delta_t_us)?;
    let mut profiles = Vec::new();
    let mut returns = Vec::new();
    for w in &tiled {
        let (Some(frame), Some(r)) = (w.snapshot_frame, w.log_return) else { continue };
        let Ok(profile) = log.book_at(frame).side_profile(Side::Sell, plant.depth_n) else {
            continue;
        };
        profiles.push(profile);
        returns.push(r);
    }
    println!("{} windows with a snapshot and a return", returns.len());

    // Fit at the planted scale first: cloud of positive-return windows.
    let cloud = stats::liquidity_return_cloud(&profiles, &returns, plant.norm, plant.delta, 1)?;
    let fit = stats::power_law_fit(&cloud)?;
    println!("\nfit at delta = {} over {} points:", plant.delta, fit.n_points);
    println!("  K     = {:.5} ({:.5})", fit.k, fit.se_k);
    println!("  alpha = {:.4} ({:.4})", fit.alpha, fit.se_alpha);
    println!("  r2    = {:.4}, p = {:.2e}", fit.r_squared, fit.p_value);

    // Logarithmic binning of the same cloud, for plotting against the fit.
    let curve = stats::log_binning(&cloud, 10, 20)?;
    println!("\nbinned |r| against L:");
    for i in 0..curve.bin_centers.len() {
        println!(
            "  L = {:>7.4}: |r| = {:.5} ({:.5}), {} windows",
            curve.bin_centers[i],
            curve.mean[i],
            curve.se[i],
            curve.counts[i]
        );
    }

    // The scan refits across a grid of decay lengths; the planted scale
    // explains the cloud best.
    let grid: Vec<f64> = (1..=12).map(f64::from).collect();
    let scan = stats::delta_scan(&profiles, &returns, plant.norm, &grid, 1)?;
    println!("\ndelta scan:");
    for df in &scan.fits {
        match &df.fit {
            Ok(f) => {
                let marker = if df.delta == scan.best_delta { "  <- best" } else { "" };
                println!("  delta {:>4.0}: r2 = {:.4}, alpha = {:.3}{marker}", df.delta, f.r_squared, f.alpha);
            }
            Err(e) => println!("  delta {:>4.0}: no fit ({e})", df.delta),
        }
    }
    println!("\nbest delta = {} (planted {})", scan.best_delta, plant.delta);
    Ok(())
}
