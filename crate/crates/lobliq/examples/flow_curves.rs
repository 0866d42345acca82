//! Event-averaged order-flow curves: how limit-order, market-order and
//! cancellation volume on one ladder behave in the stretch leading into a
//! large price fluctuation, relative to the all-session baseline.
//!
//! Run with `cargo run --example flow_curves`.

use lobliq::flows::{self, FlowCurve, FlowCurveParams};
use lobliq::synth::{self, Episode, EpisodeKind, GeneratorConfig};
use lobliq::{ingest, DetectParams, Side};

const S: i64 = 1_000_000;

fn print_curve(curve: &FlowCurve) {
    println!(
        "  {} events, {} s subintervals over the {} s before each window end",
        curve.n_events,
        curve.subinterval_us / S,
        curve.range_us / S
    );
    println!(
        "  baselines: LO {:.3}  MO {:.3}  C {:.3}",
        curve.baseline_lo, curve.baseline_mo, curve.baseline_c
    );
    println!("  offset(s)     LO            MO            C");
    for k in 0..curve.offsets_s.len() {
        // trailing subintervals only; the early part of the hour is flat
        if curve.offsets_s[k] <= -360.0 {
            continue;
        }
        println!(
            "  {:>8.0}  {:.3} ({:.3})  {:.3} ({:.3})  {:.3} ({:.3})",
            curve.offsets_s[k],
            curve.r_lo[k],
            curve.se_lo[k],
            curve.r_mo[k],
            curve.se_mo[k],
            curve.r_c[k],
            curve.se_c[k]
        );
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Six days, each with one buy-pressure episode at a different time of
    // day. The boosted market orders eat the ask ladder while limit
    // replenishment on that ladder lags: the flow-imbalance mechanism.
    let episodes: Vec<Episode> = [
        (0u32, 39_600i64),
        (1, 36_000),
        (2, 48_600),
        (3, 39_600),
        (4, 43_200),
        (5, 50_400),
    ]
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
    let cfg = GeneratorConfig { seed: 21, days: 6, episodes, ..GeneratorConfig::default() };
    let events = synth::generate(&cfg)?;
    let log = ingest::replay(&events, &cfg.session, 100)?;
    let (_profile, detected) = lobliq::detect::detect(&log, &DetectParams::large_scale())?;
    let positives = detected.iter().filter(|e| e.sign == 1).count();
    println!(
        "detected {} events ({} positive) across {} days",
        detected.len(),
        positives,
        log.days.len()
    );

    // Positive events consume the ask ladder, so that is where the
    // mechanism shows: the market-order share climbs above its baseline
    // near the event while the limit-order share drops below.
    println!("\nask-ladder flows into positive events:");
    let params = FlowCurveParams::standard(Side::Sell, 1);
    let curve = flows::relative_flow_curve(&log, &detected, &params)?;
    print_curve(&curve);

    println!("\nbid-ladder flows into the same events, for contrast:");
    let bid = flows::relative_flow_curve(&log, &detected, &FlowCurveParams::standard(Side::Buy, 1))?;
    print_curve(&bid);
    Ok(())
}
