//! Exponentially weighted book liquidity, its bid/ask imbalance, and
//! averaged depth profiles.
//!
//! The liquidity of one ladder is
//!
//! ```text
//! L(delta) = (1 / <V_N>) * sum_{Delta=1..N} V(Delta) * exp(-Delta / delta)
//! ```
//!
//! where `V(Delta)` is the volume resting `Delta` ticks from the ladder's
//! best (`Delta = 1` *at* the best), `delta` sets how fast weight decays with
//! distance, and the norm `<V_N>` is the time-averaged total volume within
//! `N` ticks of the best, pooled over both sides. Small `delta` probes the
//! book near the spread; large `delta` approaches total-depth-within-`N`
//! over the norm.
//!
//! The imbalance `(L_B - L_A) / (L_B + L_A)` lives in `[-1, 1]`: +1 means
//! all weighted volume on the bid side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{Book, Side};
use crate::detect::LargeEvent;
use crate::ingest::ReplayLog;
use crate::windows::TiledWindow;

#[derive(Debug, Error, PartialEq)]
pub enum LiquidityError {
    #[error("delta must be positive, got {delta}")]
    NonPositiveDelta { delta: f64 },
    #[error("norm must be positive, got {norm}")]
    NonPositiveNorm { norm: f64 },
    #[error("no volume ever sampled within the depth range; norm undefined")]
    ZeroSampledVolume,
    #[error("no qualifying snapshots (need at least 1, side never populated)")]
    InsufficientSample,
    #[error("depth must be at least 1")]
    ZeroDepth,
    #[error("sampling interval must be positive, got {interval_us} us")]
    BadInterval { interval_us: i64 },
}

/// Exponentially weighted liquidity of one side profile (`profile[i]` is the
/// volume at tick distance `i + 1`). The profile length is the depth `N`.
///
/// ```
/// use lobliq::liquidity::exponential_liquidity;
/// let l = exponential_liquidity(&[50, 0, 20, 0], 2.0, 35.0).unwrap();
/// let direct = (50.0 * (-0.5f64).exp() + 20.0 * (-1.5f64).exp()) / 35.0;
/// assert!((l - direct).abs() < 1e-15);
/// ```
pub fn exponential_liquidity(profile: &[u64], delta: f64, norm: f64) -> Result<f64, LiquidityError> {
    if !(delta > 0.0) {
        return Err(LiquidityError::NonPositiveDelta { delta });
    }
    if !(norm > 0.0) {
        return Err(LiquidityError::NonPositiveNorm { norm });
    }
    // weight by running product: w(Delta) = q^Delta with q = e^(-1/delta)
    let q = (-1.0 / delta).exp();
    let mut w = q;
    let mut sum = 0.0;
    for &v in profile {
        if v > 0 {
            sum += v as f64 * w;
        }
        w *= q;
    }
    Ok(sum / norm)
}

/// Bid/ask liquidity imbalance `(L_B - L_A)/(L_B + L_A)`.
///
/// `None` when both sides are zero (undefined; such snapshots are excluded
/// from conditional statistics). Exactly antisymmetric under swapping the
/// sides, and always within `[-1, 1]`.
pub fn liquidity_imbalance(l_bid: f64, l_ask: f64) -> Option<f64> {
    debug_assert!(l_bid >= 0.0 && l_ask >= 0.0, "liquidities are non-negative");
    let total = l_bid + l_ask;
    if total <= 0.0 {
        return None;
    }
    Some((l_bid - l_ask) / total)
}

/// How the depth norm `<V_N>` samples the book over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NormSampling {
    /// One sample per applied operation (default).
    #[default]
    PerOperation,
    /// Samples on a fixed wall-clock grid from the effective open.
    WallClock { interval_us: i64 },
}

/// Time-averaged volume within `n` ticks of the best, pooled over both sides
/// (each side counts as its own sample; an empty side samples 0).
///
/// With volume only ever on one side, the pooled mean is half that side's
/// volume — documented behaviour of the pooling convention.
pub fn compute_norm(
    log: &ReplayLog,
    n: usize,
    sampling: NormSampling,
) -> Result<f64, LiquidityError> {
    if n == 0 {
        return Err(LiquidityError::ZeroDepth);
    }
    let mut sum = 0u128;
    let mut samples = 0u64;
    match sampling {
        NormSampling::PerOperation => {
            if n == log.depth_n {
                for f in &log.frames {
                    sum += (f.depth_bid + f.depth_ask) as u128;
                    samples += 2;
                }
            } else {
                scan_books(log, |_, book| {
                    sum += (book.volume_within(Side::Buy, n)
                        + book.volume_within(Side::Sell, n)) as u128;
                    samples += 2;
                });
            }
        }
        NormSampling::WallClock { interval_us } => {
            if interval_us <= 0 {
                return Err(LiquidityError::BadInterval { interval_us });
            }
            let open = log.session.effective_open_us();
            let close = log.session.session_close_us;
            for span in &log.days {
                let mut tod = open;
                while tod < close {
                    let t = log.session.at(span.day, tod);
                    match log.last_frame_at_or_before(span.day, t) {
                        Some(i) => {
                            if n == log.depth_n {
                                sum += (log.frames[i].depth_bid + log.frames[i].depth_ask) as u128;
                            } else {
                                let book = log.book_at(i);
                                sum += (book.volume_within(Side::Buy, n)
                                    + book.volume_within(Side::Sell, n))
                                    as u128;
                            }
                        }
                        None => {} // empty book before the first op: two zero samples
                    }
                    samples += 2;
                    tod += interval_us;
                }
            }
        }
    }
    if samples == 0 || sum == 0 {
        return Err(LiquidityError::ZeroSampledVolume);
    }
    Ok(sum as f64 / samples as f64)
}

/// Runs `f` over the book state after every frame, in order. One sequential
/// pass per day; used where per-frame stored depths do not suffice.
fn scan_books(log: &ReplayLog, mut f: impl FnMut(usize, &Book)) {
    for span in &log.days {
        let mut book = Book::with_policy(log.session.cancel_policy);
        for i in span.start..span.end {
            book.apply(&log.frames[i].event).expect("frame reapplies");
            f(i, &book);
        }
    }
}

/// What book states an averaged profile is taken over.
#[derive(Debug, Clone, Copy)]
pub enum ProfileConditioning<'a> {
    /// Every operation contributes one sample (event-weighted average).
    Unconditional,
    /// Only the states right before each event's window start contribute.
    PreEvent(&'a [LargeEvent]),
}

/// Mean (and standard error) of the side profile over the selected book
/// states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileAverage {
    pub side: Side,
    /// Depth `N`: `mean[i]` is the average volume at tick distance `i + 1`.
    pub depth: usize,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub n_samples: usize,
    /// Snapshots skipped because the side was empty.
    pub skipped_empty: usize,
}

/// Averages the side profile over operations or over pre-event snapshots.
/// Snapshots with an empty side are skipped (and counted); zero qualifying
/// snapshots is an error.
pub fn average_profile(
    log: &ReplayLog,
    side: Side,
    n: usize,
    conditioning: ProfileConditioning<'_>,
) -> Result<ProfileAverage, LiquidityError> {
    if n == 0 {
        return Err(LiquidityError::ZeroDepth);
    }
    let mut sum = vec![0.0f64; n];
    let mut sumsq = vec![0.0f64; n];
    let mut n_samples = 0usize;
    let mut skipped = 0usize;
    let mut add_book = |book: &Book| match book.side_profile(side, n) {
        Ok(profile) => {
            for (i, v) in profile.iter().enumerate() {
                let v = *v as f64;
                sum[i] += v;
                sumsq[i] += v * v;
            }
            n_samples += 1;
        }
        Err(_) => skipped += 1,
    };
    match conditioning {
        ProfileConditioning::Unconditional => {
            scan_books(log, |_, book| add_book(book));
        }
        ProfileConditioning::PreEvent(events) => {
            for ev in events {
                let book = log.book_before(ev.trigger_frame);
                add_book(&book);
            }
        }
    }
    if n_samples == 0 {
        return Err(LiquidityError::InsufficientSample);
    }
    let count = n_samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
    let se = sumsq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| {
            if n_samples < 2 {
                0.0
            } else {
                let var = (sq - count * m * m).max(0.0) / (count - 1.0);
                (var / count).sqrt()
            }
        })
        .collect();
    Ok(ProfileAverage {
        side,
        depth: n,
        mean,
        se,
        n_samples,
        skipped_empty: skipped,
    })
}

/// Liquidity of both sides at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiquiditySnapshot {
    pub timestamp_us: i64,
    pub delta: f64,
    pub l_bid: f64,
    pub l_ask: f64,
    /// `None` when both sides are empty within the depth range.
    pub imbalance: Option<f64>,
    pub bid_empty: bool,
    pub ask_empty: bool,
}

/// Computes both-side liquidity for one book state. An empty ladder yields
/// zero liquidity plus its flag rather than an error.
pub fn snapshot_from_book(
    book: &Book,
    timestamp_us: i64,
    delta: f64,
    n: usize,
    norm: f64,
) -> Result<LiquiditySnapshot, LiquidityError> {
    if n == 0 {
        return Err(LiquidityError::ZeroDepth);
    }
    let side_l = |side: Side| -> Result<(f64, bool), LiquidityError> {
        match book.side_profile(side, n) {
            Ok(profile) => Ok((exponential_liquidity(&profile, delta, norm)?, false)),
            Err(_) => {
                // still validate the parameters on the empty-side path
                exponential_liquidity(&[], delta, norm)?;
                Ok((0.0, true))
            }
        }
    };
    let (l_bid, bid_empty) = side_l(Side::Buy)?;
    let (l_ask, ask_empty) = side_l(Side::Sell)?;
    Ok(LiquiditySnapshot {
        timestamp_us,
        delta,
        l_bid,
        l_ask,
        imbalance: liquidity_imbalance(l_bid, l_ask),
        bid_empty,
        ask_empty,
    })
}

/// Liquidity snapshot at the start of each tiling window (`None` where no
/// operation preceded the window that day).
pub fn window_snapshots(
    log: &ReplayLog,
    windows: &[TiledWindow],
    delta: f64,
    n: usize,
    norm: f64,
) -> Result<Vec<Option<LiquiditySnapshot>>, LiquidityError> {
    windows
        .iter()
        .map(|w| match w.snapshot_frame {
            Some(frame) => {
                let book = log.book_at(frame);
                snapshot_from_book(&book, w.start_us, delta, n, norm).map(Some)
            }
            None => Ok(None),
        })
        .collect()
}
