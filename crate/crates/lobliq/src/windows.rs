//! Fixed-length windows tiling each session.
//!
//! Most analyses look at the book "at the beginning of a time window" and at
//! the return accumulated over it. A [`TiledWindow`] of length `delta_t`
//! starting at `t` uses:
//!
//! - snapshot: the book after the last operation strictly before `t`,
//! - return: `ln m(end⁻) − ln m(t⁻)`, the midprices prevailing at the two
//!   boundaries,
//!
//! so the flow inside `[t, t + delta_t)` is exactly what separates the two
//! states. Windows tile `[open + skip, close)` per day; a trailing stretch
//! shorter than `delta_t` is not emitted.
//!
//! (Event *detection* uses per-operation anchored windows instead — see
//! [`crate::detect`] — this module is about the tiling used by flow, response
//! and liquidity statistics.)

use thiserror::Error;

use crate::ingest::ReplayLog;

#[derive(Debug, Error, PartialEq)]
pub enum WindowError {
    #[error("window length must be positive, got {delta_t_us} us")]
    BadDeltaT { delta_t_us: i64 },
}

/// One tiling window of a session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiledWindow {
    pub day: u32,
    /// Absolute start, inclusive.
    pub start_us: i64,
    /// Absolute end, exclusive.
    pub end_us: i64,
    /// Last frame strictly before `start_us` (same day); the snapshot state.
    pub snapshot_frame: Option<usize>,
    /// Last frame strictly before `end_us` (same day).
    pub end_frame: Option<usize>,
    /// `ln m(end) − ln m(start)`; `None` if either midprice is undefined.
    pub log_return: Option<f64>,
}

impl TiledWindow {
    /// Whether an absolute timestamp falls inside `[start, end)`.
    pub fn contains(&self, t_us: i64) -> bool {
        t_us >= self.start_us && t_us < self.end_us
    }
}

/// Tiles every replayed day with windows of length `delta_t_us`.
pub fn tile_windows(log: &ReplayLog, delta_t_us: i64) -> Result<Vec<TiledWindow>, WindowError> {
    if delta_t_us <= 0 {
        return Err(WindowError::BadDeltaT { delta_t_us });
    }
    let session = &log.session;
    let open = session.effective_open_us();
    let close = session.session_close_us;
    let mut windows = Vec::new();
    for span in &log.days {
        let day = span.day;
        let mut start_tod = open;
        while start_tod + delta_t_us <= close {
            let start_us = session.at(day, start_tod);
            let end_us = start_us + delta_t_us;
            let snapshot_frame = log.last_frame_before(day, start_us);
            let end_frame = log.last_frame_before(day, end_us);
            let m0 = snapshot_frame.and_then(|i| log.frames[i].midprice);
            let m1 = end_frame.and_then(|i| log.frames[i].midprice);
            let log_return = match (m0, m1) {
                (Some(m0), Some(m1)) => Some((m1 / m0).ln()),
                _ => None,
            };
            windows.push(TiledWindow {
                day,
                start_us,
                end_us,
                snapshot_frame,
                end_frame,
                log_return,
            });
            start_tod += delta_t_us;
        }
    }
    Ok(windows)
}

/// Index of the window containing an absolute timestamp, if any.
pub fn containing_window(windows: &[TiledWindow], day: u32, t_us: i64) -> Option<usize> {
    windows
        .iter()
        .position(|w| w.day == day && w.contains(t_us))
}

/// Sample standard deviation of all defined window returns. This is the
/// "average yearly volatility" used to express returns in sigma units.
pub fn pooled_return_std(windows: &[TiledWindow]) -> Option<f64> {
    let returns: Vec<f64> = windows.iter().filter_map(|w| w.log_return).collect();
    if returns.len() < 2 {
        return None;
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some(var.sqrt())
}
