//! Message-stream parsing, canonical serialization, and book replay.
//!
//! # Message format
//!
//! CSV with a mandatory header `timestamp_us,op,side,price_ticks,volume,order_ref`:
//!
//! - `timestamp_us`: integer microseconds since midnight of day 0. Whole
//!   86 400 s blocks separate trading days; each day replays from an empty
//!   book and the state at session close is discarded.
//! - `op`: `LO` (limit order), `MO` (market order) or `C` (cancellation).
//! - `side`: `B` or `S` — the *order* direction. A buy MO consumes the ask
//!   ladder.
//! - `price_ticks`: integer tick index. Must be empty for `MO`; may be empty
//!   for `C` rows that carry an `order_ref`.
//! - `volume`: positive integer share count.
//! - `order_ref`: optional opaque identifier linking a cancel to the level
//!   its limit order rested on.
//!
//! Lines starting with `#` are comments. Timestamps must be non-decreasing
//! across the whole file. [`serialize_messages`] writes this exact format
//! back out, so parse → serialize is byte-stable on canonical files.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{
    validate_event, Book, BookDelta, BookError, CancelPolicy, OpKind, OrderEvent, Side,
};

/// Microseconds per trading day block.
pub const DAY_US: i64 = 86_400_000_000;

const HEADER: [&str; 6] = ["timestamp_us", "op", "side", "price_ticks", "volume", "order_ref"];

/// Trading-session parameters shared by every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Price units per tick; only relevant when converting external prices.
    pub tick_size: f64,
    /// Session open as time of day (µs since midnight).
    pub session_open_us: i64,
    /// Session close as time of day (µs since midnight), exclusive.
    pub session_close_us: i64,
    /// Warm-up stretch after the open whose events are discarded.
    pub open_skip_us: i64,
    pub cancel_policy: CancelPolicy,
}

impl Default for SessionConfig {
    /// 08:00–16:30 session with the first 30 minutes discarded.
    fn default() -> Self {
        SessionConfig {
            tick_size: 1.0,
            session_open_us: 8 * 3_600_000_000,
            session_close_us: 16 * 3_600_000_000 + 1_800_000_000,
            open_skip_us: 1_800_000_000,
            cancel_policy: CancelPolicy::Clamp,
        }
    }
}

impl SessionConfig {
    /// First time of day whose events are kept.
    pub fn effective_open_us(&self) -> i64 {
        self.session_open_us + self.open_skip_us
    }

    /// Length of the analysed part of the session.
    pub fn session_len_us(&self) -> i64 {
        self.session_close_us - self.effective_open_us()
    }

    pub fn validate(&self) -> Result<(), ReplayError> {
        if self.tick_size <= 0.0 {
            return Err(ReplayError::InvalidSession {
                reason: format!("tick_size {} must be positive", self.tick_size),
            });
        }
        if self.session_open_us < 0 || self.open_skip_us < 0 {
            return Err(ReplayError::InvalidSession {
                reason: "session open and open skip must be non-negative".into(),
            });
        }
        if self.session_close_us > DAY_US {
            return Err(ReplayError::InvalidSession {
                reason: "session close past end of day".into(),
            });
        }
        if self.session_len_us() <= 0 {
            return Err(ReplayError::InvalidSession {
                reason: format!(
                    "empty session: open {} + skip {} >= close {}",
                    self.session_open_us, self.open_skip_us, self.session_close_us
                ),
            });
        }
        Ok(())
    }

    /// Trading day index of an absolute timestamp.
    pub fn day_of(&self, timestamp_us: i64) -> u32 {
        (timestamp_us / DAY_US) as u32
    }

    /// Time of day of an absolute timestamp.
    pub fn time_of_day(&self, timestamp_us: i64) -> i64 {
        timestamp_us % DAY_US
    }

    /// Absolute timestamp of a time of day on `day`.
    pub fn at(&self, day: u32, time_of_day_us: i64) -> i64 {
        day as i64 * DAY_US + time_of_day_us
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("i/o error reading messages: {0}")]
    Io(#[from] io::Error),
    #[error("missing or malformed header; expected `{}`", HEADER.join(","))]
    BadHeader,
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: {source}")]
    BadEvent { line: u64, source: BookError },
}

fn malformed(line: u64, reason: impl Into<String>) -> ParseError {
    ParseError::Malformed {
        line,
        reason: reason.into(),
    }
}

/// Parses a message CSV into events. Format errors carry the line number;
/// semantic stream errors (ordering, matching) surface later in [`replay`].
pub fn parse_messages(reader: impl Read) -> Result<Vec<OrderEvent>, ParseError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let mut events = Vec::new();
    let mut saw_header = false;
    for record in rdr.records() {
        let record = record.map_err(|e| match e.position() {
            Some(pos) => malformed(pos.line(), e.to_string()),
            None => ParseError::BadHeader,
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if !saw_header {
            if record.len() != HEADER.len() || !record.iter().eq(HEADER) {
                return Err(ParseError::BadHeader);
            }
            saw_header = true;
            continue;
        }
        if record.len() != HEADER.len() {
            return Err(malformed(
                line,
                format!("expected {} fields, found {}", HEADER.len(), record.len()),
            ));
        }
        let timestamp_us: i64 = record[0]
            .parse()
            .map_err(|_| malformed(line, format!("bad timestamp_us `{}`", &record[0])))?;
        if timestamp_us < 0 {
            return Err(malformed(line, "timestamp_us must be non-negative"));
        }
        let op = match &record[1] {
            "LO" => OpKind::Limit,
            "MO" => OpKind::Market,
            "C" => OpKind::Cancel,
            other => return Err(malformed(line, format!("bad op `{other}`"))),
        };
        let side = match &record[2] {
            "B" => Side::Buy,
            "S" => Side::Sell,
            other => return Err(malformed(line, format!("bad side `{other}`"))),
        };
        let price_ticks = if record[3].is_empty() {
            None
        } else {
            Some(
                record[3]
                    .parse::<i64>()
                    .map_err(|_| malformed(line, format!("bad price_ticks `{}`", &record[3])))?,
            )
        };
        let volume: u64 = record[4]
            .parse()
            .map_err(|_| malformed(line, format!("bad volume `{}`", &record[4])))?;
        let order_ref = if record[5].is_empty() {
            None
        } else {
            Some(record[5].to_string())
        };
        let ev = OrderEvent {
            timestamp_us,
            op,
            side,
            price_ticks,
            volume,
            order_ref,
        };
        validate_event(&ev).map_err(|source| ParseError::BadEvent { line, source })?;
        events.push(ev);
    }
    if !saw_header {
        return Err(ParseError::BadHeader);
    }
    Ok(events)
}

/// Writes events in the canonical message format.
pub fn serialize_messages(events: &[OrderEvent], mut writer: impl Write) -> io::Result<()> {
    writeln!(writer, "{}", HEADER.join(","))?;
    for ev in events {
        let price = ev.price_ticks.map(|p| p.to_string()).unwrap_or_default();
        let order_ref = ev.order_ref.as_deref().unwrap_or("");
        writeln!(
            writer,
            "{},{},{},{},{},{}",
            ev.timestamp_us,
            ev.op.code(),
            ev.side.code(),
            price,
            ev.volume,
            order_ref
        )?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("invalid session config: {reason}")]
    InvalidSession { reason: String },
    #[error("profile depth must be at least 1")]
    ZeroDepth,
    #[error("event {index} (t={timestamp_us}): timestamps must be non-decreasing")]
    OutOfOrder { index: usize, timestamp_us: i64 },
    #[error("event {index} (t={timestamp_us}): {source}")]
    Stream {
        index: usize,
        timestamp_us: i64,
        source: BookError,
    },
}

/// One applied in-session event with its immediate observables.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayFrame {
    /// Index within [`ReplayLog::frames`].
    pub index: usize,
    pub day: u32,
    pub event: OrderEvent,
    pub delta: BookDelta,
    pub best_bid: Option<i64>,
    pub best_ask: Option<i64>,
    /// Midprice in tick units after this event.
    pub midprice: Option<f64>,
    /// Total bid volume within `depth_n` ticks of the best bid, after.
    pub depth_bid: u64,
    /// Total ask volume within `depth_n` ticks of the best ask, after.
    pub depth_ask: u64,
}

impl ReplayFrame {
    pub fn timestamp_us(&self) -> i64 {
        self.event.timestamp_us
    }
}

/// Frame range of one trading day (`start..end` into [`ReplayLog::frames`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DaySpan {
    pub day: u32,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
struct Checkpoint {
    /// The stored book is the state after `frames[..frames_applied]`.
    frames_applied: usize,
    book: Book,
}

const CHECKPOINT_EVERY: usize = 128;

/// Result of replaying a stream: per-event frames plus enough book
/// checkpoints to hand out the full book at any frame without a re-replay
/// (nearest checkpoint + at most 127 buffered events).
#[derive(Debug, Clone)]
pub struct ReplayLog {
    pub session: SessionConfig,
    /// Depth used for the per-frame `depth_bid`/`depth_ask` totals.
    pub depth_n: usize,
    pub frames: Vec<ReplayFrame>,
    pub days: Vec<DaySpan>,
    /// Events discarded for falling outside the analysed session.
    pub dropped_events: u64,
    /// Total cancels clamped under [`CancelPolicy::Clamp`].
    pub clamped_cancels: u64,
    checkpoints: Vec<Checkpoint>,
}

/// Replays a parsed stream day by day. Each trading day starts from an empty
/// book; events outside `[open + skip, close)` are dropped (and counted).
pub fn replay(
    events: &[OrderEvent],
    session: &SessionConfig,
    depth_n: usize,
) -> Result<ReplayLog, ReplayError> {
    session.validate()?;
    if depth_n == 0 {
        return Err(ReplayError::ZeroDepth);
    }
    let mut log = ReplayLog {
        session: session.clone(),
        depth_n,
        frames: Vec::new(),
        days: Vec::new(),
        dropped_events: 0,
        clamped_cancels: 0,
        checkpoints: Vec::new(),
    };
    let mut book = Book::with_policy(session.cancel_policy);
    let mut current_day: Option<u32> = None;
    let mut last_ts = i64::MIN;
    let open = session.effective_open_us();
    let close = session.session_close_us;
    for (index, ev) in events.iter().enumerate() {
        if ev.timestamp_us < last_ts {
            return Err(ReplayError::OutOfOrder {
                index,
                timestamp_us: ev.timestamp_us,
            });
        }
        last_ts = ev.timestamp_us;
        let tod = session.time_of_day(ev.timestamp_us);
        if tod < open || tod >= close {
            log.dropped_events += 1;
            continue;
        }
        let day = session.day_of(ev.timestamp_us);
        if current_day != Some(day) {
            if let Some(d) = current_day {
                log.days.push(DaySpan {
                    day: d,
                    start: log.days.last().map(|s| s.end).unwrap_or(0),
                    end: log.frames.len(),
                });
                log.clamped_cancels += book.clamped_cancels;
            }
            // fresh book for the new day, checkpointed empty at its start
            book = Book::with_policy(session.cancel_policy);
            log.checkpoints.push(Checkpoint {
                frames_applied: log.frames.len(),
                book: book.clone(),
            });
            current_day = Some(day);
        }
        let delta = book.apply(ev).map_err(|source| ReplayError::Stream {
            index,
            timestamp_us: ev.timestamp_us,
            source,
        })?;
        let frame = ReplayFrame {
            index: log.frames.len(),
            day,
            event: ev.clone(),
            delta,
            best_bid: book.best_bid(),
            best_ask: book.best_ask(),
            midprice: book.midprice_ticks(),
            depth_bid: book.volume_within(Side::Buy, depth_n),
            depth_ask: book.volume_within(Side::Sell, depth_n),
        };
        log.frames.push(frame);
        if log.frames.len() % CHECKPOINT_EVERY == 0 {
            log.checkpoints.push(Checkpoint {
                frames_applied: log.frames.len(),
                book: book.clone(),
            });
        }
    }
    if let Some(d) = current_day {
        log.days.push(DaySpan {
            day: d,
            start: log.days.last().map(|s| s.end).unwrap_or(0),
            end: log.frames.len(),
        });
        log.clamped_cancels += book.clamped_cancels;
    }
    Ok(log)
}

impl ReplayLog {
    /// Book state immediately after `frames[frame]`.
    pub fn book_at(&self, frame: usize) -> Book {
        assert!(frame < self.frames.len(), "frame {frame} out of range");
        let target_day = self.frames[frame].day;
        let day_start = self.day_span(target_day).map(|s| s.start).unwrap_or(0);
        // Latest checkpoint at or before the frame and not before its day
        // start. The bound must be `<= frame`, not `frame + 1`: the next
        // day's boundary checkpoint sits at position `frame + 1` with a
        // fresh book and would otherwise shadow this day's closing state.
        let cp = self
            .checkpoints
            .iter()
            .rev()
            .find(|c| c.frames_applied <= frame && c.frames_applied >= day_start)
            .expect("day-start checkpoint always exists");
        let mut book = cp.book.clone();
        for f in &self.frames[cp.frames_applied..=frame] {
            book.apply(&f.event).expect("frame reapplies cleanly");
        }
        book
    }

    /// Book state immediately before `frames[frame]` (empty at a day start).
    pub fn book_before(&self, frame: usize) -> Book {
        let day = self.frames[frame].day;
        let start = self.day_span(day).map(|s| s.start).unwrap_or(0);
        if frame == start {
            Book::with_policy(self.session.cancel_policy)
        } else {
            self.book_at(frame - 1)
        }
    }

    pub fn day_span(&self, day: u32) -> Option<DaySpan> {
        self.days.iter().find(|s| s.day == day).copied()
    }

    /// Rightmost frame of `day` with timestamp `<= t_us`.
    pub fn last_frame_at_or_before(&self, day: u32, t_us: i64) -> Option<usize> {
        self.frame_upper_bound(day, t_us + 1)
    }

    /// Rightmost frame of `day` with timestamp strictly `< t_us`.
    pub fn last_frame_before(&self, day: u32, t_us: i64) -> Option<usize> {
        self.frame_upper_bound(day, t_us)
    }

    fn frame_upper_bound(&self, day: u32, t_exclusive_us: i64) -> Option<usize> {
        let span = self.day_span(day)?;
        let frames = &self.frames[span.start..span.end];
        let n = frames.partition_point(|f| f.timestamp_us() < t_exclusive_us);
        if n == 0 {
            None
        } else {
            Some(span.start + n - 1)
        }
    }

    /// Iterates frames of one day.
    pub fn day_frames(&self, span: DaySpan) -> &[ReplayFrame] {
        &self.frames[span.start..span.end]
    }
}
