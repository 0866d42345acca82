//! Price-level limit order book on an integer tick grid.
//!
//! Conventions used throughout the crate:
//!
//! - Prices are integer tick indices (`i64`). A real `tick_size` exists only
//!   at I/O boundaries; see [`OrderEvent::with_price_units`].
//! - Volumes are share counts (`u64`). Each price level stores aggregate
//!   volume only — individual queue positions are never tracked.
//! - A buy limit order priced at or above the best ask executes immediately
//!   against the ask ladder ("effective market order"); any residual volume
//!   rests on the bid ladder. Symmetrically for sells.
//! - Midprice is `(best_bid + best_ask)/2` in tick units, undefined while
//!   either side is empty.
//!
//! The non-crossing invariant `best_bid < best_ask` holds after every
//! applied operation because crossing volume is matched out immediately.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Order direction. Buy orders rest on (or consume into) the bid ladder,
/// sell orders on the ask ladder; market orders consume the opposite ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }

    /// Single-letter code used in the message CSV format.
    pub fn code(self) -> &'static str {
        match self {
            Side::Buy => "B",
            Side::Sell => "S",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Operation kind carried by a message row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    /// Limit order placement (may partially or fully cross).
    Limit,
    /// Market order: consumes the opposite ladder, price field empty.
    Market,
    /// Cancellation of resting volume.
    Cancel,
}

impl OpKind {
    pub fn code(self) -> &'static str {
        match self {
            OpKind::Limit => "LO",
            OpKind::Market => "MO",
            OpKind::Cancel => "C",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// One order-book message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderEvent {
    /// Microseconds since midnight of day 0; whole days separate sessions.
    pub timestamp_us: i64,
    pub op: OpKind,
    pub side: Side,
    /// Tick index. `None` for market orders (and for cancels resolved via
    /// `order_ref`).
    pub price_ticks: Option<i64>,
    pub volume: u64,
    /// Opaque order identifier; lets a cancel target the level its limit
    /// order rested on without repeating the price.
    pub order_ref: Option<String>,
}

impl OrderEvent {
    pub fn limit(timestamp_us: i64, side: Side, price_ticks: i64, volume: u64) -> Self {
        OrderEvent {
            timestamp_us,
            op: OpKind::Limit,
            side,
            price_ticks: Some(price_ticks),
            volume,
            order_ref: None,
        }
    }

    pub fn market(timestamp_us: i64, side: Side, volume: u64) -> Self {
        OrderEvent {
            timestamp_us,
            op: OpKind::Market,
            side,
            price_ticks: None,
            volume,
            order_ref: None,
        }
    }

    pub fn cancel(timestamp_us: i64, side: Side, price_ticks: i64, volume: u64) -> Self {
        OrderEvent {
            timestamp_us,
            op: OpKind::Cancel,
            side,
            price_ticks: Some(price_ticks),
            volume,
            order_ref: None,
        }
    }

    /// Builds an event from a price in real units, validating that it sits on
    /// the tick grid (within 1e-6 relative of a tick multiple).
    pub fn with_price_units(
        timestamp_us: i64,
        op: OpKind,
        side: Side,
        price: f64,
        tick_size: f64,
        volume: u64,
    ) -> Result<Self, BookError> {
        if tick_size <= 0.0 {
            return Err(BookError::BadTickSize { tick_size });
        }
        let ratio = price / tick_size;
        let ticks = ratio.round();
        if (ratio - ticks).abs() > 1e-6 * ratio.abs().max(1.0) {
            return Err(BookError::OffGrid { price, tick_size });
        }
        let mut ev = OrderEvent {
            timestamp_us,
            op,
            side,
            price_ticks: Some(ticks as i64),
            volume,
            order_ref: None,
        };
        if op == OpKind::Market {
            ev.price_ticks = None;
        }
        validate_event(&ev)?;
        Ok(ev)
    }
}

/// Checks the structural preconditions shared by all entry points: positive
/// volume, a price where one is required, no price on market orders.
pub fn validate_event(ev: &OrderEvent) -> Result<(), BookError> {
    if ev.volume == 0 {
        return Err(BookError::ZeroVolume);
    }
    match ev.op {
        OpKind::Limit => {
            if ev.price_ticks.is_none() {
                return Err(BookError::MissingPrice { op: ev.op });
            }
        }
        OpKind::Market => {
            if ev.price_ticks.is_some() {
                return Err(BookError::UnexpectedPrice);
            }
        }
        OpKind::Cancel => {
            if ev.price_ticks.is_none() && ev.order_ref.is_none() {
                return Err(BookError::MissingPrice { op: ev.op });
            }
        }
    }
    Ok(())
}

/// What to do with a cancellation that names more volume than rests at its
/// level (or a level that does not exist).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CancelPolicy {
    /// Remove what is there, flag the delta, count it. Default.
    #[default]
    Clamp,
    /// Treat any inconsistency as a stream error.
    Strict,
}

#[derive(Debug, Error, PartialEq)]
pub enum BookError {
    #[error("order volume must be positive")]
    ZeroVolume,
    #[error("{op} event requires a price")]
    MissingPrice { op: OpKind },
    #[error("market orders must not carry a price")]
    UnexpectedPrice,
    #[error("price {price} is off the tick grid (tick size {tick_size})")]
    OffGrid { price: f64, tick_size: f64 },
    #[error("tick size {tick_size} must be positive")]
    BadTickSize { tick_size: f64 },
    #[error("market order against empty {side:?} ladder")]
    NoLiquidity { side: Side },
    #[error("cancel of {requested} at tick {price_ticks} exceeds resting {resting} ({side:?})")]
    InconsistentCancel {
        side: Side,
        price_ticks: i64,
        requested: u64,
        resting: u64,
    },
    #[error("cancel references unknown order ref {order_ref:?}")]
    UnknownOrderRef { order_ref: String },
    #[error("side profile requested for empty {side:?} ladder")]
    EmptySide { side: Side },
    #[error("depth must be at least 1")]
    ZeroDepth,
}

/// A change to one price level, expressed relative to the pre-operation book.
///
/// `tick_distance` counts from that ladder's best price *immediately before*
/// the operation applied, with 1 meaning at-the-best (distances can be zero
/// or negative for price-improving placements, and `None` when the ladder was
/// empty). Downstream flow accounting classifies at-the-best operations as
/// `tick_distance == Some(1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelTouch {
    /// Ladder the touched level lives on: `Buy` = bid ladder, `Sell` = ask.
    pub side: Side,
    pub price_ticks: i64,
    pub tick_distance: Option<i64>,
    /// Signed volume change: positive for added resting volume.
    pub volume_delta: i64,
}

/// Outcome of applying one event: executed volume, midprice move, and the
/// per-level changes. Applying `touched` to the pre-operation book
/// reconstructs the post-operation book exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookDelta {
    /// Total volume traded by this event (market order or crossing portion
    /// of a limit order); equals the volume removed from the opposite ladder.
    pub executed_volume: u64,
    pub midprice_before: Option<f64>,
    pub midprice_after: Option<f64>,
    pub touched: Vec<LevelTouch>,
    /// A market order (or crossing limit order) consumed the entire opposite
    /// ladder and still had volume left.
    pub liquidity_exhausted: bool,
    /// The cancel was inconsistent and got clamped under
    /// [`CancelPolicy::Clamp`].
    pub clamped: bool,
}

impl BookDelta {
    /// Volume that ended up resting on the event's own ladder (limit orders
    /// only; zero for fully crossing placements, market orders and cancels).
    pub fn resting_volume(&self, own_side: Side) -> u64 {
        self.touched
            .iter()
            .filter(|t| t.side == own_side && t.volume_delta > 0)
            .map(|t| t.volume_delta as u64)
            .sum()
    }

    /// Distance of the resting portion from its ladder's pre-operation best.
    pub fn resting_distance(&self, own_side: Side) -> Option<i64> {
        self.touched
            .iter()
            .find(|t| t.side == own_side && t.volume_delta > 0)
            .and_then(|t| t.tick_distance)
    }
}

/// Aggregate-volume limit order book.
///
/// ```
/// use lobliq::book::{Book, OrderEvent, Side};
///
/// let mut book = Book::new();
/// book.apply(&OrderEvent::limit(0, Side::Buy, 1000, 100)).unwrap();
/// book.apply(&OrderEvent::limit(0, Side::Sell, 1002, 50)).unwrap();
/// assert_eq!(book.best_bid(), Some(1000));
/// assert_eq!(book.best_ask(), Some(1002));
/// assert_eq!(book.midprice_ticks(), Some(1001.0));
/// ```
#[derive(Debug, Clone, Default)]
pub struct Book {
    bids: BTreeMap<i64, u64>,
    asks: BTreeMap<i64, u64>,
    refs: HashMap<String, (Side, i64)>,
    policy: CancelPolicy,
    /// Timestamp of the last applied event (microseconds), 0 before any.
    pub last_update_us: i64,
    /// Number of cancels clamped so far under [`CancelPolicy::Clamp`].
    pub clamped_cancels: u64,
}

impl PartialEq for Book {
    /// Books compare by ladder contents only; bookkeeping (ref map, counters,
    /// policy) is excluded so replays can be checked against oracles.
    fn eq(&self, other: &Self) -> bool {
        self.bids == other.bids && self.asks == other.asks
    }
}

impl Book {
    pub fn new() -> Self {
        Book::default()
    }

    pub fn with_policy(policy: CancelPolicy) -> Self {
        Book {
            policy,
            ..Book::default()
        }
    }

    fn ladder(&self, side: Side) -> &BTreeMap<i64, u64> {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }

    fn ladder_mut(&mut self, side: Side) -> &mut BTreeMap<i64, u64> {
        match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        }
    }

    pub fn best_bid(&self) -> Option<i64> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<i64> {
        self.asks.keys().next().copied()
    }

    /// Best price of a ladder: highest bid or lowest ask.
    pub fn best(&self, side: Side) -> Option<i64> {
        match side {
            Side::Buy => self.best_bid(),
            Side::Sell => self.best_ask(),
        }
    }

    /// Midprice in tick units; `None` while either side is empty.
    pub fn midprice_ticks(&self) -> Option<f64> {
        match (self.best_bid(), self.best_ask()) {
            (Some(b), Some(a)) => Some((b + a) as f64 / 2.0),
            _ => None,
        }
    }

    pub fn level_volume(&self, side: Side, price_ticks: i64) -> u64 {
        self.ladder(side).get(&price_ticks).copied().unwrap_or(0)
    }

    pub fn is_empty(&self, side: Side) -> bool {
        self.ladder(side).is_empty()
    }

    pub fn total_volume(&self, side: Side) -> u64 {
        self.ladder(side).values().sum()
    }

    /// Number of occupied price levels on a ladder.
    pub fn depth(&self, side: Side) -> usize {
        self.ladder(side).len()
    }

    /// Ladder contents in ascending price order.
    pub fn levels(&self, side: Side) -> Vec<(i64, u64)> {
        self.ladder(side).iter().map(|(p, v)| (*p, *v)).collect()
    }

    /// Volume at the first `n` ticks from the ladder's best, best first.
    ///
    /// Index `i` holds the volume at tick distance `i + 1`, so unoccupied
    /// ticks show as zeros:
    ///
    /// ```
    /// use lobliq::book::{Book, OrderEvent, Side};
    /// let mut book = Book::new();
    /// book.apply(&OrderEvent::limit(0, Side::Sell, 1005, 50)).unwrap();
    /// book.apply(&OrderEvent::limit(0, Side::Sell, 1007, 20)).unwrap();
    /// assert_eq!(book.side_profile(Side::Sell, 4).unwrap(), vec![50, 0, 20, 0]);
    /// ```
    pub fn side_profile(&self, side: Side, n: usize) -> Result<Vec<u64>, BookError> {
        if n == 0 {
            return Err(BookError::ZeroDepth);
        }
        let best = self.best(side).ok_or(BookError::EmptySide { side })?;
        let mut profile = vec![0u64; n];
        match side {
            Side::Sell => {
                for (&p, &v) in self.asks.range(best..best + n as i64) {
                    profile[(p - best) as usize] = v;
                }
            }
            Side::Buy => {
                for (&p, &v) in self.bids.range(best - n as i64 + 1..=best) {
                    profile[(best - p) as usize] = v;
                }
            }
        }
        Ok(profile)
    }

    /// Total volume within `n` ticks of the ladder's best (zero for an empty
    /// ladder).
    pub fn volume_within(&self, side: Side, n: usize) -> u64 {
        let Some(best) = self.best(side) else {
            return 0;
        };
        match side {
            Side::Sell => self.asks.range(best..best + n as i64).map(|(_, v)| v).sum(),
            Side::Buy => self
                .bids
                .range(best - n as i64 + 1..=best)
                .map(|(_, v)| v)
                .sum(),
        }
    }

    /// Applies one event, returning the resulting delta.
    ///
    /// Limit orders cross while priced through the opposite best; market
    /// orders walk the opposite ladder and flag exhaustion instead of
    /// erroring when they run out of volume (an entirely empty opposite
    /// ladder is still an error). Cancels follow the configured
    /// [`CancelPolicy`].
    pub fn apply(&mut self, ev: &OrderEvent) -> Result<BookDelta, BookError> {
        validate_event(ev)?;
        let midprice_before = self.midprice_ticks();
        let mut delta = BookDelta {
            executed_volume: 0,
            midprice_before,
            midprice_after: None,
            touched: Vec::new(),
            liquidity_exhausted: false,
            clamped: false,
        };
        match ev.op {
            OpKind::Limit => self.apply_limit(ev, &mut delta),
            OpKind::Market => self.apply_market(ev, &mut delta)?,
            OpKind::Cancel => self.apply_cancel(ev, &mut delta)?,
        }
        delta.midprice_after = self.midprice_ticks();
        self.last_update_us = ev.timestamp_us;
        if let (Some(b), Some(a)) = (self.best_bid(), self.best_ask()) {
            debug_assert!(b < a, "crossed book after {ev:?}: bid {b} >= ask {a}");
        }
        Ok(delta)
    }

    /// Consumes up to `volume` from the `taker`'s opposite ladder, walking
    /// from the best. `limit` bounds how deep a crossing limit order may eat.
    fn consume(
        &mut self,
        taker: Side,
        volume: u64,
        limit: Option<i64>,
        delta: &mut BookDelta,
    ) -> u64 {
        let maker = taker.opposite();
        let pre_best = match self.best(maker) {
            Some(b) => b,
            None => return volume,
        };
        let mut remaining = volume;
        while remaining > 0 {
            let Some(best) = self.best(maker) else {
                break;
            };
            if let Some(lim) = limit {
                let through = match taker {
                    Side::Buy => best <= lim,
                    Side::Sell => best >= lim,
                };
                if !through {
                    break;
                }
            }
            let ladder = self.ladder_mut(maker);
            let level = ladder.get_mut(&best).expect("best level exists");
            let take = remaining.min(*level);
            *level -= take;
            if *level == 0 {
                ladder.remove(&best);
            }
            remaining -= take;
            delta.executed_volume += take;
            delta.touched.push(LevelTouch {
                side: maker,
                price_ticks: best,
                tick_distance: Some((best - pre_best).abs() + 1),
                volume_delta: -(take as i64),
            });
        }
        remaining
    }

    fn apply_limit(&mut self, ev: &OrderEvent, delta: &mut BookDelta) {
        let price = ev.price_ticks.expect("validated");
        let crosses = match (ev.side, self.best(ev.side.opposite())) {
            (Side::Buy, Some(ask)) => price >= ask,
            (Side::Sell, Some(bid)) => price <= bid,
            _ => false,
        };
        let mut remaining = ev.volume;
        if crosses {
            remaining = self.consume(ev.side, remaining, Some(price), delta);
            if remaining > 0 && self.is_empty(ev.side.opposite()) {
                delta.liquidity_exhausted = true;
            }
        }
        if remaining > 0 {
            let pre_best = self.best(ev.side);
            let distance = pre_best.map(|b| match ev.side {
                Side::Buy => b - price + 1,
                Side::Sell => price - b + 1,
            });
            *self.ladder_mut(ev.side).entry(price).or_insert(0) += remaining;
            delta.touched.push(LevelTouch {
                side: ev.side,
                price_ticks: price,
                tick_distance: distance,
                volume_delta: remaining as i64,
            });
            if let Some(r) = &ev.order_ref {
                self.refs.insert(r.clone(), (ev.side, price));
            }
        }
    }

    fn apply_market(&mut self, ev: &OrderEvent, delta: &mut BookDelta) -> Result<(), BookError> {
        let maker = ev.side.opposite();
        if self.is_empty(maker) {
            return Err(BookError::NoLiquidity { side: maker });
        }
        let remaining = self.consume(ev.side, ev.volume, None, delta);
        if remaining > 0 {
            delta.liquidity_exhausted = true;
        }
        Ok(())
    }

    fn apply_cancel(&mut self, ev: &OrderEvent, delta: &mut BookDelta) -> Result<(), BookError> {
        // Resolve the targeted level: an order ref wins over an explicit
        // price; a ref that resolved is consumed by this cancel.
        let (side, price) = match &ev.order_ref {
            Some(r) => match self.refs.remove(r) {
                Some(target) => target,
                None => match ev.price_ticks {
                    Some(p) => (ev.side, p),
                    None => match self.policy {
                        CancelPolicy::Strict => {
                            return Err(BookError::UnknownOrderRef {
                                order_ref: r.clone(),
                            })
                        }
                        CancelPolicy::Clamp => {
                            self.clamped_cancels += 1;
                            delta.clamped = true;
                            return Ok(());
                        }
                    },
                },
            },
            None => (ev.side, ev.price_ticks.expect("validated")),
        };
        let pre_best = self.best(side);
        let resting = self.level_volume(side, price);
        let removed = if resting >= ev.volume {
            ev.volume
        } else {
            match self.policy {
                CancelPolicy::Strict => {
                    return Err(BookError::InconsistentCancel {
                        side,
                        price_ticks: price,
                        requested: ev.volume,
                        resting,
                    })
                }
                CancelPolicy::Clamp => {
                    self.clamped_cancels += 1;
                    delta.clamped = true;
                    resting
                }
            }
        };
        if removed > 0 {
            let ladder = self.ladder_mut(side);
            let level = ladder.get_mut(&price).expect("resting volume checked");
            *level -= removed;
            if *level == 0 {
                ladder.remove(&price);
            }
            delta.touched.push(LevelTouch {
                side,
                price_ticks: price,
                tick_distance: pre_best.map(|b| match side {
                    Side::Buy => b - price + 1,
                    Side::Sell => price - b + 1,
                }),
                volume_delta: -(removed as i64),
            });
        }
        Ok(())
    }
}
