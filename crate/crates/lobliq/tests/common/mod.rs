//! Shared oracles and stream builders for the integration suites.
//!
//! Everything here is deliberately naive: flat vectors, linear scans,
//! direct formula evaluation. The point is an implementation so simple it
//! can be checked by eye, against which the engine's optimised paths are
//! compared exactly.

#![allow(dead_code)]

use rand::prelude::*;

use lobliq::book::{CancelPolicy, OpKind, OrderEvent, Side};
use lobliq::detect::{DetectParams, LargeEvent, VolatilityStat};
use lobliq::ingest::{ReplayLog, SessionConfig, DAY_US};

// ---- naive matcher ---------------------------------------------------------

/// Brute-force order book: unsorted level lists, linear scans everywhere.
#[derive(Debug, Clone, Default)]
pub struct NaiveBook {
    pub bids: Vec<(i64, u64)>,
    pub asks: Vec<(i64, u64)>,
    pub refs: Vec<(String, Side, i64)>,
    pub clamped_cancels: u64,
}

impl NaiveBook {
    pub fn new() -> Self {
        NaiveBook::default()
    }

    fn levels_mut(&mut self, side: Side) -> &mut Vec<(i64, u64)> {
        match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        }
    }

    fn levels(&self, side: Side) -> &Vec<(i64, u64)> {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }

    pub fn best(&self, side: Side) -> Option<i64> {
        let levels = self.levels(side);
        match side {
            Side::Buy => levels.iter().map(|&(p, _)| p).max(),
            Side::Sell => levels.iter().map(|&(p, _)| p).min(),
        }
    }

    pub fn is_empty(&self, side: Side) -> bool {
        self.levels(side).is_empty()
    }

    pub fn volume_at(&self, side: Side, price: i64) -> u64 {
        self.levels(side)
            .iter()
            .find(|&&(p, _)| p == price)
            .map(|&(_, v)| v)
            .unwrap_or(0)
    }

    fn add(&mut self, side: Side, price: i64, volume: u64) {
        let levels = self.levels_mut(side);
        match levels.iter_mut().find(|(p, _)| *p == price) {
            Some((_, v)) => *v += volume,
            None => levels.push((price, volume)),
        }
    }

    fn remove(&mut self, side: Side, price: i64, volume: u64) {
        let levels = self.levels_mut(side);
        let idx = levels
            .iter()
            .position(|&(p, _)| p == price)
            .expect("level exists");
        levels[idx].1 -= volume;
        if levels[idx].1 == 0 {
            levels.swap_remove(idx);
        }
    }

    /// Consumes up to `volume` from the `taker`'s opposite ladder, walking
    /// from the best, optionally bounded by a limit price. Returns what is
    /// left of the order.
    fn consume(&mut self, taker: Side, mut volume: u64, limit: Option<i64>) -> u64 {
        let maker = taker.opposite();
        while volume > 0 {
            let Some(best) = self.best(maker) else { break };
            if let Some(lim) = limit {
                let through = match taker {
                    Side::Buy => best <= lim,
                    Side::Sell => best >= lim,
                };
                if !through {
                    break;
                }
            }
            let avail = self.volume_at(maker, best);
            let take = volume.min(avail);
            self.remove(maker, best, take);
            volume -= take;
        }
        volume
    }

    /// Applies one event under [`CancelPolicy::Clamp`] semantics. Market
    /// orders against an entirely empty opposite ladder are the caller's
    /// bug (the engine errors there), hence the panic.
    pub fn apply(&mut self, ev: &OrderEvent) {
        match ev.op {
            OpKind::Limit => {
                let price = ev.price_ticks.expect("limit order price");
                let crosses = match (ev.side, self.best(ev.side.opposite())) {
                    (Side::Buy, Some(ask)) => price >= ask,
                    (Side::Sell, Some(bid)) => price <= bid,
                    _ => false,
                };
                let remaining = if crosses {
                    self.consume(ev.side, ev.volume, Some(price))
                } else {
                    ev.volume
                };
                if remaining > 0 {
                    self.add(ev.side, price, remaining);
                    if let Some(r) = &ev.order_ref {
                        self.refs.retain(|(name, _, _)| name != r);
                        self.refs.push((r.clone(), ev.side, price));
                    }
                }
            }
            OpKind::Market => {
                assert!(
                    !self.is_empty(ev.side.opposite()),
                    "oracle stream emitted a market order against an empty ladder"
                );
                self.consume(ev.side, ev.volume, None);
            }
            OpKind::Cancel => {
                let target = match &ev.order_ref {
                    Some(r) => match self.refs.iter().position(|(name, _, _)| name == r) {
                        Some(i) => {
                            let (_, side, price) = self.refs.swap_remove(i);
                            Some((side, price))
                        }
                        None => match ev.price_ticks {
                            Some(p) => Some((ev.side, p)),
                            None => {
                                self.clamped_cancels += 1;
                                None
                            }
                        },
                    },
                    None => Some((ev.side, ev.price_ticks.expect("cancel price"))),
                };
                if let Some((side, price)) = target {
                    let resting = self.volume_at(side, price);
                    let removed = if resting >= ev.volume {
                        ev.volume
                    } else {
                        self.clamped_cancels += 1;
                        resting
                    };
                    if removed > 0 {
                        self.remove(side, price, removed);
                    }
                }
            }
        }
    }

    /// Ladder contents in ascending price order, for comparison with the
    /// engine's `levels()`.
    pub fn sorted_levels(&self, side: Side) -> Vec<(i64, u64)> {
        let mut levels = self.levels(side).clone();
        levels.sort_unstable();
        levels
    }
}

/// Naive session replay: one fresh [`NaiveBook`] per day, events outside
/// `[open + skip, close)` dropped. Returns the per-day final books (in day
/// order), the dropped-event count and the clamp total.
pub fn naive_replay(
    events: &[OrderEvent],
    session: &SessionConfig,
) -> (Vec<(u32, NaiveBook)>, u64, u64) {
    let open = session.effective_open_us();
    let close = session.session_close_us;
    let mut days: Vec<(u32, NaiveBook)> = Vec::new();
    let mut dropped = 0u64;
    for ev in events {
        let tod = ev.timestamp_us % DAY_US;
        if tod < open || tod >= close {
            dropped += 1;
            continue;
        }
        let day = (ev.timestamp_us / DAY_US) as u32;
        if days.last().map(|(d, _)| *d) != Some(day) {
            days.push((day, NaiveBook::new()));
        }
        days.last_mut().unwrap().1.apply(ev);
    }
    let clamped = days.iter().map(|(_, b)| b.clamped_cancels).sum();
    (days, dropped, clamped)
}

// ---- random stream builder -------------------------------------------------

/// Draws a random but replayable message stream: mixed operations, crossing
/// limit orders, clamped cancels, order refs (live, stale, unknown), ties in
/// timestamps, out-of-session noise, and 1–3 trading days. Market orders are
/// only emitted against a non-empty ladder (guarded through the oracle book,
/// which is the reference semantics) so the stream replays without errors.
pub fn random_stream(rng: &mut StdRng, n_messages: usize, session: &SessionConfig) -> Vec<OrderEvent> {
    let lo = 10_000i64 - 100;
    let hi = 10_000i64 + 100; // <= 200 distinct price levels
    let n_days = rng.gen_range(1..=3u32);
    let open = session.effective_open_us();
    let close = session.session_close_us;
    let mut events = Vec::with_capacity(n_messages);
    let mut shadow = NaiveBook::new();
    let mut day = 0u32;
    let mut t = day as i64 * DAY_US + open;
    let mut ref_counter = 0u64;
    let mut live_refs: Vec<String> = Vec::new();
    for i in 0..n_messages {
        // occasionally jump to the next day; the oracle resets there. An
        // after-close straggler on the old day must be dropped by both.
        if n_days > 1 && day + 1 < n_days && rng.gen_bool(1.0 / (n_messages as f64 / n_days as f64)) {
            if rng.gen_bool(0.5) {
                events.push(OrderEvent::limit(
                    day as i64 * DAY_US + rng.gen_range(close..DAY_US),
                    Side::Buy,
                    rng.gen_range(lo..=hi),
                    rng.gen_range(1..50),
                ));
            }
            day += 1;
            t = day as i64 * DAY_US + open;
            shadow = NaiveBook::new();
            live_refs.clear();
        }
        // ties in ~10% of steps, otherwise advance up to 1 ms
        if !rng.gen_bool(0.1) {
            t += rng.gen_range(1..1000);
        }
        if (t % DAY_US) >= close {
            break;
        }
        let side = if rng.gen() { Side::Buy } else { Side::Sell };
        let ev = match rng.gen_range(0..10) {
            // limit orders dominate; some carry refs, some cross
            0..=4 => {
                let price = rng.gen_range(lo..=hi);
                let mut ev = OrderEvent::limit(t, side, price, rng.gen_range(1..120));
                if rng.gen_bool(0.3) {
                    ref_counter += 1;
                    let name = format!("r{ref_counter}");
                    live_refs.push(name.clone());
                    ev.order_ref = Some(name);
                }
                ev
            }
            5..=6 => {
                if shadow.is_empty(side.opposite()) {
                    OrderEvent::limit(t, side, rng.gen_range(lo..=hi), rng.gen_range(1..120))
                } else {
                    // sometimes big enough to sweep several levels
                    OrderEvent::market(t, side, rng.gen_range(1..400))
                }
            }
            7..=8 => OrderEvent::cancel(t, side, rng.gen_range(lo..=hi), rng.gen_range(1..150)),
            _ => {
                // ref cancel: live, already-consumed, or entirely unknown
                let name = if !live_refs.is_empty() && rng.gen_bool(0.7) {
                    let idx = rng.gen_range(0..live_refs.len());
                    if rng.gen_bool(0.5) {
                        live_refs.swap_remove(idx)
                    } else {
                        live_refs[idx].clone()
                    }
                } else {
                    format!("ghost{i}")
                };
                OrderEvent {
                    timestamp_us: t,
                    op: OpKind::Cancel,
                    side,
                    price_ticks: if rng.gen_bool(0.5) {
                        Some(rng.gen_range(lo..=hi))
                    } else {
                        None
                    },
                    volume: rng.gen_range(1..100),
                    order_ref: Some(name),
                }
            }
        };
        let tod = ev.timestamp_us % DAY_US;
        if tod >= open && tod < close {
            shadow.apply(&ev);
        }
        events.push(ev);
    }
    // a trailing after-close straggler, dropped by both implementations
    if let Some(last) = events.last() {
        let last_day = last.timestamp_us / DAY_US;
        events.push(OrderEvent::limit(
            last_day * DAY_US + rng.gen_range(close..DAY_US),
            Side::Sell,
            rng.gen_range(lo..=hi),
            7,
        ));
    }
    events
}

// ---- quadratic detection oracle -------------------------------------------

/// Candidate return anchored at `frame`, by linear scan over the whole day.
fn oracle_anchored_return(log: &ReplayLog, frame: usize, delta_t_us: i64) -> Option<f64> {
    let f = &log.frames[frame];
    let t = f.timestamp_us();
    if t % DAY_US + delta_t_us > log.session.session_close_us {
        return None;
    }
    let m0 = f.midprice?;
    let mut end: Option<usize> = None;
    for (j, g) in log.frames.iter().enumerate() {
        if g.day == f.day && g.timestamp_us() <= t + delta_t_us {
            end = Some(j);
        }
    }
    let m1 = log.frames[end?].midprice?;
    Some((m1 / m0).ln())
}

/// Fully quadratic re-derivation of the dual-filter detector: per-bucket
/// sigma by full scans, candidate windows by full scans, run collapse,
/// then quadratic declustering. Mirrors the documented definitions only.
pub fn oracle_detect(log: &ReplayLog, params: &DetectParams) -> Vec<LargeEvent> {
    let open = log.session.effective_open_us();
    let close = log.session.session_close_us;
    let n_buckets = ((close - open) / params.bucket_width_us) as usize;
    let bucket_of = |t_us: i64| (((t_us % DAY_US) - open) / params.bucket_width_us) as usize;

    // per-bucket sigma
    let mut abs_sum = vec![0.0f64; n_buckets];
    let mut sum = vec![0.0f64; n_buckets];
    let mut sumsq = vec![0.0f64; n_buckets];
    let mut counts = vec![0u64; n_buckets];
    for i in 0..log.frames.len() {
        if let Some(r) = oracle_anchored_return(log, i, params.delta_t_us) {
            let b = bucket_of(log.frames[i].timestamp_us());
            abs_sum[b] += r.abs();
            sum[b] += r;
            sumsq[b] += r * r;
            counts[b] += 1;
        }
    }
    let mut sigma = vec![0.0f64; n_buckets];
    let mut populated = Vec::new();
    for b in 0..n_buckets {
        let n = counts[b];
        match params.stat {
            VolatilityStat::MeanAbs if n >= 1 => {
                sigma[b] = abs_sum[b] / n as f64;
                populated.push(b);
            }
            VolatilityStat::StdDev if n >= 2 => {
                let nf = n as f64;
                let mean = sum[b] / nf;
                sigma[b] = ((sumsq[b] - nf * mean * mean) / (nf - 1.0)).max(0.0).sqrt();
                populated.push(b);
            }
            _ => {}
        }
    }
    assert!(!populated.is_empty(), "oracle stream produced no returns");
    for b in 0..n_buckets {
        if !populated.contains(&b) {
            let nearest = *populated
                .iter()
                .min_by_key(|&&p| ((p as i64 - b as i64).abs(), p))
                .unwrap();
            sigma[b] = sigma[nearest];
        }
    }

    // triggers, chained into one event per overlapping run
    let mut events = Vec::new();
    for span in &log.days {
        let mut last_trigger: Option<i64> = None;
        for i in span.start..span.end {
            let Some(r) = oracle_anchored_return(log, i, params.delta_t_us) else {
                continue;
            };
            let t = log.frames[i].timestamp_us();
            let s = sigma[bucket_of(t)];
            if r.abs() > params.abs_threshold && r.abs() > params.vol_multiplier * s {
                let chained = matches!(last_trigger, Some(prev) if t <= prev + params.delta_t_us);
                if !chained {
                    events.push(LargeEvent {
                        day: span.day,
                        window_start_us: t,
                        delta_t_us: params.delta_t_us,
                        log_return: r,
                        sign: if r > 0.0 { 1 } else { -1 },
                        trigger_frame: i,
                    });
                }
                last_trigger = Some(t);
            }
        }
    }
    oracle_decluster(&events, params.min_gap_us)
}

/// Quadratic declustering: an event survives when no previously retained
/// event (scanned in full) started within `min_gap_us` before it.
pub fn oracle_decluster(events: &[LargeEvent], min_gap_us: i64) -> Vec<LargeEvent> {
    let mut kept: Vec<LargeEvent> = Vec::new();
    for ev in events {
        let blocked = kept.iter().any(|k| {
            ev.window_start_us >= k.window_start_us
                && ev.window_start_us - k.window_start_us <= min_gap_us
        });
        if !blocked {
            kept.push(ev.clone());
        }
    }
    kept
}

// ---- direct liquidity oracle ----------------------------------------------

/// Term-by-term evaluation of the exponential liquidity sum.
pub fn direct_liquidity(profile: &[u64], delta: f64, norm: f64) -> f64 {
    let mut sum = 0.0;
    for (i, &v) in profile.iter().enumerate() {
        sum += v as f64 * (-((i + 1) as f64) / delta).exp();
    }
    sum / norm
}

// ---- scripted book movers --------------------------------------------------

/// Events realising a scripted midprice path on one day: at each `(tod, mid)`
/// the touch is moved to `mid -/+ 1` by non-crossing place-then-cancel pairs.
pub fn mid_path_events(day: u32, path: &[(i64, i64)]) -> Vec<OrderEvent> {
    let mut events = Vec::new();
    let mut current: Option<i64> = None;
    for &(tod, mid) in path {
        let t = day as i64 * DAY_US + tod;
        match current {
            None => {
                events.push(OrderEvent::limit(t, Side::Buy, mid - 1, 100));
                events.push(OrderEvent::limit(t, Side::Sell, mid + 1, 100));
            }
            Some(old) if old != mid => {
                let (b, a) = (old - 1, old + 1);
                let (nb, na) = (mid - 1, mid + 1);
                if mid > old {
                    events.push(OrderEvent::limit(t, Side::Sell, na, 100));
                    events.push(OrderEvent::cancel(t, Side::Sell, a, 100));
                    events.push(OrderEvent::limit(t, Side::Buy, nb, 100));
                    events.push(OrderEvent::cancel(t, Side::Buy, b, 100));
                } else {
                    events.push(OrderEvent::limit(t, Side::Buy, nb, 100));
                    events.push(OrderEvent::cancel(t, Side::Buy, b, 100));
                    events.push(OrderEvent::limit(t, Side::Sell, na, 100));
                    events.push(OrderEvent::cancel(t, Side::Sell, a, 100));
                }
            }
            _ => {
                events.push(OrderEvent::limit(t, Side::Buy, mid - 1, 1));
            }
        }
        current = Some(mid);
    }
    events
}

/// Test session helpers.
pub fn open_session(close_s: i64) -> SessionConfig {
    SessionConfig {
        session_open_us: 0,
        session_close_us: close_s * 1_000_000,
        open_skip_us: 0,
        cancel_policy: CancelPolicy::Clamp,
        ..SessionConfig::default()
    }
}
