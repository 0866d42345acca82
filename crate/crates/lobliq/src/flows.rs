//! Order-flow accounting: who adds and who removes liquidity, and how that
//! changes around large price fluctuations.
//!
//! Every applied operation yields up to two [`FlowRecord`]s, each tagged
//! with the *ladder* it acted on (`Side::Buy` = bid ladder, `Side::Sell` =
//! ask ladder):
//!
//! - a limit order's resting portion adds to its own ladder; its crossing
//!   portion counts as market-order volume against the opposite ladder
//!   ("effective market order"),
//! - a market order removes from the opposite ladder,
//! - a cancellation removes from the ladder it resolved to.
//!
//! An operation is *at the best* when its price equals the ladder's best
//! immediately before it applied; market orders always count. The relative
//! flows of a ladder over a subinterval are each kind's share of the total
//! volume moved there, e.g. for the ask ladder
//! `r_LO = Q_LO_sell / (Q_LO_sell + Q_MO_buy + Q_C_sell)`.

use serde::Serialize;
use thiserror::Error;

use crate::book::{OpKind, Side};
use crate::detect::LargeEvent;
use crate::ingest::{ReplayFrame, ReplayLog};
use crate::stats::{self, ConditionalCurve, StatsError};
use crate::windows::TiledWindow;

/// One classified flow contribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlowRecord {
    pub timestamp_us: i64,
    pub day: u32,
    pub kind: OpKind,
    /// Ladder acted on: `Buy` = bid ladder, `Sell` = ask ladder.
    pub ladder: Side,
    pub at_best: bool,
    pub volume: u64,
}

/// Classifies one frame into its flow contributions (0, 1 or 2 records).
pub fn flow_records(frame: &ReplayFrame) -> Vec<FlowRecord> {
    let ev = &frame.event;
    let delta = &frame.delta;
    let mut records = Vec::with_capacity(2);
    match ev.op {
        OpKind::Limit => {
            if delta.executed_volume > 0 {
                records.push(FlowRecord {
                    timestamp_us: ev.timestamp_us,
                    day: frame.day,
                    kind: OpKind::Market,
                    ladder: ev.side.opposite(),
                    at_best: true,
                    volume: delta.executed_volume,
                });
            }
            let resting = delta.resting_volume(ev.side);
            if resting > 0 {
                records.push(FlowRecord {
                    timestamp_us: ev.timestamp_us,
                    day: frame.day,
                    kind: OpKind::Limit,
                    ladder: ev.side,
                    at_best: delta.resting_distance(ev.side) == Some(1),
                    volume: resting,
                });
            }
        }
        OpKind::Market => {
            if delta.executed_volume > 0 {
                records.push(FlowRecord {
                    timestamp_us: ev.timestamp_us,
                    day: frame.day,
                    kind: OpKind::Market,
                    ladder: ev.side.opposite(),
                    at_best: true,
                    volume: delta.executed_volume,
                });
            }
        }
        OpKind::Cancel => {
            // a clamped no-op leaves no touch and no record
            if let Some(touch) = delta.touched.first() {
                records.push(FlowRecord {
                    timestamp_us: ev.timestamp_us,
                    day: frame.day,
                    kind: OpKind::Cancel,
                    ladder: touch.side,
                    at_best: touch.tick_distance == Some(1),
                    volume: (-touch.volume_delta) as u64,
                });
            }
        }
    }
    records
}

/// All flow records of a log, in frame order.
pub fn collect_flow_records(log: &ReplayLog) -> Vec<FlowRecord> {
    log.frames.iter().flat_map(flow_records).collect()
}

/// How per-subinterval ratios are combined across events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum FlowAveraging {
    /// Compute each subinterval's ratio first, then average the ratios
    /// (default; robust to activity differences between events).
    #[default]
    RatioThenAverage,
    /// Pool the volumes across events first, then take one ratio. Standard
    /// errors still come from the per-event ratio dispersion.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowCurveParams {
    /// Ladder whose flows are accounted (`Sell` = ask).
    pub ladder: Side,
    /// Which detected events to average over: `+1` or `-1`.
    pub event_sign: i8,
    /// Restrict to at-the-best operations (market orders always count).
    pub at_best_only: bool,
    /// Total span measured backwards from each event's window end.
    pub range_us: i64,
    /// Width of one averaging subinterval.
    pub subinterval_us: i64,
    pub averaging: FlowAveraging,
    pub min_events: usize,
}

impl FlowCurveParams {
    /// One hour back from the event end in 30 s subintervals, at the best.
    pub fn standard(ladder: Side, event_sign: i8) -> Self {
        FlowCurveParams {
            ladder,
            event_sign,
            at_best_only: true,
            range_us: 3_600_000_000,
            subinterval_us: 30_000_000,
            averaging: FlowAveraging::default(),
            min_events: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("bad flow parameters: {reason}")]
    BadParams { reason: String },
    #[error("need at least {needed} events of the requested sign, got {got}")]
    InsufficientEvents { needed: usize, got: usize },
    #[error("events mix window lengths ({a} vs {b} us)")]
    MixedDeltaT { a: i64, b: i64 },
    #[error("stream contains no qualifying flow at all")]
    NoFlow,
    #[error("window conditioning selected no windows")]
    EmptyCondition,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Event-averaged relative flows on a time axis anchored at the event end.
///
/// `offsets_s[k]` is the midpoint of subinterval `k` relative to the event's
/// window *end*, in seconds (all negative; the last `delta_t` of the axis
/// lies inside the event window). `r_*` are the mean relative flows with
/// standard errors `se_*`; `counts[k]` says how many events had any flow in
/// that subinterval. `baseline_*` are the same ratios averaged over every
/// subinterval of every session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowCurve {
    pub ladder: Side,
    pub event_sign: i8,
    pub at_best_only: bool,
    pub range_us: i64,
    pub subinterval_us: i64,
    pub delta_t_us: i64,
    pub n_events: usize,
    pub offsets_s: Vec<f64>,
    pub r_lo: Vec<f64>,
    pub r_mo: Vec<f64>,
    pub r_c: Vec<f64>,
    pub se_lo: Vec<f64>,
    pub se_mo: Vec<f64>,
    pub se_c: Vec<f64>,
    pub counts: Vec<u64>,
    pub baseline_lo: f64,
    pub baseline_mo: f64,
    pub baseline_c: f64,
}

/// Volume sums of one subinterval, by kind.
#[derive(Debug, Default, Clone, Copy)]
struct KindSums {
    lo: u64,
    mo: u64,
    c: u64,
}

impl KindSums {
    fn total(&self) -> u64 {
        self.lo + self.mo + self.c
    }
    fn ratios(&self) -> Option<[f64; 3]> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let t = total as f64;
        Some([self.lo as f64 / t, self.mo as f64 / t, self.c as f64 / t])
    }
}

/// Sums qualifying records of one day inside `[from, to)`.
fn sum_interval(records: &[FlowRecord], from: i64, to: i64, params: &FlowCurveParams) -> KindSums {
    let lo_idx = records.partition_point(|r| r.timestamp_us < from);
    let hi_idx = records.partition_point(|r| r.timestamp_us < to);
    let mut sums = KindSums::default();
    for r in &records[lo_idx..hi_idx] {
        if r.ladder != params.ladder || (params.at_best_only && !r.at_best) {
            continue;
        }
        match r.kind {
            OpKind::Limit => sums.lo += r.volume,
            OpKind::Market => sums.mo += r.volume,
            OpKind::Cancel => sums.c += r.volume,
        }
    }
    sums
}

/// Accumulates mean and standard error per offset.
struct OffsetAcc {
    sum: Vec<[f64; 3]>,
    sumsq: Vec<[f64; 3]>,
    pooled: Vec<[u64; 3]>,
    count: Vec<u64>,
}

impl OffsetAcc {
    fn new(n: usize) -> Self {
        OffsetAcc {
            sum: vec![[0.0; 3]; n],
            sumsq: vec![[0.0; 3]; n],
            pooled: vec![[0; 3]; n],
            count: vec![0; n],
        }
    }
    fn add(&mut self, k: usize, sums: KindSums) {
        let Some(ratios) = sums.ratios() else { return };
        for (j, r) in ratios.into_iter().enumerate() {
            self.sum[k][j] += r;
            self.sumsq[k][j] += r * r;
        }
        self.pooled[k][0] += sums.lo;
        self.pooled[k][1] += sums.mo;
        self.pooled[k][2] += sums.c;
        self.count[k] += 1;
    }
    fn mean_se(&self, k: usize, j: usize, averaging: FlowAveraging) -> (f64, f64) {
        let n = self.count[k];
        if n == 0 {
            return (f64::NAN, 0.0);
        }
        let nf = n as f64;
        let mean_ratio = self.sum[k][j] / nf;
        let mean = match averaging {
            FlowAveraging::RatioThenAverage => mean_ratio,
            FlowAveraging::Pooled => {
                let total: u64 = self.pooled[k].iter().sum();
                self.pooled[k][j] as f64 / total as f64
            }
        };
        let se = if n < 2 {
            0.0
        } else {
            let var = (self.sumsq[k][j] - nf * mean_ratio * mean_ratio).max(0.0) / (nf - 1.0);
            (var / nf).sqrt()
        };
        (mean, se)
    }
}

/// Splits the records by day, aligned with `log.days`.
fn records_by_day(log: &ReplayLog) -> Vec<(u32, Vec<FlowRecord>)> {
    log.days
        .iter()
        .map(|span| {
            (
                span.day,
                log.frames[span.start..span.end]
                    .iter()
                    .flat_map(flow_records)
                    .collect(),
            )
        })
        .collect()
}

/// Computes the event-averaged relative flow curve plus annual baselines.
pub fn relative_flow_curve(
    log: &ReplayLog,
    events: &[LargeEvent],
    params: &FlowCurveParams,
) -> Result<FlowCurve, FlowError> {
    if params.subinterval_us <= 0 || params.range_us <= 0 {
        return Err(FlowError::BadParams {
            reason: "range and subinterval must be positive".into(),
        });
    }
    if params.range_us % params.subinterval_us != 0 {
        return Err(FlowError::BadParams {
            reason: format!(
                "subinterval {} us does not divide range {} us",
                params.subinterval_us, params.range_us
            ),
        });
    }
    let selected: Vec<&LargeEvent> = events
        .iter()
        .filter(|e| e.sign == params.event_sign.signum())
        .collect();
    if selected.len() < params.min_events.max(1) {
        return Err(FlowError::InsufficientEvents {
            needed: params.min_events.max(1),
            got: selected.len(),
        });
    }
    let delta_t_us = selected[0].delta_t_us;
    for e in &selected {
        if e.delta_t_us != delta_t_us {
            return Err(FlowError::MixedDeltaT {
                a: delta_t_us,
                b: e.delta_t_us,
            });
        }
    }
    let by_day = records_by_day(log);
    let n_sub = (params.range_us / params.subinterval_us) as usize;
    let mut acc = OffsetAcc::new(n_sub);
    for event in &selected {
        let Some((_, records)) = by_day.iter().find(|(d, _)| *d == event.day) else {
            continue;
        };
        let end = event.window_end_us();
        for k in 0..n_sub {
            let from = end - params.range_us + k as i64 * params.subinterval_us;
            let to = from + params.subinterval_us;
            acc.add(k, sum_interval(records, from, to, params));
        }
    }
    let (baseline_lo, baseline_mo, baseline_c) = baselines(log, &by_day, params)?;
    let mut curve = FlowCurve {
        ladder: params.ladder,
        event_sign: params.event_sign.signum(),
        at_best_only: params.at_best_only,
        range_us: params.range_us,
        subinterval_us: params.subinterval_us,
        delta_t_us,
        n_events: selected.len(),
        offsets_s: Vec::with_capacity(n_sub),
        r_lo: Vec::with_capacity(n_sub),
        r_mo: Vec::with_capacity(n_sub),
        r_c: Vec::with_capacity(n_sub),
        se_lo: Vec::with_capacity(n_sub),
        se_mo: Vec::with_capacity(n_sub),
        se_c: Vec::with_capacity(n_sub),
        counts: acc.count.clone(),
        baseline_lo,
        baseline_mo,
        baseline_c,
    };
    for k in 0..n_sub {
        let offset_us = -(params.range_us) + k as i64 * params.subinterval_us;
        curve
            .offsets_s
            .push((offset_us as f64 + params.subinterval_us as f64 / 2.0) / 1e6);
        let (lo, se_lo) = acc.mean_se(k, 0, params.averaging);
        let (mo, se_mo) = acc.mean_se(k, 1, params.averaging);
        let (c, se_c) = acc.mean_se(k, 2, params.averaging);
        curve.r_lo.push(lo);
        curve.r_mo.push(mo);
        curve.r_c.push(c);
        curve.se_lo.push(se_lo);
        curve.se_mo.push(se_mo);
        curve.se_c.push(se_c);
    }
    Ok(curve)
}

/// Whole-dataset average relative flows over all subintervals (the
/// horizontal reference lines of the event plots).
fn baselines(
    log: &ReplayLog,
    by_day: &[(u32, Vec<FlowRecord>)],
    params: &FlowCurveParams,
) -> Result<(f64, f64, f64), FlowError> {
    let open = log.session.effective_open_us();
    let close = log.session.session_close_us;
    let mut sums = [0.0f64; 3];
    let mut pooled = [0u64; 3];
    let mut n = 0u64;
    for (day, records) in by_day {
        let mut tod = open;
        while tod + params.subinterval_us <= close {
            let from = log.session.at(*day, tod);
            let s = sum_interval(records, from, from + params.subinterval_us, params);
            if let Some(ratios) = s.ratios() {
                for j in 0..3 {
                    sums[j] += ratios[j];
                }
                pooled[0] += s.lo;
                pooled[1] += s.mo;
                pooled[2] += s.c;
                n += 1;
            }
            tod += params.subinterval_us;
        }
    }
    if n == 0 {
        return Err(FlowError::NoFlow);
    }
    Ok(match params.averaging {
        FlowAveraging::RatioThenAverage => {
            let nf = n as f64;
            (sums[0] / nf, sums[1] / nf, sums[2] / nf)
        }
        FlowAveraging::Pooled => {
            let total: u64 = pooled.iter().sum();
            let t = total as f64;
            (
                pooled[0] as f64 / t,
                pooled[1] as f64 / t,
                pooled[2] as f64 / t,
            )
        }
    })
}

/// Which tiled windows feed the response fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ResponseCondition {
    All,
    PositiveEvents,
    NegativeEvents,
}

impl ResponseCondition {
    pub fn label(self) -> &'static str {
        match self {
            ResponseCondition::All => "all",
            ResponseCondition::PositiveEvents => "positive_events",
            ResponseCondition::NegativeEvents => "negative_events",
        }
    }
}

/// Fitted linear response `Q_LO ≈ a * Q_MO + b` of at-the-best limit-order
/// volume to market-order volume on one ladder, per tiling window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseFit {
    pub ladder: Side,
    pub condition: ResponseCondition,
    pub a: f64,
    pub b: f64,
    pub se_a: f64,
    pub se_b: f64,
    pub r_squared: f64,
    pub n_windows: usize,
    /// Equal-count binned mean of the same cloud, for plotting.
    pub curve: ConditionalCurve,
}

/// Per-window `(Q_MO, Q_LO)` volumes on one ladder (at-the-best).
pub fn response_points(
    log: &ReplayLog,
    windows: &[TiledWindow],
    events: &[LargeEvent],
    ladder: Side,
    condition: ResponseCondition,
) -> Vec<(f64, f64)> {
    let by_day = records_by_day(log);
    let params = FlowCurveParams {
        ladder,
        event_sign: 0,
        at_best_only: true,
        range_us: 1,
        subinterval_us: 1,
        averaging: FlowAveraging::default(),
        min_events: 0,
    };
    windows
        .iter()
        // a window only counts when the pre-window book state exists, the
        // same population every other per-window analysis uses
        .filter(|w| w.snapshot_frame.is_some() && window_matches(w, events, condition))
        .filter_map(|w| {
            let (_, records) = by_day.iter().find(|(d, _)| *d == w.day)?;
            let sums = sum_interval(records, w.start_us, w.end_us, &params);
            Some((sums.mo as f64, sums.lo as f64))
        })
        .collect()
}

/// A window belongs to a sign's subset when an event of that sign starts
/// inside it and none of the opposite sign does.
fn window_matches(w: &TiledWindow, events: &[LargeEvent], condition: ResponseCondition) -> bool {
    let sign_inside = |sign: i8| {
        events
            .iter()
            .any(|e| e.sign == sign && e.day == w.day && w.contains(e.window_start_us))
    };
    match condition {
        ResponseCondition::All => true,
        ResponseCondition::PositiveEvents => sign_inside(1) && !sign_inside(-1),
        ResponseCondition::NegativeEvents => sign_inside(-1) && !sign_inside(1),
    }
}

/// Fits the placement response on the selected window subset.
pub fn response_fit(
    log: &ReplayLog,
    windows: &[TiledWindow],
    events: &[LargeEvent],
    ladder: Side,
    condition: ResponseCondition,
    bins: usize,
) -> Result<ResponseFit, FlowError> {
    let points = response_points(log, windows, events, ladder, condition);
    if points.is_empty() {
        return Err(FlowError::EmptyCondition);
    }
    let fit = stats::linear_fit(&points)?;
    let curve = stats::equal_count_binning(&points, bins)?;
    Ok(ResponseFit {
        ladder,
        condition,
        a: fit.slope,
        b: fit.intercept,
        se_a: fit.se_slope,
        se_b: fit.se_intercept,
        r_squared: fit.r_squared,
        n_windows: points.len(),
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::book::OrderEvent;
    use crate::ingest::{replay, SessionConfig};
    use crate::windows::tile_windows;

    fn session() -> SessionConfig {
        SessionConfig {
            session_open_us: 0,
            session_close_us: 1_000_000_000,
            open_skip_us: 0,
            ..SessionConfig::default()
        }
    }

    const S: i64 = 1_000_000;

    #[test]
    fn classification_covers_all_paths() {
        let events = vec![
            OrderEvent::limit(0, Side::Buy, 1000, 100), // plain LO at (new) best
            OrderEvent::limit(1, Side::Sell, 1003, 60),
            OrderEvent::limit(2, Side::Buy, 1003, 80), // crosses 60, rests 20
            OrderEvent::market(3, Side::Sell, 10),     // eats the 1003 bid
            OrderEvent::cancel(4, Side::Buy, 1003, 10),
            OrderEvent::cancel(5, Side::Buy, 900, 50), // nothing there: clamped
        ];
        let log = replay(&events, &session(), 10).unwrap();
        let recs: Vec<FlowRecord> = collect_flow_records(&log);
        // frame 0: LO on empty bid ladder: distance None, not at best
        assert_eq!(recs[0].kind, OpKind::Limit);
        assert_eq!(recs[0].ladder, Side::Buy);
        assert!(!recs[0].at_best);
        // frame 2: crossing LO splits into an effective MO on the ask ladder
        // plus a resting LO on the bid ladder
        let f2: Vec<&FlowRecord> = recs.iter().filter(|r| r.timestamp_us == 2).collect();
        assert_eq!(f2.len(), 2);
        assert_eq!((f2[0].kind, f2[0].ladder, f2[0].volume), (OpKind::Market, Side::Sell, 60));
        assert!(f2[0].at_best);
        assert_eq!((f2[1].kind, f2[1].ladder, f2[1].volume), (OpKind::Limit, Side::Buy, 20));
        // frame 3: sell MO acts on the bid ladder
        let f3 = recs.iter().find(|r| r.timestamp_us == 3).unwrap();
        assert_eq!((f3.kind, f3.ladder, f3.volume), (OpKind::Market, Side::Buy, 10));
        // frame 4: cancel at the best bid
        let f4 = recs.iter().find(|r| r.timestamp_us == 4).unwrap();
        assert_eq!((f4.kind, f4.at_best, f4.volume), (OpKind::Cancel, true, 10));
        // frame 5: clamped cancel leaves no record
        assert!(recs.iter().all(|r| r.timestamp_us != 5));
    }

    /// One event, hand-placed volumes: the ratios and the baseline are exact.
    #[test]
    fn flow_curve_ratios_are_exact() {
        let mut evs = vec![
            OrderEvent::limit(0, Side::Buy, 1000, 10),
            OrderEvent::limit(0, Side::Sell, 1002, 500),
        ];
        // subinterval [100 s, 110 s): sell LO 30 at best ask, buy MO 10, sell C 20
        evs.push(OrderEvent::limit(101 * S, Side::Sell, 1002, 30));
        evs.push(OrderEvent::market(103 * S, Side::Buy, 10));
        evs.push(OrderEvent::cancel(105 * S, Side::Sell, 1002, 20));
        // subinterval [110 s, 120 s): only a buy MO
        evs.push(OrderEvent::market(115 * S, Side::Buy, 7));
        let log = replay(&evs, &session(), 10).unwrap();
        let event = LargeEvent {
            day: 0,
            window_start_us: 110 * S,
            delta_t_us: 10 * S,
            log_return: 0.01,
            sign: 1,
            trigger_frame: 0,
        };
        let params = FlowCurveParams {
            range_us: 40 * S,
            subinterval_us: 10 * S,
            ..FlowCurveParams::standard(Side::Sell, 1)
        };
        let curve = relative_flow_curve(&log, &[event], &params).unwrap();
        assert_eq!(curve.offsets_s, vec![-35.0, -25.0, -15.0, -5.0]);
        // [80,90) and [90,100): no flow
        assert_eq!(curve.counts[0], 0);
        assert!(curve.r_lo[0].is_nan());
        // [100,110): ratios 30/60, 10/60, 20/60
        assert_eq!(curve.r_lo[2], 0.5);
        assert_eq!(curve.r_mo[2], 10.0 / 60.0);
        assert_eq!(curve.r_c[2], 20.0 / 60.0);
        // inside the event window [110,120): pure MO
        assert_eq!(curve.r_mo[3], 1.0);
        // the two active subintervals sum to 1 exactly
        for k in [2usize, 3] {
            assert!((curve.r_lo[k] + curve.r_mo[k] + curve.r_c[k] - 1.0).abs() < 1e-12);
        }
        // baseline over the whole session: two non-empty subintervals with
        // ratios (0.5, 1/6, 1/3) and (0, 1, 0)
        assert!((curve.baseline_lo - 0.25).abs() < 1e-12);
        assert!((curve.baseline_mo - (10.0 / 60.0 + 1.0) / 2.0).abs() < 1e-12);
        // at_best_only filters: initial LOs landed on empty ladders (not at
        // best) so they never contaminate the curve
        assert_eq!(curve.n_events, 1);
    }

    #[test]
    fn flow_curve_validates_inputs() {
        let evs = vec![OrderEvent::limit(0, Side::Buy, 1000, 10)];
        let log = replay(&evs, &session(), 10).unwrap();
        let params = FlowCurveParams::standard(Side::Sell, 1);
        match relative_flow_curve(&log, &[], &params) {
            Err(FlowError::InsufficientEvents { got: 0, .. }) => {}
            other => panic!("expected InsufficientEvents, got {other:?}"),
        }
        let ev = LargeEvent {
            day: 0,
            window_start_us: 500 * S,
            delta_t_us: 10 * S,
            log_return: 0.01,
            sign: 1,
            trigger_frame: 0,
        };
        let bad = FlowCurveParams {
            subinterval_us: 7 * S,
            ..params.clone()
        };
        assert!(matches!(
            relative_flow_curve(&log, &[ev.clone()], &bad),
            Err(FlowError::BadParams { .. })
        ));
        let mixed = LargeEvent {
            delta_t_us: 20 * S,
            ..ev.clone()
        };
        assert!(matches!(
            relative_flow_curve(&log, &[ev, mixed], &FlowCurveParams { min_events: 2, ..params }),
            Err(FlowError::MixedDeltaT { .. })
        ));
    }

    /// Mirroring a stream (sides swapped, prices reflected) swaps the
    /// ladders and event signs but leaves every ratio identical.
    #[test]
    fn mirror_symmetry() {
        use rand::prelude::*;
        let mut rng = StdRng::seed_from_u64(99);
        let mut evs = vec![
            OrderEvent::limit(0, Side::Buy, 995, 200),
            OrderEvent::limit(0, Side::Sell, 1005, 200),
        ];
        for i in 1..400i64 {
            let t = i * S;
            match rng.gen_range(0..6) {
                0 | 1 => evs.push(OrderEvent::limit(
                    t,
                    Side::Buy,
                    rng.gen_range(990..1000),
                    rng.gen_range(1..80),
                )),
                2 | 3 => evs.push(OrderEvent::limit(
                    t,
                    Side::Sell,
                    rng.gen_range(1001..1011),
                    rng.gen_range(1..80),
                )),
                4 => evs.push(OrderEvent::market(
                    t,
                    if rng.gen() { Side::Buy } else { Side::Sell },
                    rng.gen_range(1..40),
                )),
                _ => evs.push(OrderEvent::cancel(
                    t,
                    if rng.gen() { Side::Buy } else { Side::Sell },
                    rng.gen_range(990..1011),
                    rng.gen_range(1..40),
                )),
            }
        }
        let pivot = 2000i64; // price -> pivot - price flips the ladder geometry
        let mirrored: Vec<OrderEvent> = evs
            .iter()
            .map(|e| OrderEvent {
                side: e.side.opposite(),
                price_ticks: e.price_ticks.map(|p| pivot - p),
                ..e.clone()
            })
            .collect();
        let log = replay(&evs, &session(), 30).unwrap();
        let mlog = replay(&mirrored, &session(), 30).unwrap();
        let event = LargeEvent {
            day: 0,
            window_start_us: 300 * S,
            delta_t_us: 30 * S,
            log_return: 0.01,
            sign: 1,
            trigger_frame: 0,
        };
        let mevent = LargeEvent {
            log_return: -0.01,
            sign: -1,
            ..event.clone()
        };
        let params = FlowCurveParams {
            range_us: 120 * S,
            ..FlowCurveParams::standard(Side::Sell, 1)
        };
        let mparams = FlowCurveParams {
            ladder: Side::Buy,
            event_sign: -1,
            ..params.clone()
        };
        let curve = relative_flow_curve(&log, &[event], &params).unwrap();
        let mcurve = relative_flow_curve(&mlog, &[mevent], &mparams).unwrap();
        assert_eq!(curve.r_lo, mcurve.r_lo);
        assert_eq!(curve.r_mo, mcurve.r_mo);
        assert_eq!(curve.r_c, mcurve.r_c);
        assert_eq!(curve.baseline_lo, mcurve.baseline_lo);
        assert_eq!(curve.baseline_mo, mcurve.baseline_mo);
        assert_eq!(curve.baseline_c, mcurve.baseline_c);
    }

    /// Windows with exactly `y = 0.6 x + 25` planted: the fit is exact and
    /// conditioning selects the right subsets.
    #[test]
    fn response_fit_recovers_planted_line() {
        let mut evs = vec![
            OrderEvent::limit(0, Side::Buy, 990, 1_000_000),
            OrderEvent::limit(0, Side::Sell, 1010, 1_000_000),
        ];
        // every snapshotted window k gets MO volume x = 100 + 10(k-1) and LO
        // volume 0.6 x + 25, all at the best ask; window 0 has no snapshot
        // (nothing strictly before the open) and drops out on its own
        for k in 1..100i64 {
            let t0 = (10 * k + 2) * S;
            let x = 100 + 10 * (k - 1);
            let y = (6 * x) / 10 + 25;
            evs.push(OrderEvent::market(t0, Side::Buy, x as u64));
            evs.push(OrderEvent::limit(t0 + S, Side::Sell, 1010, y as u64));
        }
        evs.sort_by_key(|e| e.timestamp_us);
        let log = replay(&evs, &session(), 10).unwrap();
        let windows = tile_windows(&log, 10 * S).unwrap();
        let fit = response_fit(&log, &windows, &[], Side::Sell, ResponseCondition::All, 5).unwrap();
        assert!((fit.a - 0.6).abs() < 1e-12, "a = {}", fit.a);
        assert!((fit.b - 25.0).abs() < 1e-9, "b = {}", fit.b);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.curve.counts.iter().sum::<u64>() as usize, fit.n_windows);

        // mark two windows as positive events; the conditioned fit uses them
        let events: Vec<LargeEvent> = [800 * S, 900 * S]
            .iter()
            .map(|&t| LargeEvent {
                day: 0,
                window_start_us: t,
                delta_t_us: 10 * S,
                log_return: 0.02,
                sign: 1,
                trigger_frame: 0,
            })
            .collect();
        let pos = response_points(&log, &windows, &events, Side::Sell, ResponseCondition::PositiveEvents);
        assert_eq!(pos.len(), 2);
        assert!(response_points(&log, &windows, &events, Side::Sell, ResponseCondition::NegativeEvents).is_empty());
        match response_fit(&log, &windows, &events, Side::Sell, ResponseCondition::NegativeEvents, 5) {
            Err(FlowError::EmptyCondition) => {}
            other => panic!("expected EmptyCondition, got {other:?}"),
        }
    }
}
