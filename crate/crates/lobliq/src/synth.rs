//! Synthetic order-stream generation with controllable ground truth.
//!
//! The baseline model is deliberately simple: independent Poisson arrival
//! processes per operation type and side, limit-order placement geometric in
//! the distance from the opposite best, lognormal volumes, and a resilience
//! coupling that answers market-order volume with fresh limit orders at the
//! consumed ladder's best after a short exponential delay. On top of that,
//! two episode kinds inject the mechanisms the analyses are meant to
//! recover — one-sided market-order pressure with weakened replenishment
//! ([`EpisodeKind::MoFlowImbalance`]) and near-best volume starvation
//! ([`EpisodeKind::Depletion`]) — and [`plant_return_rule`] produces streams
//! whose window returns follow a known function of the book's liquidity
//! state.
//!
//! Determinism contract: every stochastic draw of day `d` comes from a
//! counter-based RNG seeded by `(seed, stream = d + 1)`, so a given config
//! always yields byte-identical streams, day by day, regardless of how many
//! days are generated or in what order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{Book, BookDelta, BookError, OrderEvent, Side};
use crate::ingest::SessionConfig;
use crate::liquidity::exponential_liquidity;

/// Safety cap on any single planted window return.
const MAX_PLANT_RETURN: f64 = 0.05;
/// Spacing of depletion maintenance trims.
const TRIM_INTERVAL_US: i64 = 5_000_000;
/// Hard ceiling on one drawn order volume.
const MAX_ORDER_VOLUME: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("bad generator config: {reason}")]
    BadConfig { reason: String },
    #[error("infeasible plant: {reason}")]
    Infeasible { reason: String },
    #[error("internal book operation failed: {0}")]
    Book(#[from] BookError),
}

/// A timed disturbance of the baseline flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub day: u32,
    /// Start, as time of day.
    pub start_tod_us: i64,
    pub duration_us: i64,
    pub kind: EpisodeKind,
    /// `MoFlowImbalance`: direction of the boosted market orders.
    /// `Depletion`: the ladder being starved. `PlantedReturnRule`: ignored.
    pub side: Side,
    /// Dimensionless multiplier, > 0 (unused by `PlantedReturnRule`).
    pub intensity: f64,
}

impl Episode {
    pub fn end_tod_us(&self) -> i64 {
        self.start_tod_us + self.duration_us
    }
    pub fn active(&self, tod_us: i64) -> bool {
        tod_us >= self.start_tod_us && tod_us < self.end_tod_us()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeKind {
    /// Multiply the `side` market-order rate by `intensity` with no
    /// compensating limit-order increase; the resilience coupling on the
    /// pressed ladder is divided by `intensity` (the flow-imbalance
    /// mechanism) while the coupling behind the pressing side is multiplied
    /// by `sqrt(intensity)` (eager replenishment of the retreating ladder).
    MoFlowImbalance,
    /// Trim resting volume near the `side` best down by factor `intensity`
    /// at episode start, then keep re-trimming every few seconds.
    Depletion,
    /// Marks a span in which [`plant_return_rule`] plants window returns;
    /// inert under [`generate`]. With no such episode configured, planting
    /// covers every window.
    PlantedReturnRule,
}

/// Stream-generation parameters. All fields have defaults, so a TOML config
/// may set only what it cares about (a provided `session` table must be
/// complete, though).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub days: u32,
    pub session: SessionConfig,
    /// Midprice in ticks at each day's open.
    pub initial_mid_ticks: i64,
    /// Seeded levels per side; best bid/ask start 1 tick off the mid.
    pub initial_levels: i64,
    pub initial_level_volume: u64,
    /// Limit-order arrivals per second, per side.
    pub lo_rate: f64,
    /// Market-order arrivals per second, per side.
    pub mo_rate: f64,
    /// Cancellation arrivals per second, per side.
    pub cancel_rate: f64,
    /// Geometric parameter of the LO distance from the opposite best.
    pub placement_p: f64,
    /// Both the maximum placement distance and the cancel/trim horizon.
    pub placement_max: i64,
    /// Lognormal volume parameters (of ln volume).
    pub volume_mu: f64,
    pub volume_sigma: f64,
    /// Fraction of executed market-order volume answered by a response
    /// limit order at the consumed ladder's best.
    pub resilience: f64,
    /// Mean of the exponential response delay.
    pub response_delay_us: i64,
    pub episodes: Vec<Episode>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 1,
            days: 1,
            session: SessionConfig::default(),
            initial_mid_ticks: 20_000,
            initial_levels: 30,
            initial_level_volume: 400,
            lo_rate: 1.2,
            mo_rate: 0.25,
            cancel_rate: 0.4,
            placement_p: 0.35,
            placement_max: 20,
            volume_mu: 3.6,
            volume_sigma: 0.8,
            resilience: 0.6,
            response_delay_us: 2_000_000,
            episodes: Vec::new(),
        }
    }
}

impl GeneratorConfig {
    pub fn from_toml(text: &str) -> Result<Self, GenError> {
        let cfg: GeneratorConfig = toml::from_str(text).map_err(|e| GenError::BadConfig {
            reason: format!("config parse: {e}"),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |reason: String| Err(GenError::BadConfig { reason });
        self.session
            .validate()
            .map_err(|e| GenError::BadConfig { reason: e.to_string() })?;
        if self.days == 0 {
            return bad("days must be at least 1".into());
        }
        for (name, r) in [
            ("lo_rate", self.lo_rate),
            ("mo_rate", self.mo_rate),
            ("cancel_rate", self.cancel_rate),
        ] {
            if !r.is_finite() || r < 0.0 {
                return bad(format!("{name} must be finite and non-negative, got {r}"));
            }
        }
        if !(self.placement_p > 0.0 && self.placement_p < 1.0) {
            return bad(format!("placement_p must lie in (0, 1), got {}", self.placement_p));
        }
        if self.placement_max < 1 {
            return bad("placement_max must be at least 1 tick".into());
        }
        if !self.volume_mu.is_finite() || !self.volume_sigma.is_finite() || self.volume_sigma < 0.0 {
            return bad("volume_mu/volume_sigma must be finite, sigma non-negative".into());
        }
        if !self.resilience.is_finite() || self.resilience < 0.0 {
            return bad("resilience must be finite and non-negative".into());
        }
        if self.response_delay_us <= 0 {
            return bad("response_delay_us must be positive".into());
        }
        if self.initial_levels < 0 {
            return bad("initial_levels must be non-negative".into());
        }
        if self.initial_levels > 0 && self.initial_level_volume == 0 {
            return bad("initial_level_volume must be positive when seeding levels".into());
        }
        if self.initial_mid_ticks <= self.initial_levels {
            return bad("initial_mid_ticks must exceed initial_levels".into());
        }
        let open = self.session.effective_open_us();
        let close = self.session.session_close_us;
        for (i, ep) in self.episodes.iter().enumerate() {
            if ep.day >= self.days {
                return bad(format!("episode {i}: day {} out of range", ep.day));
            }
            if ep.duration_us <= 0 {
                return bad(format!("episode {i}: duration must be positive"));
            }
            if ep.start_tod_us < open || ep.end_tod_us() > close {
                return bad(format!(
                    "episode {i}: [{}, {}) lies outside the analysed session [{open}, {close})",
                    ep.start_tod_us,
                    ep.end_tod_us()
                ));
            }
            if ep.kind != EpisodeKind::PlantedReturnRule
                && (!ep.intensity.is_finite() || ep.intensity <= 0.0)
            {
                return bad(format!("episode {i}: intensity must be positive"));
            }
        }
        Ok(())
    }
}

/// Conditional-return law used by [`plant_return_rule`]. Amplitudes are
/// physical log returns (not volatility units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnRule {
    /// Every window targets a zero return.
    Zero,
    /// `r = scale * L_imb^3` plus additive Gaussian noise.
    CubicImbalance { scale: f64, noise: f64 },
    /// `|r| = k * L^(-alpha)` on the consumed side (ask for rises, bid for
    /// falls, the sign drawn fair), magnitude multiplied by lognormal noise
    /// `exp(noise * N(0,1))`.
    PowerLaw { k: f64, alpha: f64, noise: f64 },
}

impl ReturnRule {
    /// Largest |expected return| over the rule's domain (at unit liquidity
    /// for the power law); the feasibility check compares it to half a tick.
    pub fn max_abs_return(&self) -> f64 {
        match self {
            ReturnRule::Zero => 0.0,
            ReturnRule::CubicImbalance { scale, .. } => scale.abs(),
            ReturnRule::PowerLaw { k, .. } => k.abs(),
        }
    }

    /// Deterministic conditional mean return given the snapshot liquidities
    /// (zero for the sign-symmetric power law).
    pub fn expected_return(&self, l_bid: f64, l_ask: f64) -> f64 {
        match self {
            ReturnRule::Zero | ReturnRule::PowerLaw { .. } => 0.0,
            ReturnRule::CubicImbalance { scale, .. } => {
                let total = l_bid + l_ask;
                if total <= 0.0 {
                    return 0.0;
                }
                let imb = (l_bid - l_ask) / total;
                scale * imb * imb * imb
            }
        }
    }

    /// Expected |return| given the consumed side's liquidity (power law
    /// only; other rules return the |conditional mean|).
    pub fn expected_magnitude(&self, l_consumed: f64) -> f64 {
        match self {
            ReturnRule::PowerLaw { k, alpha, .. } => k.abs() * l_consumed.powf(-alpha),
            _ => 0.0,
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        let ok = match self {
            ReturnRule::Zero => true,
            ReturnRule::CubicImbalance { scale, noise } => {
                scale.is_finite() && noise.is_finite() && *noise >= 0.0
            }
            ReturnRule::PowerLaw { k, alpha, noise } => {
                k.is_finite() && *k > 0.0 && alpha.is_finite() && noise.is_finite() && *noise >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(GenError::BadConfig {
                reason: "return rule parameters must be finite (k > 0, noise >= 0)".into(),
            })
        }
    }

    /// Draws the signed target return for one window.
    fn target_return(&self, l_bid: f64, l_ask: f64, rng: &mut ChaCha8Rng) -> f64 {
        let r = match self {
            ReturnRule::Zero => 0.0,
            ReturnRule::CubicImbalance { noise, .. } => {
                let mean = self.expected_return(l_bid, l_ask);
                let eps: f64 = Normal::new(0.0, 1.0).unwrap().sample(rng);
                mean + noise * eps
            }
            ReturnRule::PowerLaw { k, alpha, noise } => {
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let l = if sign > 0.0 { l_ask } else { l_bid };
                let magnitude = if l > 0.0 {
                    k * l.powf(-alpha) * (noise * Normal::new(0.0, 1.0).unwrap().sample(rng)).exp()
                } else {
                    MAX_PLANT_RETURN
                };
                sign * magnitude
            }
        };
        r.clamp(-MAX_PLANT_RETURN, MAX_PLANT_RETURN)
    }
}

/// How [`plant_return_rule`] shapes and reprices the book.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    /// Tiling window length the planted returns live on.
    pub delta_t_us: i64,
    /// δ at which the rule reads the book's exponential liquidity.
    pub delta: f64,
    /// Profile depth for the rule's liquidity evaluation.
    pub depth_n: usize,
    /// Normalisation ⟨V_N⟩ the rule assumes. Analyses recover the planted
    /// amplitude exactly when fed the same value; δ* and L_imb results do
    /// not depend on it.
    pub norm: f64,
    /// How long before each window start the book is reshaped.
    pub shape_lead_us: i64,
    /// Position of the repricing inside the window, as a fraction of Δt.
    pub reprice_frac: f64,
    /// Levels per side rewritten by the reshaping.
    pub shape_depth: i64,
    /// Reshaped best-level volume is log-uniform over this range.
    pub amp_range: (f64, f64),
    /// Reshaped profile decay length is uniform over this range (ticks).
    pub tau_range: (f64, f64),
    /// Volume guaranteed on the repriced best levels.
    pub guard_volume: u64,
    pub guard_levels: i64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            delta_t_us: 30_000_000,
            delta: 5.0,
            depth_n: 100,
            norm: 1000.0,
            shape_lead_us: 5_000_000,
            reprice_frac: 0.75,
            shape_depth: 30,
            amp_range: (30.0, 900.0),
            tau_range: (1.5, 12.0),
            guard_volume: 2_000,
            guard_levels: 3,
        }
    }
}

impl PlantParams {
    fn validate(&self, cfg: &GeneratorConfig, rule: &ReturnRule) -> Result<(), GenError> {
        rule.validate()?;
        let bad = |reason: String| Err(GenError::Infeasible { reason });
        if self.delta_t_us <= 0 {
            return bad("delta_t must be positive".into());
        }
        let span = cfg.session.session_close_us - cfg.session.effective_open_us();
        if span / self.delta_t_us < 2 {
            return bad("session too short for two tiling windows".into());
        }
        if !(self.delta > 0.0) || self.depth_n == 0 || !(self.norm > 0.0) {
            return bad("delta, depth_n and norm must be positive".into());
        }
        if self.shape_lead_us <= 0 || self.shape_lead_us >= self.delta_t_us {
            return bad("shape_lead must lie strictly inside one window".into());
        }
        if !(self.reprice_frac > 0.0 && self.reprice_frac < 1.0) {
            return bad("reprice_frac must lie in (0, 1)".into());
        }
        if self.shape_depth < 1 || self.guard_levels < 1 || self.guard_volume == 0 {
            return bad("shape_depth, guard_levels and guard_volume must be positive".into());
        }
        let (a0, a1) = self.amp_range;
        let (t0, t1) = self.tau_range;
        if !(a0 > 0.0 && a1 >= a0 && t0 > 0.0 && t1 >= t0) {
            return bad("amp_range and tau_range must be positive and ordered".into());
        }
        // A rule whose strongest move cannot reach half a tick would round
        // every planted return to zero.
        let half_tick_rel = 1.0 / (2 * cfg.initial_mid_ticks) as f64;
        let max = rule.max_abs_return();
        if max > 0.0 && max < half_tick_rel {
            return bad(format!(
                "rule's strongest return {max:.2e} is below the half-tick resolution {half_tick_rel:.2e}"
            ));
        }
        Ok(())
    }
}

/// Generates the configured number of days of baseline flow plus episodes.
pub fn generate(cfg: &GeneratorConfig) -> Result<Vec<OrderEvent>, GenError> {
    cfg.validate()?;
    let mut out = Vec::new();
    for day in 0..cfg.days {
        run_day(cfg, day, None, &mut out)?;
    }
    Ok(out)
}

/// Generates a stream whose per-window returns follow `rule` applied to the
/// book state at each window start. The same baseline flow and episodes as
/// [`generate`] run underneath; shortly before each window the near-best
/// profiles are rewritten to randomized exponential shapes (so the
/// liquidity state varies), and inside the window the book is repriced so
/// the window return hits the rule's target up to tick rounding.
pub fn plant_return_rule(
    cfg: &GeneratorConfig,
    rule: &ReturnRule,
    plant: &PlantParams,
) -> Result<Vec<OrderEvent>, GenError> {
    cfg.validate()?;
    plant.validate(cfg, rule)?;
    let mut out = Vec::new();
    for day in 0..cfg.days {
        run_day(cfg, day, Some((rule, plant)), &mut out)?;
    }
    Ok(out)
}

/// Heap entry ordered by (time, insertion sequence); the sequence keeps
/// same-instant actions in schedule order and makes ordering total.
struct Pending {
    t: i64,
    seq: u64,
    action: Action,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        (self.t, self.seq) == (other.t, other.seq)
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for earliest-first.
        (other.t, other.seq).cmp(&(self.t, self.seq))
    }
}

enum Action {
    /// Place the delayed response LO at the ladder's current best.
    Response { side: Side, volume: u64 },
    DepletionBurst { ep: usize },
    DepletionTrim { end_tod_us: i64, intensity: f64, side: Side },
    /// Evaluate the rule on the pre-window book; must run before any event
    /// carrying the window-start timestamp.
    EvalWindow,
    Shape,
    Reprice,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Proc {
    Lo(Side),
    Mo(Side),
    Cancel(Side),
}

const PROCS: [Proc; 6] = [
    Proc::Lo(Side::Buy),
    Proc::Lo(Side::Sell),
    Proc::Mo(Side::Buy),
    Proc::Mo(Side::Sell),
    Proc::Cancel(Side::Buy),
    Proc::Cancel(Side::Sell),
];

struct PlantState {
    rule: ReturnRule,
    params: PlantParams,
    /// Twice the target midprice (half-tick grid), set by the window
    /// evaluation and consumed by the repricing.
    target_x2: Option<i64>,
}

struct DayEngine<'a> {
    cfg: &'a GeneratorConfig,
    close_abs: i64,
    rng: ChaCha8Rng,
    book: Book,
    out: &'a mut Vec<OrderEvent>,
    pending: BinaryHeap<Pending>,
    seq: u64,
    clock: i64,
    lambda_max: f64,
    episodes: Vec<Episode>,
    vol_dist: LogNormal<f64>,
    geo: Geometric,
    plant: Option<PlantState>,
}

impl<'a> DayEngine<'a> {
    fn schedule(&mut self, t: i64, action: Action) {
        self.seq += 1;
        self.pending.push(Pending { t, seq: self.seq, action });
    }

    fn emit(&mut self, ev: OrderEvent) -> Result<BookDelta, GenError> {
        let delta = self.book.apply(&ev)?;
        self.out.push(ev);
        Ok(delta)
    }

    fn tod(&self, t: i64) -> i64 {
        self.cfg.session.time_of_day(t)
    }

    /// Current arrival rate of one process, per second.
    fn rate(&self, proc: Proc, tod: i64) -> f64 {
        let base = match proc {
            Proc::Lo(_) => self.cfg.lo_rate,
            Proc::Mo(_) => self.cfg.mo_rate,
            Proc::Cancel(_) => self.cfg.cancel_rate,
        };
        let mut mult = 1.0;
        if let Proc::Mo(side) = proc {
            for ep in &self.episodes {
                if ep.kind == EpisodeKind::MoFlowImbalance && ep.side == side && ep.active(tod) {
                    mult *= ep.intensity;
                }
            }
        }
        base * mult
    }

    /// Response coupling for market orders of `mo_side` arriving at `tod`.
    fn coupling(&self, mo_side: Side, tod: i64) -> f64 {
        let mut a = self.cfg.resilience;
        for ep in &self.episodes {
            if ep.kind == EpisodeKind::MoFlowImbalance && ep.active(tod) {
                if ep.side == mo_side {
                    a /= ep.intensity;
                } else {
                    a *= ep.intensity.sqrt();
                }
            }
        }
        a
    }

    fn draw_volume(&mut self) -> u64 {
        let v = self.vol_dist.sample(&mut self.rng).round();
        (v.max(1.0) as u64).min(MAX_ORDER_VOLUME)
    }

    fn draw_distance(&mut self) -> i64 {
        for _ in 0..64 {
            let d = 1 + self.geo.sample(&mut self.rng) as i64;
            if d <= self.cfg.placement_max {
                return d;
            }
        }
        1
    }

    fn advance_clock(&mut self) {
        let gap_us = if self.lambda_max > 0.0 {
            let exp = Exp::new(self.lambda_max / 1e6).unwrap();
            exp.sample(&mut self.rng).round().max(1.0)
        } else {
            return self.clock = self.close_abs;
        };
        self.clock = self.clock.saturating_add(gap_us as i64);
    }

    fn handle_clock(&mut self) -> Result<(), GenError> {
        let t = self.clock;
        let tod = self.tod(t);
        let mut u = self.rng.gen::<f64>() * self.lambda_max;
        for proc in PROCS {
            let r = self.rate(proc, tod);
            if u < r {
                return self.execute(proc, t);
            }
            u -= r;
        }
        Ok(()) // thinned: no arrival this tick
    }

    fn execute(&mut self, proc: Proc, t: i64) -> Result<(), GenError> {
        match proc {
            Proc::Lo(side) => {
                let d = self.draw_distance();
                let price = match self.book.best(side.opposite()) {
                    Some(p) => match side {
                        Side::Buy => (p - d).max(1),
                        Side::Sell => p + d,
                    },
                    // degenerate fallback; seeded books never get here
                    None => match self.book.best(side) {
                        Some(own) => own,
                        None => self.cfg.initial_mid_ticks,
                    },
                };
                let volume = self.draw_volume();
                self.emit(OrderEvent::limit(t, side, price, volume))?;
            }
            Proc::Mo(side) => {
                let ladder = side.opposite();
                let within = self.book.volume_within(ladder, self.cfg.placement_max as usize);
                let total = self.book.total_volume(ladder);
                let cap = within.min(total.saturating_sub(1));
                let volume = self.draw_volume().min(cap);
                if volume == 0 {
                    return Ok(());
                }
                let delta = self.emit(OrderEvent::market(t, side, volume))?;
                let a = self.coupling(side, self.tod(t));
                let response = (a * delta.executed_volume as f64).round() as u64;
                if response > 0 {
                    let exp = Exp::new(1.0 / self.cfg.response_delay_us as f64).unwrap();
                    let delay = exp.sample(&mut self.rng).round().max(1.0) as i64;
                    let due = t.saturating_add(delay);
                    if due < self.close_abs {
                        self.schedule(due, Action::Response { side: ladder, volume: response });
                    }
                }
            }
            Proc::Cancel(side) => {
                let candidates = self.near_levels(side);
                if candidates.is_empty() {
                    return Ok(());
                }
                let (price, volume) = candidates[self.rng.gen_range(0..candidates.len())];
                let u = self.rng.gen::<f64>();
                let mut cancel = ((u * volume as f64).ceil() as u64).clamp(1, volume);
                // never cancel a side away entirely
                if self.book.depth(side) == 1 && cancel == self.book.total_volume(side) {
                    cancel -= 1;
                }
                if cancel > 0 {
                    self.emit(OrderEvent::cancel(t, side, price, cancel))?;
                }
            }
        }
        Ok(())
    }

    /// Occupied levels within `placement_max` ticks of the side's best.
    fn near_levels(&self, side: Side) -> Vec<(i64, u64)> {
        let Some(best) = self.book.best(side) else {
            return Vec::new();
        };
        let horizon = self.cfg.placement_max;
        self.book
            .levels(side)
            .into_iter()
            .filter(|(p, _)| (p - best).abs() < horizon)
            .collect()
    }

    fn handle_pending(&mut self, p: Pending) -> Result<(), GenError> {
        match p.action {
            Action::Response { side, volume } => {
                let price = match self.book.best(side) {
                    Some(b) => b,
                    None => match self.book.best(side.opposite()) {
                        Some(o) => match side {
                            Side::Buy => (o - 1).max(1),
                            Side::Sell => o + 1,
                        },
                        None => return Ok(()),
                    },
                };
                self.emit(OrderEvent::limit(p.t, side, price, volume))?;
            }
            Action::DepletionBurst { ep } => {
                let (side, intensity) = {
                    let e = &self.episodes[ep];
                    (e.side, e.intensity)
                };
                for (price, volume) in self.near_levels(side) {
                    let target = ((volume as f64 / intensity).ceil() as u64).max(1);
                    if volume > target {
                        self.emit(OrderEvent::cancel(p.t, side, price, volume - target))?;
                    }
                }
            }
            Action::DepletionTrim { end_tod_us, intensity, side } => {
                let target = ((self.cfg.initial_level_volume as f64 / intensity).round() as u64).max(1);
                for (price, volume) in self.near_levels(side) {
                    if volume > target {
                        self.emit(OrderEvent::cancel(p.t, side, price, volume - target))?;
                    }
                }
                let next = p.t + TRIM_INTERVAL_US;
                if self.tod(next) < end_tod_us {
                    self.schedule(next, Action::DepletionTrim { end_tod_us, intensity, side });
                }
            }
            Action::Shape => self.shape_book(p.t)?,
            Action::EvalWindow => self.eval_window(p.t)?,
            Action::Reprice => self.reprice(p.t)?,
        }
        Ok(())
    }

    /// Rewrites the near-best profile of each side to an exponential shape
    /// with freshly drawn amplitude and decay, leaving both bests in place.
    fn shape_book(&mut self, t: i64) -> Result<(), GenError> {
        let params = self.plant.as_ref().expect("shape only scheduled when planting").params.clone();
        let (a_lo, a_hi) = params.amp_range;
        let (t_lo, t_hi) = params.tau_range;
        for side in [Side::Buy, Side::Sell] {
            let tau = self.rng.gen_range(t_lo..=t_hi);
            let amp = (self.rng.gen_range(a_lo.ln()..=a_hi.ln())).exp();
            let Some(best) = self.book.best(side) else { continue };
            for step in 1..=params.shape_depth {
                let price = match side {
                    Side::Buy => best - (step - 1),
                    Side::Sell => best + (step - 1),
                };
                if price < 1 {
                    break;
                }
                let target = ((amp * (-(step as f64) / tau).exp()).round() as u64).max(1);
                let current = self.book.level_volume(side, price);
                match current.cmp(&target) {
                    Ordering::Less => {
                        self.emit(OrderEvent::limit(t, side, price, target - current))?;
                    }
                    Ordering::Greater => {
                        self.emit(OrderEvent::cancel(t, side, price, current - target))?;
                    }
                    Ordering::Equal => {}
                }
            }
        }
        Ok(())
    }

    /// Reads the book exactly as the window-start snapshot will, draws the
    /// target return, and schedules the repricing.
    fn eval_window(&mut self, t: i64) -> Result<(), GenError> {
        let state = self.plant.as_ref().expect("eval only scheduled when planting");
        let params = state.params.clone();
        let rule = state.rule.clone();
        let l_of = |book: &Book, side: Side| -> f64 {
            book.side_profile(side, params.depth_n)
                .ok()
                .and_then(|profile| exponential_liquidity(&profile, params.delta, params.norm).ok())
                .unwrap_or(0.0)
        };
        let l_bid = l_of(&self.book, Side::Buy);
        let l_ask = l_of(&self.book, Side::Sell);
        let (Some(bb), Some(ba)) = (self.book.best_bid(), self.book.best_ask()) else {
            return Ok(());
        };
        let r = rule.target_return(l_bid, l_ask, &mut self.rng);
        let m0_x2 = bb + ba;
        let target_x2 = ((m0_x2 as f64) * r.exp()).round().max(3.0) as i64;
        self.plant.as_mut().unwrap().target_x2 = Some(target_x2);
        let reprice_at = t + (params.reprice_frac * params.delta_t_us as f64) as i64;
        self.schedule(reprice_at, Action::Reprice);
        Ok(())
    }

    /// Moves the midprice to the stored target by rebuilding the bests:
    /// clear anything that would cross, lay guard volume at the new bests,
    /// and cancel the old front levels. All cancellations name exact
    /// resting volumes, so the stream stays strict-replay clean.
    fn reprice(&mut self, t: i64) -> Result<(), GenError> {
        let Some(target_x2) = self.plant.as_mut().and_then(|s| s.target_x2.take()) else {
            return Ok(());
        };
        let params = self.plant.as_ref().unwrap().params.clone();
        let (Some(bb), Some(ba)) = (self.book.best_bid(), self.book.best_ask()) else {
            return Ok(());
        };
        let mut spread = ba - bb;
        if (target_x2 - spread) % 2 != 0 {
            spread = if spread > 1 { spread - 1 } else { spread + 1 };
        }
        let mut new_bb = (target_x2 - spread) / 2;
        if new_bb < 1 {
            new_bb = 1;
        }
        let new_ba = new_bb + spread;
        // 1. bids at or above the new ask would cross it: clear them
        for (price, volume) in self.book.levels(Side::Buy) {
            if price >= new_ba {
                self.emit(OrderEvent::cancel(t, Side::Buy, price, volume))?;
            }
        }
        // 2. guard volume on the new ask front
        for j in 0..params.guard_levels {
            let price = new_ba + j;
            let current = self.book.level_volume(Side::Sell, price);
            if current < params.guard_volume {
                self.emit(OrderEvent::limit(t, Side::Sell, price, params.guard_volume - current))?;
            }
        }
        // 3. retire ask volume in front of the new best ask
        for (price, volume) in self.book.levels(Side::Sell) {
            if price < new_ba {
                self.emit(OrderEvent::cancel(t, Side::Sell, price, volume))?;
            }
        }
        // 4. retire bid volume above the new best bid
        for (price, volume) in self.book.levels(Side::Buy) {
            if price > new_bb {
                self.emit(OrderEvent::cancel(t, Side::Buy, price, volume))?;
            }
        }
        // 5. guard volume on the new bid front
        for j in 0..params.guard_levels {
            let price = new_bb - j;
            if price < 1 {
                break;
            }
            let current = self.book.level_volume(Side::Buy, price);
            if current < params.guard_volume {
                self.emit(OrderEvent::limit(t, Side::Buy, price, params.guard_volume - current))?;
            }
        }
        debug_assert_eq!(
            self.book.best_bid().unwrap() + self.book.best_ask().unwrap(),
            new_bb + new_ba,
            "repricing must land the midprice on its target"
        );
        Ok(())
    }
}

fn run_day(
    cfg: &GeneratorConfig,
    day: u32,
    plant: Option<(&ReturnRule, &PlantParams)>,
    out: &mut Vec<OrderEvent>,
) -> Result<(), GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1 + day as u64);
    let session = &cfg.session;
    let open_abs = session.at(day, session.effective_open_us());
    let close_abs = session.at(day, session.session_close_us);
    let episodes: Vec<Episode> = cfg.episodes.iter().filter(|e| e.day == day).cloned().collect();

    // one thinning envelope covering every episode boost of the day
    let mut mo_mult = [1.0f64; 2];
    for ep in &episodes {
        if ep.kind == EpisodeKind::MoFlowImbalance {
            let idx = if ep.side == Side::Buy { 0 } else { 1 };
            mo_mult[idx] *= ep.intensity;
        }
    }
    let lambda_max = 2.0 * cfg.lo_rate + cfg.mo_rate * (mo_mult[0] + mo_mult[1]) + 2.0 * cfg.cancel_rate;

    let mut engine = DayEngine {
        cfg,
        close_abs,
        rng,
        book: Book::new(),
        out,
        pending: BinaryHeap::new(),
        seq: 0,
        clock: open_abs,
        lambda_max,
        episodes,
        vol_dist: LogNormal::new(cfg.volume_mu, cfg.volume_sigma).map_err(|e| {
            GenError::BadConfig { reason: format!("volume distribution: {e}") }
        })?,
        geo: Geometric::new(cfg.placement_p).map_err(|e| GenError::BadConfig {
            reason: format!("placement distribution: {e}"),
        })?,
        plant: plant.map(|(rule, params)| PlantState {
            rule: rule.clone(),
            params: params.clone(),
            target_x2: None,
        }),
    };

    // seed the book: symmetric ladders one tick off the configured mid
    for i in 1..=cfg.initial_levels {
        engine.emit(OrderEvent::limit(
            open_abs,
            Side::Buy,
            cfg.initial_mid_ticks - i,
            cfg.initial_level_volume,
        ))?;
        engine.emit(OrderEvent::limit(
            open_abs,
            Side::Sell,
            cfg.initial_mid_ticks + i,
            cfg.initial_level_volume,
        ))?;
    }

    // episode schedule
    for idx in 0..engine.episodes.len() {
        let ep = engine.episodes[idx].clone();
        if ep.kind == EpisodeKind::Depletion {
            let start = session.at(day, ep.start_tod_us);
            engine.schedule(start, Action::DepletionBurst { ep: idx });
            engine.schedule(
                start + TRIM_INTERVAL_US,
                Action::DepletionTrim {
                    end_tod_us: ep.end_tod_us(),
                    intensity: ep.intensity,
                    side: ep.side,
                },
            );
        }
    }

    // plant schedule: one shape + eval per covered window (the first window
    // of the day has no pre-open room to shape or snapshot into, so it is
    // skipped)
    if let Some((_, params)) = plant {
        let spans: Vec<(i64, i64)> = cfg
            .episodes
            .iter()
            .filter(|e| e.day == day && e.kind == EpisodeKind::PlantedReturnRule)
            .map(|e| (e.start_tod_us, e.end_tod_us()))
            .collect();
        let mut tod = session.effective_open_us() + params.delta_t_us;
        while tod + params.delta_t_us <= session.session_close_us {
            let covered = spans.is_empty() || spans.iter().any(|&(s, e)| tod >= s && tod < e);
            if covered {
                let start = session.at(day, tod);
                engine.schedule(start - params.shape_lead_us, Action::Shape);
                engine.schedule(start, Action::EvalWindow);
            }
            tod += params.delta_t_us;
        }
    }

    engine.advance_clock();
    loop {
        if let Some(head_t) = engine.pending.peek().map(|p| p.t) {
            if head_t <= engine.clock {
                let p = engine.pending.pop().unwrap();
                if p.t < engine.close_abs {
                    engine.handle_pending(p)?;
                }
                continue;
            }
        }
        if engine.clock >= engine.close_abs {
            break;
        }
        engine.handle_clock()?;
        engine.advance_clock();
    }
    Ok(())
}
