//! Limit order book reconstruction and liquidity analytics.
//!
//! The crate replays order-message streams (limit orders, market orders,
//! cancellations) into a price-level book, detects large midprice
//! fluctuations on configurable time scales, and computes the order-flow
//! and liquidity measures that characterise them:
//!
//! - relative LO/MO/C flow curves around large events, with annual baselines
//! - the linear response of limit-order placement to market-order flow
//! - exponentially weighted book liquidity `L(delta)` and its bid/ask
//!   imbalance
//! - the power-law relation between pre-window liquidity and the size of the
//!   subsequent return, including the scan over the weighting scale `delta`
//! - return statistics conditioned on the liquidity imbalance
//!
//! A seeded synthetic-stream generator with plantable "crisis" episodes
//! provides ground truth for all of the above; the `pipeline` module wires
//! everything into a deterministic report bundle and backs the `lobliq`
//! command-line tool.
//!
//! Start with the runnable programs under `examples/` — there is one per
//! capability — or with [`pipeline::run_pipeline`] for the end-to-end path.

pub mod book;
pub mod detect;
pub mod flows;
pub mod ingest;
pub mod liquidity;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod windows;

pub use book::{Book, BookDelta, BookError, CancelPolicy, LevelTouch, OpKind, OrderEvent, Side};
pub use detect::{DetectError, DetectParams, LargeEvent, VolatilityProfile, VolatilityStat};
pub use flows::{FlowCurve, FlowError, FlowRecord, ResponseCondition, ResponseFit};
pub use ingest::{ParseError, ReplayError, ReplayFrame, ReplayLog, SessionConfig};
pub use liquidity::{LiquidityError, LiquiditySnapshot, ProfileAverage};
pub use stats::{ConditionalCurve, DeltaScan, FitResult, ImbalanceConditionals, StatsError};
pub use pipeline::{GenSpec, PipelineError, Preset, RunManifest, RunSummary, Scope};
pub use synth::{Episode, EpisodeKind, GenError, GeneratorConfig, PlantParams, ReturnRule};
pub use windows::TiledWindow;
