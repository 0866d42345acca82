//! Batch pipeline behind the command-line front end: parameter resolution
//! with presets, stage sequencing with tagged failures, and deterministic,
//! atomically written report artifacts.
//!
//! Every produced file embeds the run's `config_hash`, the SHA-256 of the
//! canonical JSON of the resolved parameters (worker count excluded), so a
//! bundle can always be traced back to the exact configuration that made
//! it. Identical manifests produce byte-identical bundles regardless of
//! thread count; any stage failure removes the artifacts written so far.

use std::fmt;
use std::fs;
use std::io::{BufReader, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::book::Side;
use crate::detect::{self, DetectParams, LargeEvent, VolatilityStat};
use crate::flows::{self, FlowCurveParams, FlowError, ResponseCondition, ResponseFit};
use crate::ingest::{self, ReplayLog, SessionConfig};
use crate::liquidity::{self, LiquiditySnapshot, NormSampling, ProfileConditioning};
use crate::stats::{self, FitResult};
use crate::synth::{self, GeneratorConfig, PlantParams, ReturnRule};
use crate::windows::{self, TiledWindow};

/// Pipeline stages, in execution order; each maps to a process exit code so
/// scripted callers can tell where a run died.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Ingest,
    Replay,
    Detect,
    Windows,
    Flows,
    Liquidity,
    Stats,
    Write,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Ingest => 3,
            Stage::Replay => 4,
            Stage::Detect => 5,
            Stage::Windows => 6,
            Stage::Flows => 7,
            Stage::Liquidity => 8,
            Stage::Stats => 9,
            Stage::Write => 10,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Replay => "replay",
            Stage::Detect => "detect",
            Stage::Windows => "windows",
            Stage::Flows => "flows",
            Stage::Liquidity => "liquidity",
            Stage::Stats => "stats",
            Stage::Write => "write",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    fn new(stage: Stage, err: impl fmt::Display) -> Self {
        PipelineError { stage, message: err.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        self.stage.exit_code()
    }
}

/// Detection presets; `Custom` starts from the large-scale values and
/// expects overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    LargeScale,
    ShortScale,
    Custom,
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "large_scale" | "large" => Ok(Preset::LargeScale),
            "short_scale" | "short" => Ok(Preset::ShortScale),
            "custom" => Ok(Preset::Custom),
            other => Err(format!(
                "unknown preset {other:?} (expected large_scale, short_scale or custom)"
            )),
        }
    }
}

/// Optional flag-level overrides applied on top of the preset.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub delta_t_us: Option<i64>,
    pub abs_threshold: Option<f64>,
    pub vol_multiplier: Option<f64>,
    pub min_gap_us: Option<i64>,
    pub bucket_width_us: Option<i64>,
    pub delta: Option<f64>,
    pub depth_n: Option<usize>,
    pub bins: Option<usize>,
}

/// Everything a run needs, as given by the caller.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub inputs: Vec<PathBuf>,
    pub preset: Preset,
    pub overrides: Overrides,
    pub session: SessionConfig,
    pub out_dir: PathBuf,
    /// Rayon worker threads; 0 uses the library default. Not part of the
    /// config hash — results do not depend on it.
    pub workers: usize,
}

impl RunManifest {
    pub fn new(inputs: Vec<PathBuf>, out_dir: PathBuf) -> Self {
        RunManifest {
            inputs,
            preset: Preset::default(),
            overrides: Overrides::default(),
            session: SessionConfig::default(),
            out_dir,
            workers: 0,
        }
    }
}

/// The manifest with every default and preset applied; what the config
/// hash is computed over.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedParams {
    pub tool_version: String,
    pub preset: Preset,
    pub inputs: Vec<String>,
    pub session: SessionConfig,
    pub delta_t_us: i64,
    pub abs_threshold: f64,
    pub vol_multiplier: f64,
    pub min_gap_us: i64,
    pub bucket_width_us: i64,
    pub volatility_stat: VolatilityStat,
    /// δ used for snapshots, clouds and conditionals.
    pub delta: f64,
    /// Profile depth N for liquidity and the shared norm.
    pub depth_n: usize,
    pub bins: usize,
    pub min_bin_count: u64,
    pub flow_range_us: i64,
    pub flow_subinterval_us: i64,
    pub response_bins: usize,
    pub delta_grid: Vec<f64>,
}

impl ResolvedParams {
    pub fn resolve(manifest: &RunManifest) -> Self {
        let base = match manifest.preset {
            Preset::ShortScale => DetectParams::short_scale(),
            Preset::LargeScale | Preset::Custom => DetectParams::large_scale(),
        };
        let o = &manifest.overrides;
        ResolvedParams {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            preset: manifest.preset,
            inputs: manifest.inputs.iter().map(|p| p.display().to_string()).collect(),
            session: manifest.session.clone(),
            delta_t_us: o.delta_t_us.unwrap_or(base.delta_t_us),
            abs_threshold: o.abs_threshold.unwrap_or(base.abs_threshold),
            vol_multiplier: o.vol_multiplier.unwrap_or(base.vol_multiplier),
            min_gap_us: o.min_gap_us.unwrap_or(base.min_gap_us),
            bucket_width_us: o.bucket_width_us.unwrap_or(base.bucket_width_us),
            volatility_stat: base.stat,
            delta: o.delta.unwrap_or(5.0),
            depth_n: o.depth_n.unwrap_or(100),
            bins: o.bins.unwrap_or(20),
            min_bin_count: 30,
            flow_range_us: 3_600_000_000,
            flow_subinterval_us: 30_000_000,
            response_bins: 20,
            delta_grid: (1..=20).map(|d| d as f64).collect(),
        }
    }

    pub fn detect_params(&self) -> DetectParams {
        DetectParams {
            delta_t_us: self.delta_t_us,
            abs_threshold: self.abs_threshold,
            vol_multiplier: self.vol_multiplier,
            min_gap_us: self.min_gap_us,
            bucket_width_us: self.bucket_width_us,
            stat: self.volatility_stat,
        }
    }

    /// SHA-256 over the canonical JSON form.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("resolved params serialize");
        let digest = Sha256::digest(json.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

/// What a run produced, echoed into `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub tool_version: String,
    pub n_messages: usize,
    pub n_frames: usize,
    pub n_days: usize,
    pub dropped_events: u64,
    pub clamped_cancels: u64,
    pub n_events_positive: usize,
    pub n_events_negative: usize,
    pub n_windows: usize,
    pub sigma_pool: Option<f64>,
    pub norm: Option<f64>,
    pub power_law: Option<FitResult>,
    pub best_delta: Option<f64>,
    pub response: Vec<ResponseBrief>,
    /// Artifacts that could not be produced on this dataset (for example a
    /// flow curve for a sign with no detected events), with the reason.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResponseBrief {
    pub condition: String,
    pub a: f64,
    pub b: f64,
    pub se_a: f64,
    pub se_b: f64,
    pub r_squared: f64,
    pub n_windows: usize,
}

/// Which artifact families a command produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Detect,
    Flows,
    Liquidity,
    Fit,
    Full,
}

impl Scope {
    fn wants_events_csv(self) -> bool {
        matches!(self, Scope::Detect | Scope::Full)
    }
    fn wants_flows(self) -> bool {
        matches!(self, Scope::Flows | Scope::Full)
    }
    fn wants_liquidity(self) -> bool {
        matches!(self, Scope::Liquidity | Scope::Full)
    }
    fn wants_stats(self) -> bool {
        matches!(self, Scope::Fit | Scope::Full)
    }
}

/// Runs the full pipeline and writes the complete report bundle.
pub fn run_pipeline(manifest: &RunManifest) -> Result<RunSummary, PipelineError> {
    run_scoped(manifest, Scope::Full)
}

/// Runs the subset of the pipeline a subcommand asks for.
pub fn run_scoped(manifest: &RunManifest, scope: Scope) -> Result<RunSummary, PipelineError> {
    let resolved = ResolvedParams::resolve(manifest);
    resolved
        .detect_params()
        .validate()
        .map_err(|e| PipelineError::new(Stage::Config, e))?;
    fs::create_dir_all(&manifest.out_dir)
        .map_err(|e| PipelineError::new(Stage::Write, format!("{}: {e}", manifest.out_dir.display())))?;
    let mut sink = ArtifactSink::new(manifest.out_dir.clone());
    let mut body = || run_stages(manifest, &resolved, scope, &mut sink);
    let outcome = if manifest.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(manifest.workers)
            .build()
            .map_err(|e| PipelineError::new(Stage::Config, e))?;
        pool.install(body)
    } else {
        body()
    };
    match outcome {
        Ok(summary) => Ok(summary),
        Err(e) => {
            sink.discard_all();
            Err(e)
        }
    }
}

fn run_stages(
    manifest: &RunManifest,
    resolved: &ResolvedParams,
    scope: Scope,
    sink: &mut ArtifactSink,
) -> Result<RunSummary, PipelineError> {
    let hash = resolved.config_hash();
    let mut skipped: Vec<String> = Vec::new();

    // ingest
    if manifest.inputs.is_empty() {
        return Err(PipelineError::new(Stage::Ingest, "no input files given"));
    }
    let mut events = Vec::new();
    for path in &manifest.inputs {
        let file = fs::File::open(path)
            .map_err(|e| PipelineError::new(Stage::Ingest, format!("{}: {e}", path.display())))?;
        let parsed = ingest::parse_messages(BufReader::new(file))
            .map_err(|e| PipelineError::new(Stage::Ingest, format!("{}: {e}", path.display())))?;
        events.extend(parsed);
    }
    if events.is_empty() {
        return Err(PipelineError::new(Stage::Ingest, "inputs contain no events"));
    }
    let n_messages = events.len();

    // replay
    let log = ingest::replay(&events, &resolved.session, resolved.depth_n)
        .map_err(|e| PipelineError::new(Stage::Replay, e))?;
    drop(events);

    // detect
    let (_profile, detected) = detect::detect(&log, &resolved.detect_params())
        .map_err(|e| PipelineError::new(Stage::Detect, e))?;
    let positive: Vec<LargeEvent> = detected.iter().filter(|e| e.sign > 0).cloned().collect();
    let negative: Vec<LargeEvent> = detected.iter().filter(|e| e.sign < 0).cloned().collect();

    if scope.wants_events_csv() {
        sink.write("events.csv", events_csv(&hash, &detected))?;
    }

    // windows
    let tiled = windows::tile_windows(&log, resolved.delta_t_us)
        .map_err(|e| PipelineError::new(Stage::Windows, e))?;
    let sigma_pool = windows::pooled_return_std(&tiled);

    if scope.wants_flows() {
        flows_stage(&hash, resolved, &log, &detected, &tiled, sink, &mut skipped)?;
    }

    let mut norm = None;
    let mut snapshots: Vec<Option<LiquiditySnapshot>> = Vec::new();
    if scope.wants_liquidity() || scope.wants_stats() {
        let n = liquidity::compute_norm(&log, resolved.depth_n, NormSampling::default())
            .map_err(|e| PipelineError::new(Stage::Liquidity, e))?;
        snapshots = liquidity::window_snapshots(&log, &tiled, resolved.delta, resolved.depth_n, n)
            .map_err(|e| PipelineError::new(Stage::Liquidity, e))?;
        norm = Some(n);
    }

    if scope.wants_liquidity() {
        sink.write("liquidity_snapshots.csv", snapshots_csv(&hash, resolved, &snapshots))?;
        sink.write(
            "profiles.csv",
            profiles_csv(&hash, resolved, &log, &positive, &negative, &mut skipped)?,
        )?;
    }

    let mut power_law = None;
    let mut best_delta = None;
    if scope.wants_stats() {
        let outcome = stats_stage(
            &hash,
            resolved,
            &log,
            &tiled,
            &snapshots,
            sigma_pool,
            norm.expect("norm computed for stats scope"),
            sink,
            &mut skipped,
        )?;
        power_law = outcome.0;
        best_delta = outcome.1;
    }

    let summary = RunSummary {
        config_hash: hash.clone(),
        tool_version: resolved.tool_version.clone(),
        n_messages,
        n_frames: log.frames.len(),
        n_days: log.days.len(),
        dropped_events: log.dropped_events,
        clamped_cancels: log.clamped_cancels,
        n_events_positive: positive.len(),
        n_events_negative: negative.len(),
        n_windows: tiled.len(),
        sigma_pool,
        norm,
        power_law,
        best_delta,
        response: sink.response_briefs.clone(),
        skipped,
    };

    if scope == Scope::Full {
        sink.write("summary.json", to_json_pretty(&summary)?)?;
        let manifest_doc = serde_json::json!({
            "config_hash": hash,
            "resolved": resolved,
        });
        sink.write(
            "manifest_resolved.json",
            serde_json::to_string_pretty(&manifest_doc)
                .map_err(|e| PipelineError::new(Stage::Write, e))?
                .into_bytes(),
        )?;
    }
    Ok(summary)
}

/// Flow curves for both ladders and both signs, plus the ask-ladder
/// response fits under the three conditionings.
fn flows_stage(
    hash: &str,
    resolved: &ResolvedParams,
    log: &ReplayLog,
    events: &[LargeEvent],
    tiled: &[TiledWindow],
    sink: &mut ArtifactSink,
    skipped: &mut Vec<String>,
) -> Result<(), PipelineError> {
    for (ladder, ladder_name) in [(Side::Sell, "ask"), (Side::Buy, "bid")] {
        for (sign, sign_name) in [(1i8, "pos"), (-1i8, "neg")] {
            let name = format!("flows_{ladder_name}_{sign_name}.csv");
            let params = FlowCurveParams {
                range_us: resolved.flow_range_us,
                subinterval_us: resolved.flow_subinterval_us,
                ..FlowCurveParams::standard(ladder, sign)
            };
            match flows::relative_flow_curve(log, events, &params) {
                Ok(curve) => sink.write(&name, flow_curve_csv(hash, &curve))?,
                Err(FlowError::InsufficientEvents { got, needed }) => {
                    skipped.push(format!("{name}: {got} events of sign {sign} (need {needed})"));
                }
                Err(e) => return Err(PipelineError::new(Stage::Flows, e)),
            }
        }
    }

    let mut fits: Vec<ResponseFit> = Vec::new();
    for condition in [
        ResponseCondition::All,
        ResponseCondition::PositiveEvents,
        ResponseCondition::NegativeEvents,
    ] {
        match flows::response_fit(log, tiled, events, Side::Sell, condition, resolved.response_bins) {
            Ok(fit) => fits.push(fit),
            Err(FlowError::EmptyCondition) => {
                skipped.push(format!("response fit ({}): no qualifying windows", condition.label()));
            }
            Err(FlowError::Stats(e)) => {
                skipped.push(format!("response fit ({}): {e}", condition.label()));
            }
            Err(e) => return Err(PipelineError::new(Stage::Flows, e)),
        }
    }
    sink.response_briefs = fits
        .iter()
        .map(|f| ResponseBrief {
            condition: f.condition.label().to_string(),
            a: f.a,
            b: f.b,
            se_a: f.se_a,
            se_b: f.se_b,
            r_squared: f.r_squared,
            n_windows: f.n_windows,
        })
        .collect();
    let doc = serde_json::json!({
        "config_hash": hash,
        "ladder": "ask",
        "delta_t_us": resolved.delta_t_us,
        "fits": fits,
    });
    sink.write("response_fit.json", to_json_pretty(&doc)?)?;
    Ok(())
}

/// Clouds, fits, the δ scan and the imbalance conditionals.
#[allow(clippy::too_many_arguments)]
fn stats_stage(
    hash: &str,
    resolved: &ResolvedParams,
    log: &ReplayLog,
    tiled: &[TiledWindow],
    snapshots: &[Option<LiquiditySnapshot>],
    sigma_pool: Option<f64>,
    norm: f64,
    sink: &mut ArtifactSink,
    skipped: &mut Vec<String>,
) -> Result<(Option<FitResult>, Option<f64>), PipelineError> {
    // per-window parallel arrays: both side profiles plus the window return
    let mut profiles_ask: Vec<Vec<u64>> = Vec::new();
    let mut profiles_bid: Vec<Vec<u64>> = Vec::new();
    let mut returns: Vec<f64> = Vec::new();
    for w in tiled {
        let (Some(frame), Some(r)) = (w.snapshot_frame, w.log_return) else {
            continue;
        };
        let book = log.book_at(frame);
        let (Ok(ask), Ok(bid)) = (
            book.side_profile(Side::Sell, resolved.depth_n),
            book.side_profile(Side::Buy, resolved.depth_n),
        ) else {
            continue;
        };
        profiles_ask.push(ask);
        profiles_bid.push(bid);
        returns.push(r);
    }
    if returns.is_empty() {
        return Err(PipelineError::new(Stage::Stats, "no window with both a snapshot and a return"));
    }
    let sigma = match sigma_pool {
        Some(s) if s > 0.0 => s,
        _ => {
            return Err(PipelineError::new(
                Stage::Stats,
                "pooled return deviation is zero; cannot express returns in volatility units",
            ))
        }
    };
    let returns_sigma: Vec<f64> = returns.iter().map(|r| r / sigma).collect();

    let cloud_pos = stats::liquidity_return_cloud(&profiles_ask, &returns_sigma, norm, resolved.delta, 1)
        .map_err(|e| PipelineError::new(Stage::Stats, e))?;
    let cloud_neg = stats::liquidity_return_cloud(&profiles_bid, &returns_sigma, norm, resolved.delta, -1)
        .map_err(|e| PipelineError::new(Stage::Stats, e))?;
    sink.write("liquidity_cloud.csv", cloud_csv(hash, resolved, &cloud_pos, &cloud_neg))?;

    let mut power_law = None;
    match stats::power_law_fit(&cloud_pos) {
        Ok(fit) => {
            let nonlinear = stats::power_law_fit_nonlinear(&cloud_pos).ok();
            let doc = serde_json::json!({
                "config_hash": hash,
                "side": "ask",
                "event_sign": 1,
                "delta": resolved.delta,
                "sigma_pool": sigma,
                "norm": norm,
                "fit": fit,
                "nonlinear": nonlinear,
            });
            sink.write("power_law_fit.json", to_json_pretty(&doc)?)?;
            power_law = Some(fit);
        }
        Err(e) => skipped.push(format!("power_law_fit.json: {e}")),
    }

    match stats::log_binning(&cloud_pos, resolved.bins, resolved.min_bin_count) {
        Ok(binned) => {
            let mut body = csv_header(hash, serde_json::json!({"bins": resolved.bins, "min_count": resolved.min_bin_count}));
            body.push_str("bin_center,mean_abs_return_sigma,se,count\n");
            for i in 0..binned.bin_centers.len() {
                body.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_f(binned.bin_centers[i]),
                    fmt_f(binned.mean[i]),
                    fmt_f(binned.se[i]),
                    binned.counts[i]
                ));
            }
            sink.write("binned_cloud.csv", body.into_bytes())?;
        }
        Err(e) => skipped.push(format!("binned_cloud.csv: {e}")),
    }

    let mut best_delta = None;
    match stats::delta_scan(&profiles_ask, &returns_sigma, norm, &resolved.delta_grid, 1) {
        Ok(scan) => {
            let mut body = csv_header(
                hash,
                serde_json::json!({"best_delta": scan.best_delta, "event_sign": 1, "side": "ask"}),
            );
            body.push_str("delta,r_squared,K,alpha\n");
            for df in &scan.fits {
                match &df.fit {
                    Ok(fit) => body.push_str(&format!(
                        "{},{},{},{}\n",
                        fmt_f(df.delta),
                        fmt_f(fit.r_squared),
                        fmt_f(fit.k),
                        fmt_f(fit.alpha)
                    )),
                    Err(_) => body.push_str(&format!("{},,,\n", fmt_f(df.delta))),
                }
            }
            sink.write("delta_scan.csv", body.into_bytes())?;
            best_delta = Some(scan.best_delta);
        }
        Err(e) => skipped.push(format!("delta_scan.csv: {e}")),
    }

    // imbalance conditionals pair each window's snapshot with its return
    let samples: Vec<(f64, f64)> = tiled
        .iter()
        .zip(snapshots)
        .filter_map(|(w, s)| {
            let snap = s.as_ref()?;
            Some((snap.imbalance?, w.log_return?))
        })
        .collect();
    match stats::imbalance_conditionals(&samples, resolved.bins, resolved.min_bin_count) {
        Ok(cond) => {
            let meta = serde_json::json!({
                "n_bins": cond.n_bins,
                "min_count": cond.min_count,
                "dropped_bins": cond.dropped_bins,
                "delta": resolved.delta,
            });
            let mut mean_body = csv_header(hash, meta.clone());
            mean_body.push_str("bin_center,mean_return,se,count\n");
            let mut freq_body = csv_header(hash, meta);
            freq_body.push_str("bin_center,freq_pos,freq_zero,freq_neg,count\n");
            for i in 0..cond.bin_centers.len() {
                mean_body.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt_f(cond.bin_centers[i]),
                    fmt_f(cond.mean_return[i]),
                    fmt_f(cond.se[i]),
                    cond.counts[i]
                ));
                freq_body.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_f(cond.bin_centers[i]),
                    fmt_f(cond.freq_pos[i]),
                    fmt_f(cond.freq_zero[i]),
                    fmt_f(cond.freq_neg[i]),
                    cond.counts[i]
                ));
            }
            sink.write("imbalance_mean_return.csv", mean_body.into_bytes())?;
            sink.write("imbalance_sign_freq.csv", freq_body.into_bytes())?;
        }
        Err(e) => {
            skipped.push(format!("imbalance_mean_return.csv, imbalance_sign_freq.csv: {e}"));
        }
    }

    Ok((power_law, best_delta))
}

// ---- artifact bodies -------------------------------------------------------

/// `# {json}` comment line carrying at least the config hash.
fn csv_header(hash: &str, extra: serde_json::Value) -> String {
    let mut meta = serde_json::Map::new();
    meta.insert("config_hash".into(), serde_json::Value::String(hash.to_string()));
    if let serde_json::Value::Object(map) = extra {
        for (k, v) in map {
            meta.insert(k, v);
        }
    }
    format!("# {}\n", serde_json::Value::Object(meta))
}

/// Full-precision decimal text; NaN becomes an empty field.
fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

fn events_csv(hash: &str, events: &[LargeEvent]) -> Vec<u8> {
    let mut body = csv_header(hash, serde_json::json!({"n_events": events.len()}));
    body.push_str("window_start_us,delta_t_s,log_return,sign,trigger_index\n");
    for e in events {
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            e.window_start_us,
            fmt_f(e.delta_t_us as f64 / 1e6),
            fmt_f(e.log_return),
            e.sign,
            e.trigger_frame
        ));
    }
    body.into_bytes()
}

fn flow_curve_csv(hash: &str, curve: &flows::FlowCurve) -> Vec<u8> {
    let ladder = match curve.ladder {
        Side::Sell => "ask",
        Side::Buy => "bid",
    };
    let mut body = csv_header(
        hash,
        serde_json::json!({
            "ladder": ladder,
            "event_sign": curve.event_sign,
            "at_best_only": curve.at_best_only,
            "n_events": curve.n_events,
            "delta_t_us": curve.delta_t_us,
            "baseline_LO": curve.baseline_lo,
            "baseline_MO": curve.baseline_mo,
            "baseline_C": curve.baseline_c,
        }),
    );
    body.push_str("offset_s,r_LO,r_MO,r_C,se_LO,se_MO,se_C\n");
    for i in 0..curve.offsets_s.len() {
        body.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f(curve.offsets_s[i]),
            fmt_f(curve.r_lo[i]),
            fmt_f(curve.r_mo[i]),
            fmt_f(curve.r_c[i]),
            fmt_f(curve.se_lo[i]),
            fmt_f(curve.se_mo[i]),
            fmt_f(curve.se_c[i])
        ));
    }
    body.into_bytes()
}

fn snapshots_csv(
    hash: &str,
    resolved: &ResolvedParams,
    snapshots: &[Option<LiquiditySnapshot>],
) -> Vec<u8> {
    let mut body = csv_header(
        hash,
        serde_json::json!({"delta": resolved.delta, "depth_n": resolved.depth_n}),
    );
    body.push_str("timestamp_us,delta,L_A,L_B,L_imb\n");
    for snap in snapshots.iter().flatten() {
        let imb = match snap.imbalance {
            Some(v) => fmt_f(v),
            None => String::new(),
        };
        body.push_str(&format!(
            "{},{},{},{},{}\n",
            snap.timestamp_us,
            fmt_f(snap.delta),
            fmt_f(snap.l_ask),
            fmt_f(snap.l_bid),
            imb
        ));
    }
    body.into_bytes()
}

fn profiles_csv(
    hash: &str,
    resolved: &ResolvedParams,
    log: &ReplayLog,
    positive: &[LargeEvent],
    negative: &[LargeEvent],
    skipped: &mut Vec<String>,
) -> Result<Vec<u8>, PipelineError> {
    let mut body = csv_header(hash, serde_json::json!({"depth_n": resolved.depth_n}));
    body.push_str("conditioning,side,distance,mean_volume,se,n_samples\n");
    let runs: [(&str, ProfileConditioning<'_>); 3] = [
        ("unconditional", ProfileConditioning::Unconditional),
        ("pre_positive", ProfileConditioning::PreEvent(positive)),
        ("pre_negative", ProfileConditioning::PreEvent(negative)),
    ];
    for (label, conditioning) in runs {
        for (side, side_name) in [(Side::Sell, "ask"), (Side::Buy, "bid")] {
            match liquidity::average_profile(log, side, resolved.depth_n, conditioning) {
                Ok(avg) => {
                    for i in 0..avg.mean.len() {
                        body.push_str(&format!(
                            "{},{},{},{},{},{}\n",
                            label,
                            side_name,
                            i + 1,
                            fmt_f(avg.mean[i]),
                            fmt_f(avg.se[i]),
                            avg.n_samples
                        ));
                    }
                }
                Err(e) => skipped.push(format!("profiles.csv ({label}/{side_name}): {e}")),
            }
        }
    }
    Ok(body.into_bytes())
}

fn cloud_csv(
    hash: &str,
    resolved: &ResolvedParams,
    cloud_pos: &[(f64, f64)],
    cloud_neg: &[(f64, f64)],
) -> Vec<u8> {
    let mut body = csv_header(
        hash,
        serde_json::json!({
            "delta": resolved.delta,
            "positive_side": "ask",
            "negative_side": "bid",
            "return_units": "pooled_sigma",
        }),
    );
    body.push_str("event_sign,liquidity,abs_return_sigma\n");
    for &(l, r) in cloud_pos {
        body.push_str(&format!("1,{},{}\n", fmt_f(l), fmt_f(r)));
    }
    for &(l, r) in cloud_neg {
        body.push_str(&format!("-1,{},{}\n", fmt_f(l), fmt_f(r)));
    }
    body.into_bytes()
}

fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>, PipelineError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s.into_bytes()
        })
        .map_err(|e| PipelineError::new(Stage::Write, e))
}

/// Writes artifacts atomically (temp file + rename) and remembers them so a
/// failed run can clean up after itself.
struct ArtifactSink {
    dir: PathBuf,
    written: Vec<PathBuf>,
    response_briefs: Vec<ResponseBrief>,
}

impl ArtifactSink {
    fn new(dir: PathBuf) -> Self {
        ArtifactSink { dir, written: Vec::new(), response_briefs: Vec::new() }
    }

    fn write(&mut self, name: &str, content: Vec<u8>) -> Result<(), PipelineError> {
        let stage_err = |e: &dyn fmt::Display| PipelineError::new(Stage::Write, format!("{name}: {e}"));
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| stage_err(&e))?;
        tmp.write_all(&content).map_err(|e| stage_err(&e))?;
        let path = self.dir.join(name);
        tmp.persist(&path).map_err(|e| stage_err(&e))?;
        self.written.push(path);
        Ok(())
    }

    fn discard_all(&mut self) {
        for path in self.written.drain(..) {
            let _ = fs::remove_file(path);
        }
    }
}

// ---- generation front end --------------------------------------------------

/// A generation job: the stream model plus an optional planted return rule.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSpec {
    pub generator: GeneratorConfig,
    pub plant: Option<PlantSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantSpec {
    pub rule: ReturnRule,
    #[serde(default)]
    pub params: PlantParams,
}

impl GenSpec {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| PipelineError::new(Stage::Config, format!("{}: {e}", path.display())))
    }
}

/// Generates the stream described by `spec` and writes it atomically to
/// `out`; returns the number of emitted messages.
pub fn cmd_generate(spec: &GenSpec, out: &Path) -> Result<usize, PipelineError> {
    let events = match &spec.plant {
        None => synth::generate(&spec.generator),
        Some(p) => synth::plant_return_rule(&spec.generator, &p.rule, &p.params),
    }
    .map_err(|e| PipelineError::new(Stage::Config, e))?;
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)
        .map_err(|e| PipelineError::new(Stage::Write, format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| PipelineError::new(Stage::Write, e))?;
    ingest::serialize_messages(&events, &mut tmp)
        .map_err(|e| PipelineError::new(Stage::Write, e))?;
    tmp.persist(out)
        .map_err(|e| PipelineError::new(Stage::Write, format!("{}: {e}", out.display())))?;
    Ok(events.len())
}
