//! Fitting and binning: the liquidity/return power law, its scan over the
//! weighting scale, and return statistics conditioned on the imbalance.
//!
//! The central relation is `r = K * L^(-alpha)` between pre-window liquidity
//! `L` and the magnitude `r` of the following return. [`power_law_fit`] fits
//! it by ordinary least squares in log-log space (a direct nonlinear mode
//! exists behind [`power_law_fit_nonlinear`]); `alpha` is stored as the
//! *positive* decay exponent. [`delta_scan`] refits the relation with the
//! liquidity recomputed at each `delta` of a grid and reports which `delta`
//! explains returns best.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::liquidity::exponential_liquidity;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} points, got {got}")]
    InsufficientSample { needed: usize, got: usize },
    #[error("point {index} ({x}, {y}) not strictly positive")]
    DomainError { index: usize, x: f64, y: f64 },
    #[error("degenerate fit: no variation in the abscissae")]
    DegenerateFit,
    #[error("bad binning config: {reason}")]
    BadBins { reason: String },
    #[error("input lengths differ: {left} vs {right}")]
    MismatchedLengths { left: usize, right: usize },
    #[error("imbalance {value} at sample {index} outside [-1, 1]")]
    ImbalanceOutOfRange { index: usize, value: f64 },
    #[error("no bin reached {min_count} samples ({n_samples} samples over {n_bins} bins)")]
    NoOccupiedBins { min_count: u64, n_samples: usize, n_bins: usize },
    #[error("no delta in the grid produced a valid fit")]
    AllDeltasInvalid,
    #[error(transparent)]
    Liquidity(#[from] crate::liquidity::LiquidityError),
}

/// Fitted `r = K * L^(-alpha)`.
///
/// `alpha` is the positive decay exponent: liquid books damp returns, so
/// return size falls as `L^(-alpha)`. (Quoting the slope of the log-log line
/// instead would flip the sign.) `r_squared` is measured in the space the
/// fit ran in: log-log for [`power_law_fit`], linear for the nonlinear mode.
/// `p_value` is the two-sided t-test of the exponent against zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub k: f64,
    pub alpha: f64,
    pub se_k: f64,
    pub se_alpha: f64,
    pub r_squared: f64,
    pub p_value: f64,
    pub n_points: usize,
}

fn two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df validated by caller");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// Least-squares fit of `ln r = ln K - alpha * ln L` over a strictly
/// positive cloud.
pub fn power_law_fit(points: &[(f64, f64)]) -> Result<FitResult, StatsError> {
    check_positive(points)?;
    if points.len() < 3 {
        return Err(StatsError::InsufficientSample {
            needed: 3,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return Err(StatsError::DegenerateFit);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ssr: f64 = logs
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let sst: f64 = logs.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let r_squared = if sst == 0.0 { 1.0 } else { 1.0 - ssr / sst };
    let df = n - 2.0;
    let s2 = ssr / df;
    let se_slope = (s2 / sxx).sqrt();
    let se_intercept = (s2 * (1.0 / n + mean_x * mean_x / sxx)).sqrt();
    let k = intercept.exp();
    Ok(FitResult {
        k,
        alpha: -slope,
        se_k: k * se_intercept,
        se_alpha: se_slope,
        r_squared,
        p_value: two_sided_p(slope / se_slope, df),
        n_points: points.len(),
    })
}

/// Direct nonlinear least squares for `r = K * L^(-alpha)` (minimises the
/// *linear*-space residual, unlike [`power_law_fit`]). `K` is profiled out
/// exactly; `alpha` is found by golden-section search around the log-log
/// estimate. Standard errors come from the Gauss-Newton approximation.
pub fn power_law_fit_nonlinear(points: &[(f64, f64)]) -> Result<FitResult, StatsError> {
    let loglog = power_law_fit(points)?;
    let sse_at = |alpha: f64| -> (f64, f64) {
        // optimal K for fixed alpha: K = sum(y x^-a) / sum(x^-2a)
        let mut num = 0.0;
        let mut den = 0.0;
        for &(x, y) in points {
            let w = x.powf(-alpha);
            num += y * w;
            den += w * w;
        }
        let k = if den > 0.0 { num / den } else { 0.0 };
        let sse: f64 = points
            .iter()
            .map(|&(x, y)| (y - k * x.powf(-alpha)).powi(2))
            .sum();
        (sse, k)
    };
    let (mut lo, mut hi) = (loglog.alpha - 3.0, loglog.alpha + 3.0);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (sse_at(a).0, sse_at(b).0);
    for _ in 0..200 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = sse_at(a).0;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = sse_at(b).0;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let (sse, k) = sse_at(alpha);
    let n = points.len() as f64;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sst: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let r_squared = if sst == 0.0 { 1.0 } else { 1.0 - sse / sst };
    // Gauss-Newton covariance: J columns d/dK = x^-a, d/dalpha = -K ln x x^-a
    let (mut j11, mut j12, mut j22) = (0.0, 0.0, 0.0);
    for &(x, _) in points {
        let w = x.powf(-alpha);
        let g = -k * x.ln() * w;
        j11 += w * w;
        j12 += w * g;
        j22 += g * g;
    }
    let df = n - 2.0;
    let s2 = sse / df;
    let det = j11 * j22 - j12 * j12;
    let (se_k, se_alpha) = if det > 0.0 {
        ((s2 * j22 / det).sqrt(), (s2 * j11 / det).sqrt())
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(FitResult {
        k,
        alpha,
        se_k,
        se_alpha,
        r_squared,
        p_value: two_sided_p(alpha / se_alpha, df),
        n_points: points.len(),
    })
}

/// Plain straight-line least squares `y = slope * x + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub se_slope: f64,
    pub se_intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// OLS line fit; errors on fewer than 3 points or zero abscissa variance.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit, StatsError> {
    if points.len() < 3 {
        return Err(StatsError::InsufficientSample {
            needed: 3,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return Err(StatsError::DegenerateFit);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ssr: f64 = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let sst: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let s2 = ssr / (n - 2.0);
    Ok(LinearFit {
        slope,
        intercept,
        se_slope: (s2 / sxx).sqrt(),
        se_intercept: (s2 * (1.0 / n + mean_x * mean_x / sxx)).sqrt(),
        r_squared: if sst == 0.0 { 1.0 } else { 1.0 - ssr / sst },
        n_points: points.len(),
    })
}

fn check_positive(points: &[(f64, f64)]) -> Result<(), StatsError> {
    for (index, &(x, y)) in points.iter().enumerate() {
        if !(x > 0.0) || !(y > 0.0) {
            return Err(StatsError::DomainError { index, x, y });
        }
    }
    Ok(())
}

/// Binned mean curve over a cloud; produced by [`log_binning`] and
/// [`equal_count_binning`]. `bin_centers` are strictly increasing; `counts`
/// sum to the number of points that went in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalCurve {
    pub bin_centers: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Mean ordinate per logarithmic abscissa bin. Bins with fewer than
/// `min_count` points merge rightwards into their neighbour (the trailing
/// group merges leftwards), so every emitted bin meets the minimum where
/// possible.
pub fn log_binning(
    points: &[(f64, f64)],
    n_bins: usize,
    min_count: u64,
) -> Result<ConditionalCurve, StatsError> {
    check_positive(points)?;
    if n_bins < 2 {
        return Err(StatsError::BadBins {
            reason: format!("need at least 2 bins, got {n_bins}"),
        });
    }
    if min_count == 0 {
        return Err(StatsError::BadBins {
            reason: "min_count must be at least 1".into(),
        });
    }
    if points.is_empty() {
        return Err(StatsError::InsufficientSample { needed: 1, got: 0 });
    }
    let ln_min = points.iter().map(|p| p.0.ln()).fold(f64::INFINITY, f64::min);
    let ln_max = points
        .iter()
        .map(|p| p.0.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    if ln_min == ln_max {
        return Err(StatsError::BadBins {
            reason: "all abscissae identical; nothing to bin".into(),
        });
    }
    let scale = n_bins as f64 / (ln_max - ln_min);
    let mut bins: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_bins];
    for &(x, y) in points {
        let idx = (((x.ln() - ln_min) * scale) as usize).min(n_bins - 1);
        bins[idx].push((x, y));
    }
    // merge sparse bins rightwards into running groups
    let mut groups: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut pending: Vec<(f64, f64)> = Vec::new();
    for bin in bins {
        pending.extend(bin);
        if pending.len() as u64 >= min_count {
            groups.push(std::mem::take(&mut pending));
        }
    }
    if !pending.is_empty() {
        match groups.last_mut() {
            Some(last) => last.extend(pending),
            None => groups.push(pending),
        }
    }
    Ok(curve_from_groups(groups))
}

/// Mean ordinate per equal-count abscissa bin (points sorted by abscissa and
/// split into `n_bins` groups of near-equal size).
pub fn equal_count_binning(
    points: &[(f64, f64)],
    n_bins: usize,
) -> Result<ConditionalCurve, StatsError> {
    if n_bins < 1 {
        return Err(StatsError::BadBins {
            reason: "need at least 1 bin".into(),
        });
    }
    if points.is_empty() {
        return Err(StatsError::InsufficientSample { needed: 1, got: 0 });
    }
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_bins = n_bins.min(sorted.len());
    let per = sorted.len() / n_bins;
    let extra = sorted.len() % n_bins;
    let mut groups = Vec::with_capacity(n_bins);
    let mut at = 0;
    for i in 0..n_bins {
        let take = per + usize::from(i < extra);
        groups.push(sorted[at..at + take].to_vec());
        at += take;
    }
    Ok(curve_from_groups(groups))
}

fn curve_from_groups(groups: Vec<Vec<(f64, f64)>>) -> ConditionalCurve {
    let mut curve = ConditionalCurve {
        bin_centers: Vec::with_capacity(groups.len()),
        mean: Vec::with_capacity(groups.len()),
        se: Vec::with_capacity(groups.len()),
        counts: Vec::with_capacity(groups.len()),
    };
    for group in groups {
        let n = group.len() as f64;
        let cx = group.iter().map(|p| p.0).sum::<f64>() / n;
        let cy = group.iter().map(|p| p.1).sum::<f64>() / n;
        let se = if group.len() < 2 {
            0.0
        } else {
            let var = group.iter().map(|p| (p.1 - cy).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        curve.bin_centers.push(cx);
        curve.mean.push(cy);
        curve.se.push(se);
        curve.counts.push(group.len() as u64);
    }
    curve
}

/// Return statistics conditioned on the pre-window liquidity imbalance, on
/// an equal-width grid over `[-1, 1]`.
///
/// Per occupied bin: mean *signed* return with its standard error, and the
/// frequencies of positive / zero / negative returns. The zero frequency is
/// defined as `1 - (pos + neg)`, so `(pos + neg) + zero == 1` holds exactly
/// in floating point. Bins with fewer than `min_count` samples are dropped
/// and counted in `dropped_bins`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImbalanceConditionals {
    pub n_bins: usize,
    pub min_count: u64,
    pub bin_centers: Vec<f64>,
    pub mean_return: Vec<f64>,
    pub se: Vec<f64>,
    pub counts: Vec<u64>,
    pub freq_pos: Vec<f64>,
    pub freq_zero: Vec<f64>,
    pub freq_neg: Vec<f64>,
    pub dropped_bins: usize,
}

/// Bins `(imbalance, signed return)` samples; see [`ImbalanceConditionals`].
pub fn imbalance_conditionals(
    samples: &[(f64, f64)],
    n_bins: usize,
    min_count: u64,
) -> Result<ImbalanceConditionals, StatsError> {
    if n_bins < 2 {
        return Err(StatsError::BadBins {
            reason: format!("need at least 2 bins, got {n_bins}"),
        });
    }
    if samples.is_empty() {
        return Err(StatsError::InsufficientSample { needed: 1, got: 0 });
    }
    for (index, &(imb, _)) in samples.iter().enumerate() {
        if !(-1.0..=1.0).contains(&imb) {
            return Err(StatsError::ImbalanceOutOfRange { index, value: imb });
        }
    }
    let width = 2.0 / n_bins as f64;
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for &(imb, r) in samples {
        let idx = (((imb + 1.0) / width) as usize).min(n_bins - 1);
        bins[idx].push(r);
    }
    let mut out = ImbalanceConditionals {
        n_bins,
        min_count,
        bin_centers: Vec::new(),
        mean_return: Vec::new(),
        se: Vec::new(),
        counts: Vec::new(),
        freq_pos: Vec::new(),
        freq_zero: Vec::new(),
        freq_neg: Vec::new(),
        dropped_bins: 0,
    };
    for (i, returns) in bins.iter().enumerate() {
        if (returns.len() as u64) < min_count.max(1) {
            out.dropped_bins += 1;
            continue;
        }
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let se = if returns.len() < 2 {
            0.0
        } else {
            let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        let n_pos = returns.iter().filter(|r| **r > 0.0).count() as f64;
        let n_neg = returns.iter().filter(|r| **r < 0.0).count() as f64;
        let freq_pos = n_pos / n;
        let freq_neg = n_neg / n;
        out.bin_centers.push(-1.0 + (i as f64 + 0.5) * width);
        out.mean_return.push(mean);
        out.se.push(se);
        out.counts.push(returns.len() as u64);
        out.freq_pos.push(freq_pos);
        out.freq_neg.push(freq_neg);
        out.freq_zero.push(1.0 - (freq_pos + freq_neg));
    }
    if out.bin_centers.is_empty() {
        return Err(StatsError::NoOccupiedBins {
            min_count: min_count.max(1),
            n_samples: samples.len(),
            n_bins,
        });
    }
    Ok(out)
}

/// Builds the `(L, |r|)` cloud for one return sign: windows are kept when
/// the snapshot liquidity is positive and the return has the wanted sign.
pub fn liquidity_return_cloud(
    profiles: &[Vec<u64>],
    returns: &[f64],
    norm: f64,
    delta: f64,
    sign: i8,
) -> Result<Vec<(f64, f64)>, StatsError> {
    if profiles.len() != returns.len() {
        return Err(StatsError::MismatchedLengths {
            left: profiles.len(),
            right: returns.len(),
        });
    }
    let mut cloud = Vec::new();
    for (profile, &r) in profiles.iter().zip(returns) {
        if (sign >= 0 && r <= 0.0) || (sign < 0 && r >= 0.0) {
            continue;
        }
        let l = exponential_liquidity(profile, delta, norm)?;
        if l > 0.0 {
            cloud.push((l, r.abs()));
        }
    }
    Ok(cloud)
}

/// One grid point of a [`delta_scan`].
#[derive(Debug)]
pub struct DeltaFit {
    pub delta: f64,
    pub fit: Result<FitResult, StatsError>,
}

/// Power-law fits across a grid of liquidity scales.
#[derive(Debug)]
pub struct DeltaScan {
    pub sign: i8,
    pub fits: Vec<DeltaFit>,
    /// Grid delta with the highest r-squared among the valid fits.
    pub best_delta: f64,
}

/// Refits `r = K L(delta)^-alpha` for every `delta` in the grid, using the
/// same windows throughout, and reports the best-explaining `delta`.
/// Individual fit failures invalidate only their grid point; a grid with no
/// valid point at all is an error.
pub fn delta_scan(
    profiles: &[Vec<u64>],
    returns: &[f64],
    norm: f64,
    deltas: &[f64],
    sign: i8,
) -> Result<DeltaScan, StatsError> {
    if deltas.is_empty() {
        return Err(StatsError::BadBins {
            reason: "empty delta grid".into(),
        });
    }
    use rayon::prelude::*;
    let fits: Vec<DeltaFit> = deltas
        .par_iter()
        .map(|&delta| {
            let fit = liquidity_return_cloud(profiles, returns, norm, delta, sign)
                .and_then(|cloud| power_law_fit(&cloud));
            DeltaFit { delta, fit }
        })
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for df in &fits {
        if let Ok(fit) = &df.fit {
            let better = match best {
                None => true,
                Some((_, r2)) => fit.r_squared > r2,
            };
            if better {
                best = Some((df.delta, fit.r_squared));
            }
        }
    }
    let Some((best_delta, _)) = best else {
        return Err(StatsError::AllDeltasInvalid);
    };
    Ok(DeltaScan {
        sign,
        fits,
        best_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn exact_cloud(k: f64, alpha: f64, n: usize) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let x = 0.05 * 1.1f64.powi(i as i32);
                (x, k * x.powf(-alpha))
            })
            .collect()
    }

    #[test]
    fn exact_power_law_recovered() {
        let cloud = exact_cloud(0.2944, 0.28, 60);
        let fit = power_law_fit(&cloud).unwrap();
        assert!((fit.k - 0.2944).abs() < 1e-10);
        assert!((fit.alpha - 0.28).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);
        assert!(fit.se_alpha < 1e-10);
        assert_eq!(fit.p_value, 0.0);
        assert_eq!(fit.n_points, 60);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(matches!(
            power_law_fit(&[(1.0, 1.0), (2.0, 0.5)]).unwrap_err(),
            StatsError::InsufficientSample { needed: 3, got: 2 }
        ));
        assert!(matches!(
            power_law_fit(&[(1.0, 1.0), (2.0, 0.5), (-1.0, 0.2)]).unwrap_err(),
            StatsError::DomainError { index: 2, .. }
        ));
        assert!(matches!(
            power_law_fit(&[(1.0, 1.0), (1.0, 0.5), (1.0, 0.2)]).unwrap_err(),
            StatsError::DegenerateFit
        ));
    }

    #[test]
    fn noisy_fit_has_sane_errors_and_p() {
        let mut rng = StdRng::seed_from_u64(42);
        let cloud: Vec<(f64, f64)> = (0..2000)
            .map(|_| {
                let x: f64 = (0.1f64.ln() + rng.gen::<f64>() * (10f64.ln() - 0.1f64.ln())).exp();
                let noise: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.2;
                (x, 0.5 * x.powf(-0.3) * noise.exp())
            })
            .collect();
        let fit = power_law_fit(&cloud).unwrap();
        assert!((fit.alpha - 0.3).abs() < 3.0 * fit.se_alpha);
        assert!((fit.k - 0.5).abs() < 3.0 * fit.se_k);
        assert!(fit.p_value < 1e-10);
        // pure noise: exponent compatible with zero, p not small
        let noise_cloud: Vec<(f64, f64)> = (0..200)
            .map(|_| {
                let x: f64 = (rng.gen::<f64>() * 3.0 - 1.5f64).exp();
                let y: f64 = (rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.3f64).exp();
                (x, y)
            })
            .collect();
        let fit = power_law_fit(&noise_cloud).unwrap();
        assert!(fit.alpha.abs() < 3.0 * fit.se_alpha);
        assert!(fit.p_value > 0.01);
    }

    #[test]
    fn nonlinear_mode_agrees_on_clean_data() {
        let cloud = exact_cloud(0.9, 0.45, 50);
        let fit = power_law_fit_nonlinear(&cloud).unwrap();
        assert!((fit.k - 0.9).abs() < 1e-6);
        assert!((fit.alpha - 0.45).abs() < 1e-6);
        assert!(fit.r_squared > 1.0 - 1e-10);
        // and stays close to the log-log answer under mild noise
        let mut rng = StdRng::seed_from_u64(7);
        let noisy: Vec<(f64, f64)> = cloud
            .iter()
            .map(|&(x, y)| {
                let noise: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.05;
                (x, y * noise.exp())
            })
            .collect();
        let a = power_law_fit(&noisy).unwrap();
        let b = power_law_fit_nonlinear(&noisy).unwrap();
        assert!((a.alpha - b.alpha).abs() < 0.05);
    }

    #[test]
    fn scale_equivariance() {
        let cloud = exact_cloud(0.3, 0.25, 40);
        let base = power_law_fit(&cloud).unwrap();
        let scaled_y: Vec<(f64, f64)> = cloud.iter().map(|&(x, y)| (x, 10.0 * y)).collect();
        let fit = power_law_fit(&scaled_y).unwrap();
        assert!((fit.alpha - base.alpha).abs() < 1e-9);
        assert!((fit.k - 10.0 * base.k).abs() < 1e-9 * fit.k);
        let scaled_x: Vec<(f64, f64)> = cloud.iter().map(|&(x, y)| (2.0 * x, y)).collect();
        let fit = power_law_fit(&scaled_x).unwrap();
        assert!((fit.alpha - base.alpha).abs() < 1e-9);
        assert!((fit.k - base.k * 2.0f64.powf(base.alpha)).abs() < 1e-9 * fit.k);
    }

    #[test]
    fn log_binning_one_point_per_bin() {
        let points = [(1.0, 5.0), (10.0, 3.0), (100.0, 1.0)];
        let curve = log_binning(&points, 3, 1).unwrap();
        assert_eq!(curve.counts, vec![1, 1, 1]);
        assert_eq!(curve.mean, vec![5.0, 3.0, 1.0]);
        assert_eq!(curve.bin_centers, vec![1.0, 10.0, 100.0]);
        assert_eq!(curve.se, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn log_binning_merges_sparse_bins() {
        // 10 points at the low end, 1 straggler at the top: with a minimum
        // of 3 the top bins merge leftwards until covered
        let mut points: Vec<(f64, f64)> = (0..10).map(|i| (1.0 + i as f64 * 0.1, 1.0)).collect();
        points.push((100.0, 2.0));
        let curve = log_binning(&points, 5, 3).unwrap();
        let total: u64 = curve.counts.iter().sum();
        assert_eq!(total, 11, "no point lost in merging");
        assert!(curve.counts.len() < 5);
        for w in curve.bin_centers.windows(2) {
            assert!(w[0] < w[1], "centers must increase");
        }
        // the straggler could not form its own bin
        assert!(curve.counts.iter().all(|&c| c >= 3 || curve.counts.len() == 1));
    }

    #[test]
    fn log_binning_validates() {
        assert!(matches!(
            log_binning(&[(1.0, 1.0)], 1, 1).unwrap_err(),
            StatsError::BadBins { .. }
        ));
        assert!(matches!(
            log_binning(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)], 3, 1).unwrap_err(),
            StatsError::BadBins { .. }
        ));
        assert!(matches!(
            log_binning(&[(0.0, 1.0)], 3, 1).unwrap_err(),
            StatsError::DomainError { .. }
        ));
    }

    #[test]
    fn equal_count_bins_split_evenly() {
        let points: Vec<(f64, f64)> = (0..103).map(|i| (i as f64, 2.0 * i as f64)).collect();
        let curve = equal_count_binning(&points, 20).unwrap();
        assert_eq!(curve.counts.len(), 20);
        assert_eq!(curve.counts.iter().sum::<u64>(), 103);
        let (min, max) = (
            *curve.counts.iter().min().unwrap(),
            *curve.counts.iter().max().unwrap(),
        );
        assert!(max - min <= 1, "near-equal occupancy: {:?}", curve.counts);
    }

    #[test]
    fn imbalance_conditionals_recover_linear_rule() {
        // mean return = 0.002 * imb, dense deterministic grid plus sign info
        let samples: Vec<(f64, f64)> = (0..4000)
            .map(|i| {
                let imb = -1.0 + 2.0 * (i as f64 + 0.5) / 4000.0;
                (imb, 0.002 * imb)
            })
            .collect();
        let cond = imbalance_conditionals(&samples, 20, 30).unwrap();
        assert_eq!(cond.dropped_bins, 0);
        for (center, mean) in cond.bin_centers.iter().zip(&cond.mean_return) {
            assert!((mean - 0.002 * center).abs() < 1e-4, "{center} {mean}");
        }
        // sign frequencies: all positive in positive bins here
        let last = cond.freq_pos.len() - 1;
        assert_eq!(cond.freq_pos[last], 1.0);
        assert_eq!(cond.freq_neg[0], 1.0);
        for i in 0..cond.bin_centers.len() {
            let sum = (cond.freq_pos[i] + cond.freq_neg[i]) + cond.freq_zero[i];
            assert_eq!(sum, 1.0, "bin {i} frequencies must sum to exactly 1");
        }
    }

    #[test]
    fn imbalance_conditionals_drop_sparse_bins_and_handle_zeros() {
        let mut samples = vec![(-0.95, 0.0); 40];
        samples.extend(vec![(0.95, 0.001); 40]);
        samples.push((0.0, 0.0)); // lone sample in a middle bin
        let cond = imbalance_conditionals(&samples, 10, 30).unwrap();
        assert_eq!(cond.bin_centers.len(), 2);
        assert_eq!(cond.dropped_bins, 8);
        assert_eq!(cond.freq_zero[0], 1.0);
        assert_eq!(cond.mean_return[0], 0.0);
        assert!(matches!(
            imbalance_conditionals(&[(1.5, 0.0); 40], 10, 1).unwrap_err(),
            StatsError::ImbalanceOutOfRange { .. }
        ));
    }

    /// Profiles with varying decay shapes, returns tied to L(delta=5): the
    /// scan must single out delta = 5.
    #[test]
    fn delta_scan_finds_planted_scale() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut profiles = Vec::new();
        let mut returns = Vec::new();
        for _ in 0..400 {
            let tau: f64 = rng.gen_range(1.0..12.0);
            let amp: f64 = rng.gen_range(50.0..500.0);
            let profile: Vec<u64> = (1..=60)
                .map(|d| (amp * (-(d as f64) / tau).exp()).round() as u64)
                .collect();
            let l5 = exponential_liquidity(&profile, 5.0, 100.0).unwrap();
            profiles.push(profile);
            returns.push(0.01 * l5.powf(-0.3));
        }
        let deltas: Vec<f64> = (1..=20).map(|d| d as f64).collect();
        let scan = delta_scan(&profiles, &returns, 100.0, &deltas, 1).unwrap();
        assert_eq!(scan.best_delta, 5.0);
        let r2_at_5 = scan.fits[4].fit.as_ref().unwrap().r_squared;
        assert!((r2_at_5 - 1.0).abs() < 1e-9);
        // negative-sign scan has no points: all deltas invalid
        assert!(matches!(
            delta_scan(&profiles, &returns, 100.0, &deltas, -1).unwrap_err(),
            StatsError::AllDeltasInvalid
        ));
    }

    #[test]
    fn cloud_filters_sign_and_empty_liquidity() {
        let profiles = vec![vec![10u64, 5], vec![0, 0], vec![8, 1]];
        let returns = vec![0.01, 0.02, -0.01];
        let cloud = liquidity_return_cloud(&profiles, &returns, 10.0, 2.0, 1).unwrap();
        assert_eq!(cloud.len(), 1, "zero-liquidity and negative windows drop");
        let cloud = liquidity_return_cloud(&profiles, &returns, 10.0, 2.0, -1).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud[0].1, 0.01);
    }
}
