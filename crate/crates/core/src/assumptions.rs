//! Diagnostics for cost stability and limited outliers on observed data.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{nearest_all, CenterSet, Dataset, PointSource};
use crate::metrics::REPORT_RESTARTS;
use crate::rng::derive_seed;
use crate::scalar::{compensated_sum, Real};
use crate::solver::{solve, SolveConfig};

/// Largest tolerated `r_i / rbar_i`.
pub const RADIUS_RATIO_LIMIT: f64 = 8.0;
/// Share of farthest points dropped before the trimmed radius check.
pub const DEFAULT_TRIM: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaEstimate {
    pub gamma_hat: f64,
    pub opt_k: f64,
    pub opt_k_minus_1: f64,
}

/// `OPT~(k-1) / OPT~(k) - 1`, both best of ten restarts.
pub fn estimate_gamma<T: Real>(data: &Dataset<T>, k: usize, seed: u64) -> Result<GammaEstimate> {
    if k < 2 {
        return Err(Error::invalid("gamma needs k >= 2"));
    }
    let run = |kk, stream| {
        solve(
            data,
            &SolveConfig::new(kk, derive_seed(seed, stream)).restarts(REPORT_RESTARTS),
        )
    };
    let opt_k = run(k, 0)?.cost.as_f64();
    let opt_k_minus_1 = run(k - 1, 1)?.cost.as_f64();
    if !(opt_k > 0.0) {
        return Err(Error::invalid("OPT(k) is zero; gamma undefined"));
    }
    Ok(GammaEstimate {
        gamma_hat: opt_k_minus_1 / opt_k - 1.0,
        opt_k,
        opt_k_minus_1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub threshold: f64,
    pub holds: bool,
    /// `sqrt(alpha - 1)` was below 1e-6 and got clamped.
    pub clamped: bool,
}

/// Compares `gamma_hat` with `alpha (1 + level n d ln^2(k d / sqrt(alpha - 1)) / OPT~)`.
#[allow(clippy::too_many_arguments)]
pub fn check_stability(
    gamma_hat: f64,
    alpha: f64,
    level: f64,
    n: usize,
    d: usize,
    k: usize,
    opt: f64,
) -> Result<StabilityVerdict> {
    if !(opt > 0.0) {
        return Err(Error::invalid("OPT estimate must be positive"));
    }
    let root = (alpha - 1.0).max(0.0).sqrt();
    let clamped = root < 1e-6;
    if clamped {
        log::warn!("sqrt(alpha - 1) = {root:.3e} clamped to 1e-6 in the stability threshold");
    }
    let log = ((k * d) as f64 / root.max(1e-6)).ln();
    let threshold = alpha * (1.0 + level * (n * d) as f64 * log * log / opt);
    Ok(StabilityVerdict {
        threshold,
        holds: gamma_hat >= threshold,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterRadius {
    pub size: usize,
    /// `r_i`, the largest distance to the center.
    pub max: f64,
    /// `rbar_i`, the RMS distance to the center.
    pub rms: f64,
    /// `r_i / rbar_i`, with 0/0 taken as 1.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusReport {
    /// One entry per center; `None` for centers with no points.
    pub clusters: Vec<Option<ClusterRadius>>,
    pub max_ratio: f64,
    pub holds: bool,
}

impl RadiusReport {
    pub fn empty_clusters(&self) -> Vec<usize> {
        self.clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(j, _)| j)
            .collect()
    }
}

fn radius_report(k: usize, near: &[(usize, f64)]) -> RadiusReport {
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); k];
    for &(j, d2) in near {
        members[j].push(d2);
    }
    let clusters: Vec<Option<ClusterRadius>> = members
        .par_iter()
        .map(|d2s| {
            if d2s.is_empty() {
                return None;
            }
            let max = d2s.iter().copied().fold(0.0, f64::max).sqrt();
            let rms = (compensated_sum(d2s.iter().copied()) / d2s.len() as f64).sqrt();
            let ratio = if max == 0.0 { 1.0 } else { max / rms };
            Some(ClusterRadius {
                size: d2s.len(),
                max,
                rms,
                ratio,
            })
        })
        .collect();
    let empty = clusters.iter().filter(|c| c.is_none()).count();
    if empty > 0 {
        log::warn!("{empty} clusters without points excluded from the radius check");
    }
    let max_ratio = clusters.iter().flatten().map(|c| c.ratio).fold(0.0, f64::max);
    RadiusReport {
        clusters,
        max_ratio,
        holds: max_ratio <= RADIUS_RATIO_LIMIT,
    }
}

fn squared_distances<T: Real>(data: &Dataset<T>, centers: &CenterSet<T>) -> Result<Vec<(usize, f64)>> {
    Ok(nearest_all(data, centers)?
        .into_iter()
        .map(|(j, d2)| (j, d2.as_f64()))
        .collect())
}

/// Per-cluster `r_i` and `rbar_i` under `centers`; the verdict is
/// `max_i r_i / rbar_i <= 8`.
pub fn radius_ratios<T: Real>(data: &Dataset<T>, centers: &CenterSet<T>) -> Result<RadiusReport> {
    Ok(radius_report(centers.k(), &squared_distances(data, centers)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrimmedRadiusReport {
    pub report: RadiusReport,
    pub removed: usize,
    /// Clusters that had points before trimming and none after.
    pub vanished: Vec<usize>,
}

/// Drops the `ceil(fraction n)` points farthest from their centers (ties
/// broken towards higher indices) and repeats `radius_ratios` on the rest.
pub fn trimmed_radius_ratios<T: Real>(
    data: &Dataset<T>,
    centers: &CenterSet<T>,
    fraction: f64,
) -> Result<TrimmedRadiusReport> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "trim fraction must lie in [0, 1), got {fraction}"
        )));
    }
    let near = squared_distances(data, centers)?;
    let n = near.len();
    let removed = ((fraction * n as f64).ceil() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        near[b]
            .1
            .partial_cmp(&near[a].1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.cmp(&a))
    });
    let mut keep = vec![true; n];
    for &i in &order[..removed] {
        keep[i] = false;
    }
    let survivors: Vec<(usize, f64)> = near.iter().zip(&keep).filter(|(_, &k)| k).map(|(x, _)| *x).collect();
    let before = radius_report(centers.k(), &near);
    let report = radius_report(centers.k(), &survivors);
    let vanished: Vec<usize> = (0..centers.k())
        .filter(|&j| before.clusters[j].is_some() && report.clusters[j].is_none())
        .collect();
    if !vanished.is_empty() {
        log::warn!("trimming removed every point of clusters {vanished:?}");
    }
    Ok(TrimmedRadiusReport {
        report,
        removed,
        vanished,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub gamma_hat: f64,
    pub gamma_threshold: f64,
    pub max_radius_ratio: f64,
    pub trimmed_max_radius_ratio: f64,
    pub stable: bool,
    pub limited_outliers: bool,
    pub trimmed_limited_outliers: bool,
    pub threshold_clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionParams {
    pub k: usize,
    pub alpha: f64,
    pub noise_level: f64,
    pub trim: f64,
    pub seed: u64,
}

/// Full diagnostic: gamma from two solves, radius ratios under the best
/// k-solution, and the trimmed variant.
pub fn assess<T: Real>(data: &Dataset<T>, params: &AssumptionParams) -> Result<AssumptionReport> {
    let g = estimate_gamma(data, params.k, params.seed)?;
    let verdict = check_stability(
        g.gamma_hat,
        params.alpha,
        params.noise_level,
        data.n(),
        data.dim(),
        params.k,
        g.opt_k,
    )?;
    let sol = solve(
        data,
        &SolveConfig::new(params.k, derive_seed(params.seed, 0)).restarts(REPORT_RESTARTS),
    )?;
    let radii = radius_ratios(data, &sol.centers)?;
    let trimmed = trimmed_radius_ratios(data, &sol.centers, params.trim)?;
    Ok(AssumptionReport {
        gamma_hat: g.gamma_hat,
        gamma_threshold: verdict.threshold,
        max_radius_ratio: radii.max_ratio,
        trimmed_max_radius_ratio: trimmed.report.max_ratio,
        stable: verdict.holds,
        limited_outliers: radii.holds,
        trimmed_limited_outliers: trimmed.report.holds,
        threshold_clamped: verdict.clamped,
    })
}
