//! Coreset constructions for k-means on an observed (noisy) dataset.
//!
//! `build_cn` is sensitivity (importance) sampling with `3 k^1.5 / eps^2`
//! i.i.d. draws. `build_cn_alpha` partitions the data by an approximate
//! solution, drops points outside a per-cluster ball and takes a uniform
//! sample of at most `9/eps + 6/eps^2` points from each cluster, weighting
//! every sampled point by `|P'_i| / |S_i|`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::geometry::{assign, dist2, Dataset, PointSource, WeightedPointSet};
use crate::rng::{derive_seed, seeded};
use crate::scalar::{compensated_sum, Real};
use crate::solver::estimate_opt;

/// The two coreset constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Sensitivity sampling.
    Cn,
    /// Filtered cluster-wise uniform sampling.
    CnAlpha,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Cn => "CN",
            Algorithm::CnAlpha => "CN_alpha",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "cn" => Ok(Algorithm::Cn),
            "cnalpha" | "cna" => Ok(Algorithm::CnAlpha),
            _ => Err(Error::invalid(format!("unknown algorithm '{s}'"))),
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

/// Number of i.i.d. draws of the sensitivity-sampling coreset,
/// `floor(3 k^1.5 / eps^2)`.
pub fn cn_sample_size(k: usize, eps: f64) -> usize {
    (3.0 * (k as f64).powf(1.5) / (eps * eps)).floor() as usize
}

/// Per-cluster sample cap of the filtered construction,
/// `floor(9/eps + 6/eps^2)`.
pub fn cn_alpha_cluster_cap(eps: f64) -> usize {
    (9.0 / eps + 6.0 / (eps * eps)).floor() as usize
}

/// Sensitivity sampling: `s(p) = d^2(p, C~)/OPT~ + 1/(k |cluster(p)|)`,
/// `m` draws with probability `q(p) = s(p)/sum s`, each copy weighted
/// `1/(m q(p))`. The requested size is clamped to `n`.
pub fn build_cn<T: Real, R: RngCore + ?Sized>(
    data: &Dataset<T>,
    eps: f64,
    k: usize,
    rng: &mut R,
) -> Result<WeightedPointSet<T>> {
    check_eps(eps)?;
    let n = data.n();
    let mut m = cn_sample_size(k, eps);
    if m > n {
        log::warn!("CN sample size {m} exceeds n = {n}; clamping");
        m = n;
    }
    let approx = estimate_opt(data, k, rng)?;
    let near = crate::geometry::nearest_all(data, &approx.centers)?;
    let mut sizes = vec![0usize; k];
    for &(j, _) in &near {
        sizes[j] += 1;
    }
    let opt = approx.cost.as_f64();
    let scores: Vec<f64> = near
        .iter()
        .map(|&(j, d2)| {
            let spread = if opt > 0.0 { d2.as_f64() / opt } else { 0.0 };
            spread + 1.0 / (k as f64 * sizes[j] as f64)
        })
        .collect();
    let total: f64 = scores.iter().sum();
    let sampler = WeightedIndex::new(&scores).map_err(|e| Error::invalid(format!("sensitivity scores: {e}")))?;
    let mut indices = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for _ in 0..m {
        let i = sampler.sample(rng);
        let q = scores[i] / total;
        indices.push(i);
        weights.push(T::lit(1.0 / (m as f64 * q)));
    }
    WeightedPointSet::from_indices(data, indices, weights)
}

/// How the filtering radius `R_i` is derived from the RMS radius `r^_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadiusRule {
    /// `r^_i + sqrt(d) ln(10 (1 + level k d))`.
    Empirical,
    /// `3 r^_i + sqrt(d) ln((1 + level k d) / sqrt(alpha - 1))`, unit constant,
    /// with `sqrt(alpha - 1)` floored at 1e-6.
    Theoretical { alpha: f64 },
}

/// Filtering radius for one cluster.
pub fn filter_radius(rhat: f64, level: f64, k: usize, d: usize, rule: RadiusRule) -> f64 {
    let spread = 1.0 + level * k as f64 * d as f64;
    let root_d = (d as f64).sqrt();
    match rule {
        RadiusRule::Empirical => rhat + root_d * (10.0 * spread).ln(),
        RadiusRule::Theoretical { alpha } => {
            let gap = (alpha - 1.0).max(0.0).sqrt().max(1e-6);
            3.0 * rhat + root_d * (spread / gap).ln().max(0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnAlphaParams {
    pub eps: f64,
    /// theta (model I) or the variance level entering the radius.
    pub noise_level: f64,
    pub k: usize,
    pub radius: RadiusRule,
}

impl CnAlphaParams {
    pub fn new(eps: f64, noise_level: f64, k: usize) -> Self {
        Self {
            eps,
            noise_level,
            k,
            radius: RadiusRule::Empirical,
        }
    }
}

/// Per-cluster record of the filtered construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTrace<T> {
    pub center: Vec<T>,
    pub rms_radius: T,
    pub filter_radius: T,
    /// Cost of the cluster around its center (equals `rms_radius^2 * noisy_size`).
    pub cost: T,
    pub noisy_size: usize,
    pub filtered_size: usize,
    pub sample_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnAlphaTrace<T> {
    pub clusters: Vec<ClusterTrace<T>>,
    pub opt_estimate: T,
}

pub fn build_cn_alpha<T: Real, R: RngCore + ?Sized>(
    data: &Dataset<T>,
    eps: f64,
    noise_level: f64,
    k: usize,
    rng: &mut R,
) -> Result<(WeightedPointSet<T>, CnAlphaTrace<T>)> {
    build_cn_alpha_with(data, &CnAlphaParams::new(eps, noise_level, k), rng)
}

pub fn build_cn_alpha_with<T: Real, R: RngCore + ?Sized>(
    data: &Dataset<T>,
    params: &CnAlphaParams,
    rng: &mut R,
) -> Result<(WeightedPointSet<T>, CnAlphaTrace<T>)> {
    check_eps(params.eps)?;
    if !(params.noise_level >= 0.0) {
        return Err(Error::invalid("noise level must be >= 0"));
    }
    let k = params.k;
    let n = data.n();
    let d = data.dim();
    let approx = estimate_opt(data, k, rng)?;
    let opt = approx.cost.as_f64();
    if params.noise_level * (n * d) as f64 > opt {
        log::warn!(
            "noise level {} exceeds OPT~/(nd) = {:.4e}; the filtered guarantee assumes otherwise",
            params.noise_level,
            opt / (n * d) as f64
        );
    }
    let labels = assign(data, &approx.centers)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &j) in labels.iter().enumerate() {
        members[j].push(i);
    }
    let cap = cn_alpha_cluster_cap(params.eps);
    let base = rng.next_u64();

    let mut indices = Vec::new();
    let mut weights = Vec::new();
    let mut clusters = Vec::new();
    let mut traces = Vec::with_capacity(k);
    for (j, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            return Err(Error::Construction {
                cluster: j,
                reason: "no observed points assigned".into(),
            });
        }
        let c = approx.centers.center(j);
        let d2: Vec<T> = idx.iter().map(|&i| dist2(data.point(i), c)).collect();
        let cost = compensated_sum(d2.iter().copied());
        let size = T::from_count(idx.len());
        let rhat = (cost / size).sqrt();
        let radius = T::lit(filter_radius(rhat.as_f64(), params.noise_level, k, d, params.radius));
        let r2 = radius * radius;
        let kept: Vec<usize> = idx.iter().zip(&d2).filter(|(_, &e)| e <= r2).map(|(&i, _)| i).collect();
        if kept.is_empty() {
            return Err(Error::Construction {
                cluster: j,
                reason: "radius filter removed every point".into(),
            });
        }
        let m = kept.len().min(cap);
        let mut crng = seeded(derive_seed(base, j as u64));
        let mut picks = rand::seq::index::sample(&mut crng, kept.len(), m).into_vec();
        picks.sort_unstable();
        let w = T::from_count(kept.len()) / T::from_count(m);
        for p in picks {
            indices.push(kept[p]);
            weights.push(w);
            clusters.push(j);
        }
        traces.push(ClusterTrace {
            center: c.to_vec(),
            rms_radius: rhat,
            filter_radius: radius,
            cost,
            noisy_size: idx.len(),
            filtered_size: kept.len(),
            sample_size: m,
        });
    }
    let set = WeightedPointSet::from_indices(data, indices, weights)?.with_clusters(clusters)?;
    Ok((
        set,
        CnAlphaTrace {
            clusters: traces,
            opt_estimate: approx.cost,
        },
    ))
}

/// `m` points drawn uniformly with replacement, each weighted `n/m`.
///
/// Not used by either construction; it is the sampling scheme under which
/// the expected squared shift of the sample mean is `OPT/(n m)`.
pub fn uniform_sample_with_replacement<T: Real, R: Rng + ?Sized>(
    data: &Dataset<T>,
    m: usize,
    rng: &mut R,
) -> Result<WeightedPointSet<T>> {
    if m == 0 {
        return Err(Error::invalid("sample size must be >= 1"));
    }
    let n = data.n();
    let indices: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
    let w = T::from_count(n) / T::from_count(m);
    WeightedPointSet::from_indices(data, indices, vec![w; m])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRetention {
    pub cluster: usize,
    pub noisy_size: usize,
    pub filtered_size: usize,
    pub sample_size: usize,
    /// `|P'_i| / |P^_i|`.
    pub retention: f64,
    pub weight_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoresetSummary {
    pub size: usize,
    pub total_weight: f64,
    pub clusters: Vec<ClusterRetention>,
}

pub fn coreset_summary<T: Real>(
    coreset: &WeightedPointSet<T>,
    trace: Option<&CnAlphaTrace<T>>,
) -> Result<CoresetSummary> {
    if coreset.is_empty() {
        return Err(Error::invalid("empty coreset"));
    }
    let total_weight = coreset.total_weight().as_f64();
    let clusters = match trace {
        None => Vec::new(),
        Some(trace) => {
            let labels = coreset
                .source_cluster()
                .ok_or_else(|| Error::invalid("coreset carries no cluster labels"))?;
            trace
                .clusters
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let weight_sum = compensated_sum(
                        labels
                            .iter()
                            .zip(coreset.weights())
                            .filter(|(l, _)| **l == j)
                            .map(|(_, w)| w.as_f64()),
                    );
                    ClusterRetention {
                        cluster: j,
                        noisy_size: c.noisy_size,
                        filtered_size: c.filtered_size,
                        sample_size: c.sample_size,
                        retention: c.filtered_size as f64 / c.noisy_size as f64,
                        weight_sum,
                    }
                })
                .collect()
        }
    };
    Ok(CoresetSummary {
        size: coreset.len(),
        total_weight,
        clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn cn_sizes_match_reference_table() {
        let got: Vec<usize> = [0.1, 0.15, 0.2, 0.25, 0.3]
            .iter()
            .map(|&e| cn_sample_size(10, e))
            .collect();
        assert_eq!(got, vec![9486, 4216, 2371, 1517, 1054]);
    }

    #[test]
    fn cn_alpha_caps_match_reference_table() {
        let got: Vec<usize> = [0.1, 0.15, 0.2, 0.25, 0.3]
            .iter()
            .map(|&e| cn_alpha_cluster_cap(e))
            .collect();
        // 10 clusters: 6890 (<= 6900), 3260, 1940, 1320, 960
        assert_eq!(got, vec![689, 326, 194, 132, 96]);
    }

    #[test]
    fn eps_out_of_range_rejected() {
        let p = Dataset::from_scalars(&[0.0, 1.0, 2.0]).unwrap();
        assert!(build_cn(&p, 0.0, 1, &mut seeded(0)).is_err());
        assert!(build_cn(&p, 1.0, 1, &mut seeded(0)).is_err());
        assert!(build_cn_alpha(&p, 1.5, 0.0, 1, &mut seeded(0)).is_err());
    }

    #[test]
    fn radius_monotone_in_level_k_d() {
        let r = |l, k, d| filter_radius(1.0, l, k, d, RadiusRule::Empirical);
        assert!(r(0.1, 10, 10) >= r(0.0, 10, 10));
        assert!(r(0.1, 11, 10) >= r(0.1, 10, 10));
        assert!(r(0.1, 10, 11) >= r(0.1, 10, 10));
        // theta = 0: r^ + sqrt(d) ln 10
        assert!((r(0.0, 3, 4) - (1.0 + 2.0 * 10f64.ln())).abs() < 1e-12);
        let t = filter_radius(1.0, 0.0, 3, 4, RadiusRule::Theoretical { alpha: 2.0 });
        assert!((t - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cn_alpha_conserves_weight_and_has_no_duplicates() {
        let xs: Vec<f64> = (0..600)
            .map(|i| (i / 200) as f64 * 100.0 + (i % 200) as f64 * 0.01)
            .collect();
        let p = Dataset::from_scalars(&xs).unwrap();
        let (s, trace) = build_cn_alpha(&p, 0.5, 0.0, 3, &mut seeded(2)).unwrap();
        let summary = coreset_summary(&s, Some(&trace)).unwrap();
        for c in &summary.clusters {
            assert!((c.weight_sum - c.filtered_size as f64).abs() <= 1e-9 * c.filtered_size as f64);
            assert!(c.sample_size <= c.filtered_size && c.filtered_size <= c.noisy_size);
        }
        let mut idx = s.source_index().to_vec();
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), s.len());
        for c in &trace.clusters {
            assert!(c.filter_radius >= c.rms_radius);
            let lhs = c.rms_radius * c.rms_radius * c.noisy_size as f64;
            assert!((lhs - c.cost).abs() <= 1e-12 * c.cost.max(1.0));
        }
    }

    #[test]
    fn summary_of_empty_is_error() {
        let s = WeightedPointSet::<f64>::new(1, vec![], vec![]).unwrap();
        assert!(coreset_summary(&s, None).is_err());
    }
}
