//! Always-on invariant suites. Each suite is seeded and returns a verdict
//! with a short numeric summary.

use rand::Rng;
use rayon::prelude::*;

use crate::coreset::{build_cn, build_cn_alpha, coreset_summary, uniform_sample_with_replacement};
use crate::error::Result;
use crate::geometry::{cost, kmeans_cost, mean, one_mean_cost_identity_check, CenterSet, Dataset, PointSource, PowerZ};
use crate::metrics::{
    brute_force_err_1d, check_composition, estimate_err, estimate_err_alpha_z, CandidateCenters, Grid1d,
};
use crate::noise::{perturb, Covariance, NoiseFamily, NoiseSpec};
use crate::rng::{derive_seed, seeded, substream};
use crate::synthetic::gen_outlier_median;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

fn random_dataset<R: Rng + ?Sized>(n: usize, d: usize, spread: f64, rng: &mut R) -> Result<Dataset<f64>> {
    let coords = (0..n * d).map(|_| rng.random_range(-spread..spread)).collect();
    Dataset::new(d, coords)
}

/// `cost(P, c) = cost(P, mu) + n ||c - mu||^2` to 1e-9 relative.
pub fn bias_variance_identity(seed: u64) -> Result<SuiteOutcome> {
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..200);
        let d = rng.random_range(1..8);
        let p = random_dataset(n, d, 50.0, &mut rng)?;
        let c: Vec<f64> = (0..d).map(|_| rng.random_range(-80.0..80.0)).collect();
        let (lhs, rhs) = one_mean_cost_identity_check(&p, &c)?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    Ok(SuiteOutcome::new(
        "1-means bias-variance identity",
        worst <= 1e-9,
        format!("worst relative gap {worst:.2e}"),
    ))
}

/// Every cluster's sample weights add up to its filtered size.
pub fn cn_alpha_weight_conservation(seed: u64) -> Result<SuiteOutcome> {
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    let mut builds = 0;
    for t in 0..20 {
        let k = rng.random_range(2..6);
        let d = rng.random_range(1..4);
        let per = rng.random_range(50..400);
        let mut coords = Vec::new();
        for j in 0..k {
            for _ in 0..per {
                for _ in 0..d {
                    coords.push(j as f64 * 40.0 + rng.random_range(-1.0..1.0));
                }
            }
        }
        let p = Dataset::new(d, coords)?;
        let eps = rng.random_range(0.2..0.9);
        let level = rng.random_range(0.0..0.2);
        let (s, trace) = build_cn_alpha(&p, eps, level, k, &mut substream(seed, &[t]))?;
        let summary = coreset_summary(&s, Some(&trace))?;
        for c in &summary.clusters {
            worst = worst.max((c.weight_sum - c.filtered_size as f64).abs() / c.filtered_size as f64);
        }
        builds += 1;
    }
    Ok(SuiteOutcome::new(
        "CN_alpha weight conservation",
        worst <= 1e-12,
        format!("{builds} builds, worst relative gap {worst:.2e}"),
    ))
}

/// Mean of `cost(S, C)` over 10^4 rebuilds is within 1% of `cost(P, C)`.
pub fn cn_unbiasedness(seed: u64) -> Result<SuiteOutcome> {
    let mut rng = seeded(seed);
    let xs: Vec<f64> = (0..30)
        .map(|i| {
            if i < 20 {
                rng.random_range(-1.0..1.0)
            } else {
                10.0 + rng.random_range(-3.0..3.0)
            }
        })
        .collect();
    let p = Dataset::from_scalars(&xs)?;
    let c = CenterSet::from_scalars(&[-0.5, 6.0])?;
    let truth = kmeans_cost(&p, &c)?;
    let rebuilds = 10_000u64;
    let costs: Vec<f64> = (0..rebuilds)
        .into_par_iter()
        .map(|t| {
            let s = build_cn(&p, 0.9, 2, &mut substream(seed, &[1, t]))?;
            kmeans_cost(&s, &c)
        })
        .collect::<Result<_>>()?;
    let avg = costs.iter().sum::<f64>() / rebuilds as f64;
    let rel = (avg - truth).abs() / truth;
    Ok(SuiteOutcome::new(
        "CN unbiasedness",
        rel <= 0.01,
        format!("mean {avg:.4} vs {truth:.4}, relative gap {rel:.4}"),
    ))
}

/// Mean total noise energy over 100 draws within 3 standard errors of
/// its expectation for model I, model II and correlated noise.
pub fn noise_energy(seed: u64) -> Result<Vec<SuiteOutcome>> {
    let p = random_dataset(200, 5, 10.0, &mut seeded(seed))?;
    let cov = Covariance::random(5, &mut substream(seed, &[1]))?;
    let specs = [
        ("noise energy, model I", NoiseSpec::model_i(0.3, NoiseFamily::Laplace)?),
        (
            "noise energy, model II",
            NoiseSpec::model_ii(0.5, NoiseFamily::Uniform)?,
        ),
        ("noise energy, correlated", NoiseSpec::correlated(0.7, cov)?),
    ];
    let mut out = Vec::new();
    for (m, (name, spec)) in specs.iter().enumerate() {
        let trials = 100u64;
        let energies: Vec<f64> = (0..trials)
            .map(|t| Ok(perturb(&p, spec, &mut substream(seed, &[2, m as u64, t]))?.noise_energy()))
            .collect::<Result<_>>()?;
        let avg = energies.iter().sum::<f64>() / trials as f64;
        let var = energies.iter().map(|e| (e - avg).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        let want = spec.expected_energy_per_point(p.dim()) * p.n() as f64;
        let z = (avg - want).abs() / se;
        out.push(SuiteOutcome::new(
            name,
            z <= 3.0,
            format!("mean {avg:.3} vs {want:.3} ({z:.2} SE)"),
        ));
    }
    Ok(out)
}

/// Mean `||mu(S) - mu(P)||^2` for uniform samples of size m with
/// replacement is within 20% of `OPT_1 / (n m)`.
pub fn sample_mean_shift(seed: u64) -> Result<SuiteOutcome> {
    let p = random_dataset(500, 3, 5.0, &mut seeded(seed))?;
    let mu = mean(&p)?;
    let opt1 = kmeans_cost(&p, &CenterSet::single(&mu)?)?;
    let m = 25;
    let reps = 4000u64;
    let shifts: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|t| {
            let s = uniform_sample_with_replacement(&p, m, &mut substream(seed, &[3, t]))?;
            Ok(crate::geometry::dist2(&mean(&s)?, &mu))
        })
        .collect::<Result<_>>()?;
    let avg = shifts.iter().sum::<f64>() / reps as f64;
    let want = opt1 / (p.n() * m) as f64;
    let rel = (avg - want).abs() / want;
    Ok(SuiteOutcome::new(
        "sample-mean center movement",
        rel <= 0.2,
        format!("mean {avg:.5} vs OPT/(nm) = {want:.5}"),
    ))
}

/// On one well-separated cluster the noisy mean moves by at most
/// `10 theta d / n_i` in mean square over 10^3 draws.
pub fn noisy_center_movement(seed: u64) -> Result<SuiteOutcome> {
    let (n, d, theta) = (400, 4, 0.3);
    let p = random_dataset(n, d, 2.0, &mut seeded(seed))?;
    let mu = mean(&p)?;
    let spec = NoiseSpec::model_i(theta, NoiseFamily::Gaussian)?;
    let draws = 1000u64;
    let shifts: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|t| {
            let noisy = perturb(&p, &spec, &mut substream(seed, &[4, t]))?.noisy;
            Ok(crate::geometry::dist2(&mean(&noisy)?, &mu))
        })
        .collect::<Result<_>>()?;
    let avg = shifts.iter().sum::<f64>() / draws as f64;
    let limit = 10.0 * theta * d as f64 / n as f64;
    Ok(SuiteOutcome::new(
        "noisy center movement",
        avg <= limit,
        format!("mean {avg:.5} vs 10 theta d / n = {limit:.5}"),
    ))
}

/// Per-candidate composition inequality on random small instances.
pub fn composition(seed: u64) -> Result<SuiteOutcome> {
    let mut rng = seeded(seed);
    let (mut checked, mut violations, mut skipped) = (0, 0, 0);
    let mut worst = f64::INFINITY;
    for t in 0..20u64 {
        let n = rng.random_range(8..=50);
        let d = rng.random_range(1..4);
        let k = rng.random_range(1..4);
        let p = random_dataset(n, d, 10.0, &mut rng)?;
        let spec = NoiseSpec::model_i(rng.random_range(0.1..1.0), NoiseFamily::Gaussian)?;
        let phat = perturb(&p, &spec, &mut substream(seed, &[5, t]))?.noisy;
        let s = build_cn(&phat, 0.9, k, &mut substream(seed, &[6, t]))?;
        let cands = CandidateCenters::uniform(&phat, k, 200, &mut rng)?;
        let r = check_composition(&s, &phat, &p, &cands, PowerZ::squared())?;
        checked += r.checked;
        violations += r.violations;
        skipped += cands.len() - r.checked;
        worst = worst.min(r.worst_slack);
    }
    Ok(SuiteOutcome::new(
        "per-candidate composition inequality",
        violations == 0 && checked > 0,
        format!("{checked} candidates checked, {violations} violations, {skipped} outside the e < 1 precondition, worst slack {worst:.3e}"),
    ))
}

/// Sampled Err never exceeds the grid oracle when candidates sit on the grid.
pub fn err_below_grid_oracle(seed: u64) -> Result<SuiteOutcome> {
    let mut rng = seeded(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..50 {
        let n = rng.random_range(2..=12);
        let k = rng.random_range(1..=2);
        let a = random_dataset(n, 1, 5.0, &mut rng)?;
        let b = random_dataset(n, 1, 5.0, &mut rng)?;
        let z = if rng.random_bool(0.5) {
            PowerZ::squared()
        } else {
            PowerZ::linear()
        };
        let grid = Grid1d::covering(&a, &b, 201)?;
        let cands = CandidateCenters::on_grid(&grid, k, 500, &mut rng)?;
        let sampled = estimate_err(&a, &b, &cands, z)?;
        let oracle = brute_force_err_1d(&a, &b, k, z, &grid)?;
        worst = worst.max(sampled - oracle);
    }
    Ok(SuiteOutcome::new(
        "sampled Err below grid oracle",
        worst <= 1e-9,
        format!("max(sampled - oracle) = {worst:.3e}"),
    ))
}

/// 1-median outlier instance: `Err_1(S, P) = 0` while the grid oracle gives `n - 1`.
pub fn outlier_instance(seed: u64) -> Result<SuiteOutcome> {
    let n = 10;
    let (p, s) = gen_outlier_median::<f64>(n)?;
    let err1 = estimate_err_alpha_z(&s, &p, 1, 1.0, PowerZ::linear(), seed)?.value;
    let grid = Grid1d::new(-1.0, 2.0, 301)?;
    let grid_err = brute_force_err_1d(&s, &p, 1, PowerZ::linear(), &grid)?;
    let at_zero = {
        let c = CenterSet::from_scalars(&[0.0])?;
        let cs = cost(&s, &c, PowerZ::linear())?;
        (cost(&p, &c, PowerZ::linear())? - cs).abs() / cs
    };
    let passed = err1 == 0.0 && (grid_err - (n - 1) as f64).abs() <= 1e-9 && (at_zero - grid_err).abs() <= 1e-9;
    Ok(SuiteOutcome::new(
        "outlier 1-median instance",
        passed,
        format!(
            "Err_1 = {err1}, grid Err = {grid_err:.6} (n - 1 = {}, attained at c = 0)",
            n - 1
        ),
    ))
}

/// Every suite, in a fixed order. Suites use disjoint streams of `seed`.
pub fn run_all(seed: u64) -> Result<Vec<SuiteOutcome>> {
    let s = |i| derive_seed(seed, i);
    let mut out = vec![
        bias_variance_identity(s(0))?,
        cn_alpha_weight_conservation(s(1))?,
        cn_unbiasedness(s(2))?,
    ];
    out.extend(noise_energy(s(3))?);
    out.push(sample_mean_shift(s(4))?);
    out.push(noisy_center_movement(s(5))?);
    out.push(composition(s(6))?);
    out.push(err_below_grid_oracle(s(7))?);
    out.push(outlier_instance(s(8))?);
    Ok(out)
}
