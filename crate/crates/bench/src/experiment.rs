//! Seeded experiment grid and the beta sweep.
//!
//! Randomness is keyed by position in the grid, never by execution order:
//! the noisy copy for (level l, trial t) comes from stream `[1, l, t]` and is
//! shared by every algorithm and eps, the coreset for (alg a, eps e, level l,
//! trial t) from `[2, a, e, l, t]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use noisy_coreset::coreset::{build_cn, build_cn_alpha_with, CnAlphaParams, RadiusRule};
use noisy_coreset::metrics::{
    empirical_ratio_against, estimate_err, estimate_err_alpha, theoretical_bound, CandidateCenters, REPORT_RESTARTS,
};
use noisy_coreset::rng::{derive_path, substream};
use noisy_coreset::synthetic::gen_beta_grid;
use noisy_coreset::{
    perturb, solve, Algorithm, Covariance, Dataset, NoiseFamily, NoiseSpec, PointSource, PowerZ, SolveConfig,
    WeightedPointSet,
};

use crate::error::{BenchError, Result};

/// Noise levels used by the reference tables.
pub const REFERENCE_LEVELS: [f64; 4] = [0.0, 0.01, 0.05, 0.25];
/// Coreset accuracies used by the reference tables.
pub const REFERENCE_EPS: [f64; 5] = [0.1, 0.15, 0.2, 0.25, 0.3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseKind {
    /// Each point perturbed with probability theta.
    ModelI,
    /// Every point perturbed with variance sigma^2.
    ModelII,
    /// `N(0, sigma^2 Sigma)` with a random Sigma of trace d.
    Correlated,
}

impl std::str::FromStr for NoiseKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" | "model-i" | "modeli" => Ok(NoiseKind::ModelI),
            "ii" | "2" | "model-ii" | "modelii" => Ok(NoiseKind::ModelII),
            "correlated" | "corr" => Ok(NoiseKind::Correlated),
            _ => Err(BenchError::Config(format!("unknown noise model '{s}'"))),
        }
    }
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::ModelI => "I",
            NoiseKind::ModelII => "II",
            NoiseKind::Correlated => "correlated",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub k: usize,
    pub eps: Vec<f64>,
    pub noise: NoiseKind,
    pub family: NoiseFamily,
    pub levels: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    /// Filtering radius of CN_alpha; `Theoretical` carries alpha.
    pub radius: RadiusRule,
}

impl ExperimentConfig {
    /// Reference grid: both algorithms, every eps and level, ten trials.
    pub fn reference(k: usize, seed: u64) -> Self {
        Self {
            k,
            eps: REFERENCE_EPS.to_vec(),
            noise: NoiseKind::ModelI,
            family: NoiseFamily::Gaussian,
            levels: REFERENCE_LEVELS.to_vec(),
            trials: 10,
            seed,
            algorithms: vec![Algorithm::Cn, Algorithm::CnAlpha],
            radius: RadiusRule::Empirical,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(BenchError::Config("trials must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(BenchError::Config("k must be >= 1".into()));
        }
        if self.eps.is_empty() || self.levels.is_empty() || self.algorithms.is_empty() {
            return Err(BenchError::Config("eps, levels and algorithms must be nonempty".into()));
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(BenchError::Config(format!("eps must lie in (0, 1), got {e}")));
        }
        if let Some(l) = self.levels.iter().find(|l| !(**l >= 0.0)) {
            return Err(BenchError::Config(format!("noise levels must be >= 0, got {l}")));
        }
        if self.noise == NoiseKind::ModelI && self.levels.iter().any(|&l| l > 1.0) {
            return Err(BenchError::Config("theta must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// One averaged grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub algorithm: String,
    pub eps: f64,
    pub level: f64,
    pub size: f64,
    pub r_tilde: f64,
    pub u: f64,
    /// `r_tilde / u` of the averaged values.
    pub kappa: f64,
    pub trials: usize,
    pub seed: u64,
    pub error: Option<String>,
}

/// Builds the noise spec of one grid level.
pub fn noise_spec(kind: NoiseKind, family: NoiseFamily, level: f64, cov: Option<&Covariance>) -> Result<NoiseSpec> {
    let spec = match kind {
        NoiseKind::ModelI => NoiseSpec::model_i(level, family)?,
        NoiseKind::ModelII => NoiseSpec::model_ii(level, family)?,
        NoiseKind::Correlated => {
            let cov = cov.ok_or_else(|| BenchError::Config("correlated noise needs a covariance".into()))?;
            NoiseSpec::correlated(level, cov.clone())?
        }
    };
    Ok(spec)
}

/// Per-coordinate noise energy, the level entering CN_alpha's radius.
fn radius_level(spec: &NoiseSpec, d: usize) -> f64 {
    spec.expected_energy_per_point(d) / d as f64
}

struct Observed {
    data: Dataset<f64>,
    opt: f64,
}

struct Trial {
    size: usize,
    r_tilde: f64,
    u: f64,
}

/// Runs every (algorithm, eps, level) cell for `config.trials` trials on
/// noisy copies of `clean` and averages per cell. Rows come out in grid
/// order: algorithm, then eps, then level.
pub fn run_grid(clean: &Dataset<f64>, config: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    config.validate()?;
    let (d, k) = (clean.dim(), config.k);
    let cov = match config.noise {
        NoiseKind::Correlated => Some(Covariance::random(d, &mut substream(config.seed, &[3]))?),
        _ => None,
    };
    let specs: Vec<NoiseSpec> = config
        .levels
        .iter()
        .map(|&l| noise_spec(config.noise, config.family, l, cov.as_ref()))
        .collect::<Result<_>>()?;
    let restarts = |stream: &[u64]| SolveConfig::new(k, derive_path(config.seed, stream)).restarts(REPORT_RESTARTS);
    let reference = solve(clean, &restarts(&[0]))?.cost;

    let observed: Vec<Vec<Result<Observed>>> = specs
        .par_iter()
        .enumerate()
        .map(|(l, spec)| {
            (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let data = perturb(clean, spec, &mut substream(config.seed, &[1, l as u64, t as u64]))?.noisy;
                    let opt = solve(&data, &restarts(&[4, l as u64, t as u64]))?.cost;
                    Ok(Observed { data, opt })
                })
                .collect()
        })
        .collect();

    let mut cells = Vec::new();
    for (a, &alg) in config.algorithms.iter().enumerate() {
        for (e, &eps) in config.eps.iter().enumerate() {
            for l in 0..config.levels.len() {
                cells.push((a, alg, e, eps, l));
            }
        }
    }
    let rows = cells
        .par_iter()
        .map(|&(a, alg, e, eps, l)| {
            let trials: Vec<std::result::Result<Trial, String>> = (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let obs = observed[l][t].as_ref().map_err(|err| err.to_string())?;
                    let path = [2, a as u64, e as u64, l as u64, t as u64];
                    run_trial(clean, obs, alg, eps, &specs[l], config, reference, &path).map_err(|err| err.to_string())
                })
                .collect();
            let ok: Vec<&Trial> = trials.iter().filter_map(|t| t.as_ref().ok()).collect();
            let first_err = trials.iter().find_map(|t| t.as_ref().err()).cloned();
            if let Some(err) = &first_err {
                log::warn!(
                    "{alg} eps={eps} level={}: {} of {} trials failed: {err}",
                    config.levels[l],
                    config.trials - ok.len(),
                    config.trials
                );
            }
            let m = ok.len() as f64;
            let mean = |f: fn(&Trial) -> f64| ok.iter().map(|t| f(t)).sum::<f64>() / m;
            let (size, r_tilde, u) = if ok.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (mean(|t| t.size as f64), mean(|t| t.r_tilde), mean(|t| t.u))
            };
            ExperimentRow {
                algorithm: alg.name().to_string(),
                eps,
                level: config.levels[l],
                size,
                r_tilde,
                u,
                kappa: r_tilde / u,
                trials: ok.len(),
                seed: config.seed,
                error: if ok.is_empty() { first_err } else { None },
            }
        })
        .collect();
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    clean: &Dataset<f64>,
    obs: &Observed,
    alg: Algorithm,
    eps: f64,
    spec: &NoiseSpec,
    config: &ExperimentConfig,
    reference: f64,
    path: &[u64],
) -> Result<Trial> {
    let (n, d, k) = (clean.n(), clean.dim(), config.k);
    let mut rng = substream(config.seed, path);
    let coreset: WeightedPointSet<f64> = match alg {
        Algorithm::Cn => build_cn(&obs.data, eps, k, &mut rng)?,
        Algorithm::CnAlpha => {
            let params = CnAlphaParams {
                radius: config.radius,
                ..CnAlphaParams::new(eps, radius_level(spec, d), k)
            };
            build_cn_alpha_with(&obs.data, &params, &mut rng)?.0
        }
    };
    let r_tilde = empirical_ratio_against(clean, &coreset, k, derive_path(config.seed, path), reference)?;
    let u = theoretical_bound(alg, eps, spec, n, d, k, obs.opt)?;
    Ok(Trial {
        size: coreset.len(),
        r_tilde,
        u,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n: usize,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub step: f64,
    pub theta: f64,
    pub candidates: usize,
    pub k: usize,
    pub seed: u64,
}

impl SweepConfig {
    /// beta from 2 to 3 in steps of 0.05, theta = 1, n = 10^4, 500 candidates, k = 3.
    pub fn reference(seed: u64) -> Self {
        Self {
            n: 10_000,
            beta_lo: 2.0,
            beta_hi: 3.0,
            step: 0.05,
            theta: 1.0,
            candidates: 500,
            k: 3,
            seed,
        }
    }

    pub fn betas(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.beta_hi >= self.beta_lo) {
            return Err(BenchError::Config("sweep needs step > 0 and beta_hi >= beta_lo".into()));
        }
        let count = ((self.beta_hi - self.beta_lo) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| self.beta_lo + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub beta: f64,
    pub err_hat: f64,
    pub err1_hat: f64,
}

/// For every beta: the four-site grid, one model-I Gaussian perturbation
/// (the same noise draws at every beta), `Err(P^, P)` over uniform
/// candidates and `Err_1(P^, P)`.
pub fn run_beta_sweep(config: &SweepConfig) -> Result<Vec<SweepPoint>> {
    let betas = config.betas()?;
    let spec = NoiseSpec::model_i(config.theta, NoiseFamily::Gaussian)?;
    betas
        .par_iter()
        .map(|&beta| {
            let p: Dataset<f64> = gen_beta_grid(config.n, beta)?;
            let phat = perturb(&p, &spec, &mut substream(config.seed, &[0]))?.noisy;
            let cands =
                CandidateCenters::uniform(&phat, config.k, config.candidates, &mut substream(config.seed, &[1]))?;
            let err_hat = estimate_err(&phat, &p, &cands, PowerZ::squared())?;
            let err1_hat = estimate_err_alpha(&phat, &p, config.k, 1.0, derive_path(config.seed, &[2]))?.value;
            Ok(SweepPoint {
                beta,
                err_hat,
                err1_hat,
            })
        })
        .collect()
}
