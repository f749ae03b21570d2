//! Quality measures, bound formulas and checkable inequalities.
//!
//! `Err(A, B)` is estimated by a maximum over random candidate center sets
//! with `cost(A, C)` in the denominator, so it is a lower bound on the true
//! supremum. `Err_alpha` is estimated from the solution of the first set and
//! perturbations of it that stay alpha-approximate there.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::coreset::Algorithm;
use crate::error::{Error, Result};
use crate::geometry::{cost, kmeans_cost, CenterSet, Dataset, PointSource, PowerZ, WeightedPointSet};
use crate::noise::{NoiseModel, NoiseSpec};
use crate::rng::{derive_seed, seeded, substream};
use crate::scalar::Real;
use crate::solver::{solve, solve_z, Solution, SolveConfig};

/// Restarts behind every "solve" used for reporting.
pub const REPORT_RESTARTS: usize = 10;
/// Perturbed solutions examined by the alpha > 1 estimator.
pub const ALPHA_CANDIDATES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub r_tilde: f64,
    pub u: f64,
    pub kappa: f64,
    pub algorithm: Algorithm,
    pub noise_level: f64,
    pub eps: f64,
}

impl QualityReport {
    pub fn new(algorithm: Algorithm, eps: f64, noise_level: f64, r_tilde: f64, u: f64) -> Result<Self> {
        if !(u >= 1.0) {
            return Err(Error::invalid(format!("bound must be >= 1, got {u}")));
        }
        if !(r_tilde >= 0.0) {
            return Err(Error::invalid(format!("ratio must be >= 0, got {r_tilde}")));
        }
        Ok(Self {
            r_tilde,
            u,
            kappa: r_tilde / u,
            algorithm,
            noise_level,
            eps,
        })
    }
}

/// A list of k-center sets shared by several estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateCenters<T> {
    sets: Vec<CenterSet<T>>,
}

impl<T: Real> CandidateCenters<T> {
    pub fn from_sets(sets: Vec<CenterSet<T>>) -> Result<Self> {
        if let Some(first) = sets.first() {
            if sets.iter().any(|c| c.k() != first.k() || c.dim() != first.dim()) {
                return Err(Error::invalid("candidate center sets differ in k or dimension"));
            }
        }
        Ok(Self { sets })
    }

    /// `count` sets of `k` centers, every coordinate uniform on the bounding
    /// box of `data`.
    pub fn uniform<R: Rng + ?Sized>(data: &Dataset<T>, k: usize, count: usize, rng: &mut R) -> Result<Self> {
        if k == 0 || count == 0 {
            return Err(Error::invalid("need k >= 1 and at least one candidate"));
        }
        let (lo, hi) = data.bounding_box();
        let d = data.dim();
        let sets = (0..count)
            .map(|_| {
                let coords: Vec<T> = (0..k * d)
                    .map(|t| {
                        let (a, b) = (lo[t % d].as_f64(), hi[t % d].as_f64());
                        T::lit(a + (b - a) * rng.random::<f64>())
                    })
                    .collect();
                CenterSet::new(d, coords)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sets })
    }

    /// Like `uniform` for one-dimensional data, but every center is a node of
    /// `grid`, so the grid oracle dominates these candidates.
    pub fn on_grid<R: Rng + ?Sized>(grid: &Grid1d, k: usize, count: usize, rng: &mut R) -> Result<Self> {
        if k == 0 || count == 0 {
            return Err(Error::invalid("need k >= 1 and at least one candidate"));
        }
        let sets = (0..count)
            .map(|_| {
                let xs: Vec<T> = (0..k)
                    .map(|_| T::lit(grid.node(rng.random_range(0..grid.steps))))
                    .collect();
                CenterSet::from_scalars(&xs)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sets })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn sets(&self) -> &[CenterSet<T>] {
        &self.sets
    }

    pub fn push(&mut self, c: CenterSet<T>) -> Result<()> {
        if let Some(first) = self.sets.first() {
            if c.k() != first.k() || c.dim() != first.dim() {
                return Err(Error::invalid("candidate differs in k or dimension"));
            }
        }
        self.sets.push(c);
        Ok(())
    }
}

fn check_support<T: Real, S: PointSource<T> + ?Sized>(s: &S, k: usize) -> Result<()> {
    if s.is_empty() {
        return Err(Error::invalid("empty point set"));
    }
    let mut distinct = 0;
    let mut seen: Vec<&[T]> = Vec::new();
    for i in 0..s.len() {
        if s.weight(i) > T::zero() && !seen.contains(&s.point(i)) {
            seen.push(s.point(i));
            distinct += 1;
            if distinct >= k {
                return Ok(());
            }
        }
    }
    Err(Error::invalid(format!(
        "fewer than k = {k} distinct positively weighted points"
    )))
}

fn report_solve<T: Real, S: PointSource<T> + ?Sized>(data: &S, k: usize, seed: u64) -> Result<Solution<T>> {
    solve(data, &SolveConfig::new(k, seed).restarts(REPORT_RESTARTS))
}

/// `cost(P, C_S) / cost(P, C_P)`, both solutions best of ten restarts.
pub fn empirical_ratio<T: Real>(p: &Dataset<T>, s: &WeightedPointSet<T>, k: usize, seed: u64) -> Result<f64> {
    let cp = report_solve(p, k, derive_seed(seed, 1))?;
    empirical_ratio_against(p, s, k, seed, cp.cost)
}

/// As `empirical_ratio` with `cost(P, C_P)` supplied by the caller.
pub fn empirical_ratio_against<T: Real>(
    p: &Dataset<T>,
    s: &WeightedPointSet<T>,
    k: usize,
    seed: u64,
    reference_cost: T,
) -> Result<f64> {
    check_support(s, k)?;
    if !(reference_cost > T::zero()) {
        return Err(Error::invalid("reference cost must be positive"));
    }
    let cs = report_solve(s, k, derive_seed(seed, 0))?;
    Ok((kmeans_cost(p, &cs.centers)? / reference_cost).as_f64())
}

/// `(theta n d, theta k d)` with the substitutions of the other noise models.
pub fn noise_terms(noise: &NoiseSpec, n: usize, d: usize, k: usize) -> (f64, f64) {
    match &noise.model {
        NoiseModel::ModelI { theta } => (theta * (n * d) as f64, theta * (k * d) as f64),
        NoiseModel::ModelII { variance } => (variance * (n * d) as f64, variance * (k * d) as f64),
        NoiseModel::Correlated { variance, covariance } => {
            let t = covariance.trace() * variance;
            (n as f64 * t, k as f64 * t)
        }
    }
}

fn check_opt(opt: f64) -> Result<()> {
    if !(opt > 0.0) || !opt.is_finite() {
        return Err(Error::invalid(format!("OPT estimate must be positive, got {opt}")));
    }
    Ok(())
}

/// Unit-constant bound `u_S`:
/// CN gives `(1 + eps + x + sqrt(x))^2` with `x = theta n d / OPT~`,
/// CN_alpha gives `1 + eps + theta k d / OPT~ + theta n d / OPT~`.
pub fn theoretical_bound(
    algorithm: Algorithm,
    eps: f64,
    noise: &NoiseSpec,
    n: usize,
    d: usize,
    k: usize,
    opt: f64,
) -> Result<f64> {
    check_opt(opt)?;
    let (nd, kd) = noise_terms(noise, n, d, k);
    let x = nd / opt;
    Ok(match algorithm {
        Algorithm::Cn => (1.0 + eps + x + x.sqrt()).powi(2),
        Algorithm::CnAlpha => 1.0 + eps + kd / opt + x,
    })
}

/// The filtered construction's guarantee on `r_P(S, alpha)` with its
/// `sqrt(alpha - 1)` cross terms kept, unit constants:
/// `(1 + eps + theta k d/OPT + sqrt(alpha-1)/alpha * (sqrt(theta k d OPT) + theta n d)/OPT) * alpha`.
pub fn full_cn_alpha_bound(
    eps: f64,
    noise: &NoiseSpec,
    n: usize,
    d: usize,
    k: usize,
    opt: f64,
    alpha: f64,
) -> Result<f64> {
    check_opt(opt)?;
    if !(alpha >= 1.0) {
        return Err(Error::invalid("alpha must be >= 1"));
    }
    let (nd, kd) = noise_terms(noise, n, d, k);
    let cross = (alpha - 1.0).sqrt() / alpha * ((kd * opt).sqrt() + nd) / opt;
    Ok((1.0 + eps + kd / opt + cross) * alpha)
}

/// Additive error of the (k, z) guarantee with unit constants:
/// `eps + x + x^(1/z)` where `x = level * n * d^(z/2) / OPT`. Advisory.
pub fn kz_err_bound(eps: f64, level: f64, n: usize, d: usize, z: f64, opt: f64) -> Result<f64> {
    check_opt(opt)?;
    if !(z >= 1.0) {
        return Err(Error::invalid("z must be >= 1"));
    }
    let x = level * n as f64 * (d as f64).powf(z / 2.0) / opt;
    Ok(eps + x + x.powf(1.0 / z))
}

/// `(1 + kz_err_bound)^2`, which for z = 2 is the CN formula.
pub fn kz_bound(eps: f64, level: f64, n: usize, d: usize, z: f64, opt: f64) -> Result<f64> {
    Ok((1.0 + kz_err_bound(eps, level, n, d, z, opt)?).powi(2))
}

/// Per-candidate `(cost(A, C), cost(B, C))`.
pub fn candidate_costs<T, A, B>(a: &A, b: &B, candidates: &CandidateCenters<T>, z: PowerZ<T>) -> Result<Vec<(T, T)>>
where
    T: Real,
    A: PointSource<T> + ?Sized,
    B: PointSource<T> + ?Sized,
{
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    candidates
        .sets()
        .par_iter()
        .map(|c| Ok((cost(a, c, z)?, cost(b, c, z)?)))
        .collect()
}

/// `|cost(A, C) - cost(B, C)| / cost(A, C)` for every candidate; `None`
/// where `cost(A, C) = 0`.
pub fn err_ratios<T, A, B>(a: &A, b: &B, candidates: &CandidateCenters<T>, z: PowerZ<T>) -> Result<Vec<Option<f64>>>
where
    T: Real,
    A: PointSource<T> + ?Sized,
    B: PointSource<T> + ?Sized,
{
    Ok(candidate_costs(a, b, candidates, z)?
        .into_iter()
        .map(|(ca, cb)| {
            let (ca, cb) = (ca.as_f64(), cb.as_f64());
            (ca > 0.0).then(|| (ca - cb).abs() / ca)
        })
        .collect())
}

/// Maximum of `err_ratios`. Candidates with `cost(A, C) = 0` are skipped.
pub fn estimate_err<T, A, B>(a: &A, b: &B, candidates: &CandidateCenters<T>, z: PowerZ<T>) -> Result<f64>
where
    T: Real,
    A: PointSource<T> + ?Sized,
    B: PointSource<T> + ?Sized,
{
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate center sets"));
    }
    err_ratios(a, b, candidates, z)?
        .into_iter()
        .flatten()
        .reduce(f64::max)
        .ok_or_else(|| Error::invalid("every candidate has zero cost on the first set"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrAlphaEstimate {
    pub value: f64,
    pub alpha: f64,
    /// `r_P(C_S)`: cost on P of the first set's solution over the best known P cost.
    pub r_p: f64,
    /// Perturbed candidates that stayed alpha-approximate on the first set.
    pub retained: usize,
    /// Set when alpha > 1 but no perturbed candidate was retained.
    pub fallback: bool,
}

/// Random perturbations of `base`: each either jitters every center by a
/// Gaussian step scaled to the data spread, or replaces one center by a
/// random point of `data`.
pub fn perturbed_solutions<T: Real, S: PointSource<T> + ?Sized, R: Rng + ?Sized>(
    data: &S,
    base: &CenterSet<T>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<CenterSet<T>>> {
    let k = base.k();
    let d = base.dim();
    let n = data.len();
    let total = data.total_weight();
    if n == 0 || !(total > T::zero()) {
        return Err(Error::invalid("cannot perturb against an empty set"));
    }
    let spread = (kmeans_cost(data, base)? / total).as_f64().sqrt().max(1e-12);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut c = base.clone();
        if rng.random_bool(0.5) {
            let scale = spread * 10f64.powf(rng.random_range(-3.0..0.0));
            for j in 0..k {
                for v in c.center_mut(j) {
                    let step: f64 = StandardNormal.sample(rng);
                    *v = *v + T::lit(scale * step / (d as f64).sqrt());
                }
            }
        } else {
            let j = rng.random_range(0..k);
            let i = rng.random_range(0..n);
            c.center_mut(j).copy_from_slice(data.point(i));
        }
        out.push(c);
    }
    Ok(out)
}

/// Estimate of `Err_alpha(S, P)` for the k-means objective.
///
/// For alpha = 1 this is `cost(P, C_S) / cost(P, C_P) - 1` with both
/// solutions best of ten restarts. For alpha > 1 it also scans
/// `ALPHA_CANDIDATES` perturbations of `C_S`, keeps those with `r_S <= alpha`
/// and maximizes `r_P / r_S - 1`. Ratios use the lowest cost seen on each set.
pub fn estimate_err_alpha<T, S>(s: &S, p: &Dataset<T>, k: usize, alpha: f64, seed: u64) -> Result<ErrAlphaEstimate>
where
    T: Real,
    S: PointSource<T> + ?Sized,
{
    estimate_err_alpha_z(s, p, k, alpha, PowerZ::squared(), seed)
}

/// `estimate_err_alpha` for the (k, z) objective, z in {1, 2}.
pub fn estimate_err_alpha_z<T, S>(
    s: &S,
    p: &Dataset<T>,
    k: usize,
    alpha: f64,
    z: PowerZ<T>,
    seed: u64,
) -> Result<ErrAlphaEstimate>
where
    T: Real,
    S: PointSource<T> + ?Sized,
{
    if !(alpha >= 1.0) {
        return Err(Error::invalid(format!("alpha must be >= 1, got {alpha}")));
    }
    check_support(s, k)?;
    check_support(p, k)?;
    let cfg = |stream| SolveConfig::new(k, derive_seed(seed, stream)).restarts(REPORT_RESTARTS);
    let cs = solve_z(s, &cfg(0), z)?;
    let cp = solve_z(p, &cfg(1), z)?;
    let mut cands = vec![cs.centers.clone()];
    if alpha > 1.0 {
        let mut rng = substream(seed, &[2]);
        cands.extend(perturbed_solutions(s, &cs.centers, ALPHA_CANDIDATES, &mut rng)?);
    }
    let costs: Vec<(f64, f64)> = cands
        .par_iter()
        .map(|c| Ok((cost(s, c, z)?.as_f64(), cost(p, c, z)?.as_f64())))
        .collect::<Result<_>>()?;
    let best_s = costs.iter().map(|c| c.0).fold(cs.cost.as_f64(), f64::min);
    let best_p = costs.iter().map(|c| c.1).fold(cp.cost.as_f64(), f64::min);
    let ratio = |num: f64, den: f64| {
        if den > 0.0 {
            num / den
        } else if num > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    };
    let r_p = ratio(costs[0].1, best_p);
    let mut value = r_p / ratio(costs[0].0, best_s) - 1.0;
    let mut retained = 0;
    for &(c_s, c_p) in &costs[1..] {
        let r_s = ratio(c_s, best_s);
        if r_s <= alpha {
            retained += 1;
            value = value.max(ratio(c_p, best_p) / r_s - 1.0);
        }
    }
    let fallback = alpha > 1.0 && retained == 0;
    if fallback {
        log::warn!("no perturbed solution stayed {alpha}-approximate; reporting the alpha = 1 value");
    }
    Ok(ErrAlphaEstimate {
        value,
        alpha,
        r_p,
        retained,
        fallback,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionReport {
    /// Candidates with nonzero costs and per-candidate `Err(S, P^) < 1`.
    pub checked: usize,
    pub violations: usize,
    /// `min (eps + 2 eps') - |cost(P,C) - cost(S,C)|/cost(S,C)` over checked candidates.
    pub worst_slack: f64,
    pub err_s_p: f64,
    pub err_s_phat: f64,
    pub err_phat_p: f64,
    /// `err_s_p <= err_s_phat + 2 err_phat_p` over the checked candidates.
    pub aggregate_holds: bool,
}

/// Per-candidate check of `|cost(P,C) - cost(S,C)| <= (e + 2e') cost(S,C)`
/// with `e = Err_C(S, P^)`, `e' = Err_C(P^, P)`, applied where `e < 1`.
pub fn check_composition<T, S>(
    s: &S,
    phat: &Dataset<T>,
    p: &Dataset<T>,
    candidates: &CandidateCenters<T>,
    z: PowerZ<T>,
) -> Result<CompositionReport>
where
    T: Real,
    S: PointSource<T> + ?Sized,
{
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate center sets"));
    }
    let rows: Vec<(f64, f64, f64)> = candidates
        .sets()
        .par_iter()
        .map(|c| {
            Ok((
                cost(s, c, z)?.as_f64(),
                cost(phat, c, z)?.as_f64(),
                cost(p, c, z)?.as_f64(),
            ))
        })
        .collect::<Result<_>>()?;
    let mut checked = 0;
    let mut violations = 0;
    let mut worst_slack = f64::INFINITY;
    let (mut m_sp, mut m_sh, mut m_hp) = (0.0f64, 0.0f64, 0.0f64);
    for (cs, ch, cp) in rows {
        if !(cs > 0.0 && ch > 0.0) {
            continue;
        }
        let e = (cs - ch).abs() / cs;
        if e >= 1.0 {
            continue;
        }
        let e2 = (ch - cp).abs() / ch;
        let lhs = (cp - cs).abs() / cs;
        let slack = e + 2.0 * e2 - lhs;
        checked += 1;
        if slack < -1e-12 * (1.0 + lhs) {
            violations += 1;
        }
        worst_slack = worst_slack.min(slack);
        m_sp = m_sp.max(lhs);
        m_sh = m_sh.max(e);
        m_hp = m_hp.max(e2);
    }
    Ok(CompositionReport {
        checked,
        violations,
        worst_slack,
        err_s_p: m_sp,
        err_s_phat: m_sh,
        err_phat_p: m_hp,
        aggregate_holds: m_sp <= m_sh + 2.0 * m_hp + 1e-12,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrToRReport {
    /// Shared-candidate estimate of `Err(S, P)`.
    pub err_hat: f64,
    pub bound: f64,
    /// Candidates with `r_S(C) <= alpha`.
    pub checked: usize,
    pub violations: usize,
    pub worst_r_p: f64,
}

/// Over candidates (plus `C_S` and `C_P`) with `r_S(C) <= alpha`, compares
/// `r_P(C)` with `(1 + Err^)^2 alpha`. Violations can only come from the
/// estimator and are reported, not raised.
pub fn check_err_to_r<T, S>(
    p: &Dataset<T>,
    s: &S,
    candidates: &CandidateCenters<T>,
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<ErrToRReport>
where
    T: Real,
    S: PointSource<T> + ?Sized,
{
    if !(alpha >= 1.0) {
        return Err(Error::invalid("alpha must be >= 1"));
    }
    let cs = report_solve(s, k, derive_seed(seed, 0))?;
    let cp = report_solve(p, k, derive_seed(seed, 1))?;
    let mut all = candidates.clone();
    all.push(cs.centers)?;
    all.push(cp.centers)?;
    let costs = candidate_costs(s, p, &all, PowerZ::squared())?;
    let err_hat = estimate_err(s, p, &all, PowerZ::squared())?;
    let best_s = costs.iter().map(|c| c.0.as_f64()).fold(f64::INFINITY, f64::min);
    let best_p = costs.iter().map(|c| c.1.as_f64()).fold(f64::INFINITY, f64::min);
    if !(best_s > 0.0 && best_p > 0.0) {
        return Err(Error::invalid("zero optimum; ratios undefined"));
    }
    let bound = (1.0 + err_hat).powi(2) * alpha;
    let mut checked = 0;
    let mut violations = 0;
    let mut worst_r_p = 0.0f64;
    for (c_s, c_p) in costs {
        if c_s.as_f64() / best_s <= alpha {
            checked += 1;
            let r_p = c_p.as_f64() / best_p;
            worst_r_p = worst_r_p.max(r_p);
            if r_p > bound * (1.0 + 1e-12) {
                violations += 1;
            }
        }
    }
    if violations > 0 {
        log::warn!("{violations} candidates exceed (1 + Err)^2 alpha; estimator slack");
    }
    Ok(ErrToRReport {
        err_hat,
        bound,
        checked,
        violations,
        worst_r_p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeOutcome {
    Pass,
    Fail,
    /// A zero optimum makes kappa or tau undefined or zero.
    Degenerate,
    /// `Err_alpha(S_l, P_l) <= eps` or the solution-set inclusion failed.
    PreconditionUnverified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeReport {
    pub outcome: MergeOutcome,
    pub kappa: f64,
    pub tau: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeParams {
    pub k: usize,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub eps: f64,
    pub seed: u64,
}

fn included<T: Real>(
    from: &WeightedPointSet<T>,
    from_sol: &Solution<T>,
    into: &WeightedPointSet<T>,
    into_best: f64,
    alpha_prime: f64,
    alpha: f64,
    seed: u64,
) -> Result<bool> {
    let mut rng = seeded(seed);
    let mut cands = vec![from_sol.centers.clone()];
    cands.extend(perturbed_solutions(
        from,
        &from_sol.centers,
        ALPHA_CANDIDATES,
        &mut rng,
    )?);
    let from_best = from_sol.cost.as_f64();
    for c in cands {
        if kmeans_cost(from, &c)?.as_f64() <= alpha_prime * from_best
            && kmeans_cost(into, &c)?.as_f64() > alpha * into_best * (1.0 + 1e-12)
        {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Weak mergeability check: `Err_{1+(alpha-1)kappa}(S1 u S2, P1 u P2)`
/// against `alpha' tau (1 + eps) - 1`, with both preconditions spot-checked.
pub fn check_merge_bound<T: Real>(
    s1: &WeightedPointSet<T>,
    p1: &Dataset<T>,
    s2: &WeightedPointSet<T>,
    p2: &Dataset<T>,
    params: &MergeParams,
) -> Result<MergeReport> {
    let MergeParams {
        k,
        alpha,
        alpha_prime,
        eps,
        seed,
    } = *params;
    if !(alpha >= 1.0 && alpha_prime >= 1.0 && alpha_prime <= alpha) {
        return Err(Error::invalid("need 1 <= alpha' <= alpha"));
    }
    let s12 = s1.union(s2)?;
    let p12 = p1.concat(p2)?;
    let sol = |data: &dyn PointSource<T>, stream| report_solve(data, k, derive_seed(seed, stream));
    let o_s1 = sol(s1, 0)?;
    let o_s2 = sol(s2, 1)?;
    let o_p1 = sol(p1, 2)?.cost.as_f64();
    let o_p2 = sol(p2, 3)?.cost.as_f64();
    let o_s12 = sol(&s12, 4)?.cost.as_f64();
    let (a1, a2) = (o_s1.cost.as_f64(), o_s2.cost.as_f64());
    let kappa = if o_s12 > 0.0 { a1.min(a2) / o_s12 } else { 0.0 };
    let q1 = a1 / o_p1;
    let q2 = a2 / o_p2;
    let tau = (q1 / q2).max(q2 / q1);
    let degenerate = MergeReport {
        outcome: MergeOutcome::Degenerate,
        kappa,
        tau,
        lhs: f64::NAN,
        rhs: f64::NAN,
    };
    if !(kappa > 0.0) || !tau.is_finite() || !(tau > 0.0) {
        return Ok(degenerate);
    }
    let rhs = alpha_prime * tau * (1.0 + eps) - 1.0;
    let e1 = estimate_err_alpha(s1, p1, k, alpha, derive_seed(seed, 5))?;
    let e2 = estimate_err_alpha(s2, p2, k, alpha, derive_seed(seed, 6))?;
    let inclusion = included(s1, &o_s1, s2, a2, alpha_prime, alpha, derive_seed(seed, 7))?
        && included(s2, &o_s2, s1, a1, alpha_prime, alpha, derive_seed(seed, 8))?;
    if e1.value > eps || e2.value > eps || !inclusion {
        return Ok(MergeReport {
            outcome: MergeOutcome::PreconditionUnverified,
            kappa,
            tau,
            lhs: f64::NAN,
            rhs,
        });
    }
    let merged_alpha = 1.0 + (alpha - 1.0) * kappa;
    let lhs = estimate_err_alpha(&s12, &p12, k, merged_alpha, derive_seed(seed, 9))?.value;
    let outcome = if lhs <= rhs + 1e-9 {
        MergeOutcome::Pass
    } else {
        MergeOutcome::Fail
    };
    Ok(MergeReport {
        outcome,
        kappa,
        tau,
        lhs,
        rhs,
    })
}

/// Evenly spaced center positions `lo, ..., hi` (`steps` nodes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1d {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Grid1d {
    pub const MAX_STEPS: usize = 501;

    pub fn new(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        if !(2..=Self::MAX_STEPS).contains(&steps) {
            return Err(Error::invalid(format!(
                "grid needs 2..={} nodes, got {steps}",
                Self::MAX_STEPS
            )));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid("grid bounds must be finite with lo < hi"));
        }
        Ok(Self { lo, hi, steps })
    }

    /// `[min - range, max + range]` over both sets, where `range = max - min`.
    pub fn covering<T: Real>(a: &dyn PointSource<T>, b: &dyn PointSource<T>, steps: usize) -> Result<Self> {
        let xs = (0..a.len())
            .map(|i| a.point(i)[0].as_f64())
            .chain((0..b.len()).map(|i| b.point(i)[0].as_f64()));
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in xs {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let range = (hi - lo).max(1.0);
        Self::new(lo - range, hi + range, steps)
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.steps {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * i as f64 / (self.steps - 1) as f64
        }
    }
}

/// Exact maximum of the Err ratio (denominator `cost(A, C)`) over every
/// center set with centers on `grid`, for one-dimensional data and k <= 2.
pub fn brute_force_err_1d<T, A, B>(a: &A, b: &B, k: usize, z: PowerZ<T>, grid: &Grid1d) -> Result<f64>
where
    T: Real,
    A: PointSource<T> + ?Sized,
    B: PointSource<T> + ?Sized,
{
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::invalid("grid oracle needs one-dimensional data"));
    }
    if !(1..=2).contains(&k) {
        return Err(Error::invalid("grid oracle supports k = 1 or 2"));
    }
    if grid.steps > Grid1d::MAX_STEPS {
        return Err(Error::invalid("grid too large"));
    }
    let nodes: Vec<T> = (0..grid.steps).map(|i| T::lit(grid.node(i))).collect();
    let best = (0..grid.steps)
        .into_par_iter()
        .map(|i| {
            let inner = if k == 1 { i..i + 1 } else { i..grid.steps };
            let mut best: Option<f64> = None;
            for j in inner {
                let c = if k == 1 {
                    CenterSet::from_scalars(&[nodes[i]])?
                } else {
                    CenterSet::from_scalars(&[nodes[i], nodes[j]])?
                };
                let ca = cost(a, &c, z)?.as_f64();
                if ca > 0.0 {
                    let r = (ca - cost(b, &c, z)?.as_f64()).abs() / ca;
                    best = Some(best.map_or(r, |x: f64| x.max(r)));
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    best.into_iter()
        .flatten()
        .reduce(f64::max)
        .ok_or_else(|| Error::invalid("every grid center set has zero cost on the first set"))
}

/// Draws `count` uniform candidates from the bounding box of `data` using a
/// dedicated stream of `seed`.
pub fn uniform_candidates<T: Real>(
    data: &Dataset<T>,
    k: usize,
    count: usize,
    seed: u64,
) -> Result<CandidateCenters<T>> {
    let mut rng = seeded(seed);
    CandidateCenters::uniform(data, k, count, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{Covariance, NoiseFamily};

    fn d1(xs: &[f64]) -> Dataset<f64> {
        Dataset::from_scalars(xs).unwrap()
    }

    #[test]
    fn err_hand_example() {
        let p = d1(&[0.0, 1.0]);
        let ph = d1(&[0.0, 2.0]);
        let cands = CandidateCenters::from_sets(vec![
            CenterSet::from_scalars(&[0.0]).unwrap(),
            CenterSet::from_scalars(&[1.0]).unwrap(),
            CenterSet::from_scalars(&[3.0]).unwrap(),
        ])
        .unwrap();
        let z = PowerZ::linear();
        // cost(P, .) = 1, 1, 5 and cost(P^, .) = 2, 2, 4
        assert_eq!(estimate_err(&p, &ph, &cands, z).unwrap(), 1.0);
        assert_eq!(estimate_err(&ph, &p, &cands, z).unwrap(), 0.5);
        assert_eq!(estimate_err(&p, &p, &cands, z).unwrap(), 0.0);
    }

    #[test]
    fn err_all_zero_denominators_is_error() {
        let p = d1(&[1.0, 1.0]);
        let cands = CandidateCenters::from_sets(vec![CenterSet::from_scalars(&[1.0]).unwrap()]).unwrap();
        assert!(estimate_err(&p, &d1(&[0.0, 2.0]), &cands, PowerZ::squared()).is_err());
        let empty = CandidateCenters::<f64>::from_sets(vec![]).unwrap();
        assert!(estimate_err(&p, &p, &empty, PowerZ::squared()).is_err());
    }

    #[test]
    fn bounds_without_noise() {
        let spec = NoiseSpec::model_i(0.0, NoiseFamily::Gaussian).unwrap();
        let cn = theoretical_bound(Algorithm::Cn, 0.2, &spec, 100, 3, 2, 5.0).unwrap();
        let ca = theoretical_bound(Algorithm::CnAlpha, 0.2, &spec, 100, 3, 2, 5.0).unwrap();
        assert!((cn - 1.44).abs() < 1e-12);
        assert!((ca - 1.2).abs() < 1e-12);
        assert!(theoretical_bound(Algorithm::Cn, 0.2, &spec, 100, 3, 2, 0.0).is_err());
        assert!((full_cn_alpha_bound(0.2, &spec, 100, 3, 2, 5.0, 1.0).unwrap() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn bound_substitutions() {
        let n = 50;
        let d = 4;
        let k = 3;
        let opt = 1000.0;
        let m2 = NoiseSpec::model_ii(0.3, NoiseFamily::Gaussian).unwrap();
        let m1 = NoiseSpec::model_i(0.3, NoiseFamily::Gaussian).unwrap();
        for alg in [Algorithm::Cn, Algorithm::CnAlpha] {
            let a = theoretical_bound(alg, 0.1, &m1, n, d, k, opt).unwrap();
            let b = theoretical_bound(alg, 0.1, &m2, n, d, k, opt).unwrap();
            assert_eq!(a, b);
        }
        let corr = NoiseSpec::correlated(0.3, Covariance::identity(d)).unwrap();
        assert_eq!(noise_terms(&corr, n, d, k), noise_terms(&m2, n, d, k));
    }

    #[test]
    fn kz_arithmetic() {
        // x = 0.01 at z = 1
        let e = kz_err_bound(0.0, 0.01, 100, 1, 1.0, 100.0).unwrap();
        assert!((e - 0.02).abs() < 1e-15);
        assert_eq!(kz_err_bound(0.3, 0.0, 100, 4, 2.0, 100.0).unwrap(), 0.3);
        let spec = NoiseSpec::model_i(0.05, NoiseFamily::Gaussian).unwrap();
        let cn = theoretical_bound(Algorithm::Cn, 0.2, &spec, 100, 3, 2, 500.0).unwrap();
        let kz = kz_bound(0.2, 0.05, 100, 3, 2.0, 500.0).unwrap();
        assert!((cn - kz).abs() < 1e-12);
    }

    #[test]
    fn report_kappa_identity() {
        let r = QualityReport::new(Algorithm::CnAlpha, 0.2, 0.01, 1.156, 1.234).unwrap();
        assert!((r.kappa - 1.156 / 1.234).abs() < 1e-12);
        assert!(QualityReport::new(Algorithm::Cn, 0.2, 0.0, 1.0, 0.9).is_err());
    }

    #[test]
    fn grid_oracle_hand_example() {
        let p = d1(&[0.0, 1.0]);
        let ph = d1(&[0.0, 2.0]);
        let grid = Grid1d::new(-1.0, 3.0, 401).unwrap();
        let v = brute_force_err_1d(&p, &ph, 1, PowerZ::linear(), &grid).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(brute_force_err_1d(&p, &p, 2, PowerZ::squared(), &grid).unwrap(), 0.0);
        assert!(Grid1d::new(-1.0, 3.0, 502).is_err());
        assert!(brute_force_err_1d(&p, &ph, 3, PowerZ::linear(), &grid).is_err());
    }

    #[test]
    fn err_alpha_identical_sets_is_zero() {
        let p = d1(&[-3.0, -2.9, -3.1, 4.0, 4.2, 3.9, 10.0, 10.5]);
        let s = WeightedPointSet::unit(&p);
        let e = estimate_err_alpha(&s, &p, 2, 1.0, 5).unwrap();
        assert!(e.value.abs() < 1e-12);
        let e = estimate_err_alpha(&s, &p, 2, 1.5, 5).unwrap();
        assert!(e.value.abs() < 1e-12);
        assert!(e.retained > 0);
    }

    #[test]
    fn merge_on_split_two_point_is_degenerate() {
        let p1 = d1(&[-1.0; 6]);
        let p2 = d1(&[1.0; 6]);
        let params = MergeParams {
            k: 1,
            alpha: 1.0,
            alpha_prime: 1.0,
            eps: 0.1,
            seed: 1,
        };
        let r = check_merge_bound(
            &WeightedPointSet::unit(&p1),
            &p1,
            &WeightedPointSet::unit(&p2),
            &p2,
            &params,
        )
        .unwrap();
        assert_eq!(r.outcome, MergeOutcome::Degenerate);
    }
}
