//! k-means++ seeding, weighted Lloyd refinement and best-of-restarts solving.

use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{chunked_sum, cost, dist2, nearest_all, CenterSet, PointSource, PowerZ};
use crate::rng::substream;
use crate::scalar::{compensated_sum, CompensatedSum, Real};

/// Lloyd iterations used by the quick optimum estimate.
pub const ESTIMATE_ITERATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub k: usize,
    pub max_iter: usize,
    pub restarts: usize,
    /// Stop once the relative cost improvement of an iteration drops below this.
    pub tol: f64,
    pub seed: u64,
}

impl SolveConfig {
    /// Ten restarts of k-means++ followed by at most 300 Lloyd iterations.
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iter: 300,
            restarts: 10,
            tol: 1e-4,
            seed,
        }
    }

    pub fn restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub centers: CenterSet<T>,
    pub cost: T,
}

#[derive(Debug, Clone)]
pub struct LloydOutcome<T> {
    pub centers: CenterSet<T>,
    pub cost: T,
    pub iterations: usize,
    /// Cost of the initial centers followed by the cost after each accepted step.
    pub history: Vec<T>,
}

fn pick_by_mass<R: Rng + ?Sized>(mass: &[f64], total: f64, rng: &mut R) -> usize {
    let mut r = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            last = i;
            if r < m {
                return i;
            }
            r -= m;
        }
    }
    last
}

/// D^2 seeding: the first center is drawn proportionally to weight, every
/// further one proportionally to `weight * d^2(p, chosen)`.
pub fn kmeanspp_seed<T: Real, S: PointSource<T> + ?Sized, R: Rng + ?Sized>(
    data: &S,
    k: usize,
    rng: &mut R,
) -> Result<CenterSet<T>> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let n = data.len();
    let weights: Vec<f64> = (0..n).map(|i| data.weight(i).as_f64()).collect();
    let positive = weights.iter().filter(|w| **w > 0.0).count();
    if k > positive {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {positive} points with positive weight"
        )));
    }
    let dim = data.dim();
    let total_w: f64 = weights.iter().sum();
    let first = pick_by_mass(&weights, total_w, rng);
    let mut coords: Vec<T> = data.point(first).to_vec();
    let mut min_d2: Vec<f64> = (0..n)
        .map(|i| dist2(data.point(i), data.point(first)).as_f64())
        .collect();

    for chosen in 1..k {
        let mass: Vec<f64> = weights.iter().zip(&min_d2).map(|(w, d)| w * d).collect();
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid(format!(
                "k = {k} exceeds the {chosen} distinct points with positive weight"
            )));
        }
        let pick = pick_by_mass(&mass, total, rng);
        let c = data.point(pick).to_vec();
        min_d2.par_iter_mut().enumerate().for_each(|(i, m)| {
            let d = dist2(data.point(i), &c).as_f64();
            if d < *m {
                *m = d;
            }
        });
        coords.extend_from_slice(&c);
    }
    CenterSet::new(dim, coords)
}

/// Weighted assignment cost under `centers` with per-point nearest info.
fn assignment<T: Real, S: PointSource<T> + ?Sized>(data: &S, centers: &CenterSet<T>) -> Result<(Vec<(usize, T)>, T)> {
    let near = nearest_all(data, centers)?;
    let cost = chunked_sum(data.len(), |i| data.weight(i) * near[i].1);
    Ok((near, cost))
}

/// Recomputes weighted means; empty clusters move to the points farthest
/// from their current centers.
fn update_centers<T: Real, S: PointSource<T> + ?Sized>(
    data: &S,
    centers: &CenterSet<T>,
    near: &[(usize, T)],
) -> Result<CenterSet<T>> {
    let k = centers.k();
    let d = data.dim();
    let mut sums = vec![CompensatedSum::<T>::new(); k * d];
    let mut mass = vec![CompensatedSum::<T>::new(); k];
    for (i, &(j, _)) in near.iter().enumerate() {
        let w = data.weight(i);
        if w <= T::zero() {
            continue;
        }
        mass[j].add(w);
        for (s, &x) in sums[j * d..(j + 1) * d].iter_mut().zip(data.point(i)) {
            s.add(w * x);
        }
    }
    let mut next = centers.clone();
    let mut empty = Vec::new();
    for j in 0..k {
        let m = mass[j].value();
        if m > T::zero() {
            for (c, s) in next.center_mut(j).iter_mut().zip(&sums[j * d..(j + 1) * d]) {
                *c = s.value() / m;
            }
        } else {
            empty.push(j);
        }
    }
    if !empty.is_empty() {
        let mut order: Vec<usize> = (0..data.len()).filter(|&i| data.weight(i) > T::zero()).collect();
        order.sort_by(|&a, &b| {
            near[b]
                .1
                .partial_cmp(&near[a].1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for (j, &i) in empty.iter().zip(order.iter()) {
            next.center_mut(*j).copy_from_slice(data.point(i));
        }
    }
    Ok(next)
}

/// Alternates assignment and weighted-mean steps until `max_iter` steps or
/// a relative improvement below `tol`. The cost sequence never increases:
/// a step that would raise the cost (through rounding) is rejected.
pub fn lloyd<T: Real, S: PointSource<T> + ?Sized>(
    data: &S,
    init: CenterSet<T>,
    max_iter: usize,
    tol: f64,
) -> Result<LloydOutcome<T>> {
    let (mut near, mut cost) = assignment(data, &init)?;
    let mut centers = init;
    let mut history = vec![cost];
    let mut iterations = 0;
    while iterations < max_iter && cost > T::zero() {
        let next = update_centers(data, &centers, &near)?;
        let (next_near, next_cost) = assignment(data, &next)?;
        if next_cost > cost {
            break;
        }
        iterations += 1;
        let improvement = ((cost - next_cost) / cost).as_f64();
        centers = next;
        near = next_near;
        cost = next_cost;
        history.push(cost);
        if improvement < tol {
            break;
        }
    }
    Ok(LloydOutcome {
        centers,
        cost,
        iterations,
        history,
    })
}

/// Best (lowest cost) of `cfg.restarts` runs of seeding plus Lloyd. Restart
/// `r` uses the substream `(cfg.seed, r)`; ties go to the lowest restart.
pub fn solve<T: Real, S: PointSource<T> + ?Sized>(data: &S, cfg: &SolveConfig) -> Result<Solution<T>> {
    if cfg.restarts == 0 {
        return Err(Error::invalid("restarts must be >= 1"));
    }
    let runs: Vec<Result<Solution<T>>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(cfg.seed, &[r as u64]);
            let init = kmeanspp_seed(data, cfg.k, &mut rng)?;
            let out = lloyd(data, init, cfg.max_iter, cfg.tol)?;
            Ok(Solution {
                centers: out.centers,
                cost: out.cost,
            })
        })
        .collect();
    let mut best: Option<Solution<T>> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Weighted median of scalars (lower median on ties).
fn weighted_median<T: Real>(mut xs: Vec<(T, T)>) -> T {
    xs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let total = compensated_sum(xs.iter().map(|p| p.1));
    let half = total / T::lit(2.0);
    let mut acc = T::zero();
    for &(x, w) in &xs {
        acc = acc + w;
        if acc >= half {
            return x;
        }
    }
    xs.last().map(|p| p.0).unwrap_or_else(T::zero)
}

/// Weiszfeld iteration for the weighted geometric median, started at the mean.
fn geometric_median<T: Real>(points: &[&[T]], weights: &[T]) -> Vec<T> {
    let d = points[0].len();
    let total = compensated_sum(weights.iter().copied());
    let mut c: Vec<T> = (0..d)
        .map(|t| compensated_sum(points.iter().zip(weights).map(|(p, &w)| w * p[t])) / total)
        .collect();
    let floor = T::lit(1e-12);
    for _ in 0..100 {
        let mut num = vec![T::zero(); d];
        let mut den = T::zero();
        for (p, &w) in points.iter().zip(weights) {
            let r = dist2(p, &c).sqrt().max(floor);
            let a = w / r;
            den = den + a;
            for (n, &x) in num.iter_mut().zip(p.iter()) {
                *n = *n + a * x;
            }
        }
        let next: Vec<T> = num.iter().map(|&v| v / den).collect();
        let shift = dist2(&next, &c).sqrt();
        c = next;
        if shift <= floor {
            break;
        }
    }
    c
}

fn median_step<T: Real, S: PointSource<T> + ?Sized>(data: &S, centers: &CenterSet<T>) -> Result<(CenterSet<T>, T)> {
    let k = centers.k();
    let near = nearest_all(data, centers)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &(j, _)) in near.iter().enumerate() {
        if data.weight(i) > T::zero() {
            members[j].push(i);
        }
    }
    let mut next = centers.clone();
    for (j, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let c = if data.dim() == 1 {
            vec![weighted_median(
                idx.iter().map(|&i| (data.point(i)[0], data.weight(i))).collect(),
            )]
        } else {
            let pts: Vec<&[T]> = idx.iter().map(|&i| data.point(i)).collect();
            let ws: Vec<T> = idx.iter().map(|&i| data.weight(i)).collect();
            geometric_median(&pts, &ws)
        };
        next.center_mut(j).copy_from_slice(&c);
    }
    let cost = cost(data, &next, PowerZ::linear())?;
    Ok((next, cost))
}

/// Alternating assignment / median refinement for k-median (z = 1).
/// Exact weighted medians in one dimension, Weiszfeld otherwise.
pub fn median_lloyd<T: Real, S: PointSource<T> + ?Sized>(
    data: &S,
    init: CenterSet<T>,
    max_iter: usize,
    tol: f64,
) -> Result<Solution<T>> {
    let mut c = cost(data, &init, PowerZ::linear())?;
    let mut centers = init;
    for _ in 0..max_iter {
        if c <= T::zero() {
            break;
        }
        let (next, next_cost) = median_step(data, &centers)?;
        if next_cost > c {
            break;
        }
        let improvement = ((c - next_cost) / c).as_f64();
        centers = next;
        c = next_cost;
        if improvement < tol {
            break;
        }
    }
    Ok(Solution { centers, cost: c })
}

/// Best-of-restarts solution of the (k, z) objective for z = 2 (k-means)
/// or z = 1 (k-median). The returned cost is the (k, z) cost.
pub fn solve_z<T: Real, S: PointSource<T> + ?Sized>(data: &S, cfg: &SolveConfig, z: PowerZ<T>) -> Result<Solution<T>> {
    if z == PowerZ::squared() {
        return solve(data, cfg);
    }
    if z != PowerZ::linear() {
        return Err(Error::invalid(format!("no solver for z = {}", z.value())));
    }
    if cfg.restarts == 0 {
        return Err(Error::invalid("restarts must be >= 1"));
    }
    let runs: Vec<Result<Solution<T>>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(cfg.seed, &[r as u64]);
            let init = kmeanspp_seed(data, cfg.k, &mut rng)?;
            median_lloyd(data, init, cfg.max_iter, cfg.tol)
        })
        .collect();
    let mut best: Option<Solution<T>> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// One k-means++ seeding followed by five Lloyd iterations.
pub fn estimate_opt<T: Real, S: PointSource<T> + ?Sized, R: RngCore + ?Sized>(
    data: &S,
    k: usize,
    rng: &mut R,
) -> Result<Solution<T>> {
    let init = kmeanspp_seed(data, k, rng)?;
    let out = lloyd(data, init, ESTIMATE_ITERATIONS, 0.0)?;
    Ok(Solution {
        centers: out.centers,
        cost: out.cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{kmeans_cost, mean, Dataset, WeightedPointSet};
    use crate::rng::seeded;

    fn two_point(n: usize) -> Dataset<f64> {
        let xs: Vec<f64> = (0..n).map(|i| if i < n / 2 { -1.0 } else { 1.0 }).collect();
        Dataset::from_scalars(&xs).unwrap()
    }

    #[test]
    fn seeding_k_equals_n_selects_everything() {
        let p = Dataset::from_scalars(&[0.0, 1.0, 3.0, 7.0, 10.0]).unwrap();
        let c = kmeanspp_seed(&p, 5, &mut seeded(4)).unwrap();
        let mut got: Vec<f64> = c.coords().to_vec();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, vec![0.0, 1.0, 3.0, 7.0, 10.0]);
    }

    #[test]
    fn seeding_two_sites_hits_both() {
        let p = two_point(100);
        for s in 0..20 {
            let c = kmeanspp_seed(&p, 2, &mut seeded(s)).unwrap();
            let mut got = c.coords().to_vec();
            got.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(got, vec![-1.0, 1.0]);
        }
    }

    #[test]
    fn seeding_errors() {
        let p = two_point(10);
        assert!(kmeanspp_seed(&p, 3, &mut seeded(0)).is_err());
        assert!(kmeanspp_seed(&p, 0, &mut seeded(0)).is_err());
        assert!(kmeanspp_seed(&p, 11, &mut seeded(0)).is_err());
        let c = kmeanspp_seed(&p, 1, &mut seeded(0)).unwrap();
        assert_eq!(c.k(), 1);
    }

    #[test]
    fn lloyd_fixed_point_and_hand_example() {
        let p = two_point(10);
        let opt = CenterSet::from_scalars(&[0.0]).unwrap();
        let out = lloyd(&p, opt, 10, 0.0).unwrap();
        assert_eq!(out.cost, 10.0);
        assert_eq!(out.centers.coords(), &[0.0]);

        let p = Dataset::from_scalars(&[0.0, 0.0, 3.0, 3.0]).unwrap();
        let out = lloyd(&p, CenterSet::from_scalars(&[0.0, 3.0]).unwrap(), 10, 0.0).unwrap();
        assert_eq!(out.cost, 0.0);
    }

    #[test]
    fn lloyd_repairs_empty_clusters() {
        let p = Dataset::from_scalars(&[0.0, 1.0, 10.0]).unwrap();
        // second center sits far away and owns nothing
        let init = CenterSet::from_scalars(&[0.0, 100.0]).unwrap();
        let out = lloyd(&p, init, 10, 0.0).unwrap();
        assert!(out.cost <= 0.5 + 1e-12, "cost {}", out.cost);
    }

    #[test]
    fn solve_one_mean_is_closed_form() {
        let p = Dataset::from_scalars(&[0.0, 1.0, 2.0, 7.0]).unwrap();
        let sol = solve(&p, &SolveConfig::new(1, 3)).unwrap();
        assert_eq!(sol.centers.coords(), mean(&p).unwrap().as_slice());
        let direct = kmeans_cost(&p, &sol.centers).unwrap();
        assert_eq!(sol.cost, direct);
    }

    #[test]
    fn estimate_opt_two_sites_is_zero() {
        let p = two_point(1000);
        let sol = estimate_opt(&p, 2, &mut seeded(9)).unwrap();
        assert_eq!(sol.cost, 0.0);
    }

    #[test]
    fn weighted_matches_replicated() {
        let w = WeightedPointSet::from_rows(
            &[vec![0.0], vec![1.0], vec![5.0], vec![6.0], vec![20.0]],
            vec![2.0, 1.0, 3.0, 1.0, 2.0],
        )
        .unwrap();
        let rep = Dataset::from_scalars(&[0.0, 0.0, 1.0, 5.0, 5.0, 5.0, 6.0, 20.0, 20.0]).unwrap();
        let cfg = SolveConfig::new(2, 1);
        let a: Solution<f64> = solve(&w, &cfg).unwrap();
        let b = solve(&rep, &cfg).unwrap();
        assert!((a.cost - b.cost).abs() < 1e-9);
    }

    #[test]
    fn median_solver_is_exact_in_one_dimension() {
        let n = 10;
        let mut xs = vec![0.0; n - 1];
        xs.push(1.0);
        let p = Dataset::from_scalars(&xs).unwrap();
        let sol: Solution<f64> = solve_z(&p, &SolveConfig::new(1, 3), PowerZ::linear()).unwrap();
        assert_eq!(sol.centers.center(0), &[0.0]);
        assert_eq!(sol.cost, 1.0);
        assert!(solve_z(&p, &SolveConfig::new(1, 3), PowerZ::new(3.0).unwrap()).is_err());
    }

    #[test]
    fn geometric_median_of_symmetric_cross_is_origin() {
        let p = Dataset::from_rows(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
            vec![0.0, 0.0],
        ])
        .unwrap();
        let sol: Solution<f64> = solve_z(&p, &SolveConfig::new(1, 0), PowerZ::linear()).unwrap();
        assert!(sol.centers.center(0).iter().all(|v| v.abs() < 1e-6));
        assert!((sol.cost - 4.0).abs() < 1e-6);
    }
}
