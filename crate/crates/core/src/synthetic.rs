//! Deterministic worked instances.

use crate::error::{Error, Result};
use crate::geometry::{Dataset, WeightedPointSet};
use crate::scalar::Real;

/// `n/2` points at -1 followed by `n/2` points at 1.
pub fn gen_two_point<T: Real>(n: usize) -> Result<Dataset<T>> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "two-point instance needs an even n >= 2, got {n}"
        )));
    }
    let xs: Vec<T> = (0..n).map(|i| if i < n / 2 { -T::one() } else { T::one() }).collect();
    Dataset::from_scalars(&xs)
}

/// The four sites `-2 sqrt2 - b sqrt2/2`, `-b sqrt2/2`, `b sqrt2/2`, `2 sqrt2 + b sqrt2/2`.
pub fn beta_grid_sites(beta: f64) -> [f64; 4] {
    let r2 = std::f64::consts::SQRT_2;
    let h = beta * r2 / 2.0;
    [-2.0 * r2 - h, -h, h, 2.0 * r2 + h]
}

/// `n/4` points at each of the four `beta_grid_sites`, in site order.
pub fn gen_beta_grid<T: Real>(n: usize, beta: f64) -> Result<Dataset<T>> {
    if n == 0 || !n.is_multiple_of(4) {
        return Err(Error::invalid(format!("beta grid needs n divisible by 4, got {n}")));
    }
    if !(beta >= 2.0) || !beta.is_finite() {
        return Err(Error::invalid(format!("beta must be >= 2, got {beta}")));
    }
    let sites = beta_grid_sites(beta);
    let xs: Vec<T> = (0..n).map(|i| T::lit(sites[i / (n / 4)])).collect();
    Dataset::from_scalars(&xs)
}

/// `P`: `n-1` points at 0 and one at 1. `S`: `n-1` points at 0 and one at `1/n`, unit weights.
pub fn gen_outlier_median<T: Real>(n: usize) -> Result<(Dataset<T>, WeightedPointSet<T>)> {
    if n < 2 {
        return Err(Error::invalid("outlier instance needs n >= 2"));
    }
    let mut p = vec![T::zero(); n];
    p[n - 1] = T::one();
    let mut s = vec![T::zero(); n];
    s[n - 1] = T::one() / T::from_count(n);
    let s = Dataset::from_scalars(&s)?;
    Ok((Dataset::from_scalars(&p)?, WeightedPointSet::unit(&s)))
}

/// `p_i = 100 n e_i` in `R^n`; meant for `k = n - 1`.
pub fn gen_lower_bound_instance<T: Real>(n: usize) -> Result<Dataset<T>> {
    if n < 4 {
        return Err(Error::invalid("lower-bound instance needs n >= 4"));
    }
    let scale = T::lit(100.0 * n as f64);
    let mut coords = vec![T::zero(); n * n];
    for i in 0..n {
        coords[i * n + i] = scale;
    }
    Dataset::new(n, coords)
}
