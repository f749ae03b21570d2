//! Point sets and the (k, z) clustering cost.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, CompensatedSum, Real};

/// Points per chunk in parallel reductions. Fixed so that results do not
/// depend on the number of worker threads.
const CHUNK: usize = 1024;

fn check_coords<T: Real>(dim: usize, coords: &[T], what: &str) -> Result<()> {
    if dim == 0 {
        return Err(Error::invalid(format!("{what}: dimension must be >= 1")));
    }
    if !coords.len().is_multiple_of(dim) {
        return Err(Error::invalid(format!(
            "{what}: {} coordinates do not split into rows of {dim}",
            coords.len()
        )));
    }
    if let Some(pos) = coords.iter().position(|x| !x.is_finite()) {
        return Err(Error::invalid(format!(
            "{what}: non-finite coordinate at row {}",
            pos / dim
        )));
    }
    Ok(())
}

fn flatten_rows<T: Real>(rows: &[Vec<T>], what: &str) -> Result<(usize, Vec<T>)> {
    let dim = rows
        .first()
        .map(|r| r.len())
        .ok_or_else(|| Error::invalid(format!("{what}: no rows")))?;
    let mut coords = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        coords.extend_from_slice(r);
    }
    Ok((dim, coords))
}

/// Squared Euclidean distance.
#[inline]
pub fn dist2<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
        let t = x - y;
        acc + t * t
    })
}

/// Exponent z of the (k, z) objective, z >= 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerZ<T>(T);

impl<T: Real> PowerZ<T> {
    pub fn new(z: T) -> Result<Self> {
        if !(z >= T::one()) || !z.is_finite() {
            return Err(Error::invalid(format!("z must be >= 1, got {z}")));
        }
        Ok(Self(z))
    }

    /// z = 2 (k-means).
    pub fn squared() -> Self {
        Self(T::lit(2.0))
    }

    /// z = 1 (k-median).
    pub fn linear() -> Self {
        Self(T::one())
    }

    pub fn value(self) -> T {
        self.0
    }

    /// Raises a squared distance to the z/2 power.
    #[inline]
    pub fn apply_to_squared(self, d2: T) -> T {
        let two = T::lit(2.0);
        if self.0 == two {
            d2
        } else if self.0 == T::one() {
            d2.sqrt()
        } else {
            d2.powf(self.0 / two)
        }
    }
}

/// Read access shared by plain and weighted point sets.
pub trait PointSource<T: Real>: Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn point(&self, i: usize) -> &[T];
    fn weight(&self, i: usize) -> T;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn total_weight(&self) -> T {
        compensated_sum((0..self.len()).map(|i| self.weight(i)))
    }
}

/// An ordered, non-empty collection of finite d-dimensional points.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    dim: usize,
    coords: Vec<T>,
}

impl<T: Real> Dataset<T> {
    pub fn new(dim: usize, coords: Vec<T>) -> Result<Self> {
        check_coords(dim, &coords, "dataset")?;
        if coords.is_empty() {
            return Err(Error::invalid("dataset: no points"));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let (dim, coords) = flatten_rows(rows, "dataset")?;
        Self::new(dim, coords)
    }

    /// One-dimensional dataset from scalars.
    pub fn from_scalars(xs: &[T]) -> Result<Self> {
        Self::new(1, xs.to_vec())
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Points at the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.n() {
                return Err(Error::invalid(format!("index {i} out of range")));
            }
            coords.extend_from_slice(self.point(i));
        }
        Self::new(self.dim, coords)
    }

    /// Concatenation of two datasets of equal dimension.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Self::new(self.dim, coords)
    }

    /// Per-coordinate (min, max) over all points.
    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        let mut lo = self.point(0).to_vec();
        let mut hi = lo.clone();
        for p in self.rows() {
            for j in 0..self.dim {
                lo[j] = lo[j].min(p[j]);
                hi[j] = hi[j].max(p[j]);
            }
        }
        (lo, hi)
    }
}

impl<T: Real> PointSource<T> for Dataset<T> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn len(&self) -> usize {
        self.n()
    }
    #[inline]
    fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
    #[inline]
    fn weight(&self, _i: usize) -> T {
        T::one()
    }
    fn total_weight(&self) -> T {
        T::from_count(self.n())
    }
}

/// An ordered list of k >= 1 centers. Duplicates are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterSet<T> {
    dim: usize,
    coords: Vec<T>,
}

impl<T: Real> CenterSet<T> {
    pub fn new(dim: usize, coords: Vec<T>) -> Result<Self> {
        check_coords(dim, &coords, "center set")?;
        if coords.is_empty() {
            return Err(Error::invalid("center set: no centers"));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let (dim, coords) = flatten_rows(rows, "center set")?;
        Self::new(dim, coords)
    }

    pub fn from_scalars(xs: &[T]) -> Result<Self> {
        Self::new(1, xs.to_vec())
    }

    pub fn single(c: &[T]) -> Result<Self> {
        Self::new(c.len(), c.to_vec())
    }

    pub fn k(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn center(&self, j: usize) -> &[T] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn center_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[T]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    /// Appends one more center.
    pub fn with_center(&self, c: &[T]) -> Result<Self> {
        if c.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: c.len(),
            });
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(c);
        Self::new(self.dim, coords)
    }

    /// Index and squared distance of the nearest center; ties go to the
    /// lowest index.
    #[inline]
    pub fn nearest(&self, p: &[T]) -> (usize, T) {
        let mut best = 0;
        let mut best_d2 = dist2(p, self.center(0));
        for j in 1..self.k() {
            let d2 = dist2(p, self.center(j));
            if d2 < best_d2 {
                best = j;
                best_d2 = d2;
            }
        }
        (best, best_d2)
    }
}

/// A weighted point set (a coreset). Weights are finite and >= 0.
///
/// `source_index` records which row of the originating dataset each point
/// was drawn from; `source_cluster` is filled in by the cluster-wise
/// construction so per-cluster weight conservation can be checked.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPointSet<T> {
    dim: usize,
    coords: Vec<T>,
    weights: Vec<T>,
    source_index: Vec<usize>,
    source_cluster: Option<Vec<usize>>,
}

impl<T: Real> WeightedPointSet<T> {
    pub fn new(dim: usize, coords: Vec<T>, weights: Vec<T>) -> Result<Self> {
        check_coords(dim, &coords, "weighted set")?;
        let n = coords.len() / dim;
        if weights.len() != n {
            return Err(Error::invalid(format!(
                "weighted set: {} weights for {n} points",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < T::zero()) {
            return Err(Error::invalid(format!("weighted set: invalid weight {w}")));
        }
        Ok(Self {
            dim,
            coords,
            weights,
            source_index: (0..n).collect(),
            source_cluster: None,
        })
    }

    pub fn from_rows(rows: &[Vec<T>], weights: Vec<T>) -> Result<Self> {
        let (dim, coords) = flatten_rows(rows, "weighted set")?;
        Self::new(dim, coords, weights)
    }

    /// Every point of `data` with weight 1.
    pub fn unit(data: &Dataset<T>) -> Self {
        Self {
            dim: data.dim(),
            coords: data.coords().to_vec(),
            weights: vec![T::one(); data.n()],
            source_index: (0..data.n()).collect(),
            source_cluster: None,
        }
    }

    /// Rows `indices` of `data` with the given weights.
    pub fn from_indices(data: &Dataset<T>, indices: Vec<usize>, weights: Vec<T>) -> Result<Self> {
        let coords = indices.iter().flat_map(|&i| data.point(i).iter().copied()).collect();
        let mut s = Self::new(data.dim(), coords, weights)?;
        s.source_index = indices;
        Ok(s)
    }

    pub fn with_clusters(mut self, clusters: Vec<usize>) -> Result<Self> {
        if clusters.len() != self.weights.len() {
            return Err(Error::invalid("cluster labels do not match point count"));
        }
        self.source_cluster = Some(clusters);
        Ok(self)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn source_index(&self) -> &[usize] {
        &self.source_index
    }

    pub fn source_cluster(&self) -> Option<&[usize]> {
        self.source_cluster.as_deref()
    }

    /// Union of two weighted sets. Provenance is dropped.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        Self::new(self.dim, coords, weights)
    }

    /// Distinct points carrying positive weight, up to `limit`.
    pub fn distinct_support(&self, limit: usize) -> usize {
        let mut seen: Vec<&[T]> = Vec::new();
        for i in 0..self.len() {
            if self.weights[i] <= T::zero() {
                continue;
            }
            let p = self.point(i);
            if !seen.contains(&p) {
                seen.push(p);
                if seen.len() >= limit {
                    break;
                }
            }
        }
        seen.len()
    }
}

impl<T: Real> PointSource<T> for WeightedPointSet<T> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn len(&self) -> usize {
        self.weights.len()
    }
    #[inline]
    fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
    #[inline]
    fn weight(&self, i: usize) -> T {
        self.weights[i]
    }
}

fn check_dims<T: Real, S: PointSource<T> + ?Sized>(data: &S, centers: &CenterSet<T>) -> Result<()> {
    if data.dim() != centers.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: centers.dim(),
        });
    }
    Ok(())
}

/// Nearest-center index and squared distance for every point.
pub fn nearest_all<T: Real, S: PointSource<T> + ?Sized>(data: &S, centers: &CenterSet<T>) -> Result<Vec<(usize, T)>> {
    check_dims(data, centers)?;
    let n = data.len();
    let mut out = vec![(0usize, T::zero()); n];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * CHUNK;
        for (off, slot) in chunk.iter_mut().enumerate() {
            *slot = centers.nearest(data.point(base + off));
        }
    });
    Ok(out)
}

/// Deterministic compensated sum of `f(i)` over `0..n`.
pub(crate) fn chunked_sum<T: Real, F>(n: usize, f: F) -> T
where
    F: Fn(usize) -> T + Sync,
{
    let partials: Vec<T> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            compensated_sum((lo..hi).map(&f))
        })
        .collect();
    compensated_sum(partials)
}

/// Weighted (k, z) cost: sum of w(x) * min_c ||x - c||^z.
pub fn cost<T: Real, S: PointSource<T> + ?Sized>(data: &S, centers: &CenterSet<T>, z: PowerZ<T>) -> Result<T> {
    check_dims(data, centers)?;
    Ok(chunked_sum(data.len(), |i| {
        let (_, d2) = centers.nearest(data.point(i));
        data.weight(i) * z.apply_to_squared(d2)
    }))
}

/// k-means cost (z = 2).
pub fn kmeans_cost<T: Real, S: PointSource<T> + ?Sized>(data: &S, centers: &CenterSet<T>) -> Result<T> {
    cost(data, centers, PowerZ::squared())
}

/// Index of the nearest center for every point (ties to the lowest index).
pub fn assign<T: Real, S: PointSource<T> + ?Sized>(data: &S, centers: &CenterSet<T>) -> Result<Vec<usize>> {
    Ok(nearest_all(data, centers)?.into_iter().map(|(j, _)| j).collect())
}

/// Weighted centroid.
pub fn mean<T: Real, S: PointSource<T> + ?Sized>(data: &S) -> Result<Vec<T>> {
    let total = data.total_weight();
    if !(total > T::zero()) {
        return Err(Error::invalid("mean of a set with zero total weight"));
    }
    let d = data.dim();
    let mut acc = vec![CompensatedSum::new(); d];
    for i in 0..data.len() {
        let w = data.weight(i);
        for (a, &x) in acc.iter_mut().zip(data.point(i)) {
            a.add(w * x);
        }
    }
    Ok(acc.iter().map(|a| a.value() / total).collect())
}

/// Both sides of cost(P, c) = cost(P, mean(P)) + n * ||c - mean(P)||^2.
pub fn one_mean_cost_identity_check<T: Real>(data: &Dataset<T>, c: &[T]) -> Result<(T, T)> {
    let centers = CenterSet::single(c)?;
    let lhs = kmeans_cost(data, &centers)?;
    let mu = mean(data)?;
    let at_mean = kmeans_cost(data, &CenterSet::single(&mu)?)?;
    let rhs = at_mean + T::from_count(data.n()) * dist2(c, &mu);
    Ok((lhs, rhs))
}
