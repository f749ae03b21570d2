//! Stochastic noise models producing an observed dataset from a true one.
//!
//! - Model I: each point is left untouched with probability `1 - theta`;
//!   otherwise every coordinate receives an independent unit-variance draw.
//! - Model II: every coordinate of every point receives an independent draw
//!   of variance `sigma^2`.
//! - Correlated: every point receives one draw from `N(0, sigma^2 * Sigma)`.
//!
//! Each point owns a random substream derived from a base seed, so the
//! output does not depend on thread count or evaluation order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Dataset, PointSource};
use crate::rng::{derive_seed, seeded};
use crate::scalar::Real;

/// Eigenvalues above this (negative) threshold are clamped to zero.
const PSD_TOLERANCE: f64 = 1e-12;

/// Unit-variance, mean-zero base distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseFamily {
    /// `N(0, 1)`.
    Gaussian,
    /// `Laplace(0, 1/sqrt(2))`.
    Laplace,
    /// `U[-sqrt(3), sqrt(3)]`.
    Uniform,
}

impl NoiseFamily {
    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Laplace => "laplace",
            NoiseFamily::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(NoiseFamily::Gaussian),
            "laplace" | "laplacian" => Ok(NoiseFamily::Laplace),
            "uniform" => Ok(NoiseFamily::Uniform),
            other => Err(Error::invalid(format!("unknown noise family '{other}'"))),
        }
    }
}

/// One draw with mean 0 and variance 1.
pub fn sample_unit_noise<R: Rng + ?Sized>(family: NoiseFamily, rng: &mut R) -> f64 {
    match family {
        NoiseFamily::Gaussian => rng.sample(StandardNormal),
        NoiseFamily::Laplace => {
            // inverse CDF with scale b = 1/sqrt(2), variance 2b^2 = 1
            let b = std::f64::consts::FRAC_1_SQRT_2;
            let u: f64 = rng.random::<f64>() - 0.5;
            let tail = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
            -b * u.signum() * tail.ln()
        }
        NoiseFamily::Uniform => {
            let h = 3.0_f64.sqrt();
            rng.random_range(-h..=h)
        }
    }
}

/// A validated symmetric positive-semidefinite covariance matrix together
/// with a square-root factor `L` (`L L^T = Sigma`).
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    matrix: DMatrix<f64>,
    factor: DMatrix<f64>,
    trace: f64,
}

impl Covariance {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let d = matrix.nrows();
        if d == 0 || matrix.ncols() != d {
            return Err(Error::invalid("covariance must be a non-empty square matrix"));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("covariance has non-finite entries"));
        }
        let scale = matrix.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
        for i in 0..d {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-9 * scale {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
            }
        }
        let eig = SymmetricEigen::new(matrix.clone());
        let mut roots = DVector::zeros(d);
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l < -PSD_TOLERANCE * scale {
                return Err(Error::invalid(format!(
                    "covariance is not positive semidefinite (eigenvalue {l:.3e})"
                )));
            }
            roots[i] = l.max(0.0).sqrt();
        }
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
        let trace = matrix.trace();
        Ok(Self { matrix, factor, trace })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d)).expect("identity is PSD")
    }

    /// Random covariance with trace `d`: a random orthogonal basis and
    /// random positive eigenvalues rescaled to sum to `d`.
    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("covariance dimension must be >= 1"));
        }
        let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = g.qr().q();
        let mut eigen: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = eigen.iter().sum();
        eigen.iter_mut().for_each(|l| *l *= d as f64 / total);
        let m = &q * DMatrix::from_diagonal(&DVector::from_vec(eigen)) * q.transpose();
        // symmetrize away rounding
        let m = (&m + m.transpose()) * 0.5;
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    ModelI { theta: f64 },
    ModelII { variance: f64 },
    Correlated { variance: f64, covariance: Covariance },
}

/// A noise model and its base family (the family is ignored by the
/// correlated model, which is Gaussian).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    pub family: NoiseFamily,
}

impl NoiseSpec {
    pub fn model_i(theta: f64, family: NoiseFamily) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::invalid(format!("theta must lie in [0, 1], got {theta}")));
        }
        Ok(Self {
            model: NoiseModel::ModelI { theta },
            family,
        })
    }

    pub fn model_ii(variance: f64, family: NoiseFamily) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::invalid(format!("variance must be >= 0, got {variance}")));
        }
        Ok(Self {
            model: NoiseModel::ModelII { variance },
            family,
        })
    }

    pub fn correlated(variance: f64, covariance: Covariance) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::invalid(format!("variance must be >= 0, got {variance}")));
        }
        Ok(Self {
            model: NoiseModel::Correlated { variance, covariance },
            family: NoiseFamily::Gaussian,
        })
    }

    /// theta for model I, sigma^2 otherwise.
    pub fn level(&self) -> f64 {
        match &self.model {
            NoiseModel::ModelI { theta } => *theta,
            NoiseModel::ModelII { variance } | NoiseModel::Correlated { variance, .. } => *variance,
        }
    }

    /// Expected squared noise norm per point.
    pub fn expected_energy_per_point(&self, d: usize) -> f64 {
        match &self.model {
            NoiseModel::ModelI { theta } => theta * d as f64,
            NoiseModel::ModelII { variance } => variance * d as f64,
            NoiseModel::Correlated { variance, covariance } => variance * covariance.trace(),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match &self.model {
            NoiseModel::ModelI { theta } if !(0.0..=1.0).contains(theta) => {
                Err(Error::invalid("theta must lie in [0, 1]"))
            }
            NoiseModel::ModelII { variance } | NoiseModel::Correlated { variance, .. } if !(*variance >= 0.0) => {
                Err(Error::invalid("variance must be >= 0"))
            }
            NoiseModel::Correlated { covariance, .. } if covariance.dim() != d => Err(Error::DimensionMismatch {
                expected: d,
                got: covariance.dim(),
            }),
            _ => Ok(()),
        }
    }

    fn draw_point<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.model {
            NoiseModel::ModelI { theta } => {
                let hit = rng.random::<f64>() < *theta;
                for x in out.iter_mut() {
                    *x = if hit { sample_unit_noise(self.family, rng) } else { 0.0 };
                }
            }
            NoiseModel::ModelII { variance } => {
                let s = variance.sqrt();
                for x in out.iter_mut() {
                    *x = s * sample_unit_noise(self.family, rng);
                }
            }
            NoiseModel::Correlated { variance, covariance } => {
                let s = variance.sqrt();
                let g = DVector::from_fn(out.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                let v = covariance.factor() * g;
                for (x, y) in out.iter_mut().zip(v.iter()) {
                    *x = s * y;
                }
            }
        }
    }
}

/// An observed dataset together with the realized per-point noise.
#[derive(Debug, Clone)]
pub struct Perturbation<T> {
    pub noisy: Dataset<T>,
    noise: Vec<T>,
    dim: usize,
}

impl<T: Real> Perturbation<T> {
    pub fn noise_vector(&self, i: usize) -> &[T] {
        &self.noise[i * self.dim..(i + 1) * self.dim]
    }

    /// Sum over points of ||xi_p||^2.
    pub fn noise_energy(&self) -> f64 {
        crate::scalar::compensated_sum(self.noise.iter().map(|x| x.as_f64() * x.as_f64()))
    }

    /// Number of points whose noise vector is exactly zero.
    pub fn untouched(&self) -> usize {
        self.noise
            .chunks_exact(self.dim)
            .filter(|v| v.iter().all(|x| *x == T::zero()))
            .count()
    }
}

/// Applies `spec` to every point of `data`. Point order is preserved.
pub fn perturb<T: Real, R: RngCore + ?Sized>(
    data: &Dataset<T>,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<Perturbation<T>> {
    let d = data.dim();
    spec.validate(d)?;
    let base = rng.next_u64();
    let n = data.n();
    let mut noise = vec![T::zero(); n * d];
    noise.par_chunks_mut(d).enumerate().for_each(|(i, slot)| {
        let mut prng = seeded(derive_seed(base, i as u64));
        let mut buf = vec![0.0; d];
        spec.draw_point(&mut prng, &mut buf);
        for (s, v) in slot.iter_mut().zip(buf) {
            *s = T::lit(v);
        }
    });
    let coords: Vec<T> = data.coords().iter().zip(&noise).map(|(&p, &x)| p + x).collect();
    Ok(Perturbation {
        noisy: Dataset::new(d, coords)?,
        noise,
        dim: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn moments(family: NoiseFamily, n: usize) -> (f64, f64, f64, f64) {
        let mut rng = seeded(11);
        let xs: Vec<f64> = (0..n).map(|_| sample_unit_noise(family, &mut rng)).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (m, v, lo, hi)
    }

    #[test]
    fn unit_noise_moments() {
        for fam in [NoiseFamily::Gaussian, NoiseFamily::Laplace, NoiseFamily::Uniform] {
            let (m, v, lo, hi) = moments(fam, 1_000_000);
            assert!(m.abs() <= 0.005, "{fam:?} mean {m}");
            assert!((0.99..=1.01).contains(&v), "{fam:?} var {v}");
            if fam == NoiseFamily::Uniform {
                let h = 3.0_f64.sqrt();
                assert!(lo >= -h && hi <= h);
            }
        }
    }

    #[test]
    fn theta_zero_is_identity() {
        let p = Dataset::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        let spec = NoiseSpec::model_i(0.0, NoiseFamily::Gaussian).unwrap();
        let out = perturb(&p, &spec, &mut seeded(1)).unwrap();
        assert_eq!(out.noisy, p);
        assert_eq!(out.noise_energy(), 0.0);
        assert_eq!(out.untouched(), 2);
    }

    #[test]
    fn same_seed_same_output() {
        let p = Dataset::from_rows(&vec![vec![0.0; 3]; 50]).unwrap();
        let spec = NoiseSpec::model_ii(2.0, NoiseFamily::Laplace).unwrap();
        let a = perturb(&p, &spec, &mut seeded(5)).unwrap();
        let b = perturb(&p, &spec, &mut seeded(5)).unwrap();
        assert_eq!(a.noisy, b.noisy);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(NoiseSpec::model_i(1.5, NoiseFamily::Gaussian).is_err());
        assert!(NoiseSpec::model_ii(-1.0, NoiseFamily::Gaussian).is_err());
        let not_psd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(Covariance::new(not_psd).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Covariance::new(asym).is_err());
    }

    #[test]
    fn covariance_factor_reconstructs() {
        let cov = Covariance::random(5, &mut seeded(3)).unwrap();
        assert!((cov.trace() - 5.0).abs() < 1e-9);
        let back = cov.factor() * cov.factor().transpose();
        assert!((back - cov.matrix()).abs().max() < 1e-9);
        // tiny negative eigenvalue is clamped rather than rejected
        let nearly = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-15]);
        assert!(Covariance::new(nearly).is_ok());
    }

    #[test]
    fn correlated_dimension_checked() {
        let p = Dataset::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let spec = NoiseSpec::correlated(1.0, Covariance::identity(3)).unwrap();
        assert!(perturb(&p, &spec, &mut seeded(0)).is_err());
    }
}
