//! Synthetic data from single-index models `Y = f(theta'X) + eps`.
//!
//! Covariates are multivariate normal (identity covariance by default) and the
//! noise is i.i.d. Gaussian. Sampling is a pure function of the model, the
//! sample size and a `u64` seed.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Scalar link function of a single-index model.
#[derive(Clone)]
pub struct Link {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Link {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// `f(t) = t * exp(3t/4)`.
    pub fn model_m() -> Self {
        Self::new("t*exp(3t/4)", |t| t * (0.75 * t).exp())
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant({c})"), move |_| c)
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Link").field(&self.name).finish()
    }
}

/// Multivariate normal covariate law with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct CovariateLaw {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol_l: DMatrix<f64>,
}

impl CovariateLaw {
    pub fn standard(p: usize) -> Self {
        Self {
            mean: DVector::zeros(p),
            cov: DMatrix::identity(p, p),
            chol_l: DMatrix::identity(p, p),
        }
    }

    pub fn normal(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let p = mean.len();
        if cov.nrows() != p || cov.ncols() != p {
            return Err(Error::InvalidDimension(format!(
                "covariance is {}x{}, mean has length {p}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
            Error::InvalidArgument("covariate covariance must be positive definite".into())
        })?;
        Ok(Self {
            mean,
            chol_l: chol.l(),
            cov,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Density of the scalar `a'X` evaluated at `t`.
    pub fn projection_density(&self, a: &DVector<f64>, t: f64) -> f64 {
        let mu = a.dot(&self.mean);
        let var = (&self.cov * a).dot(a);
        normal_pdf((t - mu) / var.sqrt()) / var.sqrt()
    }

    fn sample_into(&self, rng: &mut ChaCha8Rng, z: &mut DVector<f64>) -> DVector<f64> {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        &self.mean + &self.chol_l * &*z
    }
}

pub(crate) fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[derive(Debug, Clone)]
pub struct SingleIndexModel {
    theta: DVector<f64>,
    link: Link,
    noise_std: f64,
    covariates: CovariateLaw,
}

impl SingleIndexModel {
    pub fn new(theta: DVector<f64>, link: Link, noise_std: f64) -> Result<Self> {
        let p = theta.len();
        Self::with_covariates(theta, link, noise_std, CovariateLaw::standard(p))
    }

    pub fn with_covariates(
        theta: DVector<f64>,
        link: Link,
        noise_std: f64,
        covariates: CovariateLaw,
    ) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidDimension("dimension must be positive".into()));
        }
        if covariates.dim() != theta.len() {
            return Err(Error::InvalidDimension(format!(
                "theta has length {}, covariates have dimension {}",
                theta.len(),
                covariates.dim()
            )));
        }
        if !(theta.norm() > 0.0) {
            return Err(Error::InvalidArgument("theta must be non-zero".into()));
        }
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise_std must be finite and >= 0, got {noise_std}"
            )));
        }
        Ok(Self {
            theta,
            link,
            noise_std,
            covariates,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn link(&self) -> &Link {
        &self.link
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn covariates(&self) -> &CovariateLaw {
        &self.covariates
    }

    pub fn with_noise_std(mut self, noise_std: f64) -> Result<Self> {
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise_std must be finite and >= 0, got {noise_std}"
            )));
        }
        self.noise_std = noise_std;
        Ok(self)
    }

    pub fn with_link(mut self, link: Link) -> Self {
        self.link = link;
        self
    }

    /// Noise-free response `f(theta'x)`.
    pub fn regression(&self, x: &DVector<f64>) -> f64 {
        self.link.eval(self.theta.dot(x))
    }

    /// Draws `n` independent observations.
    pub fn draw(&self, n: usize, seed: u64) -> Sample {
        let p = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = DVector::zeros(p);
        let mut x = DMatrix::zeros(n, p);
        let mut y = DVector::zeros(n);
        for k in 0..n {
            let row = self.covariates.sample_into(&mut rng, &mut z);
            let eps: f64 = StandardNormal.sample(&mut rng);
            y[k] = self.link.eval(self.theta.dot(&row)) + self.noise_std * eps;
            x.set_row(k, &row.transpose());
        }
        Sample { x, y }
    }

    /// Draws `count` covariate vectors (no responses).
    pub fn draw_covariates(&self, count: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = DVector::zeros(self.dim());
        (0..count)
            .map(|_| self.covariates.sample_into(&mut rng, &mut z))
            .collect()
    }
}

/// The simulation model (M): `f(t) = t exp(3t/4)`,
/// `theta = (1, 2, -2, -1, 0, ..., 0) / sqrt(10)`, standard normal covariates
/// and unit noise.
pub fn model_m(p: usize) -> Result<SingleIndexModel> {
    if p < 4 {
        return Err(Error::InvalidDimension(format!(
            "model (M) needs p >= 4, got {p}"
        )));
    }
    let mut theta = DVector::zeros(p);
    for (i, v) in [1.0, 2.0, -2.0, -1.0].into_iter().enumerate() {
        theta[i] = v / 10f64.sqrt();
    }
    SingleIndexModel::new(theta, Link::model_m(), 1.0)
}

/// Seed of replication `i` derived from a study seed.
#[inline]
pub fn replication_seed(seed: u64, replication: u64) -> u64 {
    seed ^ replication
}

/// Covariates (`n x p`, row per observation) and responses, in stream order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Sample {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::InvalidDimension(format!(
                "{} covariate rows but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn row(&self, k: usize) -> DVector<f64> {
        self.x.row(k).transpose()
    }

    pub fn response(&self, k: usize) -> f64 {
        self.y[k]
    }

    /// First `n` observations.
    pub fn head(&self, n: usize) -> Sample {
        let n = n.min(self.len());
        Sample {
            x: self.x.rows(0, n).into_owned(),
            y: self.y.rows(0, n).into_owned(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (DVector<f64>, f64)> + '_ {
        (0..self.len()).map(move |k| (self.row(k), self.y[k]))
    }

    /// Every covariate multiplied by `c`.
    pub fn scaled_covariates(&self, c: f64) -> Sample {
        Sample {
            x: &self.x * c,
            y: self.y.clone(),
        }
    }
}
