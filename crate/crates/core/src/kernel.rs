//! Compactly supported smoothing kernels and the bandwidth schedule `h_n = n^-alpha`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

/// Allowed deviation of a user kernel's total mass from one.
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Epanechnikov,
    Tabulated(Arc<Table>),
}

/// Piecewise-linear profile on `[0, A]`, mirrored to `[-A, 0]`.
#[derive(Debug, Clone, PartialEq)]
struct Table {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl Table {
    fn eval(&self, u: f64) -> f64 {
        let a = u.abs();
        let last = *self.knots.last().unwrap();
        if a > last {
            return 0.0;
        }
        let i = match self.knots.partition_point(|&k| k <= a) {
            0 => 0,
            i if i >= self.knots.len() => self.knots.len() - 2,
            i => i - 1,
        };
        let (k0, k1) = (self.knots[i], self.knots[i + 1]);
        let t = (a - k0) / (k1 - k0);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }
}

/// Symmetric non-negative kernel with support `[-A, A]` and its constants
/// `nu2 = int K^2` and `tau2 = 1/2 int x^2 K`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    name: String,
    shape: Shape,
    support_radius: f64,
    nu2: f64,
    tau2: f64,
}

/// `K(u) = 3/4 (1 - u^2)` on `|u| <= 1`.
pub fn epanechnikov() -> KernelSpec {
    KernelSpec {
        name: "epanechnikov".into(),
        shape: Shape::Epanechnikov,
        support_radius: 1.0,
        nu2: 0.6,
        tau2: 0.1,
    }
}

impl KernelSpec {
    /// Kernel from samples `(u_i, K(u_i))` with `u_0 = 0 < u_1 < ... < u_m = A`,
    /// linearly interpolated and mirrored around zero. The total mass must be
    /// one within [`MASS_TOLERANCE`].
    pub fn tabulated(name: impl Into<String>, points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(
                "tabulated kernel needs at least two points".into(),
            ));
        }
        if points[0].0 != 0.0 {
            return Err(Error::InvalidArgument(
                "tabulated kernel must start at u = 0".into(),
            ));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::InvalidArgument(
                    "tabulated kernel abscissae must be strictly increasing".into(),
                ));
            }
        }
        if points.iter().any(|&(u, k)| !u.is_finite() || !k.is_finite() || k < 0.0) {
            return Err(Error::InvalidArgument(
                "tabulated kernel values must be finite and non-negative".into(),
            ));
        }
        let table = Table {
            knots: points.iter().map(|p| p.0).collect(),
            values: points.iter().map(|p| p.1).collect(),
        };
        let radius = *table.knots.last().unwrap();

        // Integrate segment by segment; each integrand is a polynomial of degree <= 3 there.
        let integrate = |g: &dyn Fn(f64) -> f64| -> f64 {
            2.0 * table
                .knots
                .windows(2)
                .map(|w| adaptive_simpson(g, w[0], w[1], 1e-14))
                .sum::<f64>()
        };
        let mass = integrate(&|u| table.eval(u));
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "tabulated kernel integrates to {mass}, expected 1"
            )));
        }
        let nu2 = integrate(&|u| table.eval(u).powi(2));
        let tau2 = 0.5 * integrate(&|u| u * u * table.eval(u));
        Ok(Self {
            name: name.into(),
            shape: Shape::Tabulated(Arc::new(table)),
            support_radius: radius,
            nu2,
            tau2,
        })
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match &self.shape {
            Shape::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Shape::Tabulated(t) => t.eval(u),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn nu2(&self) -> f64 {
        self.nu2
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthSchedule {
    alpha: f64,
}

impl BandwidthSchedule {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0,1), got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `h_k = k^-alpha` for step `k >= 1`.
    #[inline]
    pub fn bandwidth(&self, k: usize) -> f64 {
        (k as f64).powf(-self.alpha)
    }
}
