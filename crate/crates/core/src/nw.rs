//! Recursive Nadaraya-Watson estimator of the link function.
//!
//! Step `k` contributes the weight `W_k(x) = K((x - u_k) / h_k) / h_k` with
//! `u_k = theta_{k-1}' X_k` projected on the direction estimate available
//! *before* the observation, and `h_k = k^-alpha`. Since the weights depend on
//! past directions, evaluation at an arbitrary point needs the whole log of
//! projections; a [`GridAccumulator`] keeps running sums on a fixed grid instead.

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernel::{BandwidthSchedule, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub k: usize,
    pub u: f64,
    pub y: f64,
}

/// Numerator, denominator and contributor count of the estimator at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub x: f64,
    pub f_hat: Option<f64>,
    pub denominator: f64,
    pub n_contributing: usize,
}

#[inline]
fn weight(kernel: &KernelSpec, h: f64, reach: f64, x: f64, u: f64) -> f64 {
    let d = x - u;
    if d.abs() > reach {
        return 0.0;
    }
    kernel.eval(d / h) / h
}

#[derive(Debug, Clone)]
pub struct ProjectionLog {
    entries: Vec<LogEntry>,
    // (h_k, A * h_k) per entry
    bandwidths: Vec<(f64, f64)>,
    kernel: KernelSpec,
    schedule: BandwidthSchedule,
}

impl ProjectionLog {
    pub fn new(kernel: KernelSpec, schedule: BandwidthSchedule) -> Self {
        Self {
            entries: Vec::new(),
            bandwidths: Vec::new(),
            kernel,
            schedule,
        }
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn schedule(&self) -> &BandwidthSchedule {
        &self.schedule
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends an already projected observation. Step indices must increase strictly.
    pub fn push(&mut self, k: usize, u: f64, y: f64) -> Result<()> {
        if k == 0 {
            return Err(Error::InvalidArgument("step indices start at 1".into()));
        }
        if let Some(last) = self.entries.last() {
            if k <= last.k {
                return Err(Error::InvalidArgument(format!(
                    "step index {k} does not follow {}",
                    last.k
                )));
            }
        }
        if !u.is_finite() || !y.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite log entry at step {k}"
            )));
        }
        let h = self.schedule.bandwidth(k);
        self.entries.push(LogEntry { k, u, y });
        self.bandwidths.push((h, self.kernel.support_radius() * h));
        Ok(())
    }

    /// Projects `x_new` on `theta_prev` and logs it as step `k`. Returns the projection.
    pub fn append(
        &mut self,
        k: usize,
        x_new: &DVector<f64>,
        y_new: f64,
        theta_prev: &DVector<f64>,
    ) -> Result<f64> {
        let u = theta_prev.dot(x_new);
        self.push(k, u, y_new)?;
        Ok(u)
    }

    pub fn estimate_at(&self, x: f64) -> PointEstimate {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut count = 0;
        for (e, &(h, reach)) in self.entries.iter().zip(&self.bandwidths) {
            let w = weight(&self.kernel, h, reach, x, e.u);
            if w > 0.0 {
                num += w * e.y;
                den += w;
                count += 1;
            }
        }
        PointEstimate {
            x,
            f_hat: (den > 0.0).then(|| num / den),
            denominator: den,
            n_contributing: count,
        }
    }

    /// `sum_k W_k(x) y_k / sum_k W_k(x)`.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        self.estimate_at(x).f_hat.ok_or_else(|| Error::NoSupport {
            x,
            nearest: self.nearest_projection(x),
        })
    }

    pub fn nearest_projection(&self, x: f64) -> Option<f64> {
        self.entries
            .iter()
            .map(|e| e.u)
            .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
    }

    /// Writes the log as CSV with header `k,u,y`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,u,y")?;
        for e in &self.entries {
            writeln!(out, "{},{:.17e},{:.17e}", e.k, e.u, e.y)?;
        }
        Ok(())
    }
}

/// Running numerators and denominators on a fixed evaluation grid.
#[derive(Debug, Clone)]
pub struct GridAccumulator {
    points: Vec<f64>,
    numerators: Vec<f64>,
    denominators: Vec<f64>,
    contributing: Vec<usize>,
    n: usize,
    kernel: KernelSpec,
    schedule: BandwidthSchedule,
}

impl GridAccumulator {
    pub fn new(points: Vec<f64>, kernel: KernelSpec, schedule: BandwidthSchedule) -> Self {
        let m = points.len();
        Self {
            points,
            numerators: vec![0.0; m],
            denominators: vec![0.0; m],
            contributing: vec![0; m],
            n: 0,
            kernel,
            schedule,
        }
    }

    /// `count` evenly spaced points on `[min, max]`, endpoints included.
    pub fn linspace(min: f64, max: f64, count: usize) -> Vec<f64> {
        match count {
            0 => Vec::new(),
            1 => vec![min],
            _ => {
                let step = (max - min) / (count - 1) as f64;
                (0..count)
                    .map(|i| if i == count - 1 { max } else { min + step * i as f64 })
                    .collect()
            }
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn denominators(&self) -> &[f64] {
        &self.denominators
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Adds step `k` with projection `u` and response `y` to every grid point.
    pub fn add(&mut self, k: usize, u: f64, y: f64) {
        let h = self.schedule.bandwidth(k);
        let reach = self.kernel.support_radius() * h;
        for (j, &x) in self.points.iter().enumerate() {
            let w = weight(&self.kernel, h, reach, x, u);
            if w > 0.0 {
                self.numerators[j] += w * y;
                self.denominators[j] += w;
                self.contributing[j] += 1;
            }
        }
        self.n += 1;
    }

    pub fn estimates(&self) -> Vec<PointEstimate> {
        (0..self.points.len())
            .map(|j| {
                let den = self.denominators[j];
                PointEstimate {
                    x: self.points[j],
                    f_hat: (den > 0.0).then(|| self.numerators[j] / den),
                    denominator: den,
                    n_contributing: self.contributing[j],
                }
            })
            .collect()
    }

    /// CSV with header `x,f_hat,denominator,n_contributing`; unsupported points have an empty `f_hat`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,f_hat,denominator,n_contributing")?;
        for e in self.estimates() {
            let f = e.f_hat.map(|v| format!("{v:.17e}")).unwrap_or_default();
            writeln!(
                out,
                "{:.17e},{},{:.17e},{}",
                e.x, f, e.denominator, e.n_contributing
            )?;
        }
        Ok(())
    }
}

/// Feeds one observation to both the log and a grid.
pub fn append(
    log: &mut ProjectionLog,
    grid: &mut GridAccumulator,
    k: usize,
    x_new: &DVector<f64>,
    y_new: f64,
    theta_prev: &DVector<f64>,
) -> Result<f64> {
    let u = log.append(k, x_new, y_new, theta_prev)?;
    grid.add(k, u, y_new);
    Ok(u)
}

/// Asymptotic standard deviation of `sqrt(n h_n) (f_n(x) - f(x))`:
/// `sqrt(sigma^2 nu^2 / ((1 + alpha) h(x)))` where `h(x)` is the density of the
/// projected covariate at `x`.
pub fn theoretical_std(sigma: f64, kernel: &KernelSpec, alpha: f64, density_at_x: f64) -> Result<f64> {
    if !(density_at_x > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "density must be positive, got {density_at_x}"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    Ok((sigma * sigma * kernel.nu2() / ((1.0 + alpha) * density_at_x)).sqrt())
}
