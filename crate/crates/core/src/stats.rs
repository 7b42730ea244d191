//! Small descriptive statistics used by the studies.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

fn central_moment(v: &[f64], k: i32) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(k)).sum::<f64>() / v.len() as f64
}

/// Moment skewness `m3 / m2^{3/2}`.
pub fn skewness(v: &[f64]) -> f64 {
    central_moment(v, 3) / central_moment(v, 2).powf(1.5)
}

/// `m4 / m2^2 - 3`.
pub fn excess_kurtosis(v: &[f64]) -> f64 {
    central_moment(v, 4) / central_moment(v, 2).powi(2) - 3.0
}

/// Linear-interpolation quantile of sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, q)
}

pub fn median(v: &[f64]) -> f64 {
    quantile(v, 0.5)
}

/// Kolmogorov-Smirnov distance between the empirical law of `v` and N(0,1).
pub fn ks_standard_normal(v: &[f64]) -> f64 {
    let normal = Normal::standard();
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = normal.cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the KS distance for `n` observations.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn ols_line(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Values outside the outer edges.
    pub outside: usize,
}

pub fn histogram(v: &[f64], lo: f64, hi: f64, bins: usize) -> Histogram {
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; bins];
    let mut outside = 0;
    for &x in v {
        if x < lo || x > hi || !x.is_finite() {
            outside += 1;
            continue;
        }
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram {
        edges,
        counts,
        outside,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_a_small_sample() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&v), 2.5);
        assert!((std_dev(&v) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(skewness(&v).abs() < 1e-15);
        // m2 = 1.25, m4 = 2.5625
        assert!((excess_kurtosis(&v) - (2.5625 / 1.5625 - 3.0)).abs() < 1e-14);
    }

    #[test]
    fn quantiles() {
        let v = [3.0, 1.0, 2.0, 5.0, 4.0];
        assert_eq!(median(&v), 3.0);
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert_eq!(quantile(&v, 0.1), 1.4);
        assert_eq!(quantile(&[7.0], 0.95), 7.0);
    }

    #[test]
    fn ks_distance_of_quantile_grid_is_small() {
        let normal = Normal::standard();
        let v: Vec<f64> = (1..=500)
            .map(|i| normal.inverse_cdf((i as f64 - 0.5) / 500.0))
            .collect();
        let d = ks_standard_normal(&v);
        assert!(d <= 0.5 / 500.0 + 1e-9, "{d}");
        let shifted: Vec<f64> = v.iter().map(|x| x + 1.0).collect();
        assert!(ks_standard_normal(&shifted) > ks_critical_1pct(500));
    }

    #[test]
    fn ols_recovers_a_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (b, a) = ols_line(&x, &y).unwrap();
        assert!((b + 0.5).abs() < 1e-15 && (a - 2.0).abs() < 1e-15);
        assert!(ols_line(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn histogram_counts() {
        let h = histogram(&[-5.0, -0.5, 0.0, 0.5, 1.0, 9.0], -1.0, 1.0, 2);
        assert_eq!(h.counts, vec![1, 3]);
        assert_eq!(h.outside, 2);
    }
}
