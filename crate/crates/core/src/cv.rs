//! Predictive cross-validation of the bandwidth exponent.
//!
//! `CV(alpha) = sum_k (Y_k - f_{k-1}(theta_{k-1}' X_k))^2` over the streamed
//! observations after warm-up. Predictions without kernel support are skipped
//! and counted rather than penalized.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineOptions, Step};
use crate::error::{Error, Result};
use crate::kernel::BandwidthSchedule;
use crate::sim::Sample;

/// Skip fractions above this raise the per-alpha warning flag.
pub const SKIP_WARNING_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub alpha: f64,
    pub score: f64,
    pub counted: usize,
    pub skipped: usize,
}

/// One pass of the sequential engine at exponent `alpha`.
pub fn cv_score(sample: &Sample, alpha: f64, base: &EngineOptions) -> Result<CvScore> {
    let opts = EngineOptions {
        schedule: BandwidthSchedule::new(alpha)?,
        predict: true,
        grid: None,
        history: false,
        ..base.clone()
    };
    let mut engine = Engine::new(sample.dim(), opts)?;
    if sample.len() <= engine.warmup_n() {
        return Err(Error::InsufficientData {
            needed: engine.warmup_n() + 1,
            got: sample.len(),
        });
    }
    let mut score = 0.0;
    let mut counted = 0;
    let mut skipped = 0;
    for (x, y) in sample.iter() {
        if let Step::Streamed { prediction, .. } = engine.feed(&x, y)? {
            match prediction {
                Some(p) => {
                    score += (y - p).powi(2);
                    counted += 1;
                }
                None => skipped += 1,
            }
        }
    }
    Ok(CvScore {
        alpha,
        score,
        counted,
        skipped,
    })
}

pub const CV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub schema_version: u32,
    pub n: usize,
    pub warmup_n: usize,
    pub grid: Vec<f64>,
    pub cv_scores: Vec<f64>,
    pub counted: Vec<usize>,
    pub skipped: Vec<usize>,
    pub skip_warning: Vec<bool>,
    pub argmin_index: usize,
    pub argmin: f64,
}

impl CvReport {
    /// Scores fall then rise around the argmin (weakly), with the argmin strictly inside the grid.
    pub fn is_unimodal(&self) -> bool {
        let i = self.argmin_index;
        if i == 0 || i + 1 == self.cv_scores.len() {
            return false;
        }
        let s = &self.cv_scores;
        s[..=i].windows(2).all(|w| w[1] <= w[0]) && s[i..].windows(2).all(|w| w[1] >= w[0])
    }
}

/// `min, min + step, ...` up to `max` (inclusive within rounding).
pub fn alpha_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= min) {
        return Err(Error::InvalidArgument(format!(
            "bad alpha grid [{min}, {max}] step {step}"
        )));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    let grid: Vec<f64> = (0..count)
        .map(|i| ((min + step * i as f64) * 1e12).round() / 1e12)
        .collect();
    if let Some(a) = grid.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "alpha grid value {a} is outside (0,1)"
        )));
    }
    Ok(grid)
}

/// 0.10 to 0.60 in steps of 0.025.
pub fn default_grid() -> Vec<f64> {
    alpha_grid(0.10, 0.60, 0.025).expect("default grid is valid")
}

/// Evaluates the criterion on every grid value (in parallel) and picks the
/// minimizer; ties go to the smaller alpha, then to the earlier grid entry.
/// Grid values without a single counted prediction cannot win.
pub fn select_alpha(sample: &Sample, grid: &[f64], base: &EngineOptions) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("alpha grid is empty".into()));
    }
    let scores: Vec<CvScore> = grid
        .par_iter()
        .map(|&a| cv_score(sample, a, base))
        .collect::<Result<_>>()?;
    report_from_scores(sample, base, scores)
}

pub(crate) fn report_from_scores(
    sample: &Sample,
    base: &EngineOptions,
    scores: Vec<CvScore>,
) -> Result<CvReport> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if s.counted == 0 {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = &scores[b];
                if s.score < cur.score || (s.score == cur.score && s.alpha < cur.alpha) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    let warmup_n = base
        .warmup
        .unwrap_or_else(|| crate::engine::default_warmup(sample.dim()));
    let best = best.ok_or(Error::InsufficientData {
        needed: warmup_n + 2,
        got: sample.len(),
    })?;
    Ok(CvReport {
        schema_version: CV_SCHEMA_VERSION,
        n: sample.len(),
        warmup_n,
        grid: scores.iter().map(|s| s.alpha).collect(),
        cv_scores: scores.iter().map(|s| s.score).collect(),
        counted: scores.iter().map(|s| s.counted).collect(),
        skipped: scores.iter().map(|s| s.skipped).collect(),
        skip_warning: scores
            .iter()
            .map(|s| s.skipped as f64 > SKIP_WARNING_FRACTION * (s.counted + s.skipped) as f64)
            .collect(),
        argmin_index: best,
        argmin: scores[best].alpha,
    })
}
