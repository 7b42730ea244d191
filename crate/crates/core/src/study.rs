//! Monte-Carlo studies of the estimators.
//!
//! Each replication `r` draws one stream with seed `seed ^ r` of the largest
//! requested size and evaluates the estimators at every requested size as a
//! checkpoint of that stream, so the sizes of one replication are nested
//! prefixes. Replications run on a rayon pool and are merged by index, so the
//! output does not depend on the schedule.
//!
//! Outputs are `records.csv` (one row per replication, size and evaluation
//! point; or one row per observation for the scatter study) and `summary.json`.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineOptions};
use crate::error::{Error, Result};
use crate::kernel::{epanechnikov, BandwidthSchedule, KernelSpec};
use crate::nw::theoretical_std;
use crate::sim::{replication_seed, SingleIndexModel};
use crate::sir::direction_distance;
use crate::stats;

/// Seed of the evaluation-point draw, shared by all studies.
pub const EVAL_POINT_SEED: u64 = 0x5EED_0F_E7A1;

pub const STUDY_SCHEMA_VERSION: u32 = 1;

/// Default normality points, on the true index axis.
pub const NORMALITY_POINTS: [f64; 2] = [0.0, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Scatter,
    Convergence,
    Normality,
    Rate,
}

impl std::str::FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scatter" => Ok(Self::Scatter),
            "convergence" => Ok(Self::Convergence),
            "normality" => Ok(Self::Normality),
            "rate" => Ok(Self::Rate),
            other => Err(Error::InvalidArgument(format!(
                "unknown study kind `{other}` (scatter | convergence | normality | rate)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalPoints {
    /// `count` covariate vectors drawn from the covariate law with `seed`;
    /// with `central`, only draws with `|theta'x| <= 1` are kept.
    Random { count: usize, seed: u64, central: bool },
    Covariates(Vec<Vec<f64>>),
    /// Points `t theta / |theta|^2` on the true index axis.
    Projected(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub model: SingleIndexModel,
    pub sizes: Vec<usize>,
    pub replications: usize,
    pub eval_points: EvalPoints,
    pub alpha: f64,
    pub kernel: KernelSpec,
    pub warmup: Option<usize>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub bootstrap: usize,
}

impl StudyConfig {
    /// Desk-scale defaults for `kind` on `model`.
    pub fn new(kind: StudyKind, model: SingleIndexModel) -> Self {
        let (sizes, replications, points) = match kind {
            StudyKind::Scatter => (vec![1000], 1, 0),
            StudyKind::Convergence => (vec![200, 500, 1000, 2000], 100, 10),
            StudyKind::Normality => (vec![1000], 200, 2),
            StudyKind::Rate => (vec![200, 500, 1000, 2000], 100, 10),
        };
        Self {
            kind,
            model,
            sizes,
            replications,
            eval_points: match kind {
                StudyKind::Normality => EvalPoints::Projected(NORMALITY_POINTS.to_vec()),
                _ => EvalPoints::Random {
                    count: points,
                    seed: EVAL_POINT_SEED,
                    central: false,
                },
            },
            alpha: 0.35,
            kernel: epanechnikov(),
            warmup: None,
            seed: 1,
            threads: None,
            bootstrap: 200,
        }
    }

    /// Replication counts of the original experiments (N = 1000).
    pub fn full_scale(mut self) -> Self {
        if self.kind != StudyKind::Scatter {
            self.replications = 1000;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be >= 1".into()));
        }
        if self.sizes.is_empty() {
            return Err(Error::InvalidArgument("sizes must be non-empty".into()));
        }
        if self.sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "sizes must be strictly increasing".into(),
            ));
        }
        BandwidthSchedule::new(self.alpha)?;
        let warmup = self.warmup_n();
        if self.sizes[0] <= warmup {
            return Err(Error::InsufficientData {
                needed: warmup + 1,
                got: self.sizes[0],
            });
        }
        match self.kind {
            StudyKind::Scatter if self.sizes.len() != 1 => Err(Error::InvalidArgument(
                "scatter study takes exactly one sample size".into(),
            )),
            StudyKind::Normality => {
                if self.sizes.len() != 1 {
                    return Err(Error::InvalidArgument(
                        "normality study takes exactly one sample size".into(),
                    ));
                }
                if !(self.alpha > 1.0 / 3.0) {
                    return Err(Error::InvalidArgument(format!(
                        "normality study needs alpha in (1/3, 1), got {}",
                        self.alpha
                    )));
                }
                if !(self.model.noise_std() > 0.0) {
                    return Err(Error::InvalidArgument(
                        "normality study needs noise_std > 0: the limiting standard deviation is zero"
                            .into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn warmup_n(&self) -> usize {
        self.warmup
            .unwrap_or_else(|| crate::engine::default_warmup(self.model.dim()))
    }

    fn engine_options(&self) -> Result<EngineOptions> {
        Ok(EngineOptions {
            kernel: self.kernel.clone(),
            schedule: BandwidthSchedule::new(self.alpha)?,
            warmup: self.warmup,
            ..Default::default()
        })
    }

    /// Evaluation points as covariate vectors.
    pub fn resolve_points(&self) -> Result<Vec<DVector<f64>>> {
        let p = self.model.dim();
        let theta = self.model.theta();
        match &self.eval_points {
            EvalPoints::Random {
                count,
                seed,
                central,
            } => {
                if !central {
                    return Ok(self.model.draw_covariates(*count, *seed));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut out = Vec::with_capacity(*count);
                let mut tries = 0;
                while out.len() < *count {
                    tries += 1;
                    if tries > 10_000 * (*count).max(1) {
                        return Err(Error::InvalidArgument(
                            "could not draw central evaluation points".into(),
                        ));
                    }
                    let x = self.model.draw_covariates(1, rng.random()).pop().unwrap();
                    if theta.dot(&x).abs() <= 1.0 {
                        out.push(x);
                    }
                }
                Ok(out)
            }
            EvalPoints::Covariates(pts) => pts
                .iter()
                .map(|v| {
                    if v.len() != p {
                        Err(Error::InvalidDimension(format!(
                            "evaluation point of length {}, model dimension {p}",
                            v.len()
                        )))
                    } else {
                        Ok(DVector::from_column_slice(v))
                    }
                })
                .collect(),
            EvalPoints::Projected(ts) => {
                let unit = theta / theta.norm_squared();
                Ok(ts.iter().map(|&t| &unit * t).collect())
            }
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = self.threads {
            b = b.num_threads(t);
        }
        b.build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
    }
}

/// One (replication, size, evaluation point) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub n: usize,
    pub point: usize,
    pub true_projection: f64,
    pub estimated_projection: f64,
    pub truth: f64,
    pub estimate: Option<f64>,
    pub abs_error: Option<f64>,
    /// Standardized error (normality study only).
    pub z: Option<f64>,
    pub direction_distance: f64,
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRecord {
    pub k: usize,
    pub true_projection: f64,
    pub estimated_projection: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StudyRecords {
    Scatter(Vec<ScatterRecord>),
    Replications(Vec<ReplicationRecord>),
}

impl StudyRecords {
    pub fn len(&self) -> usize {
        match self {
            StudyRecords::Scatter(r) => r.len(),
            StudyRecords::Replications(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn replications(&self) -> &[ReplicationRecord] {
        match self {
            StudyRecords::Replications(r) => r,
            StudyRecords::Scatter(_) => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterSummary {
    pub n: usize,
    pub theta_hat: Vec<f64>,
    pub direction_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub point: usize,
    pub true_projection: f64,
    pub truth: f64,
    /// 5, 25, 50, 75 and 95 percent quantiles of the estimates.
    pub quantiles: Option<[f64; 5]>,
    pub mean_estimate: Option<f64>,
    pub median_abs_error: Option<f64>,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionStats {
    pub n: usize,
    pub median_distance: f64,
    /// 90% quantile of `n * distance / ln(ln n)`.
    pub lil_envelope_q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub cells: Vec<BoxStats>,
    pub direction: Vec<DirectionStats>,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityPoint {
    pub point: usize,
    pub true_projection: f64,
    pub count: usize,
    pub missing: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub ks_statistic: f64,
    pub ks_critical_1pct: f64,
    pub ks_rejected: bool,
    pub histogram: stats::Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalitySummary {
    pub n: usize,
    pub alpha: f64,
    pub points: Vec<NormalityPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub point: usize,
    pub true_projection: f64,
    pub median_abs_error: Vec<Option<f64>>,
    pub slope: Option<f64>,
    pub slope_interval: Option<[f64; 2]>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub sizes: Vec<usize>,
    pub alpha: f64,
    pub points: Vec<RatePoint>,
    pub direction: Vec<DirectionStats>,
    pub lil_envelope_nonincreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StudySummary {
    Scatter(ScatterSummary),
    Convergence(ConvergenceSummary),
    Normality(NormalitySummary),
    Rate(RateSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub kind: StudyKind,
    pub replications: usize,
    pub sizes: Vec<usize>,
    pub seed: u64,
    pub records: StudyRecords,
    pub summary: StudySummary,
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    schema_version: u32,
    kind: StudyKind,
    replications: usize,
    sizes: &'a [usize],
    seed: u64,
    summary: &'a StudySummary,
}

impl StudyResult {
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SummaryFile {
            schema_version: STUDY_SCHEMA_VERSION,
            kind: self.kind,
            replications: self.replications,
            sizes: &self.sizes,
            seed: self.seed,
            summary: &self.summary,
        })?)
    }

    pub fn records_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        match &self.records {
            StudyRecords::Scatter(rs) => rs.iter().try_for_each(|r| w.serialize(r))?,
            StudyRecords::Replications(rs) => rs.iter().try_for_each(|r| w.serialize(r))?,
        }
        w.into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))
    }

    /// Writes `records.csv` and `summary.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let rec = dir.join("records.csv");
        fs::write(&rec, self.records_csv()?).map_err(|e| Error::io(&rec, e))?;
        let sum = dir.join("summary.json");
        fs::write(&sum, self.summary_json()?).map_err(|e| Error::io(&sum, e))?;
        Ok(())
    }
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    match cfg.kind {
        StudyKind::Scatter => scatter_study(cfg),
        StudyKind::Convergence => convergence_study(cfg),
        StudyKind::Normality => normality_study(cfg),
        StudyKind::Rate => rate_study(cfg),
    }
}

struct Checkpoint {
    n: usize,
    theta_hat: DVector<f64>,
    estimates: Vec<Option<f64>>,
}

fn run_replication(
    cfg: &StudyConfig,
    opts: &EngineOptions,
    points: &[DVector<f64>],
    rep: usize,
) -> Result<Vec<Checkpoint>> {
    let n_max = *cfg.sizes.last().unwrap();
    let sample = cfg
        .model
        .draw(n_max, replication_seed(cfg.seed, rep as u64));
    let mut engine = Engine::new(sample.dim(), opts.clone())?;
    let mut out = Vec::with_capacity(cfg.sizes.len());
    let mut next = 0;
    for (x, y) in sample.iter() {
        engine.feed(&x, y)?;
        if engine.n() == cfg.sizes[next] {
            let theta = engine.theta_hat().expect("sizes exceed warm-up").clone();
            let estimates = points
                .iter()
                .map(|x| match engine.log().evaluate(theta.dot(x)) {
                    Ok(v) => Ok(Some(v)),
                    Err(Error::NoSupport { .. }) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect::<Result<_>>()?;
            out.push(Checkpoint {
                n: engine.n(),
                theta_hat: theta,
                estimates,
            });
            next += 1;
            if next == cfg.sizes.len() {
                break;
            }
        }
    }
    Ok(out)
}

fn replication_records(
    cfg: &StudyConfig,
    points: &[DVector<f64>],
    standardize: bool,
) -> Result<Vec<ReplicationRecord>> {
    let opts = cfg.engine_options()?;
    let pool = cfg.pool()?;
    let per_rep: Vec<Vec<Checkpoint>> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| run_replication(cfg, &opts, points, r))
            .collect::<Result<_>>()
    })?;

    let theta = cfg.model.theta();
    let schedule = BandwidthSchedule::new(cfg.alpha)?;
    let mut records = Vec::with_capacity(cfg.replications * cfg.sizes.len() * points.len());
    for (rep, cps) in per_rep.into_iter().enumerate() {
        for cp in cps {
            let dd = direction_distance(&cp.theta_hat, theta)?;
            let scale = (cp.n as f64 * schedule.bandwidth(cp.n)).sqrt();
            for (j, x) in points.iter().enumerate() {
                let t = theta.dot(x);
                let t_hat = cp.theta_hat.dot(x);
                let truth = cfg.model.link().eval(t);
                let est = cp.estimates[j];
                let z = if standardize {
                    match est {
                        Some(e) => {
                            // density of the projection the smoother actually works on
                            let dens = cfg.model.covariates().projection_density(&cp.theta_hat, t_hat);
                            let sd = theoretical_std(cfg.model.noise_std(), &cfg.kernel, cfg.alpha, dens)?;
                            Some(scale * (e - truth) / sd)
                        }
                        None => None,
                    }
                } else {
                    None
                };
                records.push(ReplicationRecord {
                    replication: rep,
                    n: cp.n,
                    point: j,
                    true_projection: t,
                    estimated_projection: t_hat,
                    truth,
                    estimate: est,
                    abs_error: est.map(|e| (e - truth).abs()),
                    z,
                    direction_distance: dd,
                    missing: est.is_none(),
                });
            }
        }
    }
    Ok(records)
}

/// Projections of one stream on the true and on the final estimated direction.
pub fn scatter_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let n = cfg.sizes[0];
    let sample = cfg.model.draw(n, replication_seed(cfg.seed, 0));
    let engine = Engine::fit(&sample, cfg.engine_options()?)?;
    let theta_hat = engine.theta_hat().expect("fit warms up").clone();
    let theta = cfg.model.theta();
    let records = sample
        .iter()
        .enumerate()
        .map(|(k, (x, y))| ScatterRecord {
            k: k + 1,
            true_projection: theta.dot(&x),
            estimated_projection: theta_hat.dot(&x),
            y,
        })
        .collect();
    Ok(StudyResult {
        kind: StudyKind::Scatter,
        replications: 1,
        sizes: cfg.sizes.clone(),
        seed: cfg.seed,
        records: StudyRecords::Scatter(records),
        summary: StudySummary::Scatter(ScatterSummary {
            n,
            direction_distance: direction_distance(&theta_hat, theta)?,
            theta_hat: theta_hat.iter().copied().collect(),
        }),
    })
}

fn direction_stats(cfg: &StudyConfig, records: &[ReplicationRecord]) -> Vec<DirectionStats> {
    cfg.sizes
        .iter()
        .map(|&n| {
            // one distance per replication: take point 0 rows (or any row when there are no points)
            let mut seen = vec![false; cfg.replications];
            let mut dds = Vec::new();
            for r in records.iter().filter(|r| r.n == n) {
                if !seen[r.replication] {
                    seen[r.replication] = true;
                    dds.push(r.direction_distance);
                }
            }
            let lil = (n as f64).ln().ln();
            let env: Vec<f64> = dds.iter().map(|d| n as f64 * d / lil).collect();
            DirectionStats {
                n,
                median_distance: stats::median(&dds),
                lil_envelope_q90: stats::quantile(&env, 0.9),
            }
        })
        .collect()
}

/// Boxplot statistics of `f_n(theta_n' x)` against `f(theta' x)` per size and point.
pub fn convergence_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let points = cfg.resolve_points()?;
    if points.is_empty() {
        return Err(Error::InvalidArgument(
            "convergence study needs evaluation points".into(),
        ));
    }
    let records = replication_records(cfg, &points, false)?;
    let mut cells = Vec::new();
    for &n in &cfg.sizes {
        for j in 0..points.len() {
            let cell: Vec<&ReplicationRecord> =
                records.iter().filter(|r| r.n == n && r.point == j).collect();
            let ests: Vec<f64> = cell.iter().filter_map(|r| r.estimate).collect();
            let errs: Vec<f64> = cell.iter().filter_map(|r| r.abs_error).collect();
            let quantiles = (!ests.is_empty()).then(|| {
                let mut s = ests.clone();
                s.sort_by(f64::total_cmp);
                [0.05, 0.25, 0.5, 0.75, 0.95].map(|q| stats::quantile_sorted(&s, q))
            });
            cells.push(BoxStats {
                n,
                point: j,
                true_projection: cell[0].true_projection,
                truth: cell[0].truth,
                quantiles,
                mean_estimate: (!ests.is_empty()).then(|| stats::mean(&ests)),
                median_abs_error: (!errs.is_empty()).then(|| stats::median(&errs)),
                missing: cell.len() - ests.len(),
            });
        }
    }
    let missing = records.iter().filter(|r| r.missing).count();
    Ok(StudyResult {
        kind: StudyKind::Convergence,
        replications: cfg.replications,
        sizes: cfg.sizes.clone(),
        seed: cfg.seed,
        summary: StudySummary::Convergence(ConvergenceSummary {
            direction: direction_stats(cfg, &records),
            cells,
            missing,
        }),
        records: StudyRecords::Replications(records),
    })
}

/// Standardized errors `sqrt(n h_n) (f_n - f) / sd` and their distribution per point.
pub fn normality_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let points = cfg.resolve_points()?;
    if points.is_empty() {
        return Err(Error::InvalidArgument(
            "normality study needs evaluation points".into(),
        ));
    }
    let records = replication_records(cfg, &points, true)?;
    let n = cfg.sizes[0];
    let mut summary_points = Vec::new();
    for j in 0..points.len() {
        let cell: Vec<&ReplicationRecord> = records.iter().filter(|r| r.point == j).collect();
        let z: Vec<f64> = cell.iter().filter_map(|r| r.z).collect();
        let count = z.len();
        let ks = if count > 0 { stats::ks_standard_normal(&z) } else { f64::NAN };
        let crit = stats::ks_critical_1pct(count.max(1));
        summary_points.push(NormalityPoint {
            point: j,
            true_projection: cell[0].true_projection,
            count,
            missing: cell.len() - count,
            mean: stats::mean(&z),
            std: stats::std_dev(&z),
            skewness: stats::skewness(&z),
            excess_kurtosis: stats::excess_kurtosis(&z),
            ks_statistic: ks,
            ks_critical_1pct: crit,
            ks_rejected: !(ks <= crit),
            histogram: stats::histogram(&z, -4.0, 4.0, 16),
        });
    }
    Ok(StudyResult {
        kind: StudyKind::Normality,
        replications: cfg.replications,
        sizes: cfg.sizes.clone(),
        seed: cfg.seed,
        summary: StudySummary::Normality(NormalitySummary {
            n,
            alpha: cfg.alpha,
            points: summary_points,
        }),
        records: StudyRecords::Replications(records),
    })
}

fn median_errors(records: &[ReplicationRecord], sizes: &[usize], point: usize, reps: Option<&[usize]>) -> Vec<Option<f64>> {
    sizes
        .iter()
        .map(|&n| {
            let errs: Vec<f64> = match reps {
                None => records
                    .iter()
                    .filter(|r| r.n == n && r.point == point)
                    .filter_map(|r| r.abs_error)
                    .collect(),
                Some(idx) => {
                    let per_rep: Vec<Option<f64>> = {
                        let mut v = vec![None; records.len()];
                        for r in records.iter().filter(|r| r.n == n && r.point == point) {
                            if r.replication >= v.len() {
                                v.resize(r.replication + 1, None);
                            }
                            v[r.replication] = r.abs_error;
                        }
                        v
                    };
                    idx.iter().filter_map(|&i| per_rep.get(i).copied().flatten()).collect()
                }
            };
            (!errs.is_empty()).then(|| stats::median(&errs))
        })
        .collect()
}

fn log_log_slope(sizes: &[usize], meds: &[Option<f64>]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = sizes
        .iter()
        .zip(meds)
        .filter_map(|(&n, m)| m.filter(|v| *v > 0.0).map(|v| ((n as f64).ln(), v.ln())))
        .unzip();
    stats::ols_line(&xs, &ys).map(|(b, _)| b)
}

/// Log-log slope of the median absolute error in `n`, with a bootstrap interval
/// over replications, plus the SIR envelope `n * distance / ln ln n`.
pub fn rate_study(cfg: &StudyConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let points = cfg.resolve_points()?;
    let records = replication_records(cfg, &points, false)?;

    let mut rate_points = Vec::new();
    for (j, x) in points.iter().enumerate() {
        let meds = median_errors(&records, &cfg.sizes, j, None);
        let (slope, interval, note) = if cfg.sizes.len() < 2 {
            (
                None,
                None,
                Some("slope undefined: a single sample size gives no regression".to_string()),
            )
        } else {
            let slope = log_log_slope(&cfg.sizes, &meds);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xB0075_7A9 ^ j as u64);
            let mut boots = Vec::with_capacity(cfg.bootstrap);
            for _ in 0..cfg.bootstrap {
                let idx: Vec<usize> = (0..cfg.replications)
                    .map(|_| rng.random_range(0..cfg.replications))
                    .collect();
                if let Some(b) = log_log_slope(&cfg.sizes, &median_errors(&records, &cfg.sizes, j, Some(&idx))) {
                    boots.push(b);
                }
            }
            let interval = (!boots.is_empty())
                .then(|| [stats::quantile(&boots, 0.025), stats::quantile(&boots, 0.975)]);
            let note = slope
                .is_none()
                .then(|| "slope undefined: fewer than two sizes with positive median error".to_string());
            (slope, interval, note)
        };
        rate_points.push(RatePoint {
            point: j,
            true_projection: cfg.model.theta().dot(x),
            median_abs_error: meds,
            slope,
            slope_interval: interval,
            note,
        });
    }

    let direction = if points.is_empty() {
        Vec::new()
    } else {
        direction_stats(cfg, &records)
    };
    let nonincreasing = direction
        .windows(2)
        .all(|w| w[1].lil_envelope_q90 <= w[0].lil_envelope_q90);
    Ok(StudyResult {
        kind: StudyKind::Rate,
        replications: cfg.replications,
        sizes: cfg.sizes.clone(),
        seed: cfg.seed,
        summary: StudySummary::Rate(RateSummary {
            sizes: cfg.sizes.clone(),
            alpha: cfg.alpha,
            points: rate_points,
            direction,
            lil_envelope_nonincreasing: nonincreasing,
        }),
        records: StudyRecords::Replications(records),
    })
}
