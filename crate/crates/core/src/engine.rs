//! Sequential estimation engine.
//!
//! The first `warmup_n` observations are buffered and used for a batch
//! initialization of the SIR moments (and, unless overridden, the slice
//! boundary at their median response). Every later observation `k` is
//! processed in a fixed order:
//!
//! 1. project on the current direction, `u_k = theta_{k-1}' x_k`, and optionally
//!    predict `f_{k-1}(u_k)` from the log as it stands;
//! 2. log `(k, u_k, y_k)` and update the grid;
//! 3. advance the recursive SIR state.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{epanechnikov, BandwidthSchedule, KernelSpec};
use crate::moments::{MomentState, Slicer};
use crate::nw::{GridAccumulator, ProjectionLog};
use crate::sim::Sample;
use crate::sir::SirState;

pub const DEFAULT_ALPHA: f64 = 0.35;

/// `max(2p, 30)`.
pub fn default_warmup(p: usize) -> usize {
    (2 * p).max(30)
}

#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub kernel: KernelSpec,
    pub schedule: BandwidthSchedule,
    pub warmup: Option<usize>,
    pub boundary: Option<f64>,
    pub grid: Option<Vec<f64>>,
    pub history: bool,
    pub predict: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            kernel: epanechnikov(),
            schedule: BandwidthSchedule::new(DEFAULT_ALPHA).expect("default alpha is valid"),
            warmup: None,
            boundary: None,
            grid: None,
            history: false,
            predict: false,
        }
    }
}

impl EngineOptions {
    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.schedule = BandwidthSchedule::new(alpha)?;
        Ok(self)
    }
}

/// What happened to one fed observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    /// Buffered for the batch initialization.
    WarmingUp { k: usize },
    Streamed {
        k: usize,
        u: f64,
        /// One-step-ahead prediction `f_{k-1}(u_k)`; `None` when the log has no support at `u_k`.
        prediction: Option<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct Engine {
    opts: EngineOptions,
    dim: usize,
    warmup_n: usize,
    buffer: Vec<(DVector<f64>, f64)>,
    sir: Option<SirState>,
    slicer: Option<Slicer>,
    log: ProjectionLog,
    grid: Option<GridAccumulator>,
    n: usize,
}

impl Engine {
    pub fn new(dim: usize, opts: EngineOptions) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("dimension must be positive".into()));
        }
        let warmup_n = match opts.warmup {
            Some(w) if w < dim + 2 => {
                return Err(Error::InvalidArgument(format!(
                    "warm-up size {w} is below p + 2 = {}",
                    dim + 2
                )))
            }
            Some(w) => w,
            None => default_warmup(dim),
        };
        let log = ProjectionLog::new(opts.kernel.clone(), opts.schedule);
        let grid = opts
            .grid
            .clone()
            .map(|pts| GridAccumulator::new(pts, opts.kernel.clone(), opts.schedule));
        Ok(Self {
            opts,
            dim,
            warmup_n,
            buffer: Vec::new(),
            sir: None,
            slicer: None,
            log,
            grid,
            n: 0,
        })
    }

    /// Runs the whole sample through a fresh engine.
    pub fn fit(sample: &Sample, opts: EngineOptions) -> Result<Self> {
        let mut engine = Self::new(sample.dim(), opts)?;
        if sample.len() < engine.warmup_n {
            return Err(Error::InsufficientData {
                needed: engine.warmup_n,
                got: sample.len(),
            });
        }
        for (x, y) in sample.iter() {
            engine.feed(&x, y)?;
        }
        Ok(engine)
    }

    pub fn feed(&mut self, x: &DVector<f64>, y: f64) -> Result<Step> {
        if x.len() != self.dim {
            return Err(Error::InvalidDimension(format!(
                "observation has length {}, engine expects {}",
                x.len(),
                self.dim
            )));
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite observation at step {}",
                self.n + 1
            )));
        }
        self.n += 1;
        let k = self.n;

        let Some(sir) = self.sir.as_mut() else {
            self.buffer.push((x.clone(), y));
            if self.buffer.len() == self.warmup_n {
                self.finish_warmup()?;
            }
            return Ok(Step::WarmingUp { k });
        };
        let slicer = self.slicer.expect("slicer is set at warm-up");

        let u = sir.theta_hat().dot(x);
        let prediction = if self.opts.predict {
            match self.log.evaluate(u) {
                Ok(v) => Some(v),
                Err(Error::NoSupport { .. }) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        self.log.push(k, u, y)?;
        if let Some(g) = self.grid.as_mut() {
            g.add(k, u, y);
        }

        if sir.moments().empty_slice().is_some() {
            sir.advance_degenerate(x, y, &slicer)?;
        } else {
            sir.recursive_step(x, y, &slicer)?;
        }
        Ok(Step::Streamed { k, u, prediction })
    }

    fn finish_warmup(&mut self) -> Result<()> {
        let m = self.buffer.len();
        let mut xs = DMatrix::zeros(m, self.dim);
        let mut ys = DVector::zeros(m);
        for (i, (x, y)) in self.buffer.iter().enumerate() {
            xs.set_row(i, &x.transpose());
            ys[i] = *y;
        }
        let sample = Sample::new(xs, ys)?;
        let slicer = match self.opts.boundary {
            Some(b) => Slicer::new(b)?,
            None => Slicer::median_of(sample.responses().as_slice())?,
        };
        let moments = MomentState::warm_start(&sample, &slicer)?;
        let mut sir = SirState::from_moments(moments)?;
        if self.opts.history {
            sir = sir.with_history();
        }
        self.sir = Some(sir);
        self.slicer = Some(slicer);
        self.buffer = Vec::new();
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn warmup_n(&self) -> usize {
        self.warmup_n
    }

    pub fn is_warmed_up(&self) -> bool {
        self.sir.is_some()
    }

    pub fn options(&self) -> &EngineOptions {
        &self.opts
    }

    pub fn sir(&self) -> Option<&SirState> {
        self.sir.as_ref()
    }

    pub fn theta_hat(&self) -> Option<&DVector<f64>> {
        self.sir.as_ref().map(|s| s.theta_hat())
    }

    pub fn slicer(&self) -> Option<&Slicer> {
        self.slicer.as_ref()
    }

    pub fn log(&self) -> &ProjectionLog {
        &self.log
    }

    pub fn grid(&self) -> Option<&GridAccumulator> {
        self.grid.as_ref()
    }

    /// `f_n(theta_n' x)` for a covariate vector `x`.
    pub fn predict_covariate(&self, x: &DVector<f64>) -> Result<f64> {
        let theta = self.theta_hat().ok_or(Error::InsufficientData {
            needed: self.warmup_n,
            got: self.n,
        })?;
        self.log.evaluate(theta.dot(x))
    }

    pub fn summary(&self) -> Result<FitSummary> {
        let sir = self.sir.as_ref().ok_or(Error::InsufficientData {
            needed: self.warmup_n,
            got: self.n,
        })?;
        Ok(FitSummary {
            schema_version: FIT_SCHEMA_VERSION,
            n: self.n,
            theta_hat: sir.theta_hat().iter().copied().collect(),
            slice_counts: sir.moments().slice_counts(),
            boundary: self.slicer.expect("set with sir").boundary,
            warmup_n: self.warmup_n,
            alpha: self.opts.schedule.alpha(),
            kernel: self.opts.kernel.name().to_string(),
        })
    }
}

pub const FIT_SCHEMA_VERSION: u32 = 1;

/// JSON output of `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub schema_version: u32,
    pub n: usize,
    pub theta_hat: Vec<f64>,
    pub slice_counts: [usize; 2],
    pub boundary: f64,
    pub warmup_n: usize,
    pub alpha: f64,
    pub kernel: String,
}
