//! Recursive first and second moments and two-slice statistics.
//!
//! The inverse covariance is propagated with the rank-one Riccati recursion
//!
//! ```text
//! S_n = n/(n-1) * ( S_{n-1} - S_{n-1} phi phi' S_{n-1} / (n + rho) ),
//! phi = x_n - mean_{n-1},   rho = phi' S_{n-1} phi,
//! ```
//!
//! where `S_n` is the inverse of the `1/n`-normalized covariance of the first
//! `n` covariates. Slice means are plain running means over the covariates
//! whose response fell in the slice.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Sample;

/// Smallest admissible ratio of extreme singular values at warm-up.
pub const SINGULARITY_TOLERANCE: f64 = 1e-10;

/// `n + rho` at or below this value aborts the Riccati update.
pub const BREAKDOWN_TOLERANCE: f64 = 1e-12;

/// The inverse covariance is re-symmetrized after this many updates.
pub const RESYMMETRIZE_EVERY: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SliceId {
    /// `y <= boundary`
    First,
    /// `y > boundary`
    Second,
}

impl SliceId {
    pub fn index(self) -> usize {
        match self {
            SliceId::First => 0,
            SliceId::Second => 1,
        }
    }

    /// `(-1)^h` with slices numbered 1 and 2.
    pub fn parity(self) -> f64 {
        match self {
            SliceId::First => -1.0,
            SliceId::Second => 1.0,
        }
    }
}

impl fmt::Display for SliceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SliceId::First => f.write_str("1 (y <= boundary)"),
            SliceId::Second => f.write_str("2 (y > boundary)"),
        }
    }
}

/// Two-slice partition of the response range at a fixed boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slicer {
    pub boundary: f64,
}

impl Slicer {
    pub fn new(boundary: f64) -> Result<Self> {
        if !boundary.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "slice boundary must be finite, got {boundary}"
            )));
        }
        Ok(Self { boundary })
    }

    /// Boundary at the empirical median of `responses`.
    pub fn median_of(responses: &[f64]) -> Result<Self> {
        if responses.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let mut sorted = responses.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let median = if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        };
        Self::new(median)
    }

    /// Every real (and NaN, which lands in the second slice) maps to exactly one slice.
    #[inline]
    pub fn slice_of(&self, y: f64) -> SliceId {
        if y <= self.boundary {
            SliceId::First
        } else {
            SliceId::Second
        }
    }
}

/// Quantities of one Riccati step computed from the pre-update state.
#[derive(Debug, Clone)]
pub struct RiccatiTerms {
    /// `x_n - mean_{n-1}`
    pub phi: DVector<f64>,
    /// `S_{n-1} phi`
    pub inv_cov_phi: DVector<f64>,
    /// `phi' S_{n-1} phi`
    pub rho: f64,
    /// Step index after the update.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    n: usize,
    mean: DVector<f64>,
    inv_cov: DMatrix<f64>,
    slice_counts: [usize; 2],
    slice_means: [DVector<f64>; 2],
    warmed_up: bool,
    since_symmetrize: usize,
}

/// `1/n`-normalized covariance and mean of the rows of `x`.
pub fn batch_covariance(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean: DVector<f64> = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / n;
    (mean, cov)
}

fn invert_covariance(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(cov.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0f64), |(lo, hi), v| {
            (lo.min(v.abs()), hi.max(v.abs()))
        });
    let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(ratio > SINGULARITY_TOLERANCE) {
        return Err(Error::SingularMatrix { ratio });
    }
    let chol = Cholesky::new(cov.clone()).ok_or(Error::SingularMatrix { ratio })?;
    let inv = chol.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Exact batch moments of `sample`. Fails when a slice is empty.
pub fn batch_moments(sample: &Sample, slicer: &Slicer) -> Result<MomentState> {
    let state = MomentState::warm_start(sample, slicer)?;
    if let Some(slice) = state.empty_slice() {
        return Err(Error::EmptySlice { slice });
    }
    Ok(state)
}

impl MomentState {
    /// A state that has seen nothing yet and cannot be updated recursively.
    pub fn empty(p: usize) -> Self {
        Self {
            n: 0,
            mean: DVector::zeros(p),
            inv_cov: DMatrix::zeros(p, p),
            slice_counts: [0, 0],
            slice_means: [DVector::zeros(p), DVector::zeros(p)],
            warmed_up: false,
            since_symmetrize: 0,
        }
    }

    /// Batch initialization that tolerates an empty slice.
    ///
    /// The mean of a slice with no observations is held at the batch mean of
    /// all covariates (so its centered mean is zero) until the slice is first hit.
    pub fn warm_start(sample: &Sample, slicer: &Slicer) -> Result<Self> {
        let (n, p) = (sample.len(), sample.dim());
        if n < p + 2 {
            return Err(Error::InsufficientData {
                needed: p + 2,
                got: n,
            });
        }
        let (mean, cov) = batch_covariance(sample.covariates());
        let inv_cov = invert_covariance(&cov)?;

        let mut sums = [DVector::zeros(p), DVector::zeros(p)];
        let mut counts = [0usize; 2];
        for (x, y) in sample.iter() {
            let h = slicer.slice_of(y).index();
            sums[h] += x;
            counts[h] += 1;
        }
        let slice_means = [0, 1].map(|h| {
            if counts[h] > 0 {
                &sums[h] / counts[h] as f64
            } else {
                mean.clone()
            }
        });
        Ok(Self {
            n,
            mean,
            inv_cov,
            slice_counts: counts,
            slice_means,
            warmed_up: true,
            since_symmetrize: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn inv_cov(&self) -> &DMatrix<f64> {
        &self.inv_cov
    }

    pub fn slice_counts(&self) -> [usize; 2] {
        self.slice_counts
    }

    pub fn slice_count(&self, h: SliceId) -> usize {
        self.slice_counts[h.index()]
    }

    pub fn slice_mean(&self, h: SliceId) -> &DVector<f64> {
        &self.slice_means[h.index()]
    }

    pub fn slice_means(&self) -> &[DVector<f64>; 2] {
        &self.slice_means
    }

    pub fn is_warmed_up(&self) -> bool {
        self.warmed_up
    }

    /// A slice that has not received any observation, if any. Its mean is flagged as held.
    pub fn empty_slice(&self) -> Option<SliceId> {
        [SliceId::First, SliceId::Second]
            .into_iter()
            .find(|h| self.slice_counts[h.index()] == 0)
    }

    /// Centered slice mean `m_h - mean`.
    pub fn centered_slice_mean(&self, h: SliceId) -> DVector<f64> {
        &self.slice_means[h.index()] - &self.mean
    }

    /// `S_n (z_1 - z_2)`, the SIR direction implied by the current moments.
    pub fn sir_direction(&self) -> DVector<f64> {
        &self.inv_cov * (&self.slice_means[0] - &self.slice_means[1])
    }

    pub fn riccati_terms(&self, x_new: &DVector<f64>) -> Result<RiccatiTerms> {
        if !self.warmed_up {
            return Err(Error::InvalidArgument(
                "moment state must be warmed up before recursive updates".into(),
            ));
        }
        if x_new.len() != self.dim() {
            return Err(Error::InvalidDimension(format!(
                "observation has length {}, state has dimension {}",
                x_new.len(),
                self.dim()
            )));
        }
        let phi = x_new - &self.mean;
        let inv_cov_phi = &self.inv_cov * &phi;
        let rho = phi.dot(&inv_cov_phi);
        let n = self.n + 1;
        let denom = n as f64 + rho;
        if !(denom > BREAKDOWN_TOLERANCE) {
            return Err(Error::NumericalBreakdown { value: denom });
        }
        Ok(RiccatiTerms {
            phi,
            inv_cov_phi,
            rho,
            n,
        })
    }

    /// Applies precomputed Riccati terms: advances `n`, the mean and the inverse covariance.
    pub fn apply_riccati(&mut self, terms: &RiccatiTerms) {
        let n = terms.n as f64;
        let scale = n / (n - 1.0);
        let k = scale / (n + terms.rho);
        // S <- scale * S - k * (S phi)(S phi)'
        self.inv_cov
            .ger(-k, &terms.inv_cov_phi, &terms.inv_cov_phi, scale);
        self.mean.axpy(1.0 / n, &terms.phi, 1.0);
        self.n = terms.n;

        self.since_symmetrize += 1;
        if self.since_symmetrize >= RESYMMETRIZE_EVERY {
            self.symmetrize();
        }
    }

    pub fn symmetrize(&mut self) {
        let t = self.inv_cov.transpose();
        self.inv_cov += t;
        self.inv_cov *= 0.5;
        self.since_symmetrize = 0;
    }

    /// Riccati step: mean and inverse covariance only. Slice statistics are untouched.
    pub fn riccati_update(&mut self, x_new: &DVector<f64>) -> Result<f64> {
        let terms = self.riccati_terms(x_new)?;
        self.apply_riccati(&terms);
        Ok(terms.rho)
    }

    /// Adds `x_new` to the running mean of the slice containing `y_new`.
    pub fn slice_update(&mut self, x_new: &DVector<f64>, y_new: f64, slicer: &Slicer) -> SliceId {
        let h = slicer.slice_of(y_new);
        let i = h.index();
        self.slice_counts[i] += 1;
        let c = self.slice_counts[i] as f64;
        let m = &mut self.slice_means[i];
        *m += (x_new - &*m) / c;
        h
    }

    /// Full observation update: Riccati step followed by the slice step.
    pub fn update(&mut self, x_new: &DVector<f64>, y_new: f64, slicer: &Slicer) -> Result<f64> {
        let rho = self.riccati_update(x_new)?;
        self.slice_update(x_new, y_new, slicer);
        Ok(rho)
    }

    pub fn snapshot(&self, slicer: &Slicer) -> MomentSnapshot {
        MomentSnapshot {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            n: self.n,
            mean: self.mean.iter().copied().collect(),
            inv_cov: self.inv_cov.transpose().iter().copied().collect(),
            slice_counts: self.slice_counts,
            slice_means: self
                .slice_means
                .clone()
                .map(|m| m.iter().copied().collect()),
            boundary: slicer.boundary,
        }
    }
}

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

/// JSON form of a warmed-up moment state. `inv_cov` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSnapshot {
    pub schema_version: u32,
    pub n: usize,
    pub mean: Vec<f64>,
    pub inv_cov: Vec<f64>,
    pub slice_counts: [usize; 2],
    pub slice_means: [Vec<f64>; 2],
    pub boundary: f64,
}

impl MomentSnapshot {
    pub fn restore(&self) -> Result<(MomentState, Slicer)> {
        let p = self.mean.len();
        if self.inv_cov.len() != p * p || self.slice_means.iter().any(|m| m.len() != p) {
            return Err(Error::InvalidDimension(
                "snapshot arrays disagree on the dimension".into(),
            ));
        }
        if self.slice_counts[0] + self.slice_counts[1] != self.n {
            return Err(Error::InvalidArgument(
                "snapshot slice counts do not sum to n".into(),
            ));
        }
        let state = MomentState {
            n: self.n,
            mean: DVector::from_column_slice(&self.mean),
            inv_cov: DMatrix::from_row_slice(p, p, &self.inv_cov),
            slice_counts: self.slice_counts,
            slice_means: self.slice_means.clone().map(|m| DVector::from_vec(m)),
            warmed_up: true,
            since_symmetrize: 0,
        };
        Ok((state, Slicer::new(self.boundary)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::model_m;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    fn sample_1d(xs: &[f64], ys: &[f64]) -> Sample {
        Sample::new(
            DMatrix::from_column_slice(xs.len(), 1, xs),
            DVector::from_column_slice(ys),
        )
        .unwrap()
    }

    #[test]
    fn one_dimensional_batch_moments() {
        let s = sample_1d(&[1.0, 2.0, 3.0], &[0.0, 1.0, 0.5]);
        let st = batch_moments(&s, &Slicer::new(0.5).unwrap()).unwrap();
        assert!((st.inv_cov()[(0, 0)] - 1.5).abs() < 1e-14);
        assert_eq!(st.slice_counts(), [2, 1]);
        assert!((st.slice_mean(SliceId::First)[0] - 2.0).abs() < 1e-15);
        assert!((st.slice_mean(SliceId::Second)[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn identical_rows_are_singular() {
        let x = DMatrix::from_element(8, 2, 3.0);
        let y = DVector::from_iterator(8, (0..8).map(|i| i as f64));
        let s = Sample::new(x, y).unwrap();
        match batch_moments(&s, &Slicer::new(3.5).unwrap()) {
            Err(Error::SingularMatrix { ratio }) => assert_eq!(ratio, 0.0),
            other => panic!("expected singular-matrix error, got {other:?}"),
        }
    }

    #[test]
    fn all_responses_in_first_slice_is_an_empty_slice_error() {
        let s = model_m(4).unwrap().draw(20, 1);
        let slicer = Slicer::new(1e9).unwrap();
        assert!(matches!(
            batch_moments(&s, &slicer),
            Err(Error::EmptySlice {
                slice: SliceId::Second
            })
        ));
        let held = MomentState::warm_start(&s, &slicer).unwrap();
        assert_eq!(held.empty_slice(), Some(SliceId::Second));
        assert_eq!(held.slice_mean(SliceId::Second), held.mean());
    }

    #[test]
    fn too_few_rows_is_insufficient_data() {
        let s = model_m(4).unwrap().draw(5, 1);
        assert!(matches!(
            batch_moments(&s, &Slicer::new(0.0).unwrap()),
            Err(Error::InsufficientData { needed: 6, got: 5 })
        ));
    }

    #[test]
    fn single_riccati_step_matches_direct_inverse() {
        let model = model_m(4).unwrap();
        let s = model.draw(6, 99);
        // p = 2 stream built from the first two coordinates
        let x2 = s.covariates().columns(0, 2).into_owned();
        let s = Sample::new(x2, s.responses().clone()).unwrap();
        let slicer = Slicer::new(0.0).unwrap();
        let mut st = MomentState::warm_start(&s.head(5), &slicer).unwrap();
        st.riccati_update(&s.row(5)).unwrap();
        let (_, cov6) = batch_covariance(s.covariates());
        let direct = cov6.try_inverse().unwrap();
        let err = max_abs(&(st.inv_cov() - &direct));
        assert!(err <= 1e-10, "error {err}");
    }

    #[test]
    fn update_at_the_mean_rescales_exactly() {
        let s = model_m(5).unwrap().draw(40, 5);
        let slicer = Slicer::new(0.0).unwrap();
        let mut st = MomentState::warm_start(&s, &slicer).unwrap();
        let before = st.inv_cov().clone();
        let mean = st.mean().clone();
        let rho = st.riccati_update(&mean).unwrap();
        assert_eq!(rho, 0.0);
        let expected = before * (41.0 / 40.0);
        assert!(max_abs(&(st.inv_cov() - expected)) <= 1e-15 * max_abs(st.inv_cov()));
        assert_eq!(st.mean(), &mean);
    }

    #[test]
    fn snapshot_roundtrips_through_json() {
        let s = model_m(4).unwrap().draw(30, 8);
        let slicer = Slicer::median_of(s.responses().as_slice()).unwrap();
        let st = batch_moments(&s, &slicer).unwrap();
        let json = serde_json::to_string(&st.snapshot(&slicer)).unwrap();
        let back: MomentSnapshot = serde_json::from_str(&json).unwrap();
        let (restored, sl) = back.restore().unwrap();
        assert_eq!(sl, slicer);
        assert_eq!(restored.n(), st.n());
        assert_eq!(restored.inv_cov(), st.inv_cov());
        assert_eq!(restored.slice_means(), st.slice_means());
    }

    #[test]
    fn median_slicer_splits_evenly() {
        let sl = Slicer::median_of(&[3.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(sl.boundary, 2.5);
        assert_eq!(sl.slice_of(2.5), SliceId::First);
        assert_eq!(sl.slice_of(2.6), SliceId::Second);
        assert_eq!(Slicer::median_of(&[5.0, 1.0, 3.0]).unwrap().boundary, 3.0);
    }
}
