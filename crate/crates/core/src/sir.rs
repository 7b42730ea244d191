//! Two-slice sliced inverse regression, batch and recursive.
//!
//! With two slices the EDR direction estimate has the closed form
//! `S_n (z_{1,n} - z_{2,n})`. The recursive estimator updates it per
//! observation from the pre-update inverse covariance, mean and slice mean,
//! and agrees with the batch estimator on every prefix up to rounding.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::moments::{batch_moments, MomentState, Slicer};
use crate::sim::Sample;

/// Batch estimator computed from scratch on `sample`.
pub fn batch_sir(sample: &Sample, slicer: &Slicer) -> Result<DVector<f64>> {
    Ok(batch_moments(sample, slicer)?.sir_direction())
}

/// `1 - cos^2(a, b)`; zero iff `a` and `b` are collinear.
pub fn direction_distance(a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidDimension(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.norm_squared(), b.norm_squared());
    if !(na > 0.0) || !(nb > 0.0) {
        return Err(Error::InvalidArgument(
            "direction_distance needs non-zero vectors".into(),
        ));
    }
    let d = a.dot(b);
    Ok((1.0 - d * d / (na * nb)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone)]
pub struct SirState {
    moments: MomentState,
    theta_hat: DVector<f64>,
    history: Option<Vec<(usize, DVector<f64>)>>,
}

impl SirState {
    /// Starts from a warmed-up moment state; the direction is recomputed from it.
    pub fn from_moments(moments: MomentState) -> Result<Self> {
        if !moments.is_warmed_up() {
            return Err(Error::InvalidArgument(
                "SIR state needs a warmed-up moment state".into(),
            ));
        }
        let theta_hat = moments.sir_direction();
        Ok(Self {
            moments,
            theta_hat,
            history: None,
        })
    }

    /// Batch warm-up on `sample`; both slices must be non-empty.
    pub fn warm_up(sample: &Sample, slicer: &Slicer) -> Result<Self> {
        Self::from_moments(batch_moments(sample, slicer)?)
    }

    /// Records `(n, theta_hat)` after every step from now on.
    pub fn with_history(mut self) -> Self {
        self.history = Some(vec![(self.moments.n(), self.theta_hat.clone())]);
        self
    }

    pub fn moments(&self) -> &MomentState {
        &self.moments
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn n(&self) -> usize {
        self.moments.n()
    }

    pub fn history(&self) -> Option<&[(usize, DVector<f64>)]> {
        self.history.as_deref()
    }

    /// One recursive update with the observation `(x_new, y_new)`.
    pub fn recursive_step(&mut self, x_new: &DVector<f64>, y_new: f64, slicer: &Slicer) -> Result<()> {
        if let Some(slice) = self.moments.empty_slice() {
            return Err(Error::EmptySlice { slice });
        }
        let terms = self.moments.riccati_terms(x_new)?;
        let h = slicer.slice_of(y_new);
        let n = terms.n as f64;
        let nh_prev = self.moments.slice_count(h) as f64;

        let phi_h = x_new - self.moments.slice_mean(h);
        let s_phi = &terms.inv_cov_phi;
        let denom = n + terms.rho;
        // (S - S phi phi' S / (n + rho)) phi_h
        let corrected = self.moments.inv_cov() * &phi_h - s_phi * (s_phi.dot(&phi_h) / denom);

        let mut theta = &self.theta_hat * (n / (n - 1.0));
        theta.axpy(
            -n / ((n - 1.0) * denom) * terms.phi.dot(&self.theta_hat),
            s_phi,
            1.0,
        );
        theta.axpy(
            -h.parity() * n / ((nh_prev + 1.0) * (n - 1.0)),
            &corrected,
            1.0,
        );
        self.theta_hat = theta;

        self.moments.apply_riccati(&terms);
        self.moments.slice_update(x_new, y_new, slicer);
        if let Some(hist) = self.history.as_mut() {
            hist.push((self.moments.n(), self.theta_hat.clone()));
        }
        Ok(())
    }

    /// Advances only the moments while a slice is still empty; the direction is
    /// held, then recomputed from the moments once both slices are populated.
    pub(crate) fn advance_degenerate(&mut self, x_new: &DVector<f64>, y_new: f64, slicer: &Slicer) -> Result<()> {
        self.moments.update(x_new, y_new, slicer)?;
        if self.moments.empty_slice().is_none() {
            self.theta_hat = self.moments.sir_direction();
        }
        if let Some(hist) = self.history.as_mut() {
            hist.push((self.moments.n(), self.theta_hat.clone()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::model_m;

    fn rel_max(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        let scale = b.amax();
        (a - b).amax() / scale
    }

    #[test]
    fn direction_distance_basics() {
        let t = model_m(10).unwrap().theta().clone();
        assert_eq!(direction_distance(&t, &t).unwrap(), 0.0);
        assert!(direction_distance(&t, &(&t * -2.0)).unwrap() < 1e-15);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(direction_distance(&e1, &e2).unwrap(), 1.0);
        assert!(matches!(
            direction_distance(&e1, &DVector::zeros(2)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn recursion_tracks_batch_estimator() {
        let model = model_m(10).unwrap();
        let s = model.draw(300, 17);
        let slicer = Slicer::median_of(&s.responses().as_slice()[..30]).unwrap();
        let mut st = SirState::warm_up(&s.head(30), &slicer).unwrap();
        for k in 30..300 {
            st.recursive_step(&s.row(k), s.response(k), &slicer).unwrap();
            let batch = batch_sir(&s.head(k + 1), &slicer).unwrap();
            let err = rel_max(st.theta_hat(), &batch);
            assert!(err <= 1e-8, "prefix {}: rel err {err}", k + 1);
        }
    }

    #[test]
    fn minimal_sample_still_estimates() {
        let s = model_m(4).unwrap().draw(6, 2);
        let slicer = Slicer::median_of(s.responses().as_slice()).unwrap();
        let theta = batch_sir(&s, &slicer).unwrap();
        assert_eq!(theta.len(), 4);
        assert!(theta.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn step_at_the_means_is_a_pure_rescaling() {
        let s = model_m(5).unwrap().draw(40, 3);
        let slicer = Slicer::median_of(s.responses().as_slice()).unwrap();
        let mut st = SirState::warm_up(&s, &slicer).unwrap();
        // move slice-1 mean onto the global mean so both phi vectors vanish
        let mean = st.moments().mean().clone();
        let mut moments = st.moments().clone();
        let snap = {
            let mut sn = moments.snapshot(&slicer);
            sn.slice_means[0] = mean.iter().copied().collect();
            sn
        };
        moments = snap.restore().unwrap().0;
        st = SirState::from_moments(moments).unwrap();
        let before = st.theta_hat().clone();
        let y_in_first = slicer.boundary - 1.0;
        st.recursive_step(&mean, y_in_first, &slicer).unwrap();
        let expected = before * (41.0 / 40.0);
        assert!(rel_max(st.theta_hat(), &expected) < 1e-14);
    }

    #[test]
    fn empty_slice_refuses_to_step() {
        let s = model_m(4).unwrap().draw(20, 4);
        let slicer = Slicer::new(1e9).unwrap();
        let moments = MomentState::warm_start(&s, &slicer).unwrap();
        let mut st = SirState::from_moments(moments).unwrap();
        let x = s.row(0);
        assert!(matches!(
            st.recursive_step(&x, 0.0, &slicer),
            Err(Error::EmptySlice { .. })
        ));
    }

    #[test]
    fn degenerate_stream_recovers_once_both_slices_fill() {
        let model = model_m(4).unwrap();
        let s = model.draw(60, 12);
        let slicer = Slicer::new(1e9).unwrap();
        let warm = MomentState::warm_start(&s.head(20), &slicer).unwrap();
        let mut st = SirState::from_moments(warm).unwrap();
        st.advance_degenerate(&s.row(20), 1e10, &slicer).unwrap();
        assert!(st.moments().empty_slice().is_none());
        let expected = st.moments().sir_direction();
        assert_eq!(st.theta_hat(), &expected);
        st.recursive_step(&s.row(21), s.response(21), &slicer).unwrap();
    }

    #[test]
    fn history_records_each_step() {
        let s = model_m(4).unwrap().draw(40, 9);
        let slicer = Slicer::median_of(&s.responses().as_slice()[..20]).unwrap();
        let mut st = SirState::warm_up(&s.head(20), &slicer).unwrap().with_history();
        for k in 20..40 {
            st.recursive_step(&s.row(k), s.response(k), &slicer).unwrap();
        }
        let hist = st.history().unwrap();
        assert_eq!(hist.len(), 21);
        assert_eq!(hist[0].0, 20);
        assert_eq!(hist.last().unwrap().0, 40);
        assert_eq!(&hist.last().unwrap().1, st.theta_hat());
    }
}
