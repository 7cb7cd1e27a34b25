//! Decentralized Kalman filter with feedback.
//!
//! A [`FilterBank`] keeps the master estimate `(m, M)`. Every cycle each local
//! filter folds its own measurements into the shared prior in information
//! form, the master fuses the local posteriors
//!
//! ```text
//! P⁻¹ = Σ Pᵢ⁻¹ − (n−1) M⁻¹
//! x̂   = P [Σ Pᵢ⁻¹ x̂ᵢ − (n−1) M⁻¹ m]
//! ```
//!
//! and the fused estimate is fed back as the next prior. Filters without a
//! measurement in a cycle drop out of the sums.
//!
//! [`centralized_update`] is a stacked-measurement EKF in covariance form,
//! used as the reference the fused result must reproduce.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::dynamics::{self, DynamicsError, ProcessNoise, Variant, VehicleParams};
use crate::geometry::wrap_angle;
use crate::linalg::{self, block_diag, spd_inverse, symmetrize, vstack, vstack_vec};
use crate::measurement::{MeasurementError, SensorKind};

/// Symmetry tolerance of a valid covariance after symmetrization.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("prior covariance is singular or not positive definite")]
    SingularPrior,
    #[error("measurement noise covariance is not positive definite")]
    IndefiniteNoise,
    #[error("fused precision is not positive definite; local estimates are inconsistent")]
    IndefiniteFusedPrecision,
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("posterior covariance lost positive definiteness")]
    IndefinitePosterior,
    #[error("no local estimates to fuse")]
    NoEstimates,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid state estimate: {0}")]
    InvalidEstimate(String),
    #[error("sensor kind {0:?} is subscribed by more than one local filter")]
    OverlappingSubscription(SensorKind),
    #[error("no local filter subscribes to {0:?}")]
    Unrouted(SensorKind),
    #[error("time step {0} must be positive")]
    InvalidTimeStep(f64),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
}

/// Mean and covariance of a Gaussian state estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEstimate {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl StateEstimate {
    /// Symmetrizes `covariance` and checks shape, finiteness and definiteness.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self, FilterError> {
        let est = Self {
            covariance: symmetrize(&covariance),
            mean,
        };
        est.validate()?;
        Ok(est)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let n = self.mean.len();
        if self.covariance.shape() != (n, n) {
            return Err(FilterError::Dimension {
                expected: n,
                got: self.covariance.nrows(),
            });
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::InvalidEstimate("non-finite mean".into()));
        }
        if linalg::asymmetry(&self.covariance) > SYMMETRY_TOL {
            return Err(FilterError::InvalidEstimate("asymmetric covariance".into()));
        }
        if !linalg::is_spd(&self.covariance) {
            return Err(FilterError::InvalidEstimate(
                "covariance is not positive definite".into(),
            ));
        }
        Ok(())
    }
}

/// A measurement linearized at the prior mean: innovation `ν`, Jacobian `H`
/// and noise covariance `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearized {
    pub innovation: DVector<f64>,
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl Linearized {
    fn check(&self, n: usize) -> Result<(), FilterError> {
        let k = self.innovation.len();
        if self.h.shape() != (k, n) {
            return Err(FilterError::Dimension {
                expected: n,
                got: self.h.ncols(),
            });
        }
        if self.r.shape() != (k, k) {
            return Err(FilterError::Dimension {
                expected: k,
                got: self.r.nrows(),
            });
        }
        Ok(())
    }
}

/// Propagated mean, transition `Φ` and process covariance `Q`.
pub type Propagation = (DVector<f64>, DMatrix<f64>, DMatrix<f64>);

/// State-transition model used by the prediction step.
pub trait ProcessModel: Send + Sync {
    fn dim(&self) -> usize;

    fn propagate(&self, mean: &DVector<f64>, dt: f64) -> Result<Propagation, FilterError>;

    /// Indices of angular states; their differences are wrapped.
    fn angle_indices(&self) -> Vec<usize> {
        Vec::new()
    }

    fn normalize(&self, x: &mut DVector<f64>) {
        for i in self.angle_indices() {
            x[i] = wrap_angle(x[i]);
        }
    }
}

/// The vehicle bicycle model of [`crate::dynamics`].
#[derive(Debug, Clone)]
pub struct VehicleProcess {
    pub variant: Variant,
    pub params: VehicleParams,
    pub noise: ProcessNoise,
}

impl ProcessModel for VehicleProcess {
    fn dim(&self) -> usize {
        self.variant.dim()
    }

    fn propagate(&self, mean: &DVector<f64>, dt: f64) -> Result<Propagation, FilterError> {
        let p = dynamics::step(self.variant, mean, dt, &self.noise, &self.params)?;
        Ok((p.state, p.transition, p.process_cov))
    }

    fn angle_indices(&self) -> Vec<usize> {
        self.variant.angle_indices()
    }
}

/// Linear time-invariant model `ẋ = F x` with white noise density `Qc`:
/// `Φ = exp(F dt)`, `Q = Qc·dt`.
#[derive(Debug, Clone)]
pub struct LinearProcess {
    pub f: DMatrix<f64>,
    pub qc: DMatrix<f64>,
}

impl ProcessModel for LinearProcess {
    fn dim(&self) -> usize {
        self.f.nrows()
    }

    fn propagate(&self, mean: &DVector<f64>, dt: f64) -> Result<Propagation, FilterError> {
        if !(dt > 0.0) {
            return Err(FilterError::InvalidTimeStep(dt));
        }
        let phi = (&self.f * dt).exp();
        Ok((&phi * mean, phi, &self.qc * dt))
    }
}

/// Time update: `m ← f(m)`, `M ← Φ M Φᵀ + Q`, symmetrized.
pub fn predict(est: &StateEstimate, model: &dyn ProcessModel, dt: f64) -> Result<StateEstimate, FilterError> {
    if est.dim() != model.dim() {
        return Err(FilterError::Dimension {
            expected: model.dim(),
            got: est.dim(),
        });
    }
    let (mean, phi, q) = model.propagate(&est.mean, dt)?;
    let cov = &phi * &est.covariance * phi.transpose() + q;
    Ok(StateEstimate {
        mean,
        covariance: symmetrize(&cov),
    })
}

/// Local posterior in both covariance and information form.
#[derive(Debug, Clone)]
pub struct LocalPosterior {
    pub estimate: StateEstimate,
    pub information: DMatrix<f64>,
}

fn prior_information(prior: &StateEstimate) -> Result<DMatrix<f64>, FilterError> {
    spd_inverse(&prior.covariance).ok_or(FilterError::SingularPrior)
}

fn local_update_with(
    prior: &StateEstimate,
    prior_info: &DMatrix<f64>,
    measurements: &[Linearized],
) -> Result<LocalPosterior, FilterError> {
    let n = prior.dim();
    let mut info = prior_info.clone();
    let mut gain_rhs = DVector::zeros(n);
    for z in measurements {
        z.check(n)?;
        let r_inv = spd_inverse(&z.r).ok_or(FilterError::IndefiniteNoise)?;
        let ht_rinv = z.h.transpose() * r_inv;
        info += &ht_rinv * &z.h;
        gain_rhs += ht_rinv * &z.innovation;
    }
    let info = symmetrize(&info);
    let cov = spd_inverse(&info).ok_or(FilterError::IndefinitePosterior)?;
    // P(M⁻¹m + HᵀR⁻¹(ν + Hm)) = m + P·HᵀR⁻¹ν, evaluated in the second form
    // to avoid cancellation under a diffuse prior.
    let mean = &prior.mean + &cov * gain_rhs;
    Ok(LocalPosterior {
        estimate: StateEstimate { mean, covariance: cov },
        information: info,
    })
}

/// Information-form local update of the prior `(m, M)` with one or more
/// measurements linearized at `m`.
pub fn local_update(prior: &StateEstimate, measurements: &[Linearized]) -> Result<StateEstimate, FilterError> {
    let prior_info = prior_information(prior)?;
    Ok(local_update_with(prior, &prior_info, measurements)?.estimate)
}

fn diff_wrapped(a: &DVector<f64>, b: &DVector<f64>, angles: &[usize]) -> DVector<f64> {
    let mut d = a - b;
    for &i in angles {
        d[i] = wrap_angle(d[i]);
    }
    d
}

fn fuse_information(
    prior: &StateEstimate,
    prior_info: &DMatrix<f64>,
    locals: &[LocalPosterior],
    angles: &[usize],
) -> Result<StateEstimate, FilterError> {
    let n = prior.dim();
    let count = locals.len();
    if count == 0 {
        return Err(FilterError::NoEstimates);
    }
    if count == 1 {
        return Ok(locals[0].estimate.clone());
    }
    let mut info = -prior_info * (count as f64 - 1.0);
    let mut rhs = DVector::zeros(n);
    for l in locals {
        if l.estimate.dim() != n {
            return Err(FilterError::Dimension {
                expected: n,
                got: l.estimate.dim(),
            });
        }
        info += &l.information;
        rhs += &l.information * diff_wrapped(&l.estimate.mean, &prior.mean, angles);
    }
    let info = symmetrize(&info);
    let cov = spd_inverse(&info).ok_or(FilterError::IndefiniteFusedPrecision)?;
    // x̂ = P[Σ Pᵢ⁻¹x̂ᵢ − (n−1)M⁻¹m] = m + P Σ Pᵢ⁻¹(x̂ᵢ − m)
    let mean = &prior.mean + &cov * rhs;
    Ok(StateEstimate { mean, covariance: cov })
}

/// Master fusion of local posteriors that all started from the prior `(m, M)`.
pub fn master_fuse(
    prior: &StateEstimate,
    locals: &[StateEstimate],
    angles: &[usize],
) -> Result<StateEstimate, FilterError> {
    let prior_info = prior_information(prior)?;
    let locals = locals
        .iter()
        .map(|e| {
            Ok(LocalPosterior {
                information: spd_inverse(&e.covariance).ok_or(FilterError::IndefinitePosterior)?,
                estimate: e.clone(),
            })
        })
        .collect::<Result<Vec<_>, FilterError>>()?;
    fuse_information(prior, &prior_info, &locals, angles)
}

/// Stacked-measurement EKF update in covariance form with a Joseph-form
/// covariance. Independent of the information-form code path.
pub fn centralized_update(prior: &StateEstimate, measurements: &[Linearized]) -> Result<StateEstimate, FilterError> {
    let n = prior.dim();
    if !linalg::is_spd(&prior.covariance) {
        return Err(FilterError::SingularPrior);
    }
    if measurements.is_empty() {
        return Ok(prior.clone());
    }
    for z in measurements {
        z.check(n)?;
        if !linalg::is_spd(&z.r) {
            return Err(FilterError::IndefiniteNoise);
        }
    }
    let h = vstack(&measurements.iter().map(|z| z.h.clone()).collect::<Vec<_>>(), n);
    let r = block_diag(&measurements.iter().map(|z| z.r.clone()).collect::<Vec<_>>());
    let nu = vstack_vec(&measurements.iter().map(|z| z.innovation.clone()).collect::<Vec<_>>());
    let m = &prior.covariance;
    let s = &h * m * h.transpose() + &r;
    let s_chol = linalg::cholesky(&s).ok_or(FilterError::SingularInnovation)?;
    // K = M Hᵀ S⁻¹, solved as S Kᵀ = H M
    let k = s_chol.solve(&(&h * m)).transpose();
    let mean = &prior.mean + &k * nu;
    let i_kh = DMatrix::identity(n, n) - &k * &h;
    let cov = &i_kh * m * i_kh.transpose() + &k * r * k.transpose();
    Ok(StateEstimate {
        mean,
        covariance: symmetrize(&cov),
    })
}

/// χ² quantile for a measurement of dimension `dim`.
pub fn chi2_threshold(dim: usize, probability: f64) -> f64 {
    if probability >= 1.0 {
        return f64::INFINITY;
    }
    ChiSquared::new(dim as f64)
        .map(|d| d.inverse_cdf(probability))
        .unwrap_or(f64::INFINITY)
}

/// Accepts iff `νᵀ S⁻¹ ν ≤ threshold`.
pub fn gate(innovation: &DVector<f64>, s: &DMatrix<f64>, threshold: f64) -> Result<bool, FilterError> {
    let chol = linalg::cholesky(s).ok_or(FilterError::SingularInnovation)?;
    if threshold == f64::INFINITY {
        return Ok(true);
    }
    let d2 = innovation.dot(&chol.solve(innovation));
    Ok(d2 <= threshold)
}

/// Mahalanobis distance² of a linearized measurement against a prior.
pub fn normalized_innovation(prior: &StateEstimate, z: &Linearized) -> Result<f64, FilterError> {
    let s = &z.h * &prior.covariance * z.h.transpose() + &z.r;
    let chol = linalg::cholesky(&s).ok_or(FilterError::SingularInnovation)?;
    Ok(z.innovation.dot(&chol.solve(&z.innovation)))
}

/// A local filter: the sensor kinds it consumes and its last posterior.
#[derive(Debug, Clone)]
pub struct LocalFilter {
    pub id: usize,
    pub kinds: Vec<SensorKind>,
    pub last: Option<StateEstimate>,
}

/// Outcome of one fusion cycle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleReport {
    pub accepted: usize,
    pub rejected: usize,
    pub active_filters: usize,
}

/// Local filters plus the master estimate they share.
pub struct FilterBank {
    filters: Vec<LocalFilter>,
    master: StateEstimate,
    process: Box<dyn ProcessModel>,
    clock: f64,
    gate_probability: Option<f64>,
}

impl std::fmt::Debug for FilterBank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FilterBank")
            .field("filters", &self.filters)
            .field("master", &self.master)
            .field("clock", &self.clock)
            .field("gate_probability", &self.gate_probability)
            .finish_non_exhaustive()
    }
}

impl FilterBank {
    /// Builds a bank with one local filter per entry of `subscriptions`.
    pub fn new(
        subscriptions: Vec<Vec<SensorKind>>,
        initial: StateEstimate,
        process: Box<dyn ProcessModel>,
    ) -> Result<Self, FilterError> {
        initial.validate()?;
        if initial.dim() != process.dim() {
            return Err(FilterError::Dimension {
                expected: process.dim(),
                got: initial.dim(),
            });
        }
        if subscriptions.is_empty() {
            return Err(FilterError::NoEstimates);
        }
        let mut seen = Vec::new();
        for kind in subscriptions.iter().flatten() {
            if seen.contains(kind) {
                return Err(FilterError::OverlappingSubscription(*kind));
            }
            seen.push(*kind);
        }
        let filters = subscriptions
            .into_iter()
            .enumerate()
            .map(|(id, kinds)| LocalFilter { id, kinds, last: None })
            .collect();
        Ok(Self {
            filters,
            master: initial,
            process,
            clock: 0.0,
            gate_probability: None,
        })
    }

    /// One local filter per sensor kind.
    pub fn per_sensor(initial: StateEstimate, process: Box<dyn ProcessModel>) -> Result<Self, FilterError> {
        Self::new(SensorKind::ALL.iter().map(|k| vec![*k]).collect(), initial, process)
    }

    /// Enables χ² gating at the given acceptance probability.
    pub fn with_gating(mut self, probability: Option<f64>) -> Self {
        self.gate_probability = probability;
        self
    }

    pub fn master(&self) -> &StateEstimate {
        &self.master
    }

    pub fn filters(&self) -> &[LocalFilter] {
        &self.filters
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn process(&self) -> &dyn ProcessModel {
        self.process.as_ref()
    }

    pub fn predict(&mut self, dt: f64) -> Result<(), FilterError> {
        self.master = predict(&self.master, self.process.as_ref(), dt)?;
        self.clock += dt;
        Ok(())
    }

    fn route(&self, kind: SensorKind) -> Result<usize, FilterError> {
        self.filters
            .iter()
            .position(|f| f.kinds.contains(&kind))
            .ok_or(FilterError::Unrouted(kind))
    }

    /// Local updates and master fusion for one cycle; does not feed back.
    pub fn fuse(
        &mut self,
        measurements: &[(SensorKind, Linearized)],
    ) -> Result<(StateEstimate, CycleReport), FilterError> {
        let prior = &self.master;
        let prior_info = prior_information(prior)?;
        let mut report = CycleReport::default();
        let mut routed: Vec<Vec<Linearized>> = vec![Vec::new(); self.filters.len()];
        for (kind, z) in measurements {
            z.check(prior.dim())?;
            if let Some(p) = self.gate_probability {
                let d2 = normalized_innovation(prior, z)?;
                if d2 > chi2_threshold(z.innovation.len(), p) {
                    report.rejected += 1;
                    continue;
                }
            }
            routed[self.route(*kind)?].push(z.clone());
            report.accepted += 1;
        }
        let mut locals = Vec::new();
        for (filter, zs) in self.filters.iter_mut().zip(&routed) {
            if zs.is_empty() {
                filter.last = None;
                continue;
            }
            let mut post = local_update_with(prior, &prior_info, zs)?;
            self.process.normalize(&mut post.estimate.mean);
            filter.last = Some(post.estimate.clone());
            locals.push(post);
        }
        report.active_filters = locals.len();
        if locals.is_empty() {
            return Ok((prior.clone(), report));
        }
        let angles = self.process.angle_indices();
        let mut fused = fuse_information(prior, &prior_info, &locals, &angles)?;
        self.process.normalize(&mut fused.mean);
        Ok((fused, report))
    }

    /// Sets `(m, M)` to the fused estimate; it is every local filter's next prior.
    pub fn feedback(&mut self, fused: StateEstimate) -> Result<(), FilterError> {
        if fused.dim() != self.master.dim() {
            return Err(FilterError::Dimension {
                expected: self.master.dim(),
                got: fused.dim(),
            });
        }
        self.master = fused;
        Ok(())
    }

    /// `fuse` followed by `feedback`.
    pub fn update(&mut self, measurements: &[(SensorKind, Linearized)]) -> Result<CycleReport, FilterError> {
        let (fused, report) = self.fuse(measurements)?;
        self.feedback(fused)?;
        Ok(report)
    }

    /// Prior every local filter will start from in the next cycle.
    pub fn local_prior(&self, _id: usize) -> &StateEstimate {
        &self.master
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(m: f64, p: f64) -> StateEstimate {
        StateEstimate::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, p)).unwrap()
    }

    fn obs(prior: &StateEstimate, z: f64, h: f64, r: f64) -> Linearized {
        Linearized {
            innovation: DVector::from_element(1, z - h * prior.mean[0]),
            h: DMatrix::from_element(1, 1, h),
            r: DMatrix::from_element(1, 1, r),
        }
    }

    #[test]
    fn scalar_local_update() {
        let prior = scalar(0.0, 1.0);
        let post = local_update(&prior, &[obs(&prior, 1.0, 1.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(post.mean[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(post.covariance[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn uninformative_and_unobserved() {
        let prior = scalar(0.3, 2.0);
        let post = local_update(&prior, &[obs(&prior, 5.0, 1.0, 1e12)]).unwrap();
        assert_abs_diff_eq!(post.mean[0], 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(post.covariance[(0, 0)], 2.0, epsilon = 1e-10);
        let post = local_update(&prior, &[obs(&prior, 5.0, 0.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(post.mean[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(post.covariance[(0, 0)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn scalar_two_filter_fusion_matches_centralized() {
        let prior = scalar(0.0, 1.0);
        let z1 = obs(&prior, 1.0, 1.0, 1.0);
        let z2 = obs(&prior, 2.0, 1.0, 1.0);
        let l1 = local_update(&prior, std::slice::from_ref(&z1)).unwrap();
        let l2 = local_update(&prior, std::slice::from_ref(&z2)).unwrap();
        assert_abs_diff_eq!(l1.mean[0], 0.5);
        assert_abs_diff_eq!(l2.mean[0], 1.0);
        let fused = master_fuse(&prior, &[l1, l2], &[]).unwrap();
        assert_abs_diff_eq!(fused.mean[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fused.covariance[(0, 0)], 1.0 / 3.0, epsilon = 1e-14);
        let central = centralized_update(&prior, &[z1, z2]).unwrap();
        assert_abs_diff_eq!(central.mean[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(central.covariance[(0, 0)], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn fusion_edge_cases() {
        let prior = scalar(0.2, 1.5);
        let l = local_update(&prior, &[obs(&prior, 1.0, 1.0, 0.5)]).unwrap();
        assert_eq!(master_fuse(&prior, std::slice::from_ref(&l), &[]).unwrap(), l);
        let all_prior = master_fuse(&prior, &[prior.clone(), prior.clone(), prior.clone()], &[]).unwrap();
        assert_abs_diff_eq!(all_prior.mean[0], 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(all_prior.covariance[(0, 0)], 1.5, epsilon = 1e-14);
        assert_eq!(master_fuse(&prior, &[], &[]), Err(FilterError::NoEstimates));
    }

    #[test]
    fn duplicate_information_is_not_centralized() {
        let prior = scalar(0.0, 1.0);
        let z = obs(&prior, 1.0, 1.0, 1.0);
        let l = local_update(&prior, std::slice::from_ref(&z)).unwrap();
        let doubled = master_fuse(&prior, &[l.clone(), l], &[]).unwrap();
        let central = centralized_update(&prior, &[z]).unwrap();
        assert!((doubled.covariance[(0, 0)] - central.covariance[(0, 0)]).abs() > 0.1);
    }

    #[test]
    fn gate_examples() {
        let s = DMatrix::from_element(1, 1, 1.0);
        assert!(gate(&DVector::zeros(1), &s, 9.0).unwrap());
        assert!(!gate(&DVector::from_element(1, 10.0), &s, 9.0).unwrap());
        assert!(gate(&DVector::from_element(1, 1e9), &s, f64::INFINITY).unwrap());
        assert_eq!(
            gate(&DVector::zeros(1), &DMatrix::zeros(1, 1), 9.0),
            Err(FilterError::SingularInnovation)
        );
        assert_abs_diff_eq!(chi2_threshold(1, 0.99), 6.6349, epsilon = 1e-4);
        assert_abs_diff_eq!(chi2_threshold(2, 0.99), 9.2103, epsilon = 1e-4);
    }

    #[test]
    fn errors_on_bad_inputs() {
        let singular = StateEstimate {
            mean: DVector::zeros(2),
            covariance: DMatrix::zeros(2, 2),
        };
        let z = Linearized {
            innovation: DVector::zeros(1),
            h: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            r: DMatrix::identity(1, 1),
        };
        assert_eq!(
            local_update(&singular, std::slice::from_ref(&z)),
            Err(FilterError::SingularPrior)
        );
        let prior = StateEstimate::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let bad_r = Linearized {
            r: DMatrix::from_element(1, 1, -1.0),
            ..z
        };
        assert_eq!(local_update(&prior, &[bad_r]), Err(FilterError::IndefiniteNoise));
        assert!(StateEstimate::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    }

    #[test]
    fn linear_prediction_matches_closed_form() {
        let dt = 0.1;
        let q = 0.3;
        let process = LinearProcess {
            f: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            qc: DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, q]),
        };
        let est = StateEstimate::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
        )
        .unwrap();
        let out = predict(&est, &process, dt).unwrap();
        let phi = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
        let expected_cov =
            &phi * &est.covariance * phi.transpose() + DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, q * dt]);
        assert!((out.mean - DVector::from_vec(vec![1.2, 2.0])).amax() < 1e-12);
        assert!((out.covariance - expected_cov).amax() < 1e-12);
    }

    #[test]
    fn vehicle_fixed_point_and_noise_growth() {
        let variant = Variant::Flat2D;
        let mut process = VehicleProcess {
            variant,
            params: VehicleParams::default(),
            noise: ProcessNoise::zeros(variant),
        };
        let est = StateEstimate::new(DVector::zeros(7), DMatrix::identity(7, 7)).unwrap();
        let out = predict(&est, &process, 0.1).unwrap();
        assert_eq!(out.mean, est.mean);
        process.noise = ProcessNoise(vec![0.1; 7]);
        let out = predict(&est, &process, 0.1).unwrap();
        assert!(out.covariance.trace() > est.covariance.trace());
    }

    #[test]
    fn bank_routes_and_feeds_back() {
        let prior = StateEstimate::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let process = LinearProcess {
            f: DMatrix::zeros(2, 2),
            qc: DMatrix::zeros(2, 2),
        };
        let mut bank = FilterBank::new(
            vec![vec![SensorKind::Gps], vec![SensorKind::Odometry]],
            prior.clone(),
            Box::new(process),
        )
        .unwrap();
        let zx = Linearized {
            innovation: DVector::from_element(1, 1.0),
            h: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            r: DMatrix::identity(1, 1),
        };
        let zy = Linearized {
            innovation: DVector::from_element(1, -1.0),
            h: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            r: DMatrix::identity(1, 1),
        };
        let report = bank
            .update(&[(SensorKind::Gps, zx.clone()), (SensorKind::Odometry, zy.clone())])
            .unwrap();
        assert_eq!(report.active_filters, 2);
        let central = centralized_update(&prior, &[zx, zy]).unwrap();
        assert!((&bank.master().mean - &central.mean).amax() < 1e-12);
        assert_eq!(bank.local_prior(0), bank.local_prior(1));

        let before = bank.master().clone();
        bank.update(&[]).unwrap();
        assert_eq!(bank.master(), &before);

        assert!(matches!(
            bank.update(&[(SensorKind::CameraLine, zx_like())]),
            Err(FilterError::Unrouted(SensorKind::CameraLine))
        ));
        assert!(matches!(
            FilterBank::new(
                vec![vec![SensorKind::Gps], vec![SensorKind::Gps]],
                prior,
                Box::new(LinearProcess {
                    f: DMatrix::zeros(2, 2),
                    qc: DMatrix::zeros(2, 2),
                })
            ),
            Err(FilterError::OverlappingSubscription(SensorKind::Gps))
        ));
    }

    fn zx_like() -> Linearized {
        Linearized {
            innovation: DVector::zeros(1),
            h: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            r: DMatrix::identity(1, 1),
        }
    }
}
