//! Baseline linear-Gaussian Kalman filter and Rauch-Tung-Striebel smoother.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Result, SmootherError};
use crate::statespace::{FactorDerivative, StateSpaceModel};

/// Linear model with fixed covariances. Step 0 is the prior
/// `x_0 ~ N(prior_mean, process_cov[0])`; `transitions[0]` is unused.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel {
    pub prior_mean: DVector<f64>,
    pub transitions: Vec<DMatrix<f64>>,
    pub process_cov: Vec<DMatrix<f64>>,
    pub observations: Vec<DMatrix<f64>>,
    pub meas_cov: Vec<DMatrix<f64>>,
}

impl LinearGaussianModel {
    pub fn new(
        prior_mean: DVector<f64>,
        transitions: Vec<DMatrix<f64>>,
        process_cov: Vec<DMatrix<f64>>,
        observations: Vec<DMatrix<f64>>,
        meas_cov: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = prior_mean.len();
        let steps = process_cov.len();
        for len in [transitions.len(), observations.len(), meas_cov.len()] {
            if len != steps {
                return Err(SmootherError::DimensionMismatch { expected: steps, found: len });
            }
        }
        for k in 0..steps {
            let m = observations[k].nrows();
            let shapes = [
                (process_cov[k].shape(), (n, n)),
                (observations[k].shape(), (m, n)),
                (meas_cov[k].shape(), (m, m)),
            ];
            for (got, want) in shapes {
                if got != want {
                    return Err(SmootherError::DimensionMismatch { expected: want.0 * want.1, found: got.0 * got.1 });
                }
            }
            if k > 0 && transitions[k].shape() != (n, n) {
                return Err(SmootherError::DimensionMismatch { expected: n * n, found: transitions[k].len() });
            }
        }
        Ok(Self { prior_mean, transitions, process_cov, observations, meas_cov })
    }

    /// Same `F, Q, H, R` at every step; the prior covariance is `Q`.
    pub fn time_invariant(
        prior_mean: DVector<f64>,
        transition: DMatrix<f64>,
        process_cov: DMatrix<f64>,
        observation: DMatrix<f64>,
        meas_cov: DMatrix<f64>,
        num_steps: usize,
    ) -> Result<Self> {
        Self::new(
            prior_mean,
            vec![transition; num_steps],
            vec![process_cov; num_steps],
            vec![observation; num_steps],
            vec![meas_cov; num_steps],
        )
    }

    pub fn num_steps(&self) -> usize {
        self.process_cov.len()
    }

    pub fn state_dim(&self) -> usize {
        self.prior_mean.len()
    }

    /// The same model as a [`StateSpaceModel`] with state-independent inverse Cholesky factors.
    pub fn with_measurements(&self, z: Vec<DVector<f64>>) -> Result<ConstantCovarianceModel> {
        if z.len() != self.num_steps() {
            return Err(SmootherError::DimensionMismatch { expected: self.num_steps(), found: z.len() });
        }
        let qfac = self
            .process_cov
            .iter()
            .enumerate()
            .map(|(k, q)| inverse_cholesky_factor(q).ok_or(SmootherError::NotPositiveDefinite { block: k }))
            .collect::<Result<Vec<_>>>()?;
        let rfac = self
            .meas_cov
            .iter()
            .enumerate()
            .map(|(k, r)| inverse_cholesky_factor(r).ok_or(SmootherError::NotPositiveDefinite { block: k }))
            .collect::<Result<Vec<_>>>()?;
        Ok(ConstantCovarianceModel { linear: self.clone(), z, qfac, rfac })
    }
}

/// Lower-triangular `L^{-1}` where `P = L L^T`, so that `L^{-T} L^{-1} = P^{-1}`.
pub fn inverse_cholesky_factor(p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let l = Cholesky::new(p.clone())?.unpack();
    let mut inv = l.solve_lower_triangular(&DMatrix::identity(p.nrows(), p.nrows()))?;
    // exact zeros above the diagonal
    inv.fill_upper_triangle(0.0, 1);
    Some(inv)
}

/// A linear-Gaussian model paired with its measurements.
#[derive(Debug, Clone)]
pub struct ConstantCovarianceModel {
    pub linear: LinearGaussianModel,
    pub z: Vec<DVector<f64>>,
    qfac: Vec<DMatrix<f64>>,
    rfac: Vec<DMatrix<f64>>,
}

impl StateSpaceModel for ConstantCovarianceModel {
    fn num_steps(&self) -> usize {
        self.linear.num_steps()
    }
    fn state_dim(&self) -> usize {
        self.linear.state_dim()
    }
    fn meas_dim(&self, k: usize) -> usize {
        self.linear.observations[k].nrows()
    }
    fn prior_mean(&self) -> DVector<f64> {
        self.linear.prior_mean.clone()
    }
    fn measurement(&self, k: usize) -> DVector<f64> {
        self.z[k].clone()
    }
    fn process(&self, k: usize, prev: &DVector<f64>) -> DVector<f64> {
        &self.linear.transitions[k] * prev
    }
    fn process_jacobian(&self, k: usize, _prev: &DVector<f64>) -> DMatrix<f64> {
        self.linear.transitions[k].clone()
    }
    fn observe(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.linear.observations[k] * x
    }
    fn observe_jacobian(&self, k: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        self.linear.observations[k].clone()
    }
    fn process_factor(&self, k: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        self.qfac[k].clone()
    }
    fn process_factor_derivative(&self, _k: usize, _x: &DVector<f64>) -> FactorDerivative {
        FactorDerivative::zeros(self.state_dim(), self.state_dim())
    }
    fn measurement_factor(&self, k: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        self.rfac[k].clone()
    }
    fn measurement_factor_derivative(&self, k: usize, _x: &DVector<f64>) -> FactorDerivative {
        FactorDerivative::zeros(self.meas_dim(k), self.state_dim())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    /// One-step predictions `x_{k|k-1}`; entry 0 is the prior.
    pub predicted_means: Vec<DVector<f64>>,
    pub predicted_covs: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmootherOutput {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

fn check_measurements(model: &LinearGaussianModel, z: &[DVector<f64>]) -> Result<()> {
    if z.len() != model.num_steps() {
        return Err(SmootherError::DimensionMismatch { expected: model.num_steps(), found: z.len() });
    }
    for (k, zk) in z.iter().enumerate() {
        let m = model.observations[k].nrows();
        if zk.len() != m {
            return Err(SmootherError::DimensionMismatch { expected: m, found: zk.len() });
        }
    }
    Ok(())
}

pub fn kalman_filter(model: &LinearGaussianModel, z: &[DVector<f64>]) -> Result<FilterOutput> {
    check_measurements(model, z)?;
    let n = model.state_dim();
    let steps = model.num_steps();
    let mut out = FilterOutput {
        means: Vec::with_capacity(steps),
        covs: Vec::with_capacity(steps),
        predicted_means: Vec::with_capacity(steps),
        predicted_covs: Vec::with_capacity(steps),
    };
    for k in 0..steps {
        let (m_pred, p_pred) = if k == 0 {
            (model.prior_mean.clone(), model.process_cov[0].clone())
        } else {
            let f = &model.transitions[k];
            let p = f * &out.covs[k - 1] * f.transpose() + &model.process_cov[k];
            (f * &out.means[k - 1], (&p + p.transpose()) * 0.5)
        };
        let h = &model.observations[k];
        let r = &model.meas_cov[k];
        let s = h * &p_pred * h.transpose() + r;
        let s_chol: Cholesky<f64, Dyn> =
            Cholesky::new(s).ok_or(SmootherError::NotPositiveDefinite { block: k })?;
        // K = P H^T S^{-1}
        let gain = s_chol.solve(&(h * &p_pred)).transpose();
        let innovation = &z[k] - h * &m_pred;
        let mean = &m_pred + &gain * innovation;
        // Joseph form keeps the covariance symmetric positive definite.
        let ikh = DMatrix::identity(n, n) - &gain * h;
        let cov = &ikh * &p_pred * ikh.transpose() + &gain * r * gain.transpose();
        out.means.push(mean);
        out.covs.push((&cov + cov.transpose()) * 0.5);
        out.predicted_means.push(m_pred);
        out.predicted_covs.push(p_pred);
    }
    Ok(out)
}

pub fn rts_smooth(model: &LinearGaussianModel, z: &[DVector<f64>]) -> Result<SmootherOutput> {
    let filt = kalman_filter(model, z)?;
    let steps = model.num_steps();
    let mut means = filt.means.clone();
    let mut covs = filt.covs.clone();
    for k in (0..steps.saturating_sub(1)).rev() {
        let f = &model.transitions[k + 1];
        let p_pred = &filt.predicted_covs[k + 1];
        let chol = Cholesky::new(p_pred.clone()).ok_or(SmootherError::NotPositiveDefinite { block: k + 1 })?;
        // J = P_k F^T P_pred^{-1}
        let gain = chol.solve(&(f * &filt.covs[k])).transpose();
        means[k] = &filt.means[k] + &gain * (&means[k + 1] - &filt.predicted_means[k + 1]);
        let cov = &filt.covs[k] + &gain * (&covs[k + 1] - p_pred) * gain.transpose();
        covs[k] = (&cov + cov.transpose()) * 0.5;
    }
    Ok(SmootherOutput { means, covs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn equal_precision_update_averages() {
        let model = LinearGaussianModel::time_invariant(
            DVector::from_element(1, 0.0),
            scalar(1.0),
            scalar(1.0),
            scalar(1.0),
            scalar(1.0),
            1,
        )
        .unwrap();
        let out = kalman_filter(&model, &[DVector::from_element(1, 2.0)]).unwrap();
        assert!((out.means[0][0] - 1.0).abs() < 1e-15);
        let sm = rts_smooth(&model, &[DVector::from_element(1, 2.0)]).unwrap();
        assert_eq!(sm.means, out.means);
    }

    #[test]
    fn tiny_measurement_noise_tracks_measurements() {
        let model = LinearGaussianModel::time_invariant(
            DVector::from_element(1, 0.0),
            scalar(1.0),
            scalar(1.0),
            scalar(1.0),
            scalar(1e-12),
            4,
        )
        .unwrap();
        let z: Vec<_> = [0.3, -1.0, 2.0, 5.0].iter().map(|&v| DVector::from_element(1, v)).collect();
        let out = kalman_filter(&model, &z).unwrap();
        for (m, zk) in out.means.iter().zip(&z) {
            assert!((m[0] - zk[0]).abs() < 1e-5);
        }
    }

    #[test]
    fn inverse_cholesky_reproduces_precision() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let l = inverse_cholesky_factor(&p).unwrap();
        assert_eq!(l[(0, 1)], 0.0);
        assert!(l[(0, 0)] > 0.0 && l[(1, 1)] > 0.0);
        let prec = l.transpose() * &l;
        assert!((prec - p.try_inverse().unwrap()).amax() < 1e-12);
    }

    #[test]
    fn non_spd_innovation_is_reported() {
        let model = LinearGaussianModel::time_invariant(
            DVector::from_element(1, 0.0),
            scalar(1.0),
            scalar(1.0),
            scalar(1.0),
            scalar(-5.0),
            1,
        )
        .unwrap();
        assert!(matches!(
            kalman_filter(&model, &[DVector::from_element(1, 0.0)]),
            Err(SmootherError::NotPositiveDefinite { block: 0 })
        ));
    }

    #[test]
    fn inconsistent_shapes_are_rejected() {
        let r = LinearGaussianModel::new(
            DVector::zeros(2),
            vec![DMatrix::identity(2, 2)],
            vec![DMatrix::identity(2, 2)],
            vec![DMatrix::zeros(1, 3)],
            vec![scalar(1.0)],
        );
        assert!(matches!(r, Err(SmootherError::DimensionMismatch { .. })));
    }
}
