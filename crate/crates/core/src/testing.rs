//! Small reference models used by the test suites and benchmarks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::statespace::{FactorDerivative, StateSequence, StateSpaceModel};

/// Scalar model: `g_k(x) = slope * x`, `h_k(x) = x`, constant `Q^{-1/2}`
/// and an affine measurement factor `r_const + r_slope * x`.
#[derive(Debug, Clone)]
pub struct ScalarModel {
    pub z: Vec<f64>,
    pub g0: f64,
    pub slope: f64,
    pub q_factor: f64,
    pub r_const: f64,
    pub r_slope: f64,
}

impl ScalarModel {
    pub fn new(z: Vec<f64>, g0: f64) -> Self {
        Self { z, g0, slope: 1.0, q_factor: 1.0, r_const: 1.0, r_slope: 0.0 }
    }
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

impl StateSpaceModel for ScalarModel {
    fn num_steps(&self) -> usize {
        self.z.len()
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn meas_dim(&self, _k: usize) -> usize {
        1
    }
    fn prior_mean(&self) -> DVector<f64> {
        DVector::from_element(1, self.g0)
    }
    fn measurement(&self, k: usize) -> DVector<f64> {
        DVector::from_element(1, self.z[k])
    }
    fn process(&self, _k: usize, prev: &DVector<f64>) -> DVector<f64> {
        prev * self.slope
    }
    fn process_jacobian(&self, _k: usize, _prev: &DVector<f64>) -> DMatrix<f64> {
        scalar(self.slope)
    }
    fn observe(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn observe_jacobian(&self, _k: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        scalar(1.0)
    }
    fn process_factor(&self, _k: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        scalar(self.q_factor)
    }
    fn process_factor_derivative(&self, _k: usize, _x: &DVector<f64>) -> FactorDerivative {
        FactorDerivative::zeros(1, 1)
    }
    fn measurement_factor(&self, _k: usize, x: &DVector<f64>) -> DMatrix<f64> {
        scalar(self.r_const + self.r_slope * x[0])
    }
    fn measurement_factor_derivative(&self, _k: usize, _x: &DVector<f64>) -> FactorDerivative {
        FactorDerivative::new(vec![scalar(self.r_slope)])
    }
}

/// Lower-triangular factor with smooth state dependence:
/// `F_ii = b_ii exp(s tanh(a_i . x))` and `F_ij = b_ij + s sin(c_ij . x)` for `j < i`.
#[derive(Debug, Clone)]
pub struct SmoothFactor {
    base: DMatrix<f64>,
    diag_dirs: Vec<DVector<f64>>,
    off_dirs: DMatrix<DVector<f64>>,
    strength: f64,
}

impl SmoothFactor {
    pub fn random(rng: &mut impl Rng, dim: usize, state_dim: usize, strength: f64) -> Self {
        let base = DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                rng.gen_range(0.7..1.5)
            } else if j < i {
                rng.gen_range(-0.4..0.4)
            } else {
                0.0
            }
        });
        let dir = |rng: &mut dyn rand::RngCore| DVector::from_fn(state_dim, |_, _| rng.gen_range(-1.0..1.0));
        let diag_dirs = (0..dim).map(|_| dir(rng)).collect();
        let off_dirs = DMatrix::from_fn(dim, dim, |_, _| dir(rng));
        Self { base, diag_dirs, off_dirs, strength }
    }

    pub fn value(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.base.nrows();
        DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                self.base[(i, i)] * (self.strength * self.diag_dirs[i].dot(x).tanh()).exp()
            } else if j < i {
                self.base[(i, j)] + self.strength * self.off_dirs[(i, j)].dot(x).sin()
            } else {
                0.0
            }
        })
    }

    pub fn derivative(&self, x: &DVector<f64>) -> FactorDerivative {
        let d = self.base.nrows();
        let n = x.len();
        let rows = (0..d)
            .map(|i| {
                let mut m = DMatrix::zeros(d, n);
                for j in 0..=i {
                    let grad = if i == j {
                        let u = self.diag_dirs[i].dot(x);
                        let sech2 = 1.0 - u.tanh().powi(2);
                        &self.diag_dirs[i] * (self.base[(i, i)] * (self.strength * u.tanh()).exp() * self.strength * sech2)
                    } else {
                        let u = self.off_dirs[(i, j)].dot(x);
                        &self.off_dirs[(i, j)] * (self.strength * u.cos())
                    };
                    m.row_mut(j).copy_from(&grad.transpose());
                }
                m
            })
            .collect();
        FactorDerivative::new(rows)
    }
}

/// Random smooth nonlinear model with state-dependent factors that stay
/// positive on the diagonal for every state.
///
/// `g_k(x) = A_k x + 0.1 sin(x)`, `h_k(x) = B_k x + 0.1 tanh(x_0) 1`.
#[derive(Debug, Clone)]
pub struct RandomSmoothModel {
    n: usize,
    g0: DVector<f64>,
    z: Vec<DVector<f64>>,
    transitions: Vec<DMatrix<f64>>,
    observations: Vec<DMatrix<f64>>,
    qfac: Vec<SmoothFactor>,
    rfac: Vec<SmoothFactor>,
    seed: u64,
}

impl RandomSmoothModel {
    pub fn new(seed: u64, state_dim: usize, num_steps: usize) -> Self {
        Self::with_strength(seed, state_dim, num_steps, 0.3)
    }

    /// `strength` scales the state dependence of the factors; 0 makes them constant.
    pub fn with_strength(seed: u64, state_dim: usize, num_steps: usize, strength: f64) -> Self {
        let n = state_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let mut z = Vec::new();
        let mut transitions = Vec::new();
        let mut observations = Vec::new();
        let mut qfac = Vec::new();
        let mut rfac = Vec::new();
        for k in 0..num_steps {
            let m = 1 + (k + seed as usize) % 2;
            z.push(DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0)));
            transitions.push(DMatrix::from_fn(n, n, |i, j| {
                rng.gen_range(-0.3..0.3) + if i == j { 0.8 } else { 0.0 }
            }));
            observations.push(DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0)));
            qfac.push(SmoothFactor::random(&mut rng, n, n, strength));
            rfac.push(SmoothFactor::random(&mut rng, m, n, strength));
        }
        Self { n, g0, z, transitions, observations, qfac, rfac, seed }
    }

    /// A reproducible random state sequence (every state is in the domain).
    pub fn interior_point(&self) -> StateSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed);
        let len = self.n * self.z.len();
        StateSequence::new(self.n, DVector::from_fn(len, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
    }

    pub fn with_shifted_measurements(&self, delta: f64) -> Self {
        let mut out = self.clone();
        for z in &mut out.z {
            z.add_scalar_mut(delta);
        }
        out
    }
}

impl StateSpaceModel for RandomSmoothModel {
    fn num_steps(&self) -> usize {
        self.z.len()
    }
    fn state_dim(&self) -> usize {
        self.n
    }
    fn meas_dim(&self, k: usize) -> usize {
        self.z[k].len()
    }
    fn prior_mean(&self) -> DVector<f64> {
        self.g0.clone()
    }
    fn measurement(&self, k: usize) -> DVector<f64> {
        self.z[k].clone()
    }
    fn process(&self, k: usize, prev: &DVector<f64>) -> DVector<f64> {
        &self.transitions[k] * prev + prev.map(|v| 0.1 * v.sin())
    }
    fn process_jacobian(&self, k: usize, prev: &DVector<f64>) -> DMatrix<f64> {
        &self.transitions[k] + DMatrix::from_diagonal(&prev.map(|v| 0.1 * v.cos()))
    }
    fn observe(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        let m = self.z[k].len();
        &self.observations[k] * x + DVector::from_element(m, 0.1 * x[0].tanh())
    }
    fn observe_jacobian(&self, k: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = self.observations[k].clone();
        let sech2 = 1.0 - x[0].tanh().powi(2);
        for i in 0..j.nrows() {
            j[(i, 0)] += 0.1 * sech2;
        }
        j
    }
    fn process_factor(&self, k: usize, x: &DVector<f64>) -> DMatrix<f64> {
        self.qfac[k].value(x)
    }
    fn process_factor_derivative(&self, k: usize, x: &DVector<f64>) -> FactorDerivative {
        self.qfac[k].derivative(x)
    }
    fn measurement_factor(&self, k: usize, x: &DVector<f64>) -> DMatrix<f64> {
        self.rfac[k].value(x)
    }
    fn measurement_factor_derivative(&self, k: usize, x: &DVector<f64>) -> FactorDerivative {
        self.rfac[k].derivative(x)
    }
}
