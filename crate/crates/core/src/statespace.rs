//! The dynamic model and its stacked residual.
//!
//! A model supplies, for every time step `k` (0-based; step 0 is the prior
//! step `x_0 = g0 + w_0`):
//!
//! * the process mean `g_k(x_{k-1})` and its Jacobian (for `k >= 1`),
//! * the measurement mean `h_k(x_k)` and its Jacobian,
//! * lower-triangular inverse Cholesky factors `Q_k^{-1/2}(x_k)` and
//!   `R_k^{-1/2}(x_k)` together with their derivatives in `x_k`.
//!
//! The stacked residual `c(x)` interleaves the blocks by time step: the
//! process residual `x_k - g_k(x_{k-1})` comes first, then the measurement
//! residual `h_k(x_k) - z_k`. The block-diagonal factor `V(x)` follows the
//! same layout.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SmootherError};

/// Derivative of an `r x c` factor with respect to the state `x_k` (dimension `n`).
///
/// Row `i` of the factor contributes one `c x n` matrix whose entry `(j, l)`
/// is `d factor[i, j] / d x_k[l]`. Contracting against a residual `u` then
/// gives the matrix whose row `i` is `u^T rows[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorDerivative {
    rows: Vec<DMatrix<f64>>,
}

impl FactorDerivative {
    pub fn new(rows: Vec<DMatrix<f64>>) -> Self {
        Self { rows }
    }

    /// All-zero derivative for a state-independent `dim x dim` factor.
    pub fn zeros(dim: usize, state_dim: usize) -> Self {
        Self { rows: vec![DMatrix::zeros(dim, state_dim); dim] }
    }

    pub fn rows(&self) -> &[DMatrix<f64>] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// `sum_j u_j d[factor]_{i j}` for every row `i`: the matrix whose product
    /// with a state perturbation gives the first-order change of `factor * u`
    /// when `u` is held fixed.
    pub fn contract(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let n = self.rows.first().map_or(0, |r| r.ncols());
        let mut out = DMatrix::zeros(self.rows.len(), n);
        for (i, d) in self.rows.iter().enumerate() {
            out.row_mut(i).copy_from(&(u.transpose() * d));
        }
        out
    }

    /// Jacobian of the diagonal entries: row `i` is `d factor[i, i] / d x_k`.
    pub fn diag_jacobian(&self) -> DMatrix<f64> {
        let n = self.rows.first().map_or(0, |r| r.ncols());
        let mut out = DMatrix::zeros(self.rows.len(), n);
        for (i, d) in self.rows.iter().enumerate() {
            out.row_mut(i).copy_from(&d.row(i));
        }
        out
    }

    fn check(&self, dim: usize, state_dim: usize) -> Result<()> {
        if self.rows.len() != dim {
            return Err(SmootherError::DimensionMismatch { expected: dim, found: self.rows.len() });
        }
        for r in &self.rows {
            if r.nrows() != dim || r.ncols() != state_dim {
                return Err(SmootherError::DimensionMismatch {
                    expected: dim * state_dim,
                    found: r.nrows() * r.ncols(),
                });
            }
        }
        Ok(())
    }
}

/// Central-difference derivative of a factor-valued function.
///
/// Meant for prototyping models; analytic derivatives keep the Gauss-Newton
/// model exact and should be preferred.
pub fn finite_difference_factor_derivative<F>(factor: F, x: &DVector<f64>, eps: f64) -> FactorDerivative
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let base = factor(x);
    let (r, c) = base.shape();
    let mut rows = vec![DMatrix::zeros(c, x.len()); r];
    for l in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[l] += eps;
        xm[l] -= eps;
        let diff = (factor(&xp) - factor(&xm)) / (2.0 * eps);
        for (i, row) in rows.iter_mut().enumerate() {
            for j in 0..c {
                row[(j, l)] = diff[(i, j)];
            }
        }
    }
    FactorDerivative::new(rows)
}

/// A state-space model with state-dependent noise covariances.
///
/// Callbacks must be pure functions of their arguments. Step indices are
/// 0-based; `process` and `process_jacobian` are only called for `k >= 1`.
pub trait StateSpaceModel {
    fn num_steps(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn meas_dim(&self, k: usize) -> usize;

    /// Prior mean `g0` of the first state.
    fn prior_mean(&self) -> DVector<f64>;
    fn measurement(&self, k: usize) -> DVector<f64>;

    /// `g_k(x_{k-1})`.
    fn process(&self, k: usize, prev: &DVector<f64>) -> DVector<f64>;
    /// `d g_k / d x_{k-1}`, `n x n`.
    fn process_jacobian(&self, k: usize, prev: &DVector<f64>) -> DMatrix<f64>;

    /// `h_k(x_k)`.
    fn observe(&self, k: usize, x: &DVector<f64>) -> DVector<f64>;
    /// `d h_k / d x_k`, `m(k) x n`.
    fn observe_jacobian(&self, k: usize, x: &DVector<f64>) -> DMatrix<f64>;

    /// `Q_k^{-1/2}(x_k)`, lower triangular.
    fn process_factor(&self, k: usize, x: &DVector<f64>) -> DMatrix<f64>;
    fn process_factor_derivative(&self, k: usize, x: &DVector<f64>) -> FactorDerivative;

    /// `R_k^{-1/2}(x_k)`, lower triangular.
    fn measurement_factor(&self, k: usize, x: &DVector<f64>) -> DMatrix<f64>;
    fn measurement_factor_derivative(&self, k: usize, x: &DVector<f64>) -> FactorDerivative;
}

/// `N` stacked states of dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSequence {
    n: usize,
    data: DVector<f64>,
}

impl StateSequence {
    pub fn new(state_dim: usize, data: DVector<f64>) -> Result<Self> {
        if state_dim == 0 || data.len() % state_dim != 0 {
            return Err(SmootherError::DimensionMismatch { expected: state_dim, found: data.len() });
        }
        Ok(Self { n: state_dim, data })
    }

    pub fn from_blocks(blocks: &[DVector<f64>]) -> Result<Self> {
        let n = blocks.first().map_or(0, |b| b.len());
        if let Some(b) = blocks.iter().find(|b| b.len() != n) {
            return Err(SmootherError::DimensionMismatch { expected: n, found: b.len() });
        }
        let data = DVector::from_iterator(n * blocks.len(), blocks.iter().flat_map(|b| b.iter().copied()));
        Self::new(n, data)
    }

    pub fn zeros(state_dim: usize, num_steps: usize) -> Self {
        Self { n: state_dim, data: DVector::zeros(state_dim * num_steps) }
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn num_steps(&self) -> usize {
        self.data.len() / self.n
    }

    pub fn block(&self, k: usize) -> DVector<f64> {
        self.data.rows(k * self.n, self.n).into_owned()
    }

    pub fn blocks(&self) -> Vec<DVector<f64>> {
        (0..self.num_steps()).map(|k| self.block(k)).collect()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.data
    }

    /// `self + t * d`.
    pub fn step(&self, t: f64, d: &DVector<f64>) -> Self {
        Self { n: self.n, data: &self.data + d * t }
    }
}

/// Row offsets of each time step inside `c(x)`, `V(x)` and `vec{V_ii}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualLayout {
    pub state_dim: usize,
    pub meas_dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl ResidualLayout {
    pub fn of<M: StateSpaceModel + ?Sized>(model: &M) -> Self {
        let n = model.state_dim();
        let meas_dims: Vec<usize> = (0..model.num_steps()).map(|k| model.meas_dim(k)).collect();
        let mut offsets = Vec::with_capacity(meas_dims.len() + 1);
        let mut acc = 0;
        for &m in &meas_dims {
            offsets.push(acc);
            acc += n + m;
        }
        offsets.push(acc);
        Self { state_dim: n, meas_dims, offsets }
    }

    pub fn num_steps(&self) -> usize {
        self.meas_dims.len()
    }

    /// `M + nN`.
    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset of the process block of step `k`; the measurement block follows at `+ n`.
    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    pub fn step_len(&self, k: usize) -> usize {
        self.state_dim + self.meas_dims[k]
    }
}

/// Per-step residuals and factors at a given state sequence.
#[derive(Debug, Clone)]
pub(crate) struct StepValues {
    /// `x_k - g_k(x_{k-1})`.
    pub w: DVector<f64>,
    /// `h_k(x_k) - z_k`.
    pub r: DVector<f64>,
    pub qf: DMatrix<f64>,
    pub rf: DMatrix<f64>,
}

pub(crate) fn check_dims<M: StateSpaceModel + ?Sized>(model: &M, x: &StateSequence) -> Result<()> {
    let expected = model.state_dim() * model.num_steps();
    if x.state_dim() != model.state_dim() || x.as_vector().len() != expected {
        return Err(SmootherError::DimensionMismatch { expected, found: x.as_vector().len() });
    }
    Ok(())
}

fn check_len(v: &DVector<f64>, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(SmootherError::DimensionMismatch { expected, found: v.len() });
    }
    Ok(())
}

fn check_shape(m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(SmootherError::DimensionMismatch { expected: rows * cols, found: m.nrows() * m.ncols() });
    }
    Ok(())
}

pub(crate) fn step_values<M: StateSpaceModel + ?Sized>(
    model: &M,
    x: &StateSequence,
    k: usize,
    xk: &DVector<f64>,
) -> Result<StepValues> {
    let n = model.state_dim();
    let m = model.meas_dim(k);
    let mean = if k == 0 { model.prior_mean() } else { model.process(k, &x.block(k - 1)) };
    check_len(&mean, n)?;
    let hx = model.observe(k, xk);
    check_len(&hx, m)?;
    let z = model.measurement(k);
    check_len(&z, m)?;
    let qf = model.process_factor(k, xk);
    check_shape(&qf, n, n)?;
    let rf = model.measurement_factor(k, xk);
    check_shape(&rf, m, m)?;
    Ok(StepValues { w: xk - mean, r: hx - z, qf, rf })
}

/// Jacobians and factor derivatives at one step.
#[derive(Debug, Clone)]
pub(crate) struct StepDerivatives {
    /// `d g_k / d x_{k-1}`; `None` at step 0.
    pub g: Option<DMatrix<f64>>,
    pub h: DMatrix<f64>,
    pub dq: FactorDerivative,
    pub dr: FactorDerivative,
}

pub(crate) fn step_derivatives<M: StateSpaceModel + ?Sized>(
    model: &M,
    x: &StateSequence,
    k: usize,
    xk: &DVector<f64>,
) -> Result<StepDerivatives> {
    let n = model.state_dim();
    let m = model.meas_dim(k);
    let g = if k == 0 {
        None
    } else {
        let g = model.process_jacobian(k, &x.block(k - 1));
        check_shape(&g, n, n)?;
        Some(g)
    };
    let h = model.observe_jacobian(k, xk);
    check_shape(&h, m, n)?;
    let dq = model.process_factor_derivative(k, xk);
    dq.check(n, n)?;
    let dr = model.measurement_factor_derivative(k, xk);
    dr.check(m, n)?;
    Ok(StepDerivatives { g, h, dq, dr })
}

/// Stacked residual `c(x)`, interleaved by step.
pub fn residual_c<M: StateSpaceModel + ?Sized>(model: &M, x: &StateSequence) -> Result<DVector<f64>> {
    check_dims(model, x)?;
    let layout = ResidualLayout::of(model);
    let n = model.state_dim();
    let mut c = DVector::zeros(layout.len());
    for k in 0..model.num_steps() {
        let sv = step_values(model, x, k, &x.block(k))?;
        let off = layout.offset(k);
        c.rows_mut(off, n).copy_from(&sv.w);
        c.rows_mut(off + n, sv.r.len()).copy_from(&sv.r);
    }
    Ok(c)
}

/// The block-diagonal factor `V(x)` stored as its `2N` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorV {
    pub process: Vec<DMatrix<f64>>,
    pub measurement: Vec<DMatrix<f64>>,
}

impl FactorV {
    /// `vec{V_ii}` in the interleaved residual order.
    pub fn diag(&self) -> DVector<f64> {
        let vals: Vec<f64> = self
            .process
            .iter()
            .zip(&self.measurement)
            .flat_map(|(q, r)| q.diagonal().iter().chain(r.diagonal().iter()).copied().collect::<Vec<_>>())
            .collect();
        DVector::from_vec(vals)
    }

    /// Whether every diagonal entry is strictly positive (finite).
    pub fn in_domain(&self) -> bool {
        self.diag().iter().all(|&v| v > 0.0 && v.is_finite())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let total: usize = self.process.iter().chain(&self.measurement).map(|b| b.nrows()).sum();
        let mut v = DMatrix::zeros(total, total);
        let mut off = 0;
        for (q, r) in self.process.iter().zip(&self.measurement) {
            for b in [q, r] {
                v.view_mut((off, off), b.shape()).copy_from(b);
                off += b.nrows();
            }
        }
        v
    }
}

pub fn factor_v<M: StateSpaceModel + ?Sized>(model: &M, x: &StateSequence) -> Result<FactorV> {
    check_dims(model, x)?;
    let n = model.state_dim();
    let mut process = Vec::with_capacity(model.num_steps());
    let mut measurement = Vec::with_capacity(model.num_steps());
    for k in 0..model.num_steps() {
        let xk = x.block(k);
        let q = model.process_factor(k, &xk);
        check_shape(&q, n, n)?;
        let r = model.measurement_factor(k, &xk);
        let m = model.meas_dim(k);
        check_shape(&r, m, m)?;
        debug_assert!(is_lower_triangular(&q) && is_lower_triangular(&r), "factors must be lower triangular");
        process.push(q);
        measurement.push(r);
    }
    Ok(FactorV { process, measurement })
}

fn is_lower_triangular(m: &DMatrix<f64>) -> bool {
    (0..m.nrows()).all(|i| (i + 1..m.ncols()).all(|j| m[(i, j)] == 0.0))
}

/// Structured Jacobian of `c(x)`: identity on the process block of each
/// step, `-G_k` coupling the process block of step `k` to state `k - 1`,
/// and `H_k` on the measurement block.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualJacobian {
    layout: ResidualLayout,
    /// `G_k` for `k >= 1`; index 0 is unused and empty.
    pub process: Vec<DMatrix<f64>>,
    pub measurement: Vec<DMatrix<f64>>,
}

impl ResidualJacobian {
    pub fn layout(&self) -> &ResidualLayout {
        &self.layout
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.layout.state_dim;
        let steps = self.layout.num_steps();
        let mut j = DMatrix::zeros(self.layout.len(), n * steps);
        for k in 0..steps {
            let off = self.layout.offset(k);
            j.view_mut((off, k * n), (n, n)).fill_with_identity();
            if k > 0 {
                j.view_mut((off, (k - 1) * n), (n, n)).copy_from(&(-&self.process[k]));
            }
            let h = &self.measurement[k];
            j.view_mut((off + n, k * n), h.shape()).copy_from(h);
        }
        j
    }

    pub fn mul_vec(&self, d: &DVector<f64>) -> DVector<f64> {
        let n = self.layout.state_dim;
        let mut out = DVector::zeros(self.layout.len());
        for k in 0..self.layout.num_steps() {
            let off = self.layout.offset(k);
            let dk = d.rows(k * n, n);
            let mut p: DVector<f64> = dk.into_owned();
            if k > 0 {
                p -= &self.process[k] * d.rows((k - 1) * n, n);
            }
            out.rows_mut(off, n).copy_from(&p);
            let h = &self.measurement[k];
            out.rows_mut(off + n, h.nrows()).copy_from(&(h * dk));
        }
        out
    }
}

pub fn jacobian_c<M: StateSpaceModel + ?Sized>(model: &M, x: &StateSequence) -> Result<ResidualJacobian> {
    check_dims(model, x)?;
    let layout = ResidualLayout::of(model);
    let mut process = Vec::with_capacity(model.num_steps());
    let mut measurement = Vec::with_capacity(model.num_steps());
    for k in 0..model.num_steps() {
        let sd = step_derivatives(model, x, k, &x.block(k))?;
        process.push(sd.g.unwrap_or_else(|| DMatrix::zeros(0, 0)));
        measurement.push(sd.h);
    }
    Ok(ResidualJacobian { layout, process, measurement })
}
