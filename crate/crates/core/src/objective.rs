//! The extended MAP objective
//!
//! ```text
//! K(x) = 1/2 |V(x) c(x)|^2 - sum_i log V_ii(x)
//! ```
//!
//! and the pieces of its Gauss-Newton model: the Gram matrix
//! `C = omega I + Psi^T Psi` (block tridiagonal), the gradient `a = Psi^T V c`
//! of the quadratic part, and the Jacobian of the factor diagonal.
//! `Psi = V dc + sum_i c_i dV_i.` is block lower-bidiagonal, so everything is
//! assembled step by step in `O(n^3 N)`.

use nalgebra::{DMatrix, DVector};

use crate::blocktri::BlockTridiagonalMatrix;
use crate::error::{Result, SmootherError};
use crate::statespace::{
    check_dims, factor_v, residual_c, step_derivatives, step_values, ResidualLayout, StateSequence,
    StateSpaceModel,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveEval {
    /// `K(x)`; `+inf` outside the domain.
    pub value: f64,
    /// `1/2 |V c|^2`.
    pub quad: f64,
    /// `-sum log V_ii`; `+inf` outside the domain.
    pub barrier: f64,
    pub in_domain: bool,
}

pub fn eval_k<M: StateSpaceModel + ?Sized>(model: &M, x: &StateSequence) -> Result<ObjectiveEval> {
    check_dims(model, x)?;
    let n = model.state_dim();
    let mut quad = 0.0;
    let mut barrier = 0.0;
    let mut in_domain = true;
    for k in 0..model.num_steps() {
        let sv = step_values(model, x, k, &x.block(k))?;
        quad += 0.5 * ((&sv.qf * &sv.w).norm_squared() + (&sv.rf * &sv.r).norm_squared());
        for v in sv.qf.diagonal().iter().chain(sv.rf.diagonal().iter()) {
            if *v > 0.0 && v.is_finite() {
                barrier -= v.ln();
            } else {
                in_domain = false;
            }
        }
        debug_assert_eq!(sv.w.len(), n);
    }
    if !in_domain || !quad.is_finite() {
        return Ok(ObjectiveEval { value: f64::INFINITY, quad, barrier: f64::INFINITY, in_domain: false });
    }
    Ok(ObjectiveEval { value: quad + barrier, quad, barrier, in_domain })
}

/// Jacobian of `vec{V_ii}` with respect to `x`.
///
/// Every diagonal entry of `V` belonging to step `k` depends on `x_k` only,
/// so the map is stored as one `(n + m(k)) x n` block per step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagJacobian {
    layout: ResidualLayout,
    blocks: Vec<DMatrix<f64>>,
}

impl DiagJacobian {
    pub fn new(layout: ResidualLayout, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if blocks.len() != layout.num_steps() {
            return Err(SmootherError::DimensionMismatch { expected: layout.num_steps(), found: blocks.len() });
        }
        for (k, b) in blocks.iter().enumerate() {
            if b.nrows() != layout.step_len(k) || b.ncols() != layout.state_dim {
                return Err(SmootherError::DimensionMismatch { expected: layout.step_len(k), found: b.nrows() });
            }
        }
        Ok(Self { layout, blocks })
    }

    pub fn layout(&self) -> &ResidualLayout {
        &self.layout
    }

    pub fn block(&self, k: usize) -> &DMatrix<f64> {
        &self.blocks[k]
    }

    /// `V' d`, length `M + nN`.
    pub fn mul_vec(&self, d: &DVector<f64>) -> DVector<f64> {
        let n = self.layout.state_dim;
        let mut out = DVector::zeros(self.layout.len());
        for (k, b) in self.blocks.iter().enumerate() {
            out.rows_mut(self.layout.offset(k), b.nrows()).copy_from(&(b * d.rows(k * n, n)));
        }
        out
    }

    /// `V'^T u`, length `nN`.
    pub fn tr_mul_vec(&self, u: &DVector<f64>) -> DVector<f64> {
        let n = self.layout.state_dim;
        let mut out = DVector::zeros(n * self.blocks.len());
        for (k, b) in self.blocks.iter().enumerate() {
            let uk = u.rows(self.layout.offset(k), b.nrows());
            out.rows_mut(k * n, n).copy_from(&(b.transpose() * uk));
        }
        out
    }

    /// Block `k` of `V'^T D(weights) V'`.
    pub fn weighted_gram(&self, k: usize, weights: &DVector<f64>) -> DMatrix<f64> {
        let b = &self.blocks[k];
        let w = weights.rows(self.layout.offset(k), b.nrows());
        let mut scaled = b.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= w[i];
        }
        b.transpose() * scaled
    }

    pub fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|&v| v == 0.0))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.layout.state_dim;
        let mut out = DMatrix::zeros(self.layout.len(), n * self.blocks.len());
        for (k, b) in self.blocks.iter().enumerate() {
            out.view_mut((self.layout.offset(k), k * n), b.shape()).copy_from(b);
        }
        out
    }
}

/// Data of the direction-finding subproblem
///
/// ```text
/// min_d 1/2 d^T C d + a^T d - sum_i log s_i   s.t.  s = vdiag + vscript d
/// ```
#[derive(Debug, Clone)]
pub struct SubproblemData {
    pub c: BlockTridiagonalMatrix,
    pub a: DVector<f64>,
    pub vdiag: DVector<f64>,
    pub vscript: DiagJacobian,
    pub omega: f64,
}

impl SubproblemData {
    pub fn dim(&self) -> usize {
        self.a.len()
    }
}

/// Assembles `C`, `a`, `vec{V_ii}` and its Jacobian at `x`.
pub fn assemble_subproblem<M: StateSpaceModel + ?Sized>(
    model: &M,
    x: &StateSequence,
    omega: f64,
) -> Result<SubproblemData> {
    check_dims(model, x)?;
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(SmootherError::InvalidConfig(format!("omega must be non-negative, got {omega}")));
    }
    let n = model.state_dim();
    let steps = model.num_steps();
    let layout = ResidualLayout::of(model);

    let mut diag = vec![DMatrix::identity(n, n) * omega; steps];
    let mut sub = Vec::with_capacity(steps.saturating_sub(1));
    let mut a = DVector::zeros(n * steps);
    let mut vdiag = DVector::zeros(layout.len());
    let mut vblocks = Vec::with_capacity(steps);

    for k in 0..steps {
        let xk = x.block(k);
        let sv = step_values(model, x, k, &xk)?;
        let sd = step_derivatives(model, x, k, &xk)?;

        let off = layout.offset(k);
        let m = sv.r.len();
        for (i, v) in sv.qf.diagonal().iter().chain(sv.rf.diagonal().iter()).enumerate() {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(SmootherError::OutOfDomain);
            }
            vdiag[off + i] = *v;
        }

        // Psi blocks: process rows touch x_k (p) and x_{k-1} (e); measurement rows touch x_k (mk).
        let p = &sv.qf + sd.dq.contract(&sv.w);
        let mk = &sv.rf * &sd.h + sd.dr.contract(&sv.r);
        let f1p = &sv.qf * &sv.w;
        let f1m = &sv.rf * &sv.r;

        diag[k] += p.transpose() * &p + mk.transpose() * &mk;
        let mut ak = p.transpose() * &f1p + mk.transpose() * &f1m;
        if let Some(g) = &sd.g {
            let e = -(&sv.qf * g);
            diag[k - 1] += e.transpose() * &e;
            sub.push(p.transpose() * &e);
            let prev = e.transpose() * &f1p;
            let mut ap = a.rows_mut((k - 1) * n, n);
            ap += prev;
        }
        ak += a.rows(k * n, n);
        a.rows_mut(k * n, n).copy_from(&ak);

        let mut vb = DMatrix::zeros(n + m, n);
        vb.rows_mut(0, n).copy_from(&sd.dq.diag_jacobian());
        vb.rows_mut(n, m).copy_from(&sd.dr.diag_jacobian());
        vblocks.push(vb);
    }

    Ok(SubproblemData {
        c: BlockTridiagonalMatrix::new(diag, sub)?,
        a,
        vdiag,
        vscript: DiagJacobian::new(layout, vblocks)?,
        omega,
    })
}

/// Gradient of `K`: `a - V'^T (1 / vec{V_ii})`.
pub fn grad_k<M: StateSpaceModel + ?Sized>(model: &M, x: &StateSequence) -> Result<DVector<f64>> {
    let data = assemble_subproblem(model, x, 0.0)?;
    let inv = data.vdiag.map(|v| 1.0 / v);
    Ok(&data.a - data.vscript.tr_mul_vec(&inv))
}

/// `F(x) = (V c, vec{V_ii})`, the inner map of the composite form.
pub fn inner_map<M: StateSpaceModel + ?Sized>(model: &M, x: &StateSequence) -> Result<(DVector<f64>, DVector<f64>)> {
    let c = residual_c(model, x)?;
    let v = factor_v(model, x)?;
    Ok((v.to_dense() * c, v.diag()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{RandomSmoothModel, ScalarModel};

    fn seq(v: &[f64]) -> StateSequence {
        StateSequence::new(1, DVector::from_row_slice(v)).unwrap()
    }

    #[test]
    fn hand_evaluated_scalar_objective() {
        let mut model = ScalarModel::new(vec![0.0], 0.0);
        model.r_const = 3.0;
        model.r_slope = -1.0;
        let k = eval_k(&model, &seq(&[1.0])).unwrap();
        assert!(k.in_domain);
        assert!((k.quad - 2.5).abs() < 1e-15);
        assert!((k.barrier + 2f64.ln()).abs() < 1e-15);
        assert!((k.value - 1.806_852_819_440_054_7).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_identity_factors_give_zero() {
        let model = ScalarModel::new(vec![0.5, 0.5], 0.5);
        let k = eval_k(&model, &seq(&[0.5, 0.5])).unwrap();
        assert_eq!(k.value, 0.0);
    }

    #[test]
    fn boundary_state_is_out_of_domain() {
        let mut model = ScalarModel::new(vec![0.0, 0.0], 0.0);
        model.r_const = 3.0;
        model.r_slope = -1.0;
        let k = eval_k(&model, &seq(&[0.0, 3.0])).unwrap();
        assert!(!k.in_domain);
        assert_eq!(k.value, f64::INFINITY);
        assert!(matches!(assemble_subproblem(&model, &seq(&[0.0, 3.0]), 1.0), Err(SmootherError::OutOfDomain)));
        assert!(matches!(grad_k(&model, &seq(&[0.0, 3.5])), Err(SmootherError::OutOfDomain)));
    }

    #[test]
    fn identity_model_blocks() {
        let mut model = ScalarModel::new(vec![1.0, 2.0, 3.0], 0.0);
        model.slope = 0.0;
        let data = assemble_subproblem(&model, &seq(&[0.1, 0.2, 0.3]), 0.1).unwrap();
        for k in 0..3 {
            assert!((data.c.diag_block(k)[(0, 0)] - 2.1).abs() < 1e-15);
        }
        for k in 0..2 {
            assert_eq!(data.c.sub_block(k)[(0, 0)], 0.0);
        }
        assert!(data.vscript.is_zero());
    }

    #[test]
    fn constant_factors_reduce_to_normal_equations() {
        let model = RandomSmoothModel::with_strength(5, 2, 4, 0.0);
        let x = model.interior_point();
        let data = assemble_subproblem(&model, &x, 0.0).unwrap();
        assert!(data.vscript.is_zero());
        let j = crate::statespace::jacobian_c(&model, &x).unwrap().to_dense();
        let v = factor_v(&model, &x).unwrap().to_dense();
        let vj = &v * &j;
        let expected = vj.transpose() * &vj;
        assert!((data.c.to_dense() - expected).amax() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..20 {
            let model = RandomSmoothModel::new(seed, 1 + (seed as usize % 3), 2 + (seed as usize % 6));
            let x = model.interior_point();
            let g = grad_k(&model, &x).unwrap();
            let eps = 1e-6;
            for i in 0..g.len() {
                let mut e = DVector::zeros(g.len());
                e[i] = eps;
                let kp = eval_k(&model, &x.step(1.0, &e)).unwrap().value;
                let km = eval_k(&model, &x.step(-1.0, &e)).unwrap().value;
                let fd = (kp - km) / (2.0 * eps);
                assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()), "seed {seed} i {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn diag_jacobian_products_match_dense() {
        let model = RandomSmoothModel::new(11, 3, 4);
        let x = model.interior_point();
        let data = assemble_subproblem(&model, &x, 1e-3).unwrap();
        let dense = data.vscript.to_dense();
        let d = DVector::from_fn(12, |i, _| (i as f64).sin());
        let u = DVector::from_fn(dense.nrows(), |i, _| (i as f64).cos());
        assert!((data.vscript.mul_vec(&d) - &dense * &d).amax() < 1e-14);
        assert!((data.vscript.tr_mul_vec(&u) - dense.transpose() * &u).amax() < 1e-14);
        let w = u.map(|v| v.abs() + 0.1);
        let full = dense.transpose() * DMatrix::from_diagonal(&w) * &dense;
        for k in 0..4 {
            assert!((data.vscript.weighted_gram(k, &w) - full.view((3 * k, 3 * k), (3, 3))).amax() < 1e-13);
        }
    }

    #[test]
    fn negative_omega_is_rejected() {
        let model = ScalarModel::new(vec![0.0], 0.0);
        assert!(matches!(assemble_subproblem(&model, &seq(&[0.0]), -1.0), Err(SmootherError::InvalidConfig(_))));
    }
}
