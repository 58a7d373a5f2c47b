//! Damped Newton solve of the direction-finding subproblem.
//!
//! The KKT conditions of
//!
//! ```text
//! min_d 1/2 d^T C d + a^T d - sum_i log s_i   s.t.  s = v + V' d
//! ```
//!
//! are written as `E(s, lambda, d) = 0` with
//!
//! ```text
//! E = [ s - v - V' d ;  s .* lambda - 1 ;  C d + a - V'^T lambda ]
//! ```
//!
//! Each Newton step eliminates `s` and `lambda` and solves the reduced system
//! `Phi dd = gamma` with `Phi = C + V'^T D(s)^-1 D(lambda) V'`. The correction
//! term is block diagonal, so `Phi` keeps the block-tridiagonal structure of `C`.

use nalgebra::DVector;

use crate::error::{Result, SmootherError};
use crate::objective::SubproblemData;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptions {
    /// Absolute KKT tolerance; `None` means `1e-9 * (1 + |a|_inf)`.
    pub tol: Option<f64>,
    pub max_inner: usize,
    /// Fraction-to-boundary factor applied to the largest positivity-preserving step.
    pub boundary_fraction: f64,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self { tol: None, max_inner: 50, boundary_fraction: 0.995 }
    }
}

impl InnerOptions {
    pub fn tolerance_for(&self, data: &SubproblemData) -> f64 {
        self.tol.unwrap_or_else(|| 1e-9 * (1.0 + data.a.amax()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktTriple {
    pub d: DVector<f64>,
    pub s: DVector<f64>,
    pub lambda: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemResult {
    pub triple: KktTriple,
    /// `Delta(x; d)`, the predicted change of `K`.
    pub delta: f64,
    /// `Delta(x; d) + omega/2 |d|^2`, the optimal subproblem value.
    pub delta_bar: f64,
    /// `|E|_inf` at the returned iterate.
    pub kkt_residual: f64,
    pub inner_iters: usize,
    /// False when `max_inner` ran out; the triple is then the best iterate seen.
    pub converged: bool,
    /// Subproblem objective at every accepted iterate, starting from `d = 0`.
    pub objective_history: Vec<f64>,
}

/// The three residual blocks of the KKT system.
#[derive(Debug, Clone)]
pub struct KktResidual {
    pub primal: DVector<f64>,
    pub complementarity: DVector<f64>,
    pub stationarity: DVector<f64>,
}

impl KktResidual {
    pub fn norm_inf(&self) -> f64 {
        self.primal.amax().max(self.complementarity.amax()).max(self.stationarity.amax())
    }

    fn norm_squared(&self) -> f64 {
        self.primal.norm_squared() + self.complementarity.norm_squared() + self.stationarity.norm_squared()
    }
}

pub fn kkt_residual(data: &SubproblemData, t: &KktTriple) -> Result<KktResidual> {
    let cd = data.c.mul_vec(&t.d)?;
    Ok(KktResidual {
        primal: &t.s - &data.vdiag - data.vscript.mul_vec(&t.d),
        complementarity: t.s.component_mul(&t.lambda).add_scalar(-1.0),
        stationarity: cd + &data.a - data.vscript.tr_mul_vec(&t.lambda),
    })
}

/// `1/2 d^T C d + a^T d - sum log(v + V' d)`, `+inf` when the log argument is not positive.
pub fn subproblem_objective(data: &SubproblemData, d: &DVector<f64>) -> Result<f64> {
    let lin = &data.vdiag + data.vscript.mul_vec(d);
    if lin.iter().any(|&v| !(v > 0.0)) {
        return Ok(f64::INFINITY);
    }
    let cd = data.c.mul_vec(d)?;
    Ok(0.5 * d.dot(&cd) + data.a.dot(d) - lin.iter().map(|v| v.ln()).sum::<f64>())
}

/// `Delta(x; d) = rho(F(x) + F'(x) d) - K(x)`.
///
/// Evaluated as `a^T d + 1/2 d^T (C - omega I) d - sum log(1 + (V' d)_i / v_i)`,
/// which avoids cancelling `K(x)` against itself.
pub fn model_decrease(data: &SubproblemData, d: &DVector<f64>) -> Result<f64> {
    let vd = data.vscript.mul_vec(d);
    let mut log_term = 0.0;
    for (dv, v) in vd.iter().zip(data.vdiag.iter()) {
        if !(v + dv > 0.0) {
            return Err(SmootherError::LinearizedDomainViolation);
        }
        log_term += (dv / v).ln_1p();
    }
    let cd = data.c.mul_vec(d)?;
    Ok(data.a.dot(d) + 0.5 * d.dot(&cd) - 0.5 * data.omega * d.norm_squared() - log_term)
}

fn max_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

pub fn solve_subproblem(data: &SubproblemData, opts: &InnerOptions) -> Result<SubproblemResult> {
    if data.vdiag.iter().any(|&v| !(v > 0.0)) {
        return Err(SmootherError::OutOfDomain);
    }
    let tol = opts.tolerance_for(data);
    let mut t = KktTriple {
        d: DVector::zeros(data.dim()),
        s: data.vdiag.clone(),
        lambda: data.vdiag.map(|v| 1.0 / v),
    };
    let mut res = kkt_residual(data, &t)?;
    let mut res_inf = res.norm_inf();
    let mut best = (t.clone(), res_inf);
    let mut history = vec![subproblem_objective(data, &t.d)?];
    let mut iters = 0;

    while res_inf > tol && iters < opts.max_inner {
        iters += 1;
        let (dd, dlambda, ds) = newton_direction(data, &t)?;

        let frac = |amax: f64| if amax > 1.0 { 1.0 } else { opts.boundary_fraction * amax };
        let alpha_p = frac(max_step(&t.s, &ds));
        let alpha_d = frac(max_step(&t.lambda, &dlambda));
        let step = |ap: f64, ad: f64| KktTriple {
            d: &t.d + &dd * ap,
            s: &t.s + &ds * ap,
            lambda: &t.lambda + &dlambda * ad,
        };

        // Separate primal and dual lengths first. They are not guaranteed to
        // reduce |E|, so fall back to a common length, along which the Newton
        // direction is a descent direction for |E|^2, and backtrack.
        let base = res.norm_squared();
        let accept = |r: &KktResidual, a: f64| r.norm_squared() <= (1.0 - 1e-4 * a).powi(2) * base;
        let mut alpha = alpha_p.min(alpha_d);
        let mut next = step(alpha_p, alpha_d);
        let mut next_res = kkt_residual(data, &next)?;
        if !accept(&next_res, alpha) {
            loop {
                next = step(alpha, alpha);
                next_res = kkt_residual(data, &next)?;
                if accept(&next_res, alpha) || alpha < 1e-12 {
                    break;
                }
                alpha *= 0.5;
            }
        }
        t = next;
        res = next_res;
        res_inf = res.norm_inf();
        history.push(subproblem_objective(data, &t.d)?);
        if res_inf < best.1 {
            best = (t.clone(), res_inf);
        }
        if alpha < 1e-12 {
            break;
        }
    }

    let converged = res_inf <= tol;
    let (t, res_inf) = if converged { (t, res_inf) } else { best };
    let delta = model_decrease(data, &t.d)?;
    let delta_bar = delta + 0.5 * data.omega * t.d.norm_squared();
    Ok(SubproblemResult {
        triple: t,
        delta,
        delta_bar,
        kkt_residual: res_inf,
        inner_iters: iters,
        converged,
        objective_history: history,
    })
}

/// Newton direction `(dd, dlambda, ds)` for `E` at `t`, by row reduction to `Phi dd = gamma`.
fn newton_direction(data: &SubproblemData, t: &KktTriple) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let ratio = t.lambda.component_div(&t.s);
    let mut phi = data.c.clone();
    for k in 0..phi.num_blocks() {
        phi.add_to_diag(k, &data.vscript.weighted_gram(k, &ratio));
    }
    let lin = &data.vdiag + data.vscript.mul_vec(&t.d);
    let inner = (DVector::from_element(lin.len(), 1.0) - t.lambda.component_mul(&lin)).component_div(&t.s);
    let gamma = data.vscript.tr_mul_vec(&(&t.lambda + inner)) - data.c.mul_vec(&t.d)? - &data.a;
    let dd = phi.factor()?.solve(&gamma)?;

    let lin_next = &lin + data.vscript.mul_vec(&dd);
    let dlambda = (DVector::from_element(lin.len(), 1.0) - t.lambda.component_mul(&lin_next)).component_div(&t.s);
    let ds = lin_next - &t.s;
    Ok((dd, dlambda, ds))
}
