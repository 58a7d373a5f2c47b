//! Outer generalized Gauss-Newton loop with Armijo backtracking.

use crate::error::{Result, SmootherError};
use crate::objective::{assemble_subproblem, eval_k, ObjectiveEval};
use crate::statespace::{factor_v, StateSequence, StateSpaceModel};
use crate::subproblem::{solve_subproblem, InnerOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgnConfig {
    /// Termination threshold on the model decrease; `None` means `1e-8 * (1 + |K(x)|)`
    /// at the current iterate.
    pub epsilon: Option<f64>,
    pub omega: f64,
    /// Sufficient-decrease fraction of the Armijo rule.
    pub beta: f64,
    /// Backtracking factor.
    pub gamma: f64,
    pub max_outer: usize,
    pub inner: InnerOptions,
    pub keep_iterates: bool,
}

impl Default for GgnConfig {
    fn default() -> Self {
        Self { epsilon: None, omega: 1e-4, beta: 1e-4, gamma: 0.5, max_outer: 100, inner: InnerOptions::default(), keep_iterates: false }
    }
}

impl GgnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(SmootherError::InvalidConfig(what.to_string()));
        if let Some(eps) = self.epsilon {
            if !(eps >= 0.0) {
                return bad("epsilon must be >= 0");
            }
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return bad("omega must be > 0");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// `K(x^nu)` before the step.
    pub objective: f64,
    /// `Delta(x^nu; d^nu)`.
    pub delta: f64,
    pub step: f64,
    pub trials: usize,
    pub inner_iters: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GgnTrace {
    pub iterations: Vec<IterationRecord>,
    /// `x^nu` for each recorded iteration, kept only with `GgnConfig::keep_iterates`.
    pub iterates: Vec<StateSequence>,
}

impl GgnTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn objectives(&self) -> impl Iterator<Item = f64> + '_ {
        self.iterations.iter().map(|r| r.objective)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    /// Backtracking went below `2^-52`; usually a gradient or assembly bug.
    LineSearchStalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmootherSolution {
    pub x: StateSequence,
    pub status: Status,
    pub trace: GgnTrace,
    pub final_objective: f64,
    /// Model decrease of the last subproblem solved.
    pub final_delta: f64,
}

pub fn smooth<M: StateSpaceModel + ?Sized>(model: &M, x0: StateSequence, cfg: &GgnConfig) -> Result<SmootherSolution> {
    cfg.validate()?;
    let mut eval = eval_k(model, &x0)?;
    if !eval.in_domain {
        return Err(SmootherError::InfeasibleStart);
    }
    let min_step = f64::EPSILON;

    let mut x = x0;
    let mut trace = GgnTrace::default();
    let mut status = Status::MaxIterations;
    let mut final_delta = f64::NEG_INFINITY;

    for _ in 0..=cfg.max_outer {
        let data = assemble_subproblem(model, &x, cfg.omega)?;
        let sub = solve_subproblem(&data, &cfg.inner)?;
        let delta = sub.delta;
        final_delta = delta;
        let epsilon = cfg.epsilon.unwrap_or(1e-8 * (1.0 + eval.value.abs()));
        if delta >= -epsilon {
            status = Status::Converged;
            break;
        }
        if trace.len() == cfg.max_outer {
            break;
        }

        let d = &sub.triple.d;
        let mut t = 1.0;
        let mut trials = 0;
        let accepted: Option<(StateSequence, ObjectiveEval)> = loop {
            trials += 1;
            let trial = x.step(t, d);
            let te = eval_k(model, &trial)?;
            if te.in_domain && te.value <= eval.value + cfg.beta * t * delta {
                break Some((trial, te));
            }
            t *= cfg.gamma;
            if t < min_step {
                break None;
            }
        };
        trace.iterations.push(IterationRecord {
            objective: eval.value,
            delta,
            step: if accepted.is_some() { t } else { 0.0 },
            trials,
            inner_iters: sub.inner_iters,
            kkt_residual: sub.kkt_residual,
        });
        if cfg.keep_iterates {
            trace.iterates.push(x.clone());
        }
        match accepted {
            Some((next, next_eval)) => {
                x = next;
                eval = next_eval;
            }
            None => {
                status = Status::LineSearchStalled;
                break;
            }
        }
    }

    debug_assert!(factor_v(model, &x).map(|v| v.in_domain()).unwrap_or(false));
    Ok(SmootherSolution { x, status, trace, final_objective: eval.value, final_delta })
}

/// Dead-reckoned sequence `x_0 = g0`, `x_k = g_k(x_{k-1})`.
pub fn dead_reckoning<M: StateSpaceModel + ?Sized>(model: &M) -> StateSequence {
    let mut blocks = Vec::with_capacity(model.num_steps());
    let mut prev = model.prior_mean();
    blocks.push(prev.clone());
    for k in 1..model.num_steps() {
        prev = model.process(k, &prev);
        blocks.push(prev.clone());
    }
    StateSequence::from_blocks(&blocks).expect("consistent state dimension")
}

/// Pulls `x` toward `interior` (`x + theta (interior - x)`, `theta = 1 - 2^-i`)
/// until it is in the domain of `K`.
pub fn project_into_domain<M: StateSpaceModel + ?Sized>(
    model: &M,
    x: StateSequence,
    interior: &StateSequence,
) -> Result<StateSequence> {
    if factor_v(model, &x)?.in_domain() {
        return Ok(x);
    }
    if !factor_v(model, interior)?.in_domain() {
        return Err(SmootherError::InfeasibleStart);
    }
    let towards = interior.as_vector() - x.as_vector();
    let mut keep = 0.5;
    while keep > f64::EPSILON {
        let cand = x.step(1.0 - keep, &towards);
        if factor_v(model, &cand)?.in_domain() {
            return Ok(cand);
        }
        keep *= 0.5;
    }
    Ok(interior.clone())
}
