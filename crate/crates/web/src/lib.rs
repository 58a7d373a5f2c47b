//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain numbers or strings and returns a JSON string, so
//! the page needs no generated TypeScript types. The `*_report` functions hold
//! the logic and are what the native tests exercise. Seeds are `u32` on the
//! JS side so they arrive as plain numbers rather than `BigInt`.

use serde::Serialize;
use statecov::experiment::{run_experiment, simulate, BaselineMode, ExperimentConfig};
use statecov::{GgnConfig, Status};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct SimulationReport {
    pub t: Vec<f64>,
    pub truth_x1: Vec<f64>,
    pub truth_x2: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct IterationReport {
    pub objective: f64,
    pub delta: f64,
    pub step: f64,
    pub inner_iters: usize,
}

#[derive(Debug, Serialize)]
pub struct SmoothingReport {
    pub t: Vec<f64>,
    pub truth_x1: Vec<f64>,
    pub truth_x2: Vec<f64>,
    pub z: Vec<f64>,
    pub kf_x1: Vec<f64>,
    pub rts_x1: Vec<f64>,
    pub eks_x1: Vec<f64>,
    pub eks_x2: Vec<f64>,
    /// `[kf, rts, eks]`, each `[x1, x2]`.
    pub mse: [[f64; 2]; 3],
    pub status: String,
    pub final_objective: f64,
    pub iterations: Vec<IterationReport>,
}

fn config(n: usize, seed: u64, baseline: &str, omega: f64) -> Result<ExperimentConfig, String> {
    let baseline: BaselineMode = baseline.parse()?;
    Ok(ExperimentConfig {
        num_steps: n,
        seed,
        baseline,
        solver: GgnConfig { omega, ..Default::default() },
        ..Default::default()
    })
}

pub fn simulation_report(n: usize, seed: u64) -> Result<SimulationReport, String> {
    let data = simulate(&config(n, seed, "median", 1e-4)?).map_err(|e| e.to_string())?;
    Ok(SimulationReport {
        truth_x1: data.truth.iter().map(|x| x[0]).collect(),
        truth_x2: data.truth.iter().map(|x| x[1]).collect(),
        t: data.times,
        z: data.z,
    })
}

pub fn smoothing_report(n: usize, seed: u64, baseline: &str, omega: f64) -> Result<SmoothingReport, String> {
    let run = run_experiment(&config(n, seed, baseline, omega)?).map_err(|e| e.to_string())?;
    let col = |f: fn(&statecov::experiment::StepRecord) -> f64| run.records.iter().map(f).collect::<Vec<_>>();
    Ok(SmoothingReport {
        t: col(|r| r.t),
        truth_x1: col(|r| r.truth[0]),
        truth_x2: col(|r| r.truth[1]),
        z: col(|r| r.z),
        kf_x1: col(|r| r.kf[0]),
        rts_x1: col(|r| r.rts[0]),
        eks_x1: col(|r| r.eks[0]),
        eks_x2: col(|r| r.eks[1]),
        mse: [run.mse.kf, run.mse.rts, run.mse.eks],
        status: match run.status {
            Status::Converged => "converged",
            Status::MaxIterations => "max iterations",
            Status::LineSearchStalled => "line search stalled",
        }
        .to_string(),
        final_objective: run.final_objective,
        iterations: run
            .trace
            .iterations
            .iter()
            .map(|r| IterationReport { objective: r.objective, delta: r.delta, step: r.step, inner_iters: r.inner_iters })
            .collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// Noisy measurements of the benchmark trajectory.
#[wasm_bindgen]
pub fn simulate_json(n: usize, seed: u32) -> Result<String, JsError> {
    to_js(simulation_report(n, seed.into()))
}

/// Runs the filter, the RTS smoother and the extended smoother on one dataset.
#[wasm_bindgen]
pub fn smooth_json(n: usize, seed: u32, baseline: &str, omega: f64) -> Result<String, JsError> {
    to_js(smoothing_report(n, seed.into(), baseline, omega))
}
