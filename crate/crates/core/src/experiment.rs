//! Synthetic benchmark with a state-dependent measurement variance.
//!
//! Truth: `x(t) = (1 - 2 cos t, t - 2 sin t)` on a closed uniform grid.
//! Dynamics: `x_k = [[1, 0], [dt, 1]] x_{k-1} + w_k` with the integrated
//! random-walk covariance `Q = [[dt, dt^2/2], [dt^2/2, dt^3/3]]`.
//! Measurements: `z_k = x_{2,k} + v_k` with `R_k^{-1/2}(x_k) = 3 - x_{1,k}`,
//! i.e. variance `(3 - x_{1,k})^-2`, which blows up as `x_1` approaches 3.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::classic::{inverse_cholesky_factor, kalman_filter, rts_smooth, LinearGaussianModel};
use crate::error::{Result, SmootherError};
use crate::ggn::{dead_reckoning, project_into_domain, smooth, GgnConfig, GgnTrace, Status};
use crate::statespace::{FactorDerivative, StateSequence, StateSpaceModel};

/// Position of the variance singularity in `x_1`.
pub const SINGULAR_X1: f64 = 3.0;

/// Which fixed measurement variance the classic filter and smoother use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineMode {
    /// Median over the grid of the true variances.
    Median,
    Fixed(f64),
    /// The true per-step variances.
    Oracle,
}

impl FromStr for BaselineMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "median" => Ok(Self::Median),
            "oracle" => Ok(Self::Oracle),
            _ => {
                let v = s
                    .strip_prefix("fixed=")
                    .ok_or_else(|| format!("expected median, oracle or fixed=VALUE, got {s:?}"))?;
                let v: f64 = v.parse().map_err(|e| format!("bad fixed variance {v:?}: {e}"))?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(format!("fixed variance must be positive, got {v}"));
                }
                Ok(Self::Fixed(v))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub num_steps: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub seed: u64,
    pub solver: GgnConfig,
    pub baseline: BaselineMode,
    /// Prior mean of the first state; `None` uses the true initial state.
    pub prior_mean: Option<[f64; 2]>,
    /// Multiplies the simulated measurement noise; 1 draws from the true model.
    pub noise_scale: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_steps: 100,
            t_start: 0.0,
            t_end: 4.0 * PI,
            seed: 0,
            solver: GgnConfig::default(),
            baseline: BaselineMode::Median,
            prior_mean: None,
            noise_scale: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_steps < 2 {
            return Err(SmootherError::InvalidConfig("need at least 2 steps".into()));
        }
        if !(self.t_end > self.t_start) {
            return Err(SmootherError::InvalidConfig("time span must be increasing".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(SmootherError::InvalidConfig("noise scale must be finite and >= 0".into()));
        }
        self.solver.validate()
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / (self.num_steps - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.num_steps).map(|k| self.t_start + k as f64 * dt).collect()
    }
}

pub fn truth_at(t: f64) -> [f64; 2] {
    [1.0 - 2.0 * t.cos(), t - 2.0 * t.sin()]
}

/// True measurement variance `(3 - x_1)^-2`.
pub fn true_variance(x1: f64) -> f64 {
    (SINGULAR_X1 - x1).powi(-2)
}

/// Standard normal draws by the Marsaglia polar method on top of ChaCha20.
///
/// Both outputs of each accepted pair are used, in order.
#[derive(Debug, Clone)]
pub struct GaussianSource {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianSource {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha20Rng::seed_from_u64(seed), spare: None }
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        loop {
            let u = 2.0 * self.rng.gen::<f64>() - 1.0;
            let v = 2.0 * self.rng.gen::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let scale = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * scale);
                return u * scale;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub times: Vec<f64>,
    pub truth: Vec<[f64; 2]>,
    pub z: Vec<f64>,
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<SimulatedData> {
    cfg.validate()?;
    let times = cfg.times();
    let truth: Vec<[f64; 2]> = times.iter().map(|&t| truth_at(t)).collect();
    let mut gauss = GaussianSource::new(cfg.seed);
    let z = truth
        .iter()
        .map(|x| x[1] + cfg.noise_scale * gauss.next_standard() * true_variance(x[0]).sqrt())
        .collect();
    Ok(SimulatedData { times, truth, z })
}

/// Process covariance of the integrated random walk for step `dt`.
pub fn process_covariance(dt: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[dt, dt * dt / 2.0, dt * dt / 2.0, dt * dt * dt / 3.0])
}

pub fn transition(dt: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, dt, 1.0])
}

/// The benchmark model with measurement factor `3 - x_1`.
#[derive(Debug, Clone)]
pub struct BenchmarkModel {
    transition: DMatrix<f64>,
    qfac: DMatrix<f64>,
    prior_mean: DVector<f64>,
    z: Vec<f64>,
}

impl BenchmarkModel {
    pub fn new(dt: f64, prior_mean: [f64; 2], z: Vec<f64>) -> Result<Self> {
        let qfac = inverse_cholesky_factor(&process_covariance(dt))
            .ok_or(SmootherError::NotPositiveDefinite { block: 0 })?;
        Ok(Self { transition: transition(dt), qfac, prior_mean: DVector::from_row_slice(&prior_mean), z })
    }

    pub fn process_factor_matrix(&self) -> &DMatrix<f64> {
        &self.qfac
    }
}

pub fn build_model(cfg: &ExperimentConfig, z: Vec<f64>) -> Result<BenchmarkModel> {
    cfg.validate()?;
    let prior = cfg.prior_mean.unwrap_or_else(|| truth_at(cfg.t_start));
    BenchmarkModel::new(cfg.dt(), prior, z)
}

impl StateSpaceModel for BenchmarkModel {
    fn num_steps(&self) -> usize {
        self.z.len()
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn meas_dim(&self, _k: usize) -> usize {
        1
    }
    fn prior_mean(&self) -> DVector<f64> {
        self.prior_mean.clone()
    }
    fn measurement(&self, k: usize) -> DVector<f64> {
        DVector::from_element(1, self.z[k])
    }
    fn process(&self, _k: usize, prev: &DVector<f64>) -> DVector<f64> {
        &self.transition * prev
    }
    fn process_jacobian(&self, _k: usize, _prev: &DVector<f64>) -> DMatrix<f64> {
        self.transition.clone()
    }
    fn observe(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x[1])
    }
    fn observe_jacobian(&self, _k: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[0.0, 1.0])
    }
    fn process_factor(&self, _k: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        self.qfac.clone()
    }
    fn process_factor_derivative(&self, _k: usize, _x: &DVector<f64>) -> FactorDerivative {
        FactorDerivative::zeros(2, 2)
    }
    fn measurement_factor(&self, _k: usize, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, SINGULAR_X1 - x[0])
    }
    fn measurement_factor_derivative(&self, _k: usize, _x: &DVector<f64>) -> FactorDerivative {
        FactorDerivative::new(vec![DMatrix::from_row_slice(1, 2, &[-1.0, 0.0])])
    }
}

/// Linear-Gaussian baseline sharing the benchmark dynamics.
pub fn baseline_model(cfg: &ExperimentConfig, data: &SimulatedData) -> Result<LinearGaussianModel> {
    let dt = cfg.dt();
    let prior = cfg.prior_mean.unwrap_or_else(|| truth_at(cfg.t_start));
    let variances: Vec<f64> = data.truth.iter().map(|x| true_variance(x[0])).collect();
    let meas: Vec<f64> = match cfg.baseline {
        BaselineMode::Median => vec![median(&variances); variances.len()],
        BaselineMode::Fixed(v) => vec![v; variances.len()],
        BaselineMode::Oracle => variances,
    };
    let steps = cfg.num_steps;
    LinearGaussianModel::new(
        DVector::from_row_slice(&prior),
        vec![transition(dt); steps],
        vec![process_covariance(dt); steps],
        vec![DMatrix::from_row_slice(1, 2, &[0.0, 1.0]); steps],
        meas.into_iter().map(|v| DMatrix::from_element(1, 1, v)).collect(),
    )
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub truth: [f64; 2],
    pub z: f64,
    pub kf: [f64; 2],
    pub rts: [f64; 2],
    pub eks: [f64; 2],
}

/// Per-component mean squared errors against the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseSummary {
    pub kf: [f64; 2],
    pub rts: [f64; 2],
    pub eks: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<StepRecord>,
    pub mse: MseSummary,
    pub status: Status,
    pub trace: GgnTrace,
    pub final_objective: f64,
}

fn pair(v: &DVector<f64>) -> [f64; 2] {
    [v[0], v[1]]
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let data = simulate(cfg)?;
    let baseline = baseline_model(cfg, &data)?;
    let z: Vec<DVector<f64>> = data.z.iter().map(|&v| DVector::from_element(1, v)).collect();
    let kf = kalman_filter(&baseline, &z)?;
    let rts = rts_smooth(&baseline, &z)?;

    let model = build_model(cfg, data.z.clone())?;
    let x0 = project_into_domain(&model, dead_reckoning(&model), &StateSequence::zeros(2, cfg.num_steps))?;
    let sol = smooth(&model, x0, &cfg.solver)?;

    let records: Vec<StepRecord> = (0..cfg.num_steps)
        .map(|k| StepRecord {
            k,
            t: data.times[k],
            truth: data.truth[k],
            z: data.z[k],
            kf: pair(&kf.means[k]),
            rts: pair(&rts.means[k]),
            eks: pair(&sol.x.block(k)),
        })
        .collect();
    let mse_of = |pick: fn(&StepRecord) -> [f64; 2]| {
        let mut acc = [0.0; 2];
        for r in &records {
            let e = pick(r);
            for i in 0..2 {
                acc[i] += (e[i] - r.truth[i]).powi(2);
            }
        }
        acc.map(|v| v / records.len() as f64)
    };
    let mse = MseSummary { kf: mse_of(|r| r.kf), rts: mse_of(|r| r.rts), eks: mse_of(|r| r.eks) };
    Ok(ExperimentResult { records, mse, status: sol.status, trace: sol.trace, final_objective: sol.final_objective })
}

pub const CSV_HEADER: &str = "k,t,truth_x1,truth_x2,z,kf_x1,kf_x2,rts_x1,rts_x2,eks_x1,eks_x2";

/// Formats `v` in plain decimal notation with 17 significant digits.
pub fn format_sig17(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0.0000000000000000".to_string();
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let body = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else if exp as usize >= digits.len() - 1 {
        format!("{}{}", digits, "0".repeat(exp as usize + 1 - digits.len()))
    } else {
        let split = exp as usize + 1;
        format!("{}.{}", &digits[..split], &digits[split..])
    };
    format!("{sign}{body}")
}

pub fn write_csv<W: Write>(result: &ExperimentResult, mut out: W) -> Result<()> {
    let mut buf = String::new();
    writeln!(buf, "{CSV_HEADER}").unwrap();
    for r in &result.records {
        let fields = [r.t, r.truth[0], r.truth[1], r.z, r.kf[0], r.kf[1], r.rts[0], r.rts[1], r.eks[0], r.eks[1]];
        let cols: Vec<String> = fields.iter().map(|&v| format_sig17(v)).collect();
        writeln!(buf, "{},{}", r.k, cols.join(",")).unwrap();
    }
    writeln!(buf, "# estimator,mse_x1,mse_x2").unwrap();
    for (name, m) in [("kf", result.mse.kf), ("rts", result.mse.rts), ("eks", result.mse.eks)] {
        writeln!(buf, "# {name},{},{}", format_sig17(m[0]), format_sig17(m[1])).unwrap();
    }
    writeln!(buf, "# status,{:?},iterations,{}", result.status, result.trace.len()).unwrap();
    out.write_all(buf.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub num_steps: usize,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub seconds: f64,
    /// Wall time divided by the number of subproblems solved (steps taken plus the final check).
    pub seconds_per_outer: f64,
}

/// Times the extended smoother on the benchmark model for each size, keeping
/// the fastest of `reps` runs.
pub fn bench_scaling(sizes: &[usize], seed: u64, reps: usize) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &num_steps in sizes {
        let cfg = ExperimentConfig { num_steps, seed, ..Default::default() };
        let data = simulate(&cfg)?;
        let model = build_model(&cfg, data.z)?;
        let x0 = project_into_domain(&model, dead_reckoning(&model), &StateSequence::zeros(2, num_steps))?;
        let mut best: Option<BenchRow> = None;
        for _ in 0..reps.max(1) {
            let start = Instant::now();
            let sol = smooth(&model, x0.clone(), &cfg.solver)?;
            let seconds = start.elapsed().as_secs_f64();
            let outer = sol.trace.len() + 1;
            let inner = sol.trace.iterations.iter().map(|r| r.inner_iters).sum();
            let row = BenchRow {
                num_steps,
                outer_iters: sol.trace.len(),
                inner_iters: inner,
                seconds,
                seconds_per_outer: seconds / outer as f64,
            };
            if best.as_ref().map_or(true, |b| row.seconds_per_outer < b.seconds_per_outer) {
                best = Some(row);
            }
        }
        rows.extend(best);
    }
    Ok(rows)
}
