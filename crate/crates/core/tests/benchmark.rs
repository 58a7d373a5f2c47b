use statecov::experiment::{run_experiment, write_csv, BaselineMode, ExperimentConfig};
use statecov::Status;

#[test]
fn default_seed_zero_converges_with_monotone_trace() {
    let run = run_experiment(&ExperimentConfig::default()).unwrap();
    assert_eq!(run.status, Status::Converged);
    assert!(run.trace.len() <= 50);
    let ks: Vec<f64> = run.trace.objectives().chain(std::iter::once(run.final_objective)).collect();
    assert!(ks.windows(2).all(|w| w[1] < w[0]));
    assert!(run.mse.eks[0] < run.mse.rts[0]);
}

#[test]
fn oracle_baseline_runs_and_improves_on_median() {
    let median = run_experiment(&ExperimentConfig::default()).unwrap();
    let oracle = run_experiment(&ExperimentConfig { baseline: BaselineMode::Oracle, ..Default::default() }).unwrap();
    assert!(oracle.mse.rts[0] < median.mse.rts[0]);
    // The extended smoother does not depend on the baseline choice.
    assert_eq!(oracle.mse.eks, median.mse.eks);
}

#[test]
fn csv_is_byte_identical_across_runs() {
    let render = || {
        let mut buf = Vec::new();
        write_csv(&run_experiment(&ExperimentConfig { seed: 5, ..Default::default() }).unwrap(), &mut buf).unwrap();
        buf
    };
    assert_eq!(render(), render());
}
