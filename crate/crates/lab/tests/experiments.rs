use reachdim_lab::config::{Experiment, ExperimentConfig, SystemSpec};
use reachdim_lab::experiments;

#[test]
fn zero_gradient_time_has_zero_variance() {
    let mut cfg = ExperimentConfig::new(Experiment::TrainStats);
    cfg.sweep.insert("width".into(), vec![16.0, 64.0]);
    cfg.train.tau = 0.0;
    cfg.train.seeds = 4;
    let report = experiments::run(&cfg).unwrap();
    for w in [16, 64] {
        let v = report.table.summary_f64(&format!("variance_{w}")).unwrap();
        assert!(v.abs() < 1e-28, "variance {v} at width {w}");
    }
    let disp = report.table.column_f64("mean_displacement").unwrap();
    assert!(disp.iter().all(|d| *d == 0.0));
}

#[test]
fn short_training_moves_the_policy() {
    let mut cfg = ExperimentConfig::new(Experiment::TrainStats);
    cfg.sweep.insert("width".into(), vec![32.0, 128.0]);
    cfg.train.tau = 0.1;
    cfg.train.seeds = 3;
    let report = experiments::run(&cfg).unwrap();
    let disp = report.table.column_f64("mean_displacement").unwrap();
    assert!(disp.iter().any(|d| d.abs() > 0.0));
    assert!(report
        .table
        .summary_f64("variance_ratio")
        .unwrap()
        .is_finite());
}

#[test]
fn local_spectrum_ratios_are_ordered() {
    let mut cfg = ExperimentConfig::new(Experiment::LocalSpectrum);
    cfg.spectrum.num_policies = 60;
    cfg.policy.width = 64;
    cfg.sweep.insert("delta".into(), vec![0.02, 0.1]);
    let report = experiments::run(&cfg).unwrap();
    assert_eq!(report.table.rows.len(), 2);
    assert_eq!(report.table.summary_f64("residual_index"), Some(4.0));
    for k in 1..5 {
        let hi = report.table.column_f64(&format!("ratio_{k}")).unwrap();
        let lo = report
            .table
            .column_f64(&format!("ratio_{}", k + 1))
            .unwrap();
        assert!(hi.iter().zip(&lo).all(|(a, b)| a >= b));
    }
    assert_eq!(report.table.column_f64("ratio_1").unwrap(), vec![1.0, 1.0]);
    // Shorter horizons flatten the cloud.
    let r3 = report.table.column_f64("ratio_3").unwrap();
    assert!(r3[0] < r3[1]);
}

#[test]
fn toy_dim_rejects_non_chain_systems() {
    let mut cfg = ExperimentConfig::new(Experiment::ToyDim);
    cfg.system = Some(SystemSpec::Pendulum {
        links: 1,
        coupling: 1.0,
    });
    let err = experiments::run(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn toy_dim_small_run_stays_low_dimensional() {
    let mut cfg = ExperimentConfig::new(Experiment::ToyDim);
    cfg.sweep.insert("state_dim".into(), vec![4.0]);
    cfg.policy.width = 128;
    cfg.sampling.num_policies = 40;
    cfg.estimator.subsample_size = 5000;
    let report = experiments::run(&cfg).unwrap();
    let d = report.table.column_f64("d_hat").unwrap()[0];
    assert!(d > 0.5 && d <= 3.0, "d_hat {d}");
    assert_eq!(report.table.column_f64("points").unwrap()[0], 40.0 * 500.0);
    assert!(report.svg.is_some());
}
