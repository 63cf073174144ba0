use dkf_core::eval::{results_from_csv, results_to_csv, run_experiment, tabulate, ExperimentConfig, Method, Metric};
use dkf_core::linalg::{column_means, sample_covariance};
use dkf_core::preprocess::{preprocess_trial, PreprocessOptions, ProcessedTrial};
use dkf_core::synth::{gen_cosine_tuning, gen_lgss, random_stable_params, LgssSpec, TuningSpec};

fn lgss_trial(seed: u64) -> ProcessedTrial {
    let params = random_stable_params(2, 6, seed).unwrap();
    gen_lgss(&LgssSpec {
        params,
        length: 6000,
        seed,
        initial: None,
    })
    .unwrap()
    .into_trial("L", 0.1)
    .unwrap()
}

fn quick_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.mlp.epochs = 25;
    cfg
}

#[test]
fn spiking_trial_preprocesses_to_standardized_scores() {
    let data = gen_cosine_tuning(&TuningSpec::random(16, 6050, 9)).unwrap();
    let trial = preprocess_trial("S", &data.events, &data.velocities, &PreprocessOptions::default()).unwrap();
    assert!(trial.len() >= 6000);
    assert_eq!(trial.observations.ncols(), 10);
    assert_eq!(trial.latents.ncols(), 2);
    assert!(column_means(&trial.observations).amax() < 1e-9);
    let cov = sample_covariance(&trial.observations, 1).unwrap();
    for j in 0..10 {
        assert!((cov[(j, j)] - 1.0).abs() < 1e-9, "column {j} variance {}", cov[(j, j)]);
    }
}

#[test]
fn experiment_is_deterministic_and_round_trips() {
    let trial = lgss_trial(4);
    let methods = [Method::Kalman, Method::Nn, Method::Ekf, Method::Ukf];
    let cfg = quick_config();
    let a = run_experiment(&trial, &methods, &[0, 1], &cfg).unwrap();
    let b = run_experiment(&trial, &methods, &[0, 1], &cfg).unwrap();
    let (ca, cb) = (results_to_csv(&a, false).unwrap(), results_to_csv(&b, false).unwrap());
    assert_eq!(ca, cb);
    // Kalman, NN, DKF-NN, EKF, UKF per seed.
    assert_eq!(a.len(), 10);
    assert!(a.iter().all(|r| r.is_ok()), "{ca}");

    let back = results_from_csv(&ca).unwrap();
    assert_eq!(results_to_csv(&back, false).unwrap(), ca);

    let table = tabulate(&a, Metric::Nrmse, "Kalman").unwrap();
    let labels: Vec<&str> = table.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["Kalman", "NN", "DKF-NN", "EKF", "UKF"]);
    assert!(table.rows[0].average.unwrap() < 1.0);
}

#[test]
fn fitted_kalman_tracks_linear_data() {
    let trial = lgss_trial(11);
    let results = run_experiment(
        &trial,
        &[Method::Kalman, Method::Ekf, Method::Ukf],
        &[3],
        &quick_config(),
    )
    .unwrap();
    assert_eq!(results.len(), 3);
    assert!(results.iter().all(|r| r.is_ok() && r.nrmse < 1.0), "{results:?}");
    assert!(results[0].nrmse < 0.5, "{}", results[0].nrmse);
}

#[test]
fn short_trial_is_rejected() {
    let params = random_stable_params(2, 3, 1).unwrap();
    let trial = gen_lgss(&LgssSpec {
        params,
        length: 5000,
        seed: 1,
        initial: None,
    })
    .unwrap()
    .into_trial("short", 0.1)
    .unwrap();
    let err = run_experiment(&trial, &[Method::Kalman], &[0], &ExperimentConfig::default()).unwrap_err();
    assert!(matches!(err, dkf_core::Error::InsufficientData { .. }), "{err}");
}
