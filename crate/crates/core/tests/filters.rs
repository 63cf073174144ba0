use dkf_core::filters::{
    dkf_filter, dkf_filter_with, ekf_filter, kf_filter, robust_dkf_filter, ukf_filter, DkfInputs, DkfOptions,
    GaussianBelief, LinearObservation, PdFixStrategy, UtParams,
};
use dkf_core::linalg::{is_positive_definite, Mat, Tolerances};
use dkf_core::synth::{exact_posterior_moments, gen_lgss, random_stable_params, LgssSpec};
use proptest::prelude::*;

fn system(seed: u64, p: usize, length: usize) -> (dkf_core::filters::StateSpaceParams, Mat) {
    let params = random_stable_params(2, p, seed).unwrap();
    let data = gen_lgss(&LgssSpec {
        params,
        length,
        seed,
        initial: None,
    })
    .unwrap();
    (data.params, data.observations)
}

fn max_gap(a: &[GaussianBelief], b: &[GaussianBelief]) -> (f64, f64) {
    a.iter().zip(b).fold((0.0, 0.0), |(m, c), (x, y)| {
        (
            f64::max(m, (&x.mean - &y.mean).amax()),
            f64::max(c, (&x.cov - &y.cov).norm()),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dkf_with_exact_moments_is_the_kalman_filter(seed in 0u64..10_000, p in 2usize..12) {
        let (params, x) = system(seed, p, 150);
        let (k, q) = exact_posterior_moments(&params).unwrap();
        let dkf = dkf_filter(&params, &DkfInputs::with_constant_cov(&x * k.transpose(), &q).unwrap()).unwrap();
        let kf = kf_filter(&params, &x, &GaussianBelief::centered(&params.s)).unwrap();
        let (m, c) = max_gap(&dkf, &kf);
        prop_assert!(m < 1e-8 && c < 1e-8, "mean {m:e} cov {c:e}");
    }

    #[test]
    fn linear_ekf_and_ukf_are_the_kalman_filter(seed in 0u64..10_000) {
        let (params, x) = system(seed, 4, 120);
        let init = GaussianBelief::centered(&params.s);
        let kf = kf_filter(&params, &x, &init).unwrap();
        let obs = LinearObservation(params.h.clone());
        let ekf = ekf_filter(&obs, &params, &x, &init).unwrap();
        let ukf = ukf_filter(&obs, &params, &UtParams::classic(2), &x, &init).unwrap();
        for other in [&ekf, &ukf] {
            let (m, c) = max_gap(&kf, other);
            prop_assert!(m < 1e-6 && c < 1e-6, "mean {m:e} cov {c:e}");
        }
    }
}

#[test]
fn covariances_stay_positive_definite() {
    let (params, x) = system(7, 6, 400);
    let (k, q) = exact_posterior_moments(&params).unwrap();
    let inputs = DkfInputs::with_constant_cov(&x * k.transpose(), &q).unwrap();
    let tol = Tolerances::default();
    for beliefs in [
        dkf_filter(&params, &inputs).unwrap(),
        robust_dkf_filter(&params, &inputs).unwrap(),
    ] {
        assert_eq!(beliefs.len(), 400);
        assert!(beliefs.iter().all(|b| is_positive_definite(&b.cov, &tol).unwrap()));
    }
}

#[test]
fn overconfident_prior_triggers_the_pd_fix() {
    let (params, x) = system(3, 4, 200);
    // A conditional covariance wider than the prior makes Q^-1 - S^-1 indefinite.
    let q = &params.s * 4.0;
    let inputs = DkfInputs::with_constant_cov(Mat::zeros(x.nrows(), 2), &q).unwrap();
    for strategy in [PdFixStrategy::AsPrinted, PdFixStrategy::DropPrior] {
        let run = dkf_filter_with(
            &params,
            &inputs,
            &DkfOptions {
                strategy,
                ..DkfOptions::default()
            },
        )
        .unwrap();
        assert_eq!(run.pd_fixes, 200, "{strategy:?}");
        assert!(run.beliefs.iter().all(|b| b.mean.amax() < 1e-12));
    }
}
