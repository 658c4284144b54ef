mod common;

use common::mean;
use rmst_core::conformal::{coverage_eval, roo_conformal, split_conformal, ConformalOptions};
use rmst_core::sim::{generate, Scheme};
use rmst_core::{CensoringKind, ModelKind, SurvivalDataset, TimeHorizon};

fn uncensored(sample: &rmst_core::sim::SimulatedSample) -> SurvivalDataset {
    let d = &sample.dataset;
    let z: Vec<f64> = (0..d.len()).flat_map(|i| d.covariates(i).to_vec()).collect();
    SurvivalDataset::from_columns(sample.event_times.clone(), vec![true; d.len()], z, d.dim()).unwrap()
}

#[test]
fn uncensored_split_coverage() {
    let options = ConformalOptions::default();
    let coverages: Vec<f64> = (0..200u64)
        .map(|r| {
            let train = generate(Scheme::B, 500, 20_000 + r).unwrap();
            let data = uncensored(&train);
            let tau = TimeHorizon::from_quantile(&data, 0.9).unwrap();
            let fit = split_conformal(&data, &ModelKind::Cox, CensoringKind::KmMarginal, tau, &options, r)
                .unwrap();
            let test = generate(Scheme::B, 500, 21_000 + r).unwrap();
            let truths = test.restricted_event_times(tau);
            coverage_eval(&fit.intervals(&test.dataset).unwrap(), &truths).unwrap()
        })
        .collect();
    let m = mean(&coverages);
    // binomial standard error of the mean is about 0.001
    assert!(m >= 0.9 - 0.003, "mean coverage {m}");
}

#[test]
fn roo_in_sample_coverage() {
    let options = ConformalOptions::default();
    let coverages: Vec<f64> = (0..50u64)
        .map(|r| {
            let sample = generate(Scheme::B, 1000, 22_000 + r).unwrap();
            let intervals =
                roo_conformal(&sample.dataset, &ModelKind::Cox, CensoringKind::KmMarginal, sample.tau, &options, r)
                    .unwrap();
            coverage_eval(&intervals, &sample.restricted_event_times(sample.tau)).unwrap()
        })
        .collect();
    let m = mean(&coverages);
    assert!((m - 0.9).abs() <= 0.03, "mean coverage {m}");
}

#[test]
fn roo_on_four_observations() {
    let data = SurvivalDataset::from_columns(
        vec![1.0, 2.0, 3.0, 4.0],
        vec![true; 4],
        vec![0.1, 0.4, 0.2, 0.9],
        1,
    )
    .unwrap();
    let tau = TimeHorizon::new(3.5).unwrap();
    let intervals = roo_conformal(&data, &ModelKind::Km, CensoringKind::KmMarginal, tau, &ConformalOptions::default(), 1)
        .unwrap();
    assert_eq!(intervals.len(), 4);
}

#[test]
fn split_is_deterministic() {
    let sample = generate(Scheme::B, 400, 23).unwrap();
    let run = |seed| {
        let fit = split_conformal(
            &sample.dataset,
            &ModelKind::PseudoLm,
            CensoringKind::KmMarginal,
            sample.tau,
            &ConformalOptions { tie_jitter: true, ..Default::default() },
            seed,
        )
        .unwrap();
        (fit.q_hat(), fit.fit_indices().to_vec())
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3).1, run(4).1);
}

#[test]
fn km_model_ties_are_handled() {
    // A covariate-free model gives tied centres; residuals tie for tied times.
    let data = SurvivalDataset::from_columns(
        vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0],
        vec![true; 8],
        vec![0.0; 8],
        1,
    )
    .unwrap();
    let tau = TimeHorizon::new(4.0).unwrap();
    for jitter in [false, true] {
        let options = ConformalOptions { tie_jitter: jitter, ..Default::default() };
        let intervals = roo_conformal(&data, &ModelKind::Km, CensoringKind::KmMarginal, tau, &options, 2).unwrap();
        assert!(intervals.iter().all(|i| i.half_width.is_finite() && i.half_width >= 0.0));
    }
}
