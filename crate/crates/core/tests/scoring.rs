mod common;

use rmst_core::rng;
use rmst_core::scoring::{
    cross_validated_wrss, mse_decomposition_oracle, monte_carlo_decomposition, rss, wrss,
    DecompositionConfig, DecompositionModel,
};
use rmst_core::sim::{generate, scheme_a_rmst, Scheme, SchemeConfig, SCHEME_A_TAU};
use rmst_core::{
    ipcw_weights, CensoringFit, CensoringKind, CensoringModel, Learner, ModelKind, Predictor,
    Result, SurvivalDataset, TimeHorizon,
};

struct Constant(f64, usize);

impl Predictor for Constant {
    fn dim(&self) -> usize {
        self.1
    }

    fn predict(&self, _z: &[f64]) -> Result<f64> {
        Ok(self.0)
    }
}

#[test]
fn wrss_is_permutation_invariant() {
    let sample = generate(Scheme::B, 200, 4).unwrap();
    let data = &sample.dataset;
    let tau = sample.tau;
    let model = ModelKind::Cox.fit(data, tau, &[true; 3]).unwrap();
    let g = CensoringModel::fit(data, CensoringKind::KmMarginal).unwrap();
    let base = wrss(data, model.as_ref(), &ipcw_weights(data, &g, tau).unwrap(), tau).unwrap();
    let perm = rng::permutation(data.len(), &mut rng::stream(9, 0));
    let shuffled = data.subset(&perm);
    let w = ipcw_weights(&shuffled, &g, tau).unwrap();
    let value = wrss(&shuffled, model.as_ref(), &w, tau).unwrap();
    assert!((value - base).abs() < 1e-12 * base.max(1.0));
}

#[test]
fn wrss_without_censoring_is_rss() {
    let times = vec![0.5, 1.5, 2.0, 4.0, 7.0];
    let z = vec![0.0, 1.0, 0.5, 0.2, 0.9];
    let data = SurvivalDataset::from_columns(times.clone(), vec![true; 5], z, 1).unwrap();
    let tau = TimeHorizon::new(3.0).unwrap();
    let g = CensoringModel::fit(&data, CensoringKind::KmMarginal).unwrap();
    let model = Constant(1.7, 1);
    let value = wrss(&data, &model, &ipcw_weights(&data, &g, tau).unwrap(), tau).unwrap();
    let truths: Vec<f64> = times.iter().map(|t| t.min(3.0)).collect();
    assert!((value - rss(&[1.7; 5], &truths).unwrap()).abs() < 1e-15);
}

#[test]
fn leave_one_out_on_toy_data() {
    let sample = generate(Scheme::B, 20, 12).unwrap();
    let report = cross_validated_wrss(
        &sample.dataset,
        &ModelKind::Km,
        CensoringKind::KmMarginal,
        sample.tau,
        20,
        1,
        CensoringFit::Pooled,
    )
    .unwrap();
    assert_eq!(report.fold_values.len(), 20);
    assert!(report.wrss.is_finite());
}

#[test]
fn cross_validation_is_deterministic() {
    let sample = generate(Scheme::B, 300, 13).unwrap();
    let run = |seed| {
        cross_validated_wrss(
            &sample.dataset,
            &ModelKind::Cox,
            CensoringKind::KmMarginal,
            sample.tau,
            10,
            seed,
            CensoringFit::Split,
        )
        .unwrap()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5).fold_values, run(6).fold_values);
}

#[test]
fn covariate_free_model_scores_worst() {
    let wins = (0..100u64)
        .filter(|&r| {
            let sample = generate(Scheme::B, 600, 14_000 + r).unwrap();
            let score = |kind: ModelKind| {
                cross_validated_wrss(
                    &sample.dataset,
                    &kind,
                    CensoringKind::KmMarginal,
                    sample.tau,
                    20,
                    r,
                    CensoringFit::Pooled,
                )
                .unwrap()
                .wrss
            };
            score(ModelKind::Km) > score(ModelKind::Cox)
        })
        .count();
    assert!(wins >= 95, "km worse than cox in {wins} of 100");
}

#[test]
fn oracle_imprecision_vanishes() {
    let scheme = SchemeConfig::from(Scheme::A1);
    let tau = TimeHorizon::new(SCHEME_A_TAU).unwrap();
    let config = DecompositionConfig { draws: 100_000, fit_size: 20_000 };
    let d = mse_decomposition_oracle(&scheme, DecompositionModel::Oracle, tau, &config, 3).unwrap();
    assert!(d.imprecision < 0.005 * d.inseparability, "{d:?}");
}

#[test]
fn constant_predictor_imprecision() {
    // Scheme A covariates are two fair coins, so mu* takes four equally likely values.
    let scheme = SchemeConfig::from(Scheme::A1);
    let tau = SCHEME_A_TAU;
    let values: Vec<f64> = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
        .iter()
        .map(|z| scheme_a_rmst(z, tau))
        .collect();
    let c = 7.0;
    let expected = values.iter().map(|v| (v - c).powi(2)).sum::<f64>() / 4.0;
    let d = monte_carlo_decomposition(&scheme, &Constant(c, 2), TimeHorizon::new(tau).unwrap(), 200_000, 17)
        .unwrap();
    assert!(
        (d.imprecision - expected).abs() < 4.0 * d.imprecision_se,
        "{} vs {expected} (se {})",
        d.imprecision,
        d.imprecision_se
    );
}
