//! RSS, WRSS, cross-validated WRSS and Monte-Carlo MSE decompositions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{SurvivalDataset, TimeHorizon};
use crate::error::{Error, Result};
use crate::ipcw::{ipcw_weights, CensoringFit, CensoringKind, CensoringModel, WeightSet};
use crate::models::{Learner, ModelKind, Predictor};
use crate::rng;
use crate::sim::{FeatureLinear, Scheme, SchemeConfig};

/// `(1/m) sum (t_j - mu_hat(z_j))^2` on latent restricted times.
pub fn rss(predictions: &[f64], restricted_truths: &[f64]) -> Result<f64> {
    if predictions.len() != restricted_truths.len() {
        return Err(Error::DimensionMismatch {
            expected: restricted_truths.len(),
            got: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyData);
    }
    let sum: f64 = predictions
        .iter()
        .zip(restricted_truths)
        .map(|(p, t)| (t - p).powi(2))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// `(1/m) sum (T_j ∧ tau - mu_hat(Z_j))^2 w_j`, normalized by `m`.
pub fn wrss(
    test: &SurvivalDataset,
    model: &dyn Predictor,
    weights: &WeightSet,
    tau: TimeHorizon,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyData);
    }
    if weights.len() != test.len() {
        return Err(Error::DimensionMismatch {
            expected: test.len(),
            got: weights.len(),
        });
    }
    if weights.tau() != tau {
        return Err(Error::invalid(format!(
            "weights computed for tau = {} but scoring at tau = {tau}",
            weights.tau()
        )));
    }
    let mut sum = 0.0;
    for (i, (t, _, z)) in test.iter().enumerate() {
        let w = weights.weights()[i];
        if w != 0.0 {
            sum += (t.min(tau.value()) - model.predict(z)?).powi(2) * w;
        }
    }
    Ok(sum / test.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrssReport {
    pub wrss: f64,
    /// Per-fold values when cross-validated, empty otherwise.
    pub fold_values: Vec<f64>,
    pub n_test: usize,
    pub tau: TimeHorizon,
    pub censoring: String,
}

/// Scores `model` on `test`, with the censoring model fitted on the pooled
/// train and test data or on the test data alone.
pub fn holdout_wrss(
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    model: &dyn Predictor,
    censoring: CensoringKind,
    fit: CensoringFit,
    tau: TimeHorizon,
) -> Result<WrssReport> {
    let g = match fit {
        CensoringFit::Pooled => CensoringModel::fit(&train.concat(test)?, censoring)?,
        CensoringFit::Split => CensoringModel::fit(test, censoring)?,
    };
    let weights = ipcw_weights(test, &g, tau)?;
    Ok(WrssReport {
        wrss: wrss(test, model, &weights, tau)?,
        fold_values: Vec::new(),
        n_test: test.len(),
        tau,
        censoring: format!("{}-{}", censoring, fit_name(fit)),
    })
}

fn fit_name(fit: CensoringFit) -> &'static str {
    match fit {
        CensoringFit::Pooled => "pooled",
        CensoringFit::Split => "split",
    }
}

/// Fold label of every observation: a seeded permutation dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let perm = rng::permutation(n, &mut rng::stream(seed, 0));
    let mut labels = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        labels[i] = pos % folds;
    }
    labels
}

/// `V`-fold cross-validated WRSS, reported as the unweighted fold mean.
///
/// With [`CensoringFit::Pooled`] the censoring model is fitted once on all
/// of `data`; with [`CensoringFit::Split`] it is refitted on each training
/// part.
pub fn cross_validated_wrss(
    data: &SurvivalDataset,
    learner: &dyn Learner,
    censoring: CensoringKind,
    tau: TimeHorizon,
    folds: usize,
    seed: u64,
    fit: CensoringFit,
) -> Result<WrssReport> {
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    if folds > data.len() {
        return Err(Error::invalid(format!(
            "{folds} folds requested for {} observations",
            data.len()
        )));
    }
    let labels = fold_assignment(data.len(), folds, seed);
    let pooled = match fit {
        CensoringFit::Pooled => Some(CensoringModel::fit(data, censoring)?),
        CensoringFit::Split => None,
    };
    let mask = vec![true; data.dim()];
    let fold_values = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
                (0..data.len()).partition(|&i| labels[i] == f);
            let train = data.subset(&train_idx);
            let test = data.subset(&test_idx);
            let model = learner.fit(&train, tau, &mask)?;
            let weights = match &pooled {
                Some(g) => ipcw_weights(&test, g, tau)?,
                None => ipcw_weights(&test, &CensoringModel::fit(&train, censoring)?, tau)?,
            };
            wrss(&test, model.as_ref(), &weights, tau)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(WrssReport {
        wrss: fold_values.iter().sum::<f64>() / folds as f64,
        fold_values,
        n_test: data.len(),
        tau,
        censoring: format!("{}-{}", censoring, fit_name(fit)),
    })
}

/// The model whose limit `mu_tilde` enters the imprecision term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecompositionModel {
    Learner(ModelKind),
    /// Saturated least squares on latent restricted times (scheme A only).
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionConfig {
    /// Monte-Carlo draws for the expectations.
    pub draws: usize,
    /// Training size for the approximation of `mu_tilde`.
    pub fit_size: usize,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            draws: 1_000_000,
            fit_size: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseDecomposition {
    /// `E(T* ∧ tau - mu*(Z))^2`.
    pub inseparability: f64,
    /// `E(mu*(Z) - mu_tilde(Z))^2`.
    pub imprecision: f64,
    /// Monte-Carlo standard errors of the two terms.
    pub inseparability_se: f64,
    pub imprecision_se: f64,
    /// Standard error of the sum, accounting for the covariance.
    pub mse_se: f64,
    pub draws: usize,
}

impl MseDecomposition {
    pub fn mse(&self) -> f64 {
        self.inseparability + self.imprecision
    }
}

const BLOCK: usize = 10_000;

/// Monte-Carlo moments of `(T* ∧ tau - mu*(Z))^2`, `(mu*(Z) - mu(Z))^2` and
/// their sum over fresh draws from a scheme, in deterministic blocks.
pub fn monte_carlo_decomposition(
    scheme: &SchemeConfig,
    model: &dyn Predictor,
    tau: TimeHorizon,
    draws: usize,
    seed: u64,
) -> Result<MseDecomposition> {
    if draws < 2 {
        return Err(Error::invalid("need at least 2 Monte-Carlo draws"));
    }
    let blocks = draws.div_ceil(BLOCK);
    // [sum a, sum a^2, sum b, sum b^2, sum (a+b)^2]
    let sums = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, 1 + b as u64);
            let size = BLOCK.min(draws - b * BLOCK);
            let mut acc = [0.0; 5];
            for _ in 0..size {
                let z = scheme.draw_covariates(&mut r);
                let t = scheme.draw_event_time(&z, &mut r).min(tau.value());
                let truth = scheme.true_rmst(&z, tau.value());
                let a = (t - truth).powi(2);
                let b = (truth - model.predict(&z)?).powi(2);
                acc[0] += a;
                acc[1] += a * a;
                acc[2] += b;
                acc[3] += b * b;
                acc[4] += (a + b) * (a + b);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<[f64; 5]>>>()?;
    let mut total = [0.0; 5];
    for s in &sums {
        for (t, v) in total.iter_mut().zip(s) {
            *t += v;
        }
    }
    let n = draws as f64;
    let se = |sum: f64, sq: f64| {
        let mean = sum / n;
        ((sq / n - mean * mean).max(0.0) / (n - 1.0)).sqrt()
    };
    Ok(MseDecomposition {
        inseparability: total[0] / n,
        imprecision: total[2] / n,
        inseparability_se: se(total[0], total[1]),
        imprecision_se: se(total[2], total[3]),
        mse_se: se(total[0] + total[2], total[4]),
        draws,
    })
}

/// Inseparability and imprecision terms of the MSE of `mu_tilde`, the limit
/// of the given model, approximated by a fit on a large simulated sample.
pub fn mse_decomposition_oracle(
    scheme: &SchemeConfig,
    model: DecompositionModel,
    tau: TimeHorizon,
    config: &DecompositionConfig,
    seed: u64,
) -> Result<MseDecomposition> {
    if config.draws < 10_000 {
        return Err(Error::invalid("the decomposition needs at least 10^4 draws"));
    }
    let sample = scheme.generate(config.fit_size, seed)?;
    let fitted: Box<dyn Predictor> = match model {
        DecompositionModel::Learner(kind) => {
            kind.fit(&sample.dataset, tau, &vec![true; sample.dataset.dim()])?
        }
        DecompositionModel::Oracle => match scheme.scheme {
            Scheme::A1 | Scheme::A2 => Box::new(FeatureLinear::scheme_a_oracle(&sample, tau)?),
            other => {
                return Err(Error::invalid(format!(
                    "no oracle model registered for scheme {other}"
                )))
            }
        },
    };
    monte_carlo_decomposition(scheme, fitted.as_ref(), tau, config.draws, seed)
}
