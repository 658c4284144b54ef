//! RMST predictors: a fit/predict contract and the three built-in learners.
//!
//! * `km`: area under the Kaplan–Meier curve, identical for every subject.
//! * `cox`: area under the Cox conditional survival curve (Breslow baseline).
//! * `pseudo-lm`: least squares of jackknife pseudo-observations on the covariates.
//!
//! Predictions are never truncated to `[0, tau]`.
//!
//! Other learners plug in by implementing [`Learner`] and [`Predictor`].

pub mod cox;
pub mod linear;
pub mod pseudo;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{SurvivalDataset, TimeHorizon};
use crate::error::{Error, Result};
use crate::survival::{kaplan_meier, Target};

pub use cox::{CoxFit, CoxOptions};
pub use linear::{least_squares, LinearFit};
pub use pseudo::pseudo_observations;

/// A fitted map from covariates to a predicted restricted mean.
pub trait Predictor: Send + Sync {
    /// Covariate dimension expected by [`Predictor::predict`].
    fn dim(&self) -> usize;

    fn predict(&self, z: &[f64]) -> Result<f64>;

    fn predict_dataset(&self, data: &SurvivalDataset) -> Result<Vec<f64>> {
        (0..data.len()).map(|i| self.predict(data.covariates(i))).collect()
    }
}

/// A learning algorithm: turns a training set into a [`Predictor`].
///
/// `mask[k] == false` hides covariate `k` from the learner.
pub trait Learner: Send + Sync {
    fn name(&self) -> String;

    fn fit(
        &self,
        train: &SurvivalDataset,
        tau: TimeHorizon,
        mask: &[bool],
    ) -> Result<Box<dyn Predictor>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Km,
    Cox,
    PseudoLm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Km, ModelKind::Cox, ModelKind::PseudoLm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Km => "km",
            ModelKind::Cox => "cox",
            ModelKind::PseudoLm => "pseudo-lm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "km" => Ok(ModelKind::Km),
            "cox" => Ok(ModelKind::Cox),
            "pseudo-lm" => Ok(ModelKind::PseudoLm),
            other => Err(Error::invalid(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum Fitted {
    Constant { value: f64 },
    Cox { fit: CoxFit },
    Linear { fit: LinearFit },
}

/// A fitted built-in RMST model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RmstPredictor {
    kind: ModelKind,
    tau: TimeHorizon,
    mask: Vec<bool>,
    fitted: Fitted,
}

/// Indices of the covariates a mask keeps.
pub fn active_columns(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(k, &on)| on.then_some(k))
        .collect()
}

/// Mask with every covariate visible except those in `hidden`.
pub fn mask_without(dim: usize, hidden: &[usize]) -> Vec<bool> {
    (0..dim).map(|k| !hidden.contains(&k)).collect()
}

impl RmstPredictor {
    pub fn fit(
        kind: ModelKind,
        train: &SurvivalDataset,
        tau: TimeHorizon,
        mask: &[bool],
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyData);
        }
        if mask.len() != train.dim() {
            return Err(Error::DimensionMismatch {
                expected: train.dim(),
                got: mask.len(),
            });
        }
        let columns = active_columns(mask);
        let fitted = match kind {
            ModelKind::Km => Fitted::Constant {
                value: kaplan_meier(train, Target::Event)?.integrate(tau.value()),
            },
            ModelKind::Cox => Fitted::Cox {
                fit: CoxFit::fit(train, &columns, &CoxOptions::default())?,
            },
            ModelKind::PseudoLm => {
                let targets = pseudo_observations(train, tau)?;
                let rows = (0..train.len()).map(|i| train.covariates(i));
                Fitted::Linear {
                    fit: LinearFit::fit(rows, &columns, &targets)?,
                }
            }
        };
        Ok(Self {
            kind,
            tau,
            mask: mask.to_vec(),
            fitted,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn tau(&self) -> TimeHorizon {
        self.tau
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn cox(&self) -> Option<&CoxFit> {
        match &self.fitted {
            Fitted::Cox { fit } => Some(fit),
            _ => None,
        }
    }

    pub fn linear(&self) -> Option<&LinearFit> {
        match &self.fitted {
            Fitted::Linear { fit } => Some(fit),
            _ => None,
        }
    }
}

impl Predictor for RmstPredictor {
    fn dim(&self) -> usize {
        self.mask.len()
    }

    fn predict(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.mask.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mask.len(),
                got: z.len(),
            });
        }
        Ok(match &self.fitted {
            Fitted::Constant { value } => *value,
            Fitted::Cox { fit } => fit.restricted_mean(z, self.tau.value()),
            Fitted::Linear { fit } => fit.predict(z),
        })
    }
}

impl Learner for ModelKind {
    fn name(&self) -> String {
        self.as_str().to_string()
    }

    fn fit(
        &self,
        train: &SurvivalDataset,
        tau: TimeHorizon,
        mask: &[bool],
    ) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(RmstPredictor::fit(*self, train, tau, mask)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn data(n: usize, seed: u64) -> SurvivalDataset {
        let mut r = rng::stream(seed, 0);
        let mut times = Vec::new();
        let mut events = Vec::new();
        let mut z = Vec::new();
        for _ in 0..n {
            let a: f64 = r.random::<f64>() * 2.0 - 1.0;
            let b: f64 = r.random::<f64>() * 2.0 - 1.0;
            let t = -rng::uniform_open(&mut r).ln() * (-(a + 0.5 * b)).exp();
            let c = -rng::uniform_open(&mut r).ln() * 3.0;
            times.push(t.min(c));
            events.push(t <= c);
            z.extend([a, b]);
        }
        SurvivalDataset::from_columns(times, events, z, 2).unwrap()
    }

    #[test]
    fn km_is_constant() {
        let d = data(100, 1);
        let tau = TimeHorizon::new(1.0).unwrap();
        let m = RmstPredictor::fit(ModelKind::Km, &d, tau, &[true, true]).unwrap();
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), m.predict(&[5.0, -3.0]).unwrap());
    }

    #[test]
    fn pseudo_lm_is_affine() {
        let d = data(150, 2);
        let tau = TimeHorizon::new(1.0).unwrap();
        let m = RmstPredictor::fit(ModelKind::PseudoLm, &d, tau, &[true, true]).unwrap();
        let (a, b) = ([0.0, 0.0], [1.0, 2.0]);
        let mid = [0.5, 1.0];
        let fa = m.predict(&a).unwrap();
        let fb = m.predict(&b).unwrap();
        assert!((m.predict(&mid).unwrap() - 0.5 * (fa + fb)).abs() < 1e-12);
    }

    #[test]
    fn mask_hides_coordinate() {
        let d = data(120, 3);
        let tau = TimeHorizon::new(1.0).unwrap();
        for kind in ModelKind::ALL {
            let m = RmstPredictor::fit(kind, &d, tau, &[true, false]).unwrap();
            let p1 = m.predict(&[0.3, -0.7]).unwrap();
            let p2 = m.predict(&[0.3, 42.0]).unwrap();
            assert_eq!(p1, p2, "{kind}");
        }
    }

    #[test]
    fn dimension_mismatch() {
        let d = data(50, 4);
        let tau = TimeHorizon::new(1.0).unwrap();
        let m = RmstPredictor::fit(ModelKind::Cox, &d, tau, &[true, true]).unwrap();
        assert!(matches!(m.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(RmstPredictor::fit(ModelKind::Cox, &d, tau, &[true]).is_err());
    }

    #[test]
    fn kind_round_trips_through_str() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.as_str().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("rsf".parse::<ModelKind>().is_err());
    }
}
