//! Censoring-distribution models and inverse-probability-of-censoring weights.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{SurvivalDataset, TimeHorizon};
use crate::error::{Error, Result};
use crate::models::{CoxFit, CoxOptions};
use crate::survival::{kaplan_meier, StepFunction, Target};

/// Smallest admissible `1 - G` in a weight denominator.
pub const DENOMINATOR_GUARD: f64 = 1e-10;

/// Conditional censoring survival `1 - G(t | z)` and its left limit.
pub trait CensoringSurvival: Send + Sync {
    fn survival(&self, t: f64, z: &[f64]) -> f64;
    fn survival_left(&self, t: f64, z: &[f64]) -> f64;
    fn descriptor(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CensoringKind {
    #[serde(rename = "km")]
    KmMarginal,
    #[serde(rename = "cox")]
    Cox,
}

impl CensoringKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CensoringKind::KmMarginal => "km",
            CensoringKind::Cox => "cox",
        }
    }
}

impl fmt::Display for CensoringKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CensoringKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "km" | "km-marginal" => Ok(CensoringKind::KmMarginal),
            "cox" => Ok(CensoringKind::Cox),
            other => Err(Error::invalid(format!("unknown censoring model '{other}'"))),
        }
    }
}

/// Which observations the censoring model is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CensoringFit {
    /// All available data, training and evaluation parts together.
    #[default]
    Pooled,
    /// Only the part the weights are computed on (or the training part, for
    /// cross-validation).
    Split,
}

impl FromStr for CensoringFit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(CensoringFit::Pooled),
            "split" => Ok(CensoringFit::Split),
            other => Err(Error::invalid(format!("unknown censoring fit mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CensoringModel {
    KmMarginal { survival: StepFunction },
    Cox { fit: CoxFit },
}

impl CensoringModel {
    /// Fits the censoring distribution by treating censoring as the event.
    pub fn fit(data: &SurvivalDataset, kind: CensoringKind) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        match kind {
            CensoringKind::KmMarginal => Ok(CensoringModel::KmMarginal {
                survival: kaplan_meier(data, Target::Censoring)?,
            }),
            CensoringKind::Cox => {
                let columns: Vec<usize> = (0..data.dim()).collect();
                let fit = CoxFit::fit(&data.flipped(), &columns, &CoxOptions::default())?;
                Ok(CensoringModel::Cox { fit })
            }
        }
    }

    pub fn kind(&self) -> CensoringKind {
        match self {
            CensoringModel::KmMarginal { .. } => CensoringKind::KmMarginal,
            CensoringModel::Cox { .. } => CensoringKind::Cox,
        }
    }

    /// Censoring distribution function `G(t | z)`.
    pub fn cdf(&self, t: f64, z: &[f64]) -> f64 {
        1.0 - self.survival(t, z)
    }

    pub fn cdf_left(&self, t: f64, z: &[f64]) -> f64 {
        1.0 - self.survival_left(t, z)
    }
}

impl CensoringSurvival for CensoringModel {
    fn survival(&self, t: f64, z: &[f64]) -> f64 {
        match self {
            CensoringModel::KmMarginal { survival } => survival.eval(t),
            CensoringModel::Cox { fit } => fit.survival(t, z),
        }
    }

    fn survival_left(&self, t: f64, z: &[f64]) -> f64 {
        match self {
            CensoringModel::KmMarginal { survival } => survival.eval_left(t),
            CensoringModel::Cox { fit } => fit.survival_left(t, z),
        }
    }

    fn descriptor(&self) -> String {
        self.kind().as_str().to_string()
    }
}

impl CensoringSurvival for StepFunction {
    fn survival(&self, t: f64, _z: &[f64]) -> f64 {
        self.eval(t)
    }

    fn survival_left(&self, t: f64, _z: &[f64]) -> f64 {
        self.eval_left(t)
    }

    fn descriptor(&self) -> String {
        "km".to_string()
    }
}

/// IPCW weights aligned to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    weights: Vec<f64>,
    tau: TimeHorizon,
    source: String,
}

impl WeightSet {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tau(&self) -> TimeHorizon {
        self.tau
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.weights.len() as f64
    }

    /// Weights at `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            weights: indices.iter().map(|&i| self.weights[i]).collect(),
            tau: self.tau,
            source: self.source.clone(),
        }
    }
}

/// Weights `1{T <= tau} delta / (1 - G(T- | Z)) + 1{T > tau} / (1 - G(tau | Z))`.
///
/// Observations censored at or before `tau` get weight zero. A needed
/// denominator at or below [`DENOMINATOR_GUARD`] is an error: it means the
/// censoring distribution has no support left, usually because `tau` sits
/// too close to the end of follow-up.
pub fn ipcw_weights(
    data: &SurvivalDataset,
    censoring: &dyn CensoringSurvival,
    tau: TimeHorizon,
) -> Result<WeightSet> {
    let tau_v = tau.value();
    let weights = data
        .iter()
        .enumerate()
        .map(|(i, (t, event, z))| {
            let denom = if t > tau_v {
                censoring.survival(tau_v, z)
            } else if event {
                censoring.survival_left(t, z)
            } else {
                return Ok(0.0);
            };
            if denom.is_nan() || denom <= DENOMINATOR_GUARD {
                return Err(Error::CensoringSupportExhausted {
                    index: i,
                    survival: denom,
                });
            }
            Ok(1.0 / denom)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(WeightSet {
        weights,
        tau,
        source: censoring.descriptor(),
    })
}
